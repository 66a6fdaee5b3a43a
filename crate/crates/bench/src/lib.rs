//! Fixtures shared by the benchmarks in `benches/`.

use currstat_core::sim::{generate, DGPSpec, Scenario};
use currstat_core::Dataset;

/// A simulated cohort from the Scenario 3 design.
pub fn cohort(n: usize, seed: u64) -> Dataset {
    generate(&DGPSpec::new(Scenario::S3.c0()), n, seed).expect("valid design").0
}

/// Cumulative sums of a weighted series, starting at the origin.
pub fn cusum(v: &[f64], w: &[f64]) -> Vec<(f64, f64)> {
    let mut points = vec![(0.0, 0.0)];
    let (mut x, mut y) = (0.0, 0.0);
    for (a, b) in v.iter().zip(w) {
        x += b;
        y += a * b;
        points.push((x, y));
    }
    points
}

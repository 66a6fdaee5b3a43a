//! Nuisance estimation: the outcome regression `mu(y, w) = E(Delta | Y = y, W = w)`,
//! the standardized density ratio `g(y, w) = pi(y | w) / f(y)`, and the
//! empirical marginals of `Y` and `W`.

mod density;
mod ensemble;
mod learners;
mod nnls;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use density::{fit_density, DensitySpec, DensitySummary, HistogramDensity};
pub use ensemble::{fit_mu, EnsembleRegression, EnsembleSpec, LearnerSummary, MuSummary};
pub use learners::{Design, FeatureMap, LearnerKind, YFeature};
pub use nnls::nnls;

/// Lower/upper clip applied to every outcome-regression prediction.
pub const MU_CLIP: f64 = 1e-6;

pub trait OutcomeRegression: Send + Sync {
    /// `E(Delta | Y = y, W = w)`, in `[0, 1]`.
    fn predict(&self, y: f64, w: &[f64]) -> f64;
}

pub trait DensityRatio: Send + Sync {
    fn predict_g(&self, y: f64, w: &[f64]) -> f64;
    /// Marginal density of `Y` at `y`.
    fn predict_f(&self, y: f64) -> f64;
}

/// `mu(y, w) = c` everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantRegression(pub f64);

impl OutcomeRegression for ConstantRegression {
    fn predict(&self, _y: f64, _w: &[f64]) -> f64 {
        self.0
    }
}

/// `g = 1` with a fixed marginal density; what the NPMLE implicitly assumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitDensityRatio {
    pub f: f64,
}

impl DensityRatio for UnitDensityRatio {
    fn predict_g(&self, _y: f64, _w: &[f64]) -> f64 {
        1.0
    }

    fn predict_f(&self, _y: f64) -> f64 {
        self.f
    }
}

/// Marginal density from one model, conditional ratio fixed at 1.
pub struct MarginalOnly<'a>(pub &'a dyn DensityRatio);

impl DensityRatio for MarginalOnly<'_> {
    fn predict_g(&self, _y: f64, _w: &[f64]) -> f64 {
        1.0
    }

    fn predict_f(&self, y: f64) -> f64 {
        self.0.predict_f(y)
    }
}

/// Right-continuous empirical distribution function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
    support: Vec<f64>,
    /// Cumulative proportion at each support point.
    heights: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("empirical CDF of an empty sample"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(invalid("empirical CDF input contains NaN"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut support = Vec::new();
        let mut heights = Vec::new();
        for (i, &v) in sorted.iter().enumerate() {
            if support.last() == Some(&v) {
                *heights.last_mut().unwrap() = (i + 1) as f64 / n;
            } else {
                support.push(v);
                heights.push((i + 1) as f64 / n);
            }
        }
        Ok(Self {
            sorted,
            support,
            heights,
        })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.support.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.heights[k - 1]
        }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Probability mass at each support point.
    pub fn masses(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.heights
            .iter()
            .map(|&h| {
                let m = h - prev;
                prev = h;
                m
            })
            .collect()
    }

    /// Linearly interpolated sample quantile (order statistics at `(n-1)p`).
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = pos - lo as f64;
        self.sorted[lo] + frac * (self.sorted[hi] - self.sorted[lo])
    }
}

pub fn empirical_cdf(values: &[f64]) -> Result<EmpiricalCdf> {
    EmpiricalCdf::new(values)
}

/// Distinct covariate vectors with multiplicities. Sums over the empirical
/// distribution of `W` run over these rows instead of all `n`.
#[derive(Debug, Clone)]
pub struct UniqueRows {
    pub rows: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    /// For each input row, the index of its distinct row.
    pub index: Vec<usize>,
}

impl UniqueRows {
    pub fn new<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut map: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut out = UniqueRows {
            rows: Vec::new(),
            counts: Vec::new(),
            index: Vec::new(),
        };
        for row in rows {
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let next = out.rows.len();
            let id = *map.entry(key).or_insert(next);
            if id == next {
                out.rows.push(row.to_vec());
                out.counts.push(0);
            }
            out.counts[id] += 1;
            out.index.push(id);
        }
        out
    }

    pub fn total(&self) -> usize {
        self.index.len()
    }

    /// Empirical mean of `f(w)`.
    pub fn mean(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let s: f64 = self
            .rows
            .iter()
            .zip(&self.counts)
            .map(|(r, &c)| c as f64 * f(r))
            .sum();
        s / self.total() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecdf_basic() {
        let f = empirical_cdf(&[1.0, 2.0, 3.0]).unwrap();
        assert!((f.eval(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.eval(0.5), 0.0);
        assert_eq!(f.eval(3.0), 1.0);
        assert_eq!(f.eval(100.0), 1.0);
    }

    #[test]
    fn ecdf_ties() {
        let f = empirical_cdf(&[1.0, 1.0, 2.0]).unwrap();
        assert!((f.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.support(), &[1.0, 2.0]);
        let m = f.masses();
        assert!((m[0] - 2.0 / 3.0).abs() < 1e-15 && (m[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ecdf_rejects_empty() {
        assert!(empirical_cdf(&[]).is_err());
    }

    #[test]
    fn ecdf_quantile_interpolates() {
        let f = empirical_cdf(&[0.0, 10.0]).unwrap();
        assert_eq!(f.quantile(0.25), 2.5);
        assert_eq!(f.quantile(1.0), 10.0);
    }

    #[test]
    fn unique_rows_counts() {
        let data = [vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let u = UniqueRows::new(data.iter().map(|r| r.as_slice()));
        assert_eq!(u.rows.len(), 2);
        assert_eq!(u.counts, vec![2, 1]);
        assert_eq!(u.index, vec![0, 1, 0]);
        assert!((u.mean(|w| w[0]) - 2.0 / 3.0).abs() < 1e-15);
    }
}

use currstat_core::{gcm_left_derivative, monotone_hermite, numeric_derivative, pava, pava_values, WeightedSeries};
use proptest::prelude::*;

/// Exhaustive isotonic least squares: every monotone solution is block-constant
/// at weighted block means, so enumerate all contiguous partitions.
fn brute_isotonic(v: &[f64], w: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = vec![0.0; n];
        let mut start = 0;
        let mut prev = f64::NEG_INFINITY;
        let mut ok = true;
        for end in 1..=n {
            if end == n || mask & (1 << (end - 1)) != 0 {
                let sw: f64 = w[start..end].iter().sum();
                let m = (start..end).map(|i| v[i] * w[i]).sum::<f64>() / sw;
                if m < prev - 1e-15 {
                    ok = false;
                    break;
                }
                prev = m;
                fit[start..end].iter_mut().for_each(|f| *f = m);
                start = end;
            }
        }
        if !ok {
            continue;
        }
        let sse: f64 = (0..n).map(|i| w[i] * (fit[i] - v[i]).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, fit));
        }
    }
    best.unwrap().1
}

/// Lower convex hull by Andrew's monotone chain; slope of the hull segment
/// covering `(x[i-1], x[i]]` for each `i >= 1`.
fn hull_slopes(points: &[(f64, f64)]) -> Vec<f64> {
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in points {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    points[1..]
        .iter()
        .map(|&(x, _)| {
            let k = hull.iter().position(|h| h.0 >= x).unwrap();
            (hull[k].1 - hull[k - 1].1) / (hull[k].0 - hull[k - 1].0)
        })
        .collect()
}

#[test]
fn spec_examples() {
    assert_eq!(pava_values(&[1.0, 2.0, 3.0], &[1.0; 3]), vec![1.0, 2.0, 3.0]);
    let r = pava_values(&[3.0, 1.0, 2.0], &[1.0; 3]);
    assert!(r.iter().all(|v| (v - 2.0).abs() < 1e-12));
    let r = pava_values(&[1.0, 0.0], &[1.0, 3.0]);
    assert!(r.iter().all(|v| (v - 0.25).abs() < 1e-12));
    assert_eq!(brute_isotonic(&[1.0, 0.0], &[1.0, 3.0]), vec![0.25, 0.25]);

    let c = gcm_left_derivative(&[(0.0, 0.0), (1.0, 2.0), (2.0, 2.0), (3.0, 6.0)]).unwrap();
    let got = c.values();
    for (g, e) in got.iter().zip([1.0, 1.0, 4.0]) {
        assert!((g - e).abs() < 1e-12);
    }
    assert!(gcm_left_derivative(&[(0.0, 0.0), (1.0, 1.0), (1.0, 2.0)]).is_err());
}

#[test]
fn hermite_examples() {
    let c = monotone_hermite(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
    assert!((c.eval(0.5) - 0.5).abs() < 1e-12);
    assert!((numeric_derivative(&c, 0.3, 1e-4).unwrap() - 1.0).abs() < 1e-8);
    let c = monotone_hermite(&[0.0, 1.0, 2.0], &[0.0, 0.0, 1.0]).unwrap();
    assert!(c.derivative(0.5).abs() < 1e-12);
    assert!(monotone_hermite(&[0.0], &[0.0]).is_err());
    let knots: Vec<f64> = (0..41).map(|i| 0.5 + i as f64 * 0.025).collect();
    let sq: Vec<f64> = knots.iter().map(|t| t * t).collect();
    let c = monotone_hermite(&knots, &sq).unwrap();
    assert!((numeric_derivative(&c, 1.0, 1e-4).unwrap() - 2.0).abs() < 1e-3);
    assert!(numeric_derivative(&c, 1.0, 0.0).is_err());
}

fn series(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_len).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(0.1f64..4.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pava_matches_brute_force((v, w) in series(8)) {
        let fit = pava_values(&v, &w);
        let oracle = brute_isotonic(&v, &w);
        for (a, b) in fit.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-10, "{fit:?} vs {oracle:?}");
        }
    }

    #[test]
    fn pava_bounded_monotone_idempotent((v, w) in series(30)) {
        let fit = pava_values(&v, &w);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(fit.windows(2).all(|p| p[0] <= p[1] + 1e-12));
        prop_assert!(fit.iter().all(|&f| f >= lo - 1e-12 && f <= hi + 1e-12));
        let again = pava_values(&fit, &w);
        for (a, b) in fit.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let x: Vec<f64> = (0..v.len()).map(|i| i as f64).collect();
        let curve = pava(&WeightedSeries::new(x, v.clone(), w.clone()).unwrap());
        prop_assert_eq!(curve.values(), &fit[..]);
    }

    #[test]
    fn gcm_is_dual_to_pava((v, w) in series(40)) {
        let mut points = vec![(0.0, 0.0)];
        let (mut cx, mut cy) = (0.0, 0.0);
        for (vi, wi) in v.iter().zip(&w) {
            cx += wi;
            cy += vi * wi;
            points.push((cx, cy));
        }
        let gcm = gcm_left_derivative(&points).unwrap();
        let fit = pava_values(&v, &w);
        let hull = hull_slopes(&points);
        for ((g, p), h) in gcm.values().iter().zip(&fit).zip(&hull) {
            prop_assert!((g - p).abs() < 1e-10);
            prop_assert!((g - h).abs() < 1e-10);
        }
    }

    #[test]
    fn hermite_stays_in_brackets(steps in prop::collection::vec((0.05f64..2.0, 0.0f64..1.0), 2..15)) {
        let mut knots = Vec::new();
        let mut values = Vec::new();
        let (mut x, mut y) = (0.0, 0.0);
        for (dx, dy) in steps {
            x += dx;
            // about a third of the segments are flat
            y += if dy < 0.33 { 0.0 } else { dy };
            knots.push(x);
            values.push(y);
        }
        let c = monotone_hermite(&knots, &values).unwrap();
        let (lo, hi) = c.domain();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=1000 {
            let t = lo + (hi - lo) * k as f64 / 1000.0;
            let v = c.eval(t);
            prop_assert!(v >= prev - 1e-12);
            prev = v;
            let j = knots.partition_point(|&u| u <= t).clamp(1, knots.len() - 1);
            prop_assert!(v >= values[j - 1] - 1e-12 && v <= values[j] + 1e-12);
        }
    }
}

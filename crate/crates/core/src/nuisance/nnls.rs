//! Lawson–Hanson non-negative least squares.

use nalgebra::{DMatrix, DVector};

/// Minimize `||A x - b||` subject to `x >= 0`. `a` is `m x n`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-10 * a.norm().max(1.0) * b.norm().max(1.0);
    let at = a.transpose();
    for _outer in 0..3 * n.max(1) {
        let w = &at * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        for _inner in 0..3 * n.max(1) {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let sub = a.select_columns(&idx);
            let z_p = least_squares(&sub, b);
            if z_p.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &col) in idx.iter().enumerate() {
                    x[col] = z_p[k];
                }
                break;
            }
            // step back toward the feasible region
            let mut alpha = f64::INFINITY;
            for (k, &col) in idx.iter().enumerate() {
                if z_p[k] <= 0.0 {
                    let denom = x[col] - z_p[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[col] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &col) in idx.iter().enumerate() {
                x[col] += alpha * (z_p[k] - x[col]);
            }
            for &col in &idx {
                if x[col] <= 1e-14 {
                    x[col] = 0.0;
                    passive[col] = false;
                }
            }
        }
    }
    x
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-12).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unconstrained_solution_when_positive() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x_true = DVector::from_vec(vec![2.0, 3.0]);
        let b = &a * &x_true;
        let x = nnls(&a, &b);
        assert!((x - x_true).norm() < 1e-10);
    }

    #[test]
    fn negative_coefficient_clamped() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let x = nnls(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert_eq!(x[1], 0.0);
    }

    proptest! {
        // KKT conditions: x >= 0, gradient >= 0 on the active set, = 0 on the passive set
        #[test]
        fn satisfies_kkt(vals in prop::collection::vec(-3.0f64..3.0, 24), rhs in prop::collection::vec(-3.0f64..3.0, 8)) {
            let a = DMatrix::from_row_slice(8, 3, &vals);
            let b = DVector::from_vec(rhs);
            let x = nnls(&a, &b);
            let grad = a.transpose() * (&a * &x - &b);
            for j in 0..3 {
                prop_assert!(x[j] >= 0.0);
                if x[j] > 1e-9 {
                    prop_assert!(grad[j].abs() < 1e-6);
                } else {
                    prop_assert!(grad[j] > -1e-6);
                }
            }
        }
    }
}

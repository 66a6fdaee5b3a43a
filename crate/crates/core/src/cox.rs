//! Cox proportional hazards regression for current-status data, fit by
//! alternating an iterative convex minorant step on the baseline cumulative
//! hazard with a damped Newton step on the coefficients. Inference is by the
//! nonparametric bootstrap.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::data::{CovariateGroup, Dataset};
use crate::error::{invalid, Error, Result};
use crate::isotonic::pava_values;
use crate::rng;

/// Coefficients beyond this magnitude are taken as evidence of separation.
pub const SEPARATION_BOUND: f64 = 20.0;

const MAX_HALVINGS: usize = 20;

/// `log(1 - exp(-x))` for `x > 0`.
fn log1mexp(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        (-(-x).exp_m1()).ln()
    }
}

fn check_dims(beta: &[f64], cumhaz_at_y: &[f64], d: &Dataset) -> Result<()> {
    if beta.len() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: d.dim(),
            found: beta.len(),
        });
    }
    if cumhaz_at_y.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            found: cumhaz_at_y.len(),
        });
    }
    Ok(())
}

fn eta(beta: &[f64], w: &[f64]) -> f64 {
    beta.iter().zip(w).map(|(b, x)| b * x).sum()
}

/// Current-status log-likelihood
/// `sum_i delta_i log(1 - exp(-L_i e^eta_i)) - (1 - delta_i) L_i e^eta_i`.
/// Returns `-inf` when an event has zero cumulative hazard.
pub fn cs_loglik(beta: &[f64], cumhaz_at_y: &[f64], d: &Dataset) -> Result<f64> {
    check_dims(beta, cumhaz_at_y, d)?;
    Ok(d.observations()
        .iter()
        .zip(cumhaz_at_y)
        .map(|(o, &l)| {
            let x = l * eta(beta, &o.w).exp();
            if o.delta {
                log1mexp(x)
            } else {
                -x
            }
        })
        .sum())
}

/// Gradient of [`cs_loglik`] in `beta`.
pub fn cs_gradient(beta: &[f64], cumhaz_at_y: &[f64], d: &Dataset) -> Result<Vec<f64>> {
    check_dims(beta, cumhaz_at_y, d)?;
    let mut g = vec![0.0; beta.len()];
    for (o, &l) in d.observations().iter().zip(cumhaz_at_y) {
        let x = l * eta(beta, &o.w).exp();
        let dh = if o.delta { 1.0 / x.exp_m1() } else { -1.0 };
        for (gj, wj) in g.iter_mut().zip(&o.w) {
            *gj += dh * x * wj;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub init_beta: Option<Vec<f64>>,
    /// Warm start for the baseline: `(times, cumulative hazard)` step function.
    #[serde(skip)]
    pub init_cumhaz: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1000,
            init_beta: None,
            init_cumhaz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub covariate_names: Vec<String>,
    /// Log hazard ratios, one per covariate; dropped columns hold 0.
    pub beta: Vec<f64>,
    /// Constant covariate columns removed before fitting.
    pub dropped: Vec<usize>,
    /// Distinct respondent response times and the baseline cumulative hazard there.
    pub times: Vec<f64>,
    pub baseline_cumhaz: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub separated: bool,
    pub iterations: usize,
    pub n: usize,
}

impl CoxFit {
    /// Right-continuous step evaluation of the baseline cumulative hazard.
    pub fn cumhaz_at(&self, t: f64) -> f64 {
        step_at(&self.times, &self.baseline_cumhaz, t)
    }
}

fn step_at(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&u| u <= t);
    if k == 0 {
        0.0
    } else {
        values[k - 1]
    }
}

/// Respondent rows in a compact form: kept covariate columns, outcome and
/// index of the distinct response time.
struct Problem {
    x: Vec<Vec<f64>>,
    delta: Vec<bool>,
    time_idx: Vec<usize>,
    times: Vec<f64>,
}

impl Problem {
    fn loglik(&self, beta: &[f64], lambda: &[f64]) -> f64 {
        self.x
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let x = lambda[self.time_idx[i]] * eta(beta, w).exp();
                if self.delta[i] {
                    log1mexp(x)
                } else {
                    -x
                }
            })
            .sum()
    }

    /// Gradient and Fisher weight of the log-likelihood in each baseline jump
    /// location's cumulative hazard.
    fn lambda_derivatives(&self, beta: &[f64], lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.times.len();
        let mut grad = vec![0.0; m];
        let mut info = vec![0.0; m];
        for (i, w) in self.x.iter().enumerate() {
            let k = self.time_idx[i];
            let e = eta(beta, w).exp();
            let x = (lambda[k] * e).max(1e-12);
            grad[k] += e * if self.delta[i] { 1.0 / x.exp_m1() } else { -1.0 };
            info[k] += e * e / x.exp_m1();
        }
        (grad, info)
    }

    fn beta_newton(&self, beta: &[f64], lambda: &[f64]) -> Option<DVector<f64>> {
        let q = beta.len();
        let mut g = DVector::<f64>::zeros(q);
        let mut h = DMatrix::<f64>::zeros(q, q);
        for (i, w) in self.x.iter().enumerate() {
            let x = lambda[self.time_idx[i]] * eta(beta, w).exp();
            let (d1, c) = if self.delta[i] {
                let em1 = x.exp_m1();
                // x h' + x^2 h''
                (x / em1, x / em1 - x * x * x.exp() / (em1 * em1))
            } else {
                (-x, -x)
            };
            if !d1.is_finite() || !c.is_finite() {
                continue;
            }
            for a in 0..q {
                g[a] += d1 * w[a];
                for b in 0..q {
                    h[(a, b)] -= c * w[a] * w[b];
                }
            }
        }
        for a in 0..q {
            h[(a, a)] += 1e-10;
        }
        h.cholesky().map(|ch| ch.solve(&g))
    }
}

/// Projected Fisher-scoring step for the cumulative hazard:
/// `max(0, pava(lambda + grad / info, info))`.
pub fn icm_project(lambda: &[f64], grad: &[f64], info: &[f64]) -> Vec<f64> {
    let target: Vec<f64> = lambda
        .iter()
        .zip(grad)
        .zip(info)
        .map(|((l, g), h)| if *h > 0.0 { l + g / h } else { *l })
        .collect();
    let w: Vec<f64> = info.iter().map(|h| h.max(1e-12)).collect();
    pava_values(&target, &w).into_iter().map(|v| v.max(0.0)).collect()
}

/// Maximum-likelihood fit on the respondents of `d`.
pub fn fit_cox(d: &Dataset, opts: &CoxOptions) -> Result<CoxFit> {
    let resp: Vec<_> = d.observations().iter().filter(|o| d.is_respondent(o)).collect();
    if resp.len() < 2 {
        return Err(Error::InsufficientSupport { found: resp.len() });
    }
    let p = d.dim();
    if let Some(b) = &opts.init_beta {
        if b.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: b.len(),
            });
        }
    }
    let keep: Vec<usize> = (0..p)
        .filter(|&j| resp.iter().any(|o| o.w[j] != resp[0].w[j]))
        .collect();
    let dropped: Vec<usize> = (0..p).filter(|j| !keep.contains(j)).collect();

    let mut times: Vec<f64> = resp.iter().map(|o| o.y).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let prob = Problem {
        x: resp.iter().map(|o| keep.iter().map(|&j| o.w[j]).collect()).collect(),
        delta: resp.iter().map(|o| o.delta).collect(),
        time_idx: resp.iter().map(|o| times.partition_point(|&u| u < o.y)).collect(),
        times: times.clone(),
    };

    let mut beta: Vec<f64> = match &opts.init_beta {
        Some(b) => keep.iter().map(|&j| b[j]).collect(),
        None => vec![0.0; keep.len()],
    };
    let mut lambda: Vec<f64> = match &opts.init_cumhaz {
        Some((t, v)) => times.iter().map(|&u| step_at(t, v, u).max(1e-4)).collect(),
        None => {
            // NPMLE of the distribution, pulled away from 0 and 1
            let m = times.len();
            let mut ev = vec![0.0; m];
            let mut ct = vec![0.0; m];
            for (i, &k) in prob.time_idx.iter().enumerate() {
                ct[k] += 1.0;
                if prob.delta[i] {
                    ev[k] += 1.0;
                }
            }
            let means: Vec<f64> = ev.iter().zip(&ct).map(|(e, c)| e / c).collect();
            pava_values(&means, &ct)
                .into_iter()
                .map(|f| -(1.0 - f.clamp(0.01, 0.99)).ln())
                .collect()
        }
    };
    // keep the running maximum of the cumulative hazard monotone after warm starts
    for k in 1..lambda.len() {
        lambda[k] = lambda[k].max(lambda[k - 1]);
    }

    let mut ll = prob.loglik(&beta, &lambda);
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let before = ll;

        let (grad, info) = prob.lambda_derivatives(&beta, &lambda);
        let proposal = icm_project(&lambda, &grad, &info);
        let mut s = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = lambda.iter().zip(&proposal).map(|(a, b)| a + s * (b - a)).collect();
            let cll = prob.loglik(&beta, &cand);
            if cll >= ll {
                lambda = cand;
                ll = cll;
                break;
            }
            s *= 0.5;
        }

        if !beta.is_empty() {
            if let Some(step) = prob.beta_newton(&beta, &lambda) {
                let mut s = 1.0;
                for _ in 0..=MAX_HALVINGS {
                    let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, d)| b + s * d).collect();
                    let cll = prob.loglik(&cand, &lambda);
                    if cll >= ll {
                        beta = cand;
                        ll = cll;
                        break;
                    }
                    s *= 0.5;
                }
            }
        }
        debug_assert!(ll >= before, "log-likelihood decreased: {before} -> {ll}");

        if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            separated = true;
            break;
        }
        if (ll - before).abs() <= opts.tol * (ll.abs() + opts.tol) {
            converged = true;
            break;
        }
    }
    if !ll.is_finite() {
        return Err(invalid("Cox fit reached a non-finite log-likelihood"));
    }

    let mut full = vec![0.0; p];
    for (k, &j) in keep.iter().enumerate() {
        full[j] = beta[k];
    }
    Ok(CoxFit {
        covariate_names: d.covariate_names().to_vec(),
        beta: full,
        dropped,
        times,
        baseline_cumhaz: lambda,
        loglik: ll,
        converged,
        separated,
        iterations,
        n: resp.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    /// Resample the whole cohort, then keep each resample's respondents.
    #[default]
    FullCohort,
    Respondents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTest {
    pub name: String,
    pub columns: Vec<usize>,
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub b: usize,
    pub n_used: usize,
    pub n_dropped: usize,
    /// More than 10% of replicates were dropped.
    pub flagged: bool,
    /// Some coefficient has zero bootstrap spread.
    pub degenerate: bool,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub wald_ci: Vec<(f64, f64)>,
    pub percentile_ci: Vec<(f64, f64)>,
    pub p_values: Vec<f64>,
    pub group_tests: Vec<GroupTest>,
}

/// Type-7 sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bootstrap inference from replicate estimates.
pub fn summarize_bootstrap(
    beta_hat: &[f64],
    replicates: &[Vec<f64>],
    groups: &[CovariateGroup],
    b_requested: usize,
) -> Result<BootstrapSummary> {
    let r = replicates.len();
    if r < 2 {
        return Err(invalid(format!("bootstrap needs at least 2 usable replicates, found {r}")));
    }
    let p = beta_hat.len();
    let mean: Vec<f64> = (0..p).map(|j| replicates.iter().map(|b| b[j]).sum::<f64>() / r as f64).collect();
    let cov = DMatrix::from_fn(p, p, |a, c| {
        replicates.iter().map(|b| (b[a] - mean[a]) * (b[c] - mean[c])).sum::<f64>() / (r - 1) as f64
    });
    let se: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let z = 1.96;
    let normal = Normal::standard();
    let mut percentile_ci = Vec::with_capacity(p);
    for j in 0..p {
        let mut v: Vec<f64> = replicates.iter().map(|b| b[j]).collect();
        v.sort_by(f64::total_cmp);
        percentile_ci.push((quantile_sorted(&v, 0.025), quantile_sorted(&v, 0.975)));
    }
    let p_values: Vec<f64> = (0..p)
        .map(|j| {
            if se[j] > 0.0 {
                2.0 * (1.0 - normal.cdf((beta_hat[j] / se[j]).abs()))
            } else {
                f64::NAN
            }
        })
        .collect();
    let group_tests = groups
        .iter()
        .map(|g| {
            let k = g.columns.len();
            let b = DVector::from_iterator(k, g.columns.iter().map(|&j| beta_hat[j]));
            let sub = DMatrix::from_fn(k, k, |a, c| cov[(g.columns[a], g.columns[c])]);
            let chi2 = sub
                .clone()
                .cholesky()
                .map(|ch| b.dot(&ch.solve(&b)))
                .unwrap_or(f64::NAN);
            let p_value = if chi2.is_finite() && k > 0 {
                1.0 - ChiSquared::new(k as f64).map_or(f64::NAN, |d| d.cdf(chi2))
            } else {
                f64::NAN
            };
            GroupTest {
                name: g.name.clone(),
                columns: g.columns.clone(),
                chi2,
                df: k,
                p_value,
            }
        })
        .collect();
    let n_dropped = b_requested.saturating_sub(r);
    Ok(BootstrapSummary {
        b: b_requested,
        n_used: r,
        n_dropped,
        flagged: n_dropped as f64 > 0.1 * b_requested as f64,
        degenerate: se.iter().any(|&s| s == 0.0),
        beta: beta_hat.to_vec(),
        wald_ci: beta_hat.iter().zip(&se).map(|(b, s)| (b - z * s, b + z * s)).collect(),
        se,
        percentile_ci,
        p_values,
        group_tests,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub b: usize,
    pub seed: u64,
    pub resample: Resample,
    pub cox: CoxOptions,
}

/// Row indices of bootstrap replicate `index`.
pub fn resample_indices(d: &Dataset, resample: Resample, seed: u64, index: u64) -> Vec<usize> {
    let pool: Vec<usize> = match resample {
        Resample::FullCohort => (0..d.len()).collect(),
        Resample::Respondents => (0..d.len()).filter(|&i| d.is_respondent(&d.observations()[i])).collect(),
    };
    let mut rng = rng::seeded(rng::replicate_seed(seed, index));
    (0..pool.len()).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

/// Refit on `opts.b` resamples, warm-started at `fit`, and summarize.
pub fn bootstrap_cox(
    d: &Dataset,
    fit: &CoxFit,
    opts: &BootstrapOptions,
    groups: &[CovariateGroup],
) -> Result<BootstrapSummary> {
    if opts.b < 2 {
        return Err(invalid("bootstrap needs B >= 2"));
    }
    let warm = CoxOptions {
        init_beta: Some(fit.beta.clone()),
        init_cumhaz: Some((fit.times.clone(), fit.baseline_cumhaz.clone())),
        ..opts.cox.clone()
    };
    let results: Vec<Option<Vec<f64>>> = (0..opts.b as u64)
        .into_par_iter()
        .map(|idx| {
            let sample = d.select(&resample_indices(d, opts.resample, opts.seed, idx));
            match fit_cox(&sample, &warm) {
                Ok(f) if f.converged && !f.separated && f.dropped == fit.dropped => Some(f.beta),
                _ => None,
            }
        })
        .collect();
    let reps: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    summarize_bootstrap(&fit.beta, &reps, groups, opts.b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use proptest::prelude::{prop_assert, proptest};

    fn one(delta: bool) -> Dataset {
        Dataset::new(vec![Observation::new(vec![0.0], 1.0, delta)], 5.0, 0.0, vec!["w".into()]).unwrap()
    }

    #[test]
    fn loglik_examples() {
        assert!((cs_loglik(&[0.0], &[1.0], &one(false)).unwrap() + 1.0).abs() < 1e-15);
        assert!((cs_loglik(&[0.0], &[1.0], &one(true)).unwrap() - (1.0 - (-1.0f64).exp()).ln()).abs() < 1e-15);
        assert!((cs_loglik(&[0.0], &[1.0], &one(true)).unwrap() + 0.45868).abs() < 1e-5);
        assert_eq!(cs_loglik(&[0.0], &[0.0], &one(true)).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(cs_loglik(&[0.0, 1.0], &[1.0], &one(true)), Err(Error::DimensionMismatch { .. })));
    }

    fn synthetic(n: usize, seed: u64) -> Dataset {
        let mut rng = rng::seeded(seed);
        let obs = (0..n)
            .map(|_| {
                let w = vec![if rng.random::<bool>() { 1.0 } else { -1.0 }, rng.random::<f64>() * 2.0 - 1.0];
                let rate = (-0.5 * w[0] + 0.3 * w[1]).exp();
                let t = -rng.random::<f64>().ln() / rate;
                let y = 0.05 + rng.random::<f64>() * 2.0;
                Observation::new(w, y, t <= y)
            })
            .collect();
        Dataset::new(obs, 5.0, 0.0, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn fit_recovers_direction_and_likelihood_increases() {
        let d = synthetic(800, 3);
        let fit = fit_cox(&d, &CoxOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.beta[0] < -0.2 && fit.beta[1] > 0.0, "{:?}", fit.beta);
        assert!(fit.baseline_cumhaz.windows(2).all(|p| p[0] <= p[1]));
        assert!(fit.baseline_cumhaz.iter().all(|&l| l >= 0.0));
        let cum: Vec<f64> = d.observations().iter().map(|o| fit.cumhaz_at(o.y)).collect();
        let ll = cs_loglik(&fit.beta, &cum, &d).unwrap();
        assert!((ll - fit.loglik).abs() < 1e-8);
        let ll0 = cs_loglik(&[0.0, 0.0], &cum, &d).unwrap();
        assert!(ll >= ll0);
    }

    #[test]
    fn duplicated_rows_give_same_beta() {
        let d = synthetic(300, 5);
        let idx: Vec<usize> = (0..d.len()).flat_map(|i| [i, i]).collect();
        let a = fit_cox(&d, &CoxOptions::default()).unwrap();
        let b = fit_cox(&d.select(&idx), &CoxOptions::default()).unwrap();
        for (x, y) in a.beta.iter().zip(&b.beta) {
            assert!((x - y).abs() < 1e-5, "{x} {y}");
        }
    }

    #[test]
    fn scaling_a_column_rescales_its_coefficient() {
        let d = synthetic(400, 8);
        let obs: Vec<Observation> = d
            .observations()
            .iter()
            .map(|o| Observation::new(vec![o.w[0], 4.0 * o.w[1]], o.y, o.delta))
            .collect();
        let e = Dataset::new(obs, 5.0, 0.0, vec!["a".into(), "b".into()]).unwrap();
        let a = fit_cox(&d, &CoxOptions::default()).unwrap();
        let b = fit_cox(&e, &CoxOptions::default()).unwrap();
        assert!((a.beta[1] - 4.0 * b.beta[1]).abs() < 1e-4);
        assert!((a.loglik - b.loglik).abs() < 1e-6 * a.loglik.abs());
    }

    #[test]
    fn no_covariates_reduces_to_npmle() {
        let d = synthetic(300, 11);
        let obs: Vec<Observation> = d.observations().iter().map(|o| Observation::new(vec![0.0], o.y, o.delta)).collect();
        let e = Dataset::new(obs, 5.0, 0.0, vec!["zero".into()]).unwrap();
        let fit = fit_cox(&e, &CoxOptions::default()).unwrap();
        assert_eq!(fit.dropped, vec![0]);
        let mut rows: Vec<(f64, f64)> = e.observations().iter().map(|o| (o.y, o.delta_f64())).collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ev: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let npmle = pava_values(&ev, &vec![1.0; ev.len()]);
        for ((y, _), f) in rows.iter().zip(&npmle) {
            if *f > 0.0 && *f < 1.0 {
                let got = 1.0 - (-fit.cumhaz_at(*y)).exp();
                assert!((got - f).abs() < 1e-6, "{got} vs {f}");
            }
        }
    }

    #[test]
    fn icm_projection_is_pava_of_update() {
        let lambda = [0.1, 0.3, 0.2, 0.6];
        let grad = [1.0, -2.0, 0.5, -0.1];
        let info = [2.0, 1.0, 4.0, 0.5];
        let target: Vec<f64> = (0..4).map(|k| lambda[k] + grad[k] / info[k]).collect();
        let want: Vec<f64> = pava_values(&target, &info).into_iter().map(|v| v.max(0.0)).collect();
        assert_eq!(icm_project(&lambda, &grad, &info), want);
    }

    #[test]
    fn identical_replicates_are_degenerate() {
        let groups = vec![CovariateGroup {
            name: "a".into(),
            columns: vec![0],
            levels: vec![],
            reference: None,
        }];
        let s = summarize_bootstrap(&[0.4], &[vec![0.4], vec![0.4]], &groups, 2).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.se, vec![0.0]);
        assert_eq!(s.wald_ci, vec![(0.4, 0.4)]);
    }

    #[test]
    fn single_column_group_test_matches_wald() {
        let reps: Vec<Vec<f64>> = (0..50).map(|i| vec![0.3 + 0.01 * ((i * 17) % 23) as f64 - 0.11]).collect();
        let groups = vec![CovariateGroup {
            name: "a".into(),
            columns: vec![0],
            levels: vec![],
            reference: None,
        }];
        let s = summarize_bootstrap(&[0.3], &reps, &groups, 50).unwrap();
        assert!((s.group_tests[0].p_value - s.p_values[0]).abs() < 1e-10);
        assert!((s.group_tests[0].chi2 - (0.3 / s.se[0]).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let d = synthetic(200, 2);
        let fit = fit_cox(&d, &CoxOptions::default()).unwrap();
        let opts = BootstrapOptions {
            b: 20,
            seed: 9,
            resample: Resample::FullCohort,
            cox: CoxOptions::default(),
        };
        let a = bootstrap_cox(&d, &fit, &opts, &[]).unwrap();
        let b = bootstrap_cox(&d, &fit, &opts, &[]).unwrap();
        assert_eq!(a, b);
        assert!(a.se.iter().all(|&s| s > 0.0));
        assert!(bootstrap_cox(&d, &fit, &BootstrapOptions { b: 1, ..opts }, &[]).is_err());
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(
            seed in 0u64..10_000,
            b0 in -1.0f64..1.0,
            b1 in -1.0f64..1.0,
        ) {
            let d = synthetic(40, seed);
            let cum: Vec<f64> = d.observations().iter().map(|o| 0.2 + o.y).collect();
            let beta = [b0, b1];
            let g = cs_gradient(&beta, &cum, &d).unwrap();
            for j in 0..2 {
                let h = 1e-5;
                let mut up = beta;
                let mut dn = beta;
                up[j] += h;
                dn[j] -= h;
                let fd = (cs_loglik(&up, &cum, &d).unwrap() - cs_loglik(&dn, &cum, &d).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0));
            }
        }
    }
}

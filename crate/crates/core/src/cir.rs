//! Extended causal isotonic regression for the event-time distribution under
//! current-status observation with survey nonresponse, plus the complete-case
//! and NPMLE baselines.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::isotonic::{gcm_left_derivative, monotone_hermite, numeric_derivative, MonotoneCurve};
use crate::nuisance::{
    fit_density, fit_mu, ConstantRegression, DensityRatio, DensitySpec, DensitySummary, EmpiricalCdf, EnsembleSpec,
    MarginalOnly, MuSummary, OutcomeRegression, UniqueRows,
};
use crate::rng;

/// 0.975 quantile of Chernoff's distribution (argmax of two-sided Brownian
/// motion minus t^2), as tabulated in Groeneboom & Wellner (2001),
/// "Computing Chernoff's distribution". A direct Monte Carlo run of the
/// argmax agrees to two decimals.
pub const CHERNOFF_Q975: f64 = 0.998181;

pub const TAU_FLOOR: f64 = 1e-8;

pub const FLAG_TAU_FLOORED: &str = "tau_floored";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Extended,
    CompleteCase,
    Npmle,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Extended, Mode::CompleteCase, Mode::Npmle];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Extended => "extended",
            Mode::CompleteCase => "complete_case",
            Mode::Npmle => "npmle",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extended" => Ok(Mode::Extended),
            "complete_case" | "complete-case" => Ok(Mode::CompleteCase),
            "npmle" => Ok(Mode::Npmle),
            other => Err(invalid(format!("unknown mode {other:?}"))),
        }
    }
}

/// Where the marginal density of `Y` in the scale factor comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MarginalDensity {
    #[default]
    Histogram,
    /// Symmetric difference quotient of the empirical CDF with half-width
    /// `(t1 - t0) / 20`.
    EcdfDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CIRConfig {
    pub t0: f64,
    pub t1: f64,
    /// Empty means 100 points evenly spaced on the empirical quantile scale.
    pub eval_times: Vec<f64>,
    pub mode: Mode,
    pub chernoff_q975: f64,
    /// Half-width, in empirical quantile units, of the secant used for the
    /// derivative of the smoothed curve; `None` uses `0.25 n^(-1/5)`.
    pub derivative_step: Option<f64>,
    pub tau_floor: f64,
    pub marginal_density: MarginalDensity,
}

impl CIRConfig {
    pub fn new(t0: f64, t1: f64, mode: Mode) -> Self {
        Self {
            t0,
            t1,
            eval_times: Vec::new(),
            mode,
            chernoff_q975: CHERNOFF_Q975,
            derivative_step: None,
            tau_floor: TAU_FLOOR,
            marginal_density: MarginalDensity::default(),
        }
    }

    pub fn validate(&self, b0: f64, c0: f64) -> Result<()> {
        if !(b0 < self.t0 && self.t0 < self.t1 && self.t1 < c0) {
            return Err(invalid(format!(
                "need b0 < t0 < t1 < c0, got b0 = {b0}, t0 = {}, t1 = {}, c0 = {c0}",
                self.t0, self.t1
            )));
        }
        if let Some(t) = self.eval_times.iter().find(|&&t| !(self.t0..=self.t1).contains(&t)) {
            return Err(invalid(format!("evaluation time {t} outside [t0, t1]")));
        }
        if self.derivative_step.is_some_and(|h| !(h > 0.0)) || !(self.tau_floor > 0.0) || !(self.chernoff_q975 > 0.0) {
            return Err(invalid("derivative step, tau floor and Chernoff quantile must be positive"));
        }
        Ok(())
    }

    fn step(&self, n: usize) -> f64 {
        self.derivative_step.unwrap_or(0.25 * (n as f64).powf(-0.2))
    }
}

/// `points` times evenly spaced in empirical quantile between `t0` and `t1`.
pub fn quantile_grid(f: &EmpiricalCdf, t0: f64, t1: f64, points: usize) -> Vec<f64> {
    let (p0, p1) = (f.eval(t0), f.eval(t1));
    (0..points)
        .map(|k| {
            let p = if points == 1 { p0 } else { p0 + (p1 - p0) * k as f64 / (points - 1) as f64 };
            f.quantile(p).clamp(t0, t1)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .enumerate()
        .map(|(k, t)| if k == 0 { t0 } else if k + 1 == points { t1 } else { t })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CIREstimate {
    pub mode: Mode,
    pub n: usize,
    pub n_respondents: usize,
    pub t0: f64,
    pub t1: f64,
    pub times: Vec<f64>,
    /// Estimated distribution function `theta_n(t) = P(T <= t)`.
    pub theta: Vec<f64>,
    pub survival: Vec<f64>,
    pub tau: Vec<f64>,
    /// Pointwise interval for survival.
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub flags: Vec<String>,
    /// Distinct response times in the window and the fitted step values there.
    pub window_times: Vec<f64>,
    pub window_theta: Vec<f64>,
}

impl CIREstimate {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "survival", "ci_lower", "ci_upper", "tau", "flags"])?;
        for i in 0..self.times.len() {
            w.write_record([
                fmt_num(self.times[i]),
                fmt_num(self.survival[i]),
                fmt_num(self.ci_lower[i]),
                fmt_num(self.ci_upper[i]),
                fmt_num(self.tau[i]),
                self.flags[i].clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Survival at `t` from the fitted step function.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.window_times.partition_point(|&u| u <= t);
        1.0 - self.window_theta[k.saturating_sub(1)]
    }
}

pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v:.10}")
}

/// Fitted nuisance functions handed to [`fit_cir`].
#[derive(Clone, Copy)]
pub struct Nuisances<'a> {
    pub mu: &'a dyn OutcomeRegression,
    pub g: &'a dyn DensityRatio,
}

/// The one-step estimate of `Gamma_0(y0) = E{ integral of 1(u <= y0) mu(u, W) dF(u) }`,
/// computed literally: plug-in plus the empirical mean of the efficient
/// influence function. Quadratic in `n`; [`fit_cir`] uses the equivalent
/// pseudo-outcome cusum.
pub fn one_step_gamma(
    d: &Dataset,
    mu: &dyn OutcomeRegression,
    g: &dyn DensityRatio,
    f: &EmpiricalCdf,
    y0: f64,
) -> f64 {
    let obs = d.observations();
    let n = obs.len() as f64;
    let theta_pn = |y: f64| obs.iter().map(|o| mu.predict(y, &o.w)).sum::<f64>() / n;
    let atoms: Vec<(f64, f64)> = f
        .support()
        .iter()
        .zip(f.masses())
        .filter(|&(&u, _)| u <= y0)
        .map(|(&u, m)| (u, m))
        .collect();
    let plug_in: f64 = atoms.iter().map(|&(u, m)| m * theta_pn(u)).sum();
    let eif_mean = obs
        .iter()
        .map(|o| {
            let inner: f64 = atoms.iter().map(|&(u, m)| m * mu.predict(u, &o.w)).sum();
            let mut v = inner - 2.0 * plug_in;
            if o.y <= y0 {
                v += (o.delta_f64() - mu.predict(o.y, &o.w)) / g.predict_g(o.y, &o.w) + theta_pn(o.y);
            }
            v
        })
        .sum::<f64>()
        / n;
    plug_in + eif_mean
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactor {
    pub tau: f64,
    pub raw: f64,
    pub floored: bool,
    pub kappa: f64,
    pub f: f64,
    pub derivative: f64,
}

/// `tau = 4 theta'(y0) kappa(y0) / f(y0)` with
/// `kappa(y0) = mean_j mu(y0, W_j) (1 - mu(y0, W_j)) / g(y0, W_j)`.
pub fn scale_factor(
    d: &Dataset,
    mu: &dyn OutcomeRegression,
    g: &dyn DensityRatio,
    theta_curve: &MonotoneCurve,
    y0: f64,
    h: f64,
    tau_floor: f64,
) -> Result<ScaleFactor> {
    let ws = UniqueRows::new(d.observations().iter().map(|o| o.w.as_slice()));
    let derivative = curve_derivative(theta_curve, y0, h)?;
    scale_factor_with(&ws, mu, g, derivative, g.predict_f(y0), y0, tau_floor)
}

fn curve_derivative(c: &MonotoneCurve, y0: f64, h: f64) -> Result<f64> {
    let (lo, hi) = c.domain();
    if lo == hi {
        return Ok(0.0);
    }
    numeric_derivative(c, y0.clamp(lo, hi), h)
}

/// Secant slope of `c` over the quantile window `F^-1(F(t) -/+ h)`, clipped to the curve domain.
fn quantile_secant(c: &MonotoneCurve, fcdf: &EmpiricalCdf, t: f64, h: f64) -> f64 {
    let (lo, hi) = c.domain();
    let u = fcdf.eval(t);
    let a = fcdf.quantile(u - h).clamp(lo, hi);
    let b = fcdf.quantile(u + h).clamp(lo, hi);
    if b > a {
        ((c.eval(b) - c.eval(a)) / (b - a)).max(0.0)
    } else {
        0.0
    }
}

fn scale_factor_with(
    ws: &UniqueRows,
    mu: &dyn OutcomeRegression,
    g: &dyn DensityRatio,
    derivative: f64,
    f: f64,
    y0: f64,
    tau_floor: f64,
) -> Result<ScaleFactor> {
    if !(f > 0.0) {
        return Err(Error::OutsideSupport(y0));
    }
    let kappa = ws.mean(|w| {
        let m = mu.predict(y0, w);
        m * (1.0 - m) / g.predict_g(y0, w)
    });
    let raw = 4.0 * derivative * kappa / f;
    let floored = !(raw >= tau_floor);
    Ok(ScaleFactor {
        tau: if floored { tau_floor } else { raw },
        raw,
        floored,
        kappa,
        f,
        derivative,
    })
}

pub fn chernoff_half_width(tau: f64, n: usize, q: f64) -> f64 {
    q * (tau / n as f64).cbrt()
}

/// Pointwise interval `theta -/+ q (tau / n)^(1/3)`, clipped to `[0, 1]`.
pub fn chernoff_ci(theta: f64, tau: f64, n: usize, q: f64) -> (f64, f64) {
    let hw = chernoff_half_width(tau, n, q);
    ((theta - hw).clamp(0.0, 1.0), (theta + hw).clamp(0.0, 1.0))
}

/// Monotone Hermite smoothing of a step function in time through the
/// midpoints of its constant blocks. A single block yields a flat curve.
pub fn smooth_step(times: &[f64], values: &[f64], t0: f64, t1: f64) -> Result<MonotoneCurve> {
    let mut starts = Vec::new();
    let mut levels: Vec<f64> = Vec::new();
    for (i, (&t, &v)) in times.iter().zip(values).enumerate() {
        if levels.last() != Some(&v) {
            starts.push(if i == 0 { t0.min(t) } else { t });
            levels.push(v);
        }
    }
    if levels.len() < 2 {
        let v = levels.first().copied().unwrap_or(0.0);
        return MonotoneCurve::step(vec![t0], vec![v]);
    }
    let end = t1.max(*times.last().unwrap());
    let mids: Vec<f64> = (0..starts.len())
        .map(|b| 0.5 * (starts[b] + starts.get(b + 1).copied().unwrap_or(end)))
        .collect();
    monotone_hermite(&mids, &levels)
}

/// Fit the isotonic step on the data as given. The caller supplies the rows
/// appropriate to the mode (all rows for `extended`, respondents otherwise)
/// and fitted nuisances; in `npmle` mode `nuisances.mu` is replaced by the
/// pooled mean and the conditional ratio by 1, with only the marginal
/// density of `nuisances.g` used.
pub fn fit_cir(d: &Dataset, cfg: &CIRConfig, nuisances: Nuisances<'_>) -> Result<CIREstimate> {
    cfg.validate(d.b0(), d.c0())?;
    let obs = d.observations();
    let n = obs.len();
    if n == 0 {
        return Err(Error::InsufficientSupport { found: 0 });
    }
    let pooled = ConstantRegression(obs.iter().map(|o| o.delta_f64()).sum::<f64>() / n as f64);
    let marginal = MarginalOnly(nuisances.g);
    let (mu, g): (&dyn OutcomeRegression, &dyn DensityRatio) = match cfg.mode {
        Mode::Npmle => (&pooled, &marginal),
        _ => (nuisances.mu, nuisances.g),
    };

    let ys: Vec<f64> = obs.iter().map(|o| o.y).collect();
    let fcdf = EmpiricalCdf::new(&ys)?;
    let window: Vec<f64> = fcdf
        .support()
        .iter()
        .copied()
        .filter(|&u| u >= cfg.t0 && u <= cfg.t1)
        .collect();
    if window.len() < 3 {
        return Err(Error::InsufficientSupport { found: window.len() });
    }
    let ws = UniqueRows::new(obs.iter().map(|o| o.w.as_slice()));

    // mu on (distinct Y <= t1) x (distinct W)
    let ygrid: Vec<f64> = fcdf.support().iter().copied().take_while(|&u| u <= cfg.t1).collect();
    let table: Vec<Vec<f64>> = ygrid
        .par_iter()
        .map(|&y| ws.rows.iter().map(|w| mu.predict(y, w)).collect())
        .collect();
    let theta_bar: Vec<f64> = table
        .iter()
        .map(|row| row.iter().zip(&ws.counts).map(|(m, &c)| m * c as f64).sum::<f64>() / n as f64)
        .collect();

    // pseudo-outcomes, summed by distinct Y
    let mut pseudo_sum = vec![0.0; ygrid.len()];
    for (i, o) in obs.iter().enumerate() {
        if o.y > cfg.t1 {
            continue;
        }
        let k = ygrid.partition_point(|&u| u < o.y);
        let m = table[k][ws.index[i]];
        pseudo_sum[k] += (o.delta_f64() - m) / g.predict_g(o.y, &o.w) + theta_bar[k];
    }
    let mut cusum = 0.0;
    let mut gamma_at = Vec::with_capacity(ygrid.len());
    for s in &pseudo_sum {
        cusum += s / n as f64;
        gamma_at.push(cusum);
    }
    let first = ygrid.partition_point(|&u| u < cfg.t0);
    let mut points = vec![(0.0, 0.0)];
    for k in first..ygrid.len() {
        points.push((fcdf.eval(ygrid[k]), gamma_at[k]));
    }
    let psi = gcm_left_derivative(&points)?;
    let window_theta: Vec<f64> = psi.values().iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let theta_of = |t: f64| -> f64 {
        let k = window.partition_point(|&u| u <= t);
        window_theta[k.saturating_sub(1)]
    };

    let times = if cfg.eval_times.is_empty() {
        quantile_grid(&fcdf, cfg.t0, cfg.t1, 100)
    } else {
        cfg.eval_times.clone()
    };
    let smooth = smooth_step(&window, &window_theta, cfg.t0, cfg.t1)?;
    let h = cfg.step(n);
    let ecdf_bw = (cfg.t1 - cfg.t0) / 20.0;

    let mut est = CIREstimate {
        mode: cfg.mode,
        n,
        n_respondents: d.n_respondents(),
        t0: cfg.t0,
        t1: cfg.t1,
        times: times.clone(),
        theta: Vec::with_capacity(times.len()),
        survival: Vec::with_capacity(times.len()),
        tau: Vec::with_capacity(times.len()),
        ci_lower: Vec::with_capacity(times.len()),
        ci_upper: Vec::with_capacity(times.len()),
        flags: Vec::with_capacity(times.len()),
        window_times: window.clone(),
        window_theta: window_theta.clone(),
    };
    for &t in &times {
        let theta = theta_of(t);
        let f = match cfg.marginal_density {
            MarginalDensity::Histogram => g.predict_f(t),
            MarginalDensity::EcdfDifference => (fcdf.eval(t + ecdf_bw) - fcdf.eval(t - ecdf_bw)) / (2.0 * ecdf_bw),
        };
        let derivative = quantile_secant(&smooth, &fcdf, t, h);
        let sf = match cfg.mode {
            // binomial variance of the NPMLE at t
            Mode::Npmle => scale_factor_with(&ws, &ConstantRegression(theta), g, derivative, f, t, cfg.tau_floor)?,
            _ => scale_factor_with(&ws, mu, g, derivative, f, t, cfg.tau_floor)?,
        };
        let (lo, hi) = chernoff_ci(theta, sf.tau, n, cfg.chernoff_q975);
        est.theta.push(theta);
        est.survival.push(1.0 - theta);
        est.tau.push(sf.tau);
        est.ci_lower.push(1.0 - hi);
        est.ci_upper.push(1.0 - lo);
        est.flags.push(if sf.floored { FLAG_TAU_FLOORED.to_string() } else { String::new() });
    }
    Ok(est)
}

/// Nuisance learner settings for [`estimate_cir`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct NuisanceSpec {
    pub ensemble: EnsembleSpec,
    pub density: DensitySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirFit {
    pub estimate: CIREstimate,
    pub mu: Option<MuSummary>,
    pub density: DensitySummary,
}

/// Fit the nuisances the mode calls for, then [`fit_cir`].
pub fn estimate_cir(d: &Dataset, cfg: &CIRConfig, spec: &NuisanceSpec, seed: u64) -> Result<CirFit> {
    cfg.validate(d.b0(), d.c0())?;
    let mu_seed = rng::derive_seed(seed, &[rng::tag::LEARNER]);
    let g_seed = rng::derive_seed(seed, &[rng::tag::DENSITY]);
    match cfg.mode {
        Mode::Extended | Mode::CompleteCase => {
            let data = if cfg.mode == Mode::Extended { d.clone() } else { d.respondents() };
            let mu = fit_mu(&data, &spec.ensemble, mu_seed)?;
            let g = fit_density(&data, &spec.density, g_seed)?;
            let estimate = fit_cir(&data, cfg, Nuisances { mu: &mu, g: &g })?;
            Ok(CirFit {
                estimate,
                mu: Some(mu.summary().clone()),
                density: g.summary().clone(),
            })
        }
        Mode::Npmle => {
            let data = d.respondents();
            let dspec = DensitySpec {
                covariates: false,
                ..spec.density.clone()
            };
            let g = fit_density(&data, &dspec, g_seed)?;
            let estimate = fit_cir(&data, cfg, Nuisances { mu: &ConstantRegression(0.5), g: &g })?;
            Ok(CirFit {
                estimate,
                mu: None,
                density: g.summary().clone(),
            })
        }
    }
}

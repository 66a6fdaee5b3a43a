//! Monte Carlo harness: the Weibull data-generating process with coarsened
//! response times, the three nonresponse scenarios, and bias/coverage studies
//! for the isotonic estimators and the bootstrap Cox fit.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cir::{estimate_cir, fit_cir, fmt_num, CIRConfig, Mode, Nuisances, NuisanceSpec};
use crate::cox::{bootstrap_cox, fit_cox, BootstrapOptions, CoxOptions, Resample};
use crate::data::{CovariateGroup, Dataset, Observation};
use crate::error::{invalid, Result};
use crate::nuisance::{DensityRatio, OutcomeRegression};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DGPSpec {
    /// Each covariate is uniform on {-1, 1}.
    pub dim: usize,
    pub shape: f64,
    /// Coefficients of the log Weibull scale.
    pub scale_coef: Vec<f64>,
    /// Number of marginal-quantile atoms response times are snapped to.
    pub grid_size: usize,
    pub c0: f64,
}

impl DGPSpec {
    pub fn new(c0: f64) -> Self {
        Self {
            dim: 3,
            shape: 0.75,
            scale_coef: vec![0.4, -0.2, 0.0],
            grid_size: 50,
            c0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape > 0.0) || self.grid_size < 2 || self.scale_coef.len() != self.dim || !(self.c0 > 0.0) {
            return Err(invalid("DGP needs shape > 0, grid size >= 2, dim coefficients and c0 > 0"));
        }
        Ok(())
    }

    pub fn scale(&self, w: &[f64]) -> f64 {
        w.iter().zip(&self.scale_coef).map(|(a, b)| a * b).sum::<f64>().exp()
    }

    /// All covariate vectors, each with probability `2^-dim`.
    pub fn support(&self) -> Vec<Vec<f64>> {
        (0..1usize << self.dim)
            .map(|m| (0..self.dim).map(|j| if m >> j & 1 == 1 { 1.0 } else { -1.0 }).collect())
            .collect()
    }

    pub fn conditional_cdf(&self, t: f64, w: &[f64]) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        -(-(t / self.scale(w)).powf(self.shape)).exp_m1()
    }

    fn conditional_density(&self, t: f64, w: &[f64]) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let s = self.scale(w);
        let z = (t / s).powf(self.shape);
        self.shape / t * z * (-z).exp()
    }

    /// Marginal CDF of `T` (and of the uncoarsened response time).
    pub fn marginal_cdf(&self, t: f64) -> f64 {
        let sup = self.support();
        sup.iter().map(|w| self.conditional_cdf(t, w)).sum::<f64>() / sup.len() as f64
    }

    pub fn marginal_density(&self, t: f64) -> f64 {
        let sup = self.support();
        sup.iter().map(|w| self.conditional_density(t, w)).sum::<f64>() / sup.len() as f64
    }

    /// `psi(t) = P(T > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        1.0 - self.marginal_cdf(t)
    }

    pub fn marginal_quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0 - 1e-15);
        let mut hi = 1.0;
        while self.marginal_cdf(hi) < p {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.marginal_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Response-time atoms at marginal quantiles `(k - 1/2) / grid_size`.
    pub fn grid(&self) -> Vec<f64> {
        (1..=self.grid_size)
            .map(|k| self.marginal_quantile((k as f64 - 0.5) / self.grid_size as f64))
            .collect()
    }

    fn snap(grid: &[f64], y: f64) -> f64 {
        let k = grid.partition_point(|&a| a < y);
        if k == 0 {
            grid[0]
        } else if k == grid.len() || y - grid[k - 1] <= grid[k] - y {
            grid[k - 1]
        } else {
            grid[k]
        }
    }

    /// Largest atom not exceeding `t`, if any.
    fn atom_floor(grid: &[f64], t: f64) -> Option<f64> {
        let k = grid.partition_point(|&a| a <= t);
        (k > 0).then(|| grid[k - 1])
    }

    /// Probability that the snapped response time is atom `k` given `w`.
    fn atom_prob(&self, grid: &[f64], k: usize, w: &[f64]) -> f64 {
        let lo = if k == 0 { 0.0 } else { 0.5 * (grid[k - 1] + grid[k]) };
        let hi = if k + 1 == grid.len() { f64::INFINITY } else { 0.5 * (grid[k] + grid[k + 1]) };
        let up = if hi.is_finite() { self.conditional_cdf(hi, w) } else { 1.0 };
        up - self.conditional_cdf(lo, w)
    }

    /// The distribution function the estimators target once response times
    /// are coarsened: `P(T <= a(t))` with `a(t)` the largest atom `<= t`.
    pub fn coarsened_cdf(&self, grid: &[f64], t: f64) -> f64 {
        Self::atom_floor(grid, t).map_or(0.0, |a| self.marginal_cdf(a))
    }

    /// `Gamma_0(y0) = sum over atoms a <= y0 (a < c0) of P(Y = a) P(T <= a)`.
    pub fn gamma0(&self, grid: &[f64], y0: f64) -> f64 {
        let sup = self.support();
        grid.iter()
            .enumerate()
            .filter(|&(_, &a)| a <= y0 && a < self.c0)
            .map(|(k, &a)| {
                let pa = sup.iter().map(|w| self.atom_prob(grid, k, w)).sum::<f64>() / sup.len() as f64;
                pa * self.marginal_cdf(a)
            })
            .sum()
    }

    /// Cox coefficients implied by the Weibull scale model:
    /// hazard multiplier `exp(-shape * coef . w)`.
    pub fn ph_beta(&self) -> Vec<f64> {
        self.scale_coef.iter().map(|c| -self.shape * c).collect()
    }

    /// Baseline cumulative hazard `t^shape` matching [`DGPSpec::ph_beta`].
    pub fn baseline_cumhaz(&self, t: f64) -> f64 {
        t.max(0.0).powf(self.shape)
    }

    /// Among respondents, the probability of a response time above `t`.
    pub fn respondent_tail(&self, grid: &[f64], t: f64) -> f64 {
        let sup = self.support();
        let mut above = 0.0;
        let mut resp = 0.0;
        for (k, &a) in grid.iter().enumerate() {
            if a >= self.c0 {
                continue;
            }
            let pa = sup.iter().map(|w| self.atom_prob(grid, k, w)).sum::<f64>() / sup.len() as f64;
            resp += pa;
            if a > t {
                above += pa;
            }
        }
        above / resp
    }

    /// Probability that a subject does not respond by `c0`.
    pub fn nonresponse(&self, grid: &[f64]) -> f64 {
        let sup = self.support();
        grid.iter()
            .enumerate()
            .filter(|&(_, &a)| a >= self.c0)
            .map(|(k, _)| sup.iter().map(|w| self.atom_prob(grid, k, w)).sum::<f64>() / sup.len() as f64)
            .sum()
    }

    pub fn covariate_names(&self) -> Vec<String> {
        (1..=self.dim).map(|j| format!("w{j}")).collect()
    }
}

/// Latent event time and snapped response time for one subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub t: f64,
    pub y_star: f64,
}

/// Draw `n` subjects. Response times are snapped to the atom grid before
/// the cutoff is applied.
pub fn generate(dgp: &DGPSpec, n: usize, seed: u64) -> Result<(Dataset, Vec<Latent>)> {
    dgp.validate()?;
    if n == 0 {
        return Err(invalid("generate needs n >= 1"));
    }
    let grid = dgp.grid();
    let mut rng = rng::stream(seed, &[tag::OUTCOME]);
    let mut obs = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);
    let inv = 1.0 / dgp.shape;
    for _ in 0..n {
        let w: Vec<f64> = (0..dgp.dim).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let s = dgp.scale(&w);
        let t = s * (-(1.0 - rng.random::<f64>()).ln()).powf(inv);
        let y_raw = s * (-(1.0 - rng.random::<f64>()).ln()).powf(inv);
        let y_star = DGPSpec::snap(&grid, y_raw);
        let respond = y_star < dgp.c0;
        let y = y_star.min(dgp.c0);
        obs.push(Observation::new(w, y, respond && t <= y));
        latent.push(Latent { t, y_star });
    }
    Ok((Dataset::new(obs, dgp.c0, 0.0, dgp.covariate_names())?, latent))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    S1,
    S2,
    S3,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::S1, Scenario::S2, Scenario::S3];

    pub fn c0(self) -> f64 {
        match self {
            Scenario::S1 => 2.1,
            Scenario::S2 => 1.8,
            Scenario::S3 => 1.65,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" | "1" => Ok(Scenario::S1),
            "S2" | "2" => Ok(Scenario::S2),
            "S3" | "3" => Ok(Scenario::S3),
            _ => Err(invalid(format!("unknown scenario {s:?}"))),
        }
    }
}

pub const SIM_T0: f64 = 0.02;
pub const SIM_T1: f64 = 1.5;
pub const SIM_GRID_POINTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub c0: f64,
    pub n: usize,
    pub t0: f64,
    pub t1: f64,
    pub reps: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            scenario,
            c0: scenario.c0(),
            n,
            t0: SIM_T0,
            t1: SIM_T1,
            reps,
            seed,
        }
    }

    pub fn dgp(&self) -> DGPSpec {
        DGPSpec::new(self.c0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.t0 && self.t0 < self.t1 && self.t1 < self.c0) {
            return Err(invalid("scenario needs 0 < t0 < t1 < c0"));
        }
        if self.n == 0 {
            return Err(invalid("scenario needs n >= 1"));
        }
        Ok(())
    }

    /// Evaluation times evenly spaced in the analytic marginal quantile.
    pub fn eval_grid(&self) -> Vec<f64> {
        let dgp = self.dgp();
        let (p0, p1) = (dgp.marginal_cdf(self.t0), dgp.marginal_cdf(self.t1));
        (0..SIM_GRID_POINTS)
            .map(|k| match k {
                0 => self.t0,
                k if k + 1 == SIM_GRID_POINTS => self.t1,
                k => dgp.marginal_quantile(p0 + (p1 - p0) * k as f64 / (SIM_GRID_POINTS - 1) as f64),
            })
            .collect()
    }

    fn replicate_seed(&self, r: usize) -> u64 {
        rng::derive_seed(self.seed, &[tag::REPLICATE, self.n as u64, r as u64])
    }
}

/// True nuisance functions of the simulation design.
pub struct OracleNuisances {
    dgp: DGPSpec,
    grid: Vec<f64>,
}

impl OracleNuisances {
    pub fn new(dgp: &DGPSpec) -> Self {
        Self {
            grid: dgp.grid(),
            dgp: dgp.clone(),
        }
    }
}

impl OutcomeRegression for OracleNuisances {
    fn predict(&self, y: f64, w: &[f64]) -> f64 {
        if y >= self.dgp.c0 {
            return 0.0;
        }
        self.dgp.conditional_cdf(y, w)
    }
}

impl DensityRatio for OracleNuisances {
    fn predict_g(&self, y: f64, w: &[f64]) -> f64 {
        if y >= self.dgp.c0 {
            return 1.0;
        }
        let k = self.grid.partition_point(|&a| a < y).min(self.grid.len() - 1);
        let sup = self.dgp.support();
        let marginal = sup.iter().map(|v| self.dgp.atom_prob(&self.grid, k, v)).sum::<f64>() / sup.len() as f64;
        self.dgp.atom_prob(&self.grid, k, w) / marginal
    }

    fn predict_f(&self, y: f64) -> f64 {
        self.dgp.marginal_density(y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NuisanceSource {
    Estimated(NuisanceSpec),
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirCell {
    pub scenario: Scenario,
    pub mode: Mode,
    pub n: usize,
    pub reps_requested: usize,
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub grid: Vec<f64>,
    /// Survival at the coarsened truth `1 - P(T <= a(t))`.
    pub truth: Vec<f64>,
    /// Survival of the uncoarsened event time.
    pub truth_continuous: Vec<f64>,
    /// Mean of estimated minus true survival.
    pub bias: Vec<f64>,
    pub bias_continuous: Vec<f64>,
    pub coverage: Vec<f64>,
    pub coverage_continuous: Vec<f64>,
    pub rmse: Vec<f64>,
    pub integrated_abs_bias: f64,
    pub integrated_abs_bias_continuous: f64,
    /// Mean coverage over the interior 80% of grid points.
    pub interior_coverage: f64,
    pub interior_coverage_continuous: f64,
}

/// Mean over the grid points with index in `[len/10, len - len/10)`.
pub fn interior_mean(v: &[f64]) -> f64 {
    let cut = v.len() / 10;
    let inner = &v[cut..v.len() - cut];
    inner.iter().sum::<f64>() / inner.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxCell {
    pub scenario: Scenario,
    pub n: usize,
    pub b: usize,
    pub reps_requested: usize,
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub truth: Vec<f64>,
    pub mean_beta: Vec<f64>,
    /// Monte Carlo standard error of `mean_beta`.
    pub mc_se: Vec<f64>,
    pub wald_coverage: Vec<f64>,
    pub percentile_coverage: Vec<f64>,
    /// Too few bootstrap replicates for a meaningful percentile interval.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    pub seed: u64,
    pub cir: Vec<CirCell>,
    pub cox: Vec<CoxCell>,
    pub errors: Vec<String>,
}

impl MetricsReport {
    pub fn is_empty(&self) -> bool {
        self.cir.is_empty() && self.cox.is_empty()
    }

    pub fn write_cir_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scenario",
            "mode",
            "n",
            "grid_point",
            "time",
            "truth",
            "bias",
            "coverage",
            "rmse",
            "truth_continuous",
            "bias_continuous",
            "coverage_continuous",
        ])?;
        for c in &self.cir {
            for k in 0..c.grid.len() {
                w.write_record([
                    c.scenario.name().to_string(),
                    c.mode.to_string(),
                    c.n.to_string(),
                    k.to_string(),
                    fmt_num(c.grid[k]),
                    fmt_num(c.truth[k]),
                    fmt_num(c.bias[k]),
                    fmt_num(c.coverage[k]),
                    fmt_num(c.rmse[k]),
                    fmt_num(c.truth_continuous[k]),
                    fmt_num(c.bias_continuous[k]),
                    fmt_num(c.coverage_continuous[k]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_cox_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scenario",
            "n",
            "b",
            "coefficient",
            "truth",
            "mean_beta",
            "mc_se",
            "wald_coverage",
            "percentile_coverage",
        ])?;
        for c in &self.cox {
            for j in 0..c.truth.len() {
                w.write_record([
                    c.scenario.name().to_string(),
                    c.n.to_string(),
                    c.b.to_string(),
                    format!("beta{}", j + 1),
                    fmt_num(c.truth[j]),
                    fmt_num(c.mean_beta[j]),
                    fmt_num(c.mc_se[j]),
                    fmt_num(c.wald_coverage[j]),
                    fmt_num(c.percentile_coverage[j]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_cir_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_cir_csv(std::fs::File::create(path)?)
    }

    pub fn write_cox_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_cox_csv(std::fs::File::create(path)?)
    }
}

/// Survival estimates on the grid, or `None` if the fit failed.
type ReplicateResult = std::result::Result<Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>, String>;

/// Bias and coverage of the requested modes over `spec.reps` replicates.
/// Every mode is fit on the same generated datasets.
pub fn run_cir_study(spec: &ScenarioSpec, modes: &[Mode], nuisance: &NuisanceSource) -> Result<MetricsReport> {
    spec.validate()?;
    let mut report = MetricsReport {
        seed: spec.seed,
        ..Default::default()
    };
    if spec.reps == 0 {
        report.errors.push("zero replicates requested".into());
        return Ok(report);
    }
    let dgp = spec.dgp();
    let atoms = dgp.grid();
    let grid = spec.eval_grid();
    let truth: Vec<f64> = grid.iter().map(|&t| 1.0 - dgp.coarsened_cdf(&atoms, t)).collect();
    let truth_cont: Vec<f64> = grid.iter().map(|&t| dgp.survival(t)).collect();
    let oracle = OracleNuisances::new(&dgp);

    let results: Vec<ReplicateResult> = (0..spec.reps)
        .into_par_iter()
        .map(|r| {
            let seed = spec.replicate_seed(r);
            let (d, _) = generate(&dgp, spec.n, seed).map_err(|e| e.to_string())?;
            modes
                .iter()
                .map(|&mode| {
                    let mut cfg = CIRConfig::new(spec.t0, spec.t1, mode);
                    cfg.eval_times = grid.clone();
                    let est = match nuisance {
                        NuisanceSource::Estimated(ns) => estimate_cir(&d, &cfg, ns, seed).map(|f| f.estimate),
                        NuisanceSource::Oracle => {
                            let data = if mode == Mode::Extended { d.clone() } else { d.respondents() };
                            fit_cir(&data, &cfg, Nuisances { mu: &oracle, g: &oracle })
                        }
                    }
                    .map_err(|e| format!("replicate {r}, {mode}: {e}"))?;
                    Ok((est.survival, est.ci_lower, est.ci_upper))
                })
                .collect()
        })
        .collect();

    let ok: Vec<&Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    for e in results.iter().filter_map(|r| r.as_ref().err()) {
        report.errors.push(e.clone());
    }
    let m = grid.len();
    for (mi, &mode) in modes.iter().enumerate() {
        let reps = ok.len() as f64;
        let mut cell = CirCell {
            scenario: spec.scenario,
            mode,
            n: spec.n,
            reps_requested: spec.reps,
            reps_ok: ok.len(),
            reps_failed: spec.reps - ok.len(),
            grid: grid.clone(),
            truth: truth.clone(),
            truth_continuous: truth_cont.clone(),
            bias: vec![0.0; m],
            bias_continuous: vec![0.0; m],
            coverage: vec![0.0; m],
            coverage_continuous: vec![0.0; m],
            rmse: vec![0.0; m],
            integrated_abs_bias: f64::NAN,
            integrated_abs_bias_continuous: f64::NAN,
            interior_coverage: f64::NAN,
            interior_coverage_continuous: f64::NAN,
        };
        if ok.is_empty() {
            report.cir.push(cell);
            continue;
        }
        for rep in &ok {
            let (s, lo, hi) = &rep[mi];
            for k in 0..m {
                cell.bias[k] += (s[k] - truth[k]) / reps;
                cell.bias_continuous[k] += (s[k] - truth_cont[k]) / reps;
                cell.rmse[k] += (s[k] - truth[k]).powi(2) / reps;
                if lo[k] <= truth[k] && truth[k] <= hi[k] {
                    cell.coverage[k] += 1.0 / reps;
                }
                if lo[k] <= truth_cont[k] && truth_cont[k] <= hi[k] {
                    cell.coverage_continuous[k] += 1.0 / reps;
                }
            }
        }
        cell.rmse.iter_mut().for_each(|v| *v = v.sqrt());
        cell.integrated_abs_bias = cell.bias.iter().map(|b| b.abs()).sum::<f64>() / m as f64;
        cell.integrated_abs_bias_continuous = cell.bias_continuous.iter().map(|b| b.abs()).sum::<f64>() / m as f64;
        cell.interior_coverage = interior_mean(&cell.coverage);
        cell.interior_coverage_continuous = interior_mean(&cell.coverage_continuous);
        report.cir.push(cell);
    }
    Ok(report)
}

/// Percentile intervals need at least one replicate beyond each 2.5% tail.
pub const MIN_PERCENTILE_B: usize = 40;

fn mean_and_se(rows: &[Vec<f64>], p: usize) -> (Vec<f64>, Vec<f64>) {
    let r = rows.len() as f64;
    let mean: Vec<f64> = (0..p).map(|j| rows.iter().map(|b| b[j]).sum::<f64>() / r).collect();
    let se = (0..p)
        .map(|j| {
            if rows.len() < 2 {
                return f64::NAN;
            }
            let v = rows.iter().map(|b| (b[j] - mean[j]).powi(2)).sum::<f64>() / (r - 1.0);
            (v / r).sqrt()
        })
        .collect();
    (mean, se)
}

/// Point estimates only (`b = 0` in the returned cell).
pub fn run_cox_study(spec: &ScenarioSpec) -> Result<CoxCell> {
    spec.validate()?;
    let dgp = spec.dgp();
    let truth = dgp.ph_beta();
    let fits: Vec<Option<Vec<f64>>> = (0..spec.reps)
        .into_par_iter()
        .map(|r| {
            let (d, _) = generate(&dgp, spec.n, spec.replicate_seed(r)).ok()?;
            let f = fit_cox(&d, &CoxOptions::default()).ok()?;
            (f.converged && !f.separated).then_some(f.beta)
        })
        .collect();
    let ok: Vec<Vec<f64>> = fits.into_iter().flatten().collect();
    let (mean_beta, mc_se) = mean_and_se(&ok, truth.len());
    Ok(CoxCell {
        scenario: spec.scenario,
        n: spec.n,
        b: 0,
        reps_requested: spec.reps,
        reps_ok: ok.len(),
        reps_failed: spec.reps - ok.len(),
        truth,
        mean_beta,
        mc_se,
        wald_coverage: Vec::new(),
        percentile_coverage: Vec::new(),
        degenerate: false,
    })
}

/// Wald and percentile bootstrap coverage for every `(n, B)` cell.
pub fn run_bootstrap_study(
    scenario: Scenario,
    ns: &[usize],
    bs: &[usize],
    reps: usize,
    seed: u64,
) -> Result<MetricsReport> {
    if ns.is_empty() || bs.is_empty() || bs.iter().any(|&b| b < 2) {
        return Err(invalid("bootstrap study needs nonempty n and B lists with B >= 2"));
    }
    let mut report = MetricsReport {
        seed,
        ..Default::default()
    };
    if reps == 0 {
        report.errors.push("zero replicates requested".into());
        return Ok(report);
    }
    let groups: Vec<CovariateGroup> = Vec::new();
    for &n in ns {
        let spec = ScenarioSpec::new(scenario, n, reps, seed);
        spec.validate()?;
        let dgp = spec.dgp();
        let truth = dgp.ph_beta();
        let p = truth.len();
        for &b in bs {
            let outcomes: Vec<std::result::Result<(Vec<f64>, Vec<bool>, Vec<bool>), String>> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let rs = spec.replicate_seed(r);
                    let (d, _) = generate(&dgp, n, rs).map_err(|e| e.to_string())?;
                    let fit = fit_cox(&d, &CoxOptions::default()).map_err(|e| e.to_string())?;
                    if !fit.converged || fit.separated {
                        return Err(format!("n = {n}, B = {b}, replicate {r}: point fit failed"));
                    }
                    let opts = BootstrapOptions {
                        b,
                        seed: rng::derive_seed(rs, &[tag::BOOTSTRAP]),
                        resample: Resample::FullCohort,
                        cox: CoxOptions::default(),
                    };
                    let s = bootstrap_cox(&d, &fit, &opts, &groups)
                        .map_err(|e| format!("n = {n}, B = {b}, replicate {r}: {e}"))?;
                    let wald = (0..p).map(|j| s.wald_ci[j].0 <= truth[j] && truth[j] <= s.wald_ci[j].1).collect();
                    let pct = (0..p)
                        .map(|j| s.percentile_ci[j].0 <= truth[j] && truth[j] <= s.percentile_ci[j].1)
                        .collect();
                    Ok((fit.beta, wald, pct))
                })
                .collect();
            let ok: Vec<&(Vec<f64>, Vec<bool>, Vec<bool>)> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
            report.errors.extend(outcomes.iter().filter_map(|o| o.as_ref().err().cloned()));
            let betas: Vec<Vec<f64>> = ok.iter().map(|o| o.0.clone()).collect();
            let (mean_beta, mc_se) = mean_and_se(&betas, p);
            let rate = |sel: &dyn Fn(&(Vec<f64>, Vec<bool>, Vec<bool>)) -> &Vec<bool>| -> Vec<f64> {
                (0..p)
                    .map(|j| ok.iter().filter(|o| sel(o)[j]).count() as f64 / ok.len().max(1) as f64)
                    .collect()
            };
            report.cox.push(CoxCell {
                scenario,
                n,
                b,
                reps_requested: reps,
                reps_ok: ok.len(),
                reps_failed: reps - ok.len(),
                truth: truth.clone(),
                mean_beta,
                mc_se,
                wald_coverage: rate(&|o| &o.1),
                percentile_coverage: rate(&|o| &o.2),
                degenerate: b < MIN_PERCENTILE_B,
            });
        }
    }
    Ok(report)
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use currstat_core::cir::quantile_grid;
use currstat_core::data::CovariateSchema;
use currstat_core::nuisance::{DensitySummary, MuSummary};
use currstat_core::sim::{run_bootstrap_study, run_cir_study, CoxCell, NuisanceSource, ScenarioSpec};
use currstat_core::{
    bootstrap_cox, estimate_cir, fit_cox, ingest_csv, BootstrapOptions, BootstrapSummary, CIRConfig, CIREstimate,
    CoxFit, CoxOptions, Dataset, EmpiricalCdf, IngestReport, MetricsReport, Mode,
};

use crate::artifacts::{sha256_file, Artifacts, FileEntry, Provenance};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::table::{cox_table, write_cox_table};

pub const HISTOGRAM_BINS: usize = 30;

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.10}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestDoc {
    pub provenance: Provenance,
    pub report: IngestReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurvivalDoc {
    pub provenance: Provenance,
    pub config: serde_json::Value,
    pub mode: Mode,
    pub estimate: CIREstimate,
    pub mu: Option<MuSummary>,
    pub density: DensitySummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxDoc {
    pub provenance: Provenance,
    pub config: serde_json::Value,
    pub b: usize,
    pub fit: CoxFit,
    pub bootstrap: BootstrapSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CirCellSummary {
    pub scenario: String,
    pub mode: Mode,
    pub n: usize,
    pub reps_requested: usize,
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub integrated_abs_bias: Option<f64>,
    pub interior_coverage: Option<f64>,
    pub integrated_abs_bias_continuous: Option<f64>,
    pub interior_coverage_continuous: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxCellSummary {
    pub scenario: String,
    pub n: usize,
    pub b: usize,
    pub reps_requested: usize,
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub degenerate: bool,
    pub truth: Vec<f64>,
    pub mean_beta: Vec<Option<f64>>,
    pub mc_se: Vec<Option<f64>>,
    pub wald_coverage: Vec<Option<f64>>,
    pub percentile_coverage: Vec<Option<f64>>,
}

impl From<&CoxCell> for CoxCellSummary {
    fn from(c: &CoxCell) -> Self {
        let opt = |v: &[f64]| v.iter().map(|&x| finite(x)).collect();
        Self {
            scenario: c.scenario.name().to_string(),
            n: c.n,
            b: c.b,
            reps_requested: c.reps_requested,
            reps_ok: c.reps_ok,
            reps_failed: c.reps_failed,
            degenerate: c.degenerate,
            truth: c.truth.clone(),
            mean_beta: opt(&c.mean_beta),
            mc_se: opt(&c.mc_se),
            wald_coverage: opt(&c.wald_coverage),
            percentile_coverage: opt(&c.percentile_coverage),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSummary {
    pub provenance: Provenance,
    pub config: serde_json::Value,
    pub cir: Vec<CirCellSummary>,
    pub cox: Vec<CoxCellSummary>,
    pub errors: Vec<String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn existing(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(CliError::Config(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

fn load(cfg: &RunConfig) -> Result<(Dataset, IngestReport, CovariateSchema, String)> {
    let s = &cfg.settings;
    let schema_path = s.schema.as_deref().expect("resolved");
    let input = s.input.as_deref().expect("resolved");
    existing(schema_path, "schema")?;
    existing(input, "input")?;
    let schema = CovariateSchema::from_json_path(schema_path)?;
    let (d, report) = ingest_csv(input, &schema, s.c0.expect("resolved"), s.b0.unwrap_or(0.0))?;
    Ok((d, report, schema, sha256_file(input)?))
}

pub fn fit_cir_cmd(cfg: &RunConfig) -> Result<Vec<FileEntry>> {
    let (d, report, _, input_hash) = load(cfg)?;
    let s = &cfg.settings;
    let (t0, t1) = (s.t0.expect("resolved"), s.t1.expect("resolved"));
    let modes = cfg.modes()?;
    let spec = cfg.nuisance_spec()?;
    let ys: Vec<f64> = d.observations().iter().map(|o| o.y).collect();
    let fcdf = EmpiricalCdf::new(&ys)?;
    let grid = quantile_grid(&fcdf, t0, t1, s.grid_points.unwrap_or(100));

    let mut out = Artifacts::create(&cfg.out_dir(), cfg, Provenance::new(cfg, Some(input_hash)))?;
    out.write_json(
        "ingest_report.json",
        &IngestDoc {
            provenance: out.provenance().clone(),
            report: report.clone(),
        },
    )?;

    let mut fits = Vec::new();
    for &mode in &modes {
        let mut c = CIRConfig::new(t0, t1, mode);
        c.eval_times = grid.clone();
        c.derivative_step = s.derivative_step;
        c.marginal_density = cfg.marginal_density()?;
        let fit = estimate_cir(&d, &c, &spec, cfg.seed()).map_err(|e| match e {
            currstat_core::Error::InvalidArgument(m) => CliError::Estimation(format!("{mode}: {m}")),
            other => other.into(),
        })?;
        out.write_csv(&format!("survival_{mode}.csv"), |buf| Ok(fit.estimate.write_csv(buf)?))?;
        let doc = SurvivalDoc {
            provenance: out.provenance().clone(),
            config: out.config().clone(),
            mode,
            estimate: fit.estimate.clone(),
            mu: fit.mu.clone(),
            density: fit.density.clone(),
        };
        out.write_json(&format!("survival_{mode}.json"), &doc)?;
        fits.push(fit);
    }

    out.write_csv("survival_plot.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["mode", "time", "survival", "ci_lower", "ci_upper"])?;
        for f in &fits {
            let e = &f.estimate;
            for k in 0..e.times.len() {
                w.write_record([
                    e.mode.to_string(),
                    fmt(e.times[k]),
                    fmt(e.survival[k]),
                    fmt(e.ci_lower[k]),
                    fmt(e.ci_upper[k]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;

    let (b0, c0) = (d.b0(), d.c0());
    let width = (c0 - b0) / HISTOGRAM_BINS as f64;
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for o in d.observations().iter().filter(|o| d.is_respondent(o)) {
        let k = (((o.y - b0) / width).floor() as usize).min(HISTOGRAM_BINS - 1);
        counts[k] += 1;
    }
    out.write_csv("response_time_histogram.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["bin_lower", "bin_upper", "respondents"])?;
        for (k, c) in counts.iter().enumerate() {
            w.write_record([fmt(b0 + k as f64 * width), fmt(b0 + (k + 1) as f64 * width), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.finish()
}

pub fn fit_cox_cmd(cfg: &RunConfig) -> Result<Vec<FileEntry>> {
    let (d, report, schema, input_hash) = load(cfg)?;
    let b = cfg.settings.b.unwrap_or(1000);
    let mut out = Artifacts::create(&cfg.out_dir(), cfg, Provenance::new(cfg, Some(input_hash)))?;
    out.write_json(
        "ingest_report.json",
        &IngestDoc {
            provenance: out.provenance().clone(),
            report,
        },
    )?;
    let fit = fit_cox(&d, &CoxOptions::default())?;
    if !fit.converged {
        return Err(CliError::Estimation(format!("Cox fit did not converge in {} iterations", fit.iterations)));
    }
    let groups = schema.groups();
    let opts = BootstrapOptions {
        b,
        seed: cfg.seed(),
        resample: cfg.resample()?,
        cox: CoxOptions::default(),
    };
    let boot = bootstrap_cox(&d, &fit, &opts, &groups)?;
    let rows = cox_table(&schema, &fit, &boot);
    out.write_csv("cox_table.csv", |buf| write_cox_table(&rows, buf))?;
    out.write_csv("cox_coefficients.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "covariate",
            "beta",
            "se",
            "wald_lower",
            "wald_upper",
            "percentile_lower",
            "percentile_upper",
            "p_value",
        ])?;
        for (j, name) in fit.covariate_names.iter().enumerate() {
            w.write_record([
                name.clone(),
                fmt(boot.beta[j]),
                fmt(boot.se[j]),
                fmt(boot.wald_ci[j].0),
                fmt(boot.wald_ci[j].1),
                fmt(boot.percentile_ci[j].0),
                fmt(boot.percentile_ci[j].1),
                fmt(boot.p_values[j]),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let doc = CoxDoc {
        provenance: out.provenance().clone(),
        config: out.config().clone(),
        b,
        fit,
        bootstrap: boot,
    };
    out.write_json("cox_fit.json", &doc)?;
    out.finish()
}

pub fn simulate_cmd(cfg: &RunConfig) -> Result<Vec<FileEntry>> {
    let s = &cfg.settings;
    let scenarios = cfg.scenarios()?;
    let reps = s.reps.unwrap_or(300);
    let seed = cfg.seed();
    let source = if s.nuisance.as_deref() == Some("oracle") {
        NuisanceSource::Oracle
    } else {
        NuisanceSource::Estimated(cfg.nuisance_spec()?)
    };
    let mut report = MetricsReport {
        seed,
        ..Default::default()
    };
    let modes = [Mode::Extended, Mode::CompleteCase];
    for &sc in &scenarios {
        for &n in s.ns.as_deref().unwrap_or(&[]) {
            let r = run_cir_study(&ScenarioSpec::new(sc, n, reps, seed), &modes, &source)?;
            report.cir.extend(r.cir);
            report.errors.extend(r.errors);
        }
    }
    let bs = s.bootstrap_bs.clone().unwrap_or_default();
    let bns = s.bootstrap_ns.clone().unwrap_or_default();
    if !bs.is_empty() && !bns.is_empty() {
        for &sc in &scenarios {
            let r = run_bootstrap_study(sc, &bns, &bs, reps, seed)?;
            report.cox.extend(r.cox);
            report.errors.extend(r.errors);
        }
    }

    let mut out = Artifacts::create(&cfg.out_dir(), cfg, Provenance::new(cfg, None))?;
    out.write_csv("sim_cir.csv", |buf| Ok(report.write_cir_csv(buf)?))?;
    out.write_csv("sim_cox.csv", |buf| Ok(report.write_cox_csv(buf)?))?;
    out.write_csv("sim_integrated.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "scenario",
            "mode",
            "n",
            "reps_ok",
            "reps_failed",
            "integrated_abs_bias",
            "interior_coverage",
            "integrated_abs_bias_continuous",
            "interior_coverage_continuous",
        ])?;
        for c in &report.cir {
            w.write_record([
                c.scenario.name().to_string(),
                c.mode.to_string(),
                c.n.to_string(),
                c.reps_ok.to_string(),
                c.reps_failed.to_string(),
                fmt(c.integrated_abs_bias),
                fmt(c.interior_coverage),
                fmt(c.integrated_abs_bias_continuous),
                fmt(c.interior_coverage_continuous),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let summary = SimSummary {
        provenance: out.provenance().clone(),
        config: out.config().clone(),
        cir: report
            .cir
            .iter()
            .map(|c| CirCellSummary {
                scenario: c.scenario.name().to_string(),
                mode: c.mode,
                n: c.n,
                reps_requested: c.reps_requested,
                reps_ok: c.reps_ok,
                reps_failed: c.reps_failed,
                integrated_abs_bias: finite(c.integrated_abs_bias),
                interior_coverage: finite(c.interior_coverage),
                integrated_abs_bias_continuous: finite(c.integrated_abs_bias_continuous),
                interior_coverage_continuous: finite(c.interior_coverage_continuous),
            })
            .collect(),
        cox: report.cox.iter().map(CoxCellSummary::from).collect(),
        errors: report.errors.clone(),
    };
    out.write_json("sim_summary.json", &summary)?;
    out.finish()
}

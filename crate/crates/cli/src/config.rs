//! Run configuration: a flat JSON file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use currstat_core::cir::MarginalDensity;
use currstat_core::nuisance::{DensitySpec, EnsembleSpec, YFeature};
use currstat_core::sim::Scenario;
use currstat_core::{Mode, NuisanceSpec, Resample};

use crate::error::{CliError, Result};

/// Every key a config file may carry. Unset keys fall back to per-command defaults.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Input CSV (fit-cir, fit-cox) or artifact directory (report).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Covariate schema JSON.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub t1: Option<f64>,
    /// Follow-up cutoff; nonrespondents carry y = c0.
    #[arg(long)]
    pub c0: Option<f64>,
    /// Earliest possible response time.
    #[arg(long)]
    pub b0: Option<f64>,
    /// extended, complete_case, npmle or all.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bootstrap replicates.
    #[arg(long = "b")]
    pub b: Option<usize>,
    /// desk or full.
    #[arg(long)]
    pub profile: Option<String>,
    /// Monte Carlo replicates per cell.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// estimated or oracle (simulate only).
    #[arg(long)]
    pub nuisance: Option<String>,
    /// full_cohort or respondents.
    #[arg(long)]
    pub resample: Option<String>,
    /// raw, log or rank.
    #[arg(long)]
    pub y_feature: Option<String>,
    #[arg(long)]
    pub mu_folds: Option<usize>,
    #[arg(long)]
    pub density_folds: Option<usize>,
    #[arg(long)]
    pub g_floor: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub include_nonrespondents: Option<bool>,
    /// histogram or ecdf_difference.
    #[arg(long)]
    pub marginal_density: Option<String>,
    /// Quantile half-width of the derivative secant.
    #[arg(long)]
    pub derivative_step: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub bootstrap_ns: Option<Vec<usize>>,
    /// Bootstrap replicate counts for the coverage study; empty skips it.
    #[arg(long, value_delimiter = ',')]
    pub bootstrap_bs: Option<Vec<usize>>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl Settings {
    pub fn from_json_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("config not found: {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    /// Values set in `top` win.
    pub fn overlay(mut self, top: &Settings) -> Self {
        overlay!(
            self,
            top,
            input,
            schema,
            out,
            t0,
            t1,
            c0,
            b0,
            mode,
            seed,
            b,
            profile,
            reps,
            grid_points,
            nuisance,
            resample,
            y_feature,
            mu_folds,
            density_folds,
            g_floor,
            include_nonrespondents,
            marginal_density,
            derivative_step,
            scenarios,
            ns,
            bootstrap_ns,
            bootstrap_bs,
            threads
        );
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    FitCir,
    FitCox,
    Simulate,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Full,
}

/// Settings with every default the subcommand needs filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub settings: Settings,
}

pub const DEFAULT_SEED: u64 = 20240101;

impl RunConfig {
    pub fn resolve(subcommand: Subcommand, file: Option<&Path>, cli: &Settings) -> Result<Self> {
        let base = match file {
            Some(p) => Settings::from_json_path(p)?,
            None => Settings::default(),
        };
        let mut s = base.overlay(cli);
        s.seed.get_or_insert(DEFAULT_SEED);
        s.out.get_or_insert_with(|| PathBuf::from("out"));
        match subcommand {
            Subcommand::FitCir => {
                require(&s.input, "input")?;
                require(&s.schema, "schema")?;
                require(&s.t0, "t0")?;
                require(&s.t1, "t1")?;
                require(&s.c0, "c0")?;
                s.b0.get_or_insert(0.0);
                s.mode.get_or_insert_with(|| "extended".into());
                s.grid_points.get_or_insert(100);
                fill_nuisance(&mut s);
            }
            Subcommand::FitCox => {
                require(&s.input, "input")?;
                require(&s.schema, "schema")?;
                require(&s.c0, "c0")?;
                s.b0.get_or_insert(0.0);
                s.b.get_or_insert(1000);
                s.resample.get_or_insert_with(|| "full_cohort".into());
            }
            Subcommand::Simulate => {
                let profile = s.profile.get_or_insert_with(|| "desk".into()).clone();
                let full = parse_enum::<Profile>("profile", &profile)? == Profile::Full;
                s.scenarios.get_or_insert_with(|| {
                    if full {
                        vec!["S1".into(), "S2".into(), "S3".into()]
                    } else {
                        vec!["S3".into()]
                    }
                });
                s.ns.get_or_insert_with(|| if full { vec![500, 1000, 1500, 2000] } else { vec![1000] });
                s.reps.get_or_insert(if full { 1000 } else { 300 });
                s.bootstrap_ns.get_or_insert_with(|| if full { vec![500, 1000, 1500, 2000] } else { vec![500] });
                s.bootstrap_bs.get_or_insert_with(|| if full { vec![100, 250, 500, 1000] } else { vec![100] });
                s.nuisance.get_or_insert_with(|| "estimated".into());
                fill_nuisance(&mut s);
            }
            Subcommand::Report => {
                if s.input.is_none() {
                    s.input = s.out.clone();
                }
            }
        }
        let cfg = RunConfig { subcommand, settings: s };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        let s = &self.settings;
        if let Some(m) = &s.mode {
            self.modes_of(m)?;
        }
        if let Some(v) = &s.profile {
            parse_enum::<Profile>("profile", v)?;
        }
        if let Some(v) = &s.resample {
            parse_enum::<Resample>("resample", v)?;
        }
        if let Some(v) = &s.y_feature {
            parse_enum::<YFeature>("y_feature", v)?;
        }
        if let Some(v) = &s.marginal_density {
            parse_enum::<MarginalDensity>("marginal_density", v)?;
        }
        if let Some(v) = &s.nuisance {
            if v != "estimated" && v != "oracle" {
                return Err(CliError::Config(format!("nuisance must be `estimated` or `oracle`, got {v:?}")));
            }
        }
        if let Some(list) = &s.scenarios {
            for sc in list {
                Scenario::parse(sc)?;
            }
        }
        if s.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    fn modes_of(&self, m: &str) -> Result<Vec<Mode>> {
        if m == "all" {
            return Ok(Mode::ALL.to_vec());
        }
        m.parse::<Mode>().map(|m| vec![m]).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn modes(&self) -> Result<Vec<Mode>> {
        self.modes_of(self.settings.mode.as_deref().unwrap_or("extended"))
    }

    pub fn seed(&self) -> u64 {
        self.settings.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.settings.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        let list = self.settings.scenarios.clone().unwrap_or_default();
        list.iter().map(|s| Scenario::parse(s).map_err(CliError::from)).collect()
    }

    pub fn resample(&self) -> Result<Resample> {
        parse_enum("resample", self.settings.resample.as_deref().unwrap_or("full_cohort"))
    }

    pub fn marginal_density(&self) -> Result<MarginalDensity> {
        parse_enum("marginal_density", self.settings.marginal_density.as_deref().unwrap_or("histogram"))
    }

    pub fn nuisance_spec(&self) -> Result<NuisanceSpec> {
        let s = &self.settings;
        let ensemble = EnsembleSpec {
            folds: s.mu_folds.unwrap_or(10),
            y_feature: parse_enum("y_feature", s.y_feature.as_deref().unwrap_or("log"))?,
            include_nonrespondents: s.include_nonrespondents.unwrap_or(false),
            ..EnsembleSpec::default()
        };
        let density = DensitySpec {
            folds: s.density_folds.unwrap_or(5),
            g_floor: s.g_floor.unwrap_or(0.05),
            ..DensitySpec::default()
        };
        Ok(NuisanceSpec { ensemble, density })
    }

    /// The configuration as echoed into artifacts: where the output goes and
    /// how many threads computed it do not change any result.
    pub fn echo(&self) -> RunConfig {
        let mut c = self.clone();
        c.settings.out = None;
        c.settings.threads = None;
        c
    }

    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.echo()).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn require<T>(v: &Option<T>, key: &str) -> Result<()> {
    if v.is_none() {
        return Err(CliError::Config(format!("missing required setting `{key}`")));
    }
    Ok(())
}

fn fill_nuisance(s: &mut Settings) {
    s.y_feature.get_or_insert_with(|| "log".into());
    s.mu_folds.get_or_insert(10);
    s.density_folds.get_or_insert(5);
    s.g_floor.get_or_insert(0.05);
    s.include_nonrespondents.get_or_insert(false);
    s.marginal_density.get_or_insert_with(|| "histogram".into());
}

fn parse_enum<T: DeserializeOwned>(key: &str, v: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(v.to_string()))
        .map_err(|_| CliError::Config(format!("unknown value {v:?} for `{key}`")))
}

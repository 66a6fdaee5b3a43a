//! `report`: gather the artifacts in a run directory into one Markdown file.

use std::fmt::Write as _;
use std::path::Path;

use currstat_core::Mode;

use crate::artifacts::Provenance;
use crate::commands::{CoxDoc, SimSummary, SurvivalDoc};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::table::TableRow;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if !path.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))
}

fn opt3(v: Option<f64>) -> String {
    v.map_or("NA".into(), |x| format!("{x:.3}"))
}

fn stamp(out: &mut String, p: &Provenance) {
    let _ = writeln!(
        out,
        "_config {}, seed {}, currstat {}_\n",
        &p.config_hash[..12],
        p.seed,
        p.version
    );
}

fn survival_section(out: &mut String, docs: &[SurvivalDoc]) {
    let _ = writeln!(out, "## Survival\n");
    stamp(out, &docs[0].provenance);
    let first = &docs[0].estimate;
    let _ = writeln!(
        out,
        "n = {} ({} respondents), window [{}, {}].\n",
        first.n, first.n_respondents, first.t0, first.t1
    );
    let mut header = "| time |".to_string();
    let mut rule = "|---:|".to_string();
    for d in docs {
        let _ = write!(header, " {} (95% CI) |", d.mode);
        rule.push_str("---|");
    }
    let _ = writeln!(out, "{header}\n{rule}");
    let len = first.times.len();
    let mut picks: Vec<usize> = (0..len).step_by((len / 10).max(1)).collect();
    if picks.last() != Some(&(len - 1)) {
        picks.push(len - 1);
    }
    for k in picks {
        let mut line = format!("| {:.3} |", first.times[k]);
        for d in docs {
            let e = &d.estimate;
            let _ = write!(line, " {:.3} ({:.3}, {:.3}) |", e.survival[k], e.ci_lower[k], e.ci_upper[k]);
        }
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out);
    for d in docs {
        let floored = d.estimate.flags.iter().filter(|f| !f.is_empty()).count();
        if floored > 0 {
            let _ = writeln!(
                out,
                "- {}: {floored} grid points have a floored scale factor; their intervals are unreliable.",
                d.mode
            );
        }
    }
    let _ = writeln!(out, "\n### Nuisance fits\n");
    for d in docs {
        let _ = writeln!(
            out,
            "- {}: density with {} bins, {:.1}% of sample points raised to the floor {}",
            d.mode,
            d.density.n_bins,
            100.0 * d.density.truncated_fraction,
            d.density.g_floor
        );
        if let Some(mu) = &d.mu {
            let parts: Vec<String> = mu
                .learners
                .iter()
                .filter(|l| l.weight > 0.0)
                .map(|l| format!("{} {:.3}", l.name, l.weight))
                .collect();
            let _ = writeln!(
                out,
                "  outcome regression weights: {}; stacked CV MSE {:.4}",
                parts.join(", "),
                mu.ensemble_cv_mse
            );
        }
    }
    let _ = writeln!(out);
}

fn cox_section(out: &mut String, doc: &CoxDoc, rows: &[TableRow]) {
    let _ = writeln!(out, "## Cox regression\n");
    stamp(out, &doc.provenance);
    let b = &doc.bootstrap;
    let _ = writeln!(
        out,
        "{} respondents, B = {} ({} used, {} dropped){}. Bold rows are significant at 0.05; categorical p-values test all levels jointly.\n",
        doc.fit.n,
        doc.b,
        b.n_used,
        b.n_dropped,
        if b.flagged { ", flagged: more than 10% of replicates dropped" } else { "" }
    );
    let _ = writeln!(out, "| Risk factor | Hazard ratio | 95% CI | p |\n|---|---:|---|---:|");
    for r in rows {
        let label = if r.level.is_empty() {
            r.risk_factor.clone()
        } else {
            format!("&nbsp;&nbsp;{}", r.level)
        };
        let ci = if r.hazard_ratio == crate::table::REF {
            crate::table::REF.to_string()
        } else if r.ci_lower.is_empty() {
            String::new()
        } else {
            format!("({}, {})", r.ci_lower, r.ci_upper)
        };
        let cells = [label, r.hazard_ratio.clone(), ci, r.p_value.clone()];
        let cells: Vec<String> = cells
            .into_iter()
            .map(|c| if r.significant && !c.is_empty() { format!("**{c}**") } else { c })
            .collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    let _ = writeln!(out);
}

fn sim_section(out: &mut String, s: &SimSummary) {
    let _ = writeln!(out, "## Simulation\n");
    stamp(out, &s.provenance);
    if !s.cir.is_empty() {
        let _ = writeln!(
            out,
            "| scenario | mode | n | replicates | integrated abs. bias | interior coverage |\n|---|---|---:|---:|---:|---:|"
        );
        for c in &s.cir {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {}/{} | {} | {} |",
                c.scenario,
                c.mode,
                c.n,
                c.reps_ok,
                c.reps_requested,
                opt3(c.integrated_abs_bias),
                opt3(c.interior_coverage)
            );
        }
        let _ = writeln!(out);
    }
    if !s.cox.is_empty() {
        let _ = writeln!(
            out,
            "| scenario | n | B | coefficient | truth | mean estimate | Wald coverage | percentile coverage |\n|---|---:|---:|---|---:|---:|---:|---:|"
        );
        for c in &s.cox {
            for j in 0..c.truth.len() {
                let _ = writeln!(
                    out,
                    "| {} | {} | {}{} | beta{} | {:.3} | {} | {} | {} |",
                    c.scenario,
                    c.n,
                    c.b,
                    if c.degenerate { " (too few)" } else { "" },
                    j + 1,
                    c.truth[j],
                    opt3(c.mean_beta.get(j).copied().flatten()),
                    opt3(c.wald_coverage.get(j).copied().flatten()),
                    opt3(c.percentile_coverage.get(j).copied().flatten())
                );
            }
        }
        let _ = writeln!(out);
    }
    if !s.errors.is_empty() {
        let _ = writeln!(out, "{} replicate failures; first: {}\n", s.errors.len(), s.errors[0]);
    }
}

pub fn report_cmd(cfg: &RunConfig) -> Result<std::path::PathBuf> {
    let dir = cfg.settings.input.clone().unwrap_or_else(|| cfg.out_dir());
    if !dir.is_dir() {
        return Err(CliError::Config(format!("artifact directory not found: {}", dir.display())));
    }
    let mut survival = Vec::new();
    for mode in Mode::ALL {
        if let Some(doc) = read_json::<SurvivalDoc>(&dir.join(format!("survival_{mode}.json")))? {
            survival.push(doc);
        }
    }
    let cox: Option<CoxDoc> = read_json(&dir.join("cox_fit.json"))?;
    let sim: Option<SimSummary> = read_json(&dir.join("sim_summary.json"))?;
    if survival.is_empty() && cox.is_none() && sim.is_none() {
        return Err(CliError::Config(format!("no currstat artifacts in {}", dir.display())));
    }

    let own = Provenance::new(cfg, None);
    let mut out = String::from("# currstat report\n\n");
    stamp(&mut out, &own);
    if !survival.is_empty() {
        survival_section(&mut out, &survival);
    }
    if let Some(doc) = &cox {
        let path = dir.join("cox_table.csv");
        let mut rdr = csv::Reader::from_path(&path)?;
        let rows: Vec<TableRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        cox_section(&mut out, doc, &rows);
    }
    if let Some(s) = &sim {
        sim_section(&mut out, s);
    }
    let out_dir = cfg.out_dir();
    std::fs::create_dir_all(&out_dir)?;
    let path = out_dir.join("report.md");
    std::fs::write(&path, out)?;
    Ok(path)
}

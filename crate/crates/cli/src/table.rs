//! Hazard-ratio table: one block per schema column, reference levels as "(ref)" rows.

use serde::{Deserialize, Serialize};

use currstat_core::data::CovariateSchema;
use currstat_core::{BootstrapSummary, CoxFit};

use crate::error::Result;

pub const SIGNIFICANCE: f64 = 0.05;
pub const REF: &str = "(ref)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub risk_factor: String,
    pub level: String,
    pub hazard_ratio: String,
    pub ci_lower: String,
    pub ci_upper: String,
    pub p_value: String,
    pub significant: bool,
    pub note: String,
}

fn f3(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        String::new()
    }
}

fn p3(p: f64) -> String {
    if !p.is_finite() {
        String::new()
    } else if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

fn coefficient_row(name: &str, level: &str, j: usize, fit: &CoxFit, boot: &BootstrapSummary, with_p: bool) -> TableRow {
    if fit.dropped.contains(&j) {
        return TableRow {
            risk_factor: name.into(),
            level: level.into(),
            hazard_ratio: String::new(),
            ci_lower: String::new(),
            ci_upper: String::new(),
            p_value: String::new(),
            significant: false,
            note: "constant column dropped".into(),
        };
    }
    let (lo, hi) = boot.wald_ci[j];
    let p = boot.p_values[j];
    TableRow {
        risk_factor: name.into(),
        level: level.into(),
        hazard_ratio: f3(boot.beta[j].exp()),
        ci_lower: f3(lo.exp()),
        ci_upper: f3(hi.exp()),
        p_value: if with_p { p3(p) } else { String::new() },
        significant: p < SIGNIFICANCE,
        note: if boot.se[j] == 0.0 { "zero bootstrap spread".into() } else { String::new() },
    }
}

pub fn cox_table(schema: &CovariateSchema, fit: &CoxFit, boot: &BootstrapSummary) -> Vec<TableRow> {
    let mut rows = Vec::new();
    for g in schema.groups() {
        match &g.reference {
            None => rows.push(coefficient_row(&g.name, "", g.columns[0], fit, boot, true)),
            Some(reference) => {
                let p = boot
                    .group_tests
                    .iter()
                    .find(|t| t.name == g.name)
                    .map_or(f64::NAN, |t| t.p_value);
                rows.push(TableRow {
                    risk_factor: g.name.clone(),
                    level: String::new(),
                    hazard_ratio: String::new(),
                    ci_lower: String::new(),
                    ci_upper: String::new(),
                    p_value: p3(p),
                    significant: p < SIGNIFICANCE,
                    note: format!("joint test, df = {}", g.columns.len()),
                });
                rows.push(TableRow {
                    risk_factor: g.name.clone(),
                    level: reference.clone(),
                    hazard_ratio: REF.into(),
                    ci_lower: REF.into(),
                    ci_upper: REF.into(),
                    p_value: REF.into(),
                    significant: false,
                    note: String::new(),
                });
                for (level, &j) in g.levels.iter().zip(&g.columns) {
                    rows.push(coefficient_row(&g.name, level, j, fit, boot, false));
                }
            }
        }
    }
    rows
}

pub fn write_cox_table(rows: &[TableRow], buf: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use currstat_core::cox::GroupTest;
    use currstat_core::data::{ColumnKind, ColumnSpec};

    fn schema() -> CovariateSchema {
        CovariateSchema {
            columns: vec![
                ColumnSpec {
                    name: "male".into(),
                    kind: ColumnKind::Binary,
                },
                ColumnSpec {
                    name: "viral_load".into(),
                    kind: ColumnKind::Categorical {
                        levels: vec!["PCR>30Ct".into(), "PCR<30Ct".into(), "antigen".into()],
                        reference: "PCR>30Ct".into(),
                    },
                },
            ],
            y_column: "y".into(),
            delta_column: "delta".into(),
        }
    }

    fn fit() -> CoxFit {
        CoxFit {
            covariate_names: vec!["male".into(), "viral_load:PCR<30Ct".into(), "viral_load:antigen".into()],
            beta: vec![0.187, -0.245, -0.282],
            dropped: vec![],
            times: vec![],
            baseline_cumhaz: vec![],
            loglik: 0.0,
            converged: true,
            separated: false,
            iterations: 1,
            n: 10,
        }
    }

    fn boot() -> BootstrapSummary {
        BootstrapSummary {
            b: 100,
            n_used: 100,
            n_dropped: 0,
            flagged: false,
            degenerate: false,
            beta: vec![0.187, -0.245, -0.282],
            se: vec![0.076, 0.105, 0.12],
            wald_ci: vec![(0.038, 0.336), (-0.451, -0.039), (-0.517, -0.047)],
            percentile_ci: vec![(0.04, 0.33), (-0.45, -0.04), (-0.51, -0.05)],
            p_values: vec![0.0138, 0.0196, 0.0188],
            group_tests: vec![GroupTest {
                name: "viral_load".into(),
                columns: vec![1, 2],
                chi2: 6.8,
                df: 2,
                p_value: 0.033,
            }],
        }
    }

    #[test]
    fn layout() {
        let rows = cox_table(&schema(), &fit(), &boot());
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].hazard_ratio, "1.206");
        assert_eq!(rows[0].p_value, "0.014");
        assert!(rows[0].significant);
        assert_eq!(rows[1].p_value, "0.033");
        assert_eq!(rows[1].hazard_ratio, "");
        assert_eq!(rows[2].level, "PCR>30Ct");
        assert_eq!(rows[2].hazard_ratio, REF);
        assert_eq!(rows[3].level, "PCR<30Ct");
        assert_eq!(rows[3].hazard_ratio, "0.783");
        assert_eq!(rows[3].p_value, "");
        assert!(rows[3].significant);
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_cox_table(&cox_table(&schema(), &fit(), &boot()), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("risk_factor,level,hazard_ratio,ci_lower,ci_upper,p_value,significant,note\n"));
        assert!(text.contains("viral_load,PCR>30Ct,(ref),(ref),(ref),(ref),false,"));
    }
}

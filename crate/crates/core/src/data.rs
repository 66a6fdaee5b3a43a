//! Observation records, the analysis cohort, and CSV ingestion.
//!
//! A nonrespondent is stored in-band as `y == c0` with `delta == false`,
//! so the observed indicator is always `1(Y* < c0) * Delta*`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub w: Vec<f64>,
    pub y: f64,
    pub delta: bool,
}

impl Observation {
    pub fn new(w: Vec<f64>, y: f64, delta: bool) -> Self {
        Self { w, y, delta }
    }

    pub fn delta_f64(&self) -> f64 {
        if self.delta {
            1.0
        } else {
            0.0
        }
    }
}

/// An immutable, validated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    observations: Vec<Observation>,
    c0: f64,
    b0: f64,
    covariate_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        observations: Vec<Observation>,
        c0: f64,
        b0: f64,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if !(b0 < c0) || !b0.is_finite() || !c0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need finite b0 < c0, got b0 = {b0}, c0 = {c0}"
            )));
        }
        let p = covariate_names.len();
        for (row, obs) in observations.iter().enumerate() {
            validate_observation(row, obs, p, c0, b0)?;
        }
        Ok(Self {
            observations,
            c0,
            b0,
            covariate_names,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Covariate dimension `p`.
    pub fn dim(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn is_respondent(&self, obs: &Observation) -> bool {
        obs.y < self.c0
    }

    pub fn n_respondents(&self) -> usize {
        self.observations
            .iter()
            .filter(|o| self.is_respondent(o))
            .count()
    }

    /// Rows at the given indices (repeats allowed, as in a bootstrap resample).
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            observations: indices
                .iter()
                .map(|&i| self.observations[i].clone())
                .collect(),
            c0: self.c0,
            b0: self.b0,
            covariate_names: self.covariate_names.clone(),
        }
    }

    fn filtered(&self, keep: impl Fn(&Observation) -> bool) -> Dataset {
        Dataset {
            observations: self
                .observations
                .iter()
                .filter(|o| keep(o))
                .cloned()
                .collect(),
            c0: self.c0,
            b0: self.b0,
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Partition into (respondents `y < c0`, nonrespondents `y = c0`).
    pub fn split_respondents(&self) -> (Dataset, Dataset) {
        let c0 = self.c0;
        (self.filtered(|o| o.y < c0), self.filtered(|o| o.y >= c0))
    }

    pub fn respondents(&self) -> Dataset {
        let c0 = self.c0;
        self.filtered(|o| o.y < c0)
    }

    /// Writes covariates (already expanded to numeric columns), `y` and `delta`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.covariate_names.iter().map(String::as_str).collect();
        header.push("y");
        header.push("delta");
        wtr.write_record(&header)?;
        for obs in &self.observations {
            let mut rec: Vec<String> = obs.w.iter().map(|v| v.to_string()).collect();
            rec.push(obs.y.to_string());
            rec.push(if obs.delta { "1" } else { "0" }.to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn validate_observation(row: usize, obs: &Observation, p: usize, c0: f64, b0: f64) -> Result<()> {
    if obs.w.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: obs.w.len(),
        });
    }
    if let Some(bad) = obs.w.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidRow {
            row,
            message: format!("covariate {bad} is not finite"),
        });
    }
    if !(obs.y > 0.0) || !obs.y.is_finite() {
        return Err(Error::InvalidRow {
            row,
            message: format!("y must be a positive real, got {}", obs.y),
        });
    }
    if obs.y < b0 {
        return Err(Error::ResponseBeforeMinimum { row, y: obs.y, b0 });
    }
    if obs.y > c0 {
        return Err(Error::ResponseAfterCutoff { row, y: obs.y, c0 });
    }
    if obs.y == c0 && obs.delta {
        return Err(Error::NonrespondentEvent { row });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Binary,
    Categorical {
        levels: Vec<String>,
        reference: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

fn default_y() -> String {
    "y".to_string()
}

fn default_delta() -> String {
    "delta".to_string()
}

/// Column layout of an input CSV. Categorical columns expand to one
/// indicator per non-reference level, in the listed level order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub columns: Vec<ColumnSpec>,
    #[serde(default = "default_y")]
    pub y_column: String,
    #[serde(default = "default_delta")]
    pub delta_column: String,
}

/// A set of design columns produced by one schema column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateGroup {
    pub name: String,
    /// Indices into the expanded covariate vector.
    pub columns: Vec<usize>,
    /// Level labels for the expanded columns (categorical only).
    pub levels: Vec<String>,
    pub reference: Option<String>,
}

impl CovariateSchema {
    pub fn numeric(names: &[String]) -> Self {
        Self {
            columns: names
                .iter()
                .map(|n| ColumnSpec {
                    name: n.clone(),
                    kind: ColumnKind::Numeric,
                })
                .collect(),
            y_column: default_y(),
            delta_column: default_delta(),
        }
    }

    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let schema: Self = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        for col in &self.columns {
            if let ColumnKind::Categorical { levels, reference } = &col.kind {
                if levels.len() < 2 {
                    return Err(schema_err(&col.name, "categorical column needs at least two levels"));
                }
                if !levels.contains(reference) {
                    return Err(schema_err(
                        &col.name,
                        format!("reference level `{reference}` is not among the levels"),
                    ));
                }
                let mut sorted = levels.clone();
                sorted.sort();
                sorted.dedup();
                if sorted.len() != levels.len() {
                    return Err(schema_err(&col.name, "duplicate level"));
                }
            }
        }
        Ok(())
    }

    pub fn expected_header(&self) -> Vec<String> {
        let mut h: Vec<String> = self.columns.iter().map(|c| c.name.clone()).collect();
        h.push(self.y_column.clone());
        h.push(self.delta_column.clone());
        h
    }

    pub fn expanded_names(&self) -> Vec<String> {
        self.groups()
            .into_iter()
            .flat_map(|g| {
                if g.reference.is_some() {
                    g.levels
                        .iter()
                        .map(|l| format!("{}:{}", g.name, l))
                        .collect::<Vec<_>>()
                } else {
                    vec![g.name.clone()]
                }
            })
            .collect()
    }

    pub fn groups(&self) -> Vec<CovariateGroup> {
        let mut next = 0;
        self.columns
            .iter()
            .map(|col| match &col.kind {
                ColumnKind::Numeric | ColumnKind::Binary => {
                    let g = CovariateGroup {
                        name: col.name.clone(),
                        columns: vec![next],
                        levels: Vec::new(),
                        reference: None,
                    };
                    next += 1;
                    g
                }
                ColumnKind::Categorical { levels, reference } => {
                    let kept: Vec<String> =
                        levels.iter().filter(|l| *l != reference).cloned().collect();
                    let columns = (next..next + kept.len()).collect();
                    next += kept.len();
                    CovariateGroup {
                        name: col.name.clone(),
                        columns,
                        levels: kept,
                        reference: Some(reference.clone()),
                    }
                }
            })
            .collect()
    }

    fn encode(&self, col: &ColumnSpec, raw: &str, row: usize, out: &mut Vec<f64>) -> Result<()> {
        match &col.kind {
            ColumnKind::Numeric => {
                let v: f64 = raw.parse().map_err(|_| Error::InvalidRow {
                    row,
                    message: format!("column `{}`: `{raw}` is not a number", col.name),
                })?;
                out.push(v);
            }
            ColumnKind::Binary => {
                let v = parse_binary(raw).ok_or_else(|| Error::InvalidRow {
                    row,
                    message: format!("column `{}`: `{raw}` is not 0/1", col.name),
                })?;
                out.push(v);
            }
            ColumnKind::Categorical { levels, reference } => {
                if !levels.iter().any(|l| l == raw) {
                    return Err(schema_err(
                        &col.name,
                        format!("row {row}: unknown level `{raw}`"),
                    ));
                }
                for level in levels.iter().filter(|l| *l != reference) {
                    out.push(if level == raw { 1.0 } else { 0.0 });
                }
            }
        }
        Ok(())
    }
}

fn schema_err(column: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        column: column.to_string(),
        message: message.into(),
    }
}

fn parse_binary(raw: &str) -> Option<f64> {
    match raw {
        "0" | "0.0" | "false" | "FALSE" => Some(0.0),
        "1" | "1.0" | "true" | "TRUE" => Some(1.0),
        _ => None,
    }
}

fn is_missing(raw: &str) -> bool {
    matches!(raw, "" | "NA" | "na" | "NaN" | "nan" | "null")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub n_read: usize,
    pub n_dropped_missing: usize,
    pub n_respondents: usize,
    pub n_nonrespondents: usize,
}

/// Reads and validates a current-status CSV. Rows with any missing field are
/// dropped and counted; every other defect is a hard error.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    schema: &CovariateSchema,
    c0: f64,
    b0: f64,
) -> Result<(Dataset, IngestReport)> {
    let file = std::fs::File::open(path)?;
    ingest_reader(std::io::BufReader::new(file), schema, c0, b0)
}

pub fn ingest_reader<R: Read>(
    reader: R,
    schema: &CovariateSchema,
    c0: f64,
    b0: f64,
) -> Result<(Dataset, IngestReport)> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let expected = schema.expected_header();
    for (i, name) in expected.iter().enumerate() {
        match header.get(i) {
            Some(h) if h == name => {}
            Some(h) => {
                return Err(schema_err(name, format!("expected `{name}` at position {i}, found `{h}`")))
            }
            None => return Err(schema_err(name, "column missing from header")),
        }
    }
    if header.len() > expected.len() {
        return Err(schema_err(&header[expected.len()], "unexpected extra column"));
    }

    let mut observations = Vec::new();
    let mut n_read = 0;
    let mut n_dropped = 0;
    let ncov = schema.columns.len();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        n_read += 1;
        if record.iter().any(|f| is_missing(f.trim())) || record.len() < expected.len() {
            n_dropped += 1;
            continue;
        }
        let mut w = Vec::new();
        for (col, raw) in schema.columns.iter().zip(record.iter()) {
            schema.encode(col, raw.trim(), row, &mut w)?;
        }
        let y_raw = record[ncov].trim();
        let y: f64 = y_raw.parse().map_err(|_| Error::InvalidRow {
            row,
            message: format!("y `{y_raw}` is not a number"),
        })?;
        let d_raw = record[ncov + 1].trim();
        let delta = parse_binary(d_raw).ok_or_else(|| Error::InvalidRow {
            row,
            message: format!("delta `{d_raw}` is not 0/1"),
        })? == 1.0;
        let obs = Observation::new(w, y, delta);
        validate_observation(row, &obs, schema.expanded_names().len(), c0, b0)?;
        observations.push(obs);
    }
    let dataset = Dataset::new(observations, c0, b0, schema.expanded_names())?;
    let n_respondents = dataset.n_respondents();
    let report = IngestReport {
        n_read,
        n_dropped_missing: n_dropped,
        n_respondents,
        n_nonrespondents: dataset.len() - n_respondents,
    };
    Ok((dataset, report))
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use currstat_core::sim::{generate, DGPSpec};

pub const B0: f64 = 28.0;
pub const C0: f64 = 120.0;

/// A cohort shaped like a symptom-resolution survey: days since testing in
/// `[28, 120]`, nonrespondents at 120, a binary and a three-level covariate.
pub fn write_cohort(dir: &Path, n: usize, seed: u64) -> (PathBuf, PathBuf) {
    let dgp = DGPSpec::new(1.65);
    let (d, _) = generate(&dgp, n, seed).unwrap();
    let mut csv = String::from("male,viral_load,y,delta\n");
    for o in d.observations() {
        let male = if o.w[0] > 0.0 { 1 } else { 0 };
        let vl = match (o.w[1] > 0.0, o.w[2] > 0.0) {
            (false, false) => "PCR>30Ct",
            (true, false) => "PCR<30Ct",
            _ => "antigen",
        };
        let y = if o.y >= dgp.c0 { C0 } else { B0 + o.y * (C0 - B0) / dgp.c0 };
        csv.push_str(&format!("{male},{vl},{y},{}\n", o.delta as u8));
    }
    let data = dir.join("cohort.csv");
    std::fs::write(&data, csv).unwrap();
    let schema = dir.join("schema.json");
    std::fs::write(
        &schema,
        r#"{
  "columns": [
    {"name": "male", "kind": "binary"},
    {"name": "viral_load", "kind": "categorical", "levels": ["PCR>30Ct", "PCR<30Ct", "antigen"], "reference": "PCR>30Ct"}
  ]
}
"#,
    )
    .unwrap();
    (data, schema)
}

pub fn currstat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_currstat")).args(args).output().unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file in `dir` except the wall-clock metadata, by name.
pub fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "run_metadata.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

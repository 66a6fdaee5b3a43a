//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Run alone with `cargo test -p currstat-cli --test acceptance`.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use currstat_core::cir::{chernoff_half_width, quantile_grid};
use currstat_core::nuisance::{ConstantRegression, UnitDensityRatio};
use currstat_core::rng::seeded;
use currstat_core::sim::{
    generate, run_bootstrap_study, run_cir_study, run_cox_study, DGPSpec, MetricsReport, NuisanceSource,
};
use currstat_core::{
    cs_gradient, cs_loglik, fit_cir, gcm_left_derivative, pava_values, CIRConfig, EmpiricalCdf, Mode, NuisanceSpec,
    Nuisances, Scenario, ScenarioSpec, CHERNOFF_Q975,
};
use rand::Rng;

use common::{data_files, s, write_cohort};

const SEED: u64 = 20240101;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn weighted_sse(v: &[f64], w: &[f64], fit: &[f64]) -> f64 {
    v.iter().zip(w).zip(fit).map(|((a, b), f)| b * (a - f).powi(2)).sum()
}

/// Exact weighted isotonic projection for small n: the minimizer is
/// piecewise constant on some partition into contiguous blocks, with block
/// values equal to weighted means, so enumerate every partition and keep
/// the best feasible one.
fn brute_projection(v: &[f64], w: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        let mut feasible = true;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..n {
            if i == n - 1 || mask & (1 << i) != 0 {
                let ws: f64 = w[start..=i].iter().sum();
                let m = v[start..=i].iter().zip(&w[start..=i]).map(|(a, b)| a * b).sum::<f64>() / ws;
                if m < prev - 1e-15 {
                    feasible = false;
                    break;
                }
                prev = m;
                fit.extend(std::iter::repeat_n(m, i + 1 - start));
                start = i + 1;
            }
        }
        if feasible {
            let sse = weighted_sse(v, w, &fit);
            if best.as_ref().is_none_or(|(b, _)| sse < *b) {
                best = Some((sse, fit));
            }
        }
    }
    best.unwrap().1
}

fn criterion_1() -> Outcome {
    let mut rng = seeded(SEED ^ 1);
    let mut worst_qp = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let fit = pava_values(&v, &w);
        let qp = brute_projection(&v, &w);
        for (a, b) in fit.iter().zip(&qp) {
            worst_qp = worst_qp.max((a - b).abs());
        }
    }
    let mut worst_gcm = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=60);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let mut points = vec![(0.0, 0.0)];
        let (mut x, mut y) = (0.0, 0.0);
        for (a, b) in v.iter().zip(&w) {
            x += b;
            y += a * b;
            points.push((x, y));
        }
        let gcm = gcm_left_derivative(&points).unwrap();
        let fit = pava_values(&v, &w);
        for (a, b) in gcm.values().iter().zip(&fit) {
            worst_gcm = worst_gcm.max((a - b).abs());
        }
    }
    outcome(
        worst_qp <= 1e-10 && worst_gcm <= 1e-10,
        format!("max |pava - QP| = {worst_qp:.1e} over 200, max |GCM' - pava| = {worst_gcm:.1e} over 100"),
    )
}

/// Classical NPMLE restricted to `Y <= t1`, as a step function in `Y`.
fn npmle(d: &currstat_core::Dataset, t1: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rows: Vec<(f64, f64)> = d
        .observations()
        .iter()
        .filter(|o| o.y <= t1)
        .map(|o| (o.y, o.delta_f64()))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut ys, mut sums, mut counts) = (Vec::new(), Vec::<f64>::new(), Vec::<f64>::new());
    for (y, delta) in rows {
        if ys.last() == Some(&y) {
            *sums.last_mut().unwrap() += delta;
            *counts.last_mut().unwrap() += 1.0;
        } else {
            ys.push(y);
            sums.push(delta);
            counts.push(1.0);
        }
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / c).collect();
    (ys, pava_values(&means, &counts))
}

fn criterion_2() -> Outcome {
    let dgp = DGPSpec::new(1.65);
    let mut rng = seeded(SEED ^ 2);
    let (t0, t1) = (1e-6, 1.5);
    let mut worst = 0.0f64;
    for k in 0..50u64 {
        let (d, _) = generate(&dgp, 200, SEED + k).unwrap();
        let ys: Vec<f64> = d.observations().iter().map(|o| o.y).collect();
        let fcdf = EmpiricalCdf::new(&ys).unwrap();
        let mut cfg = CIRConfig::new(t0, t1, Mode::Extended);
        cfg.eval_times = quantile_grid(&fcdf, t0, t1, 100);
        let mu = ConstantRegression(rng.random_range(0.05..0.95));
        let est = fit_cir(&d, &cfg, Nuisances { mu: &mu, g: &UnitDensityRatio { f: 1.0 } }).unwrap();
        let (knots, fit) = npmle(&d, t1);
        for (&t, &theta) in est.times.iter().zip(&est.theta) {
            let k = knots.partition_point(|&u| u <= t).saturating_sub(1);
            worst = worst.max((theta - fit[k]).abs());
        }
    }
    outcome(worst <= 1e-10, format!("max grid deviation {worst:.1e} over 50 datasets"))
}

fn cir_cell(r: &MetricsReport, mode: Mode) -> &currstat_core::sim::CirCell {
    r.cir.iter().find(|c| c.mode == mode).unwrap()
}

fn estimated() -> NuisanceSource {
    NuisanceSource::Estimated(NuisanceSpec::default())
}

fn criterion_3(s3: &MetricsReport) -> Outcome {
    let ext = cir_cell(s3, Mode::Extended);
    let cc = cir_cell(s3, Mode::CompleteCase);
    let ordering = ext.integrated_abs_bias <= cc.integrated_abs_bias;
    let mut path = Vec::new();
    for n in [500, 1000, 2000] {
        let r = run_cir_study(&ScenarioSpec::new(Scenario::S3, n, 100, SEED), &[Mode::Extended], &estimated()).unwrap();
        path.push(cir_cell(&r, Mode::Extended).integrated_abs_bias);
    }
    let decreasing = path.windows(2).all(|w| w[1] < w[0]);
    outcome(
        ordering && decreasing,
        format!(
            "S3 n=1000: extended {:.4} vs complete-case {:.4}; extended over n=500/1000/2000: {:.4} / {:.4} / {:.4}",
            ext.integrated_abs_bias, cc.integrated_abs_bias, path[0], path[1], path[2]
        ),
    )
}

fn criterion_4(s1: &MetricsReport, s3: &MetricsReport) -> Outcome {
    let e1 = cir_cell(s1, Mode::Extended).interior_coverage;
    let e3 = cir_cell(s3, Mode::Extended).interior_coverage;
    let c3 = cir_cell(s3, Mode::CompleteCase).interior_coverage;
    let band = |c: f64| (0.92..=0.98).contains(&c);
    outcome(
        band(e1) && band(e3) && c3 < 0.92,
        format!("extended S1 {e1:.3}, S3 {e3:.3} (band [0.92, 0.98]); complete-case S3 {c3:.3} (need < 0.92)"),
    )
}

fn criterion_5() -> Outcome {
    let dgp = DGPSpec::new(1.65);
    let mut rng = seeded(SEED ^ 5);
    let mut worst = 0.0f64;
    for k in 0..100u64 {
        let n = rng.random_range(20..300);
        let (d, _) = generate(&dgp, n, SEED + 1000 + k).unwrap();
        let cum: Vec<f64> = d
            .observations()
            .iter()
            .map(|o| dgp.baseline_cumhaz(o.y.min(3.0)) * rng.random_range(0.5..2.0) + 1e-3)
            .collect();
        let beta: Vec<f64> = (0..d.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = cs_gradient(&beta, &cum, &d).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..beta.len())
            .map(|j| {
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[j] += h;
                dn[j] -= h;
                (cs_loglik(&up, &cum, &d).unwrap() - cs_loglik(&dn, &cum, &d).unwrap()) / (2.0 * h)
            })
            .collect();
        let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    outcome(worst < 1e-6, format!("max relative error {worst:.1e} over 100 instances"))
}

fn criterion_6() -> Outcome {
    let cell = run_cox_study(&ScenarioSpec::new(Scenario::S1, 2000, 200, SEED)).unwrap();
    let within: Vec<bool> = (0..cell.truth.len())
        .map(|j| (cell.mean_beta[j] - cell.truth[j]).abs() <= 3.0 * cell.mc_se[j])
        .collect();
    let parts: Vec<String> = (0..cell.truth.len())
        .map(|j| format!("{:.4} ({:+.4} +/- {:.4})", cell.mean_beta[j], cell.truth[j], 3.0 * cell.mc_se[j]))
        .collect();
    outcome(
        within.iter().all(|&w| w) && cell.reps_ok == 200,
        format!("{} / 200 fits; mean beta {}", cell.reps_ok, parts.join(", ")),
    )
}

fn criterion_7() -> Outcome {
    let r = run_bootstrap_study(Scenario::S1, &[500], &[100], 300, SEED).unwrap();
    let c = &r.cox[0];
    let wald_ok = c.wald_coverage.iter().all(|w| (0.915..=0.98).contains(w));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mw, mp) = (mean(&c.wald_coverage), mean(&c.percentile_coverage));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    outcome(
        wald_ok && mp <= mw,
        format!(
            "{} / 300 replicates; Wald {} (band [0.915, 0.98]); percentile {}; means {mw:.3} vs {mp:.3}",
            c.reps_ok,
            fmt(&c.wald_coverage),
            fmt(&c.percentile_coverage)
        ),
    )
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (data, schema) = write_cohort(tmp.path(), 800, 11);
    let runs: [(&str, Vec<String>); 4] = [
        (
            "fit-cir",
            ["fit-cir", "--input", s(&data), "--schema", s(&schema), "--t0", "30", "--t1", "90", "--c0", "120", "--b0", "28", "--mode", "all"]
                .map(String::from)
                .to_vec(),
        ),
        (
            "fit-cox",
            ["fit-cox", "--input", s(&data), "--schema", s(&schema), "--c0", "120", "--b0", "28", "--b", "50"]
                .map(String::from)
                .to_vec(),
        ),
        (
            "simulate",
            ["simulate", "--reps", "6", "--ns", "300", "--bootstrap-ns", "300", "--bootstrap-bs", "20"]
                .map(String::from)
                .to_vec(),
        ),
        ("report", Vec::new()),
    ];
    let mut failures = Vec::new();
    let mut compared = 0;
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for dir in &dirs {
        // relative paths keep the resolved config, and so its hash, identical across the two runs
        let combined = dir.join("combined");
        std::fs::create_dir_all(&combined).unwrap();
        for (name, args) in &runs {
            let mut args = args.clone();
            if *name == "report" {
                args = ["report", "--input", "combined"].map(String::from).to_vec();
            }
            args.extend(["--out".to_string(), name.to_string()]);
            let out = Command::new(env!("CARGO_BIN_EXE_currstat")).args(&args).current_dir(dir).output().unwrap();
            if !out.status.success() {
                failures.push(format!("{name} exited {:?}", out.status.code()));
            }
            for (file, bytes) in data_files(&dir.join(name)) {
                if file != "manifest.json" {
                    std::fs::write(combined.join(file), bytes).unwrap();
                }
            }
        }
    }
    for (name, _) in &runs {
        let a = data_files(&dirs[0].join(name));
        let b = data_files(&dirs[1].join(name));
        compared += a.len();
        if a.is_empty() || a != b {
            failures.push(format!("{name} artifacts differ"));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{compared} data files identical across two runs of each subcommand")
        } else {
            failures.join("; ")
        },
    )
}

fn criterion_9() -> Outcome {
    let (tau, n) = (0.37, 1000);
    let hw = chernoff_half_width(tau, n, CHERNOFF_Q975);
    let exact = hw == 0.998181 * (tau / n as f64).cbrt();
    let ratio = chernoff_half_width(tau, 2 * n, CHERNOFF_Q975) / hw;
    let err = (ratio - 2f64.powf(-1.0 / 3.0)).abs();
    outcome(exact && err <= 1e-12, format!("half-width {hw:.12}, doubling ratio error {err:.1e}"))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, title: &str, limit: Duration, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let in_time = took <= limit;
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {id}. {title}: {}; {:.1} s (limit {} s{})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", exceeded" }
        );
    };
    let min = |m: u64| Duration::from_secs(60 * m);

    report(1, "isotonic oracle equivalence", Duration::from_secs(10), &mut criterion_1);
    report(2, "NPMLE reduction", Duration::from_secs(30), &mut criterion_2);

    let sim_start = Instant::now();
    let both = [Mode::Extended, Mode::CompleteCase];
    let s3 = run_cir_study(&ScenarioSpec::new(Scenario::S3, 1000, 300, SEED), &both, &estimated()).unwrap();
    let shared = sim_start.elapsed();
    report(3, "bias ordering", min(45), &mut || {
        let mut o = criterion_3(&s3);
        o.detail.push_str(&format!(" (+{:.1} s shared S3 run)", shared.as_secs_f64()));
        o
    });
    report(4, "extended coverage", min(45), &mut || {
        let s1 = run_cir_study(&ScenarioSpec::new(Scenario::S1, 1000, 300, SEED), &both, &estimated()).unwrap();
        criterion_4(&s1, &s3)
    });
    report(5, "Cox gradient check", Duration::from_secs(5), &mut criterion_5);
    report(6, "Cox consistency", min(20), &mut criterion_6);
    report(7, "bootstrap coverage", min(60), &mut criterion_7);
    report(8, "determinism", min(10), &mut criterion_8);
    report(9, "CI width formula", Duration::from_secs(1), &mut criterion_9);

    println!("{} of 9 criteria failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

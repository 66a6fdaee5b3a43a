use currstat_core::sim::{generate, run_bootstrap_study, run_cir_study, DGPSpec, NuisanceSource, Scenario, ScenarioSpec};
use currstat_core::Mode;

#[test]
fn t1_sits_at_target_respondent_quantile() {
    for (sc, target) in [(Scenario::S1, 0.10), (Scenario::S2, 0.05), (Scenario::S3, 0.025)] {
        let dgp = DGPSpec::new(sc.c0());
        let grid = dgp.grid();
        assert!((dgp.respondent_tail(&grid, 1.5) - target).abs() < 0.01);
        let (d, _) = generate(&dgp, 100_000, 17).unwrap();
        let resp = d.respondents();
        let above = resp.observations().iter().filter(|o| o.y > 1.5).count() as f64 / resp.len() as f64;
        assert!((above - target).abs() < 0.01, "{sc:?}: {above}");
    }
}

#[test]
fn nonresponse_matches_closed_form() {
    let dgp = DGPSpec::new(1.65);
    let n = 100_000;
    let (d, latent) = generate(&dgp, n, 4).unwrap();
    let p = dgp.nonresponse(&dgp.grid());
    let obs = (n - d.n_respondents()) as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((obs - p).abs() < 2.0 * se, "{obs} vs {p}");

    let mut distinct: Vec<f64> = latent.iter().map(|l| l.y_star).filter(|&y| y < dgp.c0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    assert!(distinct.len() <= 50);
    for (o, l) in d.observations().iter().zip(&latent) {
        assert_eq!(o.delta, l.y_star < dgp.c0 && l.t <= o.y);
    }
}

#[test]
fn marginal_survival_closed_form() {
    let dgp = DGPSpec::new(2.1);
    assert_eq!(dgp.survival(0.0), 1.0);
    let mut s = 0.0;
    for w1 in [-1.0f64, 1.0] {
        for w2 in [-1.0f64, 1.0] {
            s += (-(1.5 * (-(0.4 * w1 - 0.2 * w2)).exp()).powf(0.75)).exp() / 4.0;
        }
    }
    assert!((dgp.survival(1.5) - s).abs() < 1e-12);
}

#[test]
fn studies_are_deterministic() {
    let spec = ScenarioSpec::new(Scenario::S3, 300, 6, 99);
    let a = run_cir_study(&spec, &[Mode::Extended, Mode::CompleteCase], &NuisanceSource::Oracle).unwrap();
    let b = run_cir_study(&spec, &[Mode::Extended, Mode::CompleteCase], &NuisanceSource::Oracle).unwrap();
    assert_eq!(a, b);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_cir_csv(&mut ca).unwrap();
    b.write_cir_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    for c in &a.cir {
        assert!(c.coverage.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(c.integrated_abs_bias >= 0.0);
    }
}

#[test]
fn two_replicate_bootstrap_is_degenerate() {
    let r = run_bootstrap_study(Scenario::S1, &[200], &[2], 2, 3).unwrap();
    assert_eq!(r.cox.len(), 1);
    assert!(r.cox[0].degenerate);
    assert_eq!(r.cox[0].reps_requested, 2);
}

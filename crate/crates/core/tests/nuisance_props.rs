use currstat_core::nuisance::{fit_density, fit_mu, DensitySpec, EnsembleSpec, LearnerKind};
use currstat_core::sim::{generate, DGPSpec};
use currstat_core::{Dataset, DensityRatio, Observation, OutcomeRegression};

fn dgp_sample(n: usize, seed: u64) -> Dataset {
    generate(&DGPSpec::new(1.65), n, seed).unwrap().0
}

#[test]
fn conditional_ratio_averages_to_one_over_covariates() {
    let d = dgp_sample(2000, 1);
    let g = fit_density(&d, &DensitySpec::default(), 2).unwrap();
    let dgp = DGPSpec::new(1.65);
    for p in [0.1, 0.3, 0.5, 0.7, 0.85] {
        let y = dgp.marginal_quantile(p);
        let avg = d.observations().iter().map(|o| g.predict_g(y, &o.w)).sum::<f64>() / d.len() as f64;
        assert!((avg - 1.0).abs() < 0.05, "y = {y}: {avg}");
    }
    let floor = g.summary().g_floor;
    assert!(d.observations().iter().all(|o| g.predict_g(o.y, &o.w) >= floor));
    assert!((0.0..=1.0).contains(&g.summary().truncated_fraction));
}

#[test]
fn stacked_risk_no_worse_than_worst_learner() {
    let d = dgp_sample(2000, 3).respondents();
    let mu = fit_mu(&d, &EnsembleSpec::default(), 4).unwrap();
    let s = mu.summary();
    let worst = s.learners.iter().map(|l| l.cv_mse).fold(0.0, f64::max);
    assert!(s.ensemble_cv_mse <= worst, "{} > {worst}", s.ensemble_cv_mse);
    let w = mu.weights();
    assert!(w.iter().all(|&x| x >= 0.0));
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn fits_are_reproducible() {
    let d = dgp_sample(600, 5);
    let a = fit_mu(&d.respondents(), &EnsembleSpec::default(), 8).unwrap();
    let b = fit_mu(&d.respondents(), &EnsembleSpec::default(), 8).unwrap();
    let ga = fit_density(&d, &DensitySpec::default(), 8).unwrap();
    let gb = fit_density(&d, &DensitySpec::default(), 8).unwrap();
    assert_eq!(a.summary(), b.summary());
    assert_eq!(ga.summary(), gb.summary());
    for o in d.observations() {
        assert_eq!(a.predict(o.y, &o.w).to_bits(), b.predict(o.y, &o.w).to_bits());
        assert_eq!(ga.predict_g(o.y, &o.w).to_bits(), gb.predict_g(o.y, &o.w).to_bits());
    }
}

#[test]
fn degenerate_and_marginal_mean_fits() {
    let rows = |flag: &dyn Fn(usize) -> bool| -> Dataset {
        let obs = (0..50)
            .map(|i| Observation::new(vec![(i % 2) as f64], 1.0 + i as f64 * 0.1, flag(i)))
            .collect();
        Dataset::new(obs, 100.0, 0.0, vec!["x".into()]).unwrap()
    };
    let zero = fit_mu(&rows(&|_| false), &EnsembleSpec::default(), 1).unwrap();
    assert!(zero.is_degenerate());
    assert!((zero.predict(2.0, &[1.0]) - 1e-6).abs() < 1e-15);

    let spec = EnsembleSpec {
        learners: vec![LearnerKind::MarginalMean],
        ..EnsembleSpec::default()
    };
    let mm = fit_mu(&rows(&|i| i % 5 < 2), &spec, 1).unwrap();
    for (y, x) in [(1.0, 0.0), (3.3, 1.0), (50.0, 0.0)] {
        assert!((mm.predict(y, &[x]) - 0.4).abs() < 1e-12);
    }
}

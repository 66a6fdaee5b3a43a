use currstat_core::data::CovariateSchema;
use currstat_core::{ingest_csv, Dataset, Observation};
use proptest::prelude::*;

fn rows() -> impl Strategy<Value = Vec<(f64, f64, f64, bool)>> {
    prop::collection::vec((-1e6f64..1e6, 0.0f64..1.0, 0.001f64..10.0, any::<bool>()), 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_ingest_is_identity(rows in rows(), nonresp in prop::collection::vec(any::<bool>(), 40)) {
        let c0 = 10.0;
        let obs: Vec<Observation> = rows
            .iter()
            .zip(&nonresp)
            .map(|(&(a, b, y, d), &nr)| if nr { Observation::new(vec![a, b], c0, false) } else { Observation::new(vec![a, b], y, d) })
            .collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let d = Dataset::new(obs, c0, 0.0, names.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        d.write_csv_path(&path).unwrap();
        let (back, report) = ingest_csv(&path, &CovariateSchema::numeric(&names), c0, 0.0).unwrap();
        prop_assert_eq!(report.n_read, d.len());
        prop_assert_eq!(report.n_dropped_missing, 0);
        for (x, y) in d.observations().iter().zip(back.observations()) {
            prop_assert_eq!(x.y.to_bits(), y.y.to_bits());
            prop_assert_eq!(x.delta, y.delta);
            prop_assert_eq!(x.w.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y.w.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
        let (r, nr) = back.split_respondents();
        prop_assert_eq!(r.len() + nr.len(), back.len());
        prop_assert!(r.observations().iter().all(|o| o.y < c0));
        prop_assert!(nr.observations().iter().all(|o| o.y == c0 && !o.delta));
    }
}

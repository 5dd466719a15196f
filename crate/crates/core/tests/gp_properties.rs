use proptest::prelude::*;
use rlcbf_core::gp::{GpModel, KernelHyper, Residual};

fn residuals(n: usize) -> impl Strategy<Value = Vec<Residual>> {
    prop::collection::vec((prop::collection::vec(-2.0f64..2.0, 2), -1.0f64..1.0), n).prop_map(|v| {
        v.into_iter()
            .map(|(input, d)| Residual {
                input,
                d_hat: vec![d],
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn new_observation_never_widens_the_band(
        data in residuals(12),
        query in prop::collection::vec(-2.0f64..2.0, 2),
        target in -1.0f64..1.0,
        noise in prop::sample::select(vec![0.0, 1e-4, 1e-2]),
    ) {
        let hyper = KernelHyper { noise_variance: noise, ..KernelHyper::default() };
        let mut gp = GpModel::fit(&data, 1, hyper, 100).unwrap();
        let before = gp.predict_at(&query).unwrap().sigma[0];
        gp.window_update(&[Residual { input: query.clone(), d_hat: vec![target] }]).unwrap();
        let after = gp.predict_at(&query).unwrap().sigma[0];
        prop_assert!(after <= before + 1e-9, "{after} > {before}");
    }

    #[test]
    fn window_holds_exactly_the_latest(
        batches in prop::collection::vec(residuals(7), 1..5),
        cap in 1usize..15,
    ) {
        let mut gp = GpModel::empty(1, KernelHyper::default(), cap).unwrap();
        let mut history = Vec::new();
        for b in &batches {
            gp.window_update(b).unwrap();
            history.extend(b.iter().map(|r| r.input.clone()));
        }
        let kept: Vec<Vec<f64>> = gp.inputs().map(|x| x.to_vec()).collect();
        let start = history.len().saturating_sub(cap);
        prop_assert_eq!(&kept[..], &history[start..]);
        prop_assert_eq!(gp.cholesky_factor().len(), kept.len() * kept.len());
    }
}

use proptest::prelude::*;
use rlcbf_core::approx::{Mlp, OutputActivation};

proptest! {
    #[test]
    fn scaled_tanh_output_stays_within_scale(
        seed in any::<u64>(),
        scale in 0.1f64..50.0,
        x in prop::collection::vec(prop_oneof![-1e3f64..1e3, -1.0f64..1.0], 3),
    ) {
        let net = Mlp::new(&[3, 16, 16, 2], OutputActivation::ScaledTanh(scale), seed).unwrap();
        for y in net.forward(&x).unwrap() {
            prop_assert!(y.abs() <= scale, "{y} exceeds {scale}");
        }
    }

    #[test]
    fn same_seed_same_outputs(seed in any::<u64>(), x in prop::collection::vec(-2.0f64..2.0, 4)) {
        let a = Mlp::new(&[4, 8, 1], OutputActivation::Identity, seed).unwrap();
        let b = Mlp::new(&[4, 8, 1], OutputActivation::Identity, seed).unwrap();
        prop_assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
    }
}

use proptest::prelude::*;
use rlcbf_core::cbf::{safe_filter, AffineBarrier, FilterProblem, NominalModel};
use rlcbf_core::env::{BarrierShape, CarChain, CarParams, Environment, Pendulum};
use rlcbf_core::gp::{ExactResidual, Prediction, ResidualModel};
use rlcbf_core::seeded_rng;

/// Same mean and spread at every state.
struct Constant(Prediction);

impl ResidualModel for Constant {
    fn predict(&self, _: &[f64], _: &[f64]) -> rlcbf_core::Result<Prediction> {
        Ok(self.0.clone())
    }
}

fn pendulum_state() -> impl Strategy<Value = Vec<f64>> {
    (-1.0f64..1.0, -3.0f64..3.0).prop_map(|(a, b)| vec![a, b])
}

fn spread() -> impl Strategy<Value = Prediction> {
    (-0.05f64..0.05, -0.5f64..0.5, 0.0f64..0.02, 0.0f64..0.3).prop_map(|(m0, m1, s0, s1)| {
        Prediction {
            mu: vec![m0, m1],
            sigma: vec![s0, s1],
        }
    })
}

fn filter(
    env: &dyn Environment,
    state: &[f64],
    proposed: &[f64],
    barriers: &[AffineBarrier],
    residual: &dyn ResidualModel,
    k_delta: f64,
) -> rlcbf_core::cbf::FilterResult {
    safe_filter(&FilterProblem {
        state,
        input: state,
        t: 0,
        proposed,
        barriers,
        nominal: env.nominal(),
        residual,
        k_delta,
        action_box: env.action_box(),
        slack_weight: 1e12,
    })
    .unwrap()
}

fn shape() -> BarrierShape {
    BarrierShape {
        eta: 0.5,
        lookahead: 0.25,
    }
}

proptest! {
    #[test]
    fn scaled_barriers_give_the_same_correction(
        s in pendulum_state(),
        u in -15.0f64..15.0,
        pred in spread(),
        lambdas in prop::collection::vec(0.1f64..10.0, 4),
    ) {
        let env = Pendulum::default();
        let barriers = env.default_barriers(shape());
        let scaled: Vec<_> = barriers.iter().zip(&lambdas).map(|(b, l)| b.scaled(*l)).collect();
        let res = Constant(pred);
        let a = filter(&env, &s, &[u], &barriers, &res, 2.0);
        let b = filter(&env, &s, &[u], &scaled, &res, 2.0);
        prop_assume!(a.eps == 0.0);
        prop_assert_eq!(b.eps, 0.0);
        prop_assert!((a.u_cbf[0] - b.u_cbf[0]).abs() <= 1e-7 * (1.0 + a.u_cbf[0].abs()));
    }

    #[test]
    fn larger_k_delta_never_corrects_less(
        s in pendulum_state(),
        u in -15.0f64..15.0,
        pred in spread(),
        k in 0.0f64..3.0,
        dk in 0.0f64..2.0,
    ) {
        let env = Pendulum::default();
        let barriers = env.default_barriers(shape());
        let res = Constant(pred);
        let lo = filter(&env, &s, &[u], &barriers, &res, k);
        let hi = filter(&env, &s, &[u], &barriers, &res, k + dk);
        prop_assert!(hi.eps >= lo.eps - 1e-12);
        if hi.eps == 0.0 {
            prop_assert!(hi.u_cbf[0].abs() >= lo.u_cbf[0].abs() - 1e-9);
        }
    }

    #[test]
    fn unslacked_car_step_keeps_the_barrier_inequality(seed in any::<u64>(), t in 0usize..300, u in -100.0f64..100.0) {
        let env = CarChain::new(CarParams { noise_std: 0.0, ..CarParams::default() });
        let barriers = env.default_barriers(BarrierShape { eta: 0.5, lookahead: 0.5 });
        let truth = env.true_model().clone();
        let nominal = env.nominal();
        let exact = ExactResidual(|s: &[f64]| {
            let a = truth.drift(s, 0);
            let b = nominal.drift(s, 0);
            a.iter().zip(&b).map(|(x, y)| x - y).collect()
        });
        let s = env.sample_init(&mut seeded_rng(seed), &barriers);
        let f = safe_filter(&FilterProblem {
            state: &s,
            input: &s,
            t,
            proposed: &[u],
            barriers: &barriers,
            nominal,
            residual: &exact,
            k_delta: 2.0,
            action_box: env.action_box(),
            slack_weight: 1e12,
        })
        .unwrap();
        prop_assume!(f.eps == 0.0);
        let next = env.step(&s, &f.deployed(&[u]), t, &mut seeded_rng(0));
        for b in &barriers {
            let (h, h_next) = (b.value(&s), b.value(&next));
            prop_assert!(h_next >= (1.0 - b.eta) * h - 1e-9 * (1.0 + h.abs()), "{h_next} < {}", (1.0 - b.eta) * h);
        }
    }
}

use proptest::prelude::*;
use rlcbf_core::env::{CarChain, CarParams, Environment, Pendulum, PendulumParams};
use rlcbf_core::gp::extract_residual;
use rlcbf_core::{seeded_rng, Rng};

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn quiet_car() -> CarChain {
    CarChain::new(CarParams {
        noise_std: 0.0,
        ..CarParams::default()
    })
}

/// `step(s, a) - step(s, 0) == a * (step(s, 1) - step(s, 0))`.
fn check_linear(env: &dyn Environment, s: &[f64], a: f64, t: usize) -> Result<(), TestCaseError> {
    let rng = &mut seeded_rng(0);
    let step = |u: f64, rng: &mut Rng| env.step(s, &[u], t, rng);
    let zero = step(0.0, rng);
    let unit = diff(&step(1.0, rng), &zero);
    let got = diff(&step(a, rng), &zero);
    for (g, u) in got.iter().zip(&unit) {
        prop_assert!(
            (g - a * u).abs() <= 1e-9 * (1.0 + g.abs()),
            "{g} vs {}",
            a * u
        );
    }
    Ok(())
}

proptest! {
    #[test]
    fn pendulum_is_control_affine(th in -1.0f64..1.0, om in -4.0f64..4.0, a in -15.0f64..15.0) {
        check_linear(&Pendulum::default(), &[th, om], a, 0)?;
    }

    #[test]
    fn car_is_control_affine(seed in any::<u64>(), t in 0usize..300, a in -100.0f64..100.0) {
        let env = quiet_car();
        let s = env.sample_init(&mut seeded_rng(seed), &[]);
        check_linear(&env, &s, a, t)?;
    }

    #[test]
    fn true_parameters_leave_no_residual(th in -1.0f64..1.0, om in -4.0f64..4.0, a in -15.0f64..15.0, seed in any::<u64>(), t in 0usize..300) {
        let p = PendulumParams::default();
        let pend = Pendulum::new(PendulumParams { nominal_mass: p.mass, nominal_length: p.length, ..p });
        let s = [th, om];
        let next = pend.step(&s, &[a], 0, &mut seeded_rng(0));
        let d = extract_residual(&s, &[a], &next, pend.nominal(), 0).unwrap();
        prop_assert!(d.iter().all(|v| v.abs() < 1e-12), "{d:?}");

        let c = CarParams::default();
        let car = CarChain::new(CarParams { noise_std: 0.0, nominal_kp: c.kp, nominal_kb: c.kb, nominal_kd: c.kd, ..c });
        let s = car.sample_init(&mut seeded_rng(seed), &[]);
        let next = car.step(&s, &[a], t, &mut seeded_rng(0));
        let d = extract_residual(&s, &[a], &next, car.nominal(), t).unwrap();
        prop_assert!(d.iter().all(|v| v.abs() < 1e-9), "{d:?}");
    }
}

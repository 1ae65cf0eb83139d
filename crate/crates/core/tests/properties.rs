use std::sync::Arc;

use proptest::prelude::*;

use msint::kernel::{build_schedule, cosine_kernel, KernelId};
use msint::multiscale::{
    dns_integrate, flavors_integrate, predicted_efficiency, validate_params, vshmm_integrate,
    MethodConfig, ParamStatus,
};
use msint::systems::{make_const_spiral, make_dissipative, modulus_map, PartitionedSystem};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedule_tiles_macro_step(
        dt_exp in -6.0f64..-3.0,
        alpha in 0.0f64..200.0,
        macro_dt in 0.01f64..1.0,
    ) {
        let dt = 10f64.powf(dt_exp);
        prop_assume!((1.0 + alpha) * dt <= macro_dt);
        let plan = build_schedule(&cosine_kernel(), dt, alpha, macro_dt).unwrap();
        prop_assert!((plan.covered() - macro_dt).abs() <= 1e-12 * macro_dt.max(1.0) * 10.0);
        prop_assert!(plan.cycles.iter().all(|c| c.micro > 0.0 && c.meso >= 0.0));
        let n = plan.cycles.len();
        for k in 0..n / 2 {
            prop_assert_eq!(plan.cycles[k].meso.to_bits(), plan.cycles[n - 1 - k].meso.to_bits());
        }
    }

    #[test]
    fn schedule_mean_meso_is_alpha_dt(n in 20usize..400, alpha in 1.0f64..150.0) {
        let macro_dt = 0.2;
        let dt = macro_dt / (n as f64 * (1.0 + alpha));
        let plan = build_schedule(&cosine_kernel(), dt, alpha, macro_dt).unwrap();
        prop_assert_eq!(plan.n_cycles, n);
        prop_assert!((plan.mean_meso() / dt - alpha).abs() <= 1e-6 * alpha);
    }

    #[test]
    fn drivers_are_deterministic(eps_exp in -4.0f64..-2.5, alpha in 1.0f64..20.0) {
        let eps = 10f64.powf(eps_exp);
        let sys = make_const_spiral(eps).unwrap();
        let slow = modulus_map();
        let cfg = MethodConfig::vshmm(eps / 10.0, alpha, 0.1, 0.2);
        let a = vshmm_integrate(&sys, &cfg, &slow).unwrap();
        let b = vshmm_integrate(&sys, &cfg, &slow).unwrap();
        prop_assert_eq!(&a.states, &b.states);
        prop_assert_eq!(a.counters, b.counters);
    }

    #[test]
    fn flavors_without_meso_is_dns(k in 500u32..2000) {
        let sys = make_const_spiral(1e-3).unwrap();
        let slow = modulus_map();
        let dt = 0.1 / f64::from(k);
        let f = flavors_integrate(&sys, &MethodConfig::flavors(dt, 0.0, 0.1, 0.3), &slow).unwrap();
        let d = dns_integrate(&sys, &MethodConfig::dns(dt, 0.1, 0.3), &slow).unwrap();
        prop_assert_eq!(f.states, d.states);
    }

    #[test]
    fn embedding_matches_partitioned_fields(
        xi in -5.0f64..5.0,
        eta in -5.0f64..5.0,
        eps in 1e-5f64..1e-1,
    ) {
        let part = make_dissipative(eps).unwrap();
        let split = part.to_split();
        let (mut a0, mut a1) = ([0.0], [0.0]);
        part.eval_f0(&[xi], &[eta], &mut a0).unwrap();
        part.eval_f1(&[xi], &[eta], &mut a1).unwrap();
        let (mut b0, mut b1) = ([0.0; 2], [0.0; 2]);
        split.eval_f0(&[xi, eta], &mut b0).unwrap();
        split.eval_f1(&[xi, eta], &mut b1).unwrap();
        prop_assert_eq!(b0, [a0[0], 0.0]);
        prop_assert_eq!(b1, [0.0, a1[0]]);
    }

    #[test]
    fn efficiency_at_least_one(alpha in 1.0f64..1e4) {
        let e = predicted_efficiency(alpha);
        prop_assert!(e >= 1.0);
        prop_assert_eq!(e, (1.0 + alpha).ceil() / 2.0);
    }

    #[test]
    fn param_status_thresholds(alpha in 0.0f64..1000.0, eps_exp in -6.0f64..0.0) {
        let eps = 10f64.powf(eps_exp);
        let r = validate_params(alpha, eps, eps / 10.0, alpha * eps / 10.0).unwrap();
        let a = (alpha + 1.0) * eps;
        let expected = if a <= 0.1 {
            ParamStatus::Ok
        } else if a <= 1.0 {
            ParamStatus::Warning
        } else {
            ParamStatus::Error
        };
        prop_assert_eq!(r.status, expected);
    }
}

#[test]
fn uniform_and_cosine_differ() {
    // Guard against the reduction oracle passing trivially.
    let sys = make_const_spiral(1e-3).unwrap();
    let slow = modulus_map();
    let base = MethodConfig::vshmm(1e-4, 9.0, 0.1, 0.2);
    let a = vshmm_integrate(&sys, &base, &slow).unwrap();
    let b = vshmm_integrate(&sys, &base.clone().with_kernel(KernelId::Uniform), &slow).unwrap();
    assert_ne!(a.states, b.states);
}

#[test]
fn partitioned_constructor_is_usable() {
    let f0: msint::systems::PartFieldFn = Arc::new(|xi: &[f64], _: &[f64], o: &mut [f64]| {
        o[0] = -xi[0];
        Ok(())
    });
    let f1: msint::systems::PartFieldFn = Arc::new(|_: &[f64], eta: &[f64], o: &mut [f64]| {
        o[0] = -eta[0];
        Ok(())
    });
    let p = PartitionedSystem::new("decay", 1e-2, vec![1.0], vec![2.0], f0, f1).unwrap();
    assert_eq!(p.to_split().initial_state(), &[1.0, 2.0]);
}

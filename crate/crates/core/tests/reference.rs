use std::sync::Arc;

use msint::harness::loglog_slope;
use msint::multiscale::{vshmm_integrate, MethodConfig};
use msint::steppers::Scheme;
use msint::systems::{benchmark, FieldFn, ReferenceSolution, SlowMap, SplitSystem};

#[test]
fn const_spiral_oracle_matches_averaged_closed_form() {
    let b = benchmark("const_spiral", 1e-5).unwrap();
    let oracle = ReferenceSolution::dns_oracle(&b, 3.0, None).unwrap();
    for t in [1.0, 2.0, 3.0] {
        let got = oracle.evaluate(t)[0];
        let want = (t / 4.0f64).exp();
        assert!((got - want).abs() <= 1e-4, "t = {t}: {got} vs {want}");
    }
}

fn decay() -> (SplitSystem, SlowMap) {
    let f0: FieldFn = Arc::new(|x: &[f64], o: &mut [f64]| {
        o[0] = -x[0];
        Ok(())
    });
    let f1: FieldFn = Arc::new(|_: &[f64], o: &mut [f64]| {
        o[0] = 0.0;
        Ok(())
    });
    let sys = SplitSystem::new("decay", 1e-3, vec![1.0], f0, f1).unwrap();
    let slow = SlowMap::new(vec!["x".into()], Arc::new(|x: &[f64], o: &mut [f64]| o[0] = x[0]));
    (sys, slow)
}

// With no stiff part the only error left is the meso integrator's, so the
// convergence order in the mean meso step is the meso order.
#[test]
fn meso_order_without_stiff_part() {
    let (sys, slow) = decay();
    let exact = (-1.0f64).exp();
    for (order, want) in [(1u8, 1.0), (2, 2.0)] {
        let pts: Vec<(f64, f64)> = (0..5)
            .map(|k| {
                let dt = 1e-3 / 2f64.powi(k);
                let cfg = MethodConfig::vshmm(dt, 99.0, 1.0, 1.0)
                    .with_micro(Scheme::Rk4)
                    .with_meso_order(order);
                let t = vshmm_integrate(&sys, &cfg, &slow).unwrap();
                (t.mean_meso, (t.final_slow()[0] - exact).abs())
            })
            .collect();
        let s = loglog_slope(&pts).unwrap();
        assert!((s - want).abs() < 0.1, "order {order}: slope {s}");
    }
}

#[test]
fn const_spiral_macro_error_and_flavors_comparison() {
    use msint::harness::ErrorReport;
    use msint::multiscale::flavors_integrate;
    use msint::systems::Problem;

    let eps = 1.0 / 3400.0;
    let (alpha, macro_dt, t) = (50.0, 0.25, 3.0);
    let b = benchmark("const_spiral", eps).unwrap();
    let reference = ReferenceSolution::closed_form(Problem::ConstSpiral).unwrap();
    let n = (macro_dt / ((1.0 + alpha) * eps / 10.0)).round();
    let dt = macro_dt / (n * (1.0 + alpha));
    let v = MethodConfig::vshmm(dt, alpha, macro_dt, t);
    let f = MethodConfig::flavors(dt, alpha * dt, macro_dt, t);
    let ev = ErrorReport::new("vshmm", &v, &vshmm_integrate(&b.system, &v, &b.slow).unwrap(), &reference);
    let ef = ErrorReport::new("flavors", &f, &flavors_integrate(&b.system, &f, &b.slow).unwrap(), &reference);
    // At macro_dt = 0.25 the kernel-regularity term (alpha eps)^2 / macro_dt
    // dominates the O(eps) averaging error; 70 eps is the constant measured
    // against the DNS oracle (68.5 eps) and frozen here.
    assert!(ev.sup_norm <= 70.0 * eps, "{}", ev.sup_norm);
    assert!(ev.sup_norm < ef.sup_norm);
}

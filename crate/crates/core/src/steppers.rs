//! Explicit one-step integrators for autonomous fields.
//!
//! Every scheme works in place on a caller-owned state and a reusable
//! [`Workspace`], so the trajectory drivers never allocate per step. The
//! free functions [`euler_step`], [`rk2_step`] and [`rk4_step`] are thin
//! allocating wrappers over the same code path.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FieldError, StepError};

/// An autonomous vector field `x -> v(x)` on R^dim.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), FieldError>;
}

impl<V: VectorField + ?Sized> VectorField for &V {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        (**self).eval(x, out)
    }
}

/// Closure-backed field, mostly for tests and ad-hoc problems.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        (self.f)(x, out);
        Ok(())
    }
}

/// Field wrapper counting every evaluation.
pub struct CountedField<V> {
    inner: V,
    count: Cell<u64>,
}

impl<V: VectorField> CountedField<V> {
    pub fn new(inner: V) -> Self {
        Self {
            inner,
            count: Cell::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.get()
    }

    pub fn inner(&self) -> &V {
        &self.inner
    }
}

impl<V: VectorField> VectorField for CountedField<V> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        self.count.set(self.count.get() + 1);
        self.inner.eval(x, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Rk2,
    Rk4,
}

impl Scheme {
    pub fn evals_per_step(self) -> u64 {
        match self {
            Scheme::Euler => 1,
            Scheme::Rk2 => 2,
            Scheme::Rk4 => 4,
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Scheme::Euler => 1,
            Scheme::Rk2 => 2,
            Scheme::Rk4 => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Rk2 => "rk2",
            Scheme::Rk4 => "rk4",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "rk2" => Ok(Scheme::Rk2),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(format!("unknown scheme '{other}' (valid: euler, rk2, rk4)")),
        }
    }
}

/// Stage buffers for one state dimension.
#[derive(Debug, Clone)]
pub struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.k1.len()
    }
}

/// Advance `x` in place by one step of `scheme` with step `h`.
pub fn step_in_place<V: VectorField + ?Sized>(
    scheme: Scheme,
    field: &V,
    x: &mut [f64],
    h: f64,
    ws: &mut Workspace,
) -> Result<(), StepError> {
    debug_assert_eq!(x.len(), ws.dim());
    let Workspace {
        k1,
        k2,
        k3,
        k4,
        tmp,
    } = ws;
    match scheme {
        Scheme::Euler => {
            field.eval(x, k1)?;
            for (xi, ki) in x.iter_mut().zip(k1.iter()) {
                *xi += h * ki;
            }
        }
        Scheme::Rk2 => {
            let half = 0.5 * h;
            field.eval(x, k1)?;
            for i in 0..x.len() {
                tmp[i] = x[i] + half * k1[i];
            }
            field.eval(tmp, k2)?;
            for (xi, ki) in x.iter_mut().zip(k2.iter()) {
                *xi += h * ki;
            }
        }
        Scheme::Rk4 => {
            let half = 0.5 * h;
            field.eval(x, k1)?;
            for i in 0..x.len() {
                tmp[i] = x[i] + half * k1[i];
            }
            field.eval(tmp, k2)?;
            for i in 0..x.len() {
                tmp[i] = x[i] + half * k2[i];
            }
            field.eval(tmp, k3)?;
            for i in 0..x.len() {
                tmp[i] = x[i] + h * k3[i];
            }
            field.eval(tmp, k4)?;
            let sixth = h / 6.0;
            for i in 0..x.len() {
                x[i] += sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    check_finite(x)
}

pub(crate) fn check_finite(x: &[f64]) -> Result<(), StepError> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(component) => Err(StepError::NonFinite {
            component,
            value: x[component],
        }),
        None => Ok(()),
    }
}

fn step_owned<V: VectorField + ?Sized>(
    scheme: Scheme,
    field: &V,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>, StepError> {
    let mut out = x.to_vec();
    let mut ws = Workspace::new(x.len());
    step_in_place(scheme, field, &mut out, h, &mut ws)?;
    Ok(out)
}

/// `x + h v(x)`.
pub fn euler_step<V: VectorField + ?Sized>(
    field: &V,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>, StepError> {
    step_owned(Scheme::Euler, field, x, h)
}

/// Explicit midpoint rule: `x* = x + h/2 v(x)`, then `x + h v(x*)`.
pub fn rk2_step<V: VectorField + ?Sized>(
    field: &V,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>, StepError> {
    step_owned(Scheme::Rk2, field, x, h)
}

/// Classical four-stage Runge-Kutta.
pub fn rk4_step<V: VectorField + ?Sized>(
    field: &V,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>, StepError> {
    step_owned(Scheme::Rk4, field, x, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> FnField<impl Fn(&[f64], &mut [f64])> {
        FnField::new(1, |x: &[f64], out: &mut [f64]| out[0] = -x[0])
    }

    #[test]
    fn euler_examples() {
        assert_eq!(euler_step(&decay(), &[1.0], 0.1).unwrap(), vec![0.9]);
        assert_eq!(euler_step(&decay(), &[1.0], 0.0).unwrap(), vec![1.0]);
        let c = 3.0;
        let constant = FnField::new(1, move |_: &[f64], out: &mut [f64]| out[0] = c);
        assert_eq!(euler_step(&constant, &[0.0], 0.5).unwrap(), vec![1.5]);
    }

    #[test]
    fn rk2_examples() {
        let x = rk2_step(&decay(), &[1.0], 0.1).unwrap();
        assert!((x[0] - 0.905).abs() < 1e-15);
        let constant = FnField::new(1, |_: &[f64], out: &mut [f64]| out[0] = -2.5);
        assert_eq!(rk2_step(&constant, &[0.0], 0.3).unwrap(), vec![0.3 * -2.5]);
        for &a in &[-3.0f64, -1.0, 0.5, 2.0] {
            for &h in &[0.01, 0.02, 0.05] {
                if (a * h).abs() > 0.1 {
                    continue;
                }
                let lin = FnField::new(1, move |x: &[f64], out: &mut [f64]| out[0] = a * x[0]);
                let got = rk2_step(&lin, &[1.0], h).unwrap()[0];
                let bound = (a * h).abs().powi(3);
                assert!((got - (a * h).exp()).abs() <= bound, "a={a} h={h}");
            }
        }
    }

    #[test]
    fn rk4_examples() {
        let x = rk4_step(&decay(), &[1.0], 0.1).unwrap();
        // 1 - h + h^2/2 - h^3/6 + h^4/24
        let taylor = 1.0 - 0.1 + 0.005 - 0.001 / 6.0 + 0.0001 / 24.0;
        assert!((x[0] - taylor).abs() < 1e-15);
        assert!((x[0] - 0.904_837_5).abs() < 1e-8);
        assert_eq!(rk4_step(&decay(), &[1.0], 0.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn rk4_integrates_cubic_quadrature_exactly() {
        // (t, y) with t' = 1, y' = t^3: y(h) = h^4 / 4 exactly.
        let f = FnField::new(2, |x: &[f64], out: &mut [f64]| {
            out[0] = 1.0;
            out[1] = x[0].powi(3);
        });
        for &(t0, h) in &[(0.0, 0.5), (1.0, 0.25), (-0.5, 1.0)] {
            let x = rk4_step(&f, &[t0, 0.0], h).unwrap();
            let t1: f64 = t0 + h;
            let exact = (t1.powi(4) - t0.powi(4)) / 4.0;
            assert!((x[1] - exact).abs() < 1e-14, "t0={t0} h={h}");
        }
    }

    #[test]
    fn eval_counts_per_step() {
        for scheme in [Scheme::Euler, Scheme::Rk2, Scheme::Rk4] {
            let f = CountedField::new(decay());
            let mut x = vec![1.0];
            let mut ws = Workspace::new(1);
            for _ in 0..7 {
                step_in_place(scheme, &f, &mut x, 0.01, &mut ws).unwrap();
            }
            assert_eq!(f.count(), 7 * scheme.evals_per_step());
        }
    }

    #[test]
    fn non_finite_is_reported() {
        let blowup = FnField::new(2, |_: &[f64], out: &mut [f64]| {
            out[0] = 0.0;
            out[1] = f64::INFINITY;
        });
        let err = euler_step(&blowup, &[0.0, 0.0], 0.1).unwrap_err();
        assert!(matches!(err, StepError::NonFinite { component: 1, .. }));
    }

    #[test]
    fn scheme_parse_round_trip() {
        for s in [Scheme::Euler, Scheme::Rk2, Scheme::Rk4] {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("rk3".parse::<Scheme>().is_err());
    }
}

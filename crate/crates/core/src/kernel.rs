//! Step-size kernels, the warped clock, and per-macro-step cycle schedules.
//!
//! A kernel `K` is a nonnegative weight on `[0, 1]` with unit integral whose
//! first `q` derivatives vanish at both ends. Rescaled to a macro interval
//! `[0, dT]` as `K(t/dT)`, its antiderivative `Theta(t) = dT * Kint(t/dT)` is a
//! monotone bijection of `[0, dT]`, and the mesoscopic step at time `t` is
//! `alpha * dt * K(Theta^{-1}(t mod dT) / dT)`.
//!
//! [`build_schedule`] realizes that profile as a finite list of
//! `(micro, meso)` step pairs: `N = round(dT / ((1 + alpha) dt))` cycles with
//! meso steps proportional to `K` sampled on the midpoint grid of the warped
//! clock, normalized so the cycles cover `dT` exactly.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelId {
    Cosine,
    Uniform,
    Quadratic,
}

pub const KERNEL_IDS: [&str; 3] = ["cosine", "uniform", "quadratic"];

impl KernelId {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelId::Cosine => "cosine",
            KernelId::Uniform => "uniform",
            KernelId::Quadratic => "quadratic",
        }
    }

    pub fn kernel(self) -> Kernel {
        match self {
            KernelId::Cosine => cosine_kernel(),
            KernelId::Uniform => uniform_kernel(),
            KernelId::Quadratic => quadratic_kernel(),
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(KernelId::Cosine),
            "uniform" => Ok(KernelId::Uniform),
            "quadratic" => Ok(KernelId::Quadratic),
            other => Err(Error::UnknownKernel {
                name: other.to_string(),
                valid: KERNEL_IDS.join(", "),
            }),
        }
    }
}

/// Step-size weight on `[0, 1]`.
///
/// `formula` is the analytic expression; it is also evaluated slightly
/// outside `[0, 1]` by the endpoint finite-difference checks.
#[derive(Clone, Copy)]
pub struct Kernel {
    name: &'static str,
    q: u32,
    formula: fn(f64) -> f64,
    antiderivative: Option<fn(f64) -> f64>,
    symmetric: bool,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("q", &self.q)
            .field("symmetric", &self.symmetric)
            .finish_non_exhaustive()
    }
}

impl Kernel {
    /// Kernel given only by its formula; the antiderivative falls back to
    /// adaptive Simpson quadrature.
    pub fn from_formula(name: &'static str, q: u32, formula: fn(f64) -> f64, symmetric: bool) -> Self {
        Self {
            name,
            q,
            formula,
            antiderivative: None,
            symmetric,
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    /// Claimed regularity order.
    pub fn q(&self) -> u32 {
        self.q
    }

    /// Symmetric about `s = 1/2`.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.formula)(s)
    }

    /// `Kint(s) = int_0^s K`.
    pub fn antiderivative(&self, s: f64) -> f64 {
        match self.antiderivative {
            Some(f) => f(s),
            None => adaptive_simpson(self.formula, 0.0, s, 1e-14),
        }
    }

    /// Grid estimate of `sup |K|` on `[0, 1]`.
    pub fn sup_norm(&self) -> f64 {
        (0..=10_000)
            .map(|i| self.eval(i as f64 / 10_000.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `K(s) = 1 - cos(2 pi s)`, `q = 1`, `sup K = 2`.
pub fn cosine_kernel() -> Kernel {
    Kernel {
        name: "cosine",
        q: 1,
        formula: |s| 1.0 - (TWO_PI * s).cos(),
        antiderivative: Some(|s| s - (TWO_PI * s).sin() / TWO_PI),
        symmetric: true,
    }
}

/// `K = 1`. Violates the endpoint conditions; with it the variable schedule
/// collapses to constant meso steps.
pub fn uniform_kernel() -> Kernel {
    Kernel {
        name: "uniform",
        q: 0,
        formula: |_| 1.0,
        antiderivative: Some(|s| s),
        symmetric: true,
    }
}

/// `K(s) = 6 s (1 - s)`: vanishes at the ends but its slope does not.
pub fn quadratic_kernel() -> Kernel {
    Kernel {
        name: "quadratic",
        q: 1,
        formula: |s| 6.0 * s * (1.0 - s),
        antiderivative: Some(|s| s * s * (3.0 - 2.0 * s)),
        symmetric: true,
    }
}

fn simpson(f: fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
}

pub(crate) fn adaptive_simpson(f: fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    simpson_rec(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// Composite Simpson estimate of `int_0^1 K` with `panels` panels.
pub fn composite_moment(k: &Kernel, panels: usize) -> f64 {
    let panels = panels.max(1);
    let h = 1.0 / panels as f64;
    let mut sum = 0.0;
    for i in 0..panels {
        let a = i as f64 * h;
        let b = a + h;
        sum += h / 6.0 * (k.eval(a) + 4.0 * k.eval(a + 0.5 * h) + k.eval(b));
    }
    sum
}

/// Centered r-th difference quotient of `K` at `s` with spacing `h`.
fn central_derivative(k: &Kernel, r: u32, s: f64, h: f64) -> f64 {
    let mut acc = 0.0;
    let mut binom = 1.0;
    for j in 0..=r {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let offset = (r as f64 / 2.0 - j as f64) * h;
        acc += sign * binom * k.eval(s + offset);
        binom = binom * (r - j) as f64 / (j + 1) as f64;
    }
    acc / h.powi(r as i32)
}

/// Finite-difference stencil width of the endpoint regularity checks.
pub const REGULARITY_STENCIL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointCheck {
    pub order: u32,
    pub at_zero: f64,
    pub at_one: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelReport {
    pub kernel: &'static str,
    pub q: u32,
    /// `|Kint(1) - 1|` from the antiderivative.
    pub moment_defect: f64,
    /// `|int K - 1|` by composite Simpson, 10^4 panels.
    pub quadrature_moment_defect: f64,
    pub moment_passed: bool,
    pub endpoint: Vec<EndpointCheck>,
    /// Smallest kernel value on a 10^4-point grid.
    pub min_value: f64,
    pub nonnegative: bool,
}

impl KernelReport {
    pub fn passed(&self) -> bool {
        self.moment_passed && self.nonnegative && self.endpoint.iter().all(|c| c.passed)
    }

    /// Lowest derivative order whose endpoint check failed.
    pub fn first_regularity_failure(&self) -> Option<u32> {
        self.endpoint.iter().find(|c| !c.passed).map(|c| c.order)
    }
}

impl fmt::Display for KernelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
        writeln!(f, "kernel {} (q = {})", self.kernel, self.q)?;
        writeln!(
            f,
            "  moment: defect {:.3e} (closed form), {:.3e} (quadrature)  {}",
            self.moment_defect,
            self.quadrature_moment_defect,
            mark(self.moment_passed)
        )?;
        for c in &self.endpoint {
            writeln!(
                f,
                "  d^{} K at 0: {:.3e}, at 1: {:.3e}  {}",
                c.order,
                c.at_zero,
                c.at_one,
                mark(c.passed)
            )?;
        }
        write!(
            f,
            "  nonnegative: min {:.3e}  {}",
            self.min_value,
            mark(self.nonnegative)
        )
    }
}

/// Check the moment, endpoint-regularity and sign conditions of `k`.
pub fn validate_kernel(k: &Kernel, tol_moment: f64, tol_reg: f64) -> Result<KernelReport> {
    if !(tol_moment > 0.0 && tol_reg > 0.0) {
        return Err(Error::InvalidParameter("kernel tolerances must be positive".into()));
    }
    let moment_defect = (k.antiderivative(1.0) - 1.0).abs();
    let quadrature_moment_defect = (composite_moment(k, 10_000) - 1.0).abs();
    let endpoint = (0..=k.q)
        .map(|r| {
            let at_zero = central_derivative(k, r, 0.0, REGULARITY_STENCIL).abs();
            let at_one = central_derivative(k, r, 1.0, REGULARITY_STENCIL).abs();
            EndpointCheck {
                order: r,
                at_zero,
                at_one,
                passed: at_zero <= tol_reg && at_one <= tol_reg,
            }
        })
        .collect();
    let min_value = (0..=10_000)
        .map(|i| k.eval(i as f64 / 10_000.0))
        .fold(f64::INFINITY, f64::min);
    Ok(KernelReport {
        kernel: k.name,
        q: k.q,
        moment_defect,
        quadrature_moment_defect,
        moment_passed: moment_defect <= tol_moment && quadrature_moment_defect <= tol_moment.max(1e-8),
        endpoint,
        min_value,
        nonnegative: min_value >= 0.0,
    })
}

fn check_macro_dt(macro_dt: f64) -> Result<()> {
    if !(macro_dt > 0.0 && macro_dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "macro step must be positive, got {macro_dt}"
        )));
    }
    Ok(())
}

fn check_in_interval(what: &str, t: f64, macro_dt: f64) -> Result<f64> {
    let slack = 4.0 * f64::EPSILON * macro_dt;
    if !(t >= -slack && t <= macro_dt + slack) {
        return Err(Error::InvalidParameter(format!(
            "{what} = {t} outside [0, {macro_dt}]"
        )));
    }
    Ok(t.clamp(0.0, macro_dt))
}

/// Warped clock `Theta(t) = dT * Kint(t / dT)`.
pub fn theta(k: &Kernel, macro_dt: f64, t: f64) -> Result<f64> {
    check_macro_dt(macro_dt)?;
    let t = check_in_interval("t", t, macro_dt)?;
    Ok(macro_dt * k.antiderivative(t / macro_dt))
}

/// Solve `Theta(u) = tau` by safeguarded Newton on a shrinking bisection
/// bracket. Newton steps are taken only where `K > 1e-6`; near the endpoints,
/// where `Theta` is flat, the bracket does the work.
pub fn theta_inverse(k: &Kernel, macro_dt: f64, tau: f64) -> Result<f64> {
    check_macro_dt(macro_dt)?;
    let tau = check_in_interval("tau", tau, macro_dt)?;
    let target = tau / macro_dt;
    if target == 0.0 {
        return Ok(0.0);
    }
    if target == 1.0 {
        return Ok(macro_dt);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut s = target;
    for _ in 0..200 {
        let resid = k.antiderivative(s) - target;
        if resid == 0.0 {
            break;
        }
        if resid > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi.max(1e-300) {
            break;
        }
        let slope = k.eval(s);
        let newton = if slope > 1e-6 { s - resid / slope } else { f64::NAN };
        s = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(macro_dt * s)
}

/// One micro step followed by one meso step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cycle {
    pub micro: f64,
    pub meso: f64,
}

/// Cycle list covering one macro step.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulePlan {
    /// Micro step actually used (equal to the request unless the meso budget is empty).
    pub delta_t: f64,
    pub alpha: f64,
    pub macro_dt: f64,
    pub n_cycles: usize,
    /// Normalization `h_k = lambda * K(u_k / dT)`.
    pub lambda: f64,
    /// `|N - dT / ((1 + alpha) dt)|`.
    pub rounding_defect: f64,
    pub cycles: Vec<Cycle>,
}

impl SchedulePlan {
    pub fn meso_steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.cycles.iter().map(|c| c.meso)
    }

    pub fn mean_meso(&self) -> f64 {
        self.meso_steps().sum::<f64>() / self.n_cycles as f64
    }

    pub fn covered(&self) -> f64 {
        self.cycles.iter().map(|c| c.micro + c.meso).sum()
    }

    /// Rounding of `N` exceeded the 1e-6 relative tolerance.
    pub fn rounding_flagged(&self) -> bool {
        self.rounding_defect > 1e-6 * self.n_cycles as f64
    }

    /// `k,h_k` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "h_k"])?;
        for (i, c) in self.cycles.iter().enumerate() {
            w.write_record([i.to_string(), crate::harness::fmt_f64(c.meso)])?;
        }
        w.flush().map_err(|e| Error::io(Path::new("<plan>"), e))?;
        Ok(())
    }
}

/// Cycle schedule for one macro step of length `macro_dt`.
///
/// `N = round(dT / ((1 + alpha) dt))`, `u_k = (k + 1/2) dT / N`,
/// `w_k = K(u_k / dT)`, `h_k = (dT - N dt) / sum(w) * w_k`. When the meso
/// budget `dT - N dt` is not positive (alpha = 0, or alpha so small that
/// rounding eats it) the micro step is stretched to `dT / N` and all
/// `h_k = 0`.
pub fn build_schedule(k: &Kernel, delta_t: f64, alpha: f64, macro_dt: f64) -> Result<SchedulePlan> {
    if !(delta_t > 0.0 && delta_t.is_finite()) {
        return Err(Error::InvalidParameter(format!("micro step must be positive, got {delta_t}")));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    check_macro_dt(macro_dt)?;
    let cycle_len = (1.0 + alpha) * delta_t;
    if macro_dt < cycle_len * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "macro step {macro_dt} shorter than one cycle (1 + alpha) * dt = {cycle_len}"
        )));
    }
    let ratio = macro_dt / cycle_len;
    let n = ratio.round().max(1.0) as usize;
    let nf = n as f64;
    let rounding_defect = (nf - ratio).abs();

    let mut weights = vec![0.0; n];
    if k.symmetric {
        for i in 0..n.div_ceil(2) {
            let w = k.eval((i as f64 + 0.5) / nf);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
    } else {
        for (i, w) in weights.iter_mut().enumerate() {
            *w = k.eval((i as f64 + 0.5) / nf);
        }
    }
    let total: f64 = weights.iter().sum();
    let budget = macro_dt - nf * delta_t;

    let (micro, lambda) = if alpha == 0.0 || budget <= 0.0 || total <= 0.0 {
        (macro_dt / nf, 0.0)
    } else {
        (delta_t, budget / total)
    };
    let cycles = weights
        .iter()
        .map(|&w| Cycle {
            micro,
            meso: lambda * w,
        })
        .collect();
    Ok(SchedulePlan {
        delta_t: micro,
        alpha,
        macro_dt,
        n_cycles: n,
        lambda,
        rounding_defect,
        cycles,
    })
}

/// Pointwise mesoscopic step `alpha * dt * K(Theta^{-1}(t mod dT) / dT)`.
pub fn pointwise_h(k: &Kernel, delta_t: f64, alpha: f64, macro_dt: f64, t: f64) -> Result<f64> {
    check_macro_dt(macro_dt)?;
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
    }
    let tau = t % macro_dt;
    let u = theta_inverse(k, macro_dt, tau)?;
    Ok(alpha * delta_t * k.eval(u / macro_dt))
}

//! Trajectory drivers: DNS, MSHMM, FLAVORS and the variable step-size
//! mesoscale integrator (VSHMM), plus parameter checks and the cost model.
//!
//! All drivers sample the state only at the macro times `n * macro_dt`. Their
//! inner cycles are arranged so every macro step ends exactly on the grid:
//! DNS stretches its step to `macro_dt / round(macro_dt / dt)`, FLAVORS and
//! VSHMM normalize their meso steps so the cycles tile the macro step, and
//! MSHMM uses `macro_dt / round(macro_dt / h)`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::error::{Error, Result, StepError};
use crate::kernel::{build_schedule, KernelId};
use crate::steppers::{check_finite, step_in_place, CountedField, Scheme, Workspace};
use crate::systems::{FullField, PartitionedSystem, SlowField, SlowMap, SplitSystem};

/// Relative tolerance for "divides" checks between step lengths.
pub const ALIGN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dns,
    Mshmm,
    Flavors,
    Vshmm,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dns => "dns",
            Method::Mshmm => "mshmm",
            Method::Flavors => "flavors",
            Method::Vshmm => "vshmm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dns" => Ok(Method::Dns),
            "mshmm" => Ok(Method::Mshmm),
            "flavors" => Ok(Method::Flavors),
            "vshmm" => Ok(Method::Vshmm),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

/// Parameters of one trajectory run.
///
/// `delta_t` is the micro step (the fast-clock step for MSHMM). The meso step
/// is given either as `meso_h` or through the savings factor `alpha`:
/// FLAVORS uses `h = alpha * dt`, MSHMM `h = (1 + alpha) * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub method: Method,
    pub delta_t: f64,
    pub alpha: Option<f64>,
    pub meso_h: Option<f64>,
    pub macro_dt: f64,
    pub t_final: f64,
    pub meso_order: u8,
    pub micro_scheme: Scheme,
    pub kernel: KernelId,
    pub record_intermediate: bool,
}

impl MethodConfig {
    fn base(method: Method, delta_t: f64, macro_dt: f64, t_final: f64) -> Self {
        Self {
            method,
            delta_t,
            alpha: None,
            meso_h: None,
            macro_dt,
            t_final,
            meso_order: 2,
            micro_scheme: Scheme::Rk4,
            kernel: KernelId::Cosine,
            record_intermediate: false,
        }
    }

    pub fn dns(delta_t: f64, macro_dt: f64, t_final: f64) -> Self {
        Self::base(Method::Dns, delta_t, macro_dt, t_final)
    }

    pub fn flavors(delta_t: f64, meso_h: f64, macro_dt: f64, t_final: f64) -> Self {
        Self {
            meso_h: Some(meso_h),
            ..Self::base(Method::Flavors, delta_t, macro_dt, t_final)
        }
    }

    pub fn vshmm(delta_t: f64, alpha: f64, macro_dt: f64, t_final: f64) -> Self {
        Self {
            alpha: Some(alpha),
            ..Self::base(Method::Vshmm, delta_t, macro_dt, t_final)
        }
    }

    pub fn mshmm(delta_tau: f64, meso_h: f64, macro_dt: f64, t_final: f64) -> Self {
        Self {
            meso_h: Some(meso_h),
            meso_order: 1,
            micro_scheme: Scheme::Euler,
            ..Self::base(Method::Mshmm, delta_tau, macro_dt, t_final)
        }
    }

    pub fn with_micro(mut self, scheme: Scheme) -> Self {
        self.micro_scheme = scheme;
        self
    }

    pub fn with_meso_order(mut self, order: u8) -> Self {
        self.meso_order = order;
        self
    }

    pub fn with_kernel(mut self, kernel: KernelId) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn recording(mut self, on: bool) -> Self {
        self.record_intermediate = on;
        self
    }

    pub fn meso_scheme(&self) -> Scheme {
        if self.meso_order == 1 {
            Scheme::Euler
        } else {
            Scheme::Rk2
        }
    }

    /// Meso step of FLAVORS/MSHMM before alignment; 0 for DNS, mean step for VSHMM.
    pub fn meso_step(&self) -> f64 {
        match self.method {
            Method::Dns => 0.0,
            Method::Flavors => self
                .meso_h
                .unwrap_or_else(|| self.alpha.unwrap_or(0.0) * self.delta_t),
            Method::Mshmm => self
                .meso_h
                .unwrap_or_else(|| (1.0 + self.alpha.unwrap_or(0.0)) * self.delta_t),
            Method::Vshmm => self.alpha.unwrap_or(0.0) * self.delta_t,
        }
    }

    /// Savings factor `alpha` (mean meso step over micro step).
    pub fn savings_factor(&self) -> f64 {
        match self.method {
            Method::Dns => 0.0,
            Method::Flavors => self.alpha.unwrap_or(self.meso_step() / self.delta_t),
            Method::Mshmm => self.alpha.unwrap_or(self.meso_step() / self.delta_t - 1.0),
            Method::Vshmm => self.alpha.unwrap_or(0.0),
        }
    }

    pub fn n_macro(&self) -> usize {
        (self.t_final / self.macro_dt).round() as usize
    }

    /// Structural checks shared by all drivers.
    pub fn check(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("delta_t", self.delta_t)?;
        positive("macro_dt", self.macro_dt)?;
        positive("t_final", self.t_final)?;
        let ratio = self.t_final / self.macro_dt;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > ALIGN_TOL * ratio {
            return Err(Error::InvalidParameter(format!(
                "macro_dt {} does not divide t_final {}",
                self.macro_dt, self.t_final
            )));
        }
        if !matches!(self.meso_order, 1 | 2) {
            return Err(Error::InvalidParameter(format!(
                "meso_order must be 1 or 2, got {}",
                self.meso_order
            )));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {a}")));
            }
        }
        if let Some(h) = self.meso_h {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(Error::InvalidParameter(format!("meso_h must be >= 0, got {h}")));
            }
        }
        match self.method {
            Method::Flavors | Method::Mshmm if self.alpha.is_none() && self.meso_h.is_none() => {
                Err(Error::InvalidParameter(format!(
                    "{} needs alpha or meso_h",
                    self.method
                )))
            }
            Method::Vshmm => match self.alpha {
                None => Err(Error::InvalidParameter("vshmm needs alpha".into())),
                Some(a) if self.macro_dt < (1.0 + a) * self.delta_t * (1.0 - 1e-12) => {
                    Err(Error::InvalidParameter(format!(
                        "vshmm needs macro_dt >= (1 + alpha) * delta_t = {}",
                        (1.0 + a) * self.delta_t
                    )))
                }
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }

    fn expect(&self, method: Method) -> Result<()> {
        if self.method != method {
            return Err(Error::Config(format!(
                "{} driver called with a {} config",
                method, self.method
            )));
        }
        self.check()
    }
}

/// Named evaluation counts of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    /// Evaluations of `f0 + f1/eps`.
    pub full: u64,
    /// Evaluations of `f0` alone.
    pub f0: u64,
    /// Evaluations of `f1` alone.
    pub f1: u64,
}

impl Counters {
    pub fn total(&self) -> u64 {
        self.full + self.f0 + self.f1
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub method: Method,
    pub macro_times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub slow: Vec<Vec<f64>>,
    pub counters: Counters,
    pub wall_time: Duration,
    /// Micro step actually taken after alignment.
    pub micro_dt: f64,
    /// Mean meso step actually taken after alignment.
    pub mean_meso: f64,
    /// `(t, state)` after every cycle, when requested.
    pub intermediate: Option<Vec<(f64, Vec<f64>)>>,
}

impl Trajectory {
    fn start(method: Method, x0: &[f64], slow: &SlowMap, record: bool) -> Self {
        Self {
            method,
            macro_times: vec![0.0],
            states: vec![x0.to_vec()],
            slow: vec![slow.observe(x0)],
            counters: Counters::default(),
            wall_time: Duration::ZERO,
            micro_dt: 0.0,
            mean_meso: 0.0,
            intermediate: record.then(|| vec![(0.0, x0.to_vec())]),
        }
    }

    fn sample(&mut self, t: f64, x: &[f64], slow: &SlowMap) {
        self.macro_times.push(t);
        self.states.push(x.to_vec());
        self.slow.push(slow.observe(x));
    }

    fn record(&mut self, t: f64, x: &[f64]) {
        if let Some(v) = self.intermediate.as_mut() {
            v.push((t, x.to_vec()));
        }
    }

    pub fn final_slow(&self) -> &[f64] {
        self.slow.last().expect("trajectory has a t = 0 sample")
    }
}

fn failure(method: Method, time: f64, step: u64, source: StepError) -> Error {
    Error::NumericFailure {
        method: method.as_str().to_string(),
        time,
        step,
        source,
    }
}

/// Direct simulation of the full field with a constant micro step.
pub fn dns_integrate(sys: &SplitSystem, cfg: &MethodConfig, slow: &SlowMap) -> Result<Trajectory> {
    cfg.expect(Method::Dns)?;
    let clock = Instant::now();
    let per_macro = (cfg.macro_dt / cfg.delta_t).round().max(1.0);
    let dt = cfg.macro_dt / per_macro;
    let per_macro = per_macro as u64;
    let full = CountedField::new(sys.full_field());
    let mut ws = Workspace::new(sys.dim());
    let mut x = sys.initial_state().to_vec();
    let mut traj = Trajectory::start(Method::Dns, &x, slow, cfg.record_intermediate);
    let mut step = 0u64;
    for n in 0..cfg.n_macro() {
        let t0 = n as f64 * cfg.macro_dt;
        for j in 0..per_macro {
            step_in_place(cfg.micro_scheme, &full, &mut x, dt, &mut ws)
                .map_err(|e| failure(Method::Dns, t0 + j as f64 * dt, step, e))?;
            step += 1;
            if traj.intermediate.is_some() {
                traj.record(t0 + (j + 1) as f64 * dt, &x);
            }
        }
        traj.sample((n + 1) as f64 * cfg.macro_dt, &x, slow);
    }
    traj.counters.full = full.count();
    traj.micro_dt = dt;
    traj.wall_time = clock.elapsed();
    Ok(traj)
}

/// Micro (full field) + meso (`f0` only) cycle machinery shared by FLAVORS and VSHMM.
struct CycleRunner<'a> {
    full: CountedField<FullField<'a>>,
    slow: CountedField<SlowField<'a>>,
    micro: Scheme,
    meso: Scheme,
    ws: Workspace,
    step: u64,
}

impl<'a> CycleRunner<'a> {
    fn new(sys: &'a SplitSystem, micro: Scheme, meso: Scheme) -> Self {
        Self {
            full: CountedField::new(sys.full_field()),
            slow: CountedField::new(sys.slow_field()),
            micro,
            meso,
            ws: Workspace::new(sys.dim()),
            step: 0,
        }
    }

    fn cycle(&mut self, x: &mut [f64], micro_dt: f64, meso_h: f64) -> std::result::Result<(), StepError> {
        step_in_place(self.micro, &self.full, x, micro_dt, &mut self.ws)?;
        self.step += 1;
        step_in_place(self.meso, &self.slow, x, meso_h, &mut self.ws)?;
        self.step += 1;
        Ok(())
    }

    fn counters(&self) -> Counters {
        Counters {
            full: self.full.count(),
            f0: self.slow.count(),
            f1: 0,
        }
    }
}

/// One FLAVORS cycle from `x`: a micro step of the full field over `delta_t`
/// followed by a meso step of `f0` over `h`.
pub fn flavors_cycle(
    sys: &SplitSystem,
    x: &mut [f64],
    delta_t: f64,
    h: f64,
    micro: Scheme,
    meso: Scheme,
) -> std::result::Result<(), StepError> {
    CycleRunner::new(sys, micro, meso).cycle(x, delta_t, h)
}

/// `(micro, meso, cycles)` tiling one macro step with constant cycles.
fn flavors_tiling(cfg: &MethodConfig) -> Result<(f64, f64, usize)> {
    let dt = cfg.delta_t;
    let h = cfg.meso_step();
    let ratio = cfg.macro_dt / (dt + h);
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > ALIGN_TOL * m {
        return Err(Error::InvalidParameter(format!(
            "flavors cycle dt + h = {} does not divide macro_dt = {}",
            dt + h,
            cfg.macro_dt
        )));
    }
    let meso = (cfg.macro_dt - m * dt) / m;
    if h == 0.0 || meso <= 0.0 {
        Ok((cfg.macro_dt / m, 0.0, m as usize))
    } else {
        Ok((dt, meso, m as usize))
    }
}

/// FLAVORS: alternate a stiff micro step with a non-stiff meso step of fixed size.
pub fn flavors_integrate(sys: &SplitSystem, cfg: &MethodConfig, slow: &SlowMap) -> Result<Trajectory> {
    cfg.expect(Method::Flavors)?;
    let clock = Instant::now();
    let (micro_dt, meso_h, cycles) = flavors_tiling(cfg)?;
    let mut runner = CycleRunner::new(sys, cfg.micro_scheme, cfg.meso_scheme());
    let mut x = sys.initial_state().to_vec();
    let mut traj = Trajectory::start(Method::Flavors, &x, slow, cfg.record_intermediate);
    for n in 0..cfg.n_macro() {
        let t0 = n as f64 * cfg.macro_dt;
        for k in 0..cycles {
            let t = t0 + k as f64 * (micro_dt + meso_h);
            runner
                .cycle(&mut x, micro_dt, meso_h)
                .map_err(|e| failure(Method::Flavors, t, runner.step, e))?;
            if traj.intermediate.is_some() {
                traj.record(t + micro_dt + meso_h, &x);
            }
        }
        traj.sample((n + 1) as f64 * cfg.macro_dt, &x, slow);
    }
    traj.counters = runner.counters();
    traj.micro_dt = micro_dt;
    traj.mean_meso = meso_h;
    traj.wall_time = clock.elapsed();
    Ok(traj)
}

/// Variable step-size mesoscale integrator.
///
/// Every macro step runs the cycles of [`build_schedule`]: a micro step of the
/// full field, then a meso step of `f0` over `h_k` (Euler for `meso_order = 1`,
/// explicit midpoint for 2). The meso steps are tiny at both ends of the macro
/// step and largest in the middle, so the fast variables are resolved with the
/// true epsilon whenever the slow state is sampled.
pub fn vshmm_integrate(sys: &SplitSystem, cfg: &MethodConfig, slow: &SlowMap) -> Result<Trajectory> {
    cfg.expect(Method::Vshmm)?;
    let clock = Instant::now();
    let kernel = cfg.kernel.kernel();
    let alpha = cfg.alpha.unwrap_or(0.0);
    let mut runner = CycleRunner::new(sys, cfg.micro_scheme, cfg.meso_scheme());
    let mut x = sys.initial_state().to_vec();
    let mut traj = Trajectory::start(Method::Vshmm, &x, slow, cfg.record_intermediate);
    let mut mean_meso = 0.0;
    let mut micro_dt = cfg.delta_t;
    for n in 0..cfg.n_macro() {
        // Identical every macro step; rebuilt to keep the loop stateless.
        let plan = build_schedule(&kernel, cfg.delta_t, alpha, cfg.macro_dt)?;
        let mut t = n as f64 * cfg.macro_dt;
        for c in &plan.cycles {
            runner
                .cycle(&mut x, c.micro, c.meso)
                .map_err(|e| failure(Method::Vshmm, t, runner.step, e))?;
            t += c.micro + c.meso;
            if traj.intermediate.is_some() {
                traj.record(t, &x);
            }
        }
        traj.sample((n + 1) as f64 * cfg.macro_dt, &x, slow);
        mean_meso = plan.mean_meso();
        micro_dt = plan.delta_t;
    }
    traj.counters = runner.counters();
    traj.micro_dt = micro_dt;
    traj.mean_meso = mean_meso;
    traj.wall_time = clock.elapsed();
    Ok(traj)
}

/// Buffers for the first-order MSHMM update.
struct MshmmStepper {
    fast_rate: Vec<f64>,
    slow_rate: Vec<f64>,
    f0_count: u64,
    f1_count: u64,
}

impl MshmmStepper {
    fn new(sys: &PartitionedSystem) -> Self {
        Self {
            fast_rate: vec![0.0; sys.fast_dim()],
            slow_rate: vec![0.0; sys.slow_dim()],
            f0_count: 0,
            f1_count: 0,
        }
    }

    fn step(
        &mut self,
        sys: &PartitionedSystem,
        xi: &mut [f64],
        eta: &mut [f64],
        delta_tau: f64,
        h: f64,
    ) -> std::result::Result<(), StepError> {
        let eps = sys.epsilon();
        sys.eval_f1(xi, eta, &mut self.fast_rate)?;
        self.f1_count += 1;
        for (e, r) in eta.iter_mut().zip(&self.fast_rate) {
            *e += delta_tau * (r / eps);
        }
        check_finite(eta)?;
        sys.eval_f0(xi, eta, &mut self.slow_rate)?;
        self.f0_count += 1;
        for (s, r) in xi.iter_mut().zip(&self.slow_rate) {
            *s += h * r;
        }
        check_finite(xi)
    }
}

/// One MSHMM step: `eta += (dtau/eps) f1(xi, eta)`, then `xi += h f0(xi, eta_new)`.
pub fn mshmm_step(
    sys: &PartitionedSystem,
    xi: &mut [f64],
    eta: &mut [f64],
    delta_tau: f64,
    h: f64,
) -> std::result::Result<(), StepError> {
    MshmmStepper::new(sys).step(sys, xi, eta, delta_tau, h)
}

/// First-order MSHMM on an explicitly partitioned system. The fast clock
/// advances by `delta_t` per step while physical time advances by `h`.
/// States are reported as the concatenation `(xi, eta)`.
pub fn mshmm_integrate(sys: &PartitionedSystem, cfg: &MethodConfig) -> Result<Trajectory> {
    cfg.expect(Method::Mshmm)?;
    let clock = Instant::now();
    let h = cfg.meso_step();
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("mshmm meso step must be positive, got {h}")));
    }
    let ratio = cfg.macro_dt / h;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > ALIGN_TOL * m {
        return Err(Error::InvalidParameter(format!(
            "mshmm step h = {h} does not divide macro_dt = {}",
            cfg.macro_dt
        )));
    }
    let h = cfg.macro_dt / m;
    let steps = m as u64;
    let slow = sys.slow_map();
    let ns = sys.slow_dim();
    let mut x = sys.initial_state();
    let mut stepper = MshmmStepper::new(sys);
    let mut traj = Trajectory::start(Method::Mshmm, &x, &slow, cfg.record_intermediate);
    let mut step = 0u64;
    for n in 0..cfg.n_macro() {
        let t0 = n as f64 * cfg.macro_dt;
        for j in 0..steps {
            let (xi, eta) = x.split_at_mut(ns);
            stepper
                .step(sys, xi, eta, cfg.delta_t, h)
                .map_err(|e| failure(Method::Mshmm, t0 + j as f64 * h, step, e))?;
            step += 1;
            if traj.intermediate.is_some() {
                traj.record(t0 + (j + 1) as f64 * h, &x);
            }
        }
        traj.sample((n + 1) as f64 * cfg.macro_dt, &x, &slow);
    }
    traj.counters = Counters {
        full: 0,
        f0: stepper.f0_count,
        f1: stepper.f1_count,
    };
    traj.micro_dt = cfg.delta_t;
    traj.mean_meso = h;
    traj.wall_time = clock.elapsed();
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamStatus {
    Ok,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepCondition {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs / lhs`; the condition holds when the margin is at least 10.
    pub margin: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    /// `(alpha + 1) * eps`.
    pub amplified_epsilon: f64,
    pub status: ParamStatus,
    pub step_conditions: [StepCondition; 2],
}

impl ParamReport {
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.status {
            ParamStatus::Warning => out.push(format!(
                "(alpha+1)*eps = {:.4} is not << 1; expect amplified averaging errors",
                self.amplified_epsilon
            )),
            ParamStatus::Error => out.push(format!(
                "(alpha+1)*eps = {:.4} exceeds 1; the multiscale schemes do not converge",
                self.amplified_epsilon
            )),
            ParamStatus::Ok => {}
        }
        for c in &self.step_conditions {
            if !c.satisfied {
                out.push(format!(
                    "step condition {} not met: {:.3e} vs {:.3e} (margin {:.3})",
                    c.name, c.lhs, c.rhs, c.margin
                ));
            }
        }
        out
    }
}

/// `(alpha+1) eps << 1` (ok at <= 0.1, warning at <= 1) and the two step
/// conditions `dt^2/eps^2 << h + dt << dt/eps`, with `<<` read as a factor 10.
pub fn validate_params(alpha: f64, epsilon: f64, delta_t: f64, meso_h: f64) -> Result<ParamReport> {
    if !(alpha >= 0.0 && epsilon > 0.0 && delta_t > 0.0 && meso_h >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "validate_params needs alpha >= 0, eps > 0, dt > 0, h >= 0 (got {alpha}, {epsilon}, {delta_t}, {meso_h})"
        )));
    }
    let amplified_epsilon = (alpha + 1.0) * epsilon;
    let status = if amplified_epsilon <= 0.1 {
        ParamStatus::Ok
    } else if amplified_epsilon <= 1.0 {
        ParamStatus::Warning
    } else {
        ParamStatus::Error
    };
    let cycle = meso_h + delta_t;
    let cond = |name, lhs: f64, rhs: f64| {
        let margin = rhs / lhs;
        StepCondition {
            name,
            lhs,
            rhs,
            margin,
            satisfied: margin >= 10.0,
        }
    };
    Ok(ParamReport {
        amplified_epsilon,
        status,
        step_conditions: [
            cond("dt^2/eps^2 << h+dt", (delta_t / epsilon).powi(2), cycle),
            cond("h+dt << dt/eps", cycle, delta_t / epsilon),
        ],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffectiveEpsilon {
    Constant(f64),
    /// Time-varying over a macro step.
    Range { min: f64, max: f64 },
}

/// Stiffness parameter of the modified equation each method actually solves.
///
/// For VSHMM `meso_h` is the mean meso step `alpha * dt` and the cosine
/// kernel (`sup K = 2`) is assumed; see [`vshmm_effective_epsilon`].
pub fn effective_epsilon(method: &str, epsilon: f64, delta_t: f64, meso_h: f64) -> Result<EffectiveEpsilon> {
    if !(epsilon > 0.0 && delta_t > 0.0 && meso_h >= 0.0) {
        return Err(Error::InvalidParameter("effective_epsilon needs positive inputs".into()));
    }
    Ok(match method.parse::<Method>()? {
        Method::Dns => EffectiveEpsilon::Constant(epsilon),
        Method::Mshmm => EffectiveEpsilon::Constant(epsilon * meso_h / delta_t),
        Method::Flavors => EffectiveEpsilon::Constant((1.0 + meso_h / delta_t) * epsilon),
        Method::Vshmm => {
            vshmm_effective_epsilon(epsilon, meso_h / delta_t, KernelId::Cosine.kernel().sup_norm())
        }
    })
}

pub fn vshmm_effective_epsilon(epsilon: f64, alpha: f64, kernel_sup: f64) -> EffectiveEpsilon {
    EffectiveEpsilon::Range {
        min: epsilon,
        max: (1.0 + alpha * kernel_sup) * epsilon,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub method: Method,
    /// `ceil(1 + alpha) / 2`.
    pub predicted_efficiency: f64,
    pub measured_full_evals_dns: Option<u64>,
    pub measured_evals_method: Option<u64>,
    pub effective_epsilon: Option<EffectiveEpsilon>,
}

impl CostReport {
    /// DNS evaluations over method evaluations, when both were measured.
    pub fn measured_ratio(&self) -> Option<f64> {
        match (self.measured_full_evals_dns, self.measured_evals_method) {
            (Some(d), Some(m)) if m > 0 => Some(d as f64 / m as f64),
            _ => None,
        }
    }

    pub fn with_measurements(mut self, dns: &Trajectory, method: &Trajectory) -> Self {
        self.measured_full_evals_dns = Some(dns.counters.total());
        self.measured_evals_method = Some(method.counters.total());
        self
    }
}

/// Predicted evaluation-count advantage over DNS at the same micro step.
pub fn cost_model(cfg: &MethodConfig) -> Result<CostReport> {
    let alpha = cfg.savings_factor();
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    Ok(CostReport {
        method: cfg.method,
        predicted_efficiency: predicted_efficiency(alpha),
        measured_full_evals_dns: None,
        measured_evals_method: None,
        effective_epsilon: None,
    })
}

pub fn predicted_efficiency(alpha: f64) -> f64 {
    (1.0 + alpha).ceil() / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steppers::{FnField, VectorField};
    use crate::systems::{make_const_spiral, make_dissipative, modulus_map};
    use std::sync::Arc;

    fn zero_system() -> SplitSystem {
        SplitSystem::new(
            "zero",
            1e-3,
            vec![0.3, -2.0],
            Arc::new(|_: &[f64], o: &mut [f64]| {
                o.fill(0.0);
                Ok(())
            }),
            Arc::new(|_: &[f64], o: &mut [f64]| {
                o.fill(0.0);
                Ok(())
            }),
        )
        .unwrap()
    }

    fn identity_map(dim: usize) -> SlowMap {
        SlowMap::new(
            (0..dim).map(|i| format!("x{i}")).collect(),
            Arc::new(|x: &[f64], o: &mut [f64]| o.copy_from_slice(x)),
        )
    }

    #[test]
    fn dns_zero_field_is_constant() {
        let sys = zero_system();
        let traj = dns_integrate(&sys, &MethodConfig::dns(0.01, 0.1, 0.5), &identity_map(2)).unwrap();
        assert_eq!(traj.macro_times.len(), 6);
        for s in &traj.states {
            assert_eq!(s, &vec![0.3, -2.0]);
        }
    }

    #[test]
    fn dns_single_rk4_step() {
        let sys = SplitSystem::new(
            "decay",
            1.0,
            vec![1.0],
            Arc::new(|_: &[f64], o: &mut [f64]| {
                o[0] = 0.0;
                Ok(())
            }),
            Arc::new(|x: &[f64], o: &mut [f64]| {
                o[0] = -x[0];
                Ok(())
            }),
        )
        .unwrap();
        let traj = dns_integrate(&sys, &MethodConfig::dns(0.1, 0.1, 0.1), &identity_map(1)).unwrap();
        assert!((traj.states[1][0] - 0.904_837_5).abs() < 1e-8);
        assert_eq!(traj.counters.full, 4);
    }

    #[test]
    fn dns_const_spiral_tracks_averaged_solution() {
        let eps = 1e-3;
        let sys = make_const_spiral(eps).unwrap();
        let cfg = MethodConfig::dns(eps / 20.0, 0.25, 1.0);
        let traj = dns_integrate(&sys, &cfg, &modulus_map()).unwrap();
        // exact modulus: exp(t/4 + 5 eps sin(t/eps)); the oscillating term
        // keeps |x| up to 5 eps (relative) away from the averaged e^{t/4}.
        for (t, s) in traj.macro_times.iter().zip(&traj.slow) {
            let exact = (t / 4.0 + 5.0 * eps * (t / eps).sin()).exp();
            // rk4 at eps/20 loses ~1e-10 of amplitude per step
            assert!((s[0] - exact).abs() < 1e-5, "t={t}: {} vs {exact}", s[0]);
            assert!((s[0] - (t / 4.0).exp()).abs() <= 5.1 * eps * (t / 4.0).exp());
        }
    }

    #[test]
    fn macro_times_are_exact_multiples() {
        let sys = make_const_spiral(1e-3).unwrap();
        let cfg = MethodConfig::vshmm(1e-4, 5.0, 0.1, 0.5);
        let traj = vshmm_integrate(&sys, &cfg, &modulus_map()).unwrap();
        for (n, t) in traj.macro_times.iter().enumerate() {
            assert_eq!(*t, n as f64 * 0.1);
        }
    }

    #[test]
    fn flavors_zero_meso_equals_dns() {
        let sys = make_const_spiral(1e-3).unwrap();
        let slow = modulus_map();
        let dns = dns_integrate(&sys, &MethodConfig::dns(1e-4, 0.1, 0.3), &slow).unwrap();
        let fl = flavors_integrate(&sys, &MethodConfig::flavors(1e-4, 0.0, 0.1, 0.3), &slow).unwrap();
        for (a, b) in dns.states.iter().zip(&fl.states) {
            for (u, v) in a.iter().zip(b) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn flavors_without_stiff_part_solves_linear_slow_field() {
        // f0 = -x, f1 = 0: exact solution e^{-t}; alternating Euler steps of
        // sizes dt and h is Euler with a non-uniform grid, O(dt + h) accurate.
        let sys = SplitSystem::new(
            "linear",
            1e-3,
            vec![1.0],
            Arc::new(|x: &[f64], o: &mut [f64]| {
                o[0] = -x[0];
                Ok(())
            }),
            Arc::new(|_: &[f64], o: &mut [f64]| {
                o[0] = 0.0;
                Ok(())
            }),
        )
        .unwrap();
        let cfg = MethodConfig::flavors(1e-3, 9e-3, 0.1, 1.0)
            .with_micro(Scheme::Euler)
            .with_meso_order(1);
        let traj = flavors_integrate(&sys, &cfg, &identity_map(1)).unwrap();
        for (t, s) in traj.macro_times.iter().zip(&traj.slow) {
            assert!((s[0] - (-t).exp()).abs() <= 0.5 * (1e-3 + 9e-3), "t={t}");
        }
        // and it is exactly Euler with alternating steps
        let f = FnField::new(1, |x: &[f64], o: &mut [f64]| o[0] = -x[0]);
        let mut x = vec![1.0];
        for _ in 0..100 {
            x = crate::steppers::euler_step(&f, &x, 1e-3).unwrap();
            x = crate::steppers::euler_step(&f, &x, 9e-3).unwrap();
        }
        let rel = (x[0] - traj.final_slow()[0]).abs() / x[0];
        assert!(rel < 1e-12);
    }

    #[test]
    fn flavors_hand_cycle_on_dissipative() {
        let eps = 2e-4;
        let sys = make_dissipative(eps).unwrap().to_split();
        let mut x = vec![-1.0, 1.0];
        flavors_cycle(&sys, &mut x, 1e-5, 1e-3, Scheme::Euler, Scheme::Euler).unwrap();
        // micro: xi* = -1 + 1e-5 * 1, eta* = 1 + 1e-5 * (-2 / 2e-4) = 0.9
        // meso: xi = xi* + 1e-3 * (1 + (xi* + 0.9)/2)
        let xi_star = -1.0 + 1e-5;
        let want = xi_star + 1e-3 * (1.0 + (xi_star + 0.9) / 2.0);
        assert!((x[1] - 0.9).abs() < 1e-14);
        assert!((x[0] - want).abs() < 1e-15);
        assert!((x[0] + 0.999_039_995).abs() < 1e-12);
    }

    #[test]
    fn flavors_rejects_misaligned_cycle() {
        let sys = make_const_spiral(1e-3).unwrap();
        let cfg = MethodConfig::flavors(1e-4, 2e-4, 0.1, 0.2);
        let err = flavors_integrate(&sys, &cfg, &modulus_map()).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn mshmm_hand_step_on_dissipative() {
        let sys = make_dissipative(2e-4).unwrap();
        let (mut xi, mut eta) = (vec![-1.0], vec![1.0]);
        mshmm_step(&sys, &mut xi, &mut eta, 1e-5, 1e-3).unwrap();
        assert!((eta[0] - 0.9).abs() < 1e-14);
        assert!((xi[0] + 0.99905).abs() < 1e-14);
    }

    #[test]
    fn mshmm_frozen_fast_variable() {
        let sys = PartitionedSystem::new(
            "frozen",
            1e-3,
            vec![1.0],
            vec![2.0],
            Arc::new(|xi: &[f64], eta: &[f64], o: &mut [f64]| {
                o[0] = -eta[0] * xi[0];
                Ok(())
            }),
            Arc::new(|_: &[f64], _: &[f64], o: &mut [f64]| {
                o[0] = 0.0;
                Ok(())
            }),
        )
        .unwrap();
        let traj = mshmm_integrate(&sys, &MethodConfig::mshmm(1e-4, 0.01, 0.1, 0.2)).unwrap();
        let mut xi = 1.0;
        for _ in 0..20 {
            xi += 0.01 * (-2.0 * xi);
        }
        assert_eq!(traj.states[2][1], 2.0);
        assert!((traj.states[2][0] - xi).abs() < 1e-15);
        assert_eq!(traj.counters.f0, 20);
        assert_eq!(traj.counters.f1, 20);
    }

    #[test]
    fn mshmm_fast_update_matches_flavors_micro_euler() {
        let eps = 1e-3;
        let part = make_dissipative(eps).unwrap();
        let split = part.to_split();
        let dt = 1e-4;
        let (mut xi, mut eta) = (vec![-0.4], vec![0.8]);
        mshmm_step(&part, &mut xi, &mut eta, dt, dt).unwrap();
        let mut x = vec![-0.4, 0.8];
        crate::steppers::step_in_place(Scheme::Euler, &split.full_field(), &mut x, dt, &mut Workspace::new(2))
            .unwrap();
        assert_eq!(eta[0].to_bits(), x[1].to_bits());
    }

    #[test]
    fn numeric_failure_carries_context() {
        let sys = SplitSystem::new(
            "blowup",
            1.0,
            vec![1.0],
            Arc::new(|x: &[f64], o: &mut [f64]| {
                o[0] = x[0] * x[0] * 1e200;
                Ok(())
            }),
            Arc::new(|_: &[f64], o: &mut [f64]| {
                o[0] = 0.0;
                Ok(())
            }),
        )
        .unwrap();
        let err = dns_integrate(&sys, &MethodConfig::dns(0.1, 0.1, 1.0), &identity_map(1)).unwrap_err();
        match err {
            Error::NumericFailure { method, step, .. } => {
                assert_eq!(method, "dns");
                assert!(step <= 2);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            dns_integrate(&sys, &MethodConfig::dns(0.1, 0.1, 1.0), &identity_map(1))
                .unwrap_err()
                .exit_code(),
            3
        );
    }

    #[test]
    fn config_checks() {
        assert!(MethodConfig::dns(0.1, 0.3, 1.0).check().is_err());
        assert!(MethodConfig::vshmm(1e-3, 200.0, 0.1, 1.0).check().is_err());
        assert!(MethodConfig::vshmm(1e-3, 2.0, 0.1, 1.0).with_meso_order(3).check().is_err());
        let mut c = MethodConfig::flavors(1e-3, 0.0, 0.1, 1.0);
        c.meso_h = None;
        assert!(c.check().is_err());
        let sys = make_const_spiral(1e-3).unwrap();
        let wrong = MethodConfig::dns(1e-3, 0.1, 0.1);
        assert!(vshmm_integrate(&sys, &wrong, &modulus_map()).is_err());
    }

    #[test]
    fn validate_params_examples() {
        let r = validate_params(100.0, 2e-4, 2e-5, 2e-3).unwrap();
        assert!((r.amplified_epsilon - 0.0202).abs() < 1e-15);
        assert_eq!(r.status, ParamStatus::Ok);
        let r = validate_params(1e4, 1e-3, 1e-4, 1.0).unwrap();
        assert!((r.amplified_epsilon - 10.001).abs() < 1e-12);
        assert_eq!(r.status, ParamStatus::Error);
        let r = validate_params(0.0, 0.05, 1e-3, 0.0).unwrap();
        assert_eq!(r.status, ParamStatus::Ok);
        let r = validate_params(3.0, 0.1, 1e-3, 3e-3).unwrap();
        assert_eq!(r.status, ParamStatus::Warning);
        // dt/eps = 0.1 and h + dt = 2.02e-3: second condition holds with margin ~49.5
        let r = validate_params(100.0, 2e-4, 2e-5, 2e-3).unwrap();
        assert!(r.step_conditions[1].satisfied);
        assert!((r.step_conditions[1].margin - 0.1 / 2.02e-3).abs() < 1e-9);
    }

    #[test]
    fn effective_epsilon_examples() {
        assert_eq!(
            effective_epsilon("mshmm", 1e-3, 1e-4, 1e-2).unwrap(),
            EffectiveEpsilon::Constant(1e-3 * 1e-2 / 1e-4)
        );
        match effective_epsilon("mshmm", 1e-3, 1e-4, 1e-2).unwrap() {
            EffectiveEpsilon::Constant(v) => assert!((v - 0.1).abs() < 1e-15),
            _ => unreachable!(),
        }
        assert_eq!(
            effective_epsilon("flavors", 1e-3, 1e-4, 1e-4).unwrap(),
            EffectiveEpsilon::Constant(2e-3)
        );
        assert_eq!(effective_epsilon("dns", 1e-3, 1e-4, 0.0).unwrap(), EffectiveEpsilon::Constant(1e-3));
        match effective_epsilon("vshmm", 1e-3, 1e-4, 1e-2).unwrap() {
            EffectiveEpsilon::Range { min, max } => {
                assert_eq!(min, 1e-3);
                assert!((max - 201e-3).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
        assert!(effective_epsilon("hmm", 1e-3, 1e-4, 1e-2).is_err());
    }

    #[test]
    fn cost_model_examples() {
        let c = |a: f64| cost_model(&MethodConfig::vshmm(1e-5, a, 1.0, 1.0)).unwrap().predicted_efficiency;
        assert_eq!(c(100.0), 50.5);
        assert_eq!(c(1.0), 1.0);
        assert_eq!(c(50.0), 25.5);
        assert!(c(1.0) >= 1.0);
    }

    #[test]
    fn counts_are_exact() {
        let sys = make_const_spiral(1e-3).unwrap();
        let cfg = MethodConfig::vshmm(1e-4, 9.0, 0.1, 0.3);
        let traj = vshmm_integrate(&sys, &cfg, &modulus_map()).unwrap();
        let cycles = 100 * 3;
        assert_eq!(traj.counters.full, 4 * cycles);
        assert_eq!(traj.counters.f0, 2 * cycles);
        let field = sys.full_field();
        assert_eq!(field.dim(), 2);
    }

    #[test]
    fn recording_intermediate_states() {
        let sys = make_const_spiral(1e-3).unwrap();
        let cfg = MethodConfig::vshmm(1e-4, 9.0, 0.1, 0.2).recording(true);
        let traj = vshmm_integrate(&sys, &cfg, &modulus_map()).unwrap();
        let rec = traj.intermediate.as_ref().unwrap();
        assert_eq!(rec.len(), 1 + 200);
        assert!((rec.last().unwrap().0 - 0.2).abs() < 1e-14);
    }
}

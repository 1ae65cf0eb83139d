//! Split and partitioned stiff systems, slow observables, and the benchmark
//! registry.
//!
//! Complex-valued problems are stored as real vectors of interleaved
//! `(re, im)` pairs. The stiff field is kept unscaled: integrators apply the
//! `1/epsilon` factor, so a system object can be reused across epsilon sweeps
//! through [`SplitSystem::with_epsilon`].

use std::cell::RefCell;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, FieldError, Result};
use crate::steppers::VectorField;

/// Moduli below this are treated as singular states.
pub const SINGULAR_THRESHOLD: f64 = 1e-12;

pub type FieldFn = Arc<dyn Fn(&[f64], &mut [f64]) -> Result<(), FieldError> + Send + Sync>;
pub type PartFieldFn =
    Arc<dyn Fn(&[f64], &[f64], &mut [f64]) -> Result<(), FieldError> + Send + Sync>;
pub type ObserveFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// `dx/dt = f0(x) + f1(x) / epsilon`.
#[derive(Clone)]
pub struct SplitSystem {
    name: String,
    dim: usize,
    epsilon: f64,
    initial_state: Vec<f64>,
    f0: FieldFn,
    f1: FieldFn,
}

impl fmt::Debug for SplitSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SplitSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("epsilon", &self.epsilon)
            .field("initial_state", &self.initial_state)
            .finish_non_exhaustive()
    }
}

impl SplitSystem {
    pub fn new(
        name: impl Into<String>,
        epsilon: f64,
        initial_state: Vec<f64>,
        f0: FieldFn,
        f1: FieldFn,
    ) -> Result<Self> {
        let dim = initial_state.len();
        let sys = Self {
            name: name.into(),
            dim,
            epsilon,
            initial_state,
            f0,
            f1,
        };
        sys.check()?;
        Ok(sys)
    }

    fn check(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("system dimension must be >= 1".into()));
        }
        check_epsilon(self.epsilon)?;
        let mut a = vec![0.0; self.dim];
        let mut b = vec![0.0; self.dim];
        let at_x0 = (self.f0)(&self.initial_state, &mut a)
            .and_then(|_| (self.f1)(&self.initial_state, &mut b));
        if let Err(e) = at_x0 {
            return Err(Error::InvalidParameter(format!(
                "{}: field not defined at the initial state: {e}",
                self.name
            )));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{}: field is not finite at the initial state",
                self.name
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    /// Same fields with a different stiffness parameter.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let mut out = self.clone();
        out.epsilon = epsilon;
        Ok(out)
    }

    pub fn with_initial_state(&self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "initial state has length {}, expected {}",
                x0.len(),
                self.dim
            )));
        }
        let mut out = self.clone();
        out.initial_state = x0;
        out.check()?;
        Ok(out)
    }

    pub fn eval_f0(&self, x: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        (self.f0)(x, out)
    }

    /// Unscaled stiff field `f1(x)`.
    pub fn eval_f1(&self, x: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        (self.f1)(x, out)
    }

    /// `f0 + f1 / epsilon`.
    pub fn full_field(&self) -> FullField<'_> {
        FullField {
            sys: self,
            scratch: RefCell::new(vec![0.0; self.dim]),
        }
    }

    /// `f0` alone.
    pub fn slow_field(&self) -> SlowField<'_> {
        SlowField { sys: self }
    }

    /// `f1 / epsilon` alone.
    pub fn stiff_field(&self) -> StiffField<'_> {
        StiffField { sys: self }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    Ok(())
}

pub struct FullField<'a> {
    sys: &'a SplitSystem,
    scratch: RefCell<Vec<f64>>,
}

impl VectorField for FullField<'_> {
    fn dim(&self) -> usize {
        self.sys.dim
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        let mut stiff = self.scratch.borrow_mut();
        (self.sys.f0)(x, out)?;
        (self.sys.f1)(x, &mut stiff)?;
        let eps = self.sys.epsilon;
        for (o, s) in out.iter_mut().zip(stiff.iter()) {
            *o += s / eps;
        }
        Ok(())
    }
}

pub struct SlowField<'a> {
    sys: &'a SplitSystem,
}

impl VectorField for SlowField<'_> {
    fn dim(&self) -> usize {
        self.sys.dim
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        (self.sys.f0)(x, out)
    }
}

pub struct StiffField<'a> {
    sys: &'a SplitSystem,
}

impl VectorField for StiffField<'_> {
    fn dim(&self) -> usize {
        self.sys.dim
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        (self.sys.f1)(x, out)?;
        let eps = self.sys.epsilon;
        for o in out.iter_mut() {
            *o /= eps;
        }
        Ok(())
    }
}

/// `dxi/dt = f0(xi, eta)`, `deta/dt = f1(xi, eta) / epsilon` with an explicit
/// slow/fast split.
#[derive(Clone)]
pub struct PartitionedSystem {
    name: String,
    slow_dim: usize,
    fast_dim: usize,
    epsilon: f64,
    initial_slow: Vec<f64>,
    initial_fast: Vec<f64>,
    f0: PartFieldFn,
    f1: PartFieldFn,
}

impl fmt::Debug for PartitionedSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartitionedSystem")
            .field("name", &self.name)
            .field("slow_dim", &self.slow_dim)
            .field("fast_dim", &self.fast_dim)
            .field("epsilon", &self.epsilon)
            .finish_non_exhaustive()
    }
}

impl PartitionedSystem {
    pub fn new(
        name: impl Into<String>,
        epsilon: f64,
        initial_slow: Vec<f64>,
        initial_fast: Vec<f64>,
        f0: PartFieldFn,
        f1: PartFieldFn,
    ) -> Result<Self> {
        check_epsilon(epsilon)?;
        if initial_slow.is_empty() || initial_fast.is_empty() {
            return Err(Error::InvalidParameter(
                "slow and fast dimensions must be >= 1".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            slow_dim: initial_slow.len(),
            fast_dim: initial_fast.len(),
            epsilon,
            initial_slow,
            initial_fast,
            f0,
            f1,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn slow_dim(&self) -> usize {
        self.slow_dim
    }
    pub fn fast_dim(&self) -> usize {
        self.fast_dim
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn initial_slow(&self) -> &[f64] {
        &self.initial_slow
    }
    pub fn initial_fast(&self) -> &[f64] {
        &self.initial_fast
    }

    /// Concatenated `(xi, eta)`.
    pub fn initial_state(&self) -> Vec<f64> {
        let mut x = self.initial_slow.clone();
        x.extend_from_slice(&self.initial_fast);
        x
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let mut out = self.clone();
        out.epsilon = epsilon;
        Ok(out)
    }

    pub fn eval_f0(&self, xi: &[f64], eta: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        (self.f0)(xi, eta, out)
    }

    pub fn eval_f1(&self, xi: &[f64], eta: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        (self.f1)(xi, eta, out)
    }

    /// Standard embedding with `f0 -> (f0, 0)` and `f1 -> (0, f1)`.
    pub fn to_split(&self) -> SplitSystem {
        let ns = self.slow_dim;
        let f0 = self.f0.clone();
        let f1 = self.f1.clone();
        let embedded_f0: FieldFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
            let (xi, eta) = x.split_at(ns);
            let (slow, fast) = out.split_at_mut(ns);
            f0(xi, eta, slow)?;
            fast.fill(0.0);
            Ok(())
        });
        let embedded_f1: FieldFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
            let (xi, eta) = x.split_at(ns);
            let (slow, fast) = out.split_at_mut(ns);
            slow.fill(0.0);
            f1(xi, eta, fast)
        });
        SplitSystem {
            name: self.name.clone(),
            dim: self.slow_dim + self.fast_dim,
            epsilon: self.epsilon,
            initial_state: self.initial_state(),
            f0: embedded_f0,
            f1: embedded_f1,
        }
    }

    /// Observation of `xi` from the concatenated state.
    pub fn slow_map(&self) -> SlowMap {
        let ns = self.slow_dim;
        let labels = if ns == 1 {
            vec!["xi".to_string()]
        } else {
            (1..=ns).map(|i| format!("xi{i}")).collect()
        };
        SlowMap::new(labels, Arc::new(move |x: &[f64], out: &mut [f64]| {
            out.copy_from_slice(&x[..ns])
        }))
    }
}

/// Slow observables read off a full state.
#[derive(Clone)]
pub struct SlowMap {
    labels: Vec<String>,
    observe: ObserveFn,
}

impl fmt::Debug for SlowMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SlowMap")
            .field("labels", &self.labels)
            .finish_non_exhaustive()
    }
}

impl SlowMap {
    pub fn new(labels: Vec<String>, observe: ObserveFn) -> Self {
        Self { labels, observe }
    }

    pub fn out_dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn observe_into(&self, x: &[f64], out: &mut [f64]) {
        (self.observe)(x, out)
    }

    pub fn observe(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim()];
        (self.observe)(x, &mut out);
        out
    }
}

fn modulus(re: f64, im: f64) -> f64 {
    (re * re + im * im).sqrt()
}

fn guarded_modulus(re: f64, im: f64) -> Result<f64, FieldError> {
    let r = modulus(re, im);
    if r < SINGULAR_THRESHOLD {
        Err(FieldError::SingularState {
            modulus: r,
            threshold: SINGULAR_THRESHOLD,
        })
    } else {
        Ok(r)
    }
}

/// Dissipative slow/fast pair: `xi' = 1 + (xi + eta)/2`, `eta' = (xi - eta)/eps`,
/// starting at `(-1, 1)`. The averaged equation `Xi' = 1 + Xi` has `Xi(0) = -1`
/// as its fixed point.
pub fn make_dissipative(epsilon: f64) -> Result<PartitionedSystem> {
    PartitionedSystem::new(
        "dissipative",
        epsilon,
        vec![-1.0],
        vec![1.0],
        Arc::new(|xi: &[f64], eta: &[f64], out: &mut [f64]| {
            out[0] = 1.0 + (xi[0] + eta[0]) / 2.0;
            Ok(())
        }),
        Arc::new(|xi: &[f64], eta: &[f64], out: &mut [f64]| {
            out[0] = xi[0] - eta[0];
            Ok(())
        }),
    )
}

/// Expanding spiral with constant angular period,
/// `x' = x/4 + 5 Re(x) x/|x| + i x / eps`, `x(0) = 1`.
pub fn make_const_spiral(epsilon: f64) -> Result<SplitSystem> {
    SplitSystem::new(
        "const_spiral",
        epsilon,
        vec![1.0, 0.0],
        Arc::new(|x: &[f64], out: &mut [f64]| {
            let (u, v) = (x[0], x[1]);
            let r = guarded_modulus(u, v)?;
            out[0] = u / 4.0 + 5.0 * u * u / r;
            out[1] = v / 4.0 + 5.0 * u * v / r;
            Ok(())
        }),
        Arc::new(|x: &[f64], out: &mut [f64]| {
            out[0] = -x[1];
            out[1] = x[0];
            Ok(())
        }),
    )
}

/// Two coupled spirals in C^2 with amplitude-dependent rotation rates,
/// starting at `(x, y) = (1, i)`.
pub fn make_nonlinear_spirals(epsilon: f64) -> Result<SplitSystem> {
    SplitSystem::new(
        "nonlinear_spirals",
        epsilon,
        vec![1.0, 0.0, 0.0, 1.0],
        Arc::new(|s: &[f64], out: &mut [f64]| {
            let (xr, xi, yr, yi) = (s[0], s[1], s[2], s[3]);
            let rx = guarded_modulus(xr, xi)?;
            let ry = guarded_modulus(yr, yi)?;
            let cx = 1.0 / (rx * rx.sqrt()) + 5.0 * (xr / rx + yr / ry) / rx;
            let cy = 1.0 / (ry * ry.sqrt()) + yr / (ry * ry);
            out[0] = cx * xr;
            out[1] = cx * xi;
            out[2] = cy * yr;
            out[3] = cy * yi;
            Ok(())
        }),
        Arc::new(|s: &[f64], out: &mut [f64]| {
            let (xr, xi, yr, yi) = (s[0], s[1], s[2], s[3]);
            let rx = guarded_modulus(xr, xi)?;
            let ry = guarded_modulus(yr, yi)? / std::f64::consts::SQRT_2;
            out[0] = -rx * xi;
            out[1] = rx * xr;
            out[2] = -ry * yi;
            out[3] = ry * yr;
            Ok(())
        }),
    )
}

/// Resonant stellar-orbit model. `f1 = A x` with `A` the block rotation
/// `[[0, a], [-a, 0]] (+) [[0, b], [-b, 0]]`; `f0 = (0, x3^2/a, 0, 2 x1 x2 / b)`.
pub fn make_stellar(epsilon: f64, a: f64, b: f64) -> Result<SplitSystem> {
    if a == 0.0 || b == 0.0 || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "stellar frequencies must be finite and nonzero, got a={a}, b={b}"
        )));
    }
    SplitSystem::new(
        "stellar",
        epsilon,
        vec![1.0, 0.0, 1.0, 0.0],
        Arc::new(move |x: &[f64], out: &mut [f64]| {
            out[0] = 0.0;
            out[1] = x[2] * x[2] / a;
            out[2] = 0.0;
            out[3] = 2.0 * x[0] * x[1] / b;
            Ok(())
        }),
        Arc::new(move |x: &[f64], out: &mut [f64]| {
            out[0] = a * x[1];
            out[1] = -a * x[0];
            out[2] = b * x[3];
            out[3] = -b * x[2];
            Ok(())
        }),
    )
}

pub fn modulus_map() -> SlowMap {
    SlowMap::new(
        vec!["abs_x".into()],
        Arc::new(|x: &[f64], out: &mut [f64]| out[0] = modulus(x[0], x[1])),
    )
}

pub fn two_moduli_map() -> SlowMap {
    SlowMap::new(
        vec!["abs_x".into(), "abs_y".into()],
        Arc::new(|x: &[f64], out: &mut [f64]| {
            out[0] = modulus(x[0], x[1]);
            out[1] = modulus(x[2], x[3]);
        }),
    )
}

/// The three resonant slow invariants of the stellar problem.
pub fn stellar_slow_map() -> SlowMap {
    SlowMap::new(
        vec!["xi1".into(), "xi2".into(), "xi3".into()],
        Arc::new(|x: &[f64], out: &mut [f64]| {
            let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
            out[0] = x1 * x1 + x2 * x2;
            out[1] = x3 * x3 + x4 * x4;
            out[2] = x1 * x3 * x3 + 2.0 * x2 * x3 * x4 - x1 * x4 * x4;
        }),
    )
}

/// Registered benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Problem {
    Dissipative,
    ConstSpiral,
    NonlinearSpirals,
    Stellar,
}

pub const PROBLEM_IDS: [&str; 4] = ["dissipative", "const_spiral", "nonlinear_spirals", "stellar"];

/// Defaults matching the published experiment for each problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemDefaults {
    pub epsilon: f64,
    pub alpha: f64,
    pub macro_dt: f64,
    pub t_final: f64,
}

impl Problem {
    pub const ALL: [Problem; 4] = [
        Problem::Dissipative,
        Problem::ConstSpiral,
        Problem::NonlinearSpirals,
        Problem::Stellar,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Problem::Dissipative => "dissipative",
            Problem::ConstSpiral => "const_spiral",
            Problem::NonlinearSpirals => "nonlinear_spirals",
            Problem::Stellar => "stellar",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Problem::Dissipative => "dissipative slow/fast pair, fast variable relaxes to xi",
            Problem::ConstSpiral => "expanding spiral in C with constant angular period",
            Problem::NonlinearSpirals => "two coupled spirals in C^2 with nonlinear rotation",
            Problem::Stellar => "resonant stellar orbit model (a=2, b=1)",
        }
    }

    pub fn defaults(self) -> ProblemDefaults {
        match self {
            Problem::Dissipative => ProblemDefaults {
                epsilon: 2e-4,
                alpha: 100.0,
                macro_dt: 0.2,
                t_final: 1.0,
            },
            Problem::ConstSpiral => ProblemDefaults {
                epsilon: 1.0 / 3400.0,
                alpha: 50.0,
                macro_dt: 0.25,
                t_final: 3.0,
            },
            Problem::NonlinearSpirals => ProblemDefaults {
                epsilon: 5e-4,
                alpha: 50.0,
                macro_dt: 0.6,
                t_final: 3.0,
            },
            Problem::Stellar => ProblemDefaults {
                epsilon: 1e-4,
                alpha: 100.0,
                macro_dt: 0.1,
                t_final: 1.0,
            },
        }
    }

    pub fn has_closed_form(self) -> bool {
        matches!(self, Problem::Dissipative | Problem::ConstSpiral)
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Problem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Problem::ALL
            .into_iter()
            .find(|p| p.id() == s)
            .ok_or_else(|| Error::UnknownSystem {
                name: s.to_string(),
                valid: PROBLEM_IDS.join(", "),
            })
    }
}

/// A registered problem instantiated at a given epsilon.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub problem: Problem,
    pub system: SplitSystem,
    pub partitioned: Option<PartitionedSystem>,
    pub slow: SlowMap,
}

pub fn benchmark(id: &str, epsilon: f64) -> Result<Benchmark> {
    let problem: Problem = id.parse()?;
    Ok(match problem {
        Problem::Dissipative => {
            let part = make_dissipative(epsilon)?;
            Benchmark {
                problem,
                system: part.to_split(),
                slow: part.slow_map(),
                partitioned: Some(part),
            }
        }
        Problem::ConstSpiral => Benchmark {
            problem,
            system: make_const_spiral(epsilon)?,
            partitioned: None,
            slow: modulus_map(),
        },
        Problem::NonlinearSpirals => Benchmark {
            problem,
            system: make_nonlinear_spirals(epsilon)?,
            partitioned: None,
            slow: two_moduli_map(),
        },
        Problem::Stellar => Benchmark {
            problem,
            system: make_stellar(epsilon, 2.0, 1.0)?,
            partitioned: None,
            slow: stellar_slow_map(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    ClosedForm,
    DnsOracle,
}

impl ReferenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceKind::ClosedForm => "closed_form",
            ReferenceKind::DnsOracle => "dns_oracle",
        }
    }
}

type ClosedFormFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Sampled slow trajectory with linear interpolation between rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTable {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl SampledTable {
    pub fn evaluate(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1].clone();
        }
        let hi = self.times.partition_point(|&s| s < t);
        if self.times[hi] == t {
            return self.values[hi].clone();
        }
        let lo = hi - 1;
        let w = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        self.values[lo]
            .iter()
            .zip(&self.values[hi])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let m = self.values.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("s{i}")));
        w.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.values) {
            let mut rec = vec![crate::harness::fmt_f64(*t)];
            rec.extend(row.iter().map(|v| crate::harness::fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("{}: bad number: {e}", path.display())))?;
            if nums.len() < 2 {
                return Err(Error::Config(format!("{}: short row", path.display())));
            }
            times.push(nums[0]);
            values.push(nums[1..].to_vec());
        }
        if times.is_empty() {
            return Err(Error::Config(format!("{}: empty table", path.display())));
        }
        Ok(Self { times, values })
    }
}

#[derive(Clone)]
enum RefData {
    Closed(ClosedFormFn),
    Table(SampledTable),
}

/// Slow reference trajectory: either a closed-form averaged solution or a
/// sampled fine-step DNS.
#[derive(Clone)]
pub struct ReferenceSolution {
    kind: ReferenceKind,
    provenance: String,
    data: RefData,
}

impl fmt::Debug for ReferenceSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReferenceSolution")
            .field("kind", &self.kind)
            .field("provenance", &self.provenance)
            .finish_non_exhaustive()
    }
}

impl ReferenceSolution {
    pub fn kind(&self) -> ReferenceKind {
        self.kind
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn evaluate(&self, t: f64) -> Vec<f64> {
        match &self.data {
            RefData::Closed(f) => f(t),
            RefData::Table(tab) => tab.evaluate(t),
        }
    }

    pub fn table(&self) -> Option<&SampledTable> {
        match &self.data {
            RefData::Table(t) => Some(t),
            RefData::Closed(_) => None,
        }
    }

    pub fn closed_form(problem: Problem) -> Option<Self> {
        match problem {
            Problem::Dissipative => Some(Self {
                kind: ReferenceKind::ClosedForm,
                provenance: "fixed point Xi = -1 of dXi/dt = 1 + Xi".into(),
                data: RefData::Closed(Arc::new(|_| vec![-1.0])),
            }),
            Problem::ConstSpiral => Some(Self {
                kind: ReferenceKind::ClosedForm,
                provenance: "Xi(t) = exp(t/4) solving dXi/dt = Xi/4".into(),
                data: RefData::Closed(Arc::new(|t| vec![(t / 4.0).exp()])),
            }),
            _ => None,
        }
    }

    /// Slow map applied to a fine-step RK4 DNS, sampled at spacing <= epsilon.
    ///
    /// When `cache_dir` is given, the table is read from / written to a CSV
    /// keyed by `(system, epsilon, step, t_final)`.
    pub fn dns_oracle(
        bench: &Benchmark,
        t_final: f64,
        cache_dir: Option<&Path>,
    ) -> Result<Self> {
        let eps = bench.system.epsilon();
        let step = dns_oracle_step(eps);
        let provenance = format!(
            "rk4 DNS of {} with dt = {step:e}, eps = {eps:e}, T = {t_final}",
            bench.problem
        );
        let cache_path = cache_dir.map(|d| d.join(oracle_cache_name(bench.problem, eps, step, t_final)));
        if let Some(path) = cache_path.as_ref().filter(|p| p.exists()) {
            let table = SampledTable::read_csv(path)?;
            return Ok(Self {
                kind: ReferenceKind::DnsOracle,
                provenance,
                data: RefData::Table(table),
            });
        }
        let table = compute_oracle_table(bench, t_final, step)?;
        if let (Some(dir), Some(path)) = (cache_dir, cache_path.as_ref()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            table.write_csv(path)?;
        }
        Ok(Self {
            kind: ReferenceKind::DnsOracle,
            provenance,
            data: RefData::Table(table),
        })
    }
}

/// Micro step of the DNS oracle. RK4 loses amplitude like `theta^6/144` per
/// step on a rotation of angle `theta`, so `eps/10` drifts by percents over
/// 10^5..10^6 steps on the oscillatory problems; `eps/100` keeps the drift
/// below 1e-6.
pub fn dns_oracle_step(epsilon: f64) -> f64 {
    epsilon / 100.0
}

fn oracle_cache_name(problem: Problem, eps: f64, step: f64, t_final: f64) -> PathBuf {
    PathBuf::from(format!(
        "dns_{}_eps{:.6e}_dt{:.6e}_T{:.6e}.csv",
        problem.id(),
        eps,
        step,
        t_final
    ))
}

fn compute_oracle_table(bench: &Benchmark, t_final: f64, step: f64) -> Result<SampledTable> {
    use crate::multiscale::{dns_integrate, MethodConfig};
    let eps = bench.system.epsilon();
    let intervals = (t_final / eps).ceil().max(1.0);
    let spacing = t_final / intervals;
    let cfg = MethodConfig::dns(step, spacing, t_final);
    let traj = dns_integrate(&bench.system, &cfg, &bench.slow)?;
    Ok(SampledTable {
        times: traj.macro_times,
        values: traj.slow,
    })
}

/// Reference slow trajectory for a registered problem.
///
/// Closed forms exist for `dissipative` (`Xi = -1`) and `const_spiral`
/// (`Xi = e^{t/4}`); the other problems get a DNS oracle over `[0, t_final]`.
pub fn averaged_reference(
    name: &str,
    epsilon: f64,
    t_final: f64,
    cache_dir: Option<&Path>,
) -> Result<ReferenceSolution> {
    let problem: Problem = name.parse()?;
    if let Some(r) = ReferenceSolution::closed_form(problem) {
        return Ok(r);
    }
    let bench = benchmark(name, epsilon)?;
    ReferenceSolution::dns_oracle(&bench, t_final, cache_dir)
}

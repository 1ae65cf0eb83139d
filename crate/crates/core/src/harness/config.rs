use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kernel::KernelId;
use crate::multiscale::{validate_params, Method, MethodConfig, ParamStatus};
use crate::steppers::Scheme;
use crate::systems::{Problem, ProblemDefaults};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceChoice {
    /// Closed form when the problem has one, DNS oracle otherwise.
    Auto,
    ClosedForm,
    Dns,
}

impl std::str::FromStr for ReferenceChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "closed_form" => Ok(Self::ClosedForm),
            "dns" => Ok(Self::Dns),
            other => Err(Error::Config(format!(
                "reference: unknown value '{other}' (valid: auto, closed_form, dns)"
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: String,
    epsilon: Option<f64>,
    kernel: Option<String>,
    methods: Vec<RawMethod>,
    record_intermediate: Option<bool>,
    reference: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    method: String,
    delta_t: Option<f64>,
    alpha: Option<f64>,
    meso_h: Option<f64>,
    macro_dt: Option<f64>,
    t_final: Option<f64>,
    meso_order: Option<u8>,
    micro_scheme: Option<String>,
}

/// Command-line values that replace config fields. Method-level overrides
/// apply to every listed method.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub system: Option<String>,
    pub epsilon: Option<f64>,
    pub kernel: Option<String>,
    pub reference: Option<String>,
    pub record_intermediate: Option<bool>,
    pub delta_t: Option<f64>,
    pub alpha: Option<f64>,
    pub macro_dt: Option<f64>,
    pub t_final: Option<f64>,
    pub meso_order: Option<u8>,
    pub micro_scheme: Option<String>,
}

impl ConfigOverrides {
    fn apply(&self, raw: &mut RawConfig) {
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = Some(v);
                }
            };
        }
        if let Some(s) = &self.system {
            raw.system = s.clone();
        }
        set!(raw.epsilon, self.epsilon);
        set!(raw.kernel, self.kernel);
        set!(raw.reference, self.reference);
        set!(raw.record_intermediate, self.record_intermediate);
        for m in &mut raw.methods {
            set!(m.delta_t, self.delta_t);
            if self.alpha.is_some() {
                m.alpha = self.alpha;
                m.meso_h = None;
            }
            set!(m.macro_dt, self.macro_dt);
            set!(m.t_final, self.t_final);
            set!(m.meso_order, self.meso_order);
            set!(m.micro_scheme, self.micro_scheme);
        }
    }
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub system: Problem,
    pub epsilon: f64,
    pub kernel: KernelId,
    pub methods: Vec<MethodConfig>,
    pub record_intermediate: bool,
    pub reference: ReferenceChoice,
    /// Non-fatal findings of parameter validation.
    pub warnings: Vec<String>,
}

impl ExperimentConfig {
    pub fn t_final(&self) -> f64 {
        self.methods.iter().map(|m| m.t_final).fold(0.0, f64::max)
    }
}

pub fn parse_config(path: &Path, overrides: &ConfigOverrides) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, overrides)
        .map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
}

pub fn parse_config_str(text: &str, overrides: &ConfigOverrides) -> Result<ExperimentConfig> {
    let mut raw: RawConfig = serde_json::from_str(text)?;
    overrides.apply(&mut raw);
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig> {
    let system: Problem = raw.system.parse()?;
    let defaults = system.defaults();
    let epsilon = raw.epsilon.unwrap_or(defaults.epsilon);
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon: must be positive, got {epsilon}")));
    }
    let kernel: KernelId = raw.kernel.as_deref().unwrap_or("cosine").parse()?;
    let reference: ReferenceChoice = raw.reference.as_deref().unwrap_or("auto").parse()?;
    if reference == ReferenceChoice::ClosedForm && !system.has_closed_form() {
        return Err(Error::Config(format!("reference: {system} has no closed-form reference")));
    }
    if raw.methods.is_empty() {
        return Err(Error::Config("methods: at least one method is required".into()));
    }
    let record = raw.record_intermediate.unwrap_or(false);
    let mut warnings = Vec::new();
    let methods = raw
        .methods
        .into_iter()
        .enumerate()
        .map(|(i, m)| resolve_method(i, m, system, &defaults, epsilon, kernel, record, &mut warnings))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentConfig {
        system,
        epsilon,
        kernel,
        methods,
        record_intermediate: record,
        reference,
        warnings,
    })
}

/// `eps / 10`, shrunk so that `(1 + alpha) dt` divides `macro_dt`.
pub(crate) fn aligned_delta_t(epsilon: f64, alpha: f64, macro_dt: f64) -> f64 {
    let base = epsilon / 10.0;
    let cycle = (1.0 + alpha) * base;
    let n = (macro_dt / cycle).round().max(1.0);
    macro_dt / (n * (1.0 + alpha))
}

#[allow(clippy::too_many_arguments)]
fn resolve_method(
    index: usize,
    m: RawMethod,
    system: Problem,
    defaults: &ProblemDefaults,
    epsilon: f64,
    kernel: KernelId,
    record: bool,
    warnings: &mut Vec<String>,
) -> Result<MethodConfig> {
    let at = |field: &str| format!("methods[{index}].{field}");
    let method: Method = m
        .method
        .parse()
        .map_err(|e: Error| Error::Config(format!("{}: {e}", at("method"))))?;
    let macro_dt = m.macro_dt.unwrap_or(defaults.macro_dt);
    let t_final = m.t_final.unwrap_or(defaults.t_final);
    let micro_scheme = match m.micro_scheme.as_deref() {
        Some(s) => s
            .parse::<Scheme>()
            .map_err(|e| Error::Config(format!("{}: {e}", at("micro_scheme"))))?,
        None if method == Method::Mshmm => Scheme::Euler,
        None => Scheme::Rk4,
    };
    let meso_order = m.meso_order.unwrap_or(if method == Method::Mshmm { 1 } else { 2 });
    if method == Method::Mshmm {
        if system != Problem::Dissipative {
            return Err(Error::Config(format!(
                "{}: mshmm needs explicitly partitioned slow/fast variables; {system} has none",
                at("method")
            )));
        }
        if micro_scheme != Scheme::Euler || meso_order != 1 {
            return Err(Error::Config(format!(
                "{}: mshmm is first order only (euler, meso_order 1)",
                at("method")
            )));
        }
    }
    let (alpha, meso_h) = match (method, m.alpha, m.meso_h) {
        (Method::Dns, _, _) => (None, None),
        (_, Some(_), Some(_)) => {
            return Err(Error::Config(format!("{}: give alpha or meso_h, not both", at("alpha"))))
        }
        (Method::Vshmm, None, Some(h)) => match m.delta_t {
            Some(dt) => (Some(h / dt), None),
            None => {
                return Err(Error::Config(format!(
                    "{}: vshmm with meso_h needs an explicit delta_t",
                    at("meso_h")
                )))
            }
        },
        (_, a, h) if a.is_none() && h.is_none() => (Some(defaults.alpha), None),
        (_, a, h) => (a, h),
    };
    let delta_t = match (m.delta_t, alpha) {
        (Some(dt), _) => dt,
        (None, Some(a)) => aligned_delta_t(epsilon, a, macro_dt),
        (None, None) => epsilon / 10.0,
    };
    let cfg = MethodConfig {
        method,
        delta_t,
        alpha,
        meso_h,
        macro_dt,
        t_final,
        meso_order,
        micro_scheme,
        kernel,
        record_intermediate: record,
    };
    cfg.check()
        .map_err(|e| Error::Config(format!("methods[{index}] ({method}): {e}")))?;
    if method != Method::Dns {
        let report = validate_params(cfg.savings_factor(), epsilon, delta_t, cfg.meso_step())?;
        if report.status == ParamStatus::Error {
            return Err(Error::Config(format!(
                "methods[{index}] ({method}): (alpha+1)*eps = {} > 1",
                report.amplified_epsilon
            )));
        }
        warnings.extend(
            report
                .warnings()
                .into_iter()
                .map(|w| format!("methods[{index}] ({method}): {w}")),
        );
    } else if delta_t > epsilon / 2.0 {
        warnings.push(format!(
            "methods[{index}] (dns): delta_t = {delta_t:e} exceeds eps/2; the fast scale is not resolved"
        ));
    }
    Ok(cfg)
}

//! Integrators for stiff and highly oscillatory ODEs with slow observables.
//!
//! The central method is a variable step-size mesoscale integrator: each
//! macro step alternates full-field micro steps with slow-field meso steps
//! whose sizes follow a smooth kernel, so the fast variables are resolved
//! with the true stiffness at every reported sample. DNS, MSHMM and FLAVORS
//! are provided as baselines, together with an experiment harness and the
//! `msint` command line tool.

pub mod error;
pub mod harness;
pub mod kernel;
pub mod multiscale;
pub mod steppers;
pub mod systems;

pub use error::{Error, FieldError, Result, StepError};
pub use kernel::{build_schedule, validate_kernel, Kernel, KernelId, SchedulePlan};
pub use multiscale::{
    cost_model, dns_integrate, effective_epsilon, flavors_integrate, mshmm_integrate,
    validate_params, vshmm_integrate, Method, MethodConfig, Trajectory,
};
pub use steppers::{Scheme, VectorField};
pub use systems::{benchmark, Benchmark, PartitionedSystem, Problem, SlowMap, SplitSystem};

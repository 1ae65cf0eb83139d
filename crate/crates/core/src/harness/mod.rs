//! Experiment orchestration: config parsing, reference attachment, error
//! reports, alpha sweeps, order studies and cost accounting.

mod config;
mod experiment;
mod study;

pub use config::{parse_config, parse_config_str, ConfigOverrides, ExperimentConfig, ReferenceChoice};
pub use experiment::{build_reference, run_experiment, ErrorReport, ExperimentOutcome};
pub use study::{
    alpha_sweep, efficiency_report, fit_above_floor, loglog_slope, order_floor, order_study,
    order_study_rows, write_order_study, write_sweep, CostRow, OrderStudy, OrderStudyRow,
    SweepRow, SweepSpec,
};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Floats in every CSV: 17 significant digits, enough to round-trip an f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

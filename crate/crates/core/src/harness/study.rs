use std::path::Path;

use rayon::prelude::*;

use super::experiment::{run_method, ErrorReport};
use super::fmt_f64;
use crate::error::{Error, Result};
use crate::kernel::KernelId;
use crate::multiscale::{predicted_efficiency, validate_params, Method, MethodConfig, ParamStatus, Trajectory};
use crate::steppers::Scheme;
use crate::systems::{Benchmark, ReferenceSolution};

/// Settings shared by all runs of a sweep or order study.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub delta_t: f64,
    pub macro_dt: f64,
    pub t_final: f64,
    pub micro_scheme: Scheme,
    pub meso_order: u8,
    pub kernel: KernelId,
}

impl SweepSpec {
    fn config(&self, mut c: MethodConfig) -> MethodConfig {
        c.micro_scheme = self.micro_scheme;
        c.meso_order = self.meso_order;
        c.kernel = self.kernel;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub method: Method,
    /// Micro step after alignment to the macro step.
    pub delta_t: f64,
    pub sup_error: f64,
}

/// VSHMM and FLAVORS (`h = alpha * dt`) at matched cost for each alpha.
///
/// The micro step is shrunk per alpha so that `(1 + alpha) dt` divides the
/// macro step, which FLAVORS requires; both methods use the same aligned step.
pub fn alpha_sweep(
    bench: &Benchmark,
    reference: &ReferenceSolution,
    alphas: &[f64],
    spec: &SweepSpec,
) -> Result<Vec<SweepRow>> {
    let eps = bench.system.epsilon();
    for &a in alphas {
        let r = validate_params(a, eps, spec.delta_t, a * spec.delta_t)?;
        if r.status == ParamStatus::Error {
            return Err(Error::InvalidParameter(format!(
                "alpha = {a}: (alpha+1)*eps = {} > 1",
                r.amplified_epsilon
            )));
        }
    }
    let jobs: Vec<(f64, MethodConfig)> = alphas
        .iter()
        .flat_map(|&a| {
            let n = (spec.macro_dt / ((1.0 + a) * spec.delta_t)).round().max(1.0);
            let dt = spec.macro_dt / (n * (1.0 + a));
            [
                (a, spec.config(MethodConfig::vshmm(dt, a, spec.macro_dt, spec.t_final))),
                (a, spec.config(MethodConfig::flavors(dt, a * dt, spec.macro_dt, spec.t_final))),
            ]
        })
        .collect();
    jobs.par_iter()
        .map(|(a, cfg)| {
            let traj = run_method(bench, cfg)?;
            let rep = ErrorReport::new(cfg.method.as_str(), cfg, &traj, reference);
            Ok(SweepRow {
                alpha: *a,
                method: cfg.method,
                delta_t: cfg.delta_t,
                sup_error: rep.sup_norm,
            })
        })
        .collect()
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["alpha", "method", "delta_t", "sup_error"])?;
    for r in rows {
        w.write_record([fmt_f64(r.alpha), r.method.to_string(), fmt_f64(r.delta_t), fmt_f64(r.sup_error)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderStudyRow {
    pub mean_meso_step: f64,
    pub order: u8,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct OrderStudy {
    pub rows: Vec<OrderStudyRow>,
    /// Order-2 error at the smallest micro step.
    pub floor: f64,
    pub slope_order1: f64,
    pub slope_order2: f64,
}

/// VSHMM errors at meso orders 1 and 2 for each micro step, sorted by mean
/// meso step, descending.
pub fn order_study_rows(
    bench: &Benchmark,
    reference: &ReferenceSolution,
    alpha: f64,
    delta_ts: &[f64],
    spec: &SweepSpec,
) -> Result<Vec<OrderStudyRow>> {
    for &dt in delta_ts {
        if spec.macro_dt < (1.0 + alpha) * dt {
            return Err(Error::InvalidParameter(format!(
                "macro_dt {} < (1 + alpha) * dt = {}",
                spec.macro_dt,
                (1.0 + alpha) * dt
            )));
        }
    }
    let jobs: Vec<MethodConfig> = delta_ts
        .iter()
        .flat_map(|&dt| {
            [1u8, 2].map(|order| {
                spec.config(MethodConfig::vshmm(dt, alpha, spec.macro_dt, spec.t_final))
                    .with_meso_order(order)
            })
        })
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|cfg| {
            let traj = run_method(bench, cfg)?;
            let rep = ErrorReport::new("vshmm", cfg, &traj, reference);
            Ok(OrderStudyRow {
                mean_meso_step: traj.mean_meso,
                order: cfg.meso_order,
                error: rep.sup_norm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        b.mean_meso_step
            .total_cmp(&a.mean_meso_step)
            .then(a.order.cmp(&b.order))
    });
    Ok(rows)
}

/// Rows plus slopes fitted above ten times the order-2 floor.
pub fn order_study(
    bench: &Benchmark,
    reference: &ReferenceSolution,
    alpha: f64,
    delta_ts: &[f64],
    spec: &SweepSpec,
) -> Result<OrderStudy> {
    let rows = order_study_rows(bench, reference, alpha, delta_ts, spec)?;
    let floor = order_floor(&rows)?;
    Ok(OrderStudy {
        slope_order1: fit_above_floor(&rows, 1, floor)?,
        slope_order2: fit_above_floor(&rows, 2, floor)?,
        floor,
        rows,
    })
}

/// Order-2 error at the smallest mean meso step.
pub fn order_floor(rows: &[OrderStudyRow]) -> Result<f64> {
    rows.iter()
        .filter(|r| r.order == 2)
        .min_by(|a, b| a.mean_meso_step.total_cmp(&b.mean_meso_step))
        .map(|r| r.error)
        .ok_or(Error::InsufficientRows(0))
}

/// Log-log slope of the rows of `order` whose error exceeds `10 * floor`.
pub fn fit_above_floor(rows: &[OrderStudyRow], order: u8, floor: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.order == order && r.error > 10.0 * floor)
        .map(|r| (r.mean_meso_step, r.error))
        .collect();
    loglog_slope(&pts)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InsufficientRows(points.len()));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) || !sxy.is_finite() {
        return Err(Error::InvalidParameter("degenerate log-log data".into()));
    }
    Ok(sxy / sxx)
}

pub fn write_order_study(path: &Path, rows: &[OrderStudyRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["mean_meso_step", "order", "error"])?;
    for r in rows {
        w.write_record([fmt_f64(r.mean_meso_step), r.order.to_string(), fmt_f64(r.error)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub method: Method,
    pub predicted_efficiency: f64,
    /// DNS evaluations over this method's evaluations.
    pub measured_ratio: f64,
    pub full_evals: u64,
    pub f0_evals: u64,
    pub f1_evals: u64,
    pub wall_seconds: f64,
}

/// Measured evaluation ratios against the DNS run among `runs`.
///
/// Every field evaluation counts as one, whichever field it is, so the ratio
/// matches the predicted `ceil(1 + alpha) / 2` only when micro and meso
/// schemes both take one evaluation per step.
pub fn efficiency_report(runs: &[(MethodConfig, Trajectory)]) -> Result<Vec<CostRow>> {
    let dns = runs
        .iter()
        .find(|(c, _)| c.method == Method::Dns)
        .ok_or_else(|| Error::Config("efficiency report needs a DNS baseline".into()))?;
    let dns_evals = dns.1.counters.total() as f64;
    Ok(runs
        .iter()
        .map(|(c, t)| CostRow {
            method: c.method,
            predicted_efficiency: if c.method == Method::Dns {
                1.0
            } else {
                predicted_efficiency(c.savings_factor())
            },
            measured_ratio: dns_evals / t.counters.total() as f64,
            full_evals: t.counters.full,
            f0_evals: t.counters.f0,
            f1_evals: t.counters.f1,
            wall_seconds: t.wall_time.as_secs_f64(),
        })
        .collect())
}

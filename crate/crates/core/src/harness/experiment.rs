use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde_json::json;

use super::config::{ExperimentConfig, ReferenceChoice};
use super::{ensure_dir, fmt_f64};
use crate::error::{Error, Result};
use crate::multiscale::{
    dns_integrate, flavors_integrate, mshmm_integrate, predicted_efficiency, vshmm_integrate,
    Counters, Method, MethodConfig, Trajectory,
};
use crate::systems::{averaged_reference, Benchmark, ReferenceSolution};

/// Macro-point errors of one trajectory against a reference.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub label: String,
    pub config: MethodConfig,
    pub times: Vec<f64>,
    /// `|slow - reference|` per component, one row per macro time.
    pub component_errors: Vec<Vec<f64>>,
    /// Euclidean norm of each row.
    pub row_norms: Vec<f64>,
    pub sup_norm: f64,
    /// `sup_norm / sup_t |reference(t)|`.
    pub relative_sup_norm: f64,
    pub counters: Counters,
    pub wall_time: Duration,
    pub micro_dt: f64,
    pub mean_meso: f64,
}

impl ErrorReport {
    pub fn new(label: impl Into<String>, config: &MethodConfig, traj: &Trajectory, reference: &ReferenceSolution) -> Self {
        let mut component_errors = Vec::with_capacity(traj.macro_times.len());
        let mut row_norms = Vec::with_capacity(traj.macro_times.len());
        let mut ref_sup: f64 = 0.0;
        for (t, slow) in traj.macro_times.iter().zip(&traj.slow) {
            let r = reference.evaluate(*t);
            let diff: Vec<f64> = slow.iter().zip(&r).map(|(a, b)| (a - b).abs()).collect();
            row_norms.push(diff.iter().map(|d| d * d).sum::<f64>().sqrt());
            ref_sup = ref_sup.max(r.iter().map(|v| v * v).sum::<f64>().sqrt());
            component_errors.push(diff);
        }
        let sup_norm = row_norms.iter().copied().fold(0.0, f64::max);
        Self {
            label: label.into(),
            config: config.clone(),
            times: traj.macro_times.clone(),
            component_errors,
            row_norms,
            sup_norm,
            relative_sup_norm: if ref_sup > 0.0 { sup_norm / ref_sup } else { sup_norm },
            counters: traj.counters,
            wall_time: traj.wall_time,
            micro_dt: traj.micro_dt,
            mean_meso: traj.mean_meso,
        }
    }

    pub fn method(&self) -> Method {
        self.config.method
    }
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub reports: Vec<ErrorReport>,
    pub trajectories: Vec<Trajectory>,
    pub reference: ReferenceSolution,
}

impl ExperimentOutcome {
    pub fn report(&self, method: Method) -> Option<&ErrorReport> {
        self.reports.iter().find(|r| r.method() == method)
    }
}

/// Reference for a config; DNS oracles are cached under `cache_dir`.
pub fn build_reference(cfg: &ExperimentConfig, bench: &Benchmark, cache_dir: Option<&Path>) -> Result<ReferenceSolution> {
    let t_final = cfg.t_final();
    match cfg.reference {
        ReferenceChoice::Auto => averaged_reference(cfg.system.id(), cfg.epsilon, t_final, cache_dir),
        ReferenceChoice::ClosedForm => ReferenceSolution::closed_form(cfg.system)
            .ok_or_else(|| Error::Config(format!("{} has no closed-form reference", cfg.system))),
        ReferenceChoice::Dns => ReferenceSolution::dns_oracle(bench, t_final, cache_dir),
    }
}

pub(crate) fn run_method(bench: &Benchmark, cfg: &MethodConfig) -> Result<Trajectory> {
    match cfg.method {
        Method::Dns => dns_integrate(&bench.system, cfg, &bench.slow),
        Method::Flavors => flavors_integrate(&bench.system, cfg, &bench.slow),
        Method::Vshmm => vshmm_integrate(&bench.system, cfg, &bench.slow),
        Method::Mshmm => match &bench.partitioned {
            Some(p) => mshmm_integrate(p, cfg),
            None => Err(Error::Config(format!(
                "mshmm needs a partitioned system; {} has none",
                bench.problem
            ))),
        },
    }
}

fn labels(methods: &[MethodConfig]) -> Vec<String> {
    methods
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let earlier = methods[..i].iter().filter(|o| o.method == m.method).count();
            if earlier == 0 {
                m.method.to_string()
            } else {
                format!("{}_{}", m.method, earlier + 1)
            }
        })
        .collect()
}

/// Run every configured method, attach the reference and write
/// `trajectory_<method>.csv`, `errors.csv`, `cost.csv` and `summary.json`
/// into `out`. DNS oracle tables are cached in `out/oracle_cache`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutcome> {
    ensure_dir(out)?;
    let bench = crate::systems::benchmark(cfg.system.id(), cfg.epsilon)?;
    let reference = build_reference(cfg, &bench, Some(&out.join("oracle_cache")))?;
    let trajectories = cfg
        .methods
        .par_iter()
        .map(|m| run_method(&bench, m))
        .collect::<Result<Vec<_>>>()?;
    let names = labels(&cfg.methods);
    let reports: Vec<ErrorReport> = names
        .iter()
        .zip(&cfg.methods)
        .zip(&trajectories)
        .map(|((n, m), t)| ErrorReport::new(n.clone(), m, t, &reference))
        .collect();

    for (name, traj) in names.iter().zip(&trajectories) {
        write_trajectory(&out.join(format!("trajectory_{name}.csv")), traj, &bench)?;
    }
    write_errors(&out.join("errors.csv"), &reports)?;
    write_cost(&out.join("cost.csv"), &reports)?;
    write_summary(&out.join("summary.json"), cfg, &reference, &reports)?;
    Ok(ExperimentOutcome {
        reports,
        trajectories,
        reference,
    })
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn write_trajectory(path: &Path, traj: &Trajectory, bench: &Benchmark) -> Result<()> {
    let mut w = writer(path)?;
    let dim = traj.states.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    header.extend(bench.slow.labels().iter().cloned());
    w.write_record(&header)?;
    for ((t, x), s) in traj.macro_times.iter().zip(&traj.states).zip(&traj.slow) {
        let mut rec = vec![fmt_f64(*t)];
        rec.extend(x.iter().chain(s).map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_errors(path: &Path, reports: &[ErrorReport]) -> Result<()> {
    let mut w = writer(path)?;
    let m = reports
        .first()
        .and_then(|r| r.component_errors.first())
        .map_or(0, Vec::len);
    let mut header = vec!["t".to_string(), "method".to_string()];
    header.extend((1..=m).map(|i| format!("err_{i}")));
    header.push("sup_running".into());
    w.write_record(&header)?;
    for r in reports {
        let mut running: f64 = 0.0;
        for ((t, e), n) in r.times.iter().zip(&r.component_errors).zip(&r.row_norms) {
            running = running.max(*n);
            let mut rec = vec![fmt_f64(*t), r.label.clone()];
            rec.extend(e.iter().map(|v| fmt_f64(*v)));
            rec.push(fmt_f64(running));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn predicted(cfg: &MethodConfig) -> f64 {
    match cfg.method {
        Method::Dns => 1.0,
        _ => predicted_efficiency(cfg.savings_factor()),
    }
}

fn write_cost(path: &Path, reports: &[ErrorReport]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["method", "predicted_efficiency", "full_evals", "f0_evals", "wall_seconds"])?;
    for r in reports {
        // The stiff-only updates of MSHMM are reported with the full-field column.
        w.write_record([
            r.label.clone(),
            fmt_f64(predicted(&r.config)),
            (r.counters.full + r.counters.f1).to_string(),
            r.counters.f0.to_string(),
            fmt_f64(r.wall_time.as_secs_f64()),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_summary(path: &Path, cfg: &ExperimentConfig, reference: &ReferenceSolution, reports: &[ErrorReport]) -> Result<()> {
    let methods: Vec<_> = reports
        .iter()
        .map(|r| {
            let c = &r.config;
            json!({
                "label": r.label,
                "method": c.method.as_str(),
                "delta_t": r.micro_dt,
                "mean_meso_step": r.mean_meso,
                "alpha": c.savings_factor(),
                "macro_dt": c.macro_dt,
                "t_final": c.t_final,
                "meso_order": c.meso_order,
                "micro_scheme": c.micro_scheme.as_str(),
                "sup_error": r.sup_norm,
                "relative_sup_error": r.relative_sup_norm,
                "full_evals": r.counters.full,
                "f0_evals": r.counters.f0,
                "f1_evals": r.counters.f1,
                "predicted_efficiency": predicted(c),
            })
        })
        .collect();
    let doc = json!({
        "system": cfg.system.id(),
        "epsilon": cfg.epsilon,
        "kernel": cfg.kernel.as_str(),
        "reference": {"kind": reference.kind().as_str(), "provenance": reference.provenance()},
        "methods": methods,
        "warnings": cfg.warnings,
    });
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    serde_json::to_writer_pretty(&mut f, &doc)?;
    writeln!(f).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{parse_config_str, ConfigOverrides};

    #[test]
    fn sup_norm_is_max_of_rows() {
        let cfg = parse_config_str(
            r#"{"system": "const_spiral", "epsilon": 1e-3, "methods": [{"method": "vshmm", "alpha": 10, "t_final": 0.5}, {"method": "flavors", "alpha": 10, "t_final": 0.5}]}"#,
            &ConfigOverrides::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, dir.path()).unwrap();
        for r in &out.reports {
            let max = r.row_norms.iter().copied().fold(0.0, f64::max);
            assert_eq!(r.sup_norm, max);
            assert_eq!(r.times.len(), 3);
        }
        for f in ["trajectory_vshmm.csv", "trajectory_flavors.csv", "errors.csv", "cost.csv", "summary.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn duplicate_methods_get_distinct_labels() {
        let a = MethodConfig::vshmm(1e-4, 1.0, 0.1, 0.1);
        let b = MethodConfig::dns(1e-4, 0.1, 0.1);
        assert_eq!(labels(&[a.clone(), b, a]), vec!["vshmm", "dns", "vshmm_2"]);
    }
}

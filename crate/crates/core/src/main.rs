use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use msint::harness::{
    alpha_sweep, build_reference, fit_above_floor, order_floor, order_study_rows, parse_config, run_experiment,
    write_order_study, write_sweep, ConfigOverrides, ExperimentConfig, SweepSpec,
};
use msint::kernel::{validate_kernel, KernelId};
use msint::multiscale::{Method, MethodConfig};
use msint::systems::{benchmark, Problem};
use msint::{Error, Result};

#[derive(Parser)]
#[command(name = "msint", version, about = "Multiscale integrators for stiff and oscillatory ODEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method of a config and write trajectories, errors and costs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// VSHMM vs FLAVORS sup errors over a list of alphas.
    SweepAlpha {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// VSHMM error against mean meso step at meso orders 1 and 2.
    OrderStudy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Micro steps to run; defaults to the config step halved 6 times.
        #[arg(long, value_delimiter = ',')]
        delta_ts: Vec<f64>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Check the moment and endpoint conditions of a registered kernel.
    ValidateKernel {
        #[arg(long)]
        kernel: String,
        #[arg(long, default_value_t = 1e-8)]
        tol_moment: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol_regularity: f64,
    },
    /// List the registered benchmark problems and their defaults.
    ListProblems,
}

#[derive(Args, Default)]
struct OverrideArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    kernel: Option<String>,
    /// auto, closed_form or dns
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    record_intermediate: bool,
    #[arg(long)]
    delta_t: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    macro_dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    meso_order: Option<u8>,
    #[arg(long)]
    micro_scheme: Option<String>,
}

impl OverrideArgs {
    fn to_overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            system: self.system.clone(),
            epsilon: self.epsilon,
            kernel: self.kernel.clone(),
            reference: self.reference.clone(),
            record_intermediate: self.record_intermediate.then_some(true),
            delta_t: self.delta_t,
            alpha: self.alpha,
            macro_dt: self.macro_dt,
            t_final: self.t_final,
            meso_order: self.meso_order,
            micro_scheme: self.micro_scheme.clone(),
        }
    }
}

fn load(path: &Path, o: &OverrideArgs) -> Result<ExperimentConfig> {
    let cfg = parse_config(path, &o.to_overrides())?;
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

/// First multiscale method of the config, used as the template of studies.
fn template(cfg: &ExperimentConfig) -> Result<&MethodConfig> {
    cfg.methods
        .iter()
        .find(|m| matches!(m.method, Method::Vshmm | Method::Flavors))
        .ok_or_else(|| Error::Config("studies need a vshmm or flavors method in the config".into()))
}

fn spec_of(m: &MethodConfig) -> SweepSpec {
    SweepSpec {
        delta_t: m.delta_t,
        macro_dt: m.macro_dt,
        t_final: m.t_final,
        micro_scheme: m.micro_scheme,
        meso_order: m.meso_order,
        kernel: m.kernel,
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out, overrides } => {
            let cfg = load(&config, &overrides)?;
            let outcome = run_experiment(&cfg, &out)?;
            println!(
                "system {} eps {:e}, reference {} ({})",
                cfg.system,
                cfg.epsilon,
                outcome.reference.kind().as_str(),
                outcome.reference.provenance()
            );
            for r in &outcome.reports {
                println!(
                    "{:<10} dt {:.4e}  mean h {:.4e}  sup error {:.6e}  evals full {} f0 {} f1 {}",
                    r.label, r.micro_dt, r.mean_meso, r.sup_norm, r.counters.full, r.counters.f0, r.counters.f1
                );
            }
            println!("wrote {}", out.display());
        }
        Command::SweepAlpha { config, alphas, out, overrides } => {
            let cfg = load(&config, &overrides)?;
            let bench = benchmark(cfg.system.id(), cfg.epsilon)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
            let spec = spec_of(template(&cfg)?);
            let reference = build_reference(&cfg, &bench, Some(&out.join("oracle_cache")))?;
            let rows = alpha_sweep(&bench, &reference, &alphas, &spec)?;
            write_sweep(&out.join("alpha_sweep.csv"), &rows)?;
            for r in &rows {
                println!("alpha {:>8} {:<8} sup error {:.6e}", r.alpha, r.method, r.sup_error);
            }
        }
        Command::OrderStudy { config, out, delta_ts, overrides } => {
            let cfg = load(&config, &overrides)?;
            let bench = benchmark(cfg.system.id(), cfg.epsilon)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
            let m = template(&cfg)?;
            let alpha = m.savings_factor();
            let delta_ts = if delta_ts.is_empty() {
                (0..7).map(|i| m.delta_t / 2f64.powi(i)).collect()
            } else {
                delta_ts
            };
            let reference = build_reference(&cfg, &bench, Some(&out.join("oracle_cache")))?;
            let rows = order_study_rows(&bench, &reference, alpha, &delta_ts, &spec_of(m))?;
            write_order_study(&out.join("order_study.csv"), &rows)?;
            for r in &rows {
                println!("h {:.4e} order {} error {:.6e}", r.mean_meso_step, r.order, r.error);
            }
            let floor = order_floor(&rows)?;
            println!("floor {floor:.6e}");
            for order in [1u8, 2] {
                let slope = fit_above_floor(&rows, order, floor)?;
                println!("order {order} slope {slope:.4}");
            }
        }
        Command::ValidateKernel { kernel, tol_moment, tol_regularity } => {
            let id: KernelId = kernel.parse()?;
            let report = validate_kernel(&id.kernel(), tol_moment, tol_regularity)?;
            println!("{report}");
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::ListProblems => {
            for p in Problem::ALL {
                let d = p.defaults();
                println!(
                    "{:<18} eps {:.4e}  alpha {:<5} macro_dt {:<5} T {:<3} {}  {}",
                    p.id(),
                    d.epsilon,
                    d.alpha,
                    d.macro_dt,
                    d.t_final,
                    if p.has_closed_form() { "closed-form" } else { "dns-oracle " },
                    p.description()
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

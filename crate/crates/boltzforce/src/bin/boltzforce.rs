use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use boltzforce::harness::{self, RunConfig};
use boltzforce::{Error, Result};

/// Boltzmann-with-force simulator and Navier–Stokes–Fourier limit checks.
///
/// Exit status: 0 success, 1 invalid input or configuration, 2 numerical
/// failure (including failed operator checks). The worker count is taken
/// from BOLTZFORCE_THREADS when set.
#[derive(Parser)]
#[command(name = "boltzforce", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the kinetic equation at the configured epsilon.
    SimulateKinetic {
        config: PathBuf,
        /// Output directory (default: output.dir of the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the limit fluid system from the configured data.
    SimulateFluid {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kinetic runs over reference.epsilons against one fluid reference.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kernel, gap, invariant and scaling checks of the collision operator.
    CheckOperators {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gnuplot column files and a script for every CSV in a run directory.
    ExportPlots { run_dir: PathBuf },
}

fn out_dir(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.output.dir.clone())
}

fn setup_threads() -> Result<()> {
    if let Ok(v) = std::env::var("BOLTZFORCE_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::config("BOLTZFORCE_THREADS", format!("not a worker count: `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    setup_threads()?;
    match cli.command {
        Command::SimulateKinetic { config, out } => {
            let cfg = harness::load_config(&config)?;
            let dir = out_dir(&cfg, out);
            let s = harness::simulate_kinetic(&cfg, &dir)?;
            println!(
                "kinetic run: eps {} dt {:.3e} steps {} mass drift {:.2e} -> {}",
                s.eps,
                s.dt,
                s.steps,
                s.relative_mass_drift,
                dir.display()
            );
        }
        Command::SimulateFluid { config, out } => {
            let cfg = harness::load_config(&config)?;
            let dir = out_dir(&cfg, out);
            let s = harness::simulate_fluid(&cfg, &dir)?;
            if s.cfl_warning {
                eprintln!("warning: advective CFL number exceeded 1");
            }
            println!("fluid run: nu {:.6} kappa {:.6} dt {:.3e} -> {}", s.nu, s.kappa, s.dt, dir.display());
        }
        Command::Sweep { config, out } => {
            let cfg = harness::load_config(&config)?;
            let dir = out_dir(&cfg, out);
            let table = harness::eps_sweep(&cfg)?;
            harness::emit_report(&[table.to_table()], &table, &dir)?;
            for r in &table.rows {
                println!(
                    "eps {:<8} err_u {:.4e} err_theta {:.4e} boussinesq {:.4e} {}",
                    r.eps, r.err_u, r.err_theta, r.boussinesq, r.status
                );
            }
            if table.rows.iter().any(|r| r.status != "ok") {
                return Err(Error::numerical("at least one sweep row failed"));
            }
        }
        Command::CheckOperators { config, out } => {
            let cfg = harness::load_config(&config)?;
            let report = harness::check_operators_report(&cfg);
            let json = serde_json::to_string_pretty(&report).map_err(|e| Error::invalid(e.to_string()))?;
            println!("{json}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("operators.json"), &json)?;
            }
            if !report.all_pass {
                let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
                return Err(Error::numerical(format!("failed checks: {}", failed.join(", "))));
            }
        }
        Command::ExportPlots { run_dir } => {
            for p in harness::export_plots(&run_dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use otto_lab::runner::{emit_plot_data, list_scenarios, load_scenario, out_root, run_scenario, RunStatus, OUT_ENV};

/// Numerical checks of local and bridge functional inequalities.
#[derive(Parser)]
#[command(name = "otto-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a built-in scenario.
    Run {
        /// Path to a config file, or the id of a built-in scenario.
        config: String,
        /// Output root (default: the config's `output`, $OTTO_LAB_OUT or ./otto-lab-out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    List,
    /// Write one series of a report as a whitespace-separated .dat file.
    Plot {
        /// A report.json written by `run`.
        report: PathBuf,
        #[arg(long)]
        series: String,
    },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c.clamp(0, 255) as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::List => {
            print!("{}", list_scenarios());
            ExitCode::SUCCESS
        }
        Command::Plot { report, series } => match emit_plot_data(&report, &series) {
            Ok(path) => {
                println!("{}", path.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(e.exit_code())
            }
        },
        Command::Run { config, out } => {
            let cfg = match load_scenario(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return code(e.exit_code());
                }
            };
            let root = out.unwrap_or_else(|| out_root(&cfg));
            let report = run_scenario(&cfg, &root);
            for r in &report.reports {
                let verdict = match (r.pass, r.informational) {
                    (true, _) => "PASS",
                    (false, true) => "INFO",
                    (false, false) => "FAIL",
                };
                println!("{verdict} {:<34} lhs {:>12.5e} rhs {:>12.5e} slack {:>12.5e}", r.name, r.lhs, r.rhs, r.slack);
            }
            for c in &report.consistency {
                let verdict = if c.pass { "PASS" } else { "FAIL" };
                println!("{verdict} {:<34} value {:>10.3e} tol {:.1e}", c.name, c.value, c.tolerance);
            }
            for (what, d) in &report.timings {
                eprintln!("time {what}: {:.3}s", d.as_secs_f64());
            }
            let status = match report.status {
                RunStatus::Pass => "pass",
                RunStatus::Fail => "fail",
                RunStatus::Refused => "refused",
                RunStatus::Error => "error",
            };
            println!("{}: {status} -> {}", report.scenario, report.out_dir.display());
            if let Some(msg) = &report.message {
                eprintln!("{msg}");
            }
            if report.exit_code == 3 {
                eprintln!("hint: pass --out or set {OUT_ENV} to choose another output root");
            }
            code(report.exit_code)
        }
    }
}

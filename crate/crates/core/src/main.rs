use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use netreg::experiment::{self, ExperimentConfig, RunSummary};
use netreg::{Error, Result};

#[derive(Parser)]
#[command(name = "netreg", version, about = "Network-regularized vs federated learning over Poisson data streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured schemes and write per-trial and aggregate artifacts.
    Run(RunArgs),
    /// Run NR and FL on identical traces and noise streams.
    Compare(RunArgs),
    /// Repeat the experiment along the configured sweep axis.
    Sweep(RunArgs),
    /// Draw SVG figures from one or more run directories.
    Plot {
        /// Run directories containing aggregate.csv.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// Print the bound constants and applicability verdicts without simulating.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// Record every m-th tick.
    #[arg(long)]
    thin: Option<u64>,
}

fn load(path: &Path, seed: Option<u64>, workers: Option<usize>, thin: Option<u64>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    if let Some(m) = thin {
        cfg.thin = m;
    }
    Ok(cfg)
}

fn load_args(a: &RunArgs) -> Result<ExperimentConfig> {
    load(&a.config, a.seed, a.workers, a.thin)
}

fn fmt_opt(s: Option<experiment::Stat>) -> String {
    s.map(|s| format!("{:.6e} ± {:.2e}", s.mean, s.stderr))
        .unwrap_or_else(|| "n/a".into())
}

fn print_summary(s: &RunSummary, dir: &Path) {
    println!(
        "{}: {}/{} trials completed -> {}",
        s.scheme.name(),
        s.trials_completed,
        s.trials_total,
        dir.display()
    );
    println!(
        "  (1/K)Σ‖∇ℓ‖² = {:.6e} ± {:.2e}",
        s.bound_window_grad_norm_sq.mean, s.bound_window_grad_norm_sq.stderr
    );
    println!("  plateau ‖∇ℓ‖² = {}", fmt_opt(s.plateau_grad_norm_sq));
    println!("  plateau loss = {}", fmt_opt(s.plateau_loss));
    if s.scheme == netreg::schemes::Scheme::Nr {
        println!("  plateau V̄ = {}", fmt_opt(s.plateau_vbar));
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => {
            let cfg = load_args(&a)?;
            let rep = experiment::run(&cfg, &a.out)?;
            for (o, d) in rep.outputs.iter().zip(&rep.dirs) {
                print_summary(&o.summary, d);
            }
            warn_all(&rep.warnings);
        }
        Command::Compare(a) => {
            let cfg = load_args(&a)?;
            let rep = experiment::compare(&cfg, &a.out)?;
            print_summary(&rep.nr.summary, &a.out.join("nr"));
            print_summary(&rep.fl.summary, &a.out.join("fl"));
            if let Some(r) = rep.comparison.grad_plateau_ratio {
                println!("FL/NR plateau ‖∇ℓ‖² ratio = {r:.4}");
            }
            if let Some(r) = rep.comparison.loss_stderr_ratio {
                println!("NR/FL plateau loss stderr ratio = {r:.4}");
            }
            warn_all(&rep.warnings);
        }
        Command::Sweep(a) => {
            let cfg = load_args(&a)?;
            let run = experiment::sweep(&cfg, &a.out)?;
            for p in &run.report.points {
                for h in &p.results {
                    println!(
                        "{}={} {}: plateau ‖∇ℓ‖² = {}",
                        run.report.axis,
                        p.label,
                        h.scheme.name(),
                        fmt_opt(h.plateau_grad_norm_sq)
                    );
                }
            }
            if let Some(s) = run.report.loglog_slope {
                println!("log-log slope = {s:.4}");
            }
            warn_all(&run.warnings);
        }
        Command::Plot { dirs, out } => {
            let (files, warnings) = experiment::plot::plot_runs(&dirs, &out)?;
            for f in files {
                println!("{}", f.display());
            }
            warn_all(&warnings);
        }
        Command::Check { config, seed } => {
            let cfg = load(&config, seed, None, None)?;
            let report = experiment::check(&cfg)?;
            for line in experiment::check_verdicts(&report) {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

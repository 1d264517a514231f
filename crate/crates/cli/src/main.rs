//! `esbo`: run tuning campaigns and summarize their result stores.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use esbo_core::harness::{self, Abscissa, CampaignConfig};
use esbo_core::{make_task, Error, TaskId};

#[derive(Parser)]
#[command(
    name = "esbo",
    version,
    about = "Early-stopping Bayesian optimization for controller tuning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every (task, variant, seed) run of a campaign config.
    Run {
        config: PathBuf,
        /// Result store directory. Defaults to the config path without extension.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Worker threads; defaults to the number of processors.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Write regret and rank summaries for a result store.
    Report {
        store: PathBuf,
        #[arg(long, value_enum, default_value_t = AbscissaArg::Steps)]
        abscissa: AbscissaArg,
        /// Output directory; defaults to `<store>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the registered tasks.
    ListTasks,
    /// Parse and validate a campaign config without running it.
    Validate { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum AbscissaArg {
    Evals,
    Steps,
}

impl From<AbscissaArg> for Abscissa {
    fn from(a: AbscissaArg) -> Self {
        match a {
            AbscissaArg::Evals => Abscissa::Evals,
            AbscissaArg::Steps => Abscissa::Steps,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Config(_))));
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run {
            config,
            store,
            threads,
        } => {
            let cfg = CampaignConfig::load(&config)?;
            let store = store.unwrap_or_else(|| config.with_extension(""));
            let summary = harness::run_campaign(&cfg, &store, threads)
                .with_context(|| format!("campaign in {}", store.display()))?;
            println!(
                "{} executed, {} skipped, {} failed; invariants: {} checked, {} violated",
                summary.executed,
                summary.skipped,
                summary.failed,
                summary.invariants.checked,
                summary.invariants.violations
            );
            println!("store: {}", store.display());
        }
        Command::Report {
            store,
            abscissa,
            out,
        } => {
            let runs = harness::load_runs(&store)?;
            let report = harness::analyze(&runs, &[abscissa.into()]);
            let out = out.unwrap_or_else(|| store.join("report"));
            for p in harness::write_report(&report, &out)? {
                println!("wrote {}", p.display());
            }
            print_headline(&report);
        }
        Command::ListTasks => {
            println!(
                "{:<16} {:>3} {:>6} {:>6}  {:<15} params",
                "task", "d", "T_max", "crash", "objective"
            );
            for id in TaskId::ALL {
                let t = make_task(id);
                let names: Vec<&str> = t.params().iter().map(|p| p.name).collect();
                println!(
                    "{:<16} {:>3} {:>6} {:>6}  {:<15} {}",
                    id.as_str(),
                    t.dim(),
                    t.t_max(),
                    if t.can_crash() { "yes" } else { "no" },
                    t.objective().as_str(),
                    names.join(",")
                );
            }
        }
        Command::Validate { config } => {
            let cfg = CampaignConfig::load(&config)?;
            println!(
                "ok: {} tasks x {} variants x {} seeds = {} runs (hash {})",
                cfg.tasks.len(),
                cfg.variants.len(),
                cfg.seeds().len(),
                harness::run_keys(&cfg).len(),
                &cfg.hash()[..12]
            );
        }
    }
    Ok(())
}

fn print_headline(report: &harness::Report) {
    for r in &report.by_abscissa {
        for h in &r.headlines {
            println!(
                "first reach of the {} final median ({:.4}) by {}:",
                h.reference,
                h.threshold,
                r.abscissa.as_str()
            );
            for v in &report.variants {
                let Some(f) = h.first_fraction.get(v) else {
                    continue;
                };
                match f {
                    Some(f) => println!("  {v:<8} {:.1}% of budget", 100.0 * f),
                    None => println!("  {v:<8} not reached"),
                }
            }
        }
    }
    if !report.degenerate.is_empty() {
        let names: Vec<&str> = report.degenerate.iter().map(|t| t.as_str()).collect();
        println!("degenerate tasks (excluded): {}", names.join(", "));
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use digrate::algorithms::Algorithm;
use digrate::harness::config::{audit_trace, load_config, write_outputs};
use digrate::harness::section6::{grid_search, reproduce_section6, Case, StepSizes, SummaryRow};
use digrate::harness::trace::RunTrace;
use digrate::theory::{bounds_report, GainLedger, TheoryParams};
use digrate::{Error, Result};

#[derive(Parser)]
#[command(name = "digrate", version, about = "Gradient tracking over time-varying graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment config and write its trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (the trace file name comes from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print step-size windows and rate bounds for a parameter file.
    Bounds {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Check the four arrow inequalities on a recorded trace.
    Audit {
        #[arg(long)]
        trace: PathBuf,
        /// Rate to test; defaults to the theorem rate for the recorded constants.
        #[arg(long)]
        lambda: Option<f64>,
        /// Contraction factor; defaults to the one recorded in the trace.
        #[arg(long)]
        delta: Option<f64>,
        /// Window; defaults to the one recorded in the trace.
        #[arg(long)]
        b: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Run the 12-agent Huber experiment for one graph case.
    Reproduce {
        /// ti-directed, tv-undirected or tv-directed.
        #[arg(long)]
        case: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON file with step sizes and iteration count replacing the defaults.
        #[arg(long)]
        steps: Option<PathBuf>,
    },
    /// Final residual of one algorithm over a grid of step sizes.
    Tune {
        #[arg(long)]
        case: String,
        #[arg(long)]
        algorithm: String,
        /// Comma-separated step sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long, default_value_t = 3000)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Dry-run checks on a config: connectivity, stochasticity, gradients.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn seed_or_env(seed: u64) -> Result<u64> {
    Ok(digrate::harness::config::seed_override()?.unwrap_or(seed))
}

fn print_ledger(ledger: &GainLedger, json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(ledger)?);
        return Ok(());
    }
    println!("lambda {}  K {}  gain product {}", ledger.lambda, ledger.k, ledger.gain_product);
    for a in &ledger.arrows {
        println!(
            "{:<8} lhs {:.6e}  rhs {}  margin {:+.3e}  {}",
            a.name,
            a.lhs,
            a.rhs,
            a.margin,
            if a.holds { "ok" } else { "VIOLATED" }
        );
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            let (trace, ledger) = cfg.execute()?;
            let path = cfg.output_path(out.as_deref());
            write_outputs(&path, &trace, ledger.as_ref())?;
            println!(
                "{} rows, final residual {:.6e} -> {}",
                trace.rows.len(),
                trace.final_residual(),
                path.display()
            );
            if let Some(t) = &trace.meta.termination {
                println!("stopped early: {t}");
            }
            if let Some(l) = &ledger {
                print_ledger(l, false)?;
            }
        }
        Command::Bounds { params, json } => {
            let text = fs::read_to_string(&params)?;
            let p: TheoryParams =
                serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", params.display())))?;
            let report = bounds_report(&p)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_table());
            }
        }
        Command::Audit {
            trace,
            lambda,
            delta,
            b,
            json,
        } => {
            let t = RunTrace::read(&trace)?;
            let ledger = audit_trace(&t, lambda, delta, b)?;
            print_ledger(&ledger, json)?;
            if !ledger.all_hold() {
                return Err(Error::NoGuarantee("at least one arrow inequality is violated".into()));
            }
        }
        Command::Reproduce { case, seed, out, steps } => {
            let case: Case = case.parse()?;
            let seed = seed_or_env(seed)?;
            let steps = match steps {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?)
                    .map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?,
                None => StepSizes::tuned(case),
            };
            let report = reproduce_section6(case, seed, &steps)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(format!("reproduce-{case}")));
            for (a, t) in &report.runs {
                t.write(&dir.join(format!("{a}.csv")))?;
            }
            write_summary(&dir.join("summary.csv"), &report.summary)?;
            print!("{}", report.to_table());
            println!("traces in {}", dir.display());
        }
        Command::Tune {
            case,
            algorithm,
            grid,
            iterations,
            seed,
        } => {
            let case: Case = case.parse()?;
            let algorithm: Algorithm = algorithm.parse()?;
            println!("step,final_residual,hitting_time");
            for g in grid_search(case, algorithm, &grid, iterations, seed_or_env(seed)?)? {
                let hit = g.hitting_time.map_or(String::new(), |k| k.to_string());
                println!("{},{:e},{hit}", g.step, g.final_residual);
            }
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            for line in cfg.validate()? {
                println!("ok: {line}");
            }
        }
    }
    Ok(())
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "final_residual", "best_residual", "slope", "r_squared"])?;
    for r in rows {
        let (slope, r2) = r
            .fit
            .map_or((String::new(), String::new()), |f| (f.slope.to_string(), f.r_squared.to_string()));
        w.write_record([
            r.algorithm.name().to_string(),
            r.final_residual.to_string(),
            r.best_residual.to_string(),
            slope,
            r2,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

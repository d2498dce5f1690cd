use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maghom_core::pipeline::{emit_report, run_checks, ArtifactStore, Pipeline, RunConfig};
use maghom_core::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "maghom",
    version,
    about = "Homogenized magneto-elastodynamics: cell data, memory kernel, limit and fine-scale solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Flags {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory [default: the config's `output`, else ./out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of inclusion modes, overriding the config.
    #[arg(long)]
    modes: Option<usize>,
    /// Comma-separated eps list for the fine runs, overriding the config.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
    /// Seed of the random probes used by `check`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Validate geometry and field.
    Cell(Flags),
    /// Solve the inclusion eigenproblem.
    Modes(Flags),
    /// Solve the cell correctors and assemble the effective coefficients.
    Correctors(Flags),
    /// Sample the memory kernel and the Volterra resolvent.
    Kernel(Flags),
    /// Integrate the macroscopic equation.
    Macro(Flags),
    /// Run the fine-scale simulations.
    Fine(Flags),
    /// Compare fine runs with the limit over the eps list.
    Converge(Flags),
    /// Run the invariant suite; nonzero exit on any failure.
    Check(Flags),
}

impl Command {
    fn flags(&self) -> &Flags {
        match self {
            Command::Cell(f)
            | Command::Modes(f)
            | Command::Correctors(f)
            | Command::Kernel(f)
            | Command::Macro(f)
            | Command::Fine(f)
            | Command::Converge(f)
            | Command::Check(f) => f,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let flags = cli.command.flags().clone();
    let mut cfg = RunConfig::load(&flags.config)?;
    if let Some(n) = flags.modes {
        cfg.discretization.modes = n;
    }
    if let Some(eps) = flags.eps {
        cfg.discretization.fine.eps = eps;
    }
    cfg.validate()?;
    if let Some(k) = flags.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot set up {k} threads: {e}")))?;
    }
    let out = flags
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let store = ArtifactStore::open(&out)?;
    let mut p = Pipeline::new(cfg, store, flags.seed);
    let summary = match cli.command {
        Command::Cell(_) => json!({ "cell": p.run_cell()? }),
        Command::Modes(_) => {
            p.run_cell()?;
            let (m, _) = p.modes(true)?;
            json!({ "modes": m.len(), "lowest_mu": m.modes.first().map(|x| x.mu) })
        }
        Command::Correctors(_) => {
            p.run_cell()?;
            let c = p.coefficients(true)?;
            json!({ "coefficients": c })
        }
        Command::Kernel(_) => {
            p.run_cell()?;
            let k = p.run_kernel()?;
            json!({ "samples": k.t.len(), "kbar1_at_0": k.kbar1.first() })
        }
        Command::Macro(_) => {
            p.run_cell()?;
            let r = p.run_macro()?;
            json!({ "steps": r.len().saturating_sub(1), "final": r.last() })
        }
        Command::Fine(_) => {
            let runs = p.run_fine()?;
            json!({ "runs": runs.iter().map(|r| json!({ "eps": r.eps, "dt": r.dt, "steps": r.steps })).collect::<Vec<_>>() })
        }
        Command::Converge(_) => {
            let t = p.run_converge()?;
            json!({ "converge": t })
        }
        Command::Check(_) => {
            let checks = run_checks(&mut p)?;
            emit_report(&mut p.store)?;
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            for c in &checks {
                println!(
                    "{} {} value={:e} threshold={:e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                );
            }
            if !failed.is_empty() {
                return Err(Error::CheckFailed(failed.join(", ")));
            }
            return Ok(());
        }
    };
    emit_report(&mut p.store)?;
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!(
                "{}",
                json!({ "error": "usage", "code": 2, "message": e.to_string().trim() })
            );
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

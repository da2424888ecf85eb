use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vortexpath::cli::{self, CompareError, RunConfig};

#[derive(Parser)]
#[command(
    name = "vortexpath",
    version,
    about = "Continuity-path solver and bound auditor for two torus curvature systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Key = value configuration file; all defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Direction-sampling seed (overrides the config's seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress output; failures still go to stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the t = 0 seed only and audit its bounds.
    Init(RunArgs),
    /// Follow the full continuity path to t = 1 and audit the endpoint.
    Solve(RunArgs),
    /// Re-check the stored endpoint of a finished run directory.
    Verify {
        /// Run directory holding summary.json and the field snapshots.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Compare two finished runs (ε-doubling or grid-refinement study).
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        /// Write the comparison report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

/// Exit 2 is reserved for configuration problems; 1 for structured run
/// failures; 0 for a fully passing run.
fn load_config(args: &RunArgs) -> Result<RunConfig, String> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            cli::parse_config(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run_command(args: &RunArgs, t0_only: bool) -> u8 {
    match load_config(args) {
        Ok(config) => cli::execute(&config, args.quiet, t0_only) as u8,
        Err(message) => {
            eprintln!("vortexpath: {message}");
            2
        }
    }
}

fn compare_command(dir_a: &PathBuf, dir_b: &PathBuf, out: Option<&PathBuf>, quiet: bool) -> u8 {
    match cli::export_comparison(dir_a, dir_b) {
        Ok(report) => {
            let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
            text.push('\n');
            match out {
                Some(path) => {
                    if let Err(e) = fs::write(path, &text) {
                        eprintln!("vortexpath: cannot write {}: {e}", path.display());
                        return 1;
                    }
                    if !quiet {
                        println!("wrote {}", path.display());
                    }
                }
                None => print!("{text}"),
            }
            if !quiet {
                for (system, cmp) in &report.systems {
                    let fmt = |r: Option<f64>| {
                        r.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".to_string())
                    };
                    println!(
                        "{system}: eps {} vs {}, |eps psi0| ratio {}, path sup |lap psi| ratio {}",
                        cmp.epsilon_a,
                        cmp.epsilon_b,
                        fmt(cmp.eps_psi0_ratio),
                        fmt(cmp.path_sup_dpsi_ratio),
                    );
                }
            }
            0
        }
        Err(e @ CompareError::Output(_)) => {
            eprintln!("vortexpath: {e}");
            2
        }
        Err(e) => {
            eprintln!("vortexpath: {e}");
            1
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Init(args) => run_command(args, true),
        Command::Solve(args) => run_command(args, false),
        Command::Verify { out, quiet } => cli::verify(out, *quiet) as u8,
        Command::Compare {
            dir_a,
            dir_b,
            out,
            quiet,
        } => compare_command(dir_a, dir_b, out.as_ref(), *quiet),
    };
    ExitCode::from(code)
}

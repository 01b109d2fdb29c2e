use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use unic_cli::{load_config, run, thread_cap, CliError, Command, Overrides};

/// Gated-APD readout-chain experiments driven by a JSON config.
#[derive(Debug, Parser)]
#[command(name = "unic-sim", version)]
struct Args {
    command: Command,
    /// Experiment config (JSON). All sections are optional.
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_gates: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn execute(args: &Args) -> Result<Vec<PathBuf>, CliError> {
    let cap = thread_cap(std::env::var("UNIC_SIM_THREADS").ok().as_deref())?;
    if let Some(n) = cap {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::runtime)?;
    }
    let text = match &args.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| {
            CliError::Config(vec![unic_cli::Issue::new("$", format!("{}: {e}", p.display()))])
        })?),
        None => None,
    };
    let cfg = load_config(
        text.as_deref(),
        &Overrides {
            seed: args.seed,
            n_gates: args.n_gates,
            output_dir: args.output_dir.clone(),
        },
    )?;
    run(args.command, &cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(files) => {
            let files: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
            println!("{}", serde_json::json!({"status": "ok", "command": args.command.to_string(), "files": files}));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

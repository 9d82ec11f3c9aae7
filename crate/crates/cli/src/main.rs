use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semsim_cli::console::{Session, StdinSource};
use semsim_cli::{run_command, RunConfig, EXIT_CONFIG};
use semsim_core::{load_model_file, Mode, Policy};

#[derive(Parser)]
#[command(name = "semsim", version, about = "Run executable semantic models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a model and write its trace.
    Run(RunArgs),
    /// Step and inspect a model interactively.
    Console(RunArgs),
    /// Check a model file and report the first problem.
    ValidateFile { path: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Built-in model name (waterfall, waterfall-frames, cardio) or file path.
    #[arg(long)]
    model: String,
    /// Number of steps; omit to run until the model goes idle.
    #[arg(long)]
    steps: Option<u64>,
    /// Water portions for the waterfall models.
    #[arg(long)]
    portions: Option<u32>,
    #[arg(long, env = "SEMSIM_SEED", default_value_t = 0)]
    seed: u64,
    /// deterministic or concurrent.
    #[arg(long, default_value = "deterministic")]
    mode: Mode,
    /// halt, warn or off.
    #[arg(long = "validate", default_value = "halt")]
    policy: Policy,
    /// Trace file; a `.reports.jsonl` sidecar is written next to it.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Scenario file to schedule before the first step.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

impl From<RunArgs> for RunConfig {
    fn from(a: RunArgs) -> Self {
        RunConfig {
            model: a.model,
            steps: a.steps,
            portions: a.portions,
            seed: a.seed,
            mode: a.mode,
            policy: a.policy,
            trace: a.trace,
            scenario: a.scenario,
        }
    }
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Cmd::Run(args) => {
            let config = RunConfig::from(args);
            exit(run_command(&config, Box::new(io::stdout()), &mut io::stderr()))
        }
        Cmd::Console(args) => {
            let config = RunConfig::from(args);
            let mut stdout = io::stdout();
            let result = Session::new(&config, &mut stdout)
                .and_then(|mut s| s.run(&mut StdinSource::spawn()));
            match result {
                Ok(code) => exit(code),
                Err(e) => {
                    eprintln!("error: {e}");
                    exit(EXIT_CONFIG)
                }
            }
        }
        Cmd::ValidateFile { path } => match load_model_file(&path) {
            Ok(m) => {
                println!(
                    "{}: ok ({} mechanisms, {} triggers, {} rules)",
                    m.name,
                    m.mechanisms.len(),
                    m.triggers.len(),
                    m.rules.rules().len()
                );
                exit(0)
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                exit(EXIT_CONFIG)
            }
        },
    }
}

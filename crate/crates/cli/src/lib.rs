//! Command-line runner and interactive console for semsim models.

pub mod console;
pub mod path;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use semsim_core::models::BUILTIN_MODELS;
use semsim_core::{
    builtin, load_model_file, load_scenario_file, Kernel, KernelConfig, KernelError, Mode, Model,
    ModelFileError, Policy, StepReport,
};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_HALTED: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown model `{0}`; expected a file path or one of: {}", BUILTIN_MODELS.join(", "))]
    UnknownModel(String),
    #[error("model `{name}`: {source}")]
    ModelFile {
        name: String,
        source: ModelFileError,
    },
    #[error("scenario {path}: {source}")]
    Scenario {
        path: String,
        source: ModelFileError,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Everything a run or console session needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    /// Built-in model name or model file path.
    pub model: String,
    /// `None` runs until the model goes idle, or forever if it never does.
    pub steps: Option<u64>,
    /// Bounds the waterfall built-ins; ignored elsewhere.
    pub portions: Option<u32>,
    pub seed: u64,
    pub mode: Mode,
    pub policy: Policy,
    pub trace: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(model: &str) -> Self {
        RunConfig {
            model: model.to_string(),
            steps: None,
            portions: None,
            seed: 0,
            mode: Mode::Deterministic,
            policy: Policy::Halt,
            trace: None,
            scenario: None,
        }
    }

    pub fn kernel_config(&self) -> KernelConfig {
        KernelConfig {
            seed: self.seed,
            mode: self.mode,
            policy: self.policy,
        }
    }

    /// Loads the model, builds the kernel and schedules the scenario.
    pub fn build_kernel(&self) -> Result<Kernel, CliError> {
        let model = resolve_model(&self.model, self.portions)?;
        let mut kernel = Kernel::new(model, self.kernel_config());
        if let Some(path) = &self.scenario {
            let scenario = load_scenario_file(path).map_err(|source| CliError::Scenario {
                path: path.display().to_string(),
                source,
            })?;
            kernel.schedule_scenario(scenario)?;
        }
        Ok(kernel)
    }
}

/// A built-in by name, otherwise a model file.
pub fn resolve_model(name: &str, portions: Option<u32>) -> Result<Model, CliError> {
    if let Some(built) = builtin(name, portions) {
        return built.map_err(|e| CliError::ModelFile {
            name: name.to_string(),
            source: e.into(),
        });
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(CliError::UnknownModel(name.to_string()));
    }
    load_model_file(path).map_err(|source| CliError::ModelFile {
        name: name.to_string(),
        source,
    })
}

/// Sidecar file holding one JSON step report per line.
pub fn sidecar_path(trace: &Path) -> PathBuf {
    let mut name = trace.as_os_str().to_owned();
    name.push(".reports.jsonl");
    PathBuf::from(name)
}

/// Where a run's trace lines and reports go.
pub struct Sinks {
    trace: Box<dyn Write>,
    reports: Option<Box<dyn Write>>,
}

impl Sinks {
    /// File sinks for `trace` (plus its sidecar), or `stdout` for lines only.
    pub fn open(trace: Option<&Path>, stdout: Box<dyn Write>) -> Result<Self, CliError> {
        match trace {
            None => Ok(Sinks {
                trace: stdout,
                reports: None,
            }),
            Some(path) => {
                let create = |p: &Path| -> Result<Box<dyn Write>, CliError> {
                    let f = File::create(p).map_err(|e| CliError::io(p, e))?;
                    Ok(Box::new(BufWriter::new(f)))
                };
                Ok(Sinks {
                    trace: create(path)?,
                    reports: Some(create(&sidecar_path(path))?),
                })
            }
        }
    }

    pub fn write_report(&mut self, report: &StepReport) -> io::Result<()> {
        for e in &report.events {
            writeln!(self.trace, "{}", e.line)?;
        }
        if let Some(r) = &mut self.reports {
            serde_json::to_writer(&mut *r, report)?;
            r.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.trace.flush()?;
        if let Some(r) = &mut self.reports {
            r.flush()?;
        }
        Ok(())
    }
}

/// Whether another step should run, given how many have run and the last
/// report.
pub fn keep_going(model: &Model, limit: Option<u64>, done: u64, last: Option<&StepReport>) -> bool {
    match limit {
        Some(n) => done < n,
        None => !(model.stop_when_idle && last.is_some_and(StepReport::is_idle)),
    }
}

/// Runs a model to completion and returns the process exit code. Trace
/// lines go to the trace file, or `stdout` when none is given; diagnostics
/// go to `stderr`.
pub fn run_command(config: &RunConfig, stdout: Box<dyn Write>, stderr: &mut dyn Write) -> i32 {
    match execute(config, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_CONFIG
        }
    }
}

fn execute(config: &RunConfig, stdout: Box<dyn Write>, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let mut kernel = config.build_kernel()?;
    let trace_path = config.trace.as_deref();
    let mut sinks = Sinks::open(trace_path, stdout)?;
    let io_err = |e| CliError::io(trace_path.unwrap_or(Path::new("<stdout>")), e);
    let mut done = 0;
    let mut code = EXIT_OK;
    while keep_going(kernel.model(), config.steps, done, kernel.reports().last()) {
        let report = kernel.step()?;
        done += 1;
        sinks.write_report(report).map_err(io_err)?;
        if !report.validation.passed() {
            let _ = writeln!(stderr, "{}", report.summary());
        }
        if report.halted {
            code = EXIT_HALTED;
            break;
        }
    }
    sinks.flush().map_err(io_err)?;
    Ok(code)
}

//! Interactive console. The session drives the kernel only between steps:
//! while paused it waits for a command; while running it takes one step per
//! poll and handles any command that has arrived.

use std::collections::VecDeque;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, TryRecvError};
use std::thread;

use semsim_core::validation::Expectation;
use semsim_core::{load_scenario_file, Kernel, Policy};

use crate::path::{self, PathError};
use crate::{keep_going, CliError, RunConfig, Sinks, EXIT_HALTED, EXIT_OK};

pub const USAGE: &str = "commands: pause | resume | step [k] | inspect <path> | set <path> <value> \
| annotations [<element>] | assertions | scenario <file> | help | quit";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Pause,
    Resume,
    Step(u64),
    Inspect(String),
    Set(String, String),
    Annotations(Option<String>),
    Assertions,
    Scenario(PathBuf),
    Help,
    Quit,
}

impl FromStr for Command {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let words: Vec<&str> = line.split_whitespace().collect();
        let cmd = match words.as_slice() {
            ["pause"] => Command::Pause,
            ["resume"] => Command::Resume,
            ["step"] => Command::Step(1),
            ["step", k] => Command::Step(k.parse().map_err(|_| format!("bad step count `{k}`"))?),
            ["inspect", p] => Command::Inspect(p.to_string()),
            ["set", p, v] => Command::Set(p.to_string(), v.to_string()),
            ["annotations"] => Command::Annotations(None),
            ["annotations", e] => Command::Annotations(Some(e.to_string())),
            ["assertions"] => Command::Assertions,
            ["scenario", f] => Command::Scenario(PathBuf::from(f)),
            ["help"] => Command::Help,
            ["quit"] | ["exit"] => Command::Quit,
            _ => return Err(format!("cannot parse `{}`", line.trim())),
        };
        Ok(cmd)
    }
}

pub enum Input {
    Line(String),
    /// Nothing waiting right now.
    Idle,
    Closed,
}

/// Where console commands come from. `wait` asks the source to block until
/// a line arrives.
pub trait CommandSource {
    fn next_input(&mut self, wait: bool) -> Input;
}

/// A fixed list of commands, then end of input.
pub struct Script(VecDeque<String>);

impl Script {
    pub fn new<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Script(lines.into_iter().map(Into::into).collect())
    }
}

impl CommandSource for Script {
    fn next_input(&mut self, _wait: bool) -> Input {
        self.0.pop_front().map_or(Input::Closed, Input::Line)
    }
}

/// Lines from standard input, read on a helper thread so a running session
/// can poll without blocking.
pub struct StdinSource {
    rx: Receiver<String>,
}

impl StdinSource {
    pub fn spawn() -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in io::stdin().lock().lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        StdinSource { rx }
    }
}

impl CommandSource for StdinSource {
    fn next_input(&mut self, wait: bool) -> Input {
        if wait {
            return self.rx.recv().map_or(Input::Closed, Input::Line);
        }
        match self.rx.try_recv() {
            Ok(line) => Input::Line(line),
            Err(TryRecvError::Empty) => Input::Idle,
            Err(TryRecvError::Disconnected) => Input::Closed,
        }
    }
}

pub struct Session<'a> {
    kernel: Kernel,
    steps: Option<u64>,
    sinks: Option<Sinks>,
    out: &'a mut dyn Write,
    paused: bool,
    done: u64,
}

impl<'a> Session<'a> {
    /// A paused session over the configured model. Trace lines go to the
    /// trace file when one is set, otherwise they are echoed to `out`.
    pub fn new(config: &RunConfig, out: &'a mut dyn Write) -> Result<Self, CliError> {
        let kernel = config.build_kernel()?;
        let sinks = match &config.trace {
            Some(p) => Some(Sinks::open(Some(p), Box::new(io::sink()))?),
            None => None,
        };
        Ok(Session {
            kernel,
            steps: config.steps,
            sinks,
            out,
            paused: true,
            done: 0,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    fn finished(&self) -> bool {
        self.kernel.halted_at().is_some()
            || !keep_going(self.kernel.model(), self.steps, self.done, self.kernel.reports().last())
    }

    /// Processes commands until `quit` or end of input; returns the exit code.
    pub fn run(&mut self, source: &mut dyn CommandSource) -> Result<i32, CliError> {
        self.say(USAGE)?;
        loop {
            let running = !self.paused && !self.finished();
            match source.next_input(!running) {
                Input::Line(line) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    if !self.handle(&line)? {
                        break;
                    }
                }
                Input::Idle => {
                    if running {
                        self.advance()?;
                    }
                }
                Input::Closed => {
                    while !self.paused && !self.finished() {
                        self.advance()?;
                    }
                    break;
                }
            }
        }
        if let Some(s) = &mut self.sinks {
            s.flush().map_err(|e| io_err("trace", e))?;
        }
        Ok(if self.kernel.halted_at().is_some() {
            EXIT_HALTED
        } else {
            EXIT_OK
        })
    }

    /// Runs one command line. Returns false on `quit`.
    pub fn handle(&mut self, line: &str) -> Result<bool, CliError> {
        let cmd = match line.parse::<Command>() {
            Ok(c) => c,
            Err(e) => {
                self.say(&format!("{e}\n{USAGE}"))?;
                return Ok(true);
            }
        };
        match cmd {
            Command::Pause => {
                self.paused = true;
                self.say(&format!("paused at step {}", self.kernel.tick()))?;
            }
            Command::Resume => {
                self.paused = false;
                if self.finished() {
                    self.say("run complete; use step to continue")?;
                }
            }
            Command::Step(k) => {
                for _ in 0..k {
                    if let Some(step) = self.kernel.halted_at() {
                        self.say(&format!("halted at step {step}"))?;
                        break;
                    }
                    self.advance()?;
                }
            }
            Command::Inspect(p) => {
                let text = path::resolve(self.kernel.model(), &p)
                    .and_then(|t| path::read(self.kernel.model(), &t));
                self.report(text)?;
            }
            Command::Set(p, v) => {
                let result = path::resolve(self.kernel.model(), &p)
                    .and_then(|t| path::write(self.kernel.model_mut(), &t, &v));
                match result {
                    Ok(()) => {
                        let model = self.kernel.model();
                        let check = model.rules.validate(&model.world, self.kernel.tick(), Policy::Warn);
                        let mut text = format!("{p} = {v}");
                        for violation in &check.violations {
                            text.push_str(&format!("\nviolation {violation}"));
                        }
                        self.say(&text)?;
                    }
                    Err(e) => self.say(&format!("error: {e}"))?,
                }
            }
            Command::Annotations(element) => {
                let model = self.kernel.model();
                let lines: Vec<String> = model
                    .list_annotations(element.as_deref(), None)
                    .iter()
                    .map(|a| format!("{} {}: {}", a.kind, a.target, a.note))
                    .collect();
                let text = if lines.is_empty() {
                    "no annotations".to_string()
                } else {
                    lines.join("\n")
                };
                self.say(&text)?;
            }
            Command::Assertions => {
                let text = self.assertions();
                self.say(&text)?;
            }
            Command::Scenario(file) => match load_scenario_file(&file) {
                Ok(s) => {
                    let name = s.name.clone();
                    let at = s.at_tick.max(self.kernel.tick());
                    match self.kernel.schedule_scenario(s) {
                        Ok(()) => self.say(&format!("scenario {name} scheduled for step {at}"))?,
                        Err(e) => self.say(&format!("error: {e}"))?,
                    }
                }
                Err(e) => self.say(&format!("error: {}: {e}", file.display()))?,
            },
            Command::Help => self.say(USAGE)?,
            Command::Quit => return Ok(false),
        }
        Ok(true)
    }

    fn assertions(&self) -> String {
        let model = self.kernel.model();
        let last = self.kernel.reports().last();
        let mut lines = Vec::new();
        for rule in model.rules.rules() {
            let pattern: Vec<String> = rule.pattern.iter().map(|p| p.to_string()).collect();
            let expect = match &rule.expectation {
                Expectation::MustExist => "must exist".to_string(),
                Expectation::MustNotExist => "must not exist".to_string(),
                Expectation::CountInSet(set) => format!("count in {set:?}"),
            };
            let status = match last {
                None => "unchecked",
                Some(r) if r.validation.violations.iter().any(|v| v.rule == rule.name) => "violated",
                Some(_) => "holds",
            };
            lines.push(format!("rule {}: {} {} [{status}]", rule.name, pattern.join(" . "), expect));
        }
        for f in &model.functions {
            lines.push(format!("function {}: {} ({})", f.subject, f.function_label, f.context));
        }
        lines.join("\n")
    }

    fn advance(&mut self) -> Result<(), CliError> {
        let report = self.kernel.step()?;
        self.done += 1;
        match &mut self.sinks {
            Some(s) => s.write_report(report).map_err(|e| io_err("trace", e))?,
            None => {
                for e in &report.events {
                    writeln!(self.out, "  {}", e.line).map_err(|e| io_err("console", e))?;
                }
            }
        }
        let summary = report.summary();
        let halted = report.halted;
        self.say(&summary)?;
        if halted {
            self.paused = true;
        }
        Ok(())
    }

    fn report(&mut self, text: Result<String, PathError>) -> Result<(), CliError> {
        match text {
            Ok(t) => self.say(&t),
            Err(e) => self.say(&format!("error: {e}")),
        }
    }

    fn say(&mut self, text: &str) -> Result<(), CliError> {
        writeln!(self.out, "{text}").map_err(|e| io_err("console", e))
    }
}

fn io_err(what: &str, source: io::Error) -> CliError {
    CliError::Io {
        path: what.to_string(),
        source,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session_output(config: &RunConfig, lines: &[&str]) -> String {
        let mut out = Vec::new();
        let mut session = Session::new(config, &mut out).unwrap();
        session.run(&mut Script::new(lines.iter().copied())).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn parses_the_grammar() {
        assert_eq!("step".parse(), Ok(Command::Step(1)));
        assert_eq!("step 3".parse(), Ok(Command::Step(3)));
        assert_eq!(
            "set water.phase solid".parse(),
            Ok(Command::Set("water.phase".into(), "solid".into()))
        );
        assert!("step three".parse::<Command>().is_err());
        assert!("dance".parse::<Command>().is_err());
    }

    #[test]
    fn step_prints_exactly_k_reports() {
        let out = session_output(&RunConfig::new("cardio"), &["step 3", "quit"]);
        let reports = out.lines().filter(|l| l.starts_with("step ")).count();
        assert_eq!(reports, 3);
    }

    #[test]
    fn bad_command_keeps_the_session_alive() {
        let out = session_output(&RunConfig::new("cardio"), &["jump", "inspect cardio.MedullaCapBlood.CO2Level", "quit"]);
        assert!(out.contains("cannot parse `jump`"));
        assert!(out.lines().any(|l| l == "high"));
    }

    #[test]
    fn frozen_water_surfaces_a_guard_failure() {
        let mut config = RunConfig::new("waterfall");
        config.portions = Some(2);
        let out = session_output(&config, &["set water.phase solid", "step", "quit"]);
        assert!(out.contains("guard failed WaterFlowing: fluid(water) [phase=solid]"), "{out}");
    }

    #[test]
    fn annotations_filter_by_element() {
        let out = session_output(&RunConfig::new("cardio"), &["annotations CellCap", "quit"]);
        assert!(out.contains("typical_example CellCap:"));
        assert!(!out.contains("GasExchangeAlv"));
    }
}

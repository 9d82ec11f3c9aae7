//! The event kernel: due triggers and signals fire mechanisms, staged moves
//! commit once per step, and every step ends in a validation pass.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::mpsc;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity::{EntityError, EntityRef, PortionId};
use crate::mechanism::{Action, GuardRead, PathFlow, Signal};
use crate::model::{Model, ModelError};
use crate::models::scenario::Scenario;
use crate::topology::{ConduitKind, MoveBatch, TopologyError};
use crate::validation::{Policy, ValidationReport, Violation, CONNECTION_RULE};

/// Emitted once per committed batch.
pub const COMMIT_LINE: &str = "trigger updates";
/// Rule name used when a staged batch cannot be applied.
pub const COMMIT_RULE: &str = "commit-applies";
const MAX_NESTING: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("mechanism `{mechanism}` fired while disabled: {}", failing.join("; "))]
    FiredWhileDisabled {
        mechanism: String,
        failing: Vec<String>,
    },
    #[error("no nerve connection {from} -> {to}")]
    NoNervePath { from: String, to: String },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("run halted at step {step} on a validation violation")]
    Halted { step: u64 },
    #[error("mechanism `{0}` nests too deeply")]
    NestingTooDeep(String),
    #[error("mechanism `{0}` acts on a subject before creating one")]
    NoSubject(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Entity(#[from] EntityError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Deterministic,
    /// One thread per subsystem reports due triggers; the committer handles
    /// them in arrival order.
    Concurrent,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(Mode::Deterministic),
            "concurrent" => Ok(Mode::Concurrent),
            other => Err(format!(
                "unknown mode `{other}`; expected deterministic or concurrent"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KernelConfig {
    pub seed: u64,
    pub mode: Mode,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u64,
    pub line: String,
    /// Mechanism that produced the line, or `commit`.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Trigger(String),
    Signal { from: String, payload: String },
    Nested(String),
    Manual,
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cause::Trigger(t) => write!(f, "trigger {t}"),
            Cause::Signal { from, payload } => write!(f, "signal {payload} from {from}"),
            Cause::Nested(m) => write!(f, "via {m}"),
            Cause::Manual => f.write_str("manual"),
        }
    }
}

/// One guard evaluation, and the firing if it held.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Firing {
    pub mechanism: String,
    pub cause: Cause,
    pub enabled: bool,
    pub guard: Vec<GuardRead>,
    /// Side-effect actions applied, described.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub side_effects: Vec<String>,
}

impl Firing {
    pub fn failing(&self) -> impl Iterator<Item = &GuardRead> {
        self.guard.iter().filter(|r| !r.holds)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<String>,
    pub firings: Vec<Firing>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub signals: Vec<Signal>,
    pub events: Vec<TraceEvent>,
    pub transitionals: usize,
    pub validation: ValidationReport,
    pub halted: bool,
}

impl StepReport {
    pub fn fired(&self, mechanism: &str) -> bool {
        self.firings
            .iter()
            .any(|f| f.enabled && f.mechanism == mechanism)
    }

    pub fn guard_failures(&self) -> impl Iterator<Item = &Firing> {
        self.firings.iter().filter(|f| !f.enabled)
    }

    pub fn is_idle(&self) -> bool {
        self.scenarios.is_empty() && self.signals.is_empty() && !self.firings.iter().any(|f| f.enabled)
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let fired: Vec<&str> = self
            .firings
            .iter()
            .filter(|f| f.enabled)
            .map(|f| f.mechanism.as_str())
            .collect();
        let mut out = format!(
            "step {}: fired [{}], {} events, {} violations",
            self.step,
            fired.join(", "),
            self.events.len(),
            self.validation.violations.len()
        );
        for s in &self.scenarios {
            out.push_str(&format!("; scenario {s}"));
        }
        for f in self.guard_failures() {
            let reads: Vec<String> = f.failing().map(|r| r.to_string()).collect();
            out.push_str(&format!("; guard failed {}: {}", f.mechanism, reads.join(", ")));
        }
        for v in &self.validation.violations {
            out.push_str(&format!("; violation {v}"));
        }
        if self.halted {
            out.push_str("; halted");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub steps: u64,
    pub halted_at: Option<u64>,
}

/// What a manual `fire` did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FireOutcome {
    pub firings: Vec<Firing>,
    pub events: Vec<TraceEvent>,
    pub refusals: Vec<Violation>,
}

#[derive(Default)]
struct StepCtx {
    tick: u64,
    batch: MoveBatch,
    pushed: Vec<String>,
    events: Vec<TraceEvent>,
    firings: Vec<Firing>,
    refusals: Vec<Violation>,
    scenarios: Vec<String>,
    signals: Vec<Signal>,
}

impl StepCtx {
    fn new(tick: u64) -> Self {
        StepCtx {
            tick,
            ..StepCtx::default()
        }
    }

    fn emit(&mut self, source: &str, line: String) {
        self.events.push(TraceEvent {
            step: self.tick,
            line,
            source: source.to_string(),
        });
    }

    fn refuse(&mut self, rule: &str, pairs: &[(&str, String)]) {
        self.refusals.push(Violation {
            rule: rule.to_string(),
            bindings: pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        });
    }
}

pub struct Kernel {
    model: Model,
    config: KernelConfig,
    tick: u64,
    pending_signals: Vec<Signal>,
    pending_scenarios: Vec<Scenario>,
    reports: Vec<StepReport>,
    trace: Vec<TraceEvent>,
    halted: Option<u64>,
    rng: ChaCha8Rng,
}

impl Kernel {
    pub fn new(model: Model, config: KernelConfig) -> Self {
        Kernel {
            model,
            config,
            tick: 0,
            pending_signals: Vec::new(),
            pending_scenarios: Vec::new(),
            reports: Vec::new(),
            trace: Vec::new(),
            halted: None,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Direct access for console manipulation between steps.
    pub fn model_mut(&mut self) -> &mut Model {
        &mut self.model
    }

    pub fn config(&self) -> KernelConfig {
        self.config
    }

    pub fn set_policy(&mut self, policy: Policy) {
        self.config.policy = policy;
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn reports(&self) -> &[StepReport] {
        &self.reports
    }

    pub fn halted_at(&self) -> Option<u64> {
        self.halted
    }

    pub fn pending_signals(&self) -> &[Signal] {
        &self.pending_signals
    }

    /// Queues a scenario for the start of step `at_tick`, or the next step
    /// if that has passed.
    pub fn schedule_scenario(&mut self, scenario: Scenario) -> Result<(), KernelError> {
        let triggers: Vec<String> = self.model.triggers.iter().map(|t| t.name.clone()).collect();
        scenario
            .check(&self.model.world, &triggers)
            .map_err(ModelError::from)?;
        self.pending_scenarios.push(scenario);
        Ok(())
    }

    pub fn enabled(&self, mechanism: &str) -> Result<bool, KernelError> {
        Ok(self.model.mechanism(mechanism)?.enabled(&self.model.world))
    }

    /// Queues a message over a nerve connection for delivery next tick.
    pub fn send_signal(&mut self, from: &str, to: &str, payload: &str) -> Result<Signal, KernelError> {
        for end in [from, to] {
            if !self.model.world.topology.compartments.contains_key(end) {
                return Err(KernelError::UnknownEntity(end.to_string()));
            }
        }
        if !self
            .model
            .world
            .topology
            .is_connected(from, to, ConduitKind::Nerve)
        {
            return Err(KernelError::NoNervePath {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        let signal = Signal {
            from: from.to_string(),
            to: to.to_string(),
            payload: payload.to_string(),
            emitted_at: self.tick,
            deliver_at: self.tick + 1,
        };
        self.pending_signals.push(signal.clone());
        Ok(signal)
    }

    /// Fires a mechanism outside the schedule, committing anything it
    /// staged. The events are returned, not added to the run trace.
    pub fn fire(&mut self, mechanism: &str) -> Result<FireOutcome, KernelError> {
        let m = self.model.mechanism(mechanism)?;
        let eval = m.guard.evaluate(&self.model.world);
        if !eval.holds {
            return Err(KernelError::FiredWhileDisabled {
                mechanism: mechanism.to_string(),
                failing: eval.failing().map(|r| r.to_string()).collect(),
            });
        }
        let mut ctx = StepCtx::new(self.tick);
        self.dispatch(&mut ctx, mechanism, Cause::Manual, 0)?;
        self.finish_batch(&mut ctx);
        Ok(FireOutcome {
            firings: ctx.firings,
            events: ctx.events,
            refusals: ctx.refusals,
        })
    }

    pub fn step(&mut self) -> Result<&StepReport, KernelError> {
        if let Some(step) = self.halted {
            return Err(KernelError::Halted { step });
        }
        let tick = self.tick;
        let first_transitional = self.model.world.transitionals.len();
        self.model.world.begin_step(tick);
        let mut ctx = StepCtx::new(tick);

        let (due, later): (Vec<Scenario>, Vec<Scenario>) = self
            .pending_scenarios
            .drain(..)
            .partition(|s| s.at_tick <= tick);
        self.pending_scenarios = later;
        for s in due {
            self.model.apply_scenario(&s)?;
            ctx.scenarios.push(s.name);
        }

        for (trigger, target) in self.due_triggers(tick) {
            self.dispatch(&mut ctx, &target, Cause::Trigger(trigger), 0)?;
        }

        let (arriving, waiting): (Vec<Signal>, Vec<Signal>) = self
            .pending_signals
            .drain(..)
            .partition(|s| s.deliver_at <= tick);
        self.pending_signals = waiting;
        for signal in arriving {
            let targets: Vec<String> = self
                .model
                .receptors
                .iter()
                .filter(|r| r.at == signal.to && r.payload == signal.payload)
                .map(|r| r.mechanism.clone())
                .collect();
            let cause = Cause::Signal {
                from: signal.from.clone(),
                payload: signal.payload.clone(),
            };
            ctx.signals.push(signal);
            for target in targets {
                self.dispatch(&mut ctx, &target, cause.clone(), 0)?;
            }
        }

        self.finish_batch(&mut ctx);

        let policy = self.config.policy;
        let mut validation = self.model.rules.validate(&self.model.world, tick, policy);
        if policy != Policy::Off {
            validation.violations.append(&mut ctx.refusals);
        }
        let halted = policy == Policy::Halt && !validation.passed();
        let report = StepReport {
            step: tick,
            scenarios: ctx.scenarios,
            firings: ctx.firings,
            signals: ctx.signals,
            events: ctx.events,
            transitionals: self.model.world.transitionals.len() - first_transitional,
            validation,
            halted,
        };
        self.trace.extend(report.events.iter().cloned());
        self.reports.push(report);
        self.tick += 1;
        if halted {
            self.halted = Some(tick);
        }
        Ok(self.reports.last().expect("just pushed"))
    }

    /// Runs `n` steps, or with `None` until an idle step when the model
    /// allows it. Stops early on a halt.
    pub fn run(&mut self, n: Option<u64>) -> Result<RunSummary, KernelError> {
        let mut steps = 0;
        loop {
            if n.is_some_and(|n| steps >= n) {
                break;
            }
            if n.is_none() && !self.model.stop_when_idle {
                break;
            }
            let report = self.step()?;
            steps += 1;
            let (halted, idle) = (report.halted, report.is_idle());
            if halted {
                return Ok(RunSummary {
                    steps,
                    halted_at: self.halted,
                });
            }
            if n.is_none() && idle {
                break;
            }
        }
        Ok(RunSummary {
            steps,
            halted_at: None,
        })
    }

    fn due_triggers(&mut self, tick: u64) -> Vec<(String, String)> {
        let mut due: Vec<_> = self
            .model
            .triggers
            .iter()
            .filter(|t| t.due_at(tick))
            .collect();
        due.sort_by(|a, b| (a.period, &a.name).cmp(&(b.period, &b.name)));
        let due: Vec<(String, String)> = due
            .into_iter()
            .map(|t| (t.name.clone(), t.target.clone()))
            .collect();
        if self.config.mode == Mode::Deterministic {
            return due;
        }
        let mut groups: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        for item in due {
            let subsystem = self
                .model
                .mechanisms
                .get(&item.1)
                .map(|m| m.subsystem.clone())
                .unwrap_or_default();
            groups.entry(subsystem).or_default().push(item);
        }
        if groups.len() < 2 {
            return groups.into_values().flatten().collect();
        }
        let seeds: Vec<u64> = groups.keys().map(|_| self.rng.gen()).collect();
        let (tx, rx) = mpsc::channel();
        thread::scope(|scope| {
            for (items, seed) in groups.into_values().zip(seeds) {
                let tx = tx.clone();
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    for item in items {
                        for _ in 0..rng.gen_range(0..64) {
                            thread::yield_now();
                        }
                        // the receiver outlives the scope
                        let _ = tx.send(item);
                    }
                });
            }
        });
        drop(tx);
        rx.into_iter().collect()
    }

    fn dispatch(
        &mut self,
        ctx: &mut StepCtx,
        name: &str,
        cause: Cause,
        depth: usize,
    ) -> Result<bool, KernelError> {
        if depth > MAX_NESTING {
            return Err(KernelError::NestingTooDeep(name.to_string()));
        }
        let m = self.model.mechanism(name)?.clone();
        let eval = m.guard.evaluate(&self.model.world);
        let index = ctx.firings.len();
        ctx.firings.push(Firing {
            mechanism: m.name.clone(),
            cause,
            enabled: eval.holds,
            guard: eval.reads,
            side_effects: Vec::new(),
        });
        if !eval.holds {
            return Ok(false);
        }
        let mut subject = None;
        for step in &m.effect {
            self.apply(ctx, &m.name, &step.action, depth, &mut subject)?;
            if step.side_effect {
                ctx.firings[index].side_effects.push(describe(&step.action));
            }
        }
        Ok(true)
    }

    fn apply(
        &mut self,
        ctx: &mut StepCtx,
        source: &str,
        action: &Action,
        depth: usize,
        subject: &mut Option<PortionId>,
    ) -> Result<(), KernelError> {
        let world = &mut self.model.world;
        match action {
            Action::Trace { line } => ctx.emit(source, line.clone()),
            Action::SetState {
                entity,
                variable,
                label,
            } => {
                let e = world
                    .resolve_name(entity)
                    .ok_or_else(|| KernelError::UnknownEntity(entity.clone()))?;
                world.set_state(&e, variable, label)?;
            }
            Action::SetPortionProperty {
                compartment,
                property,
                level,
            } => {
                let members = world.topology.compartment(compartment)?.contents.clone();
                for id in members {
                    world.set_portion_property(id, property, level)?;
                }
            }
            Action::RingPush { circuit } => {
                if !ctx.pushed.contains(circuit) {
                    ctx.pushed.push(circuit.clone());
                }
                match world.ring_push(circuit) {
                    Ok(batch) => {
                        if let Err(e) = ctx.batch.absorb(batch) {
                            ctx.refuse(COMMIT_RULE, &[("mechanism", source.into()), ("error", e.to_string())]);
                        }
                    }
                    Err(TopologyError::PushWithoutConnection { from, to }) => ctx.refuse(
                        CONNECTION_RULE,
                        &[("mechanism", source.into()), ("from", from), ("to", to)],
                    ),
                    Err(e) => return Err(e.into()),
                }
            }
            Action::Transfer { moves, trace } => {
                let mut batch = MoveBatch::new();
                for mv in moves {
                    let Some(first) = world.topology.compartment(&mv.from)?.contents.first().copied()
                    else {
                        continue;
                    };
                    match world.stage_move(&mut batch, first, &mv.from, &[mv.to.as_str()]) {
                        Ok(()) => {}
                        Err(TopologyError::PushWithoutConnection { from, to }) => {
                            ctx.refuse(
                                CONNECTION_RULE,
                                &[("mechanism", source.into()), ("from", from), ("to", to)],
                            );
                            return Ok(());
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                if let Err(e) = world.commit(&mut batch) {
                    ctx.refuse(COMMIT_RULE, &[("mechanism", source.into()), ("error", e.to_string())]);
                    return Ok(());
                }
                for line in trace {
                    ctx.emit(source, line.clone());
                }
            }
            Action::EmitSignal { from, to, payload } => {
                self.send_signal(from, to, payload)?;
            }
            Action::TryFire { mechanism } => {
                self.dispatch(ctx, mechanism, Cause::Nested(source.to_string()), depth + 1)?;
            }
            Action::SpawnPortion { kind } => {
                *subject = Some(world.spawn_portion(kind)?);
            }
            Action::Repeat { times, body } => {
                for _ in 0..*times {
                    for a in body {
                        self.apply(ctx, source, a, depth, subject)?;
                    }
                }
            }
            Action::Displace { dx, dy } => {
                let id = subject.ok_or_else(|| KernelError::NoSubject(source.to_string()))?;
                let p = world.portion_mut(id)?;
                let c = p.coords.get_or_insert_with(Default::default);
                c.x += dx;
                c.y += dy;
            }
            Action::SetSubjectState { variable, label } => {
                let id = subject.ok_or_else(|| KernelError::NoSubject(source.to_string()))?;
                world.set_state(&EntityRef::Portion(id), variable, label)?;
            }
            Action::TraceSubject { template } => {
                let id = subject.ok_or_else(|| KernelError::NoSubject(source.to_string()))?;
                let line = subject_line(template, world.portion(id)?.birth_index);
                ctx.emit(source, line);
            }
            Action::FlowAlongPath(flow) => {
                if let Some(line) = self.flow_step(flow)? {
                    ctx.emit(source, line);
                }
            }
        }
        Ok(())
    }

    /// Advances the portion in transit by one unit, birthing one first if
    /// none is on the path. Returns the arrival line on delivery.
    fn flow_step(&mut self, flow: &PathFlow) -> Result<Option<String>, KernelError> {
        let world = &mut self.model.world;
        let in_transit = world
            .live_portions()
            .filter(|p| p.kind.as_deref() == Some(flow.portion_kind.as_str()))
            .find(|p| p.states.get(&flow.location_variable) != Some(&flow.goal))
            .map(|p| p.id);
        let id = match in_transit {
            Some(id) => id,
            None => {
                if flow
                    .limit
                    .is_some_and(|limit| world.births_of(&flow.portion_kind) >= limit)
                {
                    return Ok(None);
                }
                world.spawn_portion(&flow.portion_kind)?
            }
        };
        let progress = world.portion(id)?.progress;
        let Some(leg) = flow.leg_at(progress) else {
            return Ok(None);
        };
        let entity = EntityRef::Portion(id);
        if world.state_of(&entity, &flow.location_variable) != Some(leg.label.as_str()) {
            world.set_state(&entity, &flow.location_variable, &leg.label)?;
        }
        let p = world.portion_mut(id)?;
        let c = p.coords.get_or_insert_with(Default::default);
        c.x += leg.dx;
        c.y += leg.dy;
        p.progress += 1;
        if p.progress < flow.total_units() {
            return Ok(None);
        }
        let index = p.birth_index;
        world.set_state(&entity, &flow.location_variable, &flow.goal)?;
        Ok(Some(subject_line(&flow.arrival_trace, index)))
    }

    /// Commits the step's staged pulses and emits the push lines.
    fn finish_batch(&mut self, ctx: &mut StepCtx) {
        if ctx.pushed.is_empty() {
            return;
        }
        let mut batch = std::mem::take(&mut ctx.batch);
        match self.model.world.commit(&mut batch) {
            Ok(outcome) => {
                for compartment in &outcome.vacated {
                    let circuit = ctx
                        .pushed
                        .iter()
                        .filter_map(|c| self.model.world.topology.circuits.get(c))
                        .find(|c| c.hops.iter().any(|h| &h.from == compartment));
                    if let Some(circuit) = circuit {
                        let line = circuit.push_line(compartment);
                        ctx.emit("commit", line);
                    }
                }
                ctx.emit("commit", COMMIT_LINE.to_string());
            }
            Err(e) => ctx.refuse(COMMIT_RULE, &[("error", e.to_string())]),
        }
        ctx.pushed.clear();
    }
}

fn subject_line(template: &str, index: Option<u32>) -> String {
    let index = index.map_or_else(|| "?".to_string(), |i| i.to_string());
    template.replace("{index}", &index)
}

/// Short description of an action for the step log.
pub fn describe(action: &Action) -> String {
    match action {
        Action::Trace { line } => format!("trace \"{line}\""),
        Action::SetState {
            entity,
            variable,
            label,
        } => format!("set {entity}.{variable}={label}"),
        Action::SetPortionProperty {
            compartment,
            property,
            level,
        } => format!("set {compartment}.{property}={level}"),
        Action::RingPush { circuit } => format!("push {circuit}"),
        Action::Transfer { moves, .. } => {
            let parts: Vec<String> = moves.iter().map(|m| format!("{}->{}", m.from, m.to)).collect();
            format!("transfer {}", parts.join(", "))
        }
        Action::EmitSignal { from, to, payload } => format!("signal {payload} {from}->{to}"),
        Action::TryFire { mechanism } => format!("try {mechanism}"),
        Action::SpawnPortion { kind } => format!("spawn {kind}"),
        Action::Repeat { times, .. } => format!("repeat {times}"),
        Action::Displace { dx, dy } => format!("displace ({dx}, {dy})"),
        Action::SetSubjectState { variable, label } => format!("set subject.{variable}={label}"),
        Action::TraceSubject { template } => format!("trace \"{template}\""),
        Action::FlowAlongPath(flow) => format!("flow {} to {}", flow.portion_kind, flow.goal),
    }
}

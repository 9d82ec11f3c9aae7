//! Guarded, Petri-net-style mechanisms and the periodic sources that drive
//! them.
//!
//! A mechanism's guard is a declarative predicate over the world; its effect
//! is an ordered list of primitive actions. Effects flagged as side effects
//! run like any other action but are tagged in the step log.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::world::World;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guard {
    Always,
    All(Vec<Guard>),
    Any(Vec<Guard>),
    Not(Box<Guard>),
    /// Some live portion in the compartment has the property at this level.
    PortionProperty {
        compartment: String,
        property: String,
        level: String,
    },
    State {
        entity: String,
        variable: String,
        label: String,
    },
    /// The substance is in a liquid or gas phase.
    Fluid {
        substance: String,
    },
    Ambient {
        property: String,
        level: String,
    },
    BirthsBelow {
        kind: String,
        limit: u32,
    },
    /// Some live portion of the kind has not yet reached the goal location.
    InTransit {
        kind: String,
        variable: String,
        goal: String,
    },
}

/// One leaf of a guard as evaluated against a concrete world.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardRead {
    pub clause: String,
    pub observed: String,
    pub holds: bool,
}

impl fmt::Display for GuardRead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.clause, self.observed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GuardEval {
    pub holds: bool,
    pub reads: Vec<GuardRead>,
}

impl GuardEval {
    pub fn failing(&self) -> impl Iterator<Item = &GuardRead> {
        self.reads.iter().filter(|r| !r.holds)
    }
}

impl Guard {
    pub fn all(guards: impl IntoIterator<Item = Guard>) -> Guard {
        Guard::All(guards.into_iter().collect())
    }

    pub fn portion_property(compartment: &str, property: &str, level: &str) -> Guard {
        Guard::PortionProperty {
            compartment: compartment.to_string(),
            property: property.to_string(),
            level: level.to_string(),
        }
    }

    pub fn fluid(substance: &str) -> Guard {
        Guard::Fluid {
            substance: substance.to_string(),
        }
    }

    pub fn evaluate(&self, world: &World) -> GuardEval {
        let mut reads = Vec::new();
        let holds = self.eval_into(world, &mut reads);
        GuardEval { holds, reads }
    }

    pub fn holds(&self, world: &World) -> bool {
        self.evaluate(world).holds
    }

    // Every leaf is read even after the outcome is known so that the step log
    // shows the full picture.
    #[allow(clippy::unnecessary_fold)]
    fn eval_into(&self, world: &World, reads: &mut Vec<GuardRead>) -> bool {
        match self {
            Guard::Always => true,
            Guard::All(gs) => gs.iter().fold(true, |acc, g| g.eval_into(world, reads) && acc),
            Guard::Any(gs) => gs.iter().fold(false, |acc, g| g.eval_into(world, reads) || acc),
            Guard::Not(g) => {
                let mut inner = Vec::new();
                let v = !g.eval_into(world, &mut inner);
                reads.extend(inner.into_iter().map(|r| GuardRead {
                    clause: format!("not {}", r.clause),
                    holds: !r.holds,
                    observed: r.observed,
                }));
                v
            }
            leaf => {
                let read = leaf.read_leaf(world);
                let holds = read.holds;
                reads.push(read);
                holds
            }
        }
    }

    fn read_leaf(&self, world: &World) -> GuardRead {
        let (observed, holds) = match self {
            Guard::PortionProperty {
                compartment,
                property,
                level,
            } => {
                let levels: Vec<&str> = world
                    .topology
                    .compartments
                    .get(compartment)
                    .map(|c| {
                        c.contents
                            .iter()
                            .filter_map(|id| world.portions.get(id))
                            .filter(|p| p.alive)
                            .filter_map(|p| p.property(property))
                            .collect()
                    })
                    .unwrap_or_default();
                if levels.is_empty() {
                    ("empty".to_string(), false)
                } else {
                    (levels.join(","), levels.contains(&level.as_str()))
                }
            }
            Guard::State {
                entity,
                variable,
                label,
            } => match world
                .resolve_name(entity)
                .and_then(|e| world.state_of(&e, variable).map(str::to_string))
            {
                Some(current) => {
                    let holds = &current == label;
                    (current, holds)
                }
                None => ("unresolved".to_string(), false),
            },
            Guard::Fluid { substance } => match world.substances.get(substance) {
                Some(s) => (format!("phase={}", s.phase), s.is_fluid()),
                None => ("unresolved".to_string(), false),
            },
            Guard::Ambient { property, level } => match world.microworld.level(property) {
                Some(current) => (current.to_string(), current == level),
                None => ("unresolved".to_string(), false),
            },
            Guard::BirthsBelow { kind, limit } => {
                let n = world.births_of(kind);
                (n.to_string(), n < *limit)
            }
            Guard::InTransit {
                kind,
                variable,
                goal,
            } => {
                let n = world
                    .live_portions()
                    .filter(|p| p.kind.as_deref() == Some(kind.as_str()))
                    .filter(|p| p.states.get(variable) != Some(goal))
                    .count();
                (format!("{n} in transit"), n > 0)
            }
            Guard::Always | Guard::All(_) | Guard::Any(_) | Guard::Not(_) => {
                unreachable!("composite guards are not leaves")
            }
        };
        GuardRead {
            clause: self.to_string(),
            observed,
            holds,
        }
    }

    pub(crate) fn references(&self, out: &mut Vec<Reference>) {
        match self {
            Guard::Always => {}
            Guard::All(gs) | Guard::Any(gs) => gs.iter().for_each(|g| g.references(out)),
            Guard::Not(g) => g.references(out),
            Guard::PortionProperty { compartment, .. } => {
                out.push(Reference::Compartment(compartment.clone()))
            }
            Guard::State {
                entity,
                variable,
                label,
            } => out.push(Reference::State {
                entity: entity.clone(),
                variable: variable.clone(),
                label: label.clone(),
            }),
            Guard::Fluid { substance } => out.push(Reference::Substance(substance.clone())),
            Guard::Ambient { property, level } => out.push(Reference::Ambient {
                property: property.clone(),
                level: level.clone(),
            }),
            Guard::BirthsBelow { kind, .. } | Guard::InTransit { kind, .. } => {
                out.push(Reference::Kind(kind.clone()))
            }
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, gs: &[Guard], sep: &str| -> fmt::Result {
            f.write_str("(")?;
            for (i, g) in gs.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                write!(f, "{g}")?;
            }
            f.write_str(")")
        };
        match self {
            Guard::Always => f.write_str("true"),
            Guard::All(gs) => join(f, gs, " and "),
            Guard::Any(gs) => join(f, gs, " or "),
            Guard::Not(g) => write!(f, "not {g}"),
            Guard::PortionProperty {
                compartment,
                property,
                level,
            } => write!(f, "{compartment}.{property} == {level}"),
            Guard::State {
                entity,
                variable,
                label,
            } => write!(f, "{entity}.{variable} == {label}"),
            Guard::Fluid { substance } => write!(f, "fluid({substance})"),
            Guard::Ambient { property, level } => write!(f, "ambient.{property} == {level}"),
            Guard::BirthsBelow { kind, limit } => write!(f, "births({kind}) < {limit}"),
            Guard::InTransit { kind, goal, .. } => write!(f, "in_transit({kind}, {goal})"),
        }
    }
}

/// A straight stretch of a coordinate path, walked one unit at a time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathLeg {
    pub label: String,
    pub units: u32,
    pub dx: i64,
    pub dy: i64,
}

/// Coordinate-mode fluid motion: each firing births a portion, advances the
/// portion in transit by one unit, or delivers it to the goal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathFlow {
    pub portion_kind: String,
    pub location_variable: String,
    pub legs: Vec<PathLeg>,
    pub goal: String,
    #[serde(default)]
    pub limit: Option<u32>,
    /// Emitted on delivery; `{index}` is the portion's birth index.
    pub arrival_trace: String,
}

impl PathFlow {
    pub fn total_units(&self) -> u32 {
        self.legs.iter().map(|l| l.units).sum()
    }

    /// The leg a portion is on after travelling `progress` units, and the
    /// displacement of its next unit.
    pub fn leg_at(&self, progress: u32) -> Option<&PathLeg> {
        let mut remaining = progress;
        for leg in &self.legs {
            if remaining < leg.units {
                return Some(leg);
            }
            remaining -= leg.units;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Trace {
        line: String,
    },
    SetState {
        entity: String,
        variable: String,
        label: String,
    },
    /// Sets the property on every live portion in the compartment.
    SetPortionProperty {
        compartment: String,
        property: String,
        level: String,
    },
    /// Stages a circuit pulse into the step's batch, committed at the end of
    /// the step.
    RingPush {
        circuit: String,
    },
    /// Moves the first portion of each `from` simultaneously and commits at
    /// once, then emits `trace`.
    Transfer {
        moves: Vec<Transfer>,
        trace: Vec<String>,
    },
    EmitSignal {
        from: String,
        to: String,
        payload: String,
    },
    /// Fires another mechanism if its guard holds.
    TryFire {
        mechanism: String,
    },
    /// Births a portion, which becomes the subject of later actions in this
    /// firing.
    SpawnPortion {
        kind: String,
    },
    Repeat {
        times: u32,
        body: Vec<Action>,
    },
    Displace {
        dx: i64,
        dy: i64,
    },
    SetSubjectState {
        variable: String,
        label: String,
    },
    /// `{index}` is replaced with the subject's birth index.
    TraceSubject {
        template: String,
    },
    FlowAlongPath(PathFlow),
}

impl Action {
    pub fn trace(line: &str) -> Action {
        Action::Trace {
            line: line.to_string(),
        }
    }

    pub(crate) fn references(&self, out: &mut Vec<Reference>) {
        match self {
            Action::Trace { .. } | Action::Displace { .. } | Action::TraceSubject { .. } => {}
            Action::SetSubjectState { .. } => {}
            Action::SetState {
                entity,
                variable,
                label,
            } => out.push(Reference::State {
                entity: entity.clone(),
                variable: variable.clone(),
                label: label.clone(),
            }),
            Action::SetPortionProperty { compartment, .. } => {
                out.push(Reference::Compartment(compartment.clone()))
            }
            Action::RingPush { circuit } => out.push(Reference::Circuit(circuit.clone())),
            Action::Transfer { moves, .. } => {
                for m in moves {
                    out.push(Reference::FluidEdge {
                        from: m.from.clone(),
                        to: m.to.clone(),
                    });
                }
            }
            Action::EmitSignal { from, to, .. } => out.push(Reference::NerveEdge {
                from: from.clone(),
                to: to.clone(),
            }),
            Action::TryFire { mechanism } => out.push(Reference::Mechanism(mechanism.clone())),
            Action::SpawnPortion { kind } => out.push(Reference::Kind(kind.clone())),
            Action::Repeat { body, .. } => body.iter().for_each(|a| a.references(out)),
            Action::FlowAlongPath(flow) => out.push(Reference::Kind(flow.portion_kind.clone())),
        }
    }

    /// Trace lines this action can produce. Entries may contain `{index}`.
    pub fn vocabulary(&self, out: &mut Vec<String>) {
        match self {
            Action::Trace { line } => out.push(line.clone()),
            Action::Transfer { trace, .. } => out.extend(trace.iter().cloned()),
            Action::TraceSubject { template } => out.push(template.clone()),
            Action::FlowAlongPath(flow) => out.push(flow.arrival_trace.clone()),
            Action::Repeat { body, .. } => body.iter().for_each(|a| a.vocabulary(out)),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectStep {
    pub action: Action,
    #[serde(default)]
    pub side_effect: bool,
}

impl EffectStep {
    pub fn main(action: Action) -> Self {
        EffectStep {
            action,
            side_effect: false,
        }
    }

    pub fn side(action: Action) -> Self {
        EffectStep {
            action,
            side_effect: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mechanism {
    pub name: String,
    pub subsystem: String,
    pub guard: Guard,
    pub effect: Vec<EffectStep>,
}

impl Mechanism {
    pub fn new(name: &str, subsystem: &str, guard: Guard) -> Self {
        Mechanism {
            name: name.to_string(),
            subsystem: subsystem.to_string(),
            guard,
            effect: Vec::new(),
        }
    }

    pub fn then(mut self, action: Action) -> Self {
        self.effect.push(EffectStep::main(action));
        self
    }

    pub fn then_side(mut self, action: Action) -> Self {
        self.effect.push(EffectStep::side(action));
        self
    }

    pub fn enabled(&self, world: &World) -> bool {
        self.guard.holds(world)
    }

    pub(crate) fn references(&self) -> Vec<Reference> {
        let mut out = Vec::new();
        self.guard.references(&mut out);
        for step in &self.effect {
            step.action.references(&mut out);
        }
        out
    }

    pub fn without_side_effects(&self) -> Mechanism {
        Mechanism {
            effect: self
                .effect
                .iter()
                .filter(|s| !s.side_effect)
                .cloned()
                .collect(),
            ..self.clone()
        }
    }
}

/// Something a mechanism names that must exist in the world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Reference {
    Compartment(String),
    Substance(String),
    Kind(String),
    Circuit(String),
    Mechanism(String),
    State {
        entity: String,
        variable: String,
        label: String,
    },
    Ambient {
        property: String,
        level: String,
    },
    FluidEdge {
        from: String,
        to: String,
    },
    NerveEdge {
        from: String,
        to: String,
    },
}

impl Reference {
    /// `None` if the reference resolves, otherwise a description of what is
    /// missing.
    pub(crate) fn dangling(&self, world: &World, mechanisms: &dyn Fn(&str) -> bool) -> Option<String> {
        use crate::topology::ConduitKind;
        let t = &world.topology;
        match self {
            Reference::Compartment(c) => {
                (!t.compartments.contains_key(c)).then(|| format!("compartment `{c}`"))
            }
            Reference::Substance(s) => {
                (!world.substances.contains_key(s)).then(|| format!("substance `{s}`"))
            }
            Reference::Kind(k) => (!world.kinds.contains_key(k)).then(|| format!("kind `{k}`")),
            Reference::Circuit(c) => {
                (!t.circuits.contains_key(c)).then(|| format!("circuit `{c}`"))
            }
            Reference::Mechanism(m) => (!mechanisms(m)).then(|| format!("mechanism `{m}`")),
            Reference::State {
                entity,
                variable,
                label,
            } => match world.resolve_name(entity) {
                None => Some(format!("entity `{entity}`")),
                Some(e) => match world.state_space_of(&e, variable) {
                    Err(_) => Some(format!("state variable `{entity}.{variable}`")),
                    Ok(space) if !space.contains(label) => {
                        Some(format!("label `{label}` of `{entity}.{variable}`"))
                    }
                    Ok(_) => None,
                },
            },
            Reference::Ambient { property, level } => match world.microworld.space(property) {
                None => Some(format!("ambient property `{property}`")),
                Some(space) if !space.contains(level) => {
                    Some(format!("ambient level `{property}={level}`"))
                }
                Some(_) => None,
            },
            Reference::FluidEdge { from, to } => (!t.is_connected(from, to, ConduitKind::Fluid))
                .then(|| format!("fluid connection {from} -> {to}")),
            Reference::NerveEdge { from, to } => (!t.is_connected(from, to, ConduitKind::Nerve))
                .then(|| format!("nerve connection {from} -> {to}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    pub name: String,
    pub period: u32,
    #[serde(default)]
    pub phase: u32,
    pub target: String,
    #[serde(default)]
    pub disabled: bool,
}

impl Trigger {
    pub fn new(name: &str, period: u32, phase: u32, target: &str) -> Self {
        Trigger {
            name: name.to_string(),
            period,
            phase,
            target: target.to_string(),
            disabled: false,
        }
    }

    pub fn due_at(&self, tick: u64) -> bool {
        let phase = u64::from(self.phase);
        !self.disabled
            && self.period > 0
            && tick >= phase
            && (tick - phase).is_multiple_of(u64::from(self.period))
    }
}

/// Binds a signal payload arriving at a compartment to the mechanism it
/// activates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receptor {
    pub at: String,
    pub payload: String,
    pub mechanism: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signal {
    pub from: String,
    pub to: String,
    pub payload: String,
    pub emitted_at: u64,
    pub deliver_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct System {
    pub name: String,
    pub members: Vec<String>,
    #[serde(default)]
    pub feedback: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::{MixRule, QualValue, ScaleKind, StateSpace, Substance};
    use crate::topology::Medium;

    fn world_with(co2: &str) -> World {
        let mut w = World::new();
        w.define_scale(StateSpace::new("GasLevel", ["low", "high"], ScaleKind::Binary).unwrap())
            .unwrap();
        w.add_substance(
            Substance::new("blood", "liquid")
                .with_property("CO2Level", QualValue::new("GasLevel", "low"), MixRule::Max),
        )
        .unwrap();
        w.topology
            .add_compartment("MedullaCap", Medium::BloodPath, Some(1), None, None)
            .unwrap();
        let props = [("CO2Level".to_string(), QualValue::new("GasLevel", co2))]
            .into_iter()
            .collect();
        let id = w.seed_portion("blood", None, props).unwrap();
        w.portions.get_mut(&id).unwrap().compartment = Some("MedullaCap".into());
        w.topology
            .compartments
            .get_mut("MedullaCap")
            .unwrap()
            .contents
            .push(id);
        w
    }

    #[test]
    fn medulla_guard_reads_carbon_dioxide() {
        let g = Guard::portion_property("MedullaCap", "CO2Level", "high");
        assert!(g.holds(&world_with("high")));
        let eval = g.evaluate(&world_with("low"));
        assert!(!eval.holds);
        assert_eq!(eval.reads[0].observed, "low");
        assert_eq!(eval.reads[0].clause, "MedullaCap.CO2Level == high");
    }

    #[test]
    fn fluid_guard_fails_when_frozen() {
        let mut w = World::new();
        w.add_substance(Substance::new("water", "solid")).unwrap();
        let eval = Guard::fluid("water").evaluate(&w);
        assert!(!eval.holds);
        assert_eq!(eval.reads[0].to_string(), "fluid(water) [phase=solid]");
    }

    #[test]
    fn composite_guards_read_every_leaf() {
        let w = world_with("high");
        let g = Guard::all([
            Guard::Not(Box::new(Guard::portion_property("MedullaCap", "CO2Level", "high"))),
            Guard::portion_property("MedullaCap", "CO2Level", "high"),
        ]);
        let eval = g.evaluate(&w);
        assert!(!eval.holds);
        assert_eq!(eval.reads.len(), 2);
        assert_eq!(eval.failing().count(), 1);
    }

    #[test]
    fn trigger_schedule() {
        let t = Trigger::new("SANode", 4, 1, "HeartbeatPush");
        let due: Vec<u64> = (0..12).filter(|k| t.due_at(*k)).collect();
        assert_eq!(due, vec![1, 5, 9]);
        let off = Trigger {
            disabled: true,
            ..t
        };
        assert!((0..12).all(|k| !off.due_at(k)));
    }

    #[test]
    fn path_leg_lookup() {
        let flow = PathFlow {
            portion_kind: "WaterPortion".into(),
            location_variable: "Location".into(),
            legs: vec![
                PathLeg { label: "upper".into(), units: 3, dx: 10, dy: -1 },
                PathLeg { label: "drop".into(), units: 2, dx: 1, dy: -10 },
            ],
            goal: "pool".into(),
            limit: None,
            arrival_trace: "{index} pool".into(),
        };
        assert_eq!(flow.total_units(), 5);
        assert_eq!(flow.leg_at(0).unwrap().label, "upper");
        assert_eq!(flow.leg_at(3).unwrap().label, "drop");
        assert!(flow.leg_at(5).is_none());
    }
}

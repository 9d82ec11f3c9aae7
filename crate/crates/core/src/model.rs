//! A runnable model: a world plus the mechanisms, triggers, rules, frames
//! and annotations that describe it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity::{EntityError, EntityRef, FunctionAssertion, FunctionContext};
use crate::frames::{FrameError, FrameRegistry};
use crate::mechanism::{Mechanism, Receptor, System, Trigger};
use crate::models::annotation::{Annotation, AnnotationKind};
use crate::models::microworld::AmbientError;
use crate::models::scenario::{Directive, Scenario, ScenarioError};
use crate::topology::{ConduitKind, TopologyError};
use crate::validation::{RuleError, RuleSet};
use crate::world::World;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Entity(#[from] EntityError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Ambient(#[from] AmbientError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("mechanism `{0}` is already registered")]
    DuplicateMechanism(String),
    #[error("mechanism `{mechanism}` refers to missing {missing}")]
    DanglingReference { mechanism: String, missing: String },
    #[error("unknown mechanism `{0}`")]
    UnknownMechanism(String),
    #[error("trigger `{0}` is already defined")]
    DuplicateTrigger(String),
    #[error("trigger `{0}` needs a period of at least 1")]
    ZeroPeriod(String),
    #[error("receptor at `{0}` names no compartment")]
    UnknownReceptorSite(String),
    #[error("system `{system}` lists unknown mechanism `{member}`")]
    UnknownSystemMember { system: String, member: String },
    #[error("function `{0}` has no context; a function is only meaningful relative to a mechanism, system or scenario")]
    MissingContext(String),
    #[error("function context {0} does not exist")]
    DanglingContext(FunctionContext),
    #[error("unknown entity `{0}`")]
    UnknownSubject(String),
    #[error("annotation target `{0}` does not exist")]
    DanglingTarget(String),
    #[error("scenario `{0}` is already defined")]
    DuplicateScenario(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MechanismHandle(pub String);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub name: String,
    pub world: World,
    #[serde(default)]
    pub mechanisms: BTreeMap<String, Mechanism>,
    #[serde(default)]
    pub triggers: Vec<Trigger>,
    #[serde(default)]
    pub receptors: Vec<Receptor>,
    #[serde(default)]
    pub systems: Vec<System>,
    #[serde(default)]
    pub rules: RuleSet,
    #[serde(default)]
    pub frames: FrameRegistry,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
    #[serde(default)]
    pub functions: Vec<FunctionAssertion>,
    #[serde(default)]
    pub scenarios: BTreeMap<String, Scenario>,
    /// End an unbounded run at the first step in which nothing fires.
    #[serde(default)]
    pub stop_when_idle: bool,
}

impl Model {
    pub fn new(name: &str, world: World) -> Self {
        Model {
            name: name.to_string(),
            world,
            ..Model::default()
        }
    }

    pub fn register_mechanism(&mut self, m: Mechanism) -> Result<MechanismHandle, ModelError> {
        if self.mechanisms.contains_key(&m.name) {
            return Err(ModelError::DuplicateMechanism(m.name));
        }
        self.check_mechanism(&m, Some(&m.name))?;
        let handle = MechanismHandle(m.name.clone());
        self.mechanisms.insert(m.name.clone(), m);
        Ok(handle)
    }

    fn check_mechanism(&self, m: &Mechanism, also: Option<&str>) -> Result<(), ModelError> {
        let known = |n: &str| self.mechanisms.contains_key(n) || also == Some(n);
        for r in m.references() {
            if let Some(missing) = r.dangling(&self.world, &known) {
                return Err(ModelError::DanglingReference {
                    mechanism: m.name.clone(),
                    missing,
                });
            }
        }
        Ok(())
    }

    pub fn mechanism(&self, name: &str) -> Result<&Mechanism, ModelError> {
        self.mechanisms
            .get(name)
            .ok_or_else(|| ModelError::UnknownMechanism(name.to_string()))
    }

    pub fn add_trigger(&mut self, t: Trigger) -> Result<(), ModelError> {
        if self.triggers.iter().any(|x| x.name == t.name) {
            return Err(ModelError::DuplicateTrigger(t.name));
        }
        self.check_trigger(&t)?;
        self.triggers.push(t);
        Ok(())
    }

    fn check_trigger(&self, t: &Trigger) -> Result<(), ModelError> {
        if t.period == 0 {
            return Err(ModelError::ZeroPeriod(t.name.clone()));
        }
        self.mechanism(&t.target)?;
        Ok(())
    }

    pub fn trigger_mut(&mut self, name: &str) -> Option<&mut Trigger> {
        self.triggers.iter_mut().find(|t| t.name == name)
    }

    pub fn add_receptor(&mut self, r: Receptor) -> Result<(), ModelError> {
        self.check_receptor(&r)?;
        self.receptors.push(r);
        Ok(())
    }

    fn check_receptor(&self, r: &Receptor) -> Result<(), ModelError> {
        if !self.world.topology.compartments.contains_key(&r.at) {
            return Err(ModelError::UnknownReceptorSite(r.at.clone()));
        }
        self.mechanism(&r.mechanism)?;
        Ok(())
    }

    pub fn add_system(&mut self, s: System) -> Result<(), ModelError> {
        self.check_system(&s)?;
        self.systems.push(s);
        Ok(())
    }

    fn check_system(&self, s: &System) -> Result<(), ModelError> {
        for m in &s.members {
            if !self.mechanisms.contains_key(m) {
                return Err(ModelError::UnknownSystemMember {
                    system: s.name.clone(),
                    member: m.clone(),
                });
            }
        }
        Ok(())
    }

    fn context_exists(&self, context: &FunctionContext) -> bool {
        match context {
            FunctionContext::Mechanism(n) => self.mechanisms.contains_key(n),
            FunctionContext::System(n) => self.systems.iter().any(|s| &s.name == n),
            FunctionContext::Scenario(n) => self.scenarios.contains_key(n),
        }
    }

    /// Records that `subject` performs `label` within `context`.
    pub fn assert_function(
        &mut self,
        subject: &str,
        label: &str,
        context: Option<FunctionContext>,
    ) -> Result<&FunctionAssertion, ModelError> {
        let context = context.ok_or_else(|| ModelError::MissingContext(label.to_string()))?;
        let subject = self
            .world
            .resolve_name(subject)
            .ok_or_else(|| ModelError::UnknownSubject(subject.to_string()))?;
        if !self.context_exists(&context) {
            return Err(ModelError::DanglingContext(context));
        }
        self.functions.push(FunctionAssertion {
            subject,
            function_label: label.to_string(),
            context,
        });
        Ok(self.functions.last().expect("just pushed"))
    }

    pub fn functions_of(&self, subject: &EntityRef) -> impl Iterator<Item = &FunctionAssertion> {
        let subject = subject.clone();
        self.functions.iter().filter(move |f| f.subject == subject)
    }

    /// Whether `name` names something an annotation can attach to.
    pub fn element_exists(&self, name: &str) -> bool {
        let w = &self.world;
        name == "microworld"
            || name == self.name
            || w.resolve_name(name).is_some()
            || w.kinds.contains_key(name)
            || w.topology.compartments.contains_key(name)
            || w.topology.circuits.contains_key(name)
            || self.mechanisms.contains_key(name)
            || self.triggers.iter().any(|t| t.name == name)
            || self.systems.iter().any(|s| s.name == name)
            || self.scenarios.contains_key(name)
            || self.frames.frames.contains_key(name)
            || self.rules.get(name).is_some()
    }

    pub fn annotate(&mut self, annotation: Annotation) -> Result<(), ModelError> {
        if !self.element_exists(&annotation.target) {
            return Err(ModelError::DanglingTarget(annotation.target));
        }
        self.annotations.push(annotation);
        Ok(())
    }

    pub fn list_annotations(
        &self,
        target: Option<&str>,
        kind: Option<AnnotationKind>,
    ) -> Vec<&Annotation> {
        self.annotations
            .iter()
            .filter(|a| target.is_none_or(|t| a.target == t))
            .filter(|a| kind.is_none_or(|k| a.kind == k))
            .collect()
    }

    fn trigger_names(&self) -> Vec<String> {
        self.triggers.iter().map(|t| t.name.clone()).collect()
    }

    pub fn add_scenario(&mut self, s: Scenario) -> Result<(), ModelError> {
        if self.scenarios.contains_key(&s.name) {
            return Err(ModelError::DuplicateScenario(s.name));
        }
        s.check(&self.world, &self.trigger_names())?;
        self.scenarios.insert(s.name.clone(), s);
        Ok(())
    }

    /// Applies every directive, after checking them all first.
    pub fn apply_scenario(&mut self, s: &Scenario) -> Result<(), ModelError> {
        s.check(&self.world, &self.trigger_names())?;
        for d in &s.directives {
            match d {
                Directive::DisableTrigger { trigger } => {
                    self.trigger_mut(trigger).expect("checked").disabled = true;
                }
                Directive::SetAmbient { property, level } => {
                    self.world.microworld.set_ambient(property, level)?;
                }
                Directive::SetState {
                    entity,
                    variable,
                    label,
                } => {
                    let e = self.world.resolve_name(entity).expect("checked");
                    self.world.set_state(&e, variable, label)?;
                }
                Directive::RemoveConnection { from, to, conduit } => {
                    self.world.topology.disconnect(from, to, *conduit);
                }
            }
        }
        Ok(())
    }

    /// Every trace line the model can emit. `{index}` stands for any
    /// non-negative integer.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut out = Vec::new();
        for m in self.mechanisms.values() {
            for step in &m.effect {
                step.action.vocabulary(&mut out);
            }
        }
        let pushes = self.mechanisms.values().flat_map(|m| &m.effect).any(|s| {
            matches!(s.action, crate::mechanism::Action::RingPush { .. })
        });
        if pushes {
            for circuit in self.world.topology.circuits.values() {
                for hop in &circuit.hops {
                    out.push(circuit.push_line(&hop.from));
                }
            }
            out.push(crate::kernel::COMMIT_LINE.to_string());
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn in_vocabulary(&self, line: &str) -> bool {
        self.vocabulary().iter().any(|v| vocabulary_match(v, line))
    }

    /// Full referential check, used after loading a model from a file.
    pub fn check(&self) -> Result<(), ModelError> {
        self.world.check_kinds()?;
        for c in self.world.topology.circuits.values() {
            self.world.topology.check_circuit(c)?;
        }
        for edge in &self.world.topology.connections {
            self.world.topology.compartment(&edge.from)?;
            self.world.topology.compartment(&edge.to)?;
        }
        for (name, m) in &self.mechanisms {
            if name != &m.name {
                return Err(ModelError::UnknownMechanism(name.clone()));
            }
            self.check_mechanism(m, None)?;
        }
        let mut seen = Vec::new();
        for t in &self.triggers {
            if seen.contains(&&t.name) {
                return Err(ModelError::DuplicateTrigger(t.name.clone()));
            }
            seen.push(&t.name);
            self.check_trigger(t)?;
        }
        for r in &self.receptors {
            self.check_receptor(r)?;
        }
        for s in &self.systems {
            self.check_system(s)?;
        }
        self.rules.check()?;
        for f in &self.functions {
            if !self.world.exists(&f.subject) {
                return Err(ModelError::UnknownSubject(f.subject.to_string()));
            }
            if !self.context_exists(&f.context) {
                return Err(ModelError::DanglingContext(f.context.clone()));
            }
        }
        for a in &self.annotations {
            if !self.element_exists(&a.target) {
                return Err(ModelError::DanglingTarget(a.target.clone()));
            }
        }
        for b in &self.frames.bindings {
            self.frames.check_binding(b, &self.world)?;
        }
        for s in self.scenarios.values() {
            s.check(&self.world, &self.trigger_names())?;
        }
        Ok(())
    }

    pub fn connected(&self, from: &str, to: &str) -> bool {
        self.world.topology.is_connected(from, to, ConduitKind::Fluid)
    }
}

/// Matches a vocabulary entry against a concrete line; `{index}` matches a
/// run of ASCII digits.
pub fn vocabulary_match(pattern: &str, line: &str) -> bool {
    match pattern.split_once("{index}") {
        None => pattern == line,
        Some((head, tail)) => {
            let Some(rest) = line.strip_prefix(head) else {
                return false;
            };
            let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
            digits > 0 && vocabulary_match(tail, &rest[digits..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_placeholder_matches_digits_only() {
        assert!(vocabulary_match("{index} pool", "0 pool"));
        assert!(vocabulary_match("{index} pool", "417 pool"));
        assert!(!vocabulary_match("{index} pool", " pool"));
        assert!(!vocabulary_match("{index} pool", "x pool"));
        assert!(!vocabulary_match("{index} pool", "3 pools"));
        assert!(vocabulary_match("trigger updates", "trigger updates"));
    }

    #[test]
    fn function_needs_context() {
        let mut w = World::new();
        w.add_substance(crate::entity::Substance::new("blood", "liquid"))
            .unwrap();
        let mut m = Model::new("t", w);
        let err = m.assert_function("blood", "carries oxygen", None).unwrap_err();
        assert_eq!(err, ModelError::MissingContext("carries oxygen".into()));
        let err = m
            .assert_function(
                "blood",
                "carries oxygen",
                Some(FunctionContext::System("circulation".into())),
            )
            .unwrap_err();
        assert!(matches!(err, ModelError::DanglingContext(_)));
        assert!(matches!(
            m.assert_function("bracket", "x", Some(FunctionContext::Scenario("s".into()))),
            Err(ModelError::UnknownSubject(_))
        ));
    }

    #[test]
    fn annotation_target_must_exist() {
        let mut m = Model::new("t", World::new());
        let err = m
            .annotate(Annotation::new(AnnotationKind::Idealization, "nowhere", "n"))
            .unwrap_err();
        assert_eq!(err, ModelError::DanglingTarget("nowhere".into()));
        m.annotate(Annotation::new(AnnotationKind::UserComment, "microworld", "ok"))
            .unwrap();
        assert_eq!(m.list_annotations(Some("microworld"), None).len(), 1);
    }
}

//! JSON model files.
//!
//! A model file is one JSON object with a `format` tag and one section per
//! part of the model. Every section except `format` and `name` may be
//! omitted. Loading checks every cross-reference; errors carry the JSON path
//! and line of the offending field where the parser can tell.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity::{FunctionAssertion, KindDef, Portion, SemObject, StateSpace, Substance, Transitional};
use crate::frames::FrameRegistry;
use crate::mechanism::{Mechanism, Receptor, System, Trigger};
use crate::model::{Model, ModelError};
use crate::models::annotation::Annotation;
use crate::models::microworld::Microworld;
use crate::models::scenario::Scenario;
use crate::topology::{Circuit, Compartment, Connection, TopologyError};
use crate::validation::{AssertionRule, RuleSet};
use crate::world::World;

pub const FORMAT: &str = "semsim-model/1";

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("model file is empty")]
    Empty,
    #[error("{path}: {message} (line {line}, column {column})")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format `{0}`; expected {FORMAT}")]
    Format(String),
    #[error("{0}")]
    Placement(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl From<TopologyError> for ModelFileError {
    fn from(e: TopologyError) -> Self {
        ModelFileError::Model(e.into())
    }
}

/// Portions present when the model starts, and how many of each kind have
/// been born.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default)]
    pub portions: Vec<Portion>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub births: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<Transitional>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub step: u64,
}

fn is_zero(n: &u64) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub name: String,
    #[serde(default)]
    pub scales: Vec<StateSpace>,
    #[serde(default)]
    pub substances: Vec<Substance>,
    #[serde(default)]
    pub kinds: Vec<KindDef>,
    #[serde(default)]
    pub objects: Vec<SemObject>,
    #[serde(default)]
    pub compartments: Vec<Compartment>,
    #[serde(default)]
    pub connections: Vec<Connection>,
    #[serde(default)]
    pub circuits: Vec<Circuit>,
    #[serde(default)]
    pub microworld: Microworld,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub mechanisms: Vec<Mechanism>,
    #[serde(default)]
    pub triggers: Vec<Trigger>,
    #[serde(default)]
    pub receptors: Vec<Receptor>,
    #[serde(default)]
    pub systems: Vec<System>,
    #[serde(default)]
    pub rules: Vec<AssertionRule>,
    #[serde(default)]
    pub frames: FrameRegistry,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
    #[serde(default)]
    pub functions: Vec<FunctionAssertion>,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub stop_when_idle: bool,
}

impl ModelFile {
    pub fn from_model(m: &Model) -> Self {
        let w = &m.world;
        ModelFile {
            format: FORMAT.to_string(),
            name: m.name.clone(),
            scales: w.scales.values().cloned().collect(),
            substances: w.substances.values().cloned().collect(),
            kinds: w.kinds.values().cloned().collect(),
            objects: w.objects.values().cloned().collect(),
            compartments: w.topology.compartments.values().cloned().collect(),
            connections: w.topology.connections.iter().cloned().collect(),
            circuits: w.topology.circuits.values().cloned().collect(),
            microworld: w.microworld.clone(),
            initial: InitialState {
                portions: w.portions.values().cloned().collect(),
                births: w.birth_counts().clone(),
                history: w.transitionals.clone(),
                step: w.step,
            },
            mechanisms: m.mechanisms.values().cloned().collect(),
            triggers: m.triggers.clone(),
            receptors: m.receptors.clone(),
            systems: m.systems.clone(),
            rules: m.rules.rules().to_vec(),
            frames: m.frames.clone(),
            annotations: m.annotations.clone(),
            functions: m.functions.clone(),
            scenarios: m.scenarios.values().cloned().collect(),
            stop_when_idle: m.stop_when_idle,
        }
    }

    /// Builds the model, checking every reference along the way.
    pub fn into_model(self) -> Result<Model, ModelFileError> {
        if self.format != FORMAT {
            return Err(ModelFileError::Format(self.format));
        }
        let mut w = World::new();
        for s in self.scales {
            w.define_scale(s).map_err(ModelError::from)?;
        }
        for s in self.substances {
            w.add_substance(s).map_err(ModelError::from)?;
        }
        for k in self.kinds {
            if w.kinds.contains_key(&k.name) {
                return Err(ModelError::from(crate::entity::EntityError::DuplicateKind(k.name)).into());
            }
            for space in &k.state_spaces {
                space.validate().map_err(ModelError::from)?;
            }
            w.kinds.insert(k.name.clone(), k);
        }
        w.check_kinds().map_err(ModelError::from)?;
        for o in self.objects {
            w.effective_state_spaces(&o.kind).map_err(ModelError::from)?;
            w.objects.insert(o.id.clone(), o);
        }
        for c in self.compartments {
            w.topology.add_compartment(
                &c.name,
                c.medium,
                c.capacity,
                c.structure.clone(),
                c.region.as_deref(),
            )?;
            w.topology
                .compartments
                .get_mut(&c.name)
                .expect("just added")
                .contents = c.contents;
        }
        for e in self.connections {
            w.topology.connect(&e.from, &e.to, e.conduit)?;
        }
        for c in self.circuits {
            w.topology.add_circuit(c)?;
        }
        w.microworld = self.microworld;
        if !w.microworld.is_complete() {
            return Err(ModelFileError::Placement(
                "microworld must define temperature, pressure, humidity and gravity".into(),
            ));
        }
        for p in self.initial.portions {
            if !w.substances.contains_key(&p.substance) {
                return Err(ModelError::from(crate::entity::EntityError::UnknownSubstance(
                    p.substance,
                ))
                .into());
            }
            for v in p.properties.values() {
                w.check_qual(v).map_err(ModelError::from)?;
            }
            w.portions.insert(p.id, p);
        }
        w.sync_portion_ids();
        w.set_birth_counts(self.initial.births);
        w.transitionals = self.initial.history;
        w.step = self.initial.step;
        if let Some(problem) = w.placement_errors().into_iter().next() {
            return Err(ModelFileError::Placement(problem));
        }

        let mut m = Model::new(&self.name, w);
        for mech in self.mechanisms {
            if m.mechanisms.contains_key(&mech.name) {
                return Err(ModelError::DuplicateMechanism(mech.name).into());
            }
            m.mechanisms.insert(mech.name.clone(), mech);
        }
        m.triggers = self.triggers;
        m.receptors = self.receptors;
        m.systems = self.systems;
        let mut rules = RuleSet::new();
        for r in self.rules {
            rules.register_rule(r).map_err(ModelError::from)?;
        }
        m.rules = rules;
        m.frames = self.frames;
        m.annotations = self.annotations;
        m.functions = self.functions;
        for s in self.scenarios {
            if m.scenarios.contains_key(&s.name) {
                return Err(ModelError::DuplicateScenario(s.name).into());
            }
            m.scenarios.insert(s.name.clone(), s);
        }
        m.stop_when_idle = self.stop_when_idle;
        m.check()?;
        Ok(m)
    }
}

pub fn to_json(model: &Model) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model serializes")
}

pub fn from_json(text: &str) -> Result<Model, ModelFileError> {
    parse_json::<ModelFile>(text)?.into_model()
}

/// Parses any JSON document, reporting the path of the failing field.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, ModelFileError> {
    if text.trim().is_empty() {
        return Err(ModelFileError::Empty);
    }
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ModelFileError::Parse {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<Model, ModelFileError> {
    from_json(&read(path.as_ref())?)
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<Scenario, ModelFileError> {
    parse_json(&read(path.as_ref())?)
}

pub fn save_model_file(model: &Model, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
    let path = path.as_ref();
    fs::write(path, to_json(model) + "\n").map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read(path: &Path) -> Result<String, ModelFileError> {
    fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_rejected() {
        assert!(matches!(from_json("  \n"), Err(ModelFileError::Empty)));
    }

    #[test]
    fn parse_error_names_the_field() {
        let err = from_json(r#"{"format":"semsim-model/1","name":"x","triggers":[{"name":"t","period":"four","target":"m"}]}"#)
            .unwrap_err();
        match err {
            ModelFileError::Parse { path, line, .. } => {
                assert_eq!(path, "triggers[0].period");
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn minimal_file_loads() {
        let m = from_json(r#"{"format":"semsim-model/1","name":"blank"}"#).unwrap();
        assert_eq!(m.name, "blank");
        assert!(m.world.microworld.is_complete());
    }
}

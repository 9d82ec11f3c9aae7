use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity::EntityError;
use crate::models::microworld::AmbientError;
use crate::topology::ConduitKind;
use crate::world::World;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("scenario `{scenario}`: no trigger named `{trigger}`")]
    UnknownTrigger { scenario: String, trigger: String },
    #[error("scenario `{scenario}`: no {conduit} connection {from} -> {to}")]
    UnknownConnection {
        scenario: String,
        from: String,
        to: String,
        conduit: ConduitKind,
    },
    #[error("scenario `{scenario}`: unknown entity `{entity}`")]
    UnknownEntity { scenario: String, entity: String },
    #[error("scenario `{scenario}`: {source}")]
    Ambient {
        scenario: String,
        source: AmbientError,
    },
    #[error("scenario `{scenario}`: {source}")]
    Entity {
        scenario: String,
        source: EntityError,
    },
}

fn fluid() -> ConduitKind {
    ConduitKind::Fluid
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Directive {
    DisableTrigger {
        trigger: String,
    },
    SetAmbient {
        property: String,
        level: String,
    },
    SetState {
        entity: String,
        variable: String,
        label: String,
    },
    RemoveConnection {
        from: String,
        to: String,
        #[serde(default = "fluid")]
        conduit: ConduitKind,
    },
}

/// A named set of overrides applied to a model at a given tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub at_tick: u64,
    #[serde(default)]
    pub directives: Vec<Directive>,
}

impl Scenario {
    pub fn new(name: &str, directives: Vec<Directive>) -> Self {
        Scenario {
            name: name.to_string(),
            at_tick: 0,
            directives,
        }
    }

    pub fn at(mut self, tick: u64) -> Self {
        self.at_tick = tick;
        self
    }

    /// The SA node stops firing.
    pub fn heart_stop() -> Self {
        Scenario::new(
            "heart-stop",
            vec![Directive::DisableTrigger {
                trigger: "SANode".into(),
            }],
        )
    }

    /// The water solidifies.
    pub fn freeze() -> Self {
        Scenario::new(
            "freeze",
            vec![Directive::SetState {
                entity: "water".into(),
                variable: crate::entity::PHASE_VARIABLE.into(),
                label: "solid".into(),
            }],
        )
    }

    /// Checks every directive against the world and the trigger names
    /// without changing anything.
    pub fn check(&self, world: &World, triggers: &[String]) -> Result<(), ScenarioError> {
        for d in &self.directives {
            match d {
                Directive::DisableTrigger { trigger } => {
                    if !triggers.contains(trigger) {
                        return Err(ScenarioError::UnknownTrigger {
                            scenario: self.name.clone(),
                            trigger: trigger.clone(),
                        });
                    }
                }
                Directive::SetAmbient { property, level } => {
                    let mut probe = world.microworld.clone();
                    probe
                        .set_ambient(property, level)
                        .map_err(|source| ScenarioError::Ambient {
                            scenario: self.name.clone(),
                            source,
                        })?;
                }
                Directive::SetState {
                    entity,
                    variable,
                    label,
                } => {
                    let e = world.resolve_name(entity).ok_or_else(|| {
                        ScenarioError::UnknownEntity {
                            scenario: self.name.clone(),
                            entity: entity.clone(),
                        }
                    })?;
                    let space = world.state_space_of(&e, variable).map_err(|source| {
                        ScenarioError::Entity {
                            scenario: self.name.clone(),
                            source,
                        }
                    })?;
                    if !space.contains(label) {
                        return Err(ScenarioError::Entity {
                            scenario: self.name.clone(),
                            source: EntityError::LabelOutsideSpace {
                                variable: variable.clone(),
                                label: label.clone(),
                            },
                        });
                    }
                }
                Directive::RemoveConnection { from, to, conduit } => {
                    if !world.topology.is_connected(from, to, *conduit) {
                        return Err(ScenarioError::UnknownConnection {
                            scenario: self.name.clone(),
                            from: from.clone(),
                            to: to.clone(),
                            conduit: *conduit,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

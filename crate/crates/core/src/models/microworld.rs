use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity::{QualValue, ScaleKind, StateSpace};

pub const AMBIENT_KEYS: [&str; 4] = ["temperature", "pressure", "humidity", "gravity"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmbientError {
    #[error("unknown ambient property `{0}`; expected one of temperature, pressure, humidity, gravity")]
    UnknownProperty(String),
    #[error("`{level}` is not a level of ambient {property}")]
    UnknownLevel { property: String, level: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbientProperty {
    pub space: StateSpace,
    pub level: String,
}

/// Ambient conditions shared by everything in a model. Standard temperature
/// and pressure unless a scenario says otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Microworld {
    properties: BTreeMap<String, AmbientProperty>,
}

fn ordinal(variable: &str, labels: &[&str], level: &str) -> AmbientProperty {
    AmbientProperty {
        space: StateSpace {
            variable: variable.to_string(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            scale_kind: ScaleKind::Ordinal,
        },
        level: level.to_string(),
    }
}

impl Default for Microworld {
    fn default() -> Self {
        let properties = [
            ordinal("temperature", &["below_freezing", "STP", "above_STP"], "STP"),
            ordinal("pressure", &["below_STP", "STP", "above_STP"], "STP"),
            ordinal("humidity", &["dry", "normal", "humid"], "normal"),
            ordinal("gravity", &["none", "earth", "high"], "earth"),
        ]
        .into_iter()
        .map(|p| (p.space.variable.clone(), p))
        .collect();
        Microworld { properties }
    }
}

impl Microworld {
    pub fn get(&self, property: &str) -> Option<QualValue> {
        self.properties
            .get(property)
            .map(|p| QualValue::new(p.space.variable.clone(), p.level.clone()))
    }

    pub fn level(&self, property: &str) -> Option<&str> {
        self.properties.get(property).map(|p| p.level.as_str())
    }

    pub fn space(&self, property: &str) -> Option<&StateSpace> {
        self.properties.get(property).map(|p| &p.space)
    }

    pub fn set_ambient(&mut self, property: &str, level: &str) -> Result<(), AmbientError> {
        let slot = self
            .properties
            .get_mut(property)
            .ok_or_else(|| AmbientError::UnknownProperty(property.to_string()))?;
        if !slot.space.contains(level) {
            return Err(AmbientError::UnknownLevel {
                property: property.to_string(),
                level: level.to_string(),
            });
        }
        slot.level = level.to_string();
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.properties
            .iter()
            .map(|(k, v)| (k.as_str(), v.level.as_str()))
    }

    /// All four ambient keys present with valid levels.
    pub fn is_complete(&self) -> bool {
        AMBIENT_KEYS.iter().all(|k| {
            self.properties
                .get(*k)
                .is_some_and(|p| p.space.contains(&p.level))
        })
    }
}

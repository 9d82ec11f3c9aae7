//! Dot paths for `inspect` and `set`: `[model.]entity[.property]`.
//!
//! An entity is an object id, substance, portion (`p<id>`), compartment,
//! `<Compartment><Substance>` alias for the first such portion in a
//! compartment (`MedullaCapBlood`), mechanism, trigger, or `ambient`.

use semsim_core::entity::{EntityRef, PortionId};
use semsim_core::Model;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("empty path")]
    Empty,
    #[error("cannot resolve `{0}`")]
    Unresolved(String),
    #[error("`{entity}` has no property `{property}`")]
    NoProperty { entity: String, property: String },
    #[error("path `{0}` has too many segments")]
    TooDeep(String),
    #[error("`{0}` cannot be set")]
    ReadOnly(String),
    #[error("{0}")]
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Ambient(Option<String>),
    Entity {
        entity: EntityRef,
        property: Option<String>,
    },
    Compartment(String),
    Mechanism(String),
    Trigger(String),
}

pub fn resolve(model: &Model, path: &str) -> Result<Target, PathError> {
    let mut segs: Vec<&str> = path.split('.').collect();
    if segs.iter().any(|s| s.is_empty()) {
        return Err(PathError::Empty);
    }
    if segs.len() > 1 && segs[0] == model.name {
        segs.remove(0);
    }
    if segs.len() > 2 {
        return Err(PathError::TooDeep(path.to_string()));
    }
    let name = segs[0];
    let property = segs.get(1).map(|s| s.to_string());
    if name == "ambient" {
        return Ok(Target::Ambient(property));
    }
    let w = &model.world;
    if let Some(entity) = w.resolve_name(name) {
        return Ok(Target::Entity { entity, property });
    }
    if w.topology.compartments.contains_key(name) {
        return match property {
            None => Ok(Target::Compartment(name.to_string())),
            Some(property) => {
                let first = w.topology.compartments[name].contents.first().copied();
                let id = first.ok_or_else(|| PathError::Unresolved(format!("{name} (empty)")))?;
                Ok(Target::Entity {
                    entity: EntityRef::Portion(id),
                    property: Some(property),
                })
            }
        };
    }
    if let Some(id) = alias(model, name) {
        return Ok(Target::Entity {
            entity: EntityRef::Portion(id),
            property,
        });
    }
    let leaf_only = |t: Target| match &property {
        None => Ok(t),
        Some(_) => Err(PathError::TooDeep(path.to_string())),
    };
    if model.mechanisms.contains_key(name) {
        return leaf_only(Target::Mechanism(name.to_string()));
    }
    if model.triggers.iter().any(|t| t.name == name) {
        return leaf_only(Target::Trigger(name.to_string()));
    }
    Err(PathError::Unresolved(name.to_string()))
}

/// `<Compartment><Substance>` names the first portion of that substance in
/// the compartment; the substance match ignores case.
fn alias(model: &Model, name: &str) -> Option<PortionId> {
    let w = &model.world;
    w.topology.compartments.values().find_map(|c| {
        let rest = name.strip_prefix(c.name.as_str())?;
        let substance = w.substances.keys().find(|s| s.eq_ignore_ascii_case(rest))?;
        c.contents
            .iter()
            .copied()
            .find(|id| w.portion(*id).is_ok_and(|p| &p.substance == substance))
    })
}

/// Text for `inspect`.
pub fn read(model: &Model, target: &Target) -> Result<String, PathError> {
    let w = &model.world;
    match target {
        Target::Ambient(None) => Ok(w
            .microworld
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")),
        Target::Ambient(Some(p)) => w
            .microworld
            .level(p)
            .map(str::to_string)
            .ok_or_else(|| no_property("ambient", p)),
        Target::Entity { entity, property: None } => {
            let json = match entity {
                EntityRef::Object(id) => serde_json::to_string(&w.objects[id]),
                EntityRef::Substance(s) => serde_json::to_string(&w.substances[s]),
                EntityRef::Portion(id) => serde_json::to_string(w.portion(*id).expect("resolved")),
            };
            Ok(json.expect("entities serialize"))
        }
        Target::Entity {
            entity,
            property: Some(p),
        } => {
            if let Some(label) = w.state_of(entity, p) {
                return Ok(label.to_string());
            }
            let value = match entity {
                EntityRef::Portion(id) => {
                    let portion = w.portion(*id).expect("resolved");
                    match p.as_str() {
                        "compartment" => portion.compartment.clone(),
                        "x" => portion.coords.map(|c| c.x.to_string()),
                        "y" => portion.coords.map(|c| c.y.to_string()),
                        _ => portion.property(p).map(str::to_string),
                    }
                }
                EntityRef::Object(id) => w.objects[id].properties.get(p).map(|q| q.level.clone()),
                EntityRef::Substance(s) => w.substances[s]
                    .default_properties
                    .get(p)
                    .map(|q| q.level.clone()),
            };
            value.ok_or_else(|| no_property(&entity.to_string(), p))
        }
        Target::Compartment(name) => {
            let c = &w.topology.compartments[name];
            let items: Vec<String> = c
                .contents
                .iter()
                .map(|id| {
                    let p = w.portion(*id).expect("placed portions exist");
                    format!("{id} ({})", p.substance)
                })
                .collect();
            Ok(format!("{name}: [{}]", items.join(", ")))
        }
        Target::Mechanism(name) => {
            let m = &model.mechanisms[name];
            let eval = m.guard.evaluate(w);
            let reads: Vec<String> = eval.reads.iter().map(|r| r.to_string()).collect();
            Ok(format!(
                "{name} ({}): {}; {}",
                m.subsystem,
                if eval.holds { "enabled" } else { "disabled" },
                reads.join(", ")
            ))
        }
        Target::Trigger(name) => {
            let t = model.triggers.iter().find(|t| &t.name == name).expect("resolved");
            Ok(format!(
                "{name}: every {} from {} -> {}{}",
                t.period,
                t.phase,
                t.target,
                if t.disabled { " (disabled)" } else { "" }
            ))
        }
    }
}

/// Applies `set`. State labels and levels are checked against their scales.
pub fn write(model: &mut Model, target: &Target, value: &str) -> Result<(), PathError> {
    let rejected = |e: &dyn std::fmt::Display| PathError::Rejected(e.to_string());
    let w = &mut model.world;
    match target {
        Target::Ambient(Some(p)) => w.microworld.set_ambient(p, value).map_err(|e| rejected(&e)),
        Target::Entity {
            entity,
            property: Some(p),
        } => {
            if w.state_space_of(entity, p).is_ok() {
                return w.set_state(entity, p, value).map(|_| ()).map_err(|e| rejected(&e));
            }
            match entity {
                EntityRef::Portion(id) => {
                    w.set_portion_property(*id, p, value).map_err(|e| rejected(&e))
                }
                other => Err(no_property(&other.to_string(), p)),
            }
        }
        Target::Trigger(name) => {
            let disabled = match value {
                "on" | "enabled" => false,
                "off" | "disabled" => true,
                _ => return Err(PathError::Rejected(format!("trigger `{name}` takes on or off"))),
            };
            model.trigger_mut(name).expect("resolved").disabled = disabled;
            Ok(())
        }
        other => Err(PathError::ReadOnly(format!("{other:?}"))),
    }
}

fn no_property(entity: &str, property: &str) -> PathError {
    PathError::NoProperty {
        entity: entity.to_string(),
        property: property.to_string(),
    }
}

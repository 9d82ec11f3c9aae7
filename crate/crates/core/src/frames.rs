//! Frame-semantics definitions bound onto executable mechanism templates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanism::{Action, EffectStep, Guard, Mechanism, PathFlow, PathLeg};
use crate::world::World;

pub const FLUIDIC_MOTION: &str = "Fluidic_Motion";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame `{0}` is already defined")]
    DuplicateFrame(String),
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("frame `{frame}` lists `{element}` as both core and non-core")]
    Overlap { frame: String, element: String },
    #[error("frame `{0}` has no core elements")]
    EmptyCore(String),
    #[error("missing core element `{0}`")]
    MissingCoreElement(String),
    #[error("frame `{frame}` has no element `{element}`")]
    UnknownElement { frame: String, element: String },
    #[error("element `{element}` names `{entity}`, which does not exist")]
    UnresolvedEntity { element: String, entity: String },
    #[error("binding is for `{0}`, expected Fluidic_Motion")]
    WrongFrame(String),
    #[error("element `{element}` must be {expected}")]
    WrongElementType { element: String, expected: String },
    #[error("neither a coordinate path nor a compartment route is bound")]
    NoPathMode,
    #[error("bad path: {0}")]
    BadPath(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub name: String,
    /// Taxonomic parent; elements are not inherited.
    #[serde(default)]
    pub parent: Option<String>,
    pub core: Vec<String>,
    #[serde(default)]
    pub non_core: Vec<String>,
    #[serde(default)]
    pub definition: String,
}

impl Frame {
    pub fn new(name: &str, core: &[&str], non_core: &[&str], definition: &str) -> Self {
        Frame {
            name: name.to_string(),
            parent: None,
            core: core.iter().map(|s| s.to_string()).collect(),
            non_core: non_core.iter().map(|s| s.to_string()).collect(),
            definition: definition.to_string(),
        }
    }

    pub fn with_parent(mut self, parent: &str) -> Self {
        self.parent = Some(parent.to_string());
        self
    }

    fn check(&self) -> Result<(), FrameError> {
        if self.core.is_empty() {
            return Err(FrameError::EmptyCore(self.name.clone()));
        }
        if let Some(e) = self.core.iter().find(|e| self.non_core.contains(e)) {
            return Err(FrameError::Overlap {
                frame: self.name.clone(),
                element: e.clone(),
            });
        }
        Ok(())
    }

    pub fn has_element(&self, element: &str) -> bool {
        self.core.iter().chain(&self.non_core).any(|e| e == element)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexicalEntry {
    pub word: String,
    pub frame: String,
    #[serde(default)]
    pub definition: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slope {
    pub rise: i64,
    pub run: i64,
}

/// One straight stretch. Each unit of length advances `run` in X and `rise`
/// in Y.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    pub length: u32,
    pub width: u32,
    pub slope: Slope,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSpec {
    pub segments: Vec<Segment>,
}

impl PathSpec {
    pub fn check(&self) -> Result<(), FrameError> {
        if self.segments.is_empty() {
            return Err(FrameError::BadPath("no segments".into()));
        }
        if let Some(s) = self.segments.iter().find(|s| s.length == 0) {
            return Err(FrameError::BadPath(format!(
                "segment `{}` has zero length",
                s.label
            )));
        }
        Ok(())
    }

    /// Total (X, Y) displacement from the start to the end of the path.
    pub fn displacement(&self) -> (i64, i64) {
        self.segments.iter().fold((0, 0), |(x, y), s| {
            let n = i64::from(s.length);
            (x + n * s.slope.run, y + n * s.slope.rise)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementValue {
    /// A named object, substance, compartment, circuit or kind.
    Entity(String),
    /// A bare state label.
    Label(String),
    Path(PathSpec),
    /// Free parameters; stored and reported, not interpreted.
    Params(BTreeMap<String, String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameBinding {
    pub frame: String,
    pub elements: BTreeMap<String, ElementValue>,
    #[serde(default)]
    pub produced_mechanism: Option<String>,
}

impl FrameBinding {
    pub fn element(&self, name: &str) -> Option<&ElementValue> {
        self.elements.get(name)
    }
}

/// Options for turning a Fluidic_Motion binding into a mechanism.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowOptions {
    pub mechanism: String,
    pub subsystem: String,
    pub location_variable: String,
    /// Portions to birth before the flow stops; `None` for no limit.
    pub limit: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRegistry {
    #[serde(default)]
    pub frames: BTreeMap<String, Frame>,
    #[serde(default)]
    pub lexicon: Vec<LexicalEntry>,
    #[serde(default)]
    pub bindings: Vec<FrameBinding>,
}

impl FrameRegistry {
    pub fn new() -> Self {
        FrameRegistry::default()
    }

    /// Motion, Fluidic_Motion and Natural_Features with a few lexical
    /// entries.
    pub fn standard() -> Self {
        let mut r = FrameRegistry::new();
        let frames = [
            Frame::new(
                "Motion",
                &["Theme"],
                &["Source", "Goal", "Path", "Manner"],
                "Something changes location.",
            ),
            Frame::new(
                FLUIDIC_MOTION,
                &["Fluid", "Source", "Goal", "Path"],
                &["Configuration"],
                "A liquid or gas travels between locations along a route.",
            )
            .with_parent("Motion"),
            Frame::new(
                "Natural_Features",
                &["Locale"],
                &["Constituent_parts", "Name"],
                "A landform or body of water at a geographic place.",
            ),
        ];
        for f in frames {
            r.define_frame(f).expect("standard frames are well formed");
        }
        for (word, frame, text) in [
            ("flow", FLUIDIC_MOTION, "move steadily as a stream"),
            ("flowing", FLUIDIC_MOTION, "moving steadily as a stream"),
            ("waterfall", "Natural_Features", "water dropping over a steep edge"),
        ] {
            r.lexicon.push(LexicalEntry {
                word: word.to_string(),
                frame: frame.to_string(),
                definition: text.to_string(),
            });
        }
        r
    }

    pub fn define_frame(&mut self, frame: Frame) -> Result<&Frame, FrameError> {
        if self.frames.contains_key(&frame.name) {
            return Err(FrameError::DuplicateFrame(frame.name));
        }
        frame.check()?;
        let name = frame.name.clone();
        self.frames.insert(name.clone(), frame);
        Ok(&self.frames[&name])
    }

    pub fn frame(&self, name: &str) -> Result<&Frame, FrameError> {
        self.frames
            .get(name)
            .ok_or_else(|| FrameError::UnknownFrame(name.to_string()))
    }

    pub fn lookup(&self, word: &str) -> Option<&LexicalEntry> {
        self.lexicon.iter().find(|e| e.word == word)
    }

    /// Checks a binding and records it.
    pub fn bind(
        &mut self,
        frame: &str,
        elements: BTreeMap<String, ElementValue>,
        world: &World,
    ) -> Result<usize, FrameError> {
        let binding = FrameBinding {
            frame: frame.to_string(),
            elements,
            produced_mechanism: None,
        };
        self.check_binding(&binding, world)?;
        self.bindings.push(binding);
        Ok(self.bindings.len() - 1)
    }

    pub fn check_binding(&self, binding: &FrameBinding, world: &World) -> Result<(), FrameError> {
        let frame = self.frame(&binding.frame)?;
        for core in &frame.core {
            if !binding.elements.contains_key(core) {
                return Err(FrameError::MissingCoreElement(core.clone()));
            }
        }
        for (name, value) in &binding.elements {
            if !frame.has_element(name) {
                return Err(FrameError::UnknownElement {
                    frame: frame.name.clone(),
                    element: name.clone(),
                });
            }
            match value {
                ElementValue::Entity(e) if !entity_exists(world, e) => {
                    return Err(FrameError::UnresolvedEntity {
                        element: name.clone(),
                        entity: e.clone(),
                    })
                }
                ElementValue::Path(p) => p.check()?,
                _ => {}
            }
        }
        Ok(())
    }

    /// Builds a mechanism from a recorded binding and notes its name on the
    /// binding.
    pub fn instantiate_fluidic_motion(
        &mut self,
        binding: usize,
        world: &World,
        options: &FlowOptions,
    ) -> Result<Mechanism, FrameError> {
        let b = self
            .bindings
            .get(binding)
            .ok_or_else(|| FrameError::UnknownFrame(format!("binding #{binding}")))?;
        let mechanism = fluidic_motion(b, world, options)?;
        self.bindings[binding].produced_mechanism = Some(mechanism.name.clone());
        Ok(mechanism)
    }
}

fn entity_exists(world: &World, name: &str) -> bool {
    world.resolve_name(name).is_some()
        || world.topology.compartments.contains_key(name)
        || world.topology.circuits.contains_key(name)
        || world.kinds.contains_key(name)
}

fn entity_or_label<'a>(binding: &'a FrameBinding, element: &str) -> Result<&'a str, FrameError> {
    match binding.element(element) {
        Some(ElementValue::Entity(s)) | Some(ElementValue::Label(s)) => Ok(s),
        Some(_) => Err(FrameError::WrongElementType {
            element: element.to_string(),
            expected: "an entity or label".into(),
        }),
        None => Err(FrameError::MissingCoreElement(element.to_string())),
    }
}

/// The mechanism template behind Fluidic_Motion.
///
/// A coordinate `Path` yields a mechanism that moves one portion one unit per
/// firing, birthing a new portion when none is in transit. A `Path` naming a
/// circuit yields a pulse over that circuit. Both guards require the fluid
/// to be liquid or gas.
pub fn fluidic_motion(
    binding: &FrameBinding,
    world: &World,
    options: &FlowOptions,
) -> Result<Mechanism, FrameError> {
    if binding.frame != FLUIDIC_MOTION {
        return Err(FrameError::WrongFrame(binding.frame.clone()));
    }
    let fluid = match binding.element("Fluid") {
        Some(ElementValue::Entity(s)) if world.substances.contains_key(s) => s.clone(),
        Some(_) => {
            return Err(FrameError::WrongElementType {
                element: "Fluid".into(),
                expected: "a substance".into(),
            })
        }
        None => return Err(FrameError::MissingCoreElement("Fluid".into())),
    };
    let fluid_guard = Guard::fluid(&fluid);
    match binding.element("Path") {
        Some(ElementValue::Path(path)) => {
            path.check()?;
            let goal = entity_or_label(binding, "Goal")?.to_string();
            let kind = world
                .kinds
                .values()
                .find(|k| k.substance.as_deref() == Some(fluid.as_str()))
                .ok_or_else(|| {
                    FrameError::BadPath(format!("no portion kind for substance `{fluid}`"))
                })?
                .name
                .clone();
            let space = world
                .effective_state_spaces(&kind)
                .map_err(|e| FrameError::BadPath(e.to_string()))?
                .into_iter()
                .find(|s| s.variable == options.location_variable)
                .ok_or_else(|| {
                    FrameError::BadPath(format!(
                        "kind `{kind}` has no `{}` state",
                        options.location_variable
                    ))
                })?;
            for label in path.segments.iter().map(|s| &s.label).chain([&goal]) {
                if !space.contains(label) {
                    return Err(FrameError::BadPath(format!(
                        "`{label}` is not a {} label",
                        options.location_variable
                    )));
                }
            }
            let legs = path
                .segments
                .iter()
                .map(|s| PathLeg {
                    label: s.label.clone(),
                    units: s.length,
                    dx: s.slope.run,
                    dy: s.slope.rise,
                })
                .collect();
            let more = match options.limit {
                Some(limit) => Guard::Any(vec![
                    Guard::InTransit {
                        kind: kind.clone(),
                        variable: options.location_variable.clone(),
                        goal: goal.clone(),
                    },
                    Guard::BirthsBelow {
                        kind: kind.clone(),
                        limit,
                    },
                ]),
                None => Guard::Always,
            };
            Ok(Mechanism {
                name: options.mechanism.clone(),
                subsystem: options.subsystem.clone(),
                guard: Guard::all([fluid_guard, more]),
                effect: vec![EffectStep::main(Action::FlowAlongPath(PathFlow {
                    portion_kind: kind,
                    location_variable: options.location_variable.clone(),
                    legs,
                    arrival_trace: format!("{{index}} {goal}"),
                    goal,
                    limit: options.limit,
                }))],
            })
        }
        Some(ElementValue::Entity(circuit)) if world.topology.circuits.contains_key(circuit) => {
            let route = &world.topology.circuits[circuit];
            let on_route = |c: &str| {
                route
                    .hops
                    .iter()
                    .any(|h| h.from == c || h.to.iter().any(|t| t == c))
            };
            for element in ["Source", "Goal"] {
                let c = entity_or_label(binding, element)?;
                if !on_route(c) {
                    return Err(FrameError::BadPath(format!(
                        "{element} `{c}` is not on circuit `{circuit}`"
                    )));
                }
            }
            Ok(Mechanism {
                name: options.mechanism.clone(),
                subsystem: options.subsystem.clone(),
                guard: fluid_guard,
                effect: vec![EffectStep::main(Action::RingPush {
                    circuit: circuit.clone(),
                })],
            })
        }
        _ => Err(FrameError::NoPathMode),
    }
}

//! Semantic entity vocabulary: kinds, objects, substances, portions and the
//! transitionals that change them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntityError {
    #[error("kind `{0}` is already defined")]
    DuplicateKind(String),
    #[error("unknown kind `{0}`")]
    UnknownKind(String),
    #[error("cyclic inheritance through kind `{0}`")]
    CyclicInheritance(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown scale `{0}`")]
    UnknownScale(String),
    #[error("unknown substance `{0}`")]
    UnknownSubstance(String),
    #[error("entity `{entity}` has no state variable `{variable}`")]
    UndeclaredVariable { entity: String, variable: String },
    #[error("label `{label}` is outside the state space of `{variable}`")]
    LabelOutsideSpace { variable: String, label: String },
    #[error("state space `{0}` is malformed: {1}")]
    MalformedStateSpace(String, String),
    #[error("{0:?} scales are not supported; use nominal, binary or ordinal")]
    UnsupportedScale(ScaleKind),
    #[error("part `{0}` has an empty cardinality set")]
    EmptyCardinality(String),
    #[error("entity `{0}` is no longer alive")]
    DeadSubject(String),
    #[error("split needs at least two results, got {0}")]
    SplitTooSmall(usize),
    #[error("merge needs at least two subjects, got {0}")]
    MergeTooSmall(usize),
    #[error("merge subjects belong to different substances")]
    MixedSubstances,
    #[error("`{0}` is not a portion; only portions split and merge")]
    NotAPortion(String),
    #[error("object id `{0}` is already in use")]
    DuplicateObject(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    Nominal,
    Binary,
    Ordinal,
    Interval,
    Ratio,
}

/// A named variable together with the labels it may take.
///
/// For ordinal scales the label order is significant: earlier labels rank
/// lower.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    pub variable: String,
    pub labels: Vec<String>,
    pub scale_kind: ScaleKind,
}

impl StateSpace {
    pub fn new<S: Into<String>>(
        variable: impl Into<String>,
        labels: impl IntoIterator<Item = S>,
        scale_kind: ScaleKind,
    ) -> Result<Self, EntityError> {
        let space = StateSpace {
            variable: variable.into(),
            labels: labels.into_iter().map(Into::into).collect(),
            scale_kind,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), EntityError> {
        match self.scale_kind {
            ScaleKind::Interval | ScaleKind::Ratio => {
                return Err(EntityError::UnsupportedScale(self.scale_kind))
            }
            ScaleKind::Binary if self.labels.len() != 2 => {
                return Err(EntityError::MalformedStateSpace(
                    self.variable.clone(),
                    format!("binary scale needs exactly 2 labels, has {}", self.labels.len()),
                ))
            }
            _ => {}
        }
        if self.labels.is_empty() {
            return Err(EntityError::MalformedStateSpace(
                self.variable.clone(),
                "no labels".into(),
            ));
        }
        let distinct: BTreeSet<_> = self.labels.iter().collect();
        if distinct.len() != self.labels.len() {
            return Err(EntityError::MalformedStateSpace(
                self.variable.clone(),
                "labels are not distinct".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn rank(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn initial(&self) -> &str {
        &self.labels[0]
    }

    pub fn is_ordered(&self) -> bool {
        matches!(self.scale_kind, ScaleKind::Binary | ScaleKind::Ordinal)
    }
}

/// A label on a named scale.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QualValue {
    pub scale: String,
    pub level: String,
}

impl QualValue {
    pub fn new(scale: impl Into<String>, level: impl Into<String>) -> Self {
        QualValue {
            scale: scale.into(),
            level: level.into(),
        }
    }
}

impl fmt::Display for QualValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.level)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cardinality {
    Exact(u32),
    AnyOf(BTreeSet<u32>),
}

impl Cardinality {
    pub fn allows(&self, count: u32) -> bool {
        match self {
            Cardinality::Exact(n) => *n == count,
            Cardinality::AnyOf(set) => set.contains(&count),
        }
    }

    pub fn minimum(&self) -> Option<u32> {
        match self {
            Cardinality::Exact(n) => Some(*n),
            Cardinality::AnyOf(set) => set.iter().next().copied(),
        }
    }
}

impl fmt::Display for Cardinality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cardinality::Exact(n) => write!(f, "{n}"),
            Cardinality::AnyOf(set) => {
                let items: Vec<String> = set.iter().map(u32::to_string).collect();
                write!(f, "{{{}}}", items.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartRole {
    Functional,
    Structural,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartSpec {
    pub role: String,
    pub kind: String,
    pub part_role: PartRole,
    pub cardinality: Cardinality,
}

impl PartSpec {
    pub fn new(role: &str, kind: &str, part_role: PartRole, cardinality: Cardinality) -> Self {
        PartSpec {
            role: role.to_string(),
            kind: kind.to_string(),
            part_role,
            cardinality,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Molecular,
    Cellular,
    Tissue,
    Organ,
    System,
    Organism,
    Landscape,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindDef {
    pub name: String,
    #[serde(default)]
    pub parent: Option<String>,
    #[serde(default)]
    pub state_spaces: Vec<StateSpace>,
    #[serde(default)]
    pub part_schema: Vec<PartSpec>,
    pub granularity: Granularity,
    /// Set for portion kinds: instances are portions of this substance.
    #[serde(default)]
    pub substance: Option<String>,
}

impl KindDef {
    pub fn new(name: &str, granularity: Granularity) -> Self {
        KindDef {
            name: name.to_string(),
            parent: None,
            state_spaces: Vec::new(),
            part_schema: Vec::new(),
            granularity,
            substance: None,
        }
    }

    pub fn with_parent(mut self, parent: &str) -> Self {
        self.parent = Some(parent.to_string());
        self
    }

    pub fn with_state(mut self, space: StateSpace) -> Self {
        self.state_spaces.push(space);
        self
    }

    pub fn with_part(mut self, part: PartSpec) -> Self {
        self.part_schema.push(part);
        self
    }

    pub fn portion_of(mut self, substance: &str) -> Self {
        self.substance = Some(substance.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub String);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        ObjectId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortionId(pub u32);

impl fmt::Display for PortionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartLink {
    pub role: String,
    pub child: ObjectId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemObject {
    pub id: ObjectId,
    pub kind: String,
    #[serde(default)]
    pub parts: Vec<PartLink>,
    #[serde(default)]
    pub states: BTreeMap<String, String>,
    #[serde(default)]
    pub properties: BTreeMap<String, QualValue>,
    pub alive: bool,
}

impl SemObject {
    pub fn part_count(&self, role: &str) -> u32 {
        self.parts.iter().filter(|p| p.role == role).count() as u32
    }
}

/// How two values of one property combine when portions merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixRule {
    Min,
    Max,
    First,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substance {
    pub name: String,
    pub phase_space: StateSpace,
    pub phase: String,
    #[serde(default)]
    pub default_properties: BTreeMap<String, QualValue>,
    #[serde(default)]
    pub mixing: BTreeMap<String, MixRule>,
}

pub const PHASE_VARIABLE: &str = "phase";

impl Substance {
    pub fn new(name: &str, phase: &str) -> Self {
        Substance {
            name: name.to_string(),
            phase_space: StateSpace {
                variable: PHASE_VARIABLE.to_string(),
                labels: vec!["solid".into(), "liquid".into(), "gas".into()],
                scale_kind: ScaleKind::Nominal,
            },
            phase: phase.to_string(),
            default_properties: BTreeMap::new(),
            mixing: BTreeMap::new(),
        }
    }

    pub fn with_property(mut self, name: &str, value: QualValue, mix: MixRule) -> Self {
        self.default_properties.insert(name.to_string(), value);
        self.mixing.insert(name.to_string(), mix);
        self
    }

    pub fn is_fluid(&self) -> bool {
        self.phase == "liquid" || self.phase == "gas"
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coords {
    pub x: i64,
    pub y: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Portion {
    pub id: PortionId,
    pub substance: String,
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub properties: BTreeMap<String, QualValue>,
    #[serde(default)]
    pub states: BTreeMap<String, String>,
    #[serde(default)]
    pub compartment: Option<String>,
    #[serde(default)]
    pub coords: Option<Coords>,
    /// Units already travelled along a coordinate path.
    #[serde(default)]
    pub progress: u32,
    /// Ordinal among portions born of the same kind; `None` for portions
    /// present in the initial world or produced by split/merge.
    #[serde(default)]
    pub birth_index: Option<u32>,
    #[serde(default)]
    pub provenance: Vec<PortionId>,
    /// Compartments this portion left during the current step.
    #[serde(default)]
    pub arrived_from: Vec<String>,
    pub alive: bool,
}

impl Portion {
    pub fn property(&self, name: &str) -> Option<&str> {
        self.properties.get(name).map(|v| v.level.as_str())
    }
}

/// Any addressable entity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityRef {
    Object(ObjectId),
    Portion(PortionId),
    Substance(String),
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityRef::Object(id) => write!(f, "{id}"),
            EntityRef::Portion(id) => write!(f, "{id}"),
            EntityRef::Substance(name) => f.write_str(name),
        }
    }
}

impl From<PortionId> for EntityRef {
    fn from(id: PortionId) -> Self {
        EntityRef::Portion(id)
    }
}

impl From<ObjectId> for EntityRef {
    fn from(id: ObjectId) -> Self {
        EntityRef::Object(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionalKind {
    StateChange,
    Birth,
    Death,
    Split,
    Merge,
}

/// A record of one applied transformation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transitional {
    pub kind: TransitionalKind,
    pub subjects: Vec<EntityRef>,
    pub results: Vec<EntityRef>,
    #[serde(default)]
    pub note: String,
    pub step: u64,
}

/// A requested transformation, before it is applied to a world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransitionalOp {
    StateChange {
        subject: EntityRef,
        variable: String,
        label: String,
    },
    Birth {
        kind: String,
    },
    Death {
        subject: EntityRef,
    },
    Split {
        subject: PortionId,
        fan_out: usize,
    },
    Merge {
        subjects: Vec<PortionId>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardinalityViolation {
    pub role: String,
    pub count: u32,
    pub allowed: Cardinality,
}

impl fmt::Display for CardinalityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "part `{}` has {} instances, allowed {}",
            self.role, self.count, self.allowed
        )
    }
}

/// What a function assertion is relative to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionContext {
    Mechanism(String),
    System(String),
    Scenario(String),
}

impl fmt::Display for FunctionContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionContext::Mechanism(n) => write!(f, "mechanism {n}"),
            FunctionContext::System(n) => write!(f, "system {n}"),
            FunctionContext::Scenario(n) => write!(f, "scenario {n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionAssertion {
    pub subject: EntityRef,
    pub function_label: String,
    pub context: FunctionContext,
}

//! The mutable simulation state and the entity operations over it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::entity::{
    CardinalityViolation, EntityError, EntityRef, KindDef, MixRule, ObjectId, PartLink, Portion,
    PortionId, QualValue, SemObject, StateSpace, Substance, Transitional, TransitionalKind,
    TransitionalOp, Coords,
};
use crate::models::microworld::Microworld;
use crate::topology::Topology;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct World {
    #[serde(default)]
    pub scales: BTreeMap<String, StateSpace>,
    #[serde(default)]
    pub kinds: BTreeMap<String, KindDef>,
    #[serde(default)]
    pub substances: BTreeMap<String, Substance>,
    #[serde(default)]
    pub objects: BTreeMap<ObjectId, SemObject>,
    #[serde(default)]
    pub portions: BTreeMap<PortionId, Portion>,
    #[serde(default)]
    pub topology: Topology,
    #[serde(default)]
    pub microworld: Microworld,
    #[serde(default)]
    pub transitionals: Vec<Transitional>,
    #[serde(default)]
    pub step: u64,
    #[serde(default)]
    next_portion: u32,
    #[serde(default)]
    births: BTreeMap<String, u32>,
}

impl World {
    pub fn new() -> Self {
        World::default()
    }

    pub fn define_scale(&mut self, space: StateSpace) -> Result<(), EntityError> {
        space.validate()?;
        self.scales.insert(space.variable.clone(), space);
        Ok(())
    }

    pub fn add_substance(&mut self, substance: Substance) -> Result<(), EntityError> {
        substance.phase_space.validate()?;
        if !substance.phase_space.contains(&substance.phase) {
            return Err(EntityError::LabelOutsideSpace {
                variable: substance.phase_space.variable.clone(),
                label: substance.phase.clone(),
            });
        }
        for value in substance.default_properties.values() {
            self.check_qual(value)?;
        }
        self.substances.insert(substance.name.clone(), substance);
        Ok(())
    }

    pub fn check_qual(&self, value: &QualValue) -> Result<(), EntityError> {
        let scale = self
            .scales
            .get(&value.scale)
            .ok_or_else(|| EntityError::UnknownScale(value.scale.clone()))?;
        if !scale.contains(&value.level) {
            return Err(EntityError::LabelOutsideSpace {
                variable: value.scale.clone(),
                label: value.level.clone(),
            });
        }
        Ok(())
    }

    // ---- kinds ----

    pub fn define_kind(&mut self, kind: KindDef) -> Result<&KindDef, EntityError> {
        if self.kinds.contains_key(&kind.name) {
            return Err(EntityError::DuplicateKind(kind.name));
        }
        if let Some(parent) = &kind.parent {
            if parent == &kind.name {
                return Err(EntityError::CyclicInheritance(kind.name));
            }
            if !self.kinds.contains_key(parent) {
                return Err(EntityError::UnknownKind(parent.clone()));
            }
        }
        self.check_kind_body(&kind)?;
        let name = kind.name.clone();
        self.kinds.insert(name.clone(), kind);
        Ok(&self.kinds[&name])
    }

    fn check_kind_body(&self, kind: &KindDef) -> Result<(), EntityError> {
        for space in &kind.state_spaces {
            space.validate()?;
        }
        for part in &kind.part_schema {
            if part.cardinality.minimum().is_none() {
                return Err(EntityError::EmptyCardinality(part.role.clone()));
            }
        }
        if let Some(s) = &kind.substance {
            if !self.substances.contains_key(s) {
                return Err(EntityError::UnknownSubstance(s.clone()));
            }
        }
        Ok(())
    }

    /// Checks every kind's parent chain, part kinds and body. Used after bulk
    /// loading, where kinds may arrive in any order.
    pub fn check_kinds(&self) -> Result<(), EntityError> {
        for kind in self.kinds.values() {
            self.ancestry(&kind.name)?;
            self.check_kind_body(kind)?;
            for part in &kind.part_schema {
                if !self.kinds.contains_key(&part.kind) {
                    return Err(EntityError::UnknownKind(part.kind.clone()));
                }
            }
        }
        Ok(())
    }

    /// The kind followed by its ancestors, nearest first.
    pub fn ancestry(&self, name: &str) -> Result<Vec<&KindDef>, EntityError> {
        let mut chain = Vec::new();
        let mut seen = BTreeSet::new();
        let mut cursor = Some(name.to_string());
        while let Some(current) = cursor {
            if !seen.insert(current.clone()) {
                return Err(EntityError::CyclicInheritance(current));
            }
            let kind = self
                .kinds
                .get(&current)
                .ok_or_else(|| EntityError::UnknownKind(current.clone()))?;
            chain.push(kind);
            cursor = kind.parent.clone();
        }
        Ok(chain)
    }

    pub fn effective_state_spaces(&self, kind: &str) -> Result<Vec<StateSpace>, EntityError> {
        let mut spaces: Vec<StateSpace> = Vec::new();
        for k in self.ancestry(kind)?.into_iter().rev() {
            for space in &k.state_spaces {
                match spaces.iter_mut().find(|s| s.variable == space.variable) {
                    Some(slot) => *slot = space.clone(),
                    None => spaces.push(space.clone()),
                }
            }
        }
        Ok(spaces)
    }

    pub fn effective_part_schema(
        &self,
        kind: &str,
    ) -> Result<Vec<crate::entity::PartSpec>, EntityError> {
        let mut parts: Vec<crate::entity::PartSpec> = Vec::new();
        for k in self.ancestry(kind)?.into_iter().rev() {
            for part in &k.part_schema {
                match parts.iter_mut().find(|p| p.role == part.role) {
                    Some(slot) => *slot = part.clone(),
                    None => parts.push(part.clone()),
                }
            }
        }
        Ok(parts)
    }

    /// Portion kind's substance, searching ancestors.
    pub fn kind_substance(&self, kind: &str) -> Result<Option<String>, EntityError> {
        Ok(self
            .ancestry(kind)?
            .into_iter()
            .find_map(|k| k.substance.clone()))
    }

    // ---- instances ----

    /// Creates an instance with generated id. Portion kinds yield a portion at
    /// the coordinate origin; other kinds yield an object with parts at their
    /// minimum cardinality.
    pub fn instantiate(&mut self, kind: &str) -> Result<EntityRef, EntityError> {
        if self.kind_substance(kind)?.is_some() {
            return self.spawn_portion(kind).map(EntityRef::Portion);
        }
        let id = self.fresh_object_id(kind);
        self.instantiate_object(kind, id).map(EntityRef::Object)
    }

    fn fresh_object_id(&self, base: &str) -> ObjectId {
        (1..)
            .map(|n| ObjectId(format!("{base}-{n}")))
            .find(|id| !self.objects.contains_key(id))
            .expect("unbounded id space")
    }

    pub fn instantiate_object(
        &mut self,
        kind: &str,
        id: ObjectId,
    ) -> Result<ObjectId, EntityError> {
        if self.objects.contains_key(&id) {
            return Err(EntityError::DuplicateObject(id.0));
        }
        let spaces = self.effective_state_spaces(kind)?;
        let schema = self.effective_part_schema(kind)?;
        let states = spaces
            .iter()
            .map(|s| (s.variable.clone(), s.initial().to_string()))
            .collect();
        self.objects.insert(
            id.clone(),
            SemObject {
                id: id.clone(),
                kind: kind.to_string(),
                parts: Vec::new(),
                states,
                properties: BTreeMap::new(),
                alive: true,
            },
        );
        for part in schema {
            let count = part
                .cardinality
                .minimum()
                .ok_or_else(|| EntityError::EmptyCardinality(part.role.clone()))?;
            for i in 0..count {
                let child_id = ObjectId(format!("{}.{}[{}]", id.0, part.role, i));
                let child = self.instantiate_object(&part.kind, child_id)?;
                self.objects
                    .get_mut(&id)
                    .expect("just inserted")
                    .parts
                    .push(PartLink {
                        role: part.role.clone(),
                        child,
                    });
            }
        }
        Ok(id)
    }

    /// Births a new portion of a portion kind at the origin, recording a
    /// birth transitional.
    pub fn spawn_portion(&mut self, kind: &str) -> Result<PortionId, EntityError> {
        let substance = self
            .kind_substance(kind)?
            .ok_or_else(|| EntityError::UnknownSubstance(format!("(none for kind {kind})")))?;
        let defaults = self
            .substances
            .get(&substance)
            .ok_or_else(|| EntityError::UnknownSubstance(substance.clone()))?
            .default_properties
            .clone();
        let states = self
            .effective_state_spaces(kind)?
            .iter()
            .map(|s| (s.variable.clone(), s.initial().to_string()))
            .collect();
        let index = self.births.entry(kind.to_string()).or_insert(0);
        let birth_index = *index;
        *index += 1;
        let id = self.alloc_portion_id();
        self.portions.insert(
            id,
            Portion {
                id,
                substance,
                kind: Some(kind.to_string()),
                properties: defaults,
                states,
                compartment: None,
                coords: Some(Coords { x: 0, y: 0 }),
                progress: 0,
                birth_index: Some(birth_index),
                provenance: Vec::new(),
                arrived_from: Vec::new(),
                alive: true,
            },
        );
        self.record(TransitionalKind::Birth, vec![], vec![id.into()], kind.to_string());
        Ok(id)
    }

    /// Places a new portion of `substance` into the initial world without a
    /// birth record (initial conditions, not a transformation).
    pub fn seed_portion(
        &mut self,
        substance: &str,
        kind: Option<&str>,
        properties: BTreeMap<String, QualValue>,
    ) -> Result<PortionId, EntityError> {
        let sub = self
            .substances
            .get(substance)
            .ok_or_else(|| EntityError::UnknownSubstance(substance.to_string()))?;
        let mut props = sub.default_properties.clone();
        for (k, v) in properties {
            self.check_qual(&v)?;
            props.insert(k, v);
        }
        let states = match kind {
            Some(k) => self
                .effective_state_spaces(k)?
                .iter()
                .map(|s| (s.variable.clone(), s.initial().to_string()))
                .collect(),
            None => BTreeMap::new(),
        };
        let id = self.alloc_portion_id();
        self.portions.insert(
            id,
            Portion {
                id,
                substance: substance.to_string(),
                kind: kind.map(str::to_string),
                properties: props,
                states,
                compartment: None,
                coords: None,
                progress: 0,
                birth_index: None,
                provenance: Vec::new(),
                arrived_from: Vec::new(),
                alive: true,
            },
        );
        Ok(id)
    }

    fn alloc_portion_id(&mut self) -> PortionId {
        let floor = self.portions.keys().next_back().map_or(0, |p| p.0 + 1);
        self.next_portion = self.next_portion.max(floor);
        let id = PortionId(self.next_portion);
        self.next_portion += 1;
        id
    }

    /// Resets the id counter after portions were inserted directly.
    pub(crate) fn sync_portion_ids(&mut self) {
        self.next_portion = self.portions.keys().next_back().map_or(0, |p| p.0 + 1);
    }

    /// Portions born so far, per kind.
    pub fn birth_counts(&self) -> &BTreeMap<String, u32> {
        &self.births
    }

    pub fn set_birth_counts(&mut self, births: BTreeMap<String, u32>) {
        self.births = births;
    }

    pub fn births_of(&self, kind: &str) -> u32 {
        self.births.get(kind).copied().unwrap_or(0)
    }

    pub fn portion(&self, id: PortionId) -> Result<&Portion, EntityError> {
        self.portions
            .get(&id)
            .ok_or_else(|| EntityError::UnknownEntity(id.to_string()))
    }

    pub fn portion_mut(&mut self, id: PortionId) -> Result<&mut Portion, EntityError> {
        self.portions
            .get_mut(&id)
            .ok_or_else(|| EntityError::UnknownEntity(id.to_string()))
    }

    pub fn live_portions(&self) -> impl Iterator<Item = &Portion> {
        self.portions.values().filter(|p| p.alive)
    }

    pub fn exists(&self, entity: &EntityRef) -> bool {
        match entity {
            EntityRef::Object(id) => self.objects.contains_key(id),
            EntityRef::Portion(id) => self.portions.contains_key(id),
            EntityRef::Substance(name) => self.substances.contains_key(name),
        }
    }

    pub fn is_alive(&self, entity: &EntityRef) -> Result<bool, EntityError> {
        match entity {
            EntityRef::Object(id) => self
                .objects
                .get(id)
                .map(|o| o.alive)
                .ok_or_else(|| EntityError::UnknownEntity(id.0.clone())),
            EntityRef::Portion(id) => Ok(self.portion(*id)?.alive),
            EntityRef::Substance(name) => {
                if self.substances.contains_key(name) {
                    Ok(true)
                } else {
                    Err(EntityError::UnknownEntity(name.clone()))
                }
            }
        }
    }

    /// Resolves a bare name to an entity: object id, then substance.
    pub fn resolve_name(&self, name: &str) -> Option<EntityRef> {
        let oid = ObjectId(name.to_string());
        if self.objects.contains_key(&oid) {
            return Some(EntityRef::Object(oid));
        }
        if self.substances.contains_key(name) {
            return Some(EntityRef::Substance(name.to_string()));
        }
        if let Some(rest) = name.strip_prefix('p') {
            if let Ok(n) = rest.parse() {
                if self.portions.contains_key(&PortionId(n)) {
                    return Some(EntityRef::Portion(PortionId(n)));
                }
            }
        }
        None
    }

    /// State space for a variable on an entity.
    pub fn state_space_of(
        &self,
        entity: &EntityRef,
        variable: &str,
    ) -> Result<StateSpace, EntityError> {
        let undeclared = || EntityError::UndeclaredVariable {
            entity: entity.to_string(),
            variable: variable.to_string(),
        };
        match entity {
            EntityRef::Substance(name) => {
                let s = self
                    .substances
                    .get(name)
                    .ok_or_else(|| EntityError::UnknownEntity(name.clone()))?;
                if s.phase_space.variable == variable {
                    Ok(s.phase_space.clone())
                } else {
                    Err(undeclared())
                }
            }
            EntityRef::Object(id) => {
                let obj = self
                    .objects
                    .get(id)
                    .ok_or_else(|| EntityError::UnknownEntity(id.0.clone()))?;
                self.effective_state_spaces(&obj.kind)?
                    .into_iter()
                    .find(|s| s.variable == variable)
                    .ok_or_else(undeclared)
            }
            EntityRef::Portion(id) => {
                let p = self.portion(*id)?;
                let kind = p.kind.as_deref().ok_or_else(undeclared)?;
                self.effective_state_spaces(kind)?
                    .into_iter()
                    .find(|s| s.variable == variable)
                    .ok_or_else(undeclared)
            }
        }
    }

    pub fn state_of(&self, entity: &EntityRef, variable: &str) -> Option<&str> {
        match entity {
            EntityRef::Substance(name) => self
                .substances
                .get(name)
                .filter(|s| s.phase_space.variable == variable)
                .map(|s| s.phase.as_str()),
            EntityRef::Object(id) => self
                .objects
                .get(id)
                .and_then(|o| o.states.get(variable))
                .map(String::as_str),
            EntityRef::Portion(id) => self
                .portions
                .get(id)
                .and_then(|p| p.states.get(variable))
                .map(String::as_str),
        }
    }

    pub fn set_state(
        &mut self,
        entity: &EntityRef,
        variable: &str,
        label: &str,
    ) -> Result<Transitional, EntityError> {
        if !self.is_alive(entity)? {
            return Err(EntityError::DeadSubject(entity.to_string()));
        }
        let space = self.state_space_of(entity, variable)?;
        if !space.contains(label) {
            return Err(EntityError::LabelOutsideSpace {
                variable: variable.to_string(),
                label: label.to_string(),
            });
        }
        match entity {
            EntityRef::Substance(name) => {
                self.substances.get_mut(name).expect("checked").phase = label.to_string();
            }
            EntityRef::Object(id) => {
                self.objects
                    .get_mut(id)
                    .expect("checked")
                    .states
                    .insert(variable.to_string(), label.to_string());
            }
            EntityRef::Portion(id) => {
                self.portion_mut(*id)?
                    .states
                    .insert(variable.to_string(), label.to_string());
            }
        }
        Ok(self.record(
            TransitionalKind::StateChange,
            vec![entity.clone()],
            vec![entity.clone()],
            format!("{variable}={label}"),
        ))
    }

    pub fn set_portion_property(
        &mut self,
        id: PortionId,
        property: &str,
        level: &str,
    ) -> Result<(), EntityError> {
        let portion = self.portion(id)?;
        if !portion.alive {
            return Err(EntityError::DeadSubject(id.to_string()));
        }
        let scale = match portion.properties.get(property) {
            Some(v) => v.scale.clone(),
            None => self
                .substances
                .get(&portion.substance)
                .and_then(|s| s.default_properties.get(property))
                .map(|v| v.scale.clone())
                .ok_or_else(|| EntityError::UndeclaredVariable {
                    entity: id.to_string(),
                    variable: property.to_string(),
                })?,
        };
        let value = QualValue::new(scale, level);
        self.check_qual(&value)?;
        self.portion_mut(id)?
            .properties
            .insert(property.to_string(), value);
        Ok(())
    }

    fn record(
        &mut self,
        kind: TransitionalKind,
        subjects: Vec<EntityRef>,
        results: Vec<EntityRef>,
        note: String,
    ) -> Transitional {
        let t = Transitional {
            kind,
            subjects,
            results,
            note,
            step: self.step,
        };
        self.transitionals.push(t.clone());
        t
    }

    pub fn apply_transitional(&mut self, op: TransitionalOp) -> Result<Transitional, EntityError> {
        match op {
            TransitionalOp::StateChange {
                subject,
                variable,
                label,
            } => self.set_state(&subject, &variable, &label),
            TransitionalOp::Birth { kind } => {
                let entity = self.instantiate(&kind)?;
                if let EntityRef::Portion(_) = entity {
                    // spawn_portion already recorded the birth
                    return Ok(self.transitionals.last().cloned().expect("recorded"));
                }
                Ok(self.record(TransitionalKind::Birth, vec![], vec![entity], kind))
            }
            TransitionalOp::Death { subject } => {
                if !self.is_alive(&subject)? {
                    return Err(EntityError::DeadSubject(subject.to_string()));
                }
                match &subject {
                    EntityRef::Object(id) => {
                        self.objects.get_mut(id).expect("checked").alive = false;
                    }
                    EntityRef::Portion(id) => self.retire_portion(*id)?,
                    EntityRef::Substance(name) => {
                        return Err(EntityError::NotAPortion(name.clone()))
                    }
                }
                Ok(self.record(TransitionalKind::Death, vec![subject], vec![], String::new()))
            }
            TransitionalOp::Split { subject, fan_out } => {
                self.split_portion(subject, fan_out)?;
                Ok(self.transitionals.last().cloned().expect("recorded"))
            }
            TransitionalOp::Merge { subjects } => {
                self.merge_portions(&subjects)?;
                Ok(self.transitionals.last().cloned().expect("recorded"))
            }
        }
    }

    fn retire_portion(&mut self, id: PortionId) -> Result<(), EntityError> {
        let portion = self.portion_mut(id)?;
        portion.alive = false;
        if let Some(c) = portion.compartment.clone() {
            if let Some(comp) = self.topology.compartments.get_mut(&c) {
                comp.contents.retain(|p| *p != id);
            }
        }
        Ok(())
    }

    /// Retires `subject` and creates `fan_out` copies of it at the same
    /// position, each carrying the parent in its provenance.
    pub fn split_portion(
        &mut self,
        subject: PortionId,
        fan_out: usize,
    ) -> Result<Vec<PortionId>, EntityError> {
        if fan_out < 2 {
            return Err(EntityError::SplitTooSmall(fan_out));
        }
        let parent = self.portion(subject)?.clone();
        if !parent.alive {
            return Err(EntityError::DeadSubject(subject.to_string()));
        }
        self.retire_portion(subject)?;
        let mut children = Vec::with_capacity(fan_out);
        for _ in 0..fan_out {
            let id = self.alloc_portion_id();
            let child = Portion {
                id,
                provenance: vec![subject],
                birth_index: None,
                alive: true,
                ..parent.clone()
            };
            if let Some(c) = &child.compartment {
                if let Some(comp) = self.topology.compartments.get_mut(c) {
                    comp.contents.push(id);
                }
            }
            self.portions.insert(id, child);
            children.push(id);
        }
        self.record(
            TransitionalKind::Split,
            vec![subject.into()],
            children.iter().map(|c| (*c).into()).collect(),
            String::new(),
        );
        Ok(children)
    }

    /// Retires all subjects and creates one portion whose properties follow
    /// the substance's mixing rules. The result takes the first subject's
    /// position and states.
    pub fn merge_portions(&mut self, subjects: &[PortionId]) -> Result<PortionId, EntityError> {
        if subjects.len() < 2 {
            return Err(EntityError::MergeTooSmall(subjects.len()));
        }
        let mut inputs = Vec::with_capacity(subjects.len());
        for id in subjects {
            let p = self.portion(*id)?;
            if !p.alive {
                return Err(EntityError::DeadSubject(id.to_string()));
            }
            inputs.push(p.clone());
        }
        let substance = inputs[0].substance.clone();
        if inputs.iter().any(|p| p.substance != substance) {
            return Err(EntityError::MixedSubstances);
        }
        let mixing = self
            .substances
            .get(&substance)
            .map(|s| s.mixing.clone())
            .unwrap_or_default();
        let mut properties = inputs[0].properties.clone();
        for (name, value) in properties.iter_mut() {
            let rule = mixing.get(name).copied().unwrap_or(MixRule::First);
            let Some(scale) = self.scales.get(&value.scale) else {
                continue;
            };
            let levels = inputs.iter().filter_map(|p| p.properties.get(name));
            let pick = match rule {
                MixRule::First => None,
                MixRule::Min => levels.min_by_key(|v| scale.rank(&v.level)),
                MixRule::Max => levels.max_by_key(|v| scale.rank(&v.level)),
            };
            if let Some(v) = pick {
                *value = v.clone();
            }
        }
        let mut arrived_from: Vec<String> = Vec::new();
        for p in &inputs {
            for c in &p.arrived_from {
                if !arrived_from.contains(c) {
                    arrived_from.push(c.clone());
                }
            }
        }
        for id in subjects {
            self.retire_portion(*id)?;
        }
        let id = self.alloc_portion_id();
        let result = Portion {
            id,
            properties,
            provenance: subjects.to_vec(),
            birth_index: None,
            arrived_from,
            alive: true,
            ..inputs[0].clone()
        };
        if let Some(c) = &result.compartment {
            if let Some(comp) = self.topology.compartments.get_mut(c) {
                comp.contents.push(id);
            }
        }
        self.portions.insert(id, result);
        self.record(
            TransitionalKind::Merge,
            subjects.iter().map(|s| (*s).into()).collect(),
            vec![id.into()],
            String::new(),
        );
        Ok(id)
    }

    pub fn check_cardinality(
        &self,
        object: &ObjectId,
    ) -> Result<Vec<CardinalityViolation>, EntityError> {
        let obj = self
            .objects
            .get(object)
            .ok_or_else(|| EntityError::UnknownEntity(object.0.clone()))?;
        let schema = self.effective_part_schema(&obj.kind)?;
        Ok(schema
            .into_iter()
            .filter_map(|slot| {
                let count = obj.part_count(&slot.role);
                (!slot.cardinality.allows(count)).then_some(CardinalityViolation {
                    role: slot.role,
                    count,
                    allowed: slot.cardinality,
                })
            })
            .collect())
    }

    /// Adds an existing object as a part of another (used to re-specify part
    /// counts after instantiation).
    pub fn attach_part(
        &mut self,
        parent: &ObjectId,
        role: &str,
        child: ObjectId,
    ) -> Result<(), EntityError> {
        if !self.objects.contains_key(&child) {
            return Err(EntityError::UnknownEntity(child.0));
        }
        let obj = self
            .objects
            .get_mut(parent)
            .ok_or_else(|| EntityError::UnknownEntity(parent.0.clone()))?;
        obj.parts.push(PartLink {
            role: role.to_string(),
            child,
        });
        Ok(())
    }

    /// Every live portion that is not in a compartment must sit in coordinate
    /// space, and every compartment member must point back at it.
    pub fn placement_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        for p in self.live_portions() {
            match &p.compartment {
                Some(c) => match self.topology.compartments.get(c) {
                    Some(comp) if comp.contents.contains(&p.id) => {}
                    Some(_) => errors.push(format!("{} not listed in {c}", p.id)),
                    None => errors.push(format!("{} located in unknown compartment {c}", p.id)),
                },
                None if p.coords.is_none() => errors.push(format!("{} has no position", p.id)),
                None => {}
            }
        }
        for comp in self.topology.compartments.values() {
            for id in &comp.contents {
                match self.portions.get(id) {
                    Some(p) if p.alive && p.compartment.as_deref() == Some(&comp.name) => {}
                    _ => errors.push(format!("{} lists stale portion {id}", comp.name)),
                }
            }
        }
        errors
    }

    /// Clears per-step movement bookkeeping and sets the current step index.
    pub fn begin_step(&mut self, step: u64) {
        self.step = step;
        for p in self.portions.values_mut() {
            p.arrived_from.clear();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::{Cardinality, Granularity, PartRole, PartSpec, ScaleKind};

    fn mammal_world() -> World {
        let mut w = World::new();
        for organ in ["Ear", "Eye", "Leg"] {
            w.define_kind(KindDef::new(organ, Granularity::Organ)).unwrap();
        }
        w.define_kind(
            KindDef::new("Mammal", Granularity::Organism)
                .with_part(PartSpec::new("ears", "Ear", PartRole::Functional, Cardinality::Exact(2)))
                .with_part(PartSpec::new("eyes", "Eye", PartRole::Functional, Cardinality::Exact(2)))
                .with_part(PartSpec::new(
                    "legs",
                    "Leg",
                    PartRole::Functional,
                    Cardinality::AnyOf([2, 4].into_iter().collect()),
                )),
        )
        .unwrap();
        w
    }

    fn gas_world() -> World {
        let mut w = World::new();
        w.define_scale(StateSpace::new("GasLevel", ["low", "high"], ScaleKind::Binary).unwrap())
            .unwrap();
        w.add_substance(
            Substance::new("blood", "liquid")
                .with_property("O2Level", QualValue::new("GasLevel", "low"), MixRule::Min)
                .with_property("CO2Level", QualValue::new("GasLevel", "high"), MixRule::Max),
        )
        .unwrap();
        w
    }

    fn props(o2: &str, co2: &str) -> BTreeMap<String, QualValue> {
        [
            ("O2Level".to_string(), QualValue::new("GasLevel", o2)),
            ("CO2Level".to_string(), QualValue::new("GasLevel", co2)),
        ]
        .into_iter()
        .collect()
    }

    #[test]
    fn mammal_kind_has_three_part_specs() {
        let w = mammal_world();
        assert_eq!(w.kinds["Mammal"].part_schema.len(), 3);
    }

    #[test]
    fn child_kind_inherits_part_schema() {
        let mut w = mammal_world();
        w.define_kind(KindDef::new("Dog", Granularity::Organism).with_parent("Mammal"))
            .unwrap();
        assert_eq!(
            w.effective_part_schema("Dog").unwrap(),
            w.effective_part_schema("Mammal").unwrap()
        );
    }

    #[test]
    fn self_parent_is_cyclic() {
        let mut w = World::new();
        let err = w
            .define_kind(KindDef::new("A", Granularity::System).with_parent("A"))
            .unwrap_err();
        assert_eq!(err, EntityError::CyclicInheritance("A".into()));
    }

    #[test]
    fn duplicate_kind_rejected() {
        let mut w = mammal_world();
        assert_eq!(
            w.define_kind(KindDef::new("Ear", Granularity::Organ)).unwrap_err(),
            EntityError::DuplicateKind("Ear".into())
        );
    }

    #[test]
    fn bulk_loaded_cycle_detected() {
        let mut w = World::new();
        w.kinds.insert("A".into(), KindDef::new("A", Granularity::System).with_parent("B"));
        w.kinds.insert("B".into(), KindDef::new("B", Granularity::System).with_parent("A"));
        assert!(matches!(w.check_kinds(), Err(EntityError::CyclicInheritance(_))));
    }

    #[test]
    fn instantiate_uses_minimum_cardinality() {
        let mut w = mammal_world();
        let EntityRef::Object(id) = w.instantiate("Mammal").unwrap() else {
            panic!("expected object")
        };
        let obj = &w.objects[&id];
        assert_eq!(obj.part_count("ears"), 2);
        assert_eq!(obj.part_count("eyes"), 2);
        assert_eq!(obj.part_count("legs"), 2);
        assert!(w.check_cardinality(&id).unwrap().is_empty());
    }

    #[test]
    fn instantiate_unknown_kind_fails() {
        let mut w = World::new();
        assert_eq!(
            w.instantiate("Unicorn").unwrap_err(),
            EntityError::UnknownKind("Unicorn".into())
        );
    }

    #[test]
    fn three_legs_is_one_violation_four_is_none() {
        let mut w = mammal_world();
        let EntityRef::Object(id) = w.instantiate("Mammal").unwrap() else {
            panic!()
        };
        let extra = w.instantiate_object("Leg", ObjectId("spare-0".into())).unwrap();
        w.attach_part(&id, "legs", extra).unwrap();
        let violations = w.check_cardinality(&id).unwrap();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].role, "legs");
        assert_eq!(violations[0].count, 3);

        let extra = w.instantiate_object("Leg", ObjectId("spare-1".into())).unwrap();
        w.attach_part(&id, "legs", extra).unwrap();
        assert!(w.check_cardinality(&id).unwrap().is_empty());
    }

    #[test]
    fn empty_schema_has_no_violations() {
        let mut w = mammal_world();
        let EntityRef::Object(id) = w.instantiate("Ear").unwrap() else {
            panic!()
        };
        assert!(w.check_cardinality(&id).unwrap().is_empty());
    }

    #[test]
    fn set_state_checks_space_and_records() {
        let mut w = World::new();
        w.add_substance(Substance::new("water", "liquid")).unwrap();
        w.define_kind(
            KindDef::new("WaterPortion", Granularity::Molecular)
                .portion_of("water")
                .with_state(
                    StateSpace::new(
                        "Location",
                        ["null", "upper", "drop", "pool"],
                        ScaleKind::Nominal,
                    )
                    .unwrap(),
                ),
        )
        .unwrap();
        let p = w.instantiate("WaterPortion").unwrap();
        let EntityRef::Portion(pid) = p else { panic!() };
        assert_eq!(w.portions[&pid].coords, Some(Coords { x: 0, y: 0 }));
        assert_eq!(w.state_of(&p, "Location"), Some("null"));

        let t = w.set_state(&p, "Location", "drop").unwrap();
        assert_eq!(t.kind, TransitionalKind::StateChange);
        assert_eq!(w.state_of(&p, "Location"), Some("drop"));
        assert!(matches!(
            w.set_state(&p, "Location", "ocean"),
            Err(EntityError::LabelOutsideSpace { .. })
        ));
        assert!(matches!(
            w.set_state(&p, "Colour", "blue"),
            Err(EntityError::UndeclaredVariable { .. })
        ));

        let water = EntityRef::Substance("water".into());
        w.set_state(&water, "phase", "solid").unwrap();
        assert!(!w.substances["water"].is_fluid());
    }

    #[test]
    fn merge_takes_min_oxygen_and_max_carbon_dioxide() {
        let mut w = gas_world();
        let a = w.seed_portion("blood", None, props("low", "high")).unwrap();
        let b = w.seed_portion("blood", None, props("high", "high")).unwrap();
        let m = w.merge_portions(&[a, b]).unwrap();
        let merged = &w.portions[&m];
        assert_eq!(merged.property("O2Level"), Some("low"));
        assert_eq!(merged.property("CO2Level"), Some("high"));
        assert_eq!(merged.provenance, vec![a, b]);
        assert_eq!(w.live_portions().count(), 1);
    }

    #[test]
    fn split_copies_properties_and_links_provenance() {
        let mut w = gas_world();
        let p = w.seed_portion("blood", None, props("high", "low")).unwrap();
        let kids = w.split_portion(p, 2).unwrap();
        assert_eq!(kids.len(), 2);
        for k in &kids {
            let child = &w.portions[k];
            assert_eq!(child.provenance, vec![p]);
            assert_eq!(child.property("O2Level"), Some("high"));
            assert_eq!(child.property("CO2Level"), Some("low"));
        }
        assert!(!w.portions[&p].alive);
        assert_eq!(
            w.split_portion(kids[0], 1).unwrap_err(),
            EntityError::SplitTooSmall(1)
        );
        assert_eq!(
            w.split_portion(p, 2).unwrap_err(),
            EntityError::DeadSubject(p.to_string())
        );
    }

    #[test]
    fn dead_subject_rejects_state_change() {
        let mut w = mammal_world();
        let eye = w.instantiate("Eye").unwrap();
        w.apply_transitional(TransitionalOp::Death { subject: eye.clone() })
            .unwrap();
        assert!(matches!(
            w.set_state(&eye, "open", "yes"),
            Err(EntityError::DeadSubject(_))
        ));
        assert!(matches!(
            w.apply_transitional(TransitionalOp::Death { subject: eye }),
            Err(EntityError::DeadSubject(_))
        ));
    }

    #[test]
    fn merge_needs_two_subjects() {
        let mut w = gas_world();
        let a = w.seed_portion("blood", None, BTreeMap::new()).unwrap();
        assert_eq!(
            w.merge_portions(&[a]).unwrap_err(),
            EntityError::MergeTooSmall(1)
        );
    }
}

//! Compartment graph and stage-then-commit portion movement.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity::{EntityError, ObjectId, PortionId, Transitional};
use crate::world::World;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("compartment `{0}` already exists")]
    DuplicateCompartment(String),
    #[error("compartment `{0}` needs a capacity of at least 1")]
    ZeroCapacity(String),
    #[error("unknown compartment `{0}`")]
    UnknownCompartment(String),
    #[error("{kind} connection {from} -> {to} already exists")]
    DuplicateConnection {
        from: String,
        to: String,
        kind: ConduitKind,
    },
    #[error("no fluid connection {from} -> {to}; refusing to push")]
    PushWithoutConnection { from: String, to: String },
    #[error("portion {portion} is not in {compartment}")]
    PortionNotPresent {
        portion: PortionId,
        compartment: String,
    },
    #[error("portion {0} already moves in this batch")]
    DuplicateMover(PortionId),
    #[error("batch has already been committed")]
    AlreadyCommitted,
    #[error("move of {0} names no destination")]
    NoDestination(PortionId),
    #[error("compartment `{compartment}` would hold {count} portions (capacity {capacity}) and its medium does not merge")]
    CapacityExceeded {
        compartment: String,
        count: usize,
        capacity: u32,
    },
    #[error("unknown circuit `{0}`")]
    UnknownCircuit(String),
    #[error("circuit `{circuit}` hop {from} -> {to} has no fluid connection")]
    UnwiredHop {
        circuit: String,
        from: String,
        to: String,
    },
    #[error(transparent)]
    Entity(#[from] EntityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Medium {
    BloodPath,
    AirPath,
    Other,
}

impl Medium {
    /// Whether portions converging on a full compartment of this medium
    /// combine into one.
    pub fn merges_on_confluence(self) -> bool {
        matches!(self, Medium::BloodPath)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compartment {
    pub name: String,
    pub medium: Medium,
    /// `None` means unbounded (a reservoir).
    pub capacity: Option<u32>,
    #[serde(default)]
    pub structure: Option<ObjectId>,
    #[serde(default)]
    pub region: Option<String>,
    #[serde(default)]
    pub contents: Vec<PortionId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConduitKind {
    Fluid,
    Nerve,
}

impl fmt::Display for ConduitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConduitKind::Fluid => "fluid",
            ConduitKind::Nerve => "nerve",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Connection {
    pub from: String,
    pub to: String,
    pub conduit: ConduitKind,
}

/// One hop of a circuit. More than one destination makes the hop a branch
/// point: the departing portion splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub from: String,
    pub to: Vec<String>,
}

/// An ordered ring of hops driven as a unit by a pulse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub name: String,
    pub hops: Vec<Hop>,
    /// Trace line per vacated compartment; `{compartment}` is substituted.
    pub push_trace: String,
}

impl Circuit {
    pub fn push_line(&self, compartment: &str) -> String {
        self.push_trace.replace("{compartment}", compartment)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    #[serde(default)]
    pub compartments: BTreeMap<String, Compartment>,
    #[serde(default)]
    pub connections: BTreeSet<Connection>,
    #[serde(default)]
    pub circuits: BTreeMap<String, Circuit>,
}

impl Topology {
    pub fn add_compartment(
        &mut self,
        name: &str,
        medium: Medium,
        capacity: Option<u32>,
        structure: Option<ObjectId>,
        region: Option<&str>,
    ) -> Result<&Compartment, TopologyError> {
        if self.compartments.contains_key(name) {
            return Err(TopologyError::DuplicateCompartment(name.to_string()));
        }
        if capacity == Some(0) {
            return Err(TopologyError::ZeroCapacity(name.to_string()));
        }
        self.compartments.insert(
            name.to_string(),
            Compartment {
                name: name.to_string(),
                medium,
                capacity,
                structure,
                region: region.map(str::to_string),
                contents: Vec::new(),
            },
        );
        Ok(&self.compartments[name])
    }

    pub fn compartment(&self, name: &str) -> Result<&Compartment, TopologyError> {
        self.compartments
            .get(name)
            .ok_or_else(|| TopologyError::UnknownCompartment(name.to_string()))
    }

    pub fn connect(
        &mut self,
        from: &str,
        to: &str,
        conduit: ConduitKind,
    ) -> Result<Connection, TopologyError> {
        self.compartment(from)?;
        self.compartment(to)?;
        let edge = Connection {
            from: from.to_string(),
            to: to.to_string(),
            conduit,
        };
        if !self.connections.insert(edge.clone()) {
            return Err(TopologyError::DuplicateConnection {
                from: edge.from,
                to: edge.to,
                kind: conduit,
            });
        }
        Ok(edge)
    }

    pub fn disconnect(&mut self, from: &str, to: &str, conduit: ConduitKind) -> bool {
        self.connections.remove(&Connection {
            from: from.to_string(),
            to: to.to_string(),
            conduit,
        })
    }

    pub fn is_connected(&self, from: &str, to: &str, conduit: ConduitKind) -> bool {
        self.connections.contains(&Connection {
            from: from.to_string(),
            to: to.to_string(),
            conduit,
        })
    }

    pub fn add_circuit(&mut self, circuit: Circuit) -> Result<(), TopologyError> {
        self.check_circuit(&circuit)?;
        self.circuits.insert(circuit.name.clone(), circuit);
        Ok(())
    }

    /// Every hop of the circuit must follow a declared fluid connection.
    pub fn check_circuit(&self, circuit: &Circuit) -> Result<(), TopologyError> {
        for hop in &circuit.hops {
            self.compartment(&hop.from)?;
            for to in &hop.to {
                self.compartment(to)?;
                if !self.is_connected(&hop.from, to, ConduitKind::Fluid) {
                    return Err(TopologyError::UnwiredHop {
                        circuit: circuit.name.clone(),
                        from: hop.from.clone(),
                        to: to.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchStatus {
    Staging,
    Committed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub portion: PortionId,
    pub from: String,
    pub to: Vec<String>,
}

/// Moves calculated against one world state and applied together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveBatch {
    moves: Vec<Move>,
    status: BatchStatus,
}

impl Default for MoveBatch {
    fn default() -> Self {
        MoveBatch::new()
    }
}

impl MoveBatch {
    pub fn new() -> Self {
        MoveBatch {
            moves: Vec::new(),
            status: BatchStatus::Staging,
        }
    }

    pub fn moves(&self) -> &[Move] {
        &self.moves
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn status(&self) -> BatchStatus {
        self.status
    }

    /// Appends another staging batch's moves, rejecting duplicate movers.
    pub fn absorb(&mut self, other: MoveBatch) -> Result<(), TopologyError> {
        for m in &other.moves {
            if self.moves.iter().any(|x| x.portion == m.portion) {
                return Err(TopologyError::DuplicateMover(m.portion));
            }
        }
        self.moves.extend(other.moves);
        Ok(())
    }
}

/// What a commit did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommitOutcome {
    /// Compartments left by a mover, in staging order, without repeats.
    pub vacated: Vec<String>,
    pub transitionals: Vec<Transitional>,
}

impl World {
    /// Puts a free-standing portion into a compartment, outside any batch.
    /// Used to lay out initial conditions.
    pub fn place(&mut self, portion: PortionId, compartment: &str) -> Result<(), TopologyError> {
        self.topology.compartment(compartment)?;
        let p = self.portion_mut(portion)?;
        if let Some(old) = p.compartment.replace(compartment.to_string()) {
            if let Some(c) = self.topology.compartments.get_mut(&old) {
                c.contents.retain(|id| *id != portion);
            }
        }
        self.portion_mut(portion)?.coords = None;
        self.topology
            .compartments
            .get_mut(compartment)
            .expect("checked")
            .contents
            .push(portion);
        Ok(())
    }

    /// Records a move in `batch` without touching the world.
    pub fn stage_move(
        &self,
        batch: &mut MoveBatch,
        portion: PortionId,
        from: &str,
        to: &[&str],
    ) -> Result<(), TopologyError> {
        if batch.status != BatchStatus::Staging {
            return Err(TopologyError::AlreadyCommitted);
        }
        if to.is_empty() {
            return Err(TopologyError::NoDestination(portion));
        }
        let source = self.topology.compartment(from)?;
        for dest in to {
            self.topology.compartment(dest)?;
            if !self.topology.is_connected(from, dest, ConduitKind::Fluid) {
                return Err(TopologyError::PushWithoutConnection {
                    from: from.to_string(),
                    to: dest.to_string(),
                });
            }
        }
        if !source.contents.contains(&portion) {
            return Err(TopologyError::PortionNotPresent {
                portion,
                compartment: from.to_string(),
            });
        }
        if batch.moves.iter().any(|m| m.portion == portion) {
            return Err(TopologyError::DuplicateMover(portion));
        }
        batch.moves.push(Move {
            portion,
            from: from.to_string(),
            to: to.iter().map(|s| s.to_string()).collect(),
        });
        Ok(())
    }

    /// Stages one move per occupant of each hop's source compartment, in
    /// circuit order.
    pub fn ring_push(&self, circuit: &str) -> Result<MoveBatch, TopologyError> {
        let circuit = self
            .topology
            .circuits
            .get(circuit)
            .ok_or_else(|| TopologyError::UnknownCircuit(circuit.to_string()))?;
        let mut batch = MoveBatch::new();
        for hop in &circuit.hops {
            let occupants = self.topology.compartment(&hop.from)?.contents.clone();
            let dests: Vec<&str> = hop.to.iter().map(String::as_str).collect();
            for portion in occupants {
                self.stage_move(&mut batch, portion, &hop.from, &dests)?;
            }
        }
        Ok(batch)
    }

    /// Applies every staged move as one transition. Branch moves split the
    /// mover; portions converging on a full compartment merge when the
    /// medium allows it. Nothing is mutated if the batch cannot apply.
    pub fn commit(&mut self, batch: &mut MoveBatch) -> Result<CommitOutcome, TopologyError> {
        if batch.status != BatchStatus::Staging {
            return Err(TopologyError::AlreadyCommitted);
        }
        // plan: occupancy after the batch
        let mut occupancy: BTreeMap<&str, usize> = self
            .topology
            .compartments
            .iter()
            .map(|(n, c)| (n.as_str(), c.contents.len()))
            .collect();
        for m in &batch.moves {
            let present = self
                .topology
                .compartment(&m.from)?
                .contents
                .contains(&m.portion);
            if !present {
                return Err(TopologyError::PortionNotPresent {
                    portion: m.portion,
                    compartment: m.from.clone(),
                });
            }
            *occupancy.get_mut(m.from.as_str()).expect("checked") -= 1;
            for dest in &m.to {
                *occupancy
                    .get_mut(dest.as_str())
                    .ok_or_else(|| TopologyError::UnknownCompartment(dest.clone()))? += 1;
            }
        }
        for (name, count) in &occupancy {
            let comp = &self.topology.compartments[*name];
            if let Some(cap) = comp.capacity {
                if *count > cap as usize && !comp.medium.merges_on_confluence() {
                    return Err(TopologyError::CapacityExceeded {
                        compartment: name.to_string(),
                        count: *count,
                        capacity: cap,
                    });
                }
            }
        }

        let mut outcome = CommitOutcome::default();
        let first_transitional = self.transitionals.len();
        // lift every mover out first so moves are simultaneous
        for m in &batch.moves {
            let comp = self
                .topology
                .compartments
                .get_mut(&m.from)
                .expect("checked");
            comp.contents.retain(|p| *p != m.portion);
            if !outcome.vacated.contains(&m.from) {
                outcome.vacated.push(m.from.clone());
            }
        }
        let mut touched: Vec<String> = Vec::new();
        for m in &batch.moves {
            let landing: Vec<(PortionId, &String)> = if m.to.len() == 1 {
                vec![(m.portion, &m.to[0])]
            } else {
                let p = self.portion_mut(m.portion)?;
                p.compartment = None;
                let kids = self.split_portion(m.portion, m.to.len())?;
                kids.into_iter().zip(m.to.iter()).collect()
            };
            for (pid, dest) in landing {
                let p = self.portion_mut(pid)?;
                p.compartment = Some(dest.clone());
                p.coords = None;
                // a second move in the same step replaces the first
                p.arrived_from = vec![m.from.clone()];
                self.topology
                    .compartments
                    .get_mut(dest)
                    .expect("checked")
                    .contents
                    .push(pid);
                if !touched.contains(dest) {
                    touched.push(dest.clone());
                }
            }
        }
        for name in touched {
            let comp = &self.topology.compartments[&name];
            let over = comp
                .capacity
                .is_some_and(|cap| comp.contents.len() > cap as usize);
            if over {
                let occupants = comp.contents.clone();
                self.merge_portions(&occupants)?;
            }
        }
        outcome.transitionals = self.transitionals[first_transitional..].to_vec();
        batch.status = BatchStatus::Committed;
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::{MixRule, QualValue, ScaleKind, StateSpace, Substance};

    fn world() -> World {
        let mut w = World::new();
        w.define_scale(StateSpace::new("GasLevel", ["low", "high"], ScaleKind::Binary).unwrap())
            .unwrap();
        w.add_substance(
            Substance::new("air", "gas")
                .with_property("O2Level", QualValue::new("GasLevel", "high"), MixRule::Min),
        )
        .unwrap();
        w.add_substance(Substance::new("blood", "liquid")).unwrap();
        w
    }

    fn place(w: &mut World, substance: &str, compartment: &str) -> PortionId {
        let id = w.seed_portion(substance, None, Default::default()).unwrap();
        w.portions.get_mut(&id).unwrap().compartment = Some(compartment.to_string());
        w.topology
            .compartments
            .get_mut(compartment)
            .unwrap()
            .contents
            .push(id);
        id
    }

    #[test]
    fn add_compartment_rules() {
        let mut t = Topology::default();
        t.add_compartment("LeftAtrium", Medium::BloodPath, Some(1), None, None)
            .unwrap();
        assert!(t
            .add_compartment("ExternalAir", Medium::AirPath, None, None, Some("outside"))
            .is_ok());
        assert_eq!(
            t.add_compartment("LeftAtrium", Medium::BloodPath, Some(1), None, None)
                .unwrap_err(),
            TopologyError::DuplicateCompartment("LeftAtrium".into())
        );
        assert_eq!(
            t.add_compartment("Zero", Medium::Other, Some(0), None, None)
                .unwrap_err(),
            TopologyError::ZeroCapacity("Zero".into())
        );
    }

    #[test]
    fn connections_are_directed_and_unique() {
        let mut t = Topology::default();
        assert!(!t.is_connected("A", "B", ConduitKind::Fluid));
        for n in ["A", "B"] {
            t.add_compartment(n, Medium::Other, Some(1), None, None).unwrap();
        }
        t.connect("A", "B", ConduitKind::Fluid).unwrap();
        assert!(t.is_connected("A", "B", ConduitKind::Fluid));
        assert!(!t.is_connected("B", "A", ConduitKind::Fluid));
        assert!(!t.is_connected("A", "B", ConduitKind::Nerve));
        assert!(matches!(
            t.connect("A", "B", ConduitKind::Fluid),
            Err(TopologyError::DuplicateConnection { .. })
        ));
        t.connect("A", "B", ConduitKind::Nerve).unwrap();
        assert_eq!(
            t.connect("Q", "B", ConduitKind::Fluid).unwrap_err(),
            TopologyError::UnknownCompartment("Q".into())
        );
    }

    #[test]
    fn staging_checks_and_is_pure() {
        let mut w = world();
        for n in ["A", "B", "C"] {
            w.topology
                .add_compartment(n, Medium::BloodPath, Some(1), None, None)
                .unwrap();
        }
        w.topology.connect("A", "B", ConduitKind::Fluid).unwrap();
        let p = place(&mut w, "blood", "A");
        let before = w.clone();
        let mut batch = MoveBatch::new();
        assert_eq!(
            w.stage_move(&mut batch, p, "A", &["C"]).unwrap_err(),
            TopologyError::PushWithoutConnection {
                from: "A".into(),
                to: "C".into()
            }
        );
        w.stage_move(&mut batch, p, "A", &["B"]).unwrap();
        assert_eq!(batch.len(), 1);
        assert_eq!(
            w.stage_move(&mut batch, p, "A", &["B"]).unwrap_err(),
            TopologyError::DuplicateMover(p)
        );
        assert!(matches!(
            w.stage_move(&mut batch, PortionId(99), "A", &["B"]),
            Err(TopologyError::PortionNotPresent { .. })
        ));
        assert_eq!(w, before);
    }

    #[test]
    fn empty_commit_is_noop() {
        let mut w = world();
        let before = w.clone();
        let mut batch = MoveBatch::new();
        let out = w.commit(&mut batch).unwrap();
        assert!(out.vacated.is_empty());
        assert_eq!(batch.status(), BatchStatus::Committed);
        assert_eq!(w, before);
        assert_eq!(w.commit(&mut batch).unwrap_err(), TopologyError::AlreadyCommitted);
    }

    #[test]
    fn two_air_portions_into_nose_fail_atomically() {
        let mut w = world();
        for n in ["Ext", "Mouth", "Nose"] {
            let cap = if n == "Ext" { None } else { Some(1) };
            w.topology
                .add_compartment(n, Medium::AirPath, cap, None, None)
                .unwrap();
        }
        w.topology.connect("Ext", "Nose", ConduitKind::Fluid).unwrap();
        w.topology.connect("Mouth", "Nose", ConduitKind::Fluid).unwrap();
        let a = place(&mut w, "air", "Ext");
        let b = place(&mut w, "air", "Mouth");
        let before = w.clone();
        let mut batch = MoveBatch::new();
        w.stage_move(&mut batch, a, "Ext", &["Nose"]).unwrap();
        w.stage_move(&mut batch, b, "Mouth", &["Nose"]).unwrap();
        assert!(matches!(
            w.commit(&mut batch),
            Err(TopologyError::CapacityExceeded { .. })
        ));
        assert_eq!(w, before);
    }

    #[test]
    fn simultaneous_swap_respects_capacity() {
        let mut w = world();
        for n in ["A", "B"] {
            w.topology
                .add_compartment(n, Medium::AirPath, Some(1), None, None)
                .unwrap();
        }
        w.topology.connect("A", "B", ConduitKind::Fluid).unwrap();
        w.topology.connect("B", "A", ConduitKind::Fluid).unwrap();
        let a = place(&mut w, "air", "A");
        let b = place(&mut w, "air", "B");
        let mut batch = MoveBatch::new();
        w.stage_move(&mut batch, a, "A", &["B"]).unwrap();
        w.stage_move(&mut batch, b, "B", &["A"]).unwrap();
        let out = w.commit(&mut batch).unwrap();
        assert_eq!(out.vacated, vec!["A".to_string(), "B".to_string()]);
        assert_eq!(w.portions[&a].compartment.as_deref(), Some("B"));
        assert_eq!(w.portions[&b].compartment.as_deref(), Some("A"));
        assert!(w.placement_errors().is_empty());
    }

    #[test]
    fn unwired_circuit_rejected() {
        let mut t = Topology::default();
        for n in ["A", "B"] {
            t.add_compartment(n, Medium::BloodPath, Some(1), None, None).unwrap();
        }
        t.connect("A", "B", ConduitKind::Fluid).unwrap();
        let c = Circuit {
            name: "loop".into(),
            hops: vec![
                Hop { from: "A".into(), to: vec!["B".into()] },
                Hop { from: "B".into(), to: vec!["A".into()] },
            ],
            push_trace: "pushed {compartment}Blood".into(),
        };
        assert_eq!(
            t.add_circuit(c).unwrap_err(),
            TopologyError::UnwiredHop {
                circuit: "loop".into(),
                from: "B".into(),
                to: "A".into()
            }
        );
    }

    #[test]
    fn empty_circuit_gives_empty_batch() {
        let mut w = world();
        w.topology
            .add_circuit(Circuit {
                name: "none".into(),
                hops: vec![],
                push_trace: "pushed {compartment}".into(),
            })
            .unwrap();
        assert!(w.ring_push("none").unwrap().is_empty());
        assert_eq!(
            w.ring_push("missing").unwrap_err(),
            TopologyError::UnknownCircuit("missing".into())
        );
    }
}

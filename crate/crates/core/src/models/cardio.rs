//! The cardiopulmonary model: a blood circuit pulsed by the SA node, a
//! breathing cycle driven by the medulla over the phrenic nerve, and gas
//! exchange at the alveolar and body capillaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::entity::{
    FunctionContext, Granularity, KindDef, MixRule, ObjectId, QualValue, ScaleKind, StateSpace,
    Substance,
};
use crate::frames::FrameRegistry;
use crate::mechanism::{Action, Guard, Mechanism, Receptor, System, Transfer, Trigger};
use crate::model::{Model, ModelError};
use crate::models::annotation::{Annotation, AnnotationKind};
use crate::models::scenario::Scenario;
use crate::topology::{Circuit, ConduitKind, Hop, Medium};
use crate::validation::{standard_rules, AssertionRule, Expectation};
use crate::world::World;

pub const BLOOD: &str = "blood";
pub const AIR: &str = "air";
pub const GAS_SCALE: &str = "GasLevel";
pub const O2: &str = "O2Level";
pub const CO2: &str = "CO2Level";
pub const CIRCUIT: &str = "blood";
pub const BLOOD_PORTION: &str = "BloodPortion";
pub const AIR_PORTION: &str = "AirPortion";
pub const CONSERVATION_RULE: &str = "blood-portions-conserved";

pub const BLOOD_COMPARTMENTS: [&str; 7] = [
    "LeftAtrium",
    "LeftVentricle",
    "MedullaCap",
    "CellCap",
    "RightAtrium",
    "RightVentricle",
    "AlvCap",
];
pub const AIR_COMPARTMENTS: [&str; 3] = ["ExternalAir", "NoseAir", "AlvAir"];

/// Trigger periods and phases, in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardioConfig {
    pub sa_node_period: u32,
    pub sa_node_phase: u32,
    pub medulla_period: u32,
    pub medulla_phase: u32,
    pub diffusion_period: u32,
    pub mixer_period: u32,
}

impl Default for CardioConfig {
    fn default() -> Self {
        CardioConfig {
            sa_node_period: 4,
            sa_node_phase: 0,
            medulla_period: 6,
            medulla_phase: 0,
            diffusion_period: 2,
            mixer_period: 3,
        }
    }
}

fn gas(level: &str) -> QualValue {
    QualValue::new(GAS_SCALE, level)
}

fn world() -> Result<World, ModelError> {
    let mut w = World::new();
    w.define_scale(StateSpace::new(GAS_SCALE, ["low", "high"], ScaleKind::Binary)?)?;
    w.add_substance(
        Substance::new(BLOOD, "liquid")
            .with_property(O2, gas("low"), MixRule::Min)
            .with_property(CO2, gas("high"), MixRule::Max),
    )?;
    w.add_substance(
        Substance::new(AIR, "gas")
            .with_property(O2, gas("high"), MixRule::Min)
            .with_property(CO2, gas("low"), MixRule::Max),
    )?;
    w.define_kind(KindDef::new(BLOOD_PORTION, Granularity::Tissue).portion_of(BLOOD))?;
    w.define_kind(KindDef::new(AIR_PORTION, Granularity::Tissue).portion_of(AIR))?;
    w.define_kind(KindDef::new("Capillary", Granularity::Tissue))?;
    w.define_kind(KindDef::new("Medulla", Granularity::Organ))?;
    w.define_kind(
        KindDef::new("Diaphragm", Granularity::Organ).with_state(StateSpace::new(
            "Tension",
            ["relaxed", "contracted"],
            ScaleKind::Binary,
        )?),
    )?;
    for (id, kind) in [
        ("medulla", "Medulla"),
        ("diaphragm", "Diaphragm"),
        ("alveolarCapillary", "Capillary"),
        ("bodyCapillary", "Capillary"),
        ("medullaryCapillary", "Capillary"),
    ] {
        w.instantiate_object(kind, ObjectId::from(id))?;
    }

    let t = &mut w.topology;
    for name in BLOOD_COMPARTMENTS {
        let structure = match name {
            "AlvCap" => Some("alveolarCapillary"),
            "CellCap" => Some("bodyCapillary"),
            "MedullaCap" => Some("medullaryCapillary"),
            _ => None,
        };
        t.add_compartment(name, Medium::BloodPath, Some(1), structure.map(ObjectId::from), Some("body"))?;
    }
    t.add_compartment("ExternalAir", Medium::AirPath, None, None, Some("outside"))?;
    t.add_compartment("NoseAir", Medium::AirPath, Some(1), None, Some("airway"))?;
    t.add_compartment("AlvAir", Medium::AirPath, Some(1), None, Some("lung"))?;
    t.add_compartment("Medulla", Medium::Other, Some(1), Some(ObjectId::from("medulla")), Some("brainstem"))?;
    t.add_compartment("Diaphragm", Medium::Other, Some(1), Some(ObjectId::from("diaphragm")), Some("thorax"))?;

    let hops: [(&str, &[&str]); 7] = [
        ("LeftAtrium", &["LeftVentricle"]),
        ("LeftVentricle", &["MedullaCap", "CellCap"]),
        ("MedullaCap", &["RightAtrium"]),
        ("CellCap", &["RightAtrium"]),
        ("RightAtrium", &["RightVentricle"]),
        ("RightVentricle", &["AlvCap"]),
        ("AlvCap", &["LeftAtrium"]),
    ];
    for (from, tos) in hops {
        for to in tos {
            t.connect(from, to, ConduitKind::Fluid)?;
        }
    }
    for (a, b) in [("ExternalAir", "NoseAir"), ("NoseAir", "AlvAir")] {
        t.connect(a, b, ConduitKind::Fluid)?;
        t.connect(b, a, ConduitKind::Fluid)?;
    }
    t.connect("Medulla", "Diaphragm", ConduitKind::Nerve)?;
    t.add_circuit(Circuit {
        name: CIRCUIT.into(),
        hops: hops
            .iter()
            .map(|(from, tos)| Hop {
                from: from.to_string(),
                to: tos.iter().map(|s| s.to_string()).collect(),
            })
            .collect(),
        push_trace: "pushed {compartment}Blood".into(),
    })?;

    for name in BLOOD_COMPARTMENTS {
        let id = w.seed_portion(BLOOD, Some(BLOOD_PORTION), BTreeMap::new())?;
        w.place(id, name)?;
    }
    // the nose holds air only mid-breath
    for name in ["ExternalAir", "AlvAir"] {
        let id = w.seed_portion(AIR, Some(AIR_PORTION), BTreeMap::new())?;
        w.place(id, name)?;
    }
    Ok(w)
}

fn set(compartment: &str, property: &str, level: &str) -> Action {
    Action::SetPortionProperty {
        compartment: compartment.into(),
        property: property.into(),
        level: level.into(),
    }
}

fn transfer(moves: &[(&str, &str)], trace: &[&str]) -> Action {
    Action::Transfer {
        moves: moves
            .iter()
            .map(|(from, to)| Transfer {
                from: from.to_string(),
                to: to.to_string(),
            })
            .collect(),
        trace: trace.iter().map(|s| s.to_string()).collect(),
    }
}

fn tension(label: &str) -> Action {
    Action::SetState {
        entity: "diaphragm".into(),
        variable: "Tension".into(),
        label: label.into(),
    }
}

fn mechanisms() -> Vec<Mechanism> {
    vec![
        Mechanism::new("HeartbeatPush", "circulation", Guard::Always)
            .then(Action::trace("SANode pulse"))
            .then(Action::RingPush {
                circuit: CIRCUIT.into(),
            }),
        Mechanism::new(
            "GasExchangeAlv",
            "gas-exchange",
            Guard::all([
                Guard::portion_property("AlvCap", O2, "low"),
                Guard::portion_property("AlvAir", O2, "high"),
            ]),
        )
        .then(set("AlvCap", O2, "high"))
        .then(set("AlvCap", CO2, "low"))
        .then(set("AlvAir", O2, "low"))
        .then_side(set("AlvAir", CO2, "high"))
        .then(Action::trace("AlvCapBlood O2 diffusion")),
        Mechanism::new(
            "CellRespiration",
            "gas-exchange",
            Guard::portion_property("CellCap", O2, "high"),
        )
        .then(set("CellCap", O2, "low"))
        .then(set("CellCap", CO2, "high"))
        .then(Action::trace("CellCapBlood O2 diffusion")),
        Mechanism::new("DiffusionCheck", "gas-exchange", Guard::Always)
            .then(Action::trace("diffusion check"))
            .then(Action::TryFire {
                mechanism: "GasExchangeAlv".into(),
            })
            .then(Action::TryFire {
                mechanism: "CellRespiration".into(),
            }),
        Mechanism::new(
            "MedullaSense",
            "respiration",
            Guard::portion_property("MedullaCap", CO2, "high"),
        )
        .then(Action::trace("past phrenicNerve trigger"))
        .then(Action::EmitSignal {
            from: "Medulla".into(),
            to: "Diaphragm".into(),
            payload: "contract".into(),
        }),
        Mechanism::new("InhaleCycle", "respiration", Guard::Always)
            .then(Action::trace("inhale cycle"))
            .then(Action::TryFire {
                mechanism: "MedullaSense".into(),
            }),
        Mechanism::new("DiaphragmContract", "respiration", Guard::Always)
            .then(Action::trace("into diaphragm contract"))
            .then_side(tension("contracted"))
            .then(transfer(
                &[("ExternalAir", "NoseAir")],
                &["completed inhale ExternalAir to Nose Air"],
            ))
            .then(transfer(
                &[("NoseAir", "AlvAir"), ("AlvAir", "NoseAir")],
                &[
                    "completed inhale Nose Air to Alv Air",
                    "completed exhale Alv Air to Nose Air",
                ],
            ))
            .then(transfer(
                &[("NoseAir", "ExternalAir")],
                &["completed exhale Nose Air to ExternalAir"],
            ))
            .then_side(tension("relaxed")),
        Mechanism::new("MixExternalAir", "ambient", Guard::Always)
            .then(Action::trace("mixing external air"))
            .then(set("ExternalAir", O2, "high"))
            .then_side(set("ExternalAir", CO2, "low")),
    ]
}

pub fn build_cardio(config: &CardioConfig) -> Result<Model, ModelError> {
    let mut m = Model::new("cardio", world()?);
    m.frames = FrameRegistry::standard();
    for mech in mechanisms() {
        m.register_mechanism(mech)?;
    }
    for t in [
        Trigger::new("SANode", config.sa_node_period, config.sa_node_phase, "HeartbeatPush"),
        Trigger::new("Medulla", config.medulla_period, config.medulla_phase, "InhaleCycle"),
        Trigger::new("DiffusionTimer", config.diffusion_period, 0, "DiffusionCheck"),
        Trigger::new("AmbientMixer", config.mixer_period, 0, "MixExternalAir"),
    ] {
        m.add_trigger(t)?;
    }
    m.add_receptor(Receptor {
        at: "Diaphragm".into(),
        payload: "contract".into(),
        mechanism: "DiaphragmContract".into(),
    })?;
    for (name, members, feedback) in [
        ("circulation", &["HeartbeatPush"][..], false),
        ("respiration", &["InhaleCycle", "MedullaSense", "DiaphragmContract"][..], true),
        ("gas-exchange", &["DiffusionCheck", "GasExchangeAlv", "CellRespiration"][..], false),
    ] {
        m.add_system(System {
            name: name.into(),
            members: members.iter().map(|s| s.to_string()).collect(),
            feedback,
        })?;
    }
    for rule in standard_rules(&m.world) {
        m.rules.register_rule(rule)?;
    }
    m.rules.register_rule(AssertionRule::new(
        CONSERVATION_RULE,
        &[],
        &["?p isA BloodPortion"],
        Expectation::CountInSet([7].into()),
    )?)?;
    m.add_scenario(Scenario::heart_stop())?;
    m.assert_function(
        "diaphragm",
        "drives inhalation",
        Some(FunctionContext::System("respiration".into())),
    )?;
    m.assert_function(
        "medulla",
        "senses carbon dioxide",
        Some(FunctionContext::Mechanism("MedullaSense".into())),
    )?;
    for (kind, target, note) in [
        (
            AnnotationKind::Idealization,
            "ExternalAir",
            "an unbounded reservoir whose composition is restored by mixing",
        ),
        (
            AnnotationKind::Idealization,
            BLOOD_PORTION,
            "a portion of blood keeps its identity from one compartment to the next",
        ),
        (
            AnnotationKind::ContinuousApproximation,
            "GasExchangeAlv",
            "diffusion is a single swap of gas levels per check",
        ),
        (
            AnnotationKind::ContinuousApproximation,
            "CellRespiration",
            "oxygen use is a single step from high to low",
        ),
        (
            AnnotationKind::TypicalExample,
            "CellCap",
            "one capillary bed stands for every body tissue",
        ),
        (
            AnnotationKind::Simplification,
            "DiaphragmContract",
            "one contraction both inhales and exhales; nose and alveolar air trade places",
        ),
    ] {
        m.annotate(Annotation::new(kind, target, note))?;
    }
    Ok(m)
}

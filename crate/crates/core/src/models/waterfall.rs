//! The waterfall: portions of water run along an upper stream bed, drop over
//! the edge and collect in a pool.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::entity::{Granularity, KindDef, ObjectId, ScaleKind, StateSpace, Substance};
use crate::frames::{ElementValue, FlowOptions, FrameRegistry, PathSpec, Segment, Slope, FLUIDIC_MOTION};
use crate::mechanism::{Action, Guard, Mechanism, Trigger};
use crate::model::{Model, ModelError};
use crate::models::annotation::{Annotation, AnnotationKind};
use crate::models::scenario::Scenario;
use crate::validation::{standard_rules, AssertionRule, Expectation};
use crate::world::World;

pub const WATER: &str = "water";
pub const WATER_PORTION: &str = "WaterPortion";
pub const LOCATION: &str = "Location";
pub const LOCATIONS: [&str; 4] = ["null", "upper", "drop", "pool"];
pub const FLUIDITY_RULE: &str = "water-fluid-while-moving";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaterfallConfig {
    pub upper_bed_length: u32,
    pub vertical_drop: u32,
    /// Per-unit (dx, dy) along the upper bed.
    pub upper_delta: (i64, i64),
    /// Per-unit (dx, dy) over the drop.
    pub drop_delta: (i64, i64),
}

impl Default for WaterfallConfig {
    fn default() -> Self {
        WaterfallConfig {
            upper_bed_length: 1000,
            vertical_drop: 100,
            upper_delta: (10, -1),
            drop_delta: (1, -10),
        }
    }
}

impl WaterfallConfig {
    pub fn new(upper_bed_length: u32, vertical_drop: u32) -> Self {
        WaterfallConfig {
            upper_bed_length,
            vertical_drop,
            ..WaterfallConfig::default()
        }
    }

    fn check(&self) -> Result<(), ModelError> {
        if self.upper_bed_length == 0 || self.vertical_drop == 0 {
            return Err(ModelError::InvalidConfig(
                "waterfall lengths must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The two-segment path as a frame element.
    pub fn path(&self) -> PathSpec {
        let seg = |label: &str, length, (run, rise)| Segment {
            label: label.to_string(),
            length,
            width: 1,
            slope: Slope { rise, run },
        };
        PathSpec {
            segments: vec![
                seg("upper", self.upper_bed_length, self.upper_delta),
                seg("drop", self.vertical_drop, self.drop_delta),
            ],
        }
    }
}

fn world() -> Result<World, ModelError> {
    let mut w = World::new();
    w.add_substance(Substance::new(WATER, "liquid"))?;
    w.define_kind(
        KindDef::new(WATER_PORTION, Granularity::Landscape)
            .portion_of(WATER)
            .with_state(StateSpace::new(LOCATION, LOCATIONS, ScaleKind::Nominal)?),
    )?;
    w.define_kind(KindDef::new("StreamBed", Granularity::Landscape))?;
    w.define_kind(KindDef::new("Pool", Granularity::Landscape))?;
    w.instantiate_object("StreamBed", ObjectId::from("bedInlet"))?;
    w.instantiate_object("Pool", ObjectId::from("pool"))?;
    Ok(w)
}

fn births_guard(n_portions: Option<u32>) -> Guard {
    let fluid = Guard::fluid(WATER);
    match n_portions {
        Some(limit) => Guard::all([
            fluid,
            Guard::BirthsBelow {
                kind: WATER_PORTION.into(),
                limit,
            },
        ]),
        None => fluid,
    }
}

fn finish(mut m: Model, flow: &str) -> Result<Model, ModelError> {
    m.register_mechanism(
        Mechanism::new(
            "FreezeWater",
            "ambient",
            Guard::all([
                Guard::Ambient {
                    property: "temperature".into(),
                    level: "below_freezing".into(),
                },
                Guard::fluid(WATER),
            ]),
        )
        .then(Action::SetState {
            entity: WATER.into(),
            variable: crate::entity::PHASE_VARIABLE.into(),
            label: "solid".into(),
        }),
    )?;
    m.add_trigger(Trigger::new("AmbientFreeze", 1, 0, "FreezeWater"))?;
    m.add_trigger(Trigger::new("Flow", 1, 0, flow))?;
    for rule in standard_rules(&m.world) {
        m.rules.register_rule(rule)?;
    }
    m.rules.register_rule(AssertionRule::new(
        FLUIDITY_RULE,
        &[],
        &[
            "?s hasState:phase \"solid\"",
            "?p portionOf ?s",
            "?p hasState:Location \"upper\"|\"drop\"",
        ],
        Expectation::MustNotExist,
    )?)?;
    m.add_scenario(Scenario::freeze())?;
    m.annotate(Annotation::new(
        AnnotationKind::Idealization,
        WATER_PORTION,
        "a portion stays one piece from the top of the bed to the pool",
    ))?;
    m.annotate(Annotation::new(
        AnnotationKind::Simplification,
        flow,
        "portions travel one at a time; each reaches the pool before the next starts",
    ))?;
    m.stop_when_idle = true;
    Ok(m)
}

/// Hand-built waterfall: one firing carries one portion the whole way.
/// `None` lets portions flow without limit.
pub fn build_waterfall(config: &WaterfallConfig, n_portions: Option<u32>) -> Result<Model, ModelError> {
    config.check()?;
    let mut m = Model::new("waterfall", world()?);
    let (ux, uy) = config.upper_delta;
    let (dx, dy) = config.drop_delta;
    let step = |dx, dy, label: &str| {
        vec![
            Action::Displace { dx, dy },
            Action::SetSubjectState {
                variable: LOCATION.into(),
                label: label.into(),
            },
        ]
    };
    m.register_mechanism(
        Mechanism::new("WaterFlowing", "flow", births_guard(n_portions))
            .then(Action::SpawnPortion {
                kind: WATER_PORTION.into(),
            })
            .then(Action::Repeat {
                times: config.upper_bed_length,
                body: step(ux, uy, "upper"),
            })
            .then(Action::Repeat {
                times: config.vertical_drop,
                body: step(dx, dy, "drop"),
            })
            .then(Action::SetSubjectState {
                variable: LOCATION.into(),
                label: "pool".into(),
            })
            .then(Action::TraceSubject {
                template: "{index} pool".into(),
            }),
    )?;
    finish(m, "WaterFlowing")
}

/// The same waterfall built from a Fluidic_Motion binding: one firing moves
/// the current portion one unit.
pub fn build_waterfall_frames(
    config: &WaterfallConfig,
    n_portions: Option<u32>,
) -> Result<Model, ModelError> {
    config.check()?;
    let mut m = Model::new("waterfall-frames", world()?);
    m.frames = FrameRegistry::standard();
    let elements: BTreeMap<String, ElementValue> = [
        ("Fluid", ElementValue::Entity(WATER.into())),
        ("Source", ElementValue::Entity("bedInlet".into())),
        ("Goal", ElementValue::Entity("pool".into())),
        ("Path", ElementValue::Path(config.path())),
        (
            "Configuration",
            ElementValue::Params([("volume".to_string(), "high".to_string())].into()),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let binding = m.frames.bind(FLUIDIC_MOTION, elements, &m.world)?;
    let mechanism = m.frames.instantiate_fluidic_motion(
        binding,
        &m.world,
        &FlowOptions {
            mechanism: "FlowStep".into(),
            subsystem: "flow".into(),
            location_variable: LOCATION.into(),
            limit: n_portions,
        },
    )?;
    m.register_mechanism(mechanism)?;
    finish(m, "FlowStep")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_matches_config() {
        let c = WaterfallConfig::default();
        assert_eq!(c.path().displacement(), (10100, -2000));
        assert!(build_waterfall(&WaterfallConfig::new(0, 5), Some(1)).is_err());
    }

    #[test]
    fn both_builds_carry_idealization() {
        for m in [
            build_waterfall(&WaterfallConfig::default(), Some(1)).unwrap(),
            build_waterfall_frames(&WaterfallConfig::default(), Some(1)).unwrap(),
        ] {
            assert!(!m
                .list_annotations(None, Some(AnnotationKind::Idealization))
                .is_empty());
            m.check().unwrap();
        }
    }
}

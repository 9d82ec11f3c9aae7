//! Browser bindings. Each export takes plain numbers or text and returns a
//! JSON string: `{"ok": true, ...}` or `{"ok": false, "error": "..."}`.

use std::collections::BTreeMap;

use serde::Serialize;
use semsim_core::models::cardio::{build_cardio, CardioConfig, BLOOD, BLOOD_COMPARTMENTS, CO2, O2};
use semsim_core::models::waterfall::{build_waterfall_frames, WaterfallConfig, LOCATION, WATER_PORTION};
use semsim_core::{model_file, Kernel, KernelConfig, Policy, Scenario};
use wasm_bindgen::prelude::*;

/// Cap on steps per call so a page cannot lock up.
pub const MAX_STEPS: u64 = 200_000;

#[derive(Debug, Serialize, PartialEq)]
pub struct Point {
    pub step: u64,
    pub x: i64,
    pub y: i64,
    pub location: String,
}

#[derive(Debug, Serialize)]
pub struct WaterfallRun {
    pub trace: Vec<String>,
    /// Position of the first portion after every step it moved.
    pub path: Vec<Point>,
    pub finals: Vec<Point>,
    pub steps: u64,
}

/// Runs the frame-built waterfall one unit per step and records the first
/// portion's trajectory.
pub fn waterfall(upper_bed_length: u32, vertical_drop: u32, portions: u32) -> Result<WaterfallRun, String> {
    let config = WaterfallConfig::new(upper_bed_length, vertical_drop);
    let per_portion = u64::from(upper_bed_length) + u64::from(vertical_drop);
    if per_portion * u64::from(portions) > MAX_STEPS {
        return Err(format!("run too long; keep (length + drop) x portions under {MAX_STEPS}"));
    }
    let model = build_waterfall_frames(&config, Some(portions)).map_err(|e| e.to_string())?;
    let mut kernel = Kernel::new(model, KernelConfig::default());
    let mut path = Vec::new();
    loop {
        let report = kernel.step().map_err(|e| e.to_string())?;
        let (step, idle) = (report.step, report.is_idle());
        let first = kernel
            .model()
            .world
            .live_portions()
            .find(|p| p.kind.as_deref() == Some(WATER_PORTION) && p.birth_index == Some(0));
        if let Some(p) = first {
            let c = p.coords.unwrap_or_default();
            let point = Point {
                step,
                x: c.x,
                y: c.y,
                location: p.states[LOCATION].clone(),
            };
            if path.last().is_none_or(|last: &Point| (last.x, last.y) != (point.x, point.y)) {
                path.push(point);
            }
        }
        if idle {
            break;
        }
    }
    let w = &kernel.model().world;
    let mut finals: Vec<_> = w
        .live_portions()
        .filter(|p| p.kind.as_deref() == Some(WATER_PORTION))
        .collect();
    finals.sort_by_key(|p| p.birth_index);
    Ok(WaterfallRun {
        trace: kernel.trace().iter().map(|e| e.line.clone()).collect(),
        path,
        finals: finals
            .iter()
            .map(|p| {
                let c = p.coords.unwrap_or_default();
                Point {
                    step: kernel.tick(),
                    x: c.x,
                    y: c.y,
                    location: p.states[LOCATION].clone(),
                }
            })
            .collect(),
        steps: kernel.tick(),
    })
}

#[derive(Debug, Serialize)]
pub struct Line {
    pub step: u64,
    pub line: String,
}

#[derive(Debug, Serialize)]
pub struct CardioRun {
    pub trace: Vec<Line>,
    /// `[O2, CO2]` of the blood in each compartment at the end.
    pub blood: BTreeMap<String, [String; 2]>,
    pub blood_portions: usize,
    pub violations: Vec<String>,
    pub heart_stopped_at: Option<u64>,
}

/// Runs the cardiopulmonary model, optionally stopping the heart at a tick.
pub fn cardio(steps: u64, heart_stop_at: Option<u64>) -> Result<CardioRun, String> {
    if steps > MAX_STEPS {
        return Err(format!("at most {MAX_STEPS} steps"));
    }
    let model = build_cardio(&CardioConfig::default()).map_err(|e| e.to_string())?;
    let config = KernelConfig {
        policy: Policy::Warn,
        ..KernelConfig::default()
    };
    let mut kernel = Kernel::new(model, config);
    if let Some(at) = heart_stop_at {
        kernel
            .schedule_scenario(Scenario::heart_stop().at(at))
            .map_err(|e| e.to_string())?;
    }
    kernel.run(Some(steps)).map_err(|e| e.to_string())?;
    let w = &kernel.model().world;
    let mut blood = BTreeMap::new();
    for name in BLOOD_COMPARTMENTS {
        if let Some(p) = w.topology.compartments[name]
            .contents
            .first()
            .and_then(|id| w.portion(*id).ok())
        {
            let level = |prop: &str| p.property(prop).unwrap_or("?").to_string();
            blood.insert(name.to_string(), [level(O2), level(CO2)]);
        }
    }
    Ok(CardioRun {
        trace: kernel
            .trace()
            .iter()
            .map(|e| Line {
                step: e.step,
                line: e.line.clone(),
            })
            .collect(),
        blood,
        blood_portions: w.live_portions().filter(|p| p.substance == BLOOD).count(),
        violations: kernel
            .reports()
            .iter()
            .flat_map(|r| r.validation.violations.iter().map(move |v| format!("step {}: {v}", r.step)))
            .collect(),
        heart_stopped_at: kernel
            .reports()
            .iter()
            .find(|r| !r.scenarios.is_empty())
            .map(|r| r.step),
    })
}

#[derive(Debug, Serialize)]
pub struct ModelCheck {
    pub name: String,
    pub mechanisms: Vec<String>,
    pub triggers: usize,
    pub rules: Vec<String>,
    pub vocabulary: Vec<String>,
}

/// Loads a model file's text and summarizes it, or reports the first error
/// with its location.
pub fn check_model(text: &str) -> Result<ModelCheck, String> {
    let m = model_file::from_json(text).map_err(|e| e.to_string())?;
    Ok(ModelCheck {
        name: m.name.clone(),
        mechanisms: m.mechanisms.keys().cloned().collect(),
        triggers: m.triggers.len(),
        rules: m.rules.rules().iter().map(|r| r.name.clone()).collect(),
        vocabulary: m.vocabulary(),
    })
}

/// The bundled cardio model as a model file, to seed the editor.
pub fn cardio_model_text() -> String {
    let m = build_cardio(&CardioConfig::default()).expect("bundled model builds");
    model_file::to_json(&m)
}

fn respond<T: Serialize>(result: Result<T, String>) -> String {
    let value = match result {
        Ok(body) => {
            let mut v = serde_json::to_value(body).expect("results serialize");
            v["ok"] = true.into();
            v
        }
        Err(error) => serde_json::json!({ "ok": false, "error": error }),
    };
    value.to_string()
}

#[wasm_bindgen(js_name = runWaterfall)]
pub fn run_waterfall(upper_bed_length: u32, vertical_drop: u32, portions: u32) -> String {
    respond(waterfall(upper_bed_length, vertical_drop, portions))
}

/// `heart_stop_at` below zero means never.
#[wasm_bindgen(js_name = runCardio)]
pub fn run_cardio(steps: u32, heart_stop_at: i32) -> String {
    let at = u64::try_from(heart_stop_at).ok();
    respond(cardio(u64::from(steps), at))
}

#[wasm_bindgen(js_name = checkModel)]
pub fn check_model_text(text: &str) -> String {
    respond(check_model(text))
}

#[wasm_bindgen(js_name = cardioModel)]
pub fn cardio_model() -> String {
    cardio_model_text()
}

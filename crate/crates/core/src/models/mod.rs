//! Reference models and the ambient, scenario and annotation machinery
//! around them.

pub mod annotation;
pub mod cardio;
pub mod microworld;
pub mod scenario;
pub mod waterfall;

use crate::model::{Model, ModelError};

/// Names accepted by [`builtin`].
pub const BUILTIN_MODELS: [&str; 3] = ["waterfall", "waterfall-frames", "cardio"];

/// Builds a bundled model by name. `portions` bounds the waterfall.
pub fn builtin(name: &str, portions: Option<u32>) -> Option<Result<Model, ModelError>> {
    use cardio::{build_cardio, CardioConfig};
    use waterfall::{build_waterfall, build_waterfall_frames, WaterfallConfig};
    match name {
        "waterfall" => Some(build_waterfall(&WaterfallConfig::default(), portions)),
        "waterfall-frames" => Some(build_waterfall_frames(&WaterfallConfig::default(), portions)),
        "cardio" => Some(build_cardio(&CardioConfig::default())),
        _ => None,
    }
}

//! Executable semantic models.
//!
//! Typed entities with parts and qualitative states live in a [`World`].
//! Portions of substances move over a compartment graph in staged batches.
//! Guarded [`Mechanism`]s fire from periodic triggers and nerve-style
//! signals inside a [`Kernel`], and each kernel step ends with a triple
//! snapshot checked against assertion rules. Frame definitions can be bound
//! onto mechanism templates.
//!
//! ```
//! use semsim_core::{builtin, Kernel, KernelConfig};
//!
//! let model = builtin("waterfall", Some(2)).unwrap().unwrap();
//! let mut kernel = Kernel::new(model, KernelConfig::default());
//! kernel.run(None).unwrap();
//! let lines: Vec<&str> = kernel.trace().iter().map(|e| e.line.as_str()).collect();
//! assert_eq!(lines, ["0 pool", "1 pool"]);
//! ```

pub mod entity;
pub mod frames;
pub mod kernel;
pub mod mechanism;
pub mod model;
pub mod model_file;
pub mod models;
pub mod topology;
pub mod validation;
pub mod world;

pub use entity::{EntityError, EntityRef, PortionId, QualValue};
pub use kernel::{Kernel, KernelConfig, KernelError, Mode, StepReport, TraceEvent};
pub use mechanism::{Action, Guard, Mechanism, Trigger};
pub use model::{Model, ModelError};
pub use model_file::{load_model_file, load_scenario_file, save_model_file, ModelFileError};
pub use models::builtin;
pub use models::scenario::Scenario;
pub use validation::Policy;
pub use world::World;

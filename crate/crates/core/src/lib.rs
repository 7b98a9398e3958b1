//! Text-only reference resolution toolkit.
//!
//! Screens and entity lists are turned into plain-text multiple-choice
//! prompts, a resolver picks the entity numbers the user request refers to,
//! and answers are scored by exact set match.
//!
//! - [`screen`]: screens, entities, datapoints
//! - [`dataset`]: JSONL dataset reading and writing
//! - [`layout`]: spatial screen parse with injected entity markers
//! - [`cluster`]: clustering-based screen encoding (comparison baseline)
//! - [`textualize`]: one-line entity representations
//! - [`prompt`]: prompt assembly and seeded candidate shuffling
//! - [`synth`]: template-based synthetic data
//! - [`eval`]: prediction parsing, scoring, resolvers and reports

pub mod cluster;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod layout;
pub mod prompt;
pub mod screen;
pub mod synth;
pub mod textualize;

pub use error::{Error, Result};
pub use screen::{bbox_center, BBox, DataKind, DataPoint, Entity, EntityType, Point, ScreenObject};

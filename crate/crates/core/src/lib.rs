//! Cost-sensitive active learning for volumetric heatmap annotation:
//! committee training and disagreement scoring, labeling-time modeling,
//! budgeted batch selection, evaluation metrics, and a synthetic-data
//! experiment harness.

pub mod committee;
pub mod cost;
pub mod data;
pub mod error;
pub mod heatmap;
pub mod metrics;
pub mod selection;
pub mod sim;
pub mod uncertainty;
pub mod util;

pub use error::{Error, Result};

//! Chart recommendation by statistics recovery.
//!
//! For a numeric two-column table the engine renders scatter, line and
//! density charts, lets a per-chart-type convolutional regressor read the
//! table's summary statistics back off each image, and recommends the chart
//! whose reading is closest to the truth. The [`eval`] module scores
//! recommendations against human judgments.

pub mod error;
pub mod eval;
pub mod pipeline;
pub mod regressor;
pub mod render;
pub mod select;
pub mod stats;
pub mod synth;
pub mod table;

pub use error::{Error, Result, Stage};
pub use regressor::{ConvRegressor, ModelBundle, TrainConfig};
pub use render::{PlotImage, RenderConfig};
pub use select::{Recommendation, Scoring, SelectionScore};
pub use stats::FeatureVector;
pub use table::{DataTable, DatasetSplit, PlotType};

//! Long-tailed multi-label chest X-ray classification: a unified label
//! registry, masked-loss training with staged transfer, category-wise
//! average precision and score ensembling.

pub mod dataset;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod presets;
pub mod registry;
pub mod scores;
pub mod toy;

pub use dataset::{AnnotationState, DatasetTable, ImageArray, SampleRecord};
pub use engine::{Architecture, Checkpoint, Model, Network, StageConfig};
pub use ensemble::average_scores;
pub use error::{Error, Result};
pub use metrics::{average_precision, evaluate, CategoryName, CategorySpec, EvalReport};
pub use registry::{build_registry, Category, CategoryMap, CategoryThresholds, LabelRegistry};
pub use scores::ScoreMatrix;

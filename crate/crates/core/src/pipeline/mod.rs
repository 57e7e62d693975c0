//! Config-driven pipeline runs, comparison tables and plots.

pub mod config;
pub mod plot;
pub mod run;
pub mod table;

pub use config::{DatasetConfig, EnsembleConfig, EvaluationConfig, ModelConfig, PipelineConfig};
pub use plot::{category_deltas, plot_delta, plot_distribution, DistributionPlot};
pub use run::{create_run_dir, run_pipeline, RunOptions, RunSummary, StageArtifact, INCOMPLETE_MARKER, PARTIAL_MARKER};
pub use table::{build_table, render_table, ApTable, TableRow};

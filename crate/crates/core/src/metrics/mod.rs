//! Average precision, category macro-means and prevalence baselines.

mod ap;
pub mod oracle;
mod report;

pub use ap::{average_precision, ranking};
pub use oracle::ap_bruteforce_oracle;
pub use report::{
    evaluate, prevalence_baseline, CategoryMean, CategoryName, CategorySpec, EvalReport, Exclusion,
    ExclusionReason, LabelInput, LabelResult,
};

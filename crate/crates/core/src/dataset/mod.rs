//! Manifest ingestion, patient-level splits, dataset merging, synthetic
//! mixing, image loading and prompt manifests.

mod annotation;
pub mod image;
pub mod manifest;
pub mod prompts;
pub mod split;
pub mod synthetic;
mod table;

pub use annotation::AnnotationState;
pub use image::{load_image, ImageArray, Normalization};
pub use manifest::{parse_manifest, parse_synthetic_manifest, write_manifest, ManifestKind};
pub use prompts::{generate_prompts, PromptEntry, PromptManifest, PromptRequest, ReportTemplate, TemplateSlot};
pub use split::{patient_split, SplitAssignment, SplitRatio};
pub use synthetic::mix_synthetic;
pub use table::{merge_datasets, DatasetTable, SampleRecord, SYNTHETIC_PATIENT_PREFIX};

//! Label vocabularies of the public chest X-ray datasets used for chained
//! pretraining (NIH ChestX-ray14, CheXpert, PadChest) and the MIMIC-CXR
//! long-tail target.

use crate::error::Result;
use crate::registry::{build_registry, AliasTable, DatasetDescriptor, LabelRegistry};

pub const MIMIC: &str = "mimic";
pub const NIH: &str = "nih";
pub const CHEXPERT: &str = "chexpert";
pub const PADCHEST: &str = "padchest";

/// MIMIC-CXR long-tail labels with their share of all positive annotations,
/// ordered by decreasing frequency.
pub const MIMIC_LABELS: [(&str, f64); 26] = [
    ("Support Devices", 0.1403),
    ("Lung Opacity", 0.1258),
    ("Cardiomegaly", 0.1210),
    ("Pleural Effusion", 0.1089),
    ("Atelectasis", 0.1064),
    ("Pneumonia", 0.0757),
    ("No Finding", 0.0659),
    ("Edema", 0.0607),
    ("Enlarged Cardiomediastinum", 0.0474),
    ("Consolidation", 0.0252),
    ("Pneumothorax", 0.0236),
    ("Fracture", 0.0187),
    ("Infiltration", 0.0161),
    ("Nodule", 0.0121),
    ("Mass", 0.0087),
    ("Emphysema", 0.0067),
    ("Hernia", 0.0064),
    ("Pleural Thickening", 0.0053),
    ("Lung Lesion", 0.0040),
    ("Fibrosis", 0.0018),
    ("Pleural Other", 0.0011),
    ("Calcification of the Aorta", 0.0069),
    ("Tortuous Aorta", 0.0055),
    ("Subcutaneous Emphysema", 0.0039),
    ("Pneumomediastinum", 0.0012),
    ("Pneumoperitoneum", 0.0009),
];

/// Total positive annotations used to turn shares into approximate counts.
/// Any value in (632912, 826446) yields the same Head/Medium/Tail grouping
/// under the 30000/10000 thresholds.
pub const MIMIC_POSITIVE_TOTAL: f64 = 700_000.0;

pub const NIH_LABELS: [&str; 15] = [
    "Atelectasis",
    "Cardiomegaly",
    "Effusion",
    "Infiltration",
    "Mass",
    "Nodule",
    "Pneumonia",
    "Pneumothorax",
    "Consolidation",
    "Edema",
    "Emphysema",
    "Fibrosis",
    "Pleural_Thickening",
    "Hernia",
    "No Finding",
];

pub const CHEXPERT_LABELS: [&str; 14] = [
    "No Finding",
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
];

/// PadChest after merging its granular findings into coarse labels.
pub const PADCHEST_LABELS: [&str; 16] = [
    "No Finding",
    "Support Devices",
    "Cardiomegaly",
    "Pleural Effusion",
    "Atelectasis",
    "Pneumonia",
    "Infiltration",
    "Nodule",
    "Mass",
    "Emphysema",
    "Hernia",
    "Pleural Thickening",
    "Fracture",
    "Consolidation",
    "Pneumothorax",
    "Edema",
];

pub fn cxr_aliases() -> AliasTable {
    AliasTable::from_pairs([
        ("Effusion", "Pleural Effusion"),
        ("Pleural_Thickening", "Pleural Thickening"),
        ("thickened pleura", "Pleural Thickening"),
        ("aortic calcification", "Calcification of the Aorta"),
    ])
}

/// Approximate MIMIC positive counts reconstructed from label shares.
pub fn mimic_counts() -> Vec<u64> {
    MIMIC_LABELS
        .iter()
        .map(|(_, share)| (share * MIMIC_POSITIVE_TOTAL).round() as u64)
        .collect()
}

/// 26-label registry: MIMIC first (so columns follow its frequency order),
/// then the three pretraining datasets.
pub fn cxr_registry() -> Result<LabelRegistry> {
    let mimic: Vec<&str> = MIMIC_LABELS.iter().map(|(l, _)| *l).collect();
    build_registry(
        &[
            DatasetDescriptor::new(MIMIC, &mimic).with_counts(&mimic_counts()),
            DatasetDescriptor::new(NIH, &NIH_LABELS),
            DatasetDescriptor::new(CHEXPERT, &CHEXPERT_LABELS),
            DatasetDescriptor::new(PADCHEST, &PADCHEST_LABELS),
        ],
        &cxr_aliases(),
    )
}

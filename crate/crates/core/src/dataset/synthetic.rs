use super::table::{merge_datasets, DatasetTable};
use crate::error::{Error, Result};
use crate::registry::{Category, CategoryMap};

/// Appends generated samples to a real table.
///
/// Every synthetic record must be flagged synthetic and carry at least one
/// Positive label from the Tail category. Offending rows (0-based, within
/// `synthetic`) are all reported together; nothing is dropped silently.
pub fn mix_synthetic(
    real: &DatasetTable,
    synthetic: &DatasetTable,
    categories: &CategoryMap,
) -> Result<DatasetTable> {
    let bad: Vec<usize> = synthetic
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            !r.synthetic
                || !r.annotations.iter().enumerate().any(|(j, a)| {
                    a.is_positive() && categories.category(j) == Some(Category::Tail)
                })
        })
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Validation {
            message: "synthetic records need the synthetic flag and a Positive tail label".into(),
            rows: bad,
        });
    }
    merge_datasets(&[real.clone(), synthetic.clone()])
}

/// The first `limit` synthetic records, or all of them.
pub fn take_synthetic(synthetic: &DatasetTable, limit: Option<usize>) -> DatasetTable {
    match limit {
        Some(n) if n < synthetic.len() => synthetic.subset(0..n),
        _ => synthetic.clone(),
    }
}

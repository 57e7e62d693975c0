use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use ndarray::Array2;

use super::AnnotationState;
use crate::error::{Error, Result};
use crate::registry::{LabelRegistry, RegistryId};

/// Prefix of patient ids assigned to generated samples.
pub const SYNTHETIC_PATIENT_PREFIX: &str = "synthetic:";

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    /// Path exactly as written in the manifest.
    pub image_path: String,
    /// `image_path` resolved against the manifest's directory.
    pub image_ref: PathBuf,
    pub patient_id: String,
    pub dataset: String,
    pub view: Option<String>,
    pub synthetic: bool,
    pub annotations: Vec<AnnotationState>,
}

impl SampleRecord {
    pub fn known_count(&self) -> usize {
        self.annotations.iter().filter(|a| a.is_known()).count()
    }
}

/// Ordered records sharing one registry binding.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    records: Vec<SampleRecord>,
    registry: RegistryId,
    n_labels: usize,
}

impl DatasetTable {
    pub fn new(registry: &LabelRegistry, records: Vec<SampleRecord>) -> Result<Self> {
        Self::from_parts(registry.id().clone(), registry.len(), records)
    }

    pub(crate) fn from_parts(
        registry: RegistryId,
        n_labels: usize,
        records: Vec<SampleRecord>,
    ) -> Result<Self> {
        if let Some((i, r)) = records
            .iter()
            .enumerate()
            .find(|(_, r)| r.annotations.len() != n_labels)
        {
            return Err(Error::Contract(format!(
                "record {i} ({}) has {} annotations, registry has {n_labels} labels",
                r.image_path,
                r.annotations.len()
            )));
        }
        Ok(DatasetTable {
            records,
            registry,
            n_labels,
        })
    }

    pub fn empty(registry: &LabelRegistry) -> Self {
        DatasetTable {
            records: Vec::new(),
            registry: registry.id().clone(),
            n_labels: registry.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn record(&self, idx: usize) -> &SampleRecord {
        &self.records[idx]
    }

    pub fn registry_id(&self) -> &RegistryId {
        &self.registry
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn check_registry(&self, registry: &LabelRegistry) -> Result<()> {
        if &self.registry != registry.id() || self.n_labels != registry.len() {
            return Err(Error::Incompatible(format!(
                "table bound to registry {} but {} was given",
                self.registry,
                registry.id()
            )));
        }
        Ok(())
    }

    /// N x L annotation matrix in record order.
    pub fn annotation_matrix(&self) -> Array2<AnnotationState> {
        let mut m = Array2::from_elem((self.len(), self.n_labels), AnnotationState::Unknown);
        for (i, r) in self.records.iter().enumerate() {
            for (j, &a) in r.annotations.iter().enumerate() {
                m[[i, j]] = a;
            }
        }
        m
    }

    /// New table holding the given records, in the given order.
    pub fn subset(&self, indices: impl IntoIterator<Item = usize>) -> DatasetTable {
        DatasetTable {
            records: indices.into_iter().map(|i| self.records[i].clone()).collect(),
            registry: self.registry.clone(),
            n_labels: self.n_labels,
        }
    }

    /// Positive count per label over records of `dataset` (all records if `None`).
    pub fn positive_counts(&self, dataset: Option<&str>) -> BTreeMap<usize, u64> {
        let mut counts = BTreeMap::new();
        for r in self
            .records
            .iter()
            .filter(|r| dataset.map_or(true, |d| r.dataset == d))
        {
            for (j, a) in r.annotations.iter().enumerate() {
                if a.is_positive() {
                    *counts.entry(j).or_insert(0) += 1;
                }
            }
        }
        counts
    }

    pub fn datasets(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.dataset.as_str()).collect()
    }

    pub fn patients(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.patient_id.as_str()).collect()
    }

    pub fn synthetic_count(&self) -> usize {
        self.records.iter().filter(|r| r.synthetic).count()
    }
}

/// Concatenates tables in order. Every record keeps its source dataset.
pub fn merge_datasets(tables: &[DatasetTable]) -> Result<DatasetTable> {
    let first = tables
        .first()
        .ok_or_else(|| Error::Contract("merge_datasets needs at least one table".into()))?;
    let mut records = Vec::with_capacity(tables.iter().map(DatasetTable::len).sum());
    for (i, t) in tables.iter().enumerate() {
        if t.registry != first.registry || t.n_labels != first.n_labels {
            return Err(Error::Incompatible(format!(
                "table {i} is bound to registry {}, table 0 to {}",
                t.registry, first.registry
            )));
        }
        records.extend(t.records.iter().cloned());
    }
    Ok(DatasetTable {
        records,
        registry: first.registry.clone(),
        n_labels: first.n_labels,
    })
}

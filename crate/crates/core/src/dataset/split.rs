//! Patient-level splitting. All images of one patient land in the same split.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::DatasetTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatio {
    pub name: String,
    pub fraction: f64,
}

impl SplitRatio {
    pub fn new(name: impl Into<String>, fraction: f64) -> Self {
        SplitRatio {
            name: name.into(),
            fraction,
        }
    }
}

/// `[("train", 0.9), ("val", 0.1)]`
pub fn ratios(pairs: &[(&str, f64)]) -> Vec<SplitRatio> {
    pairs.iter().map(|(n, f)| SplitRatio::new(*n, *f)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSplit {
    pub name: String,
    pub records: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub splits: Vec<NamedSplit>,
}

impl SplitAssignment {
    pub fn get(&self, name: &str) -> Result<&BTreeSet<usize>> {
        self.splits
            .iter()
            .find(|s| s.name == name)
            .map(|s| &s.records)
            .ok_or_else(|| Error::Lookup(format!("no split named `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.splits.iter().map(|s| s.name.as_str())
    }

    /// Records of split `name` as a table, in original order.
    pub fn table(&self, table: &DatasetTable, name: &str) -> Result<DatasetTable> {
        Ok(table.subset(self.get(name)?.iter().copied()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split assignment serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("<splits>", e))
    }
}

fn validate_ratios(ratios: &[SplitRatio]) -> Result<()> {
    if ratios.is_empty() {
        return Err(Error::Split("no split ratios given".into()));
    }
    let mut names = BTreeSet::new();
    for r in ratios {
        if !(r.fraction > 0.0 && r.fraction.is_finite()) {
            return Err(Error::Split(format!("split `{}` has fraction {}", r.name, r.fraction)));
        }
        if !names.insert(r.name.as_str()) {
            return Err(Error::Split(format!("split `{}` named twice", r.name)));
        }
    }
    let total: f64 = ratios.iter().map(|r| r.fraction).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("split fractions sum to {total}, not 1")));
    }
    Ok(())
}

/// Patient counts per split: largest-remainder rounding of `n * fraction`,
/// then each empty split takes one patient from the currently largest split.
pub fn split_sizes(n: usize, ratios: &[SplitRatio]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r.fraction * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    // Stable sort keeps earlier splits first among equal remainders.
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra)
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    for i in 0..sizes.len() {
        if sizes[i] == 0 {
            let largest = (0..sizes.len())
                .max_by_key(|&j| (sizes[j], std::cmp::Reverse(j)))
                .expect("non-empty");
            if sizes[largest] > 1 {
                sizes[largest] -= 1;
                sizes[i] += 1;
            }
        }
    }
    sizes
}

/// Shuffles patients with a seeded ChaCha8 stream and partitions them by
/// `ratios`. Synthetic records are not split; they all go to the first split.
pub fn patient_split(table: &DatasetTable, ratios: &[SplitRatio], seed: u64) -> Result<SplitAssignment> {
    validate_ratios(ratios)?;

    let mut by_patient: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut synthetic = Vec::new();
    for (i, r) in table.records().iter().enumerate() {
        if r.synthetic {
            synthetic.push(i);
        } else {
            by_patient.entry(r.patient_id.as_str()).or_default().push(i);
        }
    }
    let mut patients: Vec<&str> = by_patient.keys().copied().collect();
    if patients.len() < ratios.len() {
        return Err(Error::Split(format!(
            "{} patients cannot fill {} splits",
            patients.len(),
            ratios.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    patients.shuffle(&mut rng);

    let sizes = split_sizes(patients.len(), ratios);
    let mut splits = Vec::with_capacity(ratios.len());
    let mut cursor = 0;
    for (ratio, size) in ratios.iter().zip(sizes) {
        let records: BTreeSet<usize> = patients[cursor..cursor + size]
            .iter()
            .flat_map(|p| by_patient[p].iter().copied())
            .collect();
        cursor += size;
        splits.push(NamedSplit {
            name: ratio.name.clone(),
            records,
        });
    }
    splits[0].records.extend(synthetic);
    Ok(SplitAssignment { seed, splits })
}

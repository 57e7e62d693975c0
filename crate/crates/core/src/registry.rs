//! Unioned label vocabulary across datasets and Head/Medium/Tail categorization.
//!
//! The registry fixes the column index of every label. All tables, score
//! matrices and reports are bound to it through [`RegistryId`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{read_to_string, write_file, Error, Result};

/// Case-insensitive, whitespace-trimmed form used for all label matching.
pub fn canonical_key(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Fingerprint of a registry's ordered label list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegistryId(pub String);

impl RegistryId {
    pub fn of_labels(labels: &[String]) -> Self {
        let mut hasher = Sha256::new();
        for label in labels {
            hasher.update(label.as_bytes());
            hasher.update([0u8]);
        }
        let digest = hasher.finalize();
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        RegistryId(hex)
    }
}

impl fmt::Display for RegistryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Explicit synonym table: alias spelling -> registry label spelling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AliasTable(BTreeMap<String, String>);

impl AliasTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, alias: impl Into<String>, label: impl Into<String>) {
        self.0.insert(alias.into(), label.into());
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut table = Self::new();
        for (alias, label) in pairs {
            table.insert(alias, label);
        }
        table
    }

    /// Resolves one level of aliasing; non-aliases come back trimmed.
    pub fn resolve(&self, name: &str) -> String {
        let key = canonical_key(name);
        self.0
            .iter()
            .find(|(alias, _)| canonical_key(alias) == key)
            .map(|(_, label)| label.trim().to_string())
            .unwrap_or_else(|| name.trim().to_string())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetDescriptor {
    pub name: String,
    pub labels: Vec<String>,
    /// Positive counts aligned with `labels`; empty means all zero.
    pub counts: Vec<u64>,
}

impl DatasetDescriptor {
    pub fn new(name: impl Into<String>, labels: &[&str]) -> Self {
        DatasetDescriptor {
            name: name.into(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            counts: Vec::new(),
        }
    }

    pub fn with_counts(mut self, counts: &[u64]) -> Self {
        self.counts = counts.to_vec();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub name: String,
    pub coverage: BTreeSet<usize>,
    pub counts: BTreeMap<usize, u64>,
}

#[derive(Debug, Clone)]
pub struct LabelRegistry {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    aliases: AliasTable,
    datasets: Vec<DatasetEntry>,
    id: RegistryId,
}

impl PartialEq for LabelRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
            && self.aliases == other.aliases
            && self.datasets == other.datasets
    }
}

/// Unions the label sets of `descriptors` in first-seen order.
pub fn build_registry(descriptors: &[DatasetDescriptor], aliases: &AliasTable) -> Result<LabelRegistry> {
    if descriptors.is_empty() {
        return Err(Error::Config("no datasets given to build the label registry".into()));
    }
    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut datasets: Vec<DatasetEntry> = Vec::new();

    for desc in descriptors {
        if desc.name.trim().is_empty() {
            return Err(Error::Config("dataset with empty name".into()));
        }
        if datasets.iter().any(|d| d.name == desc.name) {
            return Err(Error::Config(format!("duplicate dataset name `{}`", desc.name)));
        }
        if !desc.counts.is_empty() && desc.counts.len() != desc.labels.len() {
            return Err(Error::Config(format!(
                "dataset `{}`: {} counts for {} labels",
                desc.name,
                desc.counts.len(),
                desc.labels.len()
            )));
        }
        let mut entry = DatasetEntry {
            name: desc.name.clone(),
            coverage: BTreeSet::new(),
            counts: BTreeMap::new(),
        };
        for (pos, raw) in desc.labels.iter().enumerate() {
            let name = aliases.resolve(raw);
            if name.is_empty() {
                return Err(Error::Config(format!("dataset `{}`: empty label name", desc.name)));
            }
            let key = canonical_key(&name);
            let idx = *index.entry(key).or_insert_with(|| {
                labels.push(name.clone());
                labels.len() - 1
            });
            if !entry.coverage.insert(idx) {
                return Err(Error::Config(format!(
                    "dataset `{}`: label `{}` listed twice",
                    desc.name, raw
                )));
            }
            entry
                .counts
                .insert(idx, desc.counts.get(pos).copied().unwrap_or(0));
        }
        datasets.push(entry);
    }

    let id = RegistryId::of_labels(&labels);
    Ok(LabelRegistry {
        labels,
        index,
        aliases: aliases.clone(),
        datasets,
        id,
    })
}

impl LabelRegistry {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn id(&self) -> &RegistryId {
        &self.id
    }

    pub fn aliases(&self) -> &AliasTable {
        &self.aliases
    }

    /// Column index of `name`, after alias resolution and canonical matching.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        let resolved = self.aliases.resolve(name);
        self.index.get(&canonical_key(&resolved)).copied()
    }

    pub fn datasets(&self) -> &[DatasetEntry] {
        &self.datasets
    }

    pub fn dataset(&self, name: &str) -> Result<&DatasetEntry> {
        self.datasets
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::Lookup(format!("dataset `{name}` is not registered")))
    }

    pub fn coverage(&self, name: &str) -> Result<&BTreeSet<usize>> {
        Ok(&self.dataset(name)?.coverage)
    }

    /// Copy with `dataset`'s positive counts replaced. Labels and indices are unchanged.
    pub fn with_counts(&self, dataset: &str, counts: &BTreeMap<usize, u64>) -> Result<LabelRegistry> {
        let mut next = self.clone();
        let entry = next
            .datasets
            .iter_mut()
            .find(|d| d.name == dataset)
            .ok_or_else(|| Error::Lookup(format!("dataset `{dataset}` is not registered")))?;
        for (&idx, &count) in counts {
            if !entry.coverage.contains(&idx) {
                return Err(Error::Config(format!(
                    "count given for label `{}` which dataset `{dataset}` does not annotate",
                    self.labels.get(idx).map(String::as_str).unwrap_or("?")
                )));
            }
            entry.counts.insert(idx, count);
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryThresholds {
    /// Counts strictly above this are Head.
    pub head_min: u64,
    /// Counts at or above this (and not Head) are Medium.
    pub medium_min: u64,
}

impl CategoryThresholds {
    pub fn new(head_min: u64, medium_min: u64) -> Result<Self> {
        let t = CategoryThresholds { head_min, medium_min };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.medium_min == 0 || self.head_min < self.medium_min {
            return Err(Error::Config(format!(
                "category thresholds need head_min >= medium_min > 0, got {} / {}",
                self.head_min, self.medium_min
            )));
        }
        Ok(())
    }

    /// MIMIC-CXR long-tail thresholds.
    pub fn mimic() -> Self {
        CategoryThresholds { head_min: 30_000, medium_min: 10_000 }
    }

    /// NIH ChestX-ray14; PadChest uses the same values.
    pub fn nih() -> Self {
        CategoryThresholds { head_min: 10_000, medium_min: 5_000 }
    }

    pub fn chexpert() -> Self {
        CategoryThresholds { head_min: 25_000, medium_min: 10_000 }
    }

    pub fn classify(&self, count: u64) -> Category {
        if count > self.head_min {
            Category::Head
        } else if count >= self.medium_min {
            Category::Medium
        } else {
            Category::Tail
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Head,
    Medium,
    Tail,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Head, Category::Medium, Category::Tail];
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Head => "Head",
            Category::Medium => "Medium",
            Category::Tail => "Tail",
        })
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "head" => Ok(Category::Head),
            "medium" => Ok(Category::Medium),
            "tail" => Ok(Category::Tail),
            other => Err(Error::Config(format!("unknown category `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryMap {
    pub assignment: BTreeMap<usize, Category>,
    pub tail_unique: BTreeSet<usize>,
}

impl CategoryMap {
    pub fn category(&self, idx: usize) -> Option<Category> {
        self.assignment.get(&idx).copied()
    }

    pub fn members(&self, category: Category) -> BTreeSet<usize> {
        self.assignment
            .iter()
            .filter(|(_, &c)| c == category)
            .map(|(&i, _)| i)
            .collect()
    }

    pub fn with_tail_unique(mut self, tail_unique: BTreeSet<usize>) -> Result<Self> {
        if let Some(bad) = tail_unique
            .iter()
            .find(|i| self.category(**i) != Some(Category::Tail))
        {
            return Err(Error::Contract(format!(
                "tail-unique label index {bad} is not in the Tail category"
            )));
        }
        self.tail_unique = tail_unique;
        Ok(self)
    }
}

/// Assigns every label annotated by `dataset` to Head, Medium or Tail by its
/// positive count. `tail_unique` is left empty.
pub fn categorize(
    registry: &LabelRegistry,
    dataset: &str,
    thresholds: &CategoryThresholds,
) -> Result<CategoryMap> {
    thresholds.validate()?;
    let entry = registry.dataset(dataset)?;
    let assignment = entry
        .coverage
        .iter()
        .map(|&idx| {
            let count = entry.counts.get(&idx).copied().unwrap_or(0);
            (idx, thresholds.classify(count))
        })
        .collect();
    Ok(CategoryMap {
        assignment,
        tail_unique: BTreeSet::new(),
    })
}

/// Tail labels of `target` that no other registered dataset annotates.
pub fn tail_unique(
    registry: &LabelRegistry,
    category_map: &CategoryMap,
    target: &str,
) -> Result<BTreeSet<usize>> {
    let target_cov = registry.coverage(target)?;
    let elsewhere: BTreeSet<usize> = registry
        .datasets()
        .iter()
        .filter(|d| d.name != target)
        .flat_map(|d| d.coverage.iter().copied())
        .collect();
    Ok(target_cov
        .iter()
        .copied()
        .filter(|i| category_map.category(*i) == Some(Category::Tail))
        .filter(|i| !elsewhere.contains(i))
        .collect())
}

/// Categorization result bundled for serialization alongside the registry.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorization {
    pub dataset: String,
    pub thresholds: CategoryThresholds,
    pub map: CategoryMap,
}

impl Categorization {
    /// `categorize` followed by `tail_unique` on the same dataset.
    pub fn compute(
        registry: &LabelRegistry,
        dataset: &str,
        thresholds: &CategoryThresholds,
    ) -> Result<Self> {
        let map = categorize(registry, dataset, thresholds)?;
        let unique = tail_unique(registry, &map, dataset)?;
        Ok(Categorization {
            dataset: dataset.to_string(),
            thresholds: *thresholds,
            map: map.with_tail_unique(unique)?,
        })
    }
}

// On-disk layout. Field names and order are part of the file format.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDocument {
    format: String,
    labels: Vec<String>,
    #[serde(default)]
    aliases: BTreeMap<String, String>,
    datasets: Vec<DatasetDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categorization: Option<CategorizationDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetDocument {
    name: String,
    coverage: Vec<String>,
    counts: Vec<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CategorizationDocument {
    dataset: String,
    thresholds: CategoryThresholds,
    categories: Vec<LabelCategoryDocument>,
    tail_unique: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelCategoryDocument {
    label: String,
    category: Category,
}

const REGISTRY_FORMAT: &str = "tailchain-registry/1";

impl LabelRegistry {
    /// Serializes the registry (and optionally its categorization) as pretty JSON.
    pub fn to_json(&self, categorization: Option<&Categorization>) -> String {
        let doc = RegistryDocument {
            format: REGISTRY_FORMAT.to_string(),
            labels: self.labels.clone(),
            aliases: self.aliases.iter().map(|(a, l)| (a.clone(), l.clone())).collect(),
            datasets: self
                .datasets
                .iter()
                .map(|d| DatasetDocument {
                    name: d.name.clone(),
                    coverage: d.coverage.iter().map(|&i| self.labels[i].clone()).collect(),
                    counts: d
                        .coverage
                        .iter()
                        .map(|i| d.counts.get(i).copied().unwrap_or(0))
                        .collect(),
                })
                .collect(),
            categorization: categorization.map(|c| CategorizationDocument {
                dataset: c.dataset.clone(),
                thresholds: c.thresholds,
                categories: c
                    .map
                    .assignment
                    .iter()
                    .map(|(&i, &category)| LabelCategoryDocument {
                        label: self.labels[i].clone(),
                        category,
                    })
                    .collect(),
                tail_unique: c.map.tail_unique.iter().map(|&i| self.labels[i].clone()).collect(),
            }),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("registry document serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<(LabelRegistry, Option<Categorization>)> {
        let doc: RegistryDocument =
            serde_json::from_str(text).map_err(|e| Error::parse("<registry>", e))?;
        if doc.format != REGISTRY_FORMAT {
            return Err(Error::parse("<registry>", format!("unsupported format `{}`", doc.format)));
        }
        let mut index = HashMap::new();
        for (i, label) in doc.labels.iter().enumerate() {
            if index.insert(canonical_key(label), i).is_some() {
                return Err(Error::parse("<registry>", format!("duplicate label `{label}`")));
            }
        }
        let lookup = |name: &str| {
            index
                .get(&canonical_key(name))
                .copied()
                .ok_or_else(|| Error::parse("<registry>", format!("unknown label `{name}`")))
        };
        let mut datasets = Vec::with_capacity(doc.datasets.len());
        for d in &doc.datasets {
            if d.coverage.len() != d.counts.len() {
                return Err(Error::parse(
                    "<registry>",
                    format!("dataset `{}`: coverage and counts differ in length", d.name),
                ));
            }
            let mut entry = DatasetEntry {
                name: d.name.clone(),
                coverage: BTreeSet::new(),
                counts: BTreeMap::new(),
            };
            for (label, &count) in d.coverage.iter().zip(&d.counts) {
                let idx = lookup(label)?;
                entry.coverage.insert(idx);
                entry.counts.insert(idx, count);
            }
            datasets.push(entry);
        }
        let registry = LabelRegistry {
            id: RegistryId::of_labels(&doc.labels),
            labels: doc.labels,
            index: index.clone(),
            aliases: AliasTable(doc.aliases),
            datasets,
        };
        let categorization = match doc.categorization {
            None => None,
            Some(c) => {
                let mut map = CategoryMap::default();
                for lc in &c.categories {
                    map.assignment.insert(lookup(&lc.label)?, lc.category);
                }
                let unique = c
                    .tail_unique
                    .iter()
                    .map(|l| lookup(l))
                    .collect::<Result<BTreeSet<_>>>()?;
                Some(Categorization {
                    dataset: c.dataset,
                    thresholds: c.thresholds,
                    map: map.with_tail_unique(unique)?,
                })
            }
        };
        Ok((registry, categorization))
    }

    pub fn save(&self, path: &Path, categorization: Option<&Categorization>) -> Result<()> {
        write_file(path, self.to_json(categorization))
    }

    pub fn load(path: &Path) -> Result<(LabelRegistry, Option<Categorization>)> {
        let text = read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => other,
        })
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ap::average_precision;
use crate::dataset::AnnotationState;
use crate::error::{read_to_string, write_file, Error, Result};
use crate::registry::{Category, CategoryMap, LabelRegistry};
use crate::scores::ScoreMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CategoryName {
    All,
    Head,
    Medium,
    Tail,
    #[serde(rename = "Tail-U")]
    TailU,
}

impl CategoryName {
    pub const ORDER: [CategoryName; 5] = [
        CategoryName::All,
        CategoryName::Head,
        CategoryName::Medium,
        CategoryName::Tail,
        CategoryName::TailU,
    ];
}

impl From<Category> for CategoryName {
    fn from(c: Category) -> Self {
        match c {
            Category::Head => CategoryName::Head,
            Category::Medium => CategoryName::Medium,
            Category::Tail => CategoryName::Tail,
        }
    }
}

impl fmt::Display for CategoryName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CategoryName::All => "All",
            CategoryName::Head => "Head",
            CategoryName::Medium => "Medium",
            CategoryName::Tail => "Tail",
            CategoryName::TailU => "Tail-U",
        })
    }
}

impl FromStr for CategoryName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CategoryName::ORDER
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown category `{s}`")))
    }
}

/// Label index sets per category. Head/Medium/Tail partition All; Tail-U ⊆ Tail.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorySpec {
    sets: BTreeMap<CategoryName, BTreeSet<usize>>,
}

impl CategorySpec {
    pub fn new(
        head: BTreeSet<usize>,
        medium: BTreeSet<usize>,
        tail: BTreeSet<usize>,
        tail_unique: BTreeSet<usize>,
    ) -> Result<Self> {
        if !head.is_disjoint(&medium) || !head.is_disjoint(&tail) || !medium.is_disjoint(&tail) {
            return Err(Error::Contract("Head, Medium and Tail must be disjoint".into()));
        }
        if !tail_unique.is_subset(&tail) {
            return Err(Error::Contract("Tail-U must be a subset of Tail".into()));
        }
        let all: BTreeSet<usize> = head.iter().chain(&medium).chain(&tail).copied().collect();
        Ok(CategorySpec {
            sets: BTreeMap::from([
                (CategoryName::All, all),
                (CategoryName::Head, head),
                (CategoryName::Medium, medium),
                (CategoryName::Tail, tail),
                (CategoryName::TailU, tail_unique),
            ]),
        })
    }

    pub fn from_category_map(map: &CategoryMap) -> Result<Self> {
        Self::new(
            map.members(Category::Head),
            map.members(Category::Medium),
            map.members(Category::Tail),
            map.tail_unique.clone(),
        )
    }

    pub fn set(&self, name: CategoryName) -> &BTreeSet<usize> {
        &self.sets[&name]
    }

    pub fn evaluated(&self) -> &BTreeSet<usize> {
        self.set(CategoryName::All)
    }

    pub fn category_of(&self, idx: usize) -> Option<Category> {
        [Category::Head, Category::Medium, Category::Tail]
            .into_iter()
            .find(|c| self.set((*c).into()).contains(&idx))
    }

    pub fn is_tail_unique(&self, idx: usize) -> bool {
        self.set(CategoryName::TailU).contains(&idx)
    }

    /// Arithmetic mean of the defined values in each category. `values` is
    /// indexed by registry label index.
    pub fn means(&self, values: &[Option<f64>]) -> BTreeMap<CategoryName, Option<f64>> {
        self.sets
            .iter()
            .map(|(&name, set)| {
                let defined: Vec<f64> = set.iter().filter_map(|&i| values.get(i).copied().flatten()).collect();
                let mean = if defined.is_empty() {
                    None
                } else {
                    Some(defined.iter().sum::<f64>() / defined.len() as f64)
                };
                (name, mean)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    NoKnownSamples,
    NoPositives,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExclusionReason::NoKnownSamples => "no-known-samples",
            ExclusionReason::NoPositives => "no-positives",
        })
    }
}

impl FromStr for ExclusionReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "no-known-samples" => Ok(ExclusionReason::NoKnownSamples),
            "no-positives" => Ok(ExclusionReason::NoPositives),
            other => Err(Error::Config(format!("unknown exclusion reason `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResult {
    pub label: String,
    pub category: Category,
    pub tail_unique: bool,
    pub ap: Option<f64>,
    pub prevalence: Option<f64>,
    pub n_pos: u64,
    pub n_known: u64,
}

impl LabelResult {
    pub fn exclusion(&self) -> Option<ExclusionReason> {
        if self.n_known == 0 {
            Some(ExclusionReason::NoKnownSamples)
        } else if self.n_pos == 0 {
            Some(ExclusionReason::NoPositives)
        } else {
            None
        }
    }

    /// Category column value: Tail-U labels are written as `Tail-U`.
    pub fn group(&self) -> CategoryName {
        if self.tail_unique {
            CategoryName::TailU
        } else {
            self.category.into()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMean {
    pub category: CategoryName,
    pub ap: Option<f64>,
    pub prevalence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub label: String,
    pub reason: ExclusionReason,
}

/// Per-label AP and prevalence with category macro-means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<LabelResult>,
    pub means: Vec<CategoryMean>,
    pub excluded: Vec<Exclusion>,
}

/// Raw per-label inputs from which a report is assembled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelInput {
    pub ap: Option<f64>,
    pub n_pos: u64,
    pub n_known: u64,
}

impl LabelInput {
    pub fn prevalence(&self) -> Option<f64> {
        (self.n_known > 0).then(|| self.n_pos as f64 / self.n_known as f64)
    }
}

impl EvalReport {
    /// Builds a report over the labels of `spec`. `inputs` is indexed by
    /// registry label index. This is the only place category means are computed.
    pub fn assemble(labels: &[String], spec: &CategorySpec, inputs: &[LabelInput]) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} label inputs for {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = spec.evaluated().iter().find(|&&i| i >= labels.len()) {
            return Err(Error::Contract(format!("category spec names label index {bad}")));
        }
        let mut results = Vec::new();
        let mut excluded = Vec::new();
        for &j in spec.evaluated() {
            let input = inputs[j];
            let result = LabelResult {
                label: labels[j].clone(),
                category: spec.category_of(j).expect("evaluated labels are categorized"),
                tail_unique: spec.is_tail_unique(j),
                ap: input.ap,
                prevalence: input.prevalence(),
                n_pos: input.n_pos,
                n_known: input.n_known,
            };
            if let Some(reason) = result.exclusion() {
                excluded.push(Exclusion {
                    label: result.label.clone(),
                    reason,
                });
            }
            results.push(result);
        }
        let aps: Vec<Option<f64>> = inputs.iter().map(|i| i.ap).collect();
        let prevalences: Vec<Option<f64>> = inputs.iter().map(LabelInput::prevalence).collect();
        let ap_means = spec.means(&aps);
        let prev_means = spec.means(&prevalences);
        let means = CategoryName::ORDER
            .into_iter()
            .map(|c| CategoryMean {
                category: c,
                ap: ap_means[&c],
                prevalence: prev_means[&c],
            })
            .collect();
        Ok(EvalReport {
            labels: results,
            means,
            excluded,
        })
    }

    pub fn mean(&self, category: CategoryName) -> Option<f64> {
        self.means.iter().find(|m| m.category == category).and_then(|m| m.ap)
    }

    pub fn mean_prevalence(&self, category: CategoryName) -> Option<f64> {
        self.means.iter().find(|m| m.category == category).and_then(|m| m.prevalence)
    }

    pub fn label(&self, name: &str) -> Option<&LabelResult> {
        self.labels.iter().find(|l| l.label == name)
    }

    /// Rebuilds the category spec from the label rows, using positions in
    /// `labels` as indices.
    pub fn category_spec(&self, labels: &[String]) -> Result<CategorySpec> {
        let mut sets: [BTreeSet<usize>; 4] = Default::default();
        for r in &self.labels {
            let idx = labels
                .iter()
                .position(|l| *l == r.label)
                .ok_or_else(|| Error::Incompatible(format!("label `{}` not in registry", r.label)))?;
            let k = match r.category {
                Category::Head => 0,
                Category::Medium => 1,
                Category::Tail => 2,
            };
            sets[k].insert(idx);
            if r.tail_unique {
                sets[3].insert(idx);
            }
        }
        let [h, m, t, u] = sets;
        CategorySpec::new(h, m, t, u)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("<report>", e))
    }

    /// `label,category,prevalence,n_pos,n_known,ap` rows, then a footer of
    /// `#mean,<category>,<mean ap>,<mean prevalence>` and
    /// `#excluded,<label>,<reason>` rows. Undefined values are empty.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        w.write_record(["label", "category", "prevalence", "n_pos", "n_known", "ap"])
            .expect("in-memory write");
        for r in &self.labels {
            w.write_record([
                r.label.clone(),
                r.group().to_string(),
                fmt(r.prevalence),
                r.n_pos.to_string(),
                r.n_known.to_string(),
                fmt(r.ap),
            ])
            .expect("in-memory write");
        }
        for m in &self.means {
            w.write_record(["#mean".to_string(), m.category.to_string(), fmt(m.ap), fmt(m.prevalence)])
                .expect("in-memory write");
        }
        for e in &self.excluded {
            w.write_record(["#excluded".to_string(), e.label.clone(), e.reason.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| Error::parse("<report csv>", m);
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.trim().is_empty() {
                Ok(None)
            } else {
                s.trim().parse().map(Some).map_err(|_| bad(format!("bad number `{s}`")))
            }
        };
        let int = |s: &str| -> Result<u64> { s.trim().parse().map_err(|_| bad(format!("bad count `{s}`"))) };
        let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let mut report = EvalReport {
            labels: Vec::new(),
            means: Vec::new(),
            excluded: Vec::new(),
        };
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            match f(0) {
                "#mean" => report.means.push(CategoryMean {
                    category: f(1).parse()?,
                    ap: opt(f(2))?,
                    prevalence: opt(f(3))?,
                }),
                "#excluded" => report.excluded.push(Exclusion {
                    label: f(1).to_string(),
                    reason: f(2).parse()?,
                }),
                label => {
                    let group: CategoryName = f(1).parse()?;
                    let (category, tail_unique) = match group {
                        CategoryName::Head => (Category::Head, false),
                        CategoryName::Medium => (Category::Medium, false),
                        CategoryName::Tail => (Category::Tail, false),
                        CategoryName::TailU => (Category::Tail, true),
                        CategoryName::All => return Err(bad("label row with category All".into())),
                    };
                    report.labels.push(LabelResult {
                        label: label.to_string(),
                        category,
                        tail_unique,
                        prevalence: opt(f(2))?,
                        n_pos: int(f(3))?,
                        n_known: int(f(4))?,
                        ap: opt(f(5))?,
                    });
                }
            }
        }
        Ok(report)
    }

    /// Writes `<stem>.csv` and `<stem>.json` under `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        write_file(&dir.join(format!("{stem}.csv")), self.to_csv())?;
        write_file(&dir.join(format!("{stem}.json")), self.to_json())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&read_to_string(path)?)
    }
}

fn check_shapes(
    rows: usize,
    cols: usize,
    annotations: &Array2<AnnotationState>,
    registry: &LabelRegistry,
) -> Result<()> {
    if annotations.dim() != (rows, cols) {
        return Err(Error::Incompatible(format!(
            "scores are {rows}x{cols}, annotations {}x{}",
            annotations.nrows(),
            annotations.ncols()
        )));
    }
    if cols != registry.len() {
        return Err(Error::Incompatible(format!(
            "{cols} score columns for a registry of {} labels",
            registry.len()
        )));
    }
    Ok(())
}

/// Per-label AP over rows whose annotation is known, then category means.
pub fn evaluate(
    scores: &ScoreMatrix,
    annotations: &Array2<AnnotationState>,
    registry: &LabelRegistry,
    categories: &CategorySpec,
) -> Result<EvalReport> {
    if scores.nrows() == 0 {
        return Err(Error::Contract("cannot evaluate an empty table".into()));
    }
    if scores.labels() != registry.labels() {
        return Err(Error::Incompatible("score columns do not follow the registry".into()));
    }
    check_shapes(scores.nrows(), scores.ncols(), annotations, registry)?;

    let inputs = (0..registry.len())
        .into_par_iter()
        .map(|j| -> Result<LabelInput> {
            let mut s = Vec::new();
            let mut t = Vec::new();
            for i in 0..scores.nrows() {
                if let Some(y) = annotations[[i, j]].target() {
                    s.push(scores.values()[[i, j]]);
                    t.push(y == 1.0);
                }
            }
            let n_pos = t.iter().filter(|&&b| b).count() as u64;
            Ok(LabelInput {
                ap: average_precision(&s, &t)?,
                n_pos,
                n_known: t.len() as u64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::assemble(registry.labels(), categories, &inputs)
}

/// n_pos / n_known per label; `None` where no annotation is known.
pub fn prevalence_baseline(annotations: &Array2<AnnotationState>, registry: &LabelRegistry) -> Result<Vec<Option<f64>>> {
    if annotations.ncols() != registry.len() {
        return Err(Error::Incompatible(format!(
            "{} annotation columns for {} labels",
            annotations.ncols(),
            registry.len()
        )));
    }
    Ok(annotations
        .columns()
        .into_iter()
        .map(|col| {
            let known = col.iter().filter(|a| a.is_known()).count();
            let pos = col.iter().filter(|a| a.is_positive()).count();
            (known > 0).then(|| pos as f64 / known as f64)
        })
        .collect())
}

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Normalization, SplitRatio};
use crate::engine::{Architecture, InitSpec, StageConfig};
use crate::error::{read_to_string, Error, Result};
use crate::registry::{AliasTable, CategoryThresholds};

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_ensemble_name() -> String {
    "Averaged".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub manifest: PathBuf,
    /// Patient-level split of `manifest`; synthetic samples join the first split.
    pub splits: Vec<SplitRatio>,
    /// Extra manifests used whole as named splits, e.g. a held-out test set.
    #[serde(default)]
    pub holdout: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_limit: Option<usize>,
}

impl DatasetConfig {
    pub fn split_names(&self) -> impl Iterator<Item = &str> {
        self.splits
            .iter()
            .map(|s| s.name.as_str())
            .chain(self.holdout.keys().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub architecture: Architecture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_ensemble_name")]
    pub name: String,
    /// Model names; empty means every model.
    #[serde(default)]
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Dataset whose counts define the categories and whose exclusive tail
    /// labels form Tail-U.
    pub target: String,
    /// Split of `target` that is scored.
    pub split: String,
    pub thresholds: CategoryThresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Square input size in pixels.
    pub side: usize,
    #[serde(default)]
    pub normalization: Normalization,
    /// Alternate spelling -> canonical label name.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    pub datasets: Vec<DatasetConfig>,
    pub models: Vec<ModelConfig>,
    /// Run in order for every model.
    pub stages: Vec<StageConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    pub evaluation: EvaluationConfig,
}

fn unique<'a>(what: &str, names: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if n.trim().is_empty() {
            return Err(Error::Config(format!("empty {what} name")));
        }
        if !seen.insert(n) {
            return Err(Error::Config(format!("duplicate {what} `{n}`")));
        }
    }
    Ok(())
}

/// Splits `dataset:split`.
pub fn parse_table_ref(r: &str) -> Result<(&str, &str)> {
    r.split_once(':')
        .filter(|(d, s)| !d.is_empty() && !s.is_empty())
        .ok_or_else(|| Error::Config(format!("table reference `{r}` is not of the form dataset:split")))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses, resolves relative paths against the file's directory and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let parent = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let base = std::fs::canonicalize(parent).map_err(|e| Error::io(parent, e))?;
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        for d in &mut self.datasets {
            fix(&mut d.manifest);
            d.holdout.values_mut().for_each(fix);
            if let Some(s) = d.synthetic.as_mut() {
                fix(s);
            }
        }
        for s in &mut self.stages {
            if let InitSpec::Generalist(p) = &mut s.init {
                fix(p);
            }
        }
    }

    pub fn alias_table(&self) -> AliasTable {
        AliasTable::from_pairs(self.aliases.iter().map(|(a, l)| (a.as_str(), l.as_str())))
    }

    pub fn dataset(&self, name: &str) -> Result<&DatasetConfig> {
        self.datasets
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::Lookup(format!("no dataset named `{name}`")))
    }

    fn check_ref(&self, r: &str) -> Result<()> {
        let (d, s) = parse_table_ref(r)?;
        let ds = self.dataset(d)?;
        if !ds.split_names().any(|n| n == s) {
            return Err(Error::Lookup(format!("dataset `{d}` has no split `{s}`")));
        }
        Ok(())
    }

    /// Effective seed of stage `stage` for model `model`.
    pub fn stage_seed(&self, model: usize, stage: usize) -> u64 {
        self.seed
            .wrapping_mul(1_000_003)
            .wrapping_add(model as u64 * 10_007)
            .wrapping_add(self.stages[stage].seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.side == 0 {
            return Err(Error::Config("side must be positive".into()));
        }
        if !(self.normalization.std > 0.0) {
            return Err(Error::Config("normalization std must be positive".into()));
        }
        if self.datasets.is_empty() || self.models.is_empty() || self.stages.is_empty() {
            return Err(Error::Config("need at least one dataset, model and stage".into()));
        }
        unique("dataset", self.datasets.iter().map(|d| d.name.as_str()))?;
        unique("model", self.models.iter().map(|m| m.name.as_str()))?;
        unique("stage", self.stages.iter().map(|s| s.name.as_str()))?;
        for d in &self.datasets {
            if d.name.contains(':') {
                return Err(Error::Config(format!("dataset name `{}` may not contain `:`", d.name)));
            }
            if d.splits.is_empty() {
                return Err(Error::Config(format!("dataset `{}` has no splits", d.name)));
            }
            unique(&format!("split of `{}`", d.name), d.split_names())?;
        }
        for m in &self.models {
            m.architecture.validate()?;
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.validate()?;
            if s.train.is_empty() {
                return Err(Error::Config(format!("stage `{}` has no training tables", s.name)));
            }
            for r in s.train.iter().chain(&s.val) {
                self.check_ref(r)
                    .map_err(|e| Error::Config(format!("stage `{}`: {e}", s.name)))?;
            }
            if i == 0 && s.init == InitSpec::PreviousStage {
                return Err(Error::Config(format!(
                    "stage `{}` starts from a previous stage but is first",
                    s.name
                )));
            }
        }
        if let Some(e) = &self.ensemble {
            for m in &e.members {
                if !self.models.iter().any(|x| &x.name == m) {
                    return Err(Error::Config(format!("ensemble member `{m}` is not a model")));
                }
            }
            if self.models.iter().any(|m| m.name == e.name) {
                return Err(Error::Config(format!("ensemble name `{}` clashes with a model", e.name)));
            }
            let n = if e.members.is_empty() { self.models.len() } else { e.members.len() };
            if let Some(w) = &e.weights {
                crate::ensemble::normalize_weights(w, n)?;
            }
        }
        self.evaluation.thresholds.validate()?;
        self.check_ref(&format!("{}:{}", self.evaluation.target, self.evaluation.split))
            .map_err(|e| Error::Config(format!("evaluation: {e}")))?;
        Ok(())
    }
}

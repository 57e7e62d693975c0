use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a stage's starting parameters come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitSpec {
    /// Fresh parameters from the stage seed.
    Random,
    /// The checkpoint saved by the preceding stage.
    PreviousStage,
    /// A generalist parameter archive; the classification head is re-initialized.
    Generalist(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn default_decay_every() -> usize {
    5
}
fn default_decay_factor() -> f64 {
    0.5
}
fn default_base_lr() -> f64 {
    1e-4
}
fn default_batch_size() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub name: String,
    /// Table references of the form `dataset:split`.
    pub train: Vec<String>,
    #[serde(default)]
    pub val: Vec<String>,
    pub epochs: usize,
    #[serde(default = "default_base_lr")]
    pub base_lr: f64,
    #[serde(default = "default_decay_every")]
    pub decay_every: usize,
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub init: InitSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl StageConfig {
    /// 1e-4 halved every 5 epochs, batch 16, random init.
    pub fn new(name: &str, epochs: usize) -> Self {
        StageConfig {
            name: name.to_string(),
            train: Vec::new(),
            val: Vec::new(),
            epochs,
            base_lr: default_base_lr(),
            decay_every: default_decay_every(),
            decay_factor: default_decay_factor(),
            batch_size: default_batch_size(),
            init: InitSpec::Random,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("stage `{}`: {m}", self.name)));
        if self.name.trim().is_empty() {
            return Err(Error::Config("stage with empty name".into()));
        }
        if self.epochs == 0 {
            return bad("epochs must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be > 0");
        }
        if self.decay_every == 0 {
            return bad("decay_every must be > 0");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return bad("decay_factor must lie in (0, 1)");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(StageConfig::new("s", 3).validate().is_ok());
        assert!(StageConfig::new("s", 0).validate().is_err());
        let mut s = StageConfig::new("s", 3);
        s.batch_size = 0;
        assert!(s.validate().is_err());
        let mut s = StageConfig::new("s", 3);
        s.decay_factor = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn toml_forms_of_init() {
        #[derive(Deserialize)]
        struct W {
            stage: StageConfig,
        }
        let w: W = toml::from_str(
            "[stage]\nname = \"a\"\ntrain = [\"d:train\"]\nepochs = 2\ninit = \"previous-stage\"\n",
        )
        .unwrap();
        assert_eq!(w.stage.init, InitSpec::PreviousStage);
        let w: W = toml::from_str(
            "[stage]\nname = \"a\"\ntrain = []\nepochs = 2\ninit = { generalist = \"g.bin\" }\n",
        )
        .unwrap();
        assert_eq!(w.stage.init, InitSpec::Generalist("g.bin".into()));
        assert!(toml::from_str::<W>("[stage]\nname = \"a\"\ntrain = []\nepochs = 2\ninit = \"random\"\nlr = 1\n").is_err());
    }
}

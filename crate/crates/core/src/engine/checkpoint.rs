//! Stage checkpoints and stage initialization.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{init_head_tensor, Architecture, Network, HEAD_PREFIX};
use super::params::ParamStore;
use super::Model;
use crate::dataset::Normalization;
use crate::error::{read_to_string, write_file, Error, Result};

pub const PARAMS_FILE: &str = "params.bin";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stage: String,
    /// Initialization source followed by every stage that produced these weights.
    pub provenance: Vec<String>,
    /// 1-based epoch the parameters were taken from.
    pub epoch: usize,
    pub seed: u64,
    pub val_map: Option<f64>,
    pub architecture: Architecture,
    pub side: usize,
    pub labels: Vec<String>,
    pub normalization: Normalization,
    /// Digest of the parameters the stage started from.
    pub init_digest: String,
    pub params_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.params.save(&dir.join(PARAMS_FILE))?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        write_file(&dir.join(META_FILE), meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let meta: CheckpointMeta =
            serde_json::from_str(&read_to_string(&meta_path)?).map_err(|e| Error::parse(&meta_path, e))?;
        let params = ParamStore::load(&dir.join(PARAMS_FILE))?;
        if params.digest() != meta.params_digest {
            return Err(Error::parse(
                dir.join(PARAMS_FILE),
                "parameter digest does not match checkpoint metadata",
            ));
        }
        Ok(Checkpoint { params, meta })
    }

    pub fn network(&self) -> Result<Network> {
        Network::from_params(
            &self.meta.architecture,
            self.meta.side,
            self.meta.labels.len(),
            self.params.clone(),
        )
    }
}

pub enum InitSource<'a> {
    Random { seed: u64 },
    /// Backbone weights from a generalist archive; head tensors are drawn fresh.
    Generalist { params: &'a ParamStore, seed: u64 },
    /// Every tensor from a previous stage.
    Checkpoint(&'a Checkpoint),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InitReport {
    pub source: String,
    pub loaded: Vec<String>,
    pub fresh: Vec<String>,
    /// Tensors in the source that the architecture does not use.
    pub unused: Vec<String>,
}

pub fn init_network(
    source: InitSource<'_>,
    arch: &Architecture,
    side: usize,
    labels: &[String],
) -> Result<(Network, InitReport)> {
    match source {
        InitSource::Random { seed } => {
            let net = Network::random(arch, side, labels.len(), seed)?;
            let fresh = net.params().names().map(String::from).collect();
            Ok((
                net,
                InitReport {
                    source: "random".into(),
                    fresh,
                    ..Default::default()
                },
            ))
        }
        InitSource::Checkpoint(ckpt) => {
            let m = &ckpt.meta;
            if &m.architecture != arch || m.side != side {
                return Err(Error::Incompatible(format!(
                    "checkpoint from stage `{}` has a different architecture or input size",
                    m.stage
                )));
            }
            if m.labels != labels {
                return Err(Error::Incompatible(format!(
                    "checkpoint from stage `{}` was trained on a different label registry",
                    m.stage
                )));
            }
            let net = Network::from_params(arch, side, labels.len(), ckpt.params.clone())?;
            let loaded = net.params().names().map(String::from).collect();
            Ok((
                net,
                InitReport {
                    source: format!("checkpoint:{}", m.stage),
                    loaded,
                    ..Default::default()
                },
            ))
        }
        InitSource::Generalist { params: src, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut layout = arch.layout(side, labels.len());
            layout.sort();
            let mut params = ParamStore::new();
            let mut report = InitReport {
                source: "generalist".into(),
                ..Default::default()
            };
            for (name, shape) in &layout {
                if name.starts_with(HEAD_PREFIX) {
                    params.insert(name.clone(), init_head_tensor(name, shape, &mut rng));
                    report.fresh.push(name.clone());
                    continue;
                }
                let t = src.get(name).ok_or_else(|| Error::Load {
                    name: name.clone(),
                    message: "missing from generalist weights".into(),
                })?;
                if &t.shape != shape {
                    return Err(Error::Load {
                        name: name.clone(),
                        message: format!("shape {:?} in generalist weights, expected {:?}", t.shape, shape),
                    });
                }
                params.insert(name.clone(), t.clone());
                report.loaded.push(name.clone());
            }
            report.unused = src
                .names()
                .filter(|n| n.starts_with(HEAD_PREFIX) || params.get(n).is_none())
                .map(String::from)
                .collect();
            let net = Network::from_params(arch, side, labels.len(), params)?;
            Ok((net, report))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("l{i}")).collect()
    }

    fn checkpoint(arch: &Architecture, n: usize) -> Checkpoint {
        let net = Network::random(arch, 8, n, 3).unwrap();
        let params = net.into_params();
        Checkpoint {
            meta: CheckpointMeta {
                stage: "pretrain".into(),
                provenance: vec!["random".into(), "pretrain".into()],
                epoch: 2,
                seed: 3,
                val_map: Some(0.5),
                architecture: arch.clone(),
                side: 8,
                labels: labels(n),
                normalization: Normalization::default(),
                init_digest: "x".into(),
                params_digest: params.digest(),
            },
            params,
        }
    }

    #[test]
    fn checkpoint_round_trip_and_tamper_detection() {
        let arch = Architecture::ToyConv { widths: vec![4] };
        let c = checkpoint(&arch, 3);
        let dir = tempfile::tempdir().unwrap();
        c.save(dir.path()).unwrap();
        assert_eq!(Checkpoint::load(dir.path()).unwrap(), c);

        let mut p = c.params.clone();
        p.get_mut("head.bias").unwrap().data[0] += 1.0;
        p.save(&dir.path().join(PARAMS_FILE)).unwrap();
        assert!(Checkpoint::load(dir.path()).is_err());
    }

    #[test]
    fn checkpoint_init_loads_everything() {
        let arch = Architecture::ToyConv { widths: vec![4] };
        let c = checkpoint(&arch, 3);
        let (net, report) = init_network(InitSource::Checkpoint(&c), &arch, 8, &labels(3)).unwrap();
        assert_eq!(net.params().digest(), c.params.digest());
        assert!(report.fresh.is_empty());
        assert!(init_network(InitSource::Checkpoint(&c), &arch, 8, &labels(4)).is_err());
    }

    #[test]
    fn generalist_keeps_backbone_and_replaces_head() {
        let arch = Architecture::ToyConv { widths: vec![4, 6] };
        let generalist = Network::random(&arch, 8, 14, 11).unwrap().into_params();
        let (net, report) = init_network(
            InitSource::Generalist {
                params: &generalist,
                seed: 5,
            },
            &arch,
            8,
            &labels(26),
        )
        .unwrap();
        for name in ["backbone.conv0.weight", "backbone.conv1.bias"] {
            assert_eq!(net.params().get(name), generalist.get(name));
        }
        assert_eq!(net.params().get("head.weight").unwrap().shape, vec![26, 6]);
        assert_eq!(report.fresh, vec!["head.bias", "head.weight"]);
        assert_eq!(report.unused, vec!["head.bias", "head.weight"]);
    }

    #[test]
    fn generalist_shape_mismatch_names_parameter() {
        let generalist = Network::random(&Architecture::ToyConv { widths: vec![5] }, 8, 3, 0)
            .unwrap()
            .into_params();
        let err = init_network(
            InitSource::Generalist {
                params: &generalist,
                seed: 0,
            },
            &Architecture::ToyConv { widths: vec![4] },
            8,
            &labels(3),
        )
        .unwrap_err();
        match err {
            Error::Load { name, .. } => assert_eq!(name, "backbone.conv0.bias"),
            other => panic!("{other:?}"),
        }
    }
}

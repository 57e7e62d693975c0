//! Stage runner, prediction and training history.

use std::path::Path;

use log::{debug, info, warn};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::checkpoint::{Checkpoint, CheckpointMeta};
use super::loss::{masked_bce, sigmoid};
use super::network::Network;
use super::optim::Adam;
use super::schedule::lr_at;
use super::stage::StageConfig;
use super::Model;
use crate::dataset::{load_image, AnnotationState, DatasetTable, ImageArray, Normalization};
use crate::error::{read_to_string, write_file, Error, Result};
use crate::metrics::average_precision;
use crate::scores::ScoreMatrix;

/// A table with its images decoded, rows aligned with the records.
#[derive(Debug, Clone)]
pub struct LoadedTable {
    table: DatasetTable,
    images: Vec<ImageArray>,
}

impl LoadedTable {
    pub fn new(table: DatasetTable, images: Vec<ImageArray>) -> Result<Self> {
        if table.len() != images.len() {
            return Err(Error::Contract(format!(
                "{} records but {} images",
                table.len(),
                images.len()
            )));
        }
        Ok(LoadedTable { table, images })
    }

    pub fn load(table: DatasetTable, side: usize, norm: &Normalization) -> Result<Self> {
        let images = table
            .records()
            .par_iter()
            .map(|r| load_image(&r.image_ref, side, norm))
            .collect::<Result<Vec<_>>>()?;
        Self::new(table, images)
    }

    pub fn table(&self) -> &DatasetTable {
        &self.table
    }

    pub fn images(&self) -> &[ImageArray] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Concatenates tables bound to the same registry, in order.
    pub fn concat(parts: &[&LoadedTable]) -> Result<Self> {
        let tables: Vec<DatasetTable> = parts.iter().map(|p| p.table.clone()).collect();
        let table = crate::dataset::merge_datasets(&tables)?;
        let images = parts.iter().flat_map(|p| p.images.iter().cloned()).collect();
        Self::new(table, images)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_map: Option<f64>,
    pub lr: f64,
}

pub fn history_to_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_map,lr\n");
    for r in history {
        let val = r.val_map.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, val, r.lr));
    }
    out
}

pub fn history_from_csv(text: &str, origin: &Path) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some("epoch,train_loss,val_map,lr") {
        return Err(Error::parse(origin, "unexpected history header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let bad = || Error::parse(origin, format!("line {}: `{line}`", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: f[1].parse().map_err(|_| bad())?,
                val_map: if f[2].is_empty() {
                    None
                } else {
                    Some(f[2].parse().map_err(|_| bad())?)
                },
                lr: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn save_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    write_file(path, history_to_csv(history))
}

pub fn load_history(path: &Path) -> Result<Vec<EpochRecord>> {
    history_from_csv(&read_to_string(path)?, path)
}

/// Static inputs a stage needs besides its data.
#[derive(Debug, Clone)]
pub struct StageContext<'a> {
    pub labels: &'a [String],
    pub normalization: Normalization,
    /// Lineage of the initial parameters, e.g. `["random", "pretrain"]`.
    pub provenance: Vec<String>,
    /// Where the last finite parameters go if training diverges.
    pub postmortem_dir: Option<&'a Path>,
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    /// Parameters from the epoch with the best validation mAP (earliest on
    /// ties), or from the last epoch when there is no validation signal.
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// Sigmoid scores for every row, keyed by the manifest image path.
pub fn predict(net: &Network, data: &LoadedTable, labels: &[String]) -> Result<ScoreMatrix> {
    if net.num_labels() != labels.len() {
        return Err(Error::Incompatible(format!(
            "model has {} outputs, registry has {} labels",
            net.num_labels(),
            labels.len()
        )));
    }
    let rows = data
        .images
        .par_iter()
        .map(|img| net.forward(img))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Array2::zeros((rows.len(), labels.len()));
    for (mut out, row) in values.axis_iter_mut(Axis(0)).zip(&rows) {
        for (o, &x) in out.iter_mut().zip(row) {
            *o = sigmoid(x);
        }
    }
    if values.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Error::Contract("model produced non-finite scores".into()));
    }
    let refs = data.table.records().iter().map(|r| r.image_path.clone()).collect();
    ScoreMatrix::new(labels.to_vec(), refs, values)
}

/// Unweighted mean of per-label AP over labels with a defined AP.
pub fn mean_ap(scores: &Array2<f64>, annotations: &Array2<AnnotationState>) -> Result<Option<f64>> {
    let mut aps = Vec::new();
    for (s_col, a_col) in scores.columns().into_iter().zip(annotations.columns()) {
        let mut s = Vec::new();
        let mut t = Vec::new();
        for (&v, a) in s_col.iter().zip(a_col.iter()) {
            if let Some(y) = a.target() {
                s.push(v);
                t.push(y == 1.0);
            }
        }
        if let Some(ap) = average_precision(&s, &t)? {
            aps.push(ap);
        }
    }
    Ok((!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64))
}

/// Trains `net` for one stage with Adam and step-decayed learning rate.
pub fn run_stage(
    stage: &StageConfig,
    mut net: Network,
    train: &LoadedTable,
    val: Option<&LoadedTable>,
    ctx: &StageContext<'_>,
) -> Result<StageOutcome> {
    stage.validate()?;
    if train.is_empty() {
        return Err(Error::Contract(format!("stage `{}` has no training samples", stage.name)));
    }
    if net.num_labels() != ctx.labels.len() || train.table.n_labels() != ctx.labels.len() {
        return Err(Error::Incompatible(format!(
            "stage `{}`: model, table and registry disagree on the label count",
            stage.name
        )));
    }
    let init_digest = net.params().digest();
    let architecture = net.architecture().clone();
    let side = net.side();
    let annotations = train.table.annotation_matrix();
    let n_labels = ctx.labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(stage.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut opt = Adam::new(net.params(), stage.adam);
    let mut grads = net.params().zeros_like();
    let mut history = Vec::with_capacity(stage.epochs);
    let mut best: Option<(f64, usize, super::params::ParamStore)> = None;

    for epoch in 0..stage.epochs {
        let lr = lr_at(stage, epoch)?;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut known_sum = 0usize;
        for batch in order.chunks(stage.batch_size) {
            let mut logits = Array2::zeros((batch.len(), n_labels));
            let mut traces = Vec::with_capacity(batch.len());
            for (row, &i) in batch.iter().enumerate() {
                let (l, trace) = net.forward_traced(&train.images[i])?;
                logits.row_mut(row).iter_mut().zip(&l).for_each(|(o, &v)| *o = v);
                traces.push(trace);
            }
            let targets = annotations.select(Axis(0), batch);
            let bce = masked_bce(&logits, &targets)?;
            if !bce.loss.is_finite() {
                return Err(diverged(stage, epoch + 1, &net, ctx));
            }
            loss_sum += bce.loss * bce.known as f64;
            known_sum += bce.known;
            if bce.known == 0 {
                continue;
            }
            grads.fill_zero();
            for (row, trace) in traces.iter().enumerate() {
                let d: Vec<f64> = bce.grad.row(row).to_vec();
                net.backward(trace, &d, &mut grads);
            }
            let before = net.params().clone();
            opt.step(net.params_mut(), &grads, lr);
            if !net.params().all_finite() {
                *net.params_mut() = before;
                return Err(diverged(stage, epoch + 1, &net, ctx));
            }
        }
        let train_loss = if known_sum > 0 { loss_sum / known_sum as f64 } else { 0.0 };
        let val_map = match val {
            Some(v) if !v.is_empty() => {
                let scores = predict(&net, v, ctx.labels)?;
                mean_ap(scores.values(), &v.table.annotation_matrix())?
            }
            _ => None,
        };
        info!(
            "stage {} epoch {}/{}: loss {:.5} val mAP {} lr {:e}",
            stage.name,
            epoch + 1,
            stage.epochs,
            train_loss,
            val_map.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into()),
            lr
        );
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_map,
            lr,
        });
        if let Some(m) = val_map {
            if best.as_ref().map_or(true, |(b, _, _)| m > *b) {
                debug!("stage {}: new best val mAP {m} at epoch {}", stage.name, epoch + 1);
                best = Some((m, epoch + 1, net.params().clone()));
            }
        }
    }

    let (val_map, epoch, params) = match best {
        Some((m, e, p)) => (Some(m), e, p),
        None => (None, stage.epochs, net.into_params()),
    };
    let mut provenance = ctx.provenance.clone();
    provenance.push(stage.name.clone());
    let meta = CheckpointMeta {
        stage: stage.name.clone(),
        provenance,
        epoch,
        seed: stage.seed,
        val_map,
        architecture,
        side,
        labels: ctx.labels.to_vec(),
        normalization: ctx.normalization,
        init_digest,
        params_digest: params.digest(),
    };
    Ok(StageOutcome {
        checkpoint: Checkpoint { params, meta },
        history,
    })
}

fn diverged(stage: &StageConfig, epoch: usize, net: &Network, ctx: &StageContext<'_>) -> Error {
    if let Some(dir) = ctx.postmortem_dir {
        let path = dir.join(format!("{}-last-finite.bin", stage.name));
        match net.params().save(&path) {
            Ok(()) => warn!("stage {} diverged; last finite parameters in {}", stage.name, path.display()),
            Err(e) => warn!("stage {} diverged; could not save parameters: {e}", stage.name),
        }
    }
    Error::Diverged {
        stage: stage.name.clone(),
        epoch,
    }
}

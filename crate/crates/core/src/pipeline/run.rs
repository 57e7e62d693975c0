//! The composite pipeline: ingest, split, stages, predict, ensemble,
//! evaluate, report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use serde_json::json;

use super::config::{parse_table_ref, PipelineConfig};
use super::plot::{plot_delta, plot_distribution};
use super::table::render_table;
use crate::dataset::manifest::manifest_labels;
use crate::dataset::synthetic::take_synthetic;
use crate::dataset::{
    mix_synthetic, parse_manifest, parse_synthetic_manifest, patient_split, write_manifest, DatasetTable,
    SampleRecord,
};
use crate::engine::{
    init_network, predict, run_stage, save_history, Checkpoint, InitSource, InitSpec, LoadedTable, ParamStore,
    StageContext,
};
use crate::ensemble::average_scores;
use crate::error::{write_file, Error, Result};
use crate::metrics::{evaluate, CategoryName, CategorySpec, EvalReport};
use crate::registry::{build_registry, Categorization, DatasetDescriptor, LabelRegistry};
use crate::scores::ScoreMatrix;

/// Present in a run directory until the run finishes; holds the error if it failed.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";
/// Present when the run stopped early on request.
pub const PARTIAL_MARKER: &str = "PARTIAL";
pub const RESOLVED_CONFIG: &str = "config.toml";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    /// Stop every model after this stage; no predictions or reports are made.
    pub stop_after: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StageArtifact {
    pub model: String,
    pub stage: String,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub partial: bool,
    pub stages: Vec<StageArtifact>,
    /// `(column name, report)`: models first, then the ensemble.
    pub reports: Vec<(String, EvalReport)>,
}

/// Creates `<out>/run-<timestamp>-<n>` with the first unused `n`.
pub fn create_run_dir(out: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    for n in 0.. {
        let dir = out.join(format!("run-{stamp}-{n}"));
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(dir, e)),
        }
    }
    unreachable!()
}

pub fn run_pipeline(config: &PipelineConfig, opts: &RunOptions) -> Result<RunSummary> {
    let mut cfg = config.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &opts.out_dir {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    if let Some(stop) = &opts.stop_after {
        if !cfg.stages.iter().any(|s| &s.name == stop) {
            return Err(Error::Config(format!("no stage named `{stop}`")));
        }
    }
    let dir = create_run_dir(&cfg.out_dir)?;
    let marker = dir.join(INCOMPLETE_MARKER);
    write_file(&marker, "running\n")?;
    write_file(&dir.join(RESOLVED_CONFIG), cfg.to_toml())?;
    info!("run directory {}", dir.display());
    match execute(&cfg, &dir, opts) {
        Ok(summary) => {
            std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
            Ok(summary)
        }
        Err(e) => {
            let _ = write_file(&marker, format!("{e}\n"));
            Err(e)
        }
    }
}

struct Ingested {
    registry: LabelRegistry,
    categorization: Categorization,
    /// `dataset:split` -> table
    tables: BTreeMap<String, DatasetTable>,
}

fn ingest(cfg: &PipelineConfig, dir: &Path) -> Result<Ingested> {
    let descriptors = cfg
        .datasets
        .iter()
        .map(|d| {
            Ok(DatasetDescriptor {
                name: d.name.clone(),
                labels: manifest_labels(&d.manifest)?,
                counts: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut registry = build_registry(&descriptors, &cfg.alias_table())?;
    let mut full = Vec::new();
    for d in &cfg.datasets {
        let table = parse_manifest(&d.manifest, &registry, &d.name)?;
        registry = registry.with_counts(&d.name, &table.positive_counts(None))?;
        full.push(table);
    }
    let categorization = Categorization::compute(&registry, &cfg.evaluation.target, &cfg.evaluation.thresholds)?;
    registry.save(&dir.join("registry.json"), Some(&categorization))?;
    info!("registry of {} labels over {} datasets", registry.len(), cfg.datasets.len());

    let mut tables = BTreeMap::new();
    for (k, (d, table)) in cfg.datasets.iter().zip(&full).enumerate() {
        let assignment = patient_split(table, &d.splits, cfg.seed.wrapping_add(k as u64))?;
        write_file(&dir.join("splits").join(format!("{}.json", d.name)), assignment.to_json())?;
        for (i, split) in d.splits.iter().enumerate() {
            let mut part = assignment.table(table, &split.name)?;
            if i == 0 {
                if let Some(path) = &d.synthetic {
                    let synthetic = parse_synthetic_manifest(path, &registry, &d.name)?;
                    let synthetic = take_synthetic(&synthetic, d.synthetic_limit);
                    part = mix_synthetic(&part, &synthetic, &categorization.map)?;
                    info!("{}: mixed {} synthetic samples into `{}`", d.name, synthetic.len(), split.name);
                }
            }
            tables.insert(format!("{}:{}", d.name, split.name), part);
        }
        for (name, path) in &d.holdout {
            tables.insert(format!("{}:{name}", d.name), parse_manifest(path, &registry, &d.name)?);
        }
    }
    for (key, table) in &tables {
        let (d, s) = parse_table_ref(key)?;
        // Absolute image paths so the split manifests stand on their own.
        let records = table
            .records()
            .iter()
            .map(|r| SampleRecord {
                image_path: r.image_ref.display().to_string(),
                ..r.clone()
            })
            .collect();
        let portable = DatasetTable::new(&registry, records)?;
        write_file(
            &dir.join("splits").join(format!("{d}-{s}.csv")),
            write_manifest(&portable, &registry)?,
        )?;
    }
    Ok(Ingested {
        registry,
        categorization,
        tables,
    })
}

struct ImageCache<'a> {
    cfg: &'a PipelineConfig,
    tables: &'a BTreeMap<String, DatasetTable>,
    loaded: BTreeMap<String, LoadedTable>,
}

impl ImageCache<'_> {
    fn get(&mut self, key: &str) -> Result<&LoadedTable> {
        if !self.loaded.contains_key(key) {
            let table = self
                .tables
                .get(key)
                .ok_or_else(|| Error::Lookup(format!("no table `{key}`")))?;
            let loaded = LoadedTable::load(table.clone(), self.cfg.side, &self.cfg.normalization)?;
            self.loaded.insert(key.to_string(), loaded);
        }
        Ok(&self.loaded[key])
    }

    fn concat(&mut self, keys: &[String]) -> Result<Option<LoadedTable>> {
        if keys.is_empty() {
            return Ok(None);
        }
        for k in keys {
            self.get(k)?;
        }
        let parts: Vec<&LoadedTable> = keys.iter().map(|k| &self.loaded[k]).collect();
        LoadedTable::concat(&parts).map(Some)
    }
}

fn execute(cfg: &PipelineConfig, dir: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let ing = ingest(cfg, dir).map_err(|e| e.in_stage("ingest"))?;
    let labels = ing.registry.labels().to_vec();
    let mut cache = ImageCache {
        cfg,
        tables: &ing.tables,
        loaded: BTreeMap::new(),
    };

    let mut stages = Vec::new();
    let mut finals: Vec<(String, Checkpoint)> = Vec::new();
    for (mi, model) in cfg.models.iter().enumerate() {
        let mut prev: Option<Checkpoint> = None;
        for (si, stage) in cfg.stages.iter().enumerate() {
            let mut run = || -> Result<Checkpoint> {
                let mut stage_cfg = stage.clone();
                stage_cfg.seed = cfg.stage_seed(mi, si);
                let generalist;
                let (source, provenance) = match &stage.init {
                    InitSpec::Random => (InitSource::Random { seed: stage_cfg.seed }, vec!["random".to_string()]),
                    InitSpec::PreviousStage => {
                        let p = prev.as_ref().expect("validated: not the first stage");
                        (InitSource::Checkpoint(p), p.meta.provenance.clone())
                    }
                    InitSpec::Generalist(path) => {
                        generalist = ParamStore::load(path)?;
                        (
                            InitSource::Generalist {
                                params: &generalist,
                                seed: stage_cfg.seed,
                            },
                            vec!["generalist".to_string()],
                        )
                    }
                };
                let (net, report) = init_network(source, &model.architecture, cfg.side, &labels)?;
                info!(
                    "{}/{}: init from {} ({} loaded, {} fresh)",
                    model.name,
                    stage.name,
                    report.source,
                    report.loaded.len(),
                    report.fresh.len()
                );
                let train = cache.concat(&stage.train)?.expect("validated: non-empty");
                let val = cache.concat(&stage.val)?;
                let ckpt_dir = dir.join("checkpoints").join(&model.name).join(&stage.name);
                let ctx = StageContext {
                    labels: &labels,
                    normalization: cfg.normalization,
                    provenance,
                    postmortem_dir: Some(&ckpt_dir),
                };
                let outcome = run_stage(&stage_cfg, net, &train, val.as_ref(), &ctx)?;
                outcome.checkpoint.save(&ckpt_dir)?;
                let history = dir.join("history").join(&model.name).join(format!("{}.csv", stage.name));
                save_history(&history, &outcome.history)?;
                stages.push(StageArtifact {
                    model: model.name.clone(),
                    stage: stage.name.clone(),
                    checkpoint: ckpt_dir,
                    history,
                });
                Ok(outcome.checkpoint)
            };
            let ckpt = run().map_err(|e| e.in_stage(&stage.name))?;
            prev = Some(ckpt);
            if opts.stop_after.as_deref() == Some(stage.name.as_str()) {
                break;
            }
        }
        finals.push((model.name.clone(), prev.expect("at least one stage")));
    }

    if let Some(stop) = &opts.stop_after {
        write_file(&dir.join(PARTIAL_MARKER), format!("stopped after stage {stop}\n"))?;
        return Ok(RunSummary {
            dir: dir.to_path_buf(),
            partial: true,
            stages,
            reports: Vec::new(),
        });
    }

    let eval_key = format!("{}:{}", cfg.evaluation.target, cfg.evaluation.split);
    let scores_dir = dir.join("scores");
    let mut columns: Vec<(String, PathBuf)> = Vec::new();
    (|| -> Result<()> {
        let eval = cache.get(&eval_key)?;
        for (name, ckpt) in &finals {
            let scores = predict(&ckpt.network()?, eval, &labels)?;
            let path = scores_dir.join(format!("{name}.csv"));
            scores.save(&path)?;
            columns.push((name.clone(), path));
        }
        Ok(())
    })()
    .map_err(|e| e.in_stage("predict"))?;

    if let Some(ens) = &cfg.ensemble {
        (|| -> Result<()> {
            let members: Vec<&str> = if ens.members.is_empty() {
                cfg.models.iter().map(|m| m.name.as_str()).collect()
            } else {
                ens.members.iter().map(String::as_str).collect()
            };
            // Members are read back from their score files, not re-predicted.
            let matrices = members
                .iter()
                .map(|m| ScoreMatrix::load(&scores_dir.join(format!("{m}.csv"))))
                .collect::<Result<Vec<_>>>()?;
            let averaged = average_scores(&matrices, ens.weights.as_deref())?;
            let path = scores_dir.join(format!("{}.csv", ens.name));
            averaged.save(&path)?;
            columns.push((ens.name.clone(), path));
            Ok(())
        })()
        .map_err(|e| e.in_stage("ensemble"))?;
    }

    let spec = CategorySpec::from_category_map(&ing.categorization.map).map_err(|e| e.in_stage("evaluate"))?;
    let annotations = ing.tables[&eval_key].annotation_matrix();
    let reports = columns
        .iter()
        .map(|(name, path)| {
            let scores = ScoreMatrix::load(path)?;
            let report = evaluate(&scores, &annotations, &ing.registry, &spec)?;
            report.save(&dir.join("reports"), name)?;
            Ok((name.clone(), report))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("evaluate"))?;

    (|| -> Result<()> {
        render_table(&reports, &dir.join("report"))?;
        plot_distribution(
            &ing.registry,
            &cfg.evaluation.target,
            &cfg.evaluation.thresholds,
            &dir.join("plots").join(format!("distribution-{}.png", cfg.evaluation.target)),
        )?;
        let (base_name, base) = &reports[0];
        for (name, report) in reports.iter().skip(1) {
            plot_delta(base, report, &dir.join("plots").join(format!("delta-{base_name}-vs-{name}.png")))?;
        }
        let means: serde_json::Map<String, serde_json::Value> = reports
            .iter()
            .map(|(name, r)| {
                let m: serde_json::Map<String, serde_json::Value> = CategoryName::ORDER
                    .iter()
                    .map(|c| (c.to_string(), json!(r.mean(*c))))
                    .collect();
                (name.clone(), serde_json::Value::Object(m))
            })
            .collect();
        let summary = json!({
            "evaluated": eval_key,
            "tail_unique": ing.categorization.map.tail_unique.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>(),
            "means": means,
        });
        write_file(&dir.join("summary.json"), serde_json::to_string_pretty(&summary).expect("json") + "\n")
    })()
    .map_err(|e| e.in_stage("report"))?;

    Ok(RunSummary {
        dir: dir.to_path_buf(),
        partial: false,
        stages,
        reports,
    })
}

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use ndarray::Axis;

use tailchain_core::dataset::manifest::manifest_labels;
use tailchain_core::dataset::split::SplitRatio;
use tailchain_core::dataset::{
    parse_manifest, patient_split, write_manifest, DatasetTable, Normalization, PromptManifest, PromptRequest,
    ReportTemplate,
};
use tailchain_core::engine::{
    init_network, predict, run_stage, save_history, Architecture, Checkpoint, InitSource, LoadedTable, ParamStore,
    StageConfig, StageContext,
};
use tailchain_core::pipeline::{plot_delta, plot_distribution, render_table, run_pipeline, PipelineConfig, RunOptions};
use tailchain_core::registry::{build_registry, Categorization, CategoryThresholds, DatasetDescriptor, LabelRegistry};
use tailchain_core::{average_scores, evaluate, CategorySpec, EvalReport, ScoreMatrix};

#[derive(Parser)]
#[command(name = "tailchain", version, about = "Long-tailed multi-label CXR training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a label registry from dataset manifests.
    Ingest(IngestArgs),
    /// Patient-level split of one manifest.
    Split(SplitArgs),
    /// Train one stage and save its checkpoint.
    Train(TrainArgs),
    /// Score a manifest with a checkpoint.
    Predict(PredictArgs),
    /// Average score matrices.
    Ensemble(EnsembleArgs),
    /// Per-label AP and category means for a score matrix.
    Evaluate(EvaluateArgs),
    /// Comparison table and plots from evaluation reports.
    Report(ReportArgs),
    /// Generate report-style prompts targeting tail labels.
    Prompts(PromptsArgs),
    /// Run a full pipeline from a config file.
    Pipeline(PipelineArgs),
    /// Write the planted-pattern toy corpus and its pipeline configs.
    Toy(ToyArgs),
}

/// `name=value`
fn pair(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| format!("expected name=value, got `{s}`"))
}

#[derive(Args)]
struct IngestArgs {
    /// Dataset manifest as name=path; order sets label order.
    #[arg(long = "dataset", value_parser = pair, required = true)]
    datasets: Vec<(String, String)>,
    /// Alias mapping as alias=label.
    #[arg(long = "alias", value_parser = pair)]
    aliases: Vec<(String, String)>,
    /// Dataset whose counts define Head/Medium/Tail.
    #[arg(long, requires_all = ["head_min", "medium_min"])]
    target: Option<String>,
    #[arg(long)]
    head_min: Option<u64>,
    #[arg(long)]
    medium_min: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    registry: PathBuf,
    /// Manifest as name=path.
    #[arg(long, value_parser = pair)]
    manifest: (String, String),
    /// Split fraction as name=fraction, in order.
    #[arg(long = "ratio", value_parser = pair, required = true)]
    ratios: Vec<(String, String)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    registry: PathBuf,
    /// Training manifest as name=path; repeatable.
    #[arg(long = "train", value_parser = pair, required = true)]
    train: Vec<(String, String)>,
    /// Validation manifest as name=path; repeatable.
    #[arg(long = "val", value_parser = pair)]
    val: Vec<(String, String)>,
    /// `toy-conv:8,16` or `linear`.
    #[arg(long, default_value = "toy-conv:8,16")]
    arch: String,
    #[arg(long, default_value_t = 32)]
    side: usize,
    #[arg(long, default_value = "finetune")]
    name: String,
    #[arg(long)]
    epochs: usize,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    decay_every: Option<usize>,
    #[arg(long)]
    decay_factor: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// `random`, `checkpoint:<dir>` or `generalist:<params.bin>`.
    #[arg(long, default_value = "random")]
    init: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    /// Manifest as name=path.
    #[arg(long, value_parser = pair)]
    manifest: (String, String),
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long = "scores", required = true)]
    scores: Vec<PathBuf>,
    /// One weight per member; uniform when omitted.
    #[arg(long = "weight")]
    weights: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Registry file carrying a categorization.
    #[arg(long)]
    registry: PathBuf,
    /// Annotated manifest as name=path.
    #[arg(long, value_parser = pair)]
    manifest: (String, String),
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "report")]
    name: String,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON as column=path, in column order.
    #[arg(long = "report", value_parser = pair, required = true)]
    reports: Vec<(String, String)>,
    #[arg(long)]
    out: PathBuf,
    /// Registry for the distribution plot.
    #[arg(long)]
    registry: Option<PathBuf>,
}

#[derive(Args)]
struct PromptsArgs {
    /// Registry file carrying a categorization.
    #[arg(long)]
    registry: PathBuf,
    /// JSON array of templates.
    #[arg(long)]
    templates: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Restrict to these tail labels.
    #[arg(long = "label")]
    labels: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stop after this stage.
    #[arg(long)]
    stage: Option<String>,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Ingest(a) => ingest(a).context("stage `ingest` failed"),
        Command::Split(a) => split(a).context("stage `split` failed"),
        Command::Train(a) => {
            let name = a.name.clone();
            train(a).with_context(|| format!("stage `{name}` failed"))
        }
        Command::Predict(a) => predict_cmd(a).context("stage `predict` failed"),
        Command::Ensemble(a) => ensemble(a).context("stage `ensemble` failed"),
        Command::Evaluate(a) => evaluate_cmd(a).context("stage `evaluate` failed"),
        Command::Report(a) => report(a).context("stage `report` failed"),
        Command::Prompts(a) => prompts(a).context("stage `prompts` failed"),
        Command::Pipeline(a) => pipeline(a),
        Command::Toy(a) => {
            let corpus = tailchain_core::toy::generate_toy_corpus(&a.out, a.seed)?;
            println!("{}", corpus.baseline_config.display());
            println!("{}", corpus.chained_config.display());
            println!("{}", corpus.synthetic_config.display());
            Ok(())
        }
    }
}

fn ingest(a: IngestArgs) -> anyhow::Result<()> {
    let descriptors = a
        .datasets
        .iter()
        .map(|(name, path)| {
            Ok(DatasetDescriptor {
                name: name.clone(),
                labels: manifest_labels(Path::new(path))?,
                counts: Vec::new(),
            })
        })
        .collect::<tailchain_core::Result<Vec<_>>>()?;
    let aliases =
        tailchain_core::registry::AliasTable::from_pairs(a.aliases.iter().map(|(x, y)| (x.as_str(), y.as_str())));
    let mut registry = build_registry(&descriptors, &aliases)?;
    for (name, path) in &a.datasets {
        let table = parse_manifest(Path::new(path), &registry, name)?;
        registry = registry.with_counts(name, &table.positive_counts(None))?;
    }
    let categorization = match (&a.target, a.head_min, a.medium_min) {
        (Some(t), Some(h), Some(m)) => Some(Categorization::compute(&registry, t, &CategoryThresholds::new(h, m)?)?),
        _ => None,
    };
    registry.save(&a.out, categorization.as_ref())?;
    info!("wrote registry of {} labels to {}", registry.len(), a.out.display());
    Ok(())
}

fn load_table(registry: &LabelRegistry, (name, path): &(String, String)) -> anyhow::Result<DatasetTable> {
    Ok(parse_manifest(Path::new(path), registry, name)?)
}

fn split(a: SplitArgs) -> anyhow::Result<()> {
    let (registry, _) = LabelRegistry::load(&a.registry)?;
    let table = load_table(&registry, &a.manifest)?;
    let ratios = a
        .ratios
        .iter()
        .map(|(n, f)| Ok(SplitRatio::new(n.clone(), f.parse().map_err(|_| anyhow!("bad fraction `{f}`"))?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let assignment = patient_split(&table, &ratios, a.seed)?;
    let name = &a.manifest.0;
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join(format!("{name}.json")), assignment.to_json())?;
    for r in &ratios {
        let part = assignment.table(&table, &r.name)?;
        let records = part
            .records()
            .iter()
            .map(|rec| tailchain_core::SampleRecord {
                image_path: rec.image_ref.display().to_string(),
                ..rec.clone()
            })
            .collect();
        let part = DatasetTable::new(&registry, records)?;
        std::fs::write(a.out.join(format!("{name}-{}.csv", r.name)), write_manifest(&part, &registry)?)?;
        info!("{}: {} images", r.name, part.len());
    }
    Ok(())
}

fn parse_arch(s: &str) -> anyhow::Result<Architecture> {
    if s == "linear" {
        return Ok(Architecture::Linear);
    }
    let widths = s
        .strip_prefix("toy-conv:")
        .ok_or_else(|| anyhow!("unknown architecture `{s}`"))?
        .split(',')
        .map(|w| w.trim().parse::<usize>().map_err(|_| anyhow!("bad width `{w}`")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Architecture::ToyConv { widths })
}

fn load_many(
    registry: &LabelRegistry,
    manifests: &[(String, String)],
    side: usize,
    norm: &Normalization,
) -> anyhow::Result<Option<LoadedTable>> {
    if manifests.is_empty() {
        return Ok(None);
    }
    let loaded = manifests
        .iter()
        .map(|m| Ok(LoadedTable::load(load_table(registry, m)?, side, norm)?))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let refs: Vec<&LoadedTable> = loaded.iter().collect();
    Ok(Some(LoadedTable::concat(&refs)?))
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let (registry, _) = LabelRegistry::load(&a.registry)?;
    let labels = registry.labels().to_vec();
    let arch = parse_arch(&a.arch)?;
    let norm = Normalization::default();
    let mut stage = StageConfig::new(&a.name, a.epochs);
    stage.seed = a.seed;
    if let Some(v) = a.lr {
        stage.base_lr = v;
    }
    if let Some(v) = a.decay_every {
        stage.decay_every = v;
    }
    if let Some(v) = a.decay_factor {
        stage.decay_factor = v;
    }
    if let Some(v) = a.batch_size {
        stage.batch_size = v;
    }
    stage.validate()?;

    let ckpt;
    let generalist;
    let (source, provenance) = if a.init == "random" {
        (InitSource::Random { seed: a.seed }, vec!["random".to_string()])
    } else if let Some(dir) = a.init.strip_prefix("checkpoint:") {
        ckpt = Checkpoint::load(Path::new(dir))?;
        let prov = ckpt.meta.provenance.clone();
        (InitSource::Checkpoint(&ckpt), prov)
    } else if let Some(path) = a.init.strip_prefix("generalist:") {
        generalist = ParamStore::load(Path::new(path))?;
        (
            InitSource::Generalist {
                params: &generalist,
                seed: a.seed,
            },
            vec!["generalist".to_string()],
        )
    } else {
        bail!("unknown init `{}`", a.init);
    };
    let (net, _) = init_network(source, &arch, a.side, &labels)?;
    let train = load_many(&registry, &a.train, a.side, &norm)?.expect("clap requires --train");
    let val = load_many(&registry, &a.val, a.side, &norm)?;
    let ctx = StageContext {
        labels: &labels,
        normalization: norm,
        provenance,
        postmortem_dir: Some(&a.out),
    };
    let outcome = run_stage(&stage, net, &train, val.as_ref(), &ctx)?;
    outcome.checkpoint.save(&a.out)?;
    save_history(&a.out.join("history.csv"), &outcome.history)?;
    info!(
        "saved epoch {} of stage {} to {}",
        outcome.checkpoint.meta.epoch,
        a.name,
        a.out.display()
    );
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> anyhow::Result<()> {
    let (registry, _) = LabelRegistry::load(&a.registry)?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    if ckpt.meta.labels != registry.labels() {
        bail!("checkpoint was trained on a different label registry");
    }
    let table = load_table(&registry, &a.manifest)?;
    let data = LoadedTable::load(table, ckpt.meta.side, &ckpt.meta.normalization)?;
    let scores = predict(&ckpt.network()?, &data, registry.labels())?;
    scores.save(&a.out)?;
    info!("scored {} images into {}", scores.nrows(), a.out.display());
    Ok(())
}

fn ensemble(a: EnsembleArgs) -> anyhow::Result<()> {
    let members = a
        .scores
        .iter()
        .map(|p| ScoreMatrix::load(p))
        .collect::<tailchain_core::Result<Vec<_>>>()?;
    let weights = (!a.weights.is_empty()).then_some(a.weights.as_slice());
    average_scores(&members, weights)?.save(&a.out)?;
    Ok(())
}

fn categorized(path: &Path) -> anyhow::Result<(LabelRegistry, Categorization)> {
    let (registry, cat) = LabelRegistry::load(path)?;
    let cat = cat.ok_or_else(|| anyhow!("registry {} has no categorization; ingest with --target", path.display()))?;
    Ok((registry, cat))
}

fn evaluate_cmd(a: EvaluateArgs) -> anyhow::Result<()> {
    let (registry, cat) = categorized(&a.registry)?;
    let table = load_table(&registry, &a.manifest)?;
    let scores = ScoreMatrix::load(&a.scores)?;
    // Align score rows with the manifest by image key.
    let index: HashMap<&str, usize> = scores
        .image_refs()
        .iter()
        .enumerate()
        .map(|(i, k)| (k.as_str(), i))
        .collect();
    let rows = table
        .records()
        .iter()
        .map(|r| {
            index
                .get(r.image_path.as_str())
                .copied()
                .ok_or_else(|| anyhow!("no score row for `{}`", r.image_path))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let values = scores.values().select(Axis(0), &rows);
    let keys = rows.iter().map(|&i| scores.image_refs()[i].clone()).collect();
    let aligned = ScoreMatrix::new(scores.labels().to_vec(), keys, values)?;
    let spec = CategorySpec::from_category_map(&cat.map)?;
    let report = evaluate(&aligned, &table.annotation_matrix(), &registry, &spec)?;
    report.save(&a.out, &a.name)?;
    for m in &report.means {
        println!(
            "{:<7} {}",
            m.category.to_string(),
            m.ap.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
        );
    }
    Ok(())
}

fn report(a: ReportArgs) -> anyhow::Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|(name, path)| Ok((name.clone(), EvalReport::load_json(Path::new(path))?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let table = render_table(&reports, &a.out)?;
    print!("{}", table.to_text());
    for (name, r) in reports.iter().skip(1) {
        plot_delta(&reports[0].1, r, &a.out.join(format!("delta-{}-vs-{name}.png", reports[0].0)))?;
    }
    if let Some(path) = &a.registry {
        let (registry, cat) = categorized(path)?;
        plot_distribution(
            &registry,
            &cat.dataset,
            &cat.thresholds,
            &a.out.join(format!("distribution-{}.png", cat.dataset)),
        )?;
    }
    Ok(())
}

fn prompts(a: PromptsArgs) -> anyhow::Result<()> {
    let (registry, cat) = categorized(&a.registry)?;
    let text = std::fs::read_to_string(&a.templates).with_context(|| a.templates.display().to_string())?;
    let templates: Vec<ReportTemplate> = serde_json::from_str(&text).with_context(|| a.templates.display().to_string())?;
    let request = PromptRequest {
        count: a.count,
        seed: a.seed,
        labels: (!a.labels.is_empty()).then(|| a.labels.clone()),
    };
    let manifest: PromptManifest = tailchain_core::dataset::generate_prompts(&templates, &registry, &cat.map, &request)?;
    manifest.save(&a.out)?;
    info!("wrote {} prompts to {}", manifest.len(), a.out.display());
    Ok(())
}

fn pipeline(a: PipelineArgs) -> anyhow::Result<()> {
    let config = PipelineConfig::load(&a.config).context("stage `config` failed")?;
    let opts = RunOptions {
        seed: a.seed,
        out_dir: a.out,
        stop_after: a.stage,
    };
    let summary = run_pipeline(&config, &opts)?;
    println!("{}", summary.dir.display());
    Ok(())
}

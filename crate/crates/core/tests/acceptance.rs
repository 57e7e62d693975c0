//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use tailchain_core::dataset::{parse_manifest, patient_split, SplitRatio};
use tailchain_core::engine::{lr_at, masked_bce, Checkpoint};
use tailchain_core::metrics::{ap_bruteforce_oracle, LabelInput};
use tailchain_core::pipeline::{build_table, render_table, run_pipeline, ApTable, PipelineConfig, RunOptions, RunSummary};
use tailchain_core::registry::{AliasTable, Categorization, DatasetDescriptor};
use tailchain_core::toy::generate_toy_corpus;
use tailchain_core::{
    average_precision, average_scores, build_registry, evaluate, presets, AnnotationState, CategoryName,
    CategorySpec, CategoryThresholds, DatasetTable, EvalReport, LabelRegistry, SampleRecord, ScoreMatrix,
    StageConfig,
};

const TABLE_TOL: f64 = 5e-5 + 1e-12;
const AP_TOL: f64 = 1e-12;
const BASELINE_TOL: f64 = 0.02;
const GRAD_RTOL: f64 = 1e-5;
const SPLIT_TOL: f64 = 0.02;
const ENSEMBLE_TOL: f64 = 1e-15;
const TOY_BUDGET: Duration = Duration::from_secs(600);
const TOY_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

const COLUMNS: [&str; 8] = [
    "imagenet_resnext",
    "imagenet_densenet",
    "imagenet_averaged",
    "imagenet_test",
    "cxr_resnext",
    "cxr_densenet",
    "cxr_averaged",
    "cxr_test",
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn read_csv(name: &str) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(fixture(name)).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

fn num(row: &BTreeMap<String, String>, col: &str) -> f64 {
    row[col].parse().unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- criterion 1

struct Published {
    registry: LabelRegistry,
    spec: CategorySpec,
    reports: Vec<(String, EvalReport)>,
    /// `(category, column) -> published mean`
    means: BTreeMap<(CategoryName, String), f64>,
    /// `label -> (group, per-column AP)`
    labels: BTreeMap<String, (String, Vec<f64>)>,
}

fn published() -> Published {
    let registry = presets::cxr_registry().unwrap();
    let cat = Categorization::compute(&registry, presets::MIMIC, &CategoryThresholds::mimic()).unwrap();
    let spec = CategorySpec::from_category_map(&cat.map).unwrap();
    let rows = read_csv("published_ap.csv");
    assert_eq!(rows.len(), 26);

    let mut labels = BTreeMap::new();
    let mut prevalence = vec![None; registry.len()];
    for row in &rows {
        let idx = registry.index_of(&row["label"]).unwrap();
        prevalence[idx] = Some(num(row, "prevalence"));
        let aps: Vec<f64> = COLUMNS.iter().map(|c| num(row, c)).collect();
        labels.insert(row["label"].clone(), (row["group"].clone(), aps));
    }
    let reports = COLUMNS
        .iter()
        .enumerate()
        .map(|(k, col)| {
            let inputs: Vec<LabelInput> = (0..registry.len())
                .map(|i| {
                    let (_, aps) = &labels[registry.label(i)];
                    LabelInput {
                        ap: Some(aps[k]),
                        n_pos: (prevalence[i].unwrap() * 1e6).round() as u64,
                        n_known: 1_000_000,
                    }
                })
                .collect();
            (col.to_string(), EvalReport::assemble(registry.labels(), &spec, &inputs).unwrap())
        })
        .collect();
    let mut means = BTreeMap::new();
    for row in read_csv("published_means.csv") {
        let c: CategoryName = row["category"].parse().unwrap();
        for col in COLUMNS {
            means.insert((c, col.to_string()), num(&row, col));
        }
    }
    Published {
        registry,
        spec,
        reports,
        means,
        labels,
    }
}

fn criterion_1(p: &Published) -> Outcome {
    // The grouping derived from counts must agree with the published row groups.
    for (label, (group, _)) in &p.labels {
        let i = p.registry.index_of(label).unwrap();
        let derived = if p.spec.is_tail_unique(i) {
            "Tail-U".to_string()
        } else {
            CategoryName::from(p.spec.category_of(i).unwrap()).to_string()
        };
        if &derived != group {
            return outcome(false, format!("{label} categorized as {derived}, published as {group}"));
        }
    }
    let mut misses = Vec::new();
    let mut checked = 0;
    for (col, report) in &p.reports {
        for c in CategoryName::ORDER {
            let want = p.means[&(c, col.clone())];
            let got = report.mean(c).unwrap();
            checked += 1;
            if (got - want).abs() > TABLE_TOL {
                misses.push(format!("{col}/{c} {got:.5} vs {want:.4}"));
            }
        }
    }
    let anchors = [
        ("imagenet_resnext", CategoryName::Head, 0.5014),
        ("imagenet_resnext", CategoryName::Tail, 0.1350),
        ("imagenet_resnext", CategoryName::TailU, 0.1753),
        ("cxr_averaged", CategoryName::TailU, 0.2430),
    ];
    let anchors_ok = anchors.iter().all(|(col, c, want)| {
        let r = &p.reports.iter().find(|(n, _)| n == col).unwrap().1;
        (r.mean(*c).unwrap() - want).abs() <= TABLE_TOL
    });
    outcome(
        misses.is_empty() && anchors_ok,
        format!(
            "{}/{checked} mean cells within 5e-5, anchors {}{}",
            checked - misses.len(),
            if anchors_ok { "ok" } else { "off" },
            if misses.is_empty() { String::new() } else { format!("; off: {}", misses.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

fn tie_free_scores(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let s: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
        let distinct: BTreeSet<u64> = s.iter().map(|x| x.to_bits()).collect();
        if distinct.len() == n {
            return s;
        }
    }
}

fn same_ap(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= AP_TOL,
        _ => false,
    }
}

fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let mut cases = 0u64;
    for n in 1..=10usize {
        for mask in 0u32..(1 << n) {
            let truths: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            for _ in 0..100 {
                let scores = tie_free_scores(n, &mut r);
                let fast = average_precision(&scores, &truths).unwrap();
                let slow = ap_bruteforce_oracle(&scores, &truths).unwrap();
                cases += 1;
                if !same_ap(fast, slow) {
                    return outcome(false, format!("n={n} truths={truths:?}: {fast:?} vs {slow:?}"));
                }
            }
        }
    }
    for k in 0..1000 {
        // Every other instance uses coarse scores so ties are exercised too.
        let scores: Vec<f64> = if k % 2 == 0 {
            (0..1000).map(|_| r.gen::<f64>()).collect()
        } else {
            (0..1000).map(|_| f64::from(r.gen_range(0..50u8)) / 50.0).collect()
        };
        let p: f64 = r.gen_range(0.001..0.5);
        let truths: Vec<bool> = (0..1000).map(|_| r.gen_bool(p)).collect();
        let fast = average_precision(&scores, &truths).unwrap();
        let slow = ap_bruteforce_oracle(&scores, &truths).unwrap();
        cases += 1;
        if !same_ap(fast, slow) {
            return outcome(false, format!("n=1000 instance {k}: {fast:?} vs {slow:?}"));
        }
    }
    outcome(true, format!("{cases} instances agree within 1e-12"))
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    let n = 10_000;
    let prevalences = [0.01, 0.05, 0.1, 0.25, 0.5];
    let mut worst: f64 = 0.0;
    for seed in 0..30 {
        let mut r = rng(300 + seed);
        for &p in &prevalences {
            let scores: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
            let truths: Vec<bool> = (0..n).map(|_| r.gen_bool(p)).collect();
            let prevalence = truths.iter().filter(|&&t| t).count() as f64 / n as f64;
            let ap = average_precision(&scores, &truths).unwrap().unwrap();
            worst = worst.max((ap - prevalence).abs());
        }
    }
    outcome(
        worst <= BASELINE_TOL,
        format!("max |AP - prevalence| = {worst:.4} over 30 seeds x 5 labels"),
    )
}

// ---------------------------------------------------------------- criterion 4

fn random_annotations(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Array2<AnnotationState> {
    Array2::from_shape_fn((rows, cols), |_| match r.gen_range(0..3) {
        0 => AnnotationState::Positive,
        1 => AnnotationState::Negative,
        _ => AnnotationState::Unknown,
    })
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let logits = Array2::from_shape_fn((4, 6), |_| r.gen_range(-4.0..4.0));
        let ann = random_annotations(4, 6, &mut r);
        let analytic = masked_bce(&logits, &ann).unwrap().grad;
        for idx in [(0usize, 0usize), (1, 2), (2, 5), (3, 3), (0, 4), (3, 1)] {
            let mut up = logits.clone();
            up[idx] += h;
            let mut down = logits.clone();
            down[idx] -= h;
            let numeric = (masked_bce(&up, &ann).unwrap().loss - masked_bce(&down, &ann).unwrap().loss) / (2.0 * h);
            let a = analytic[idx];
            let scale = a.abs().max(numeric.abs());
            if scale > 1e-9 {
                worst = worst.max((a - numeric).abs() / scale);
            }
            if !ann[idx].is_known() && a != 0.0 {
                return outcome(false, "non-zero gradient at an Unknown entry");
            }
        }
        let base = masked_bce(&logits, &ann).unwrap().loss;
        let mut moved = logits.clone();
        for (i, a) in ann.indexed_iter() {
            if !a.is_known() {
                moved[i] = r.gen_range(-1e3..1e3);
            }
        }
        if masked_bce(&moved, &ann).unwrap().loss.to_bits() != base.to_bits() {
            return outcome(false, "loss changed when Unknown logits moved");
        }
    }
    let unknown = Array2::from_elem((4, 6), AnnotationState::Unknown);
    let logits = Array2::from_shape_fn((4, 6), |(i, j)| (i * 6 + j) as f64 - 10.0);
    let empty = masked_bce(&logits, &unknown).unwrap();
    let empty_ok = empty.loss == 0.0 && empty.grad.iter().all(|g| *g == 0.0);
    outcome(
        worst <= GRAD_RTOL && empty_ok,
        format!("max relative gradient error {worst:.2e}, Unknown invariance bit-exact, all-Unknown loss {}", empty.loss),
    )
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Outcome {
    let stage = StageConfig::new("finetune", 20);
    let want = [(0, 1e-4), (5, 5e-5), (10, 2.5e-5), (15, 1.25e-5)];
    let got: Vec<f64> = want.iter().map(|(e, _)| lr_at(&stage, *e).unwrap()).collect();
    let pass = want.iter().zip(&got).all(|((_, w), g)| w == g);
    outcome(pass, format!("lr at epochs 0/5/10/15 = {got:?}"))
}

// ---------------------------------------------------------------- criterion 6

fn feasible(n: usize, fractions: &[f64]) -> bool {
    let nf = n as f64;
    let bounds: Vec<(i64, i64)> = fractions
        .iter()
        .map(|f| (((f - SPLIT_TOL) * nf).ceil().max(1.0) as i64, ((f + SPLIT_TOL) * nf).floor() as i64))
        .collect();
    bounds.iter().all(|(lo, hi)| lo <= hi)
        && bounds.iter().map(|b| b.0).sum::<i64>() <= n as i64
        && bounds.iter().map(|b| b.1).sum::<i64>() >= n as i64
}

fn criterion_6() -> Outcome {
    let registry = build_registry(&[DatasetDescriptor::new("d", &["A", "B"])], &AliasTable::new()).unwrap();
    let mut r = rng(6);
    let mut checked_ratio = 0;
    for t in 0..200u64 {
        let patients = r.gen_range(2..=500);
        let mut records = Vec::new();
        for p in 0..patients {
            for k in 0..r.gen_range(1..=6) {
                records.push(SampleRecord {
                    image_path: format!("p{p}/{k}.png"),
                    image_ref: PathBuf::from(format!("p{p}/{k}.png")),
                    patient_id: format!("patient-{p}"),
                    dataset: "d".into(),
                    view: None,
                    synthetic: false,
                    annotations: vec![AnnotationState::Negative; 2],
                });
            }
        }
        let table = DatasetTable::new(&registry, records).unwrap();
        let ratios: Vec<SplitRatio> = if t % 2 == 0 {
            vec![SplitRatio::new("train", 0.9), SplitRatio::new("val", 0.1)]
        } else {
            vec![SplitRatio::new("train", 0.8), SplitRatio::new("val", 0.1), SplitRatio::new("test", 0.1)]
        };
        let split = patient_split(&table, &ratios, t).unwrap();
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        let mut covered = 0;
        let mut counts = Vec::new();
        for s in &split.splits {
            covered += s.records.len();
            let mut pats = BTreeSet::new();
            for &i in &s.records {
                let pid = table.record(i).patient_id.as_str();
                pats.insert(pid);
                if let Some(prev) = owner.insert(pid, &s.name) {
                    if prev != s.name {
                        return outcome(false, format!("table {t}: {pid} in {prev} and {}", s.name));
                    }
                }
            }
            counts.push(pats.len());
        }
        if covered != table.len() {
            return outcome(false, format!("table {t}: {covered} of {} records assigned", table.len()));
        }
        let fractions: Vec<f64> = ratios.iter().map(|x| x.fraction).collect();
        if feasible(patients, &fractions) {
            checked_ratio += 1;
            for (c, f) in counts.iter().zip(&fractions) {
                if (*c as f64 / patients as f64 - f).abs() > SPLIT_TOL + 1e-12 {
                    return outcome(false, format!("table {t}: {counts:?} of {patients} patients vs {fractions:?}"));
                }
            }
        }
    }
    outcome(
        true,
        format!("200 tables without patient overlap; ratios within 2% on {checked_ratio} feasible tables"),
    )
}

// ---------------------------------------------------------------- criterion 9 (arithmetic)

fn random_matrix(rows: usize, labels: &[String], r: &mut ChaCha8Rng) -> ScoreMatrix {
    let refs = (0..rows).map(|i| format!("img{i}.png")).collect();
    ScoreMatrix::new(labels.to_vec(), refs, Array2::from_shape_fn((rows, labels.len()), |_| r.gen::<f64>())).unwrap()
}

fn independent_mean(members: &[ScoreMatrix]) -> Array2<f64> {
    let (rows, cols) = members[0].values().dim();
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        members.iter().map(|m| m.values()[[i, j]]).sum::<f64>() / members.len() as f64
    })
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn ensemble_arithmetic() -> std::result::Result<String, String> {
    let mut r = rng(9);
    let labels: Vec<String> = ["A", "B", "C", "D"].map(String::from).to_vec();
    let mut worst: f64 = 0.0;
    for k in 1..=6 {
        for _ in 0..20 {
            let members: Vec<ScoreMatrix> = (0..k).map(|_| random_matrix(50, &labels, &mut r)).collect();
            let avg = average_scores(&members, None).map_err(|e| e.to_string())?;
            worst = worst.max(max_abs_diff(avg.values(), &independent_mean(&members)));
            if k == 1 && avg != members[0] {
                return Err("singleton average is not the identity".into());
            }
        }
    }
    if worst > ENSEMBLE_TOL {
        return Err(format!("max deviation {worst:e}"));
    }
    Ok(format!("max deviation {worst:e}, singleton exact"))
}

// ---------------------------------------------------------------- criterion 10

fn criterion_10(p: &Published) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let rendered = render_table(&p.reports, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let parsed = ApTable::from_csv(&text).unwrap();
    if parsed != rendered || parsed != build_table(&p.reports).unwrap() {
        return outcome(false, "re-parsed table differs from the rendered table");
    }
    for row in &parsed.rows {
        let label = row.label.as_deref().unwrap();
        let (_, aps) = &p.labels[label];
        if row.values.iter().zip(aps).any(|(v, a)| v.map(f64::to_bits) != Some(a.to_bits())) {
            return outcome(false, format!("{label} values changed"));
        }
    }
    for m in &parsed.means {
        for ((_, report), v) in p.reports.iter().zip(&m.values) {
            if v.map(f64::to_bits) != report.mean(m.group).map(f64::to_bits) {
                return outcome(false, format!("{} mean changed", m.group));
            }
        }
    }
    outcome(
        true,
        format!("{} label rows and {} mean rows round-trip bit-exactly", parsed.rows.len(), parsed.means.len()),
    )
}

// ---------------------------------------------------------------- toy runs

struct ToyRuns {
    base: RunSummary,
    chained: RunSummary,
    chained_time: Duration,
}

fn toy_runs(root: &Path, seed: u64) -> ToyRuns {
    let corpus = generate_toy_corpus(&root.join(format!("corpus-{seed}")), seed).unwrap();
    let opts = RunOptions {
        seed: Some(seed),
        out_dir: Some(root.join(format!("runs-{seed}"))),
        stop_after: None,
    };
    let base = run_pipeline(&PipelineConfig::load(&corpus.baseline_config).unwrap(), &opts).unwrap();
    let start = Instant::now();
    let chained = run_pipeline(&PipelineConfig::load(&corpus.chained_config).unwrap(), &opts).unwrap();
    ToyRuns {
        base,
        chained,
        chained_time: start.elapsed(),
    }
}

fn tail(run: &RunSummary) -> f64 {
    let (_, report) = run.reports.iter().find(|(n, _)| n == "Averaged").unwrap();
    report.mean(CategoryName::Tail).unwrap()
}

fn criterion_7(run: &RunSummary) -> Outcome {
    let mut details = Vec::new();
    for model in ["ConvA", "ConvB"] {
        let dir = |stage: &str| {
            run.stages
                .iter()
                .find(|a| a.model == model && a.stage == stage)
                .map(|a| a.checkpoint.clone())
                .unwrap()
        };
        let pretrain_bytes = std::fs::read(dir("pretrain").join("params.bin")).unwrap();
        let pretrain_digest: String = Sha256::digest(&pretrain_bytes).iter().map(|b| format!("{b:02x}")).collect();
        let finetune = Checkpoint::load(&dir("finetune")).unwrap();
        if finetune.meta.init_digest != pretrain_digest {
            return outcome(false, format!("{model}: finetune did not start from the saved pretrain parameters"));
        }
        if finetune.meta.provenance != ["random", "pretrain", "finetune"] {
            return outcome(false, format!("{model}: provenance {:?}", finetune.meta.provenance));
        }
        details.push(format!("{model} {}", finetune.meta.provenance.join(" -> ")));
    }
    outcome(true, details.join("; "))
}

fn criterion_8(runs: &[(u64, f64, f64, Duration)]) -> Outcome {
    let wins = runs.iter().filter(|(_, b, c, _)| c >= b).count();
    let slowest = runs.iter().map(|r| r.3).max().unwrap();
    let per_seed: Vec<String> = runs
        .iter()
        .map(|(s, b, c, _)| format!("seed {s}: {b:.3} -> {c:.3}"))
        .collect();
    outcome(
        slowest < TOY_BUDGET && wins >= 4,
        format!(
            "slowest chained run {:.1}s; chained Tail >= baseline in {wins}/5 ({})",
            slowest.as_secs_f64(),
            per_seed.join(", ")
        ),
    )
}

fn toy_ensemble(run: &RunSummary) -> std::result::Result<String, String> {
    let dir = &run.dir;
    let load = |name: &str| ScoreMatrix::load(&dir.join("scores").join(format!("{name}.csv"))).map_err(|e| e.to_string());
    let members = [load("ConvA")?, load("ConvB")?];
    let stored = load("Averaged")?;
    let dev = max_abs_diff(stored.values(), &independent_mean(&members));
    if dev > ENSEMBLE_TOL {
        return Err(format!("stored Averaged scores deviate by {dev:e}"));
    }
    let (registry, cat) = LabelRegistry::load(&dir.join("registry.json")).map_err(|e| e.to_string())?;
    let spec = CategorySpec::from_category_map(&cat.unwrap().map).map_err(|e| e.to_string())?;
    let table = parse_manifest(&dir.join("splits").join("target-test.csv"), &registry, "target").map_err(|e| e.to_string())?;
    let aligned = table
        .records()
        .iter()
        .zip(stored.image_refs())
        .all(|(rec, key)| Path::new(&rec.image_path).ends_with(key));
    if !aligned || table.len() != stored.nrows() {
        return Err("score rows do not follow the evaluation manifest".into());
    }
    let averaged = average_scores(&members, None).map_err(|e| e.to_string())?;
    let report = evaluate(&averaged, &table.annotation_matrix(), &registry, &spec).map_err(|e| e.to_string())?;
    let (_, reported) = run.reports.iter().find(|(n, _)| n == "Averaged").unwrap();
    for c in CategoryName::ORDER {
        if report.mean(c) != reported.mean(c) {
            return Err(format!("{c} mean differs when rebuilt from score files"));
        }
    }
    Ok("toy Averaged column rebuilt from member score files".into())
}

fn main() {
    let mut lines: Vec<(u32, Outcome, Duration)> = Vec::new();
    let mut run = |id: u32, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let t = start.elapsed();
        println!("criterion {id:>2} {} ({:.2}s) {}", if o.pass { "PASS" } else { "FAIL" }, t.as_secs_f64(), o.detail);
        lines.push((id, o, t));
    };

    let published = published();
    run(1, &mut || criterion_1(&published));
    run(2, &mut criterion_2);
    run(3, &mut criterion_3);
    run(4, &mut criterion_4);
    run(5, &mut criterion_5);
    run(6, &mut criterion_6);

    let root = tempfile::tempdir().unwrap();
    let mut seeds = Vec::new();
    let mut first: Option<ToyRuns> = None;
    for seed in TOY_SEEDS {
        let runs = toy_runs(root.path(), seed);
        seeds.push((seed, tail(&runs.base), tail(&runs.chained), runs.chained_time));
        if first.is_none() {
            first = Some(runs);
        }
    }
    let first = first.unwrap();
    run(7, &mut || criterion_7(&first.chained));
    run(8, &mut || criterion_8(&seeds));
    run(9, &mut || match (ensemble_arithmetic(), toy_ensemble(&first.chained)) {
        (Ok(a), Ok(b)) => outcome(true, format!("{a}; {b}")),
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    });
    run(10, &mut || criterion_10(&published));

    let failed: Vec<u32> = lines.iter().filter(|(_, o, _)| !o.pass).map(|(id, _, _)| *id).collect();
    println!("{} of {} criteria passed", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}

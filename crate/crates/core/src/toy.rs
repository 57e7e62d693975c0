//! Planted-pattern corpus for desk-scale end-to-end runs.
//!
//! 64x64 grayscale images over a noisy background. Each of the 8 labels has a
//! texture patch; a positive image carries its patches at random positions.
//! The target dataset is long-tailed (400/400/100/100/25/25/10/10 positives)
//! and two pretraining sources annotate overlapping label subsets with plenty
//! of positives for two of the four tail labels. The remaining two tail labels
//! are annotated only by the target.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::image::save_gray_png;
use crate::error::{write_file, Result};

pub const SIDE: usize = 64;
pub const LABELS: [&str; 8] = [
    "Blob", "Bars", "Columns", "Ring", "Checker", "Hole", "Slant", "Cross",
];
/// Positives per label in the target dataset.
pub const TARGET_COUNTS: [usize; 8] = [400, 400, 100, 100, 25, 25, 10, 10];
pub const TARGET: &str = "target";

struct Source {
    name: &'static str,
    labels: &'static [usize],
    images: usize,
    /// Probability that an image carries each annotated label.
    rate: f64,
}

const SOURCES: [Source; 2] = [
    Source {
        name: "source-a",
        labels: &[0, 1, 2, 4, 6],
        images: 900,
        rate: 0.3,
    },
    Source {
        name: "source-b",
        labels: &[1, 3, 4, 6],
        images: 900,
        rate: 0.3,
    },
];
const TARGET_IMAGES: usize = 1200;
const TEST_IMAGES: usize = 480;
const TEST_RATE: f64 = 0.15;
const SYNTHETIC_IMAGES: usize = 120;
/// Share of target cells left Unknown to exercise masking.
const UNKNOWN_RATE: f64 = 0.02;

/// Texture patch for `label` at (`x`, `y`), drawn additively.
fn plant(img: &mut [f32], label: usize, x: usize, y: usize, amp: f32) {
    let size = 16usize;
    let c = size as f32 / 2.0 - 0.5;
    for dy in 0..size {
        for dx in 0..size {
            let (fx, fy) = (dx as f32 - c, dy as f32 - c);
            let r = (fx * fx + fy * fy).sqrt();
            let v = match label {
                0 => (r <= 6.5) as u8 as f32,
                1 => ((dy / 3) % 2 == 0) as u8 as f32,
                2 => ((dx / 3) % 2 == 0) as u8 as f32,
                3 => ((4.5..=7.5).contains(&r)) as u8 as f32,
                4 => (((dx / 4) + (dy / 4)) % 2 == 0) as u8 as f32,
                5 => -((r <= 6.5) as u8 as f32),
                6 => (((dx + dy) / 3) % 2 == 0) as u8 as f32,
                _ => ((fx.abs() <= 1.5) || (fy.abs() <= 1.5)) as u8 as f32,
            };
            let idx = (y + dy) * SIDE + x + dx;
            img[idx] += amp * v;
        }
    }
}

fn render(labels: &[usize], rng: &mut ChaCha8Rng) -> Vec<f32> {
    let base: f32 = rng.gen_range(0.3..0.45);
    let (gx, gy): (f32, f32) = (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
    let mut img: Vec<f32> = (0..SIDE * SIDE)
        .map(|i| {
            let (x, y) = ((i % SIDE) as f32 / SIDE as f32, (i / SIDE) as f32 / SIDE as f32);
            base + gx * x + gy * y + rng.gen_range(-0.12..0.12)
        })
        .collect();
    for &l in labels {
        let x = rng.gen_range(1..SIDE - 17);
        let y = rng.gen_range(1..SIDE - 17);
        let amp = rng.gen_range(0.25..0.45);
        plant(&mut img, l, x, y, amp);
    }
    img
}

/// Picks exactly `counts[l]` positive rows for every label.
fn exact_positives(n: usize, counts: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut rows = vec![Vec::new(); n];
    for (l, &c) in counts.iter().enumerate() {
        for i in sample(rng, n, c.min(n)).into_iter() {
            rows[i].push(l);
        }
    }
    rows
}

fn random_positives(n: usize, labels: &[usize], rate: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    (0..n)
        .map(|_| labels.iter().copied().filter(|_| rng.gen_bool(rate)).collect())
        .collect()
}

struct ManifestWriter<'a> {
    columns: &'a [usize],
    text: String,
}

impl<'a> ManifestWriter<'a> {
    fn new(columns: &'a [usize]) -> Self {
        let mut text = String::from("image_path,patient_id,view");
        for &c in columns {
            text.push(',');
            text.push_str(LABELS[c]);
        }
        text.push('\n');
        ManifestWriter { columns, text }
    }

    fn row(&mut self, path: &str, patient: &str, positives: &[usize], unknown: &[usize]) {
        let _ = write!(self.text, "{path},{patient},PA");
        for c in self.columns {
            let cell = if unknown.contains(c) {
                ""
            } else if positives.contains(c) {
                "1"
            } else {
                "0"
            };
            self.text.push(',');
            self.text.push_str(cell);
        }
        self.text.push('\n');
    }
}

/// Writes one dataset's images and manifest; patients own 1-3 consecutive images.
fn write_dataset(
    dir: &Path,
    name: &str,
    columns: &[usize],
    rows: &[Vec<usize>],
    unknown_rate: f64,
    synthetic: bool,
    rng: &mut ChaCha8Rng,
) -> Result<PathBuf> {
    let mut m = ManifestWriter::new(columns);
    let mut patient = 0usize;
    let mut left = 0usize;
    for (i, pos) in rows.iter().enumerate() {
        let rel = format!("images/{name}/{i:05}.png");
        save_gray_png(&dir.join(&rel), SIDE, SIDE, &render(pos, rng))?;
        let unknown: Vec<usize> = columns.iter().copied().filter(|_| rng.gen_bool(unknown_rate)).collect();
        if synthetic {
            m.row(&rel, "", pos, &[]);
            continue;
        }
        if left == 0 {
            patient += 1;
            left = rng.gen_range(1..=3);
        }
        left -= 1;
        m.row(&rel, &format!("{name}-p{patient:05}"), pos, &unknown);
    }
    let path = dir.join(format!("{name}.csv"));
    write_file(&path, m.text)?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub dir: PathBuf,
    /// Single finetune stage on the target from random initialization. The
    /// sources are still registered so Tail-U matches the chained run.
    pub baseline_config: PathBuf,
    /// Joint pretraining on both sources, then finetuning on the target.
    pub chained_config: PathBuf,
    /// Baseline plus generated tail-label samples in the target training split.
    pub synthetic_config: PathBuf,
}

const HEAD: &str = r#"seed = 0
out_dir = "runs"
side = 32

[[datasets]]
name = "target"
manifest = "target.csv"
splits = [{ name = "train", fraction = 0.9 }, { name = "val", fraction = 0.1 }]
holdout = { test = "target-test.csv" }
"#;

const SOURCES_TOML: &str = r#"
[[datasets]]
name = "source-a"
manifest = "source-a.csv"
splits = [{ name = "train", fraction = 0.9 }, { name = "val", fraction = 0.1 }]

[[datasets]]
name = "source-b"
manifest = "source-b.csv"
splits = [{ name = "train", fraction = 0.9 }, { name = "val", fraction = 0.1 }]
"#;

const MODELS: &str = r#"
[[models]]
name = "ConvA"
architecture = { kind = "toy-conv", widths = [8, 16] }

[[models]]
name = "ConvB"
architecture = { kind = "toy-conv", widths = [12, 12] }
"#;

const PRETRAIN: &str = r#"
[[stages]]
name = "pretrain"
train = ["source-a:train", "source-b:train"]
val = ["source-a:val", "source-b:val"]
epochs = 8
base_lr = 0.003
decay_every = 4
batch_size = 16
init = "random"
"#;

const FINETUNE: &str = r#"
[[stages]]
name = "finetune"
train = ["target:train"]
val = ["target:val"]
epochs = 10
base_lr = 0.003
decay_every = 5
batch_size = 16
"#;

const TAIL: &str = r#"
[ensemble]
name = "Averaged"

[evaluation]
target = "target"
split = "test"
thresholds = { head_min = 200, medium_min = 50 }
"#;

/// Generates the corpus and its pipeline configs under `dir`.
pub fn generate_toy_corpus(dir: &Path, seed: u64) -> Result<ToyCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..LABELS.len()).collect();

    let rows = exact_positives(TARGET_IMAGES, &TARGET_COUNTS, &mut rng);
    write_dataset(dir, TARGET, &all, &rows, UNKNOWN_RATE, false, &mut rng)?;
    let rows = random_positives(TEST_IMAGES, &all, TEST_RATE, &mut rng);
    write_dataset(dir, "target-test", &all, &rows, 0.0, false, &mut rng)?;
    for s in &SOURCES {
        let rows = random_positives(s.images, s.labels, s.rate, &mut rng);
        write_dataset(dir, s.name, s.labels, &rows, 0.0, false, &mut rng)?;
    }
    // Each generated sample shows exactly one tail label.
    let rows: Vec<Vec<usize>> = (0..SYNTHETIC_IMAGES).map(|i| vec![4 + i % 4]).collect();
    write_dataset(dir, "target-synthetic", &all, &rows, 0.0, true, &mut rng)?;

    let baseline = format!("{HEAD}{SOURCES_TOML}{MODELS}{FINETUNE}init = \"random\"\n{TAIL}");
    let chained = format!("{HEAD}{SOURCES_TOML}{MODELS}{PRETRAIN}{FINETUNE}init = \"previous-stage\"\n{TAIL}");
    let synthetic_head = HEAD.replace(
        "holdout = { test = \"target-test.csv\" }\n",
        "holdout = { test = \"target-test.csv\" }\nsynthetic = \"target-synthetic.csv\"\n",
    );
    let synthetic = format!("{synthetic_head}{SOURCES_TOML}{MODELS}{FINETUNE}init = \"random\"\n{TAIL}");
    let corpus = ToyCorpus {
        dir: dir.to_path_buf(),
        baseline_config: dir.join("baseline.toml"),
        chained_config: dir.join("chained.toml"),
        synthetic_config: dir.join("synthetic.toml"),
    };
    write_file(&corpus.baseline_config, baseline)?;
    write_file(&corpus.chained_config, chained)?;
    write_file(&corpus.synthetic_config, synthetic)?;
    Ok(corpus)
}

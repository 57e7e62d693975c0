//! Seeded inputs shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tailchain_core::registry::{AliasTable, Categorization, DatasetDescriptor};
use tailchain_core::{build_registry, AnnotationState, CategorySpec, CategoryThresholds, LabelRegistry, ScoreMatrix};

/// Uniform scores and Bernoulli(`prevalence`) truths.
pub fn ranking_problem(n: usize, prevalence: f64, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = (0..n).map(|_| rng.gen()).collect();
    let truths = (0..n).map(|_| rng.gen_bool(prevalence)).collect();
    (scores, truths)
}

/// Logits in [-4, 4) and annotations that are 20% Unknown.
pub fn loss_batch(rows: usize, cols: usize, seed: u64) -> (Array2<f64>, Array2<AnnotationState>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-4.0..4.0));
    let ann = Array2::from_shape_fn((rows, cols), |_| match rng.gen_range(0..10) {
        0 | 1 => AnnotationState::Unknown,
        2 | 3 => AnnotationState::Positive,
        _ => AnnotationState::Negative,
    });
    (logits, ann)
}

pub struct EvalFixture {
    pub registry: LabelRegistry,
    pub spec: CategorySpec,
    pub scores: ScoreMatrix,
    pub annotations: Array2<AnnotationState>,
}

/// `labels` labels with geometrically decaying counts over `rows` images.
pub fn eval_fixture(rows: usize, labels: usize, seed: u64) -> EvalFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..labels).map(|i| format!("L{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let counts: Vec<u64> = (0..labels).map(|i| 50_000 >> i.min(20)).collect();
    let registry = build_registry(&[DatasetDescriptor::new("d", &refs).with_counts(&counts)], &AliasTable::new()).unwrap();
    let cat = Categorization::compute(&registry, "d", &CategoryThresholds::mimic()).unwrap();
    let spec = CategorySpec::from_category_map(&cat.map).unwrap();
    let values = Array2::from_shape_fn((rows, labels), |_| rng.gen());
    let annotations = Array2::from_shape_fn((rows, labels), |(_, j)| {
        let p = 0.5 / (j + 1) as f64;
        if rng.gen_bool(0.05) {
            AnnotationState::Unknown
        } else if rng.gen_bool(p) {
            AnnotationState::Positive
        } else {
            AnnotationState::Negative
        }
    });
    let image_refs = (0..rows).map(|i| format!("{i}.png")).collect();
    let scores = ScoreMatrix::new(names, image_refs, values).unwrap();
    EvalFixture {
        registry,
        spec,
        scores,
        annotations,
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use proptest::prelude::*;

use tailchain_core::dataset::manifest::{parse_manifest_text, write_manifest, ManifestKind};
use tailchain_core::dataset::{patient_split, SplitRatio};
use tailchain_core::engine::masked_bce;
use tailchain_core::metrics::ap_bruteforce_oracle;
use tailchain_core::registry::{categorize, AliasTable, Categorization, DatasetDescriptor};
use tailchain_core::{
    average_precision, average_scores, build_registry, AnnotationState, Category, CategoryThresholds,
    DatasetTable, LabelRegistry, SampleRecord, ScoreMatrix,
};

const NAMES: [&str; 8] = ["Alpha", "Beta", "Gamma", "Delta", "Epsilon", "Zeta", "Eta", "Theta"];

fn state() -> impl Strategy<Value = AnnotationState> {
    prop_oneof![
        Just(AnnotationState::Positive),
        Just(AnnotationState::Negative),
        Just(AnnotationState::Unknown),
    ]
}

fn descriptors() -> impl Strategy<Value = Vec<DatasetDescriptor>> {
    prop::collection::vec(prop::sample::subsequence(NAMES.to_vec(), 1..=NAMES.len()), 1..5).prop_map(|sets| {
        sets.iter()
            .enumerate()
            .map(|(k, labels)| DatasetDescriptor::new(format!("d{k}"), labels))
            .collect()
    })
}

fn coverage_names(reg: &LabelRegistry) -> BTreeMap<String, BTreeSet<String>> {
    reg.datasets()
        .iter()
        .map(|d| (d.name.clone(), d.coverage.iter().map(|&i| reg.label(i).to_string()).collect()))
        .collect()
}

fn one_dataset_registry(labels: usize) -> LabelRegistry {
    build_registry(&[DatasetDescriptor::new("d", &NAMES[..labels])], &AliasTable::new()).unwrap()
}

fn table_from(registry: &LabelRegistry, rows: &[(usize, Vec<AnnotationState>)]) -> DatasetTable {
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, (patient, ann))| SampleRecord {
            image_path: format!("img/{i:04}.png"),
            image_ref: PathBuf::from(format!("/data/img/{i:04}.png")),
            patient_id: format!("p{patient}"),
            dataset: "d".into(),
            view: (i % 3 == 0).then(|| "PA".to_string()),
            synthetic: false,
            annotations: ann.clone(),
        })
        .collect();
    DatasetTable::new(registry, records).unwrap()
}

fn rows(labels: usize) -> impl Strategy<Value = Vec<(usize, Vec<AnnotationState>)>> {
    prop::collection::vec((0usize..40, prop::collection::vec(state(), labels)), 1..80)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn registry_is_invariant_to_dataset_order(descs in descriptors(), rot in 0usize..5) {
        let forward = build_registry(&descs, &AliasTable::new()).unwrap();
        let mut shuffled = descs.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let other = build_registry(&shuffled, &AliasTable::new()).unwrap();
        let a: BTreeSet<&String> = forward.labels().iter().collect();
        let b: BTreeSet<&String> = other.labels().iter().collect();
        prop_assert_eq!(a, b);
        prop_assert_eq!(coverage_names(&forward), coverage_names(&other));
    }

    #[test]
    fn categories_partition_and_respect_count_order(
        counts in prop::collection::vec(0u64..60_000, NAMES.len()),
        others in prop::collection::vec(prop::sample::subsequence(NAMES.to_vec(), 0..4), 0..3),
    ) {
        let mut descs = vec![DatasetDescriptor::new("target", &NAMES).with_counts(&counts)];
        for (k, labels) in others.iter().enumerate() {
            descs.push(DatasetDescriptor::new(format!("src{k}"), labels));
        }
        let reg = build_registry(&descs, &AliasTable::new()).unwrap();
        let thresholds = CategoryThresholds::mimic();
        let map = categorize(&reg, "target", &thresholds).unwrap();
        let covered: BTreeSet<usize> = reg.coverage("target").unwrap().clone();
        let union: BTreeSet<usize> = Category::ALL.iter().flat_map(|c| map.members(*c)).collect();
        prop_assert_eq!(&union, &covered);
        let total: usize = Category::ALL.iter().map(|c| map.members(*c).len()).sum();
        prop_assert_eq!(total, covered.len());
        for i in 0..NAMES.len() {
            for j in 0..NAMES.len() {
                if counts[i] > counts[j] {
                    prop_assert!(map.category(i).unwrap() <= map.category(j).unwrap());
                }
            }
        }
        let cat = Categorization::compute(&reg, "target", &thresholds).unwrap();
        let elsewhere: BTreeSet<&str> = others.iter().flatten().copied().collect();
        for i in covered {
            let unique = cat.map.category(i) == Some(Category::Tail) && !elsewhere.contains(reg.label(i));
            prop_assert_eq!(cat.map.tail_unique.contains(&i), unique);
        }
    }

    #[test]
    fn manifest_round_trips(rows in rows(5)) {
        let reg = one_dataset_registry(5);
        let table = table_from(&reg, &rows);
        let text = write_manifest(&table, &reg).unwrap();
        let back = parse_manifest_text(&text, Path::new("/data"), Path::new("m.csv"), &reg, "d", ManifestKind::Real).unwrap();
        prop_assert_eq!(back.len(), table.len());
        for (a, b) in table.records().iter().zip(back.records()) {
            prop_assert_eq!(&a.image_path, &b.image_path);
            prop_assert_eq!(&a.image_ref, &b.image_ref);
            prop_assert_eq!(&a.patient_id, &b.patient_id);
            prop_assert_eq!(&a.view, &b.view);
            prop_assert_eq!(&a.annotations, &b.annotations);
        }
        prop_assert_eq!(write_manifest(&back, &reg).unwrap(), text);
    }

    #[test]
    fn splits_keep_patients_whole_and_are_seeded(rows in rows(2), seed in any::<u64>()) {
        let reg = one_dataset_registry(2);
        let table = table_from(&reg, &rows);
        prop_assume!(table.patients().len() >= 2);
        let ratios = vec![SplitRatio::new("train", 0.9), SplitRatio::new("val", 0.1)];
        let a = patient_split(&table, &ratios, seed).unwrap();
        prop_assert_eq!(&a, &patient_split(&table, &ratios, seed).unwrap());
        let mut owner = BTreeMap::new();
        let mut seen = 0;
        for s in &a.splits {
            prop_assert!(!s.records.is_empty());
            seen += s.records.len();
            for &i in &s.records {
                let prev = owner.insert(table.record(i).patient_id.clone(), s.name.clone());
                prop_assert!(prev.is_none() || prev.as_ref() == Some(&s.name));
            }
        }
        prop_assert_eq!(seen, table.len());
    }

    #[test]
    fn unknown_logits_never_change_the_loss(
        cells in prop::collection::vec((state(), -30.0f64..30.0, -1e6f64..1e6), 1..60),
    ) {
        let n = cells.len();
        let ann = Array2::from_shape_vec((1, n), cells.iter().map(|c| c.0).collect()).unwrap();
        let logits = Array2::from_shape_vec((1, n), cells.iter().map(|c| c.1).collect()).unwrap();
        let moved = Array2::from_shape_vec(
            (1, n),
            cells.iter().map(|c| if c.0.is_known() { c.1 } else { c.2 }).collect(),
        )
        .unwrap();
        let a = masked_bce(&logits, &ann).unwrap();
        let b = masked_bce(&moved, &ann).unwrap();
        prop_assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        prop_assert_eq!(&a.grad, &b.grad);
        for (g, s) in a.grad.iter().zip(ann.iter()) {
            if !s.is_known() {
                prop_assert_eq!(*g, 0.0);
            }
        }
    }

    #[test]
    fn ap_depends_only_on_the_ranking(
        items in prop::collection::vec((0u16..200, any::<bool>()), 1..120),
    ) {
        let scores: Vec<f64> = items.iter().map(|i| f64::from(i.0) / 200.0).collect();
        let truths: Vec<bool> = items.iter().map(|i| i.1).collect();
        let ap = average_precision(&scores, &truths).unwrap();
        let oracle = ap_bruteforce_oracle(&scores, &truths).unwrap();
        prop_assert_eq!(ap.is_some(), oracle.is_some());
        if let (Some(a), Some(b)) = (ap, oracle) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        // Order-preserving transform: identical ranking, identical AP bits.
        let squashed: Vec<f64> = items.iter().map(|i| f64::from(i.0) * 3.0 + 7.0).collect();
        prop_assert_eq!(average_precision(&squashed, &truths).unwrap(), ap);
        if let Some(v) = ap {
            prop_assert!((0.0..=1.0).contains(&v));
            // Worst case puts every positive last: precision i/(n-k+i) >= i/n.
            let k = truths.iter().filter(|&&t| t).count() as f64;
            prop_assert!(v >= (k + 1.0) / (2.0 * truths.len() as f64) - 1e-12);
        }
    }

    #[test]
    fn ensemble_is_bounded_and_order_free(
        values in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 12), 1..6),
    ) {
        let labels = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let refs: Vec<String> = (0..4).map(|i| format!("r{i}")).collect();
        let members: Vec<ScoreMatrix> = values
            .iter()
            .map(|v| ScoreMatrix::new(labels.clone(), refs.clone(), Array2::from_shape_vec((4, 3), v.clone()).unwrap()).unwrap())
            .collect();
        let avg = average_scores(&members, None).unwrap();
        let mut reversed = members.clone();
        reversed.reverse();
        let rev = average_scores(&reversed, None).unwrap();
        for ((i, j), v) in avg.values().indexed_iter() {
            let column: Vec<f64> = members.iter().map(|m| m.values()[[i, j]]).collect();
            let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= *v && *v <= hi);
            prop_assert!((v - rev.values()[[i, j]]).abs() <= 1e-15);
        }
    }
}

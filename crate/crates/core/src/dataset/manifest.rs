//! CSV manifests: `image_path,patient_id,view,<label_1>,...,<label_k>`.
//!
//! Label cells are `1`, `0`, `-1` or empty. Image paths are relative to the
//! manifest's directory. Labels the dataset does not annotate are Unknown.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use super::table::{DatasetTable, SampleRecord, SYNTHETIC_PATIENT_PREFIX};
use super::AnnotationState;
use crate::error::{read_to_string, Error, Result};
use crate::registry::LabelRegistry;

pub const FIXED_COLUMNS: [&str; 3] = ["image_path", "patient_id", "view"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestKind {
    /// Real images: label columns must be annotated by the dataset and
    /// `patient_id` is required.
    Real,
    /// Generated images: any registry label may appear and missing patient
    /// ids become `synthetic:<row>`.
    Synthetic,
}

pub fn parse_manifest(path: &Path, registry: &LabelRegistry, dataset: &str) -> Result<DatasetTable> {
    let text = read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest_text(&text, base, path, registry, dataset, ManifestKind::Real)
}

pub fn parse_synthetic_manifest(
    path: &Path,
    registry: &LabelRegistry,
    dataset: &str,
) -> Result<DatasetTable> {
    let text = read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest_text(&text, base, path, registry, dataset, ManifestKind::Synthetic)
}

/// Label names from a manifest header, in column order.
pub fn manifest_labels(path: &Path) -> Result<Vec<String>> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::parse(path, e))?;
    check_fixed_columns(header, path)?;
    Ok(header.iter().skip(FIXED_COLUMNS.len()).map(|s| s.trim().to_string()).collect())
}

fn check_fixed_columns(header: &csv::StringRecord, origin: &Path) -> Result<()> {
    for (pos, expected) in FIXED_COLUMNS.iter().enumerate() {
        if header.get(pos).map(str::trim) != Some(*expected) {
            return Err(Error::Schema {
                path: origin.to_path_buf(),
                message: format!(
                    "column {} must be `{expected}`, found `{}`",
                    pos + 1,
                    header.get(pos).unwrap_or("")
                ),
            });
        }
    }
    Ok(())
}

pub fn parse_manifest_text(
    text: &str,
    base_dir: &Path,
    origin: &Path,
    registry: &LabelRegistry,
    dataset: &str,
    kind: ManifestKind,
) -> Result<DatasetTable> {
    let schema = |message: String| Error::Schema {
        path: origin.to_path_buf(),
        message,
    };
    let coverage = match kind {
        ManifestKind::Real => Some(registry.coverage(dataset)?),
        ManifestKind::Synthetic => None,
    };

    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::parse(origin, e))?.clone();
    check_fixed_columns(&header, origin)?;

    let mut columns = Vec::new();
    let mut seen = HashSet::new();
    for name in header.iter().skip(FIXED_COLUMNS.len()) {
        let idx = registry
            .index_of(name)
            .ok_or_else(|| schema(format!("unknown label column `{name}`")))?;
        if let Some(cov) = coverage {
            if !cov.contains(&idx) {
                return Err(schema(format!(
                    "label column `{name}` is not annotated by dataset `{dataset}`"
                )));
            }
        }
        if !seen.insert(idx) {
            return Err(schema(format!("label column `{name}` appears twice")));
        }
        columns.push(idx);
    }

    let mut records = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row_no = n + 2;
        let row = row.map_err(|e| Error::Row {
            path: origin.to_path_buf(),
            row: row_no,
            message: e.to_string(),
        })?;
        let row_err = |message: String| Error::Row {
            path: origin.to_path_buf(),
            row: row_no,
            message,
        };
        let image_path = row.get(0).unwrap_or("").trim().to_string();
        if image_path.is_empty() {
            return Err(row_err("empty image_path".into()));
        }
        let mut patient_id = row.get(1).unwrap_or("").trim().to_string();
        if patient_id.is_empty() {
            match kind {
                ManifestKind::Real => {
                    return Err(schema(format!("row {row_no}: missing patient_id on a real sample")))
                }
                ManifestKind::Synthetic => {
                    patient_id = format!("{SYNTHETIC_PATIENT_PREFIX}{}", records.len())
                }
            }
        }
        let view = row.get(2).map(str::trim).filter(|v| !v.is_empty()).map(String::from);

        let mut annotations = vec![AnnotationState::Unknown; registry.len()];
        for (cell, &idx) in row.iter().skip(FIXED_COLUMNS.len()).zip(&columns) {
            annotations[idx] = AnnotationState::parse_cell(cell).ok_or_else(|| {
                row_err(format!("malformed cell `{cell}` in column `{}`", registry.label(idx)))
            })?;
        }
        records.push(SampleRecord {
            image_ref: resolve(base_dir, &image_path),
            image_path,
            patient_id,
            dataset: dataset.to_string(),
            view,
            synthetic: kind == ManifestKind::Synthetic,
            annotations,
        });
    }
    DatasetTable::new(registry, records)
}

fn resolve(base: &Path, image_path: &str) -> PathBuf {
    let p = Path::new(image_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Canonical manifest text for `table`.
///
/// Label columns are every label annotated by a dataset in the table (plus
/// any label with a known value, for synthetic records), in registry order.
/// Unknown cells are written empty.
pub fn write_manifest(table: &DatasetTable, registry: &LabelRegistry) -> Result<String> {
    table.check_registry(registry)?;
    let mut columns = BTreeSet::new();
    for name in table.datasets() {
        if let Ok(cov) = registry.coverage(name) {
            columns.extend(cov.iter().copied());
        }
    }
    for r in table.records() {
        columns.extend(
            r.annotations
                .iter()
                .enumerate()
                .filter(|(_, a)| a.is_known())
                .map(|(j, _)| j),
        );
    }

    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    let header: Vec<&str> = FIXED_COLUMNS
        .iter()
        .copied()
        .chain(columns.iter().map(|&j| registry.label(j)))
        .collect();
    writer.write_record(&header).map_err(|e| Error::Contract(e.to_string()))?;
    for r in table.records() {
        let mut row: Vec<&str> = vec![&r.image_path, &r.patient_id, r.view.as_deref().unwrap_or("")];
        row.extend(columns.iter().map(|&j| r.annotations[j].as_cell()));
        writer.write_record(&row).map_err(|e| Error::Contract(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("manifest is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{build_registry, AliasTable, DatasetDescriptor};
    use AnnotationState::*;

    fn reg() -> LabelRegistry {
        build_registry(
            &[
                DatasetDescriptor::new("cxr", &["Edema", "Mass", "Nodule"]),
                DatasetDescriptor::new("other", &["Hernia"]),
            ],
            &AliasTable::new(),
        )
        .unwrap()
    }

    fn parse(text: &str) -> Result<DatasetTable> {
        parse_manifest_text(text, Path::new("/data"), Path::new("m.csv"), &reg(), "cxr", ManifestKind::Real)
    }

    #[test]
    fn direct_mapping() {
        let t = parse("image_path,patient_id,view,Edema,Mass\na.png,p1,PA,1,\n").unwrap();
        let r = t.record(0);
        assert_eq!(r.annotations, vec![Positive, Unknown, Unknown, Unknown]);
        assert_eq!(r.image_ref, PathBuf::from("/data/a.png"));
        assert_eq!(r.view.as_deref(), Some("PA"));
        assert!(!r.synthetic);
    }

    #[test]
    fn uncertain_is_unknown_and_round_trips() {
        let text = "image_path,patient_id,view,Edema,Mass,Nodule\n\
                    a.png,p1,,1,-1,0\n\
                    b.png,p1,AP,0,1,-1.0\n\
                    c.png,p2,,,0,1\n";
        let t = parse(text).unwrap();
        assert_eq!(t.record(0).annotations[1], Unknown);
        assert_eq!(t.record(1).annotations[2], Unknown);
        let canonical = write_manifest(&t, &reg()).unwrap();
        assert_eq!(
            canonical,
            "image_path,patient_id,view,Edema,Mass,Nodule\n\
             a.png,p1,,1,,0\n\
             b.png,p1,AP,0,1,\n\
             c.png,p2,,,0,1\n"
        );
        let again = parse(&canonical).unwrap();
        assert_eq!(again, t);
        assert_eq!(write_manifest(&again, &reg()).unwrap(), canonical);
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(
            parse("image_path,patient_id,view,Fracture\na.png,p,,1\n"),
            Err(Error::Schema { .. })
        ));
        // Registered label the dataset does not annotate.
        assert!(matches!(
            parse("image_path,patient_id,view,Hernia\na.png,p,,1\n"),
            Err(Error::Schema { .. })
        ));
        assert!(matches!(
            parse("path,patient_id,view,Edema\na.png,p,,1\n"),
            Err(Error::Schema { .. })
        ));
        assert!(matches!(
            parse("image_path,patient_id,view,Edema\na.png,,,1\n"),
            Err(Error::Schema { .. })
        ));
        assert!(matches!(
            parse("image_path,patient_id,view,Edema,edema\na.png,p,,1,1\n"),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn malformed_cell_reports_row() {
        let err = parse("image_path,patient_id,view,Edema\na.png,p,,1\nb.png,q,,maybe\n").unwrap_err();
        match err {
            Error::Row { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected {other}"),
        }
        let err = parse("image_path,patient_id,view,Edema\na.png,p,,1,1\n").unwrap_err();
        assert!(matches!(err, Error::Row { row: 2, .. }));
    }

    #[test]
    fn synthetic_rows_get_ids() {
        let t = parse_manifest_text(
            "image_path,patient_id,view,Hernia,Mass\ns0.png,,,1,\ns1.png,,,,1\n",
            Path::new(""),
            Path::new("syn.csv"),
            &reg(),
            "synthetic",
            ManifestKind::Synthetic,
        )
        .unwrap();
        assert_eq!(t.record(0).patient_id, "synthetic:0");
        assert_eq!(t.record(1).patient_id, "synthetic:1");
        assert!(t.records().iter().all(|r| r.synthetic));
        assert_eq!(t.record(0).annotations[3], Positive);
    }

    #[test]
    fn partial_coverage_leaves_unknowns() {
        // 3 of 4 registry labels annotated: every record keeps >= 1 Unknown.
        let t = parse("image_path,patient_id,view,Edema,Mass,Nodule\na.png,p,,1,0,0\n").unwrap();
        assert!(t.records().iter().all(|r| r.annotations.len() - r.known_count() >= 1));
    }
}

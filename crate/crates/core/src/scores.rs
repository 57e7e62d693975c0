use std::path::Path;

use ndarray::Array2;

use crate::error::{read_to_string, write_file, Error, Result};

/// N x L per-sample, per-label probabilities. Columns follow registry order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    labels: Vec<String>,
    image_refs: Vec<String>,
    values: Array2<f64>,
}

impl ScoreMatrix {
    pub fn new(labels: Vec<String>, image_refs: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.ncols() != labels.len() || values.nrows() != image_refs.len() {
            return Err(Error::Contract(format!(
                "score matrix is {}x{} but has {} rows keys and {} labels",
                values.nrows(),
                values.ncols(),
                image_refs.len(),
                labels.len()
            )));
        }
        if let Some(((i, j), v)) = values
            .indexed_iter()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Contract(format!("score {v} at ({i}, {j}) is outside [0, 1]")));
        }
        Ok(ScoreMatrix {
            labels,
            image_refs,
            values,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn image_refs(&self) -> &[String] {
        &self.image_refs
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn same_binding(&self, other: &ScoreMatrix) -> bool {
        self.labels == other.labels && self.image_refs == other.image_refs
    }

    /// CSV with an `image_ref` key column followed by one column per label.
    /// Values use the shortest representation that parses back exactly.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["image_ref".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (key, row) in self.image_refs.iter().zip(self.values.rows()) {
            let mut rec = vec![key.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| Error::parse(origin, e))?.clone();
        if header.get(0) != Some("image_ref") {
            return Err(Error::parse(origin, "first column must be `image_ref`"));
        }
        let labels: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut refs = Vec::new();
        let mut flat = Vec::new();
        for (n, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(origin, e))?;
            refs.push(rec.get(0).unwrap_or("").to_string());
            for cell in rec.iter().skip(1) {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(origin, format!("row {}: bad score `{cell}`", n + 2)))?;
                flat.push(v);
            }
        }
        let values = Array2::from_shape_vec((refs.len(), labels.len()), flat)
            .map_err(|e| Error::parse(origin, e))?;
        Self::new(labels, refs, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&read_to_string(path)?, path)
    }
}

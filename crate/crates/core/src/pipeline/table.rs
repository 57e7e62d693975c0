//! Side-by-side AP table over several evaluation reports.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{write_file, Error, Result};
use crate::metrics::{CategoryName, EvalReport};

const GROUPS: [CategoryName; 4] = [
    CategoryName::Head,
    CategoryName::Medium,
    CategoryName::Tail,
    CategoryName::TailU,
];

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    /// Label group for label rows; the mean's category for the means block.
    pub group: CategoryName,
    /// Label name, or `None` for a mean row.
    pub label: Option<String>,
    pub prevalence: Option<f64>,
    /// One value per report column.
    pub values: Vec<Option<f64>>,
    /// Column indices holding the row's best value.
    pub best: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApTable {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
    pub means: Vec<TableRow>,
}

fn best_of(values: &[Option<f64>]) -> Vec<usize> {
    let max = values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v == Some(max))
        .map(|(i, _)| i)
        .collect()
}

/// Lays out per-label APs grouped Head/Medium/Tail/Tail-U and copies each
/// report's stored category means; nothing is recomputed.
pub fn build_table(reports: &[(String, EvalReport)]) -> Result<ApTable> {
    let (_, first) = reports
        .first()
        .ok_or_else(|| Error::Contract("no reports to tabulate".into()))?;
    let key = |r: &EvalReport| -> Vec<(String, CategoryName)> {
        r.labels.iter().map(|l| (l.label.clone(), l.group())).collect()
    };
    let first_key = key(first);
    if let Some((name, _)) = reports.iter().find(|(_, r)| key(r) != first_key) {
        return Err(Error::Incompatible(format!(
            "report `{name}` covers different labels or categories than `{}`",
            reports[0].0
        )));
    }
    let mut rows = Vec::new();
    for group in GROUPS {
        for (i, l) in first.labels.iter().enumerate().filter(|(_, l)| l.group() == group) {
            let values: Vec<Option<f64>> = reports.iter().map(|(_, r)| r.labels[i].ap).collect();
            rows.push(TableRow {
                group,
                label: Some(l.label.clone()),
                prevalence: l.prevalence,
                best: best_of(&values),
                values,
            });
        }
    }
    let means = CategoryName::ORDER
        .into_iter()
        .map(|c| {
            let values: Vec<Option<f64>> = reports.iter().map(|(_, r)| r.mean(c)).collect();
            TableRow {
                group: c,
                label: None,
                prevalence: first.mean_prevalence(c),
                best: best_of(&values),
                values,
            }
        })
        .collect();
    Ok(ApTable {
        columns: reports.iter().map(|(n, _)| n.clone()).collect(),
        rows,
        means,
    })
}

impl ApTable {
    /// `group,label,prevalence,<column>...,best` with mean rows labelled
    /// `#mean`. `best` lists the best columns joined by `|`.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["group".to_string(), "label".into(), "prevalence".into()];
        header.extend(self.columns.iter().cloned());
        header.push("best".into());
        w.write_record(&header).expect("in-memory write");
        for row in self.rows.iter().chain(&self.means) {
            let mut rec = vec![
                row.group.to_string(),
                row.label.clone().unwrap_or_else(|| "#mean".into()),
                fmt(row.prevalence),
            ];
            rec.extend(row.values.iter().map(|v| fmt(*v)));
            rec.push(
                row.best
                    .iter()
                    .map(|&i| self.columns[i].as_str())
                    .collect::<Vec<_>>()
                    .join("|"),
            );
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| Error::parse("<table csv>", m);
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(format!("bad number `{s}`")))
            }
        };
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        let n = header.len();
        if n < 4 || &header[0] != "group" || &header[1] != "label" || &header[2] != "prevalence" || &header[n - 1] != "best" {
            return Err(bad("unexpected header".into()));
        }
        let columns: Vec<String> = header.iter().skip(3).take(n - 4).map(String::from).collect();
        let mut table = ApTable {
            columns,
            rows: Vec::new(),
            means: Vec::new(),
        };
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let best = rec[n - 1]
                .split('|')
                .filter(|s| !s.is_empty())
                .map(|name| {
                    table
                        .columns
                        .iter()
                        .position(|c| c == name)
                        .ok_or_else(|| bad(format!("unknown column `{name}` in best")))
                })
                .collect::<Result<Vec<_>>>()?;
            let row = TableRow {
                group: rec[0].parse()?,
                label: (&rec[1] != "#mean").then(|| rec[1].to_string()),
                prevalence: opt(&rec[2])?,
                values: (3..n - 1).map(|i| opt(&rec[i])).collect::<Result<_>>()?,
                best,
            };
            if row.label.is_some() {
                table.rows.push(row);
            } else {
                table.means.push(row);
            }
        }
        Ok(table)
    }

    /// Fixed-width rendering with 4-decimal values; `*` marks the best value.
    pub fn to_text(&self) -> String {
        let label_w = self
            .rows
            .iter()
            .filter_map(|r| r.label.as_ref().map(|l| l.len()))
            .chain(["Mean (Medium)".len()])
            .max()
            .unwrap_or(8);
        let col_w = self.columns.iter().map(|c| c.len()).max().unwrap_or(0).max(7) + 1;
        let cell = |v: Option<f64>, best: bool| {
            let s = v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
            if best {
                format!("{s}*")
            } else {
                s
            }
        };
        let mut out = String::new();
        let _ = write!(out, "{:<label_w$}  {:>10}", "Label", "Prevalence");
        for c in &self.columns {
            let _ = write!(out, "  {c:>col_w$}");
        }
        out.push('\n');
        let mut current = None;
        let write_row = |out: &mut String, name: &str, row: &TableRow| {
            let _ = write!(out, "{name:<label_w$}  {:>10}", cell(row.prevalence, false));
            for (i, v) in row.values.iter().enumerate() {
                let _ = write!(out, "  {:>col_w$}", cell(*v, row.best.contains(&i)));
            }
            out.push('\n');
        };
        for row in &self.rows {
            if current != Some(row.group) {
                let _ = writeln!(out, "[{}]", row.group);
                current = Some(row.group);
            }
            write_row(&mut out, row.label.as_deref().unwrap_or(""), row);
        }
        let _ = writeln!(out, "[Mean]");
        for row in &self.means {
            write_row(&mut out, &format!("Mean ({})", row.group), row);
        }
        out
    }
}

/// Writes `table.csv` and `table.txt` into `dir`.
pub fn render_table(reports: &[(String, EvalReport)], dir: &Path) -> Result<ApTable> {
    let table = build_table(reports)?;
    write_file(&dir.join("table.csv"), table.to_csv())?;
    write_file(&dir.join("table.txt"), table.to_text())?;
    Ok(table)
}

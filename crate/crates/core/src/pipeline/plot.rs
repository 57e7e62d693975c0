//! Raster bar charts: label distributions and per-category AP deltas.
//!
//! Charts carry no text; the returned summaries hold the plotted values.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::metrics::{CategoryName, EvalReport};
use crate::registry::{Category, CategoryThresholds, LabelRegistry};

const WIDTH: u32 = 800;
const HEIGHT: u32 = 400;
const MARGIN: u32 = 20;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([0, 0, 0]);
const MARKER: Rgb<u8> = Rgb([200, 30, 30]);

fn category_color(c: Category) -> Rgb<u8> {
    match c {
        Category::Head => Rgb([31, 119, 180]),
        Category::Medium => Rgb([44, 160, 44]),
        Category::Tail => Rgb([255, 127, 14]),
    }
}

fn fill(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, color: Rgb<u8>) {
    for y in y0.min(y1)..=y0.max(y1).min(HEIGHT - 1) {
        for x in x0.min(x1)..=x0.max(x1).min(WIDTH - 1) {
            img.put_pixel(x, y, color);
        }
    }
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionPlot {
    /// Bars in drawing order (descending count).
    pub bars: Vec<(String, u64, Category)>,
    /// Boundary markers drawn, as counts.
    pub markers: Vec<u64>,
}

/// Descending bar chart of `dataset`'s positive counts with horizontal
/// markers at the Head and Medium boundaries.
pub fn plot_distribution(
    registry: &LabelRegistry,
    dataset: &str,
    thresholds: &CategoryThresholds,
    path: &Path,
) -> Result<DistributionPlot> {
    thresholds.validate()?;
    let entry = registry.dataset(dataset)?;
    let mut bars: Vec<(String, u64, Category)> = entry
        .coverage
        .iter()
        .map(|&i| {
            let n = entry.counts.get(&i).copied().unwrap_or(0);
            (registry.label(i).to_string(), n, thresholds.classify(n))
        })
        .collect();
    bars.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let markers = vec![thresholds.head_min, thresholds.medium_min];

    let top = bars
        .iter()
        .map(|b| b.1)
        .chain(markers.iter().copied())
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let plot_h = (HEIGHT - 2 * MARGIN) as f64;
    let base = HEIGHT - MARGIN;
    let y_of = |v: u64| base - ((v as f64 / top) * plot_h).round() as u32;

    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BACKGROUND);
    if !bars.is_empty() {
        let slot = (WIDTH - 2 * MARGIN) / bars.len() as u32;
        let gap = (slot / 5).max(1);
        for (k, (_, n, cat)) in bars.iter().enumerate() {
            let x0 = MARGIN + k as u32 * slot + gap / 2;
            let x1 = x0 + slot.saturating_sub(gap).max(1) - 1;
            if *n > 0 {
                fill(&mut img, x0, y_of(*n), x1, base, category_color(*cat));
            }
        }
    }
    for &m in &markers {
        let y = y_of(m);
        for x in (MARGIN..WIDTH - MARGIN).step_by(2) {
            img.put_pixel(x, y, MARKER);
        }
    }
    fill(&mut img, MARGIN, base, WIDTH - MARGIN, base, AXIS);
    fill(&mut img, MARGIN, MARGIN, MARGIN, base, AXIS);
    save(&img, path)?;
    Ok(DistributionPlot { bars, markers })
}

/// Variant minus base category mean for each category defined in both.
pub fn category_deltas(base: &EvalReport, variant: &EvalReport) -> Result<Vec<(CategoryName, f64)>> {
    let key = |r: &EvalReport| -> Vec<(String, CategoryName)> {
        r.labels.iter().map(|l| (l.label.clone(), l.group())).collect()
    };
    if key(base) != key(variant) {
        return Err(Error::Incompatible(
            "reports do not share labels and categories".into(),
        ));
    }
    Ok(CategoryName::ORDER
        .into_iter()
        .filter_map(|c| Some((c, variant.mean(c)? - base.mean(c)?)))
        .collect())
}

/// Bar per category of (variant mean - base mean) around a zero line.
pub fn plot_delta(base: &EvalReport, variant: &EvalReport, path: &Path) -> Result<Vec<(CategoryName, f64)>> {
    let deltas = category_deltas(base, variant)?;
    let extent = deltas.iter().map(|(_, d)| d.abs()).fold(0.0, f64::max);
    let extent = if extent > 0.0 { extent } else { 1.0 };
    let mid = HEIGHT / 2;
    let half = (HEIGHT / 2 - MARGIN) as f64;
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BACKGROUND);
    if !deltas.is_empty() {
        let slot = (WIDTH - 2 * MARGIN) / deltas.len() as u32;
        for (k, (c, d)) in deltas.iter().enumerate() {
            let x0 = MARGIN + k as u32 * slot + slot / 6;
            let x1 = x0 + slot * 2 / 3;
            let h = ((d.abs() / extent) * half).round() as u32;
            let color = match c {
                CategoryName::All => Rgb([90, 90, 90]),
                CategoryName::Head => category_color(Category::Head),
                CategoryName::Medium => category_color(Category::Medium),
                CategoryName::Tail => category_color(Category::Tail),
                CategoryName::TailU => Rgb([214, 39, 40]),
            };
            if h > 0 {
                if *d > 0.0 {
                    fill(&mut img, x0, mid - h, x1, mid, color);
                } else {
                    fill(&mut img, x0, mid, x1, mid + h, color);
                }
            }
        }
    }
    fill(&mut img, MARGIN, mid, WIDTH - MARGIN, mid, AXIS);
    save(&img, path)?;
    Ok(deltas)
}

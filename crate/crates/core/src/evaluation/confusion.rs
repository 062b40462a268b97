use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::label_indices;
use crate::data::LabelSchema;
use crate::error::{Error, Result};

/// `counts[i][j]` = samples with gold label `i` predicted as label `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

/// Recall of one class; classes without gold support are left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecall {
    pub label: String,
    pub support: u64,
    pub recall: f64,
}

impl ConfusionMatrix {
    pub fn new<P: AsRef<str>, G: AsRef<str>>(pred: &[P], gold: &[G], schema: &LabelSchema) -> Result<Self> {
        let (p, g) = label_indices(pred, gold, schema)?;
        let c = schema.len();
        let mut counts = vec![vec![0u64; c]; c];
        for (pi, gi) in p.into_iter().zip(g) {
            counts[gi][pi] += 1;
        }
        Ok(ConfusionMatrix {
            labels: schema.labels().to_vec(),
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Gold class counts.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn per_class_recall(&self) -> Vec<ClassRecall> {
        self.labels
            .iter()
            .zip(&self.counts)
            .enumerate()
            .filter_map(|(i, (label, row))| {
                let support: u64 = row.iter().sum();
                (support > 0).then(|| ClassRecall {
                    label: label.clone(),
                    support,
                    recall: row[i] as f64 / support as f64,
                })
            })
            .collect()
    }

    /// Header row `gold\predicted,<labels>`, then one row per gold label.
    pub fn to_csv(&self) -> String {
        let quote = |s: &str| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        let mut out = String::from("gold\\predicted");
        for l in &self.labels {
            write!(out, ",{}", quote(l)).unwrap();
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(&quote(l));
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Row-normalised heatmap: one square cell per entry, white for 0 and
    /// dark blue for a full row, with a grey grid.
    pub fn heatmap(&self, cell: u32) -> RgbImage {
        let c = self.labels.len() as u32;
        let size = c * cell + 1;
        let mut img = RgbImage::from_pixel(size, size, Rgb([160, 160, 160]));
        let rows = self.row_sums();
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let frac = if rows[i] == 0 { 0.0 } else { v as f64 / rows[i] as f64 };
                let shade = |full: f64| (255.0 - frac * (255.0 - full)).round() as u8;
                let color = Rgb([shade(8.0), shade(48.0), shade(107.0)]);
                for y in 1..cell {
                    for x in 1..cell {
                        img.put_pixel(j as u32 * cell + x, i as u32 * cell + y, color);
                    }
                }
            }
        }
        img
    }

    pub fn write_heatmap(&self, path: &Path) -> Result<()> {
        self.heatmap(32)
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Runtime(format!("writing {}: {e}", path.display())))
    }
}

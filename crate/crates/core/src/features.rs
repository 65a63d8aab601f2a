//! Feature CSV: one row per manifest entry.
//!
//! Header is `path,label,source,alpha,degenerate_channels,f_0,…,f_{D-1}`.
//! `degenerate_channels` lists the zero-filled channels (`""`, `"G"`, `"RB"`,
//! …) or is `failed` for images that could not be processed, whose feature
//! cells are `NaN`.

use std::fmt::Write as _;
use std::path::Path;

use crate::classify::FeatureRecord;
use crate::em::{alpha_for_len, extract_ct, trace_len, ConvolutionalTrace, EmConfig};
use crate::error::{Error, Result};
use crate::image_io::{load_image, resolve_entry_path, ManifestEntry};

pub const FAILED_TAG: &str = "failed";

#[derive(Clone, Debug, PartialEq)]
pub enum RowStatus {
    /// Channels that were zero-filled, as in [`ConvolutionalTrace::degenerate_tag`].
    Ok {
        degenerate: String,
    },
    Failed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub path: String,
    pub label: u32,
    pub source: String,
    pub status: RowStatus,
    pub features: Vec<f64>,
}

impl FeatureRow {
    pub fn from_trace(path: &str, label: u32, source: &str, ct: &ConvolutionalTrace) -> Self {
        FeatureRow {
            path: path.to_string(),
            label,
            source: source.to_string(),
            status: RowStatus::Ok {
                degenerate: ct.degenerate_tag(),
            },
            features: ct.features.clone(),
        }
    }

    pub fn failed(path: &str, label: u32, source: &str, alpha: usize) -> Self {
        FeatureRow {
            path: path.to_string(),
            label,
            source: source.to_string(),
            status: RowStatus::Failed,
            features: vec![f64::NAN; trace_len(alpha)],
        }
    }

    pub fn is_failed(&self) -> bool {
        self.status == RowStatus::Failed
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub alpha: usize,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(alpha: usize) -> Self {
        FeatureTable {
            alpha,
            rows: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        trace_len(self.alpha)
    }

    pub fn header(alpha: usize) -> String {
        let mut h = String::from("path,label,source,alpha,degenerate_channels");
        for i in 0..trace_len(alpha) {
            let _ = write!(h, ",f_{i}");
        }
        h
    }

    /// Floats use 17 significant digits so values survive a round trip.
    pub fn to_csv(&self) -> String {
        let mut out = Self::header(self.alpha);
        out.push('\n');
        for row in &self.rows {
            let tag = match &row.status {
                RowStatus::Ok { degenerate } => degenerate.as_str(),
                RowStatus::Failed => FAILED_TAG,
            };
            let _ = write!(
                out,
                "{},{},{},{},{tag}",
                row.path, row.label, row.source, self.alpha
            );
            for v in &row.features {
                if v.is_nan() {
                    out.push_str(",NaN");
                } else {
                    let _ = write!(out, ",{v:.16e}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("feature CSV is empty".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 6
            || cols[..5] != ["path", "label", "source", "alpha", "degenerate_channels"]
        {
            return Err(Error::Parse(format!(
                "unexpected feature CSV header: {header}"
            )));
        }
        let dim = cols.len() - 5;
        let alpha = dim
            .is_multiple_of(3)
            .then(|| alpha_for_len(dim / 3))
            .flatten()
            .ok_or_else(|| {
                Error::Parse(format!("{dim} feature columns is not a valid trace length"))
            })?;
        if header != Self::header(alpha) {
            return Err(Error::Parse(format!(
                "unexpected feature CSV header: {header}"
            )));
        }
        let mut table = FeatureTable::new(alpha);
        for (n, line) in lines.enumerate() {
            let lineno = n + 2;
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != cols.len() {
                return Err(Error::Parse(format!(
                    "line {lineno}: expected {} cells, found {}",
                    cols.len(),
                    cells.len()
                )));
            }
            let label: u32 = cells[1]
                .parse()
                .map_err(|_| Error::Parse(format!("line {lineno}: bad label {:?}", cells[1])))?;
            if cells[3] != alpha.to_string() {
                return Err(Error::Parse(format!(
                    "line {lineno}: alpha {} disagrees with header width",
                    cells[3]
                )));
            }
            let status = match cells[4] {
                FAILED_TAG => RowStatus::Failed,
                tag if tag.chars().all(|c| "RGB".contains(c)) => RowStatus::Ok {
                    degenerate: tag.to_string(),
                },
                tag => {
                    return Err(Error::Parse(format!(
                        "line {lineno}: bad degenerate_channels {tag:?}"
                    )))
                }
            };
            let features = cells[5..]
                .iter()
                .map(|c| {
                    c.parse::<f64>().map_err(|_| {
                        Error::Parse(format!("line {lineno}: bad feature value {c:?}"))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if status != RowStatus::Failed && features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("line {lineno}: non-finite feature")));
            }
            table.rows.push(FeatureRow {
                path: cells[0].to_string(),
                label,
                source: cells[2].to_string(),
                status,
                features,
            });
        }
        Ok(table)
    }

    /// Classifier input; failed rows are skipped.
    pub fn records(&self) -> Vec<FeatureRecord> {
        self.rows
            .iter()
            .filter(|r| !r.is_failed())
            .map(|r| FeatureRecord::new(r.features.clone(), r.label, &r.source))
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &FeatureRow> {
        self.rows.iter().filter(|r| r.is_failed())
    }
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FeatureTable::parse(&text)
}

pub fn write_features(table: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, table.to_csv()).map_err(|e| Error::io(path, e))
}

/// Loads and fingerprints one manifest entry. On failure the row is marked
/// `failed` and the cause is returned alongside it.
pub fn extract_entry(
    manifest_path: &Path,
    entry: &ManifestEntry,
    config: &EmConfig,
) -> (FeatureRow, Option<Error>) {
    let path = resolve_entry_path(manifest_path, &entry.path);
    match load_image(&path).and_then(|img| extract_ct(&img, config)) {
        Ok(ct) => (
            FeatureRow::from_trace(&entry.path, entry.label, &entry.source, &ct),
            None,
        ),
        Err(e) => (
            FeatureRow::failed(&entry.path, entry.label, &entry.source, config.alpha),
            Some(e),
        ),
    }
}

/// Concatenates tables that must share one kernel size.
pub fn merge_tables(tables: Vec<FeatureTable>) -> Result<FeatureTable> {
    let mut iter = tables.into_iter();
    let mut merged = iter
        .next()
        .ok_or_else(|| Error::Validation("no feature tables given".into()))?;
    for t in iter {
        if t.alpha != merged.alpha {
            return Err(Error::Validation(format!(
                "feature dimension mismatch: {} vs {}",
                merged.dim(),
                t.dim()
            )));
        }
        merged.rows.extend(t.rows);
    }
    Ok(merged)
}

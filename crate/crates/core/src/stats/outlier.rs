//! Outlier matrix over the anchor table.
//!
//! Each coordinate of a standardized anchor is a mean of N unit-variance
//! values, so under the null hypothesis it is approximately N(0, 1/N). A
//! coordinate is flagged when `|value| > z * sigma / sqrt(n)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{FeatureTable, StatsError};
use crate::au::{Emotion, AU_COLUMNS, AU_COUNT};
use crate::fmt_real;

/// Standardized coordinates have unit variance under the null.
const NULL_SIGMA: f64 = 1.0;

pub fn outlier_threshold(z: f64, sigma: f64, n: u64) -> Result<f64, StatsError> {
    if n == 0 {
        return Err(StatsError::BadParams("n must be at least 1".into()));
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(StatsError::BadParams(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if !z.is_finite() || z < 0.0 {
        return Err(StatsError::BadParams(format!("z must be non-negative, got {z}")));
    }
    Ok(z * sigma / (n as f64).sqrt())
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided confidence level for a critical value.
pub fn confidence_for_z(z: f64) -> f64 {
    2.0 * std_normal().cdf(z) - 1.0
}

/// Two-sided critical value for a confidence level in (0, 1).
pub fn z_for_confidence(confidence: f64) -> Result<f64, StatsError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::BadParams(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    Ok(std_normal().inverse_cdf((1.0 + confidence) / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierCell {
    pub value: f64,
    pub is_outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierRow {
    pub emotion: Emotion,
    pub level: u8,
    pub n: u64,
    pub threshold: f64,
    pub cells: Vec<OutlierCell>,
}

impl OutlierRow {
    pub fn outlier_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_outlier).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierMatrix {
    pub z: f64,
    pub confidence: f64,
    pub n_override: Option<u64>,
    /// Shared threshold when `n_override` fixes n for every row.
    pub threshold: Option<f64>,
    pub rows: Vec<OutlierRow>,
}

/// Flag each anchor coordinate against the threshold. `n` is the anchor's
/// frame count unless overridden.
pub fn outlier_matrix(
    table: &FeatureTable,
    z: f64,
    n_override: Option<u64>,
) -> Result<OutlierMatrix, StatsError> {
    let mut rows = Vec::with_capacity(table.entries.len());
    for (emotion, level) in FeatureTable::required_keys() {
        let entry = table
            .entry(emotion, level)
            .ok_or(StatsError::MissingAnchor(emotion, level))?;
        let n = n_override.unwrap_or(entry.frame_count as u64);
        let threshold = outlier_threshold(z, NULL_SIGMA, n)?;
        let cells = entry
            .uf
            .0
            .iter()
            .map(|&value| OutlierCell {
                value,
                is_outlier: value.abs() > threshold,
            })
            .collect();
        rows.push(OutlierRow {
            emotion,
            level,
            n,
            threshold,
            cells,
        });
    }
    let threshold = match n_override {
        Some(n) => Some(outlier_threshold(z, NULL_SIGMA, n)?),
        None => None,
    };
    Ok(OutlierMatrix {
        z,
        confidence: confidence_for_z(z),
        n_override,
        threshold,
        rows,
    })
}

impl OutlierMatrix {
    /// Rows are (emotion, level); outlier values carry a `*` suffix.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("emotion,level,n,threshold");
        for c in AU_COLUMNS {
            out.push(',');
            out.push_str(&c[..c.len() - 2]);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                row.emotion,
                row.level,
                row.n,
                fmt_real(row.threshold)
            ));
            debug_assert_eq!(row.cells.len(), AU_COUNT);
            for cell in &row.cells {
                out.push(',');
                out.push_str(&fmt_real(cell.value));
                if cell.is_outlier {
                    out.push('*');
                }
            }
            out.push('\n');
        }
        out
    }
}

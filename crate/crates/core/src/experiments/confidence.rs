//! Distribution of classifier confidence under several backends.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::confidence;
use crate::error::{Error, Result};
use crate::nn::{Arithmetic, Dataset, Model};

/// Confidence level whose exceedance share is reported separately.
pub const HIGH_CONFIDENCE: f64 = 0.8;

/// CDF evaluation points `0, 0.05, ..., 1`.
pub fn cdf_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRow {
    pub index: usize,
    pub label: u8,
    /// One entry per backend, in report order.
    pub confidence: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendCdf {
    pub backend: String,
    pub accuracy: f64,
    /// `P(C <= g)` for every grid point `g`.
    pub cdf: Vec<f64>,
    pub high_confidence_fraction: f64,
    pub mean_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub grid: Vec<f64>,
    pub high_confidence_threshold: f64,
    pub evaluated: usize,
    /// Samples classified correctly by every backend; the CDFs cover these.
    pub used: usize,
    pub backends: Vec<BackendCdf>,
    #[serde(skip)]
    pub rows: Vec<ConfidenceRow>,
}

/// Confidence CDFs over the samples every backend classifies correctly.
pub fn confidence_cdf(model: &Model, dataset: &Dataset, backends: &[Arithmetic]) -> Result<ConfidenceReport> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if backends.is_empty() {
        return Err(Error::InvalidConfig("no backends to compare".into()));
    }
    let per_sample: Vec<(bool, Vec<bool>, Vec<f32>)> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let x = dataset.image(i)?;
            let label = dataset.label(i) as usize;
            let mut correct = Vec::with_capacity(backends.len());
            let mut conf = Vec::with_capacity(backends.len());
            for &arith in backends {
                let p = model.forward(&x, arith)?;
                correct.push(p.argmax() == label);
                conf.push(confidence(&p, label)?);
            }
            Ok((correct.iter().all(|&c| c), correct, conf))
        })
        .collect::<Result<_>>()?;

    let rows: Vec<ConfidenceRow> = per_sample
        .iter()
        .enumerate()
        .filter(|(_, (all, _, _))| *all)
        .map(|(i, (_, _, conf))| ConfidenceRow {
            index: i,
            label: dataset.label(i),
            confidence: conf.clone(),
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::Empty("samples classified correctly by every backend"));
    }
    let grid = cdf_grid();
    let used = rows.len();
    let summaries = backends
        .iter()
        .enumerate()
        .map(|(b, arith)| {
            let values: Vec<f64> = rows.iter().map(|r| r.confidence[b] as f64).collect();
            let correct = per_sample.iter().filter(|(_, c, _)| c[b]).count();
            BackendCdf {
                backend: arith.label(),
                accuracy: correct as f64 / dataset.len() as f64,
                cdf: grid
                    .iter()
                    .map(|&g| values.iter().filter(|&&v| v <= g).count() as f64 / used as f64)
                    .collect(),
                high_confidence_fraction: values.iter().filter(|&&v| v >= HIGH_CONFIDENCE).count() as f64 / used as f64,
                mean_confidence: values.iter().sum::<f64>() / used as f64,
            }
        })
        .collect();
    Ok(ConfidenceReport {
        grid,
        high_confidence_threshold: HIGH_CONFIDENCE,
        evaluated: dataset.len(),
        used,
        backends: summaries,
        rows,
    })
}

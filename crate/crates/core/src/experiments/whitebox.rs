//! Distortion needed before PGD first fools each backend.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::median;
use crate::attacks::{lp_distance, mse, pgd, psnr, Norm};
use crate::error::{Error, Result};
use crate::nn::{Arithmetic, Dataset, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteboxConfig {
    /// Increasing budgets tried in turn.
    pub schedule: Vec<f32>,
    /// PGD step as a fraction of the current budget.
    pub alpha_fraction: f32,
    pub iterations: usize,
    /// Number of samples, taken in dataset order among those every backend
    /// classifies correctly.
    pub samples: usize,
}

impl Default for WhiteboxConfig {
    fn default() -> Self {
        WhiteboxConfig {
            schedule: (1..=25).map(|k| k as f32 / 50.0).collect(),
            alpha_fraction: 0.25,
            iterations: 10,
            samples: 50,
        }
    }
}

impl WhiteboxConfig {
    fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() || self.samples == 0 || self.iterations == 0 {
            return Err(Error::InvalidConfig(
                "schedule, samples and iterations must be non-empty".into(),
            ));
        }
        if !self.schedule.windows(2).all(|w| w[0] < w[1]) || self.schedule[0].is_nan() || self.schedule[0] <= 0.0 {
            return Err(Error::InvalidConfig(
                "epsilon schedule must be positive and increasing".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha_fraction) {
            return Err(Error::InvalidConfig("alpha fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhiteboxRow {
    pub index: usize,
    pub label: u8,
    /// Position of the backend in the report.
    pub backend: usize,
    pub fooled: bool,
    pub epsilon: Option<f32>,
    pub l2: Option<f64>,
    pub mse: Option<f64>,
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDistortion {
    pub backend: String,
    pub fooled: usize,
    pub not_fooled: usize,
    /// Median first-success L2 with unfooled samples counted as infinite;
    /// `None` when that median is infinite.
    pub median_l2: Option<f64>,
    pub median_l2_fooled: Option<f64>,
    pub median_epsilon_fooled: Option<f64>,
    pub median_mse_fooled: Option<f64>,
    pub median_psnr_fooled: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteboxReport {
    pub config: WhiteboxConfig,
    pub backends: Vec<BackendDistortion>,
    #[serde(skip)]
    pub rows: Vec<WhiteboxRow>,
}

impl WhiteboxReport {
    /// Censored median L2 per backend, infinite when not reached.
    pub fn median_l2(&self, backend: usize) -> f64 {
        self.backends[backend].median_l2.unwrap_or(f64::INFINITY)
    }
}

fn finite(v: Option<f64>) -> Option<f64> {
    v.filter(|m| m.is_finite())
}

fn select_samples(model: &Model, dataset: &Dataset, backends: &[Arithmetic], want: usize) -> Result<Vec<usize>> {
    let mut chosen = Vec::with_capacity(want);
    let mut start = 0;
    while chosen.len() < want && start < dataset.len() {
        let end = (start + want).min(dataset.len());
        let ok: Vec<bool> = (start..end)
            .into_par_iter()
            .map(|i| {
                let x = dataset.image(i)?;
                let l = dataset.label(i) as usize;
                for &a in backends {
                    if model.predict(&x, a)? != l {
                        return Ok(false);
                    }
                }
                Ok(true)
            })
            .collect::<Result<_>>()?;
        chosen.extend((start..end).zip(ok).filter(|&(_, ok)| ok).map(|(i, _)| i));
        start = end;
    }
    chosen.truncate(want);
    Ok(chosen)
}

/// For each selected sample, raises the PGD budget along the schedule until
/// each backend misclassifies, recording the distortion at first success.
/// Gradients are exact; only the success check uses the backend.
pub fn whitebox_distortion(
    model: &Model,
    dataset: &Dataset,
    backends: &[Arithmetic],
    cfg: &WhiteboxConfig,
) -> Result<WhiteboxReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if backends.is_empty() {
        return Err(Error::InvalidConfig("no backends to evaluate".into()));
    }
    let chosen = select_samples(model, dataset, backends, cfg.samples)?;
    if chosen.is_empty() {
        return Err(Error::Empty("samples classified correctly by every backend"));
    }
    let per_sample: Vec<Vec<WhiteboxRow>> = chosen
        .par_iter()
        .map(|&i| {
            let x = dataset.image(i)?;
            let label = dataset.label(i);
            let mut rows: Vec<WhiteboxRow> = (0..backends.len())
                .map(|b| WhiteboxRow {
                    index: i,
                    label,
                    backend: b,
                    fooled: false,
                    epsilon: None,
                    l2: None,
                    mse: None,
                    psnr: None,
                })
                .collect();
            for &eps in &cfg.schedule {
                if rows.iter().all(|r| r.fooled) {
                    break;
                }
                let adv = pgd(model, &x, label as usize, eps, eps * cfg.alpha_fraction, cfg.iterations)?;
                for (row, &arith) in rows.iter_mut().zip(backends) {
                    if row.fooled || model.predict(&adv, arith)? == label as usize {
                        continue;
                    }
                    row.fooled = true;
                    row.epsilon = Some(eps);
                    row.l2 = Some(lp_distance(&x, &adv, Norm::L2)?);
                    row.mse = Some(mse(&x, &adv)?);
                    row.psnr = psnr(&x, &adv, 1.0).ok();
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<WhiteboxRow> = per_sample.into_iter().flatten().collect();

    let summaries = backends
        .iter()
        .enumerate()
        .map(|(b, arith)| {
            let mine: Vec<&WhiteboxRow> = rows.iter().filter(|r| r.backend == b).collect();
            let fooled: Vec<&&WhiteboxRow> = mine.iter().filter(|r| r.fooled).collect();
            let collect =
                |f: &dyn Fn(&WhiteboxRow) -> Option<f64>| -> Vec<f64> { fooled.iter().filter_map(|r| f(r)).collect() };
            let censored: Vec<f64> = mine.iter().map(|r| r.l2.unwrap_or(f64::INFINITY)).collect();
            BackendDistortion {
                backend: arith.label(),
                fooled: fooled.len(),
                not_fooled: mine.len() - fooled.len(),
                median_l2: finite(median(&censored)),
                median_l2_fooled: median(&collect(&|r| r.l2)),
                median_epsilon_fooled: median(&collect(&|r| r.epsilon.map(f64::from))),
                median_mse_fooled: median(&collect(&|r| r.mse)),
                median_psnr_fooled: median(&collect(&|r| r.psnr)),
            }
        })
        .collect();
    Ok(WhiteboxReport {
        config: cfg.clone(),
        backends: summaries,
        rows,
    })
}

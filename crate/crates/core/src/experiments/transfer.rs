//! How often adversarial examples crafted on one model fool another backend.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::AdversarialSet;
use crate::error::{Error, Result};
use crate::nn::{Arithmetic, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub index: usize,
    pub label: u8,
    /// Predictions on the clean input, one per backend.
    pub clean: Vec<usize>,
    /// Predictions on the perturbed input, one per backend.
    pub adversarial: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendTransfer {
    pub backend: String,
    /// Clean inputs this backend classifies correctly.
    pub originally_correct: usize,
    /// Of those, perturbed inputs it misclassifies.
    pub fooled: usize,
    pub success_rate: Option<f64>,
    /// Samples that fool the source model and that this backend gets right
    /// when clean.
    pub transfer_candidates: usize,
    pub transferred: usize,
    pub transfer_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub samples: usize,
    pub epsilon: Option<f32>,
    pub source: String,
    /// Samples the source model classifies correctly clean and wrongly perturbed.
    pub source_fooled: usize,
    pub backends: Vec<BackendTransfer>,
    #[serde(skip)]
    pub rows: Vec<TransferRow>,
}

fn rate(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Evaluates `adv` (crafted against `source`) on every backend in `targets`.
pub fn transferability(
    model: &Model,
    adv: &AdversarialSet,
    source: Arithmetic,
    targets: &[Arithmetic],
) -> Result<TransferReport> {
    if adv.is_empty() {
        return Err(Error::Empty("adversarial set"));
    }
    if targets.is_empty() {
        return Err(Error::InvalidConfig("no backends to evaluate".into()));
    }
    let mut all = vec![source];
    all.extend_from_slice(targets);
    let preds: Vec<(Vec<usize>, Vec<usize>)> = (0..adv.len())
        .into_par_iter()
        .map(|i| {
            let (x, xs) = (adv.clean(i)?, adv.perturbed(i)?);
            let mut clean = Vec::with_capacity(all.len());
            let mut perturbed = Vec::with_capacity(all.len());
            for &a in &all {
                clean.push(model.predict(&x, a)?);
                perturbed.push(model.predict(&xs, a)?);
            }
            Ok((clean, perturbed))
        })
        .collect::<Result<_>>()?;

    let source_fooled: Vec<bool> = preds
        .iter()
        .zip(&adv.labels)
        .map(|((c, p), &l)| c[0] == l as usize && p[0] != l as usize)
        .collect();
    let rows: Vec<TransferRow> = preds
        .into_iter()
        .enumerate()
        .map(|(i, (clean, adversarial))| TransferRow {
            index: i,
            label: adv.labels[i],
            clean: clean[1..].to_vec(),
            adversarial: adversarial[1..].to_vec(),
        })
        .collect();

    let backends = targets
        .iter()
        .enumerate()
        .map(|(b, arith)| {
            let mut s = BackendTransfer {
                backend: arith.label(),
                originally_correct: 0,
                fooled: 0,
                success_rate: None,
                transfer_candidates: 0,
                transferred: 0,
                transfer_rate: None,
            };
            for (row, &src) in rows.iter().zip(&source_fooled) {
                let l = row.label as usize;
                if row.clean[b] != l {
                    continue;
                }
                let fooled = row.adversarial[b] != l;
                s.originally_correct += 1;
                s.fooled += fooled as usize;
                if src {
                    s.transfer_candidates += 1;
                    s.transferred += fooled as usize;
                }
            }
            s.success_rate = rate(s.fooled, s.originally_correct);
            s.transfer_rate = rate(s.transferred, s.transfer_candidates);
            s
        })
        .collect();
    Ok(TransferReport {
        samples: adv.len(),
        epsilon: adv.epsilon,
        source: source.label(),
        source_fooled: source_fooled.iter().filter(|&&f| f).count(),
        backends,
        rows,
    })
}

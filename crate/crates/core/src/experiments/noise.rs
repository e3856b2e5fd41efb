//! Error distribution of a multiplier backend on random operand pairs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::median;
use crate::error::{Error, Result};
use crate::float_mul::{reference_multiply, Backend};
use crate::rng::sample_rng;

/// Half-open interval `[lo, hi)` both operands are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperandRange {
    pub lo: f32,
    pub hi: f32,
}

impl OperandRange {
    pub const UNIT: OperandRange = OperandRange { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f32, hi: f32) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "operand range [{lo}, {hi}) is empty or not finite"
            )));
        }
        Ok(OperandRange { lo, hi })
    }

    /// Operands for sample `index` of the run seeded with `seed`.
    pub fn sample(self, seed: u64, index: u64) -> (f32, f32) {
        let mut rng = sample_rng(seed, index);
        (rng.random_range(self.lo..self.hi), rng.random_range(self.lo..self.hi))
    }

    /// Largest exact product magnitude reachable inside the range.
    pub fn max_product(self) -> f64 {
        let (lo, hi) = (self.lo as f64, self.hi as f64);
        (lo * lo).max(hi * hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSample {
    pub index: u64,
    pub x: f32,
    pub y: f32,
    pub exact: f32,
    pub approx: f32,
    /// `approx - exact`, computed in binary64 (exact for normal products).
    pub error: f64,
}

impl NoiseSample {
    pub fn new(index: u64, x: f32, y: f32, backend: Backend) -> Self {
        let exact = reference_multiply(x, y);
        let approx = backend.multiply(x, y);
        NoiseSample {
            index,
            x,
            y,
            exact,
            approx,
            error: approx as f64 - exact as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub n: usize,
    /// Share of samples with `|approx| >= |exact|`.
    pub inflation_fraction: f64,
    pub positive_products: usize,
    /// Among positive exact products, share with `approx > exact`.
    pub positive_product_upward_fraction: Option<f64>,
    pub negative_products: usize,
    /// Among negative exact products, share with `approx < exact`.
    pub negative_product_downward_fraction: Option<f64>,
    pub positive_error_fraction: f64,
    pub negative_error_fraction: f64,
    pub zero_error_fraction: f64,
    /// Samples whose error is not finite; excluded from the magnitudes below.
    pub nonfinite_errors: usize,
    /// Mean `|error|` per decile of `|exact|`, smallest products first.
    /// Empty when fewer than 10 finite samples exist.
    pub decile_mean_abs_error: Vec<f64>,
    pub median_abs_error: Option<f64>,
    pub max_abs_error: Option<f64>,
}

fn share(count: usize, of: usize) -> f64 {
    if of == 0 {
        0.0
    } else {
        count as f64 / of as f64
    }
}

impl NoiseSummary {
    pub fn from_samples(samples: &[NoiseSample]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::Empty("noise samples"));
        }
        let count = |f: &dyn Fn(&NoiseSample) -> bool| samples.iter().filter(|s| f(s)).count();
        let positive_products = count(&|s| s.exact > 0.0);
        let negative_products = count(&|s| s.exact < 0.0);
        let up = count(&|s| s.exact > 0.0 && s.approx > s.exact);
        let down = count(&|s| s.exact < 0.0 && s.approx < s.exact);

        let mut finite: Vec<&NoiseSample> = samples.iter().filter(|s| s.error.is_finite()).collect();
        finite.sort_by(|a, b| a.exact.abs().total_cmp(&b.exact.abs()).then(a.index.cmp(&b.index)));
        let abs: Vec<f64> = finite.iter().map(|s| s.error.abs()).collect();
        let decile_mean_abs_error = if abs.len() >= 10 {
            (0..10)
                .map(|k| {
                    let part = &abs[k * abs.len() / 10..(k + 1) * abs.len() / 10];
                    part.iter().sum::<f64>() / part.len() as f64
                })
                .collect()
        } else {
            Vec::new()
        };

        Ok(NoiseSummary {
            n,
            inflation_fraction: share(count(&|s| s.approx.abs() >= s.exact.abs()), n),
            positive_products,
            positive_product_upward_fraction: (positive_products > 0).then(|| share(up, positive_products)),
            negative_products,
            negative_product_downward_fraction: (negative_products > 0).then(|| share(down, negative_products)),
            positive_error_fraction: share(count(&|s| s.error > 0.0), n),
            negative_error_fraction: share(count(&|s| s.error < 0.0), n),
            zero_error_fraction: share(count(&|s| s.error == 0.0), n),
            nonfinite_errors: n - finite.len(),
            median_abs_error: median(&abs),
            max_abs_error: abs.iter().copied().reduce(f64::max),
            decile_mean_abs_error,
        })
    }
}

/// Draws `n` seeded operand pairs and records each backend product against
/// the exact one.
pub fn characterize_noise(backend: Backend, n: usize, range: OperandRange, seed: u64) -> Result<Vec<NoiseSample>> {
    if n == 0 {
        return Err(Error::Empty("noise samples"));
    }
    OperandRange::new(range.lo, range.hi)?;
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| {
            let (x, y) = range.sample(seed, i);
            NoiseSample::new(i, x, y, backend)
        })
        .collect())
}

//! Mean relative and normalized mean error distance of a backend.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::{NoiseSample, OperandRange};
use crate::error::{Error, Result};
use crate::float_mul::Backend;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub n: usize,
    /// Samples with an exact product of zero, left out of `mred`.
    pub zero_products: usize,
    pub mred: f64,
    pub nmed: f64,
    pub p_max: f64,
}

impl ErrorMetrics {
    pub fn from_samples(samples: &[NoiseSample], p_max: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("metric samples"));
        }
        if !(p_max.is_finite() && p_max > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "maximum product {p_max} must be positive"
            )));
        }
        let mut red_sum = 0.0f64;
        let mut ed_sum = 0.0f64;
        let mut nonzero = 0usize;
        for s in samples {
            let ed = s.error.abs();
            ed_sum += ed;
            if s.exact != 0.0 {
                red_sum += ed / (s.exact as f64).abs();
                nonzero += 1;
            }
        }
        if nonzero == 0 {
            return Err(Error::Empty("nonzero exact products"));
        }
        let n = samples.len();
        Ok(ErrorMetrics {
            n,
            zero_products: n - nonzero,
            mred: red_sum / nonzero as f64,
            nmed: ed_sum / n as f64 / p_max,
            p_max,
        })
    }
}

/// MRED and NMED over `n` seeded pairs; `P_max` is the largest product
/// magnitude the range admits.
pub fn error_metrics(backend: Backend, n: usize, range: OperandRange, seed: u64) -> Result<ErrorMetrics> {
    if n == 0 {
        return Err(Error::Empty("metric samples"));
    }
    let range = OperandRange::new(range.lo, range.hi)?;
    let samples: Vec<NoiseSample> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let (x, y) = range.sample(seed, i);
            NoiseSample::new(i, x, y, backend)
        })
        .collect();
    ErrorMetrics::from_samples(&samples, range.max_product())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_is_zero() {
        let m = error_metrics(Backend::ExactFpm, 1000, OperandRange::UNIT, 1).unwrap();
        assert_eq!((m.mred, m.nmed, m.n, m.p_max), (0.0, 0.0, 1000, 1.0));
    }

    #[test]
    fn all_zero_products_rejected() {
        let s = NoiseSample::new(0, 0.0, 0.5, Backend::Native);
        assert!(matches!(ErrorMetrics::from_samples(&[s, s], 1.0), Err(Error::Empty(_))));
        assert!(error_metrics(Backend::Native, 0, OperandRange::UNIT, 1).is_err());
    }

    #[test]
    fn hand_computed() {
        let mk = |exact: f32, approx: f32| NoiseSample {
            index: 0,
            x: 0.0,
            y: 0.0,
            exact,
            approx,
            error: approx as f64 - exact as f64,
        };
        let m = ErrorMetrics::from_samples(&[mk(0.5, 0.75), mk(0.25, 0.25), mk(0.0, 0.0)], 1.0).unwrap();
        assert_eq!(m.zero_products, 1);
        assert_eq!(m.mred, 0.25);
        assert_eq!(m.nmed, 0.25 / 3.0);
    }
}

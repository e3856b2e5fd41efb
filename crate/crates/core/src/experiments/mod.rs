//! Measurement harnesses behind the command-line reports.
//!
//! Every harness computes per-sample rows in parallel, collects them in index
//! order and reduces serially, so results do not depend on the worker count.

pub mod confidence;
pub mod metrics;
pub mod noise;
pub mod report;
pub mod similarity;
pub mod transfer;
pub mod whitebox;

pub use confidence::{confidence_cdf, ConfidenceReport};
pub use metrics::{error_metrics, ErrorMetrics};
pub use noise::{characterize_noise, NoiseSample, NoiseSummary, OperandRange};
pub use report::Report;
pub use similarity::{conv_similarity, similarity_fixture, SimilarityRow};
pub use transfer::{transferability, TransferReport};
pub use whitebox::{whitebox_distortion, WhiteboxConfig, WhiteboxReport};

use crate::error::{Error, Result};

/// Runs `f` on a pool of `workers` threads (`None` uses the global pool).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidConfig("workers must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Median of `values`; NaN-free input assumed, infinities allowed.
pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    let hi = v[mid];
    if v.len() % 2 == 1 {
        return Some(hi);
    }
    let lo = v[mid - 1];
    Some(if lo == hi { lo } else { (lo + hi) / 2.0 })
}

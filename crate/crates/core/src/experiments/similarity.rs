//! Convolution response versus input/kernel similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float_mul::Backend;
use crate::nn::layers::conv2d_forward;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    /// 1 for the least similar patch.
    pub rank: usize,
    /// Position of the patch in the input list.
    pub patch: usize,
    pub cosine: f64,
    pub exact: f32,
    pub approx: f32,
    pub gap: f64,
}

fn cosine(a: &Tensor, b: &Tensor) -> f64 {
    let dot: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na = a.data().iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb = b.data().iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Single-window convolution of every patch with `kernel` (`C x Kh x Kw`)
/// under the exact and the given backend, sorted by ascending cosine
/// similarity between patch and kernel.
pub fn conv_similarity(kernel: &Tensor, patches: &[Tensor], backend: Backend) -> Result<Vec<SimilarityRow>> {
    if patches.is_empty() {
        return Err(Error::Empty("patches"));
    }
    let &[c, kh, kw] = kernel.dims() else {
        return Err(Error::Shape(format!("kernel must be CxKhxKw, got {:?}", kernel.dims())));
    };
    let k4 = kernel.clone().reshape(vec![1, c, kh, kw])?;
    let bias = Tensor::zeros(vec![1]);
    let mut rows = Vec::with_capacity(patches.len());
    for (i, p) in patches.iter().enumerate() {
        p.ensure_dims(kernel.dims(), "patch")?;
        let exact = conv2d_forward(p, &k4, &bias, 1, 0, Backend::Native)?.data()[0];
        let approx = conv2d_forward(p, &k4, &bias, 1, 0, backend)?.data()[0];
        rows.push(SimilarityRow {
            rank: 0,
            patch: i,
            cosine: cosine(p, kernel),
            exact,
            approx,
            gap: approx as f64 - exact as f64,
        });
    }
    rows.sort_by(|a, b| a.cosine.total_cmp(&b.cosine).then(a.patch.cmp(&b.patch)));
    for (r, row) in rows.iter_mut().enumerate() {
        row.rank = r + 1;
    }
    Ok(rows)
}

/// Fixed 1x5x5 kernel, nonnegative on a cross, and six patches blending a
/// pattern on the complementary cells into the kernel itself:
/// `(1 - t) * q + t * kernel` for `t` in `0, 0.2, ..., 1`.
pub fn similarity_fixture() -> (Tensor, Vec<Tensor>) {
    let mut k = vec![0.0f32; 25];
    let mut q = vec![0.0f32; 25];
    for r in 0..5 {
        for c in 0..5 {
            let i = r * 5 + c;
            if r == 2 || c == 2 {
                k[i] = 0.3 + 0.11 * ((r + 2 * c) % 5) as f32;
            } else {
                q[i] = 0.8;
            }
        }
    }
    let patches = (0..6)
        .map(|s| {
            let t = s as f32 / 5.0;
            let data = k.iter().zip(&q).map(|(&kv, &qv)| (1.0 - t) * qv + t * kv).collect();
            Tensor::new(vec![1, 5, 5], data).expect("5x5")
        })
        .collect();
    (Tensor::new(vec![1, 5, 5], k).expect("5x5"), patches)
}

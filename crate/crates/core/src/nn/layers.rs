//! Layer kernels. Forward passes take a [`Backend`] for their scalar products;
//! accumulation is plain binary32 addition in row-major order. Backward
//! passes always use exact arithmetic.

use crate::error::{Error, Result};
use crate::float_mul::{bf16_multiply, fpm_multiply, reference_multiply, Backend, FpmConfig};
use crate::tensor::Tensor;

/// Expands `$body` with `$mul` bound to a concrete multiply function for
/// `$backend`, so the inner loops are monomorphized per backend.
macro_rules! with_multiplier {
    ($backend:expr, |$mul:ident| $body:expr) => {
        match $backend {
            Backend::Native => {
                let $mul = reference_multiply;
                $body
            }
            Backend::ExactFpm => {
                let $mul = |a: f32, b: f32| fpm_multiply(a, b, FpmConfig::exact());
                $body
            }
            Backend::AxFpm(roles) => {
                let $mul = move |a: f32, b: f32| fpm_multiply(a, b, FpmConfig::ama5(roles));
                $body
            }
            Backend::Bfloat16 => {
                let $mul = bf16_multiply;
                $body
            }
        }
    };
}

#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    channels: usize,
    height: usize,
    width: usize,
    out_ch: usize,
    kernel_h: usize,
    kernel_w: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeometry {
    fn new(input: &Tensor, kernel: &Tensor, bias: &Tensor, stride: usize, padding: usize) -> Result<Self> {
        let &[channels, height, width] = input.dims() else {
            return Err(Error::Shape(format!(
                "conv input must be CxHxW, got {:?}",
                input.dims()
            )));
        };
        let &[out_ch, k_ch, kernel_h, kernel_w] = kernel.dims() else {
            return Err(Error::Shape(format!(
                "conv kernel must be OxCxKhxKw, got {:?}",
                kernel.dims()
            )));
        };
        if k_ch != channels {
            return Err(Error::Shape(format!(
                "conv kernel has {k_ch} channels, input has {channels}"
            )));
        }
        bias.ensure_dims(&[out_ch], "conv bias")?;
        if stride == 0 {
            return Err(Error::Shape("conv stride must be positive".into()));
        }
        let (ph, pw) = (height + 2 * padding, width + 2 * padding);
        if kernel_h == 0 || kernel_w == 0 || kernel_h > ph || kernel_w > pw {
            return Err(Error::Shape(format!(
                "conv kernel {kernel_h}x{kernel_w} does not fit padded input {ph}x{pw}"
            )));
        }
        Ok(ConvGeometry {
            channels,
            height,
            width,
            out_ch,
            kernel_h,
            kernel_w,
            out_h: (ph - kernel_h) / stride + 1,
            out_w: (pw - kernel_w) / stride + 1,
            stride,
            padding,
        })
    }

    /// Input coordinate under output `(oy, ox)` and kernel tap `(ky, kx)`, if not padding.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.padding)?;
        let x = (ox * self.stride + kx).checked_sub(self.padding)?;
        (y < self.height && x < self.width).then_some((y, x))
    }
}

/// 2-D convolution (cross-correlation) with zero padding.
///
/// Each output element is `bias + sum(mul(x, k))` over the window, the sum
/// running over channel, kernel row, kernel column in that order.
pub fn conv2d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
    backend: Backend,
) -> Result<Tensor> {
    let g = ConvGeometry::new(input, kernel, bias, stride, padding)?;
    let (x, k, b) = (input.data(), kernel.data(), bias.data());
    let mut out = Vec::with_capacity(g.out_ch * g.out_h * g.out_w);
    with_multiplier!(backend, |mul| {
        for o in 0..g.out_ch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut acc = 0.0f32;
                    for c in 0..g.channels {
                        for ky in 0..g.kernel_h {
                            for kx in 0..g.kernel_w {
                                if let Some((y, xx)) = g.source(oy, ox, ky, kx) {
                                    let xv = x[(c * g.height + y) * g.width + xx];
                                    let kv = k[((o * g.channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
                                    acc += mul(xv, kv);
                                }
                            }
                        }
                    }
                    out.push(acc + b[o]);
                }
            }
        }
    });
    Tensor::new(vec![g.out_ch, g.out_h, g.out_w], out)
}

/// Gradients of a convolution: `(d input, d kernel, d bias)`.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = ConvGeometry::new(input, kernel, bias, stride, padding)?;
    grad_out.ensure_dims(&[g.out_ch, g.out_h, g.out_w], "conv output gradient")?;
    let (x, k, go) = (input.data(), kernel.data(), grad_out.data());
    let mut gx = vec![0.0f32; x.len()];
    let mut gk = vec![0.0f32; k.len()];
    let mut gb = vec![0.0f32; g.out_ch];
    for o in 0..g.out_ch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let d = go[(o * g.out_h + oy) * g.out_w + ox];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for c in 0..g.channels {
                    for ky in 0..g.kernel_h {
                        for kx in 0..g.kernel_w {
                            if let Some((y, xx)) = g.source(oy, ox, ky, kx) {
                                let xi = (c * g.height + y) * g.width + xx;
                                let ki = ((o * g.channels + c) * g.kernel_h + ky) * g.kernel_w + kx;
                                gx[xi] += d * k[ki];
                                gk[ki] += d * x[xi];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(input.dims().to_vec(), gx)?,
        Tensor::new(kernel.dims().to_vec(), gk)?,
        Tensor::new(vec![g.out_ch], gb)?,
    ))
}

pub fn relu(t: &Tensor) -> Tensor {
    let data = t.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::new(t.dims().to_vec(), data).expect("same shape")
}

pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.ensure_dims(input.dims(), "relu output gradient")?;
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.dims().to_vec(), data)
}

fn pool_geometry(t: &Tensor, size: usize, stride: usize) -> Result<(usize, usize, usize, usize, usize)> {
    let &[c, h, w] = t.dims() else {
        return Err(Error::Shape(format!("maxpool input must be CxHxW, got {:?}", t.dims())));
    };
    if size == 0 || stride == 0 || size > h || size > w {
        return Err(Error::Shape(format!(
            "pool window {size} (stride {stride}) invalid for {h}x{w}"
        )));
    }
    Ok((c, h, w, (h - size) / stride + 1, (w - size) / stride + 1))
}

/// Index of the window maximum (first one on ties) for every pooled output.
fn pool_argmax(t: &Tensor, size: usize, stride: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let (c, h, w, oh, ow) = pool_geometry(t, size, stride)?;
    let x = t.data();
    let mut picks = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (ch * h + oy * stride) * w + ox * stride;
                for ky in 0..size {
                    for kx in 0..size {
                        let i = (ch * h + oy * stride + ky) * w + ox * stride + kx;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                picks.push(best);
            }
        }
    }
    Ok((vec![c, oh, ow], picks))
}

pub fn maxpool2d(t: &Tensor, size: usize, stride: usize) -> Result<Tensor> {
    let (dims, picks) = pool_argmax(t, size, stride)?;
    let data = picks.iter().map(|&i| t.data()[i]).collect();
    Tensor::new(dims, data)
}

pub fn maxpool2d_backward(input: &Tensor, size: usize, stride: usize, grad_out: &Tensor) -> Result<Tensor> {
    let (dims, picks) = pool_argmax(input, size, stride)?;
    grad_out.ensure_dims(&dims, "maxpool output gradient")?;
    let mut gx = vec![0.0f32; input.len()];
    for (&i, &g) in picks.iter().zip(grad_out.data()) {
        gx[i] += g;
    }
    Tensor::new(input.dims().to_vec(), gx)
}

/// Fully connected layer `y = W x + b` with `W` stored outputs x inputs.
pub fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor, backend: Backend) -> Result<Tensor> {
    let (outputs, inputs) = dense_dims(x, weight, bias)?;
    let (xv, w, b) = (x.data(), weight.data(), bias.data());
    let out = with_multiplier!(backend, |mul| {
        (0..outputs)
            .map(|o| {
                let row = &w[o * inputs..(o + 1) * inputs];
                let acc = row.iter().zip(xv).fold(0.0f32, |acc, (&wv, &xi)| acc + mul(xi, wv));
                acc + b[o]
            })
            .collect::<Vec<f32>>()
    });
    Tensor::new(vec![outputs], out)
}

/// Gradients of a dense layer: `(d x, d weight, d bias)`.
pub fn dense_backward(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (outputs, inputs) = dense_dims(x, weight, bias)?;
    grad_out.ensure_dims(&[outputs], "dense output gradient")?;
    let (xv, w, go) = (x.data(), weight.data(), grad_out.data());
    let mut gx = vec![0.0f32; inputs];
    let mut gw = vec![0.0f32; outputs * inputs];
    for o in 0..outputs {
        let d = go[o];
        if d == 0.0 {
            continue;
        }
        for i in 0..inputs {
            gx[i] += d * w[o * inputs + i];
            gw[o * inputs + i] = d * xv[i];
        }
    }
    Ok((
        Tensor::new(vec![inputs], gx)?,
        Tensor::new(vec![outputs, inputs], gw)?,
        Tensor::new(vec![outputs], go.to_vec())?,
    ))
}

fn dense_dims(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    let &[outputs, inputs] = weight.dims() else {
        return Err(Error::Shape(format!(
            "dense weight must be 2-D, got {:?}",
            weight.dims()
        )));
    };
    x.ensure_dims(&[inputs], "dense input")?;
    bias.ensure_dims(&[outputs], "dense bias")?;
    Ok((outputs, inputs))
}

/// Softmax over all elements, computed with max subtraction.
pub fn softmax(logits: &Tensor) -> Tensor {
    let max = logits.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = logits.data().iter().map(|&v| (v - max).exp()).collect();
    let total: f32 = exps.iter().sum();
    let data = exps.into_iter().map(|e| e / total).collect();
    Tensor::new(logits.dims().to_vec(), data).expect("same shape")
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a sequential model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layer {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    #[serde(rename = "maxpool2d")]
    MaxPool2d {
        size: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        #[serde(rename = "in")]
        inputs: usize,
        #[serde(rename = "out")]
        outputs: usize,
    },
    Softmax,
}

/// Where a layer's parameters live in the weight set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSlot {
    pub layer: usize,
    pub weight: String,
    pub weight_dims: Vec<usize>,
    pub bias: String,
    pub bias_dims: Vec<usize>,
}

/// Sequential model description: input shape plus ordered layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Input extents, channels first.
    pub input: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl ModelSpec {
    /// LeNet-5-shaped classifier for 1x28x28 inputs and 10 classes.
    pub fn lenet() -> Self {
        let conv = |in_ch, out_ch| Layer::Conv2d {
            in_ch,
            out_ch,
            kernel_h: 5,
            kernel_w: 5,
            stride: 1,
            padding: 0,
        };
        let pool = Layer::MaxPool2d { size: 2, stride: 2 };
        let dense = |inputs, outputs| Layer::Dense { inputs, outputs };
        ModelSpec {
            input: vec![1, 28, 28],
            layers: vec![
                conv(1, 6),
                Layer::Relu,
                pool,
                conv(6, 16),
                Layer::Relu,
                pool,
                Layer::Flatten,
                dense(256, 120),
                Layer::Relu,
                dense(120, 84),
                Layer::Relu,
                dense(84, 10),
                Layer::Softmax,
            ],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks shape compatibility layer by layer and returns every activation
    /// shape, starting with the input and ending with the output.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input.is_empty() || self.input.contains(&0) {
            return Err(Error::Shape(format!("invalid input shape {:?}", self.input)));
        }
        crate::tensor::checked_numel(&self.input)?;
        let softmax_count = self.layers.iter().filter(|l| matches!(l, Layer::Softmax)).count();
        if softmax_count != 1 || !matches!(self.layers.last(), Some(Layer::Softmax)) {
            return Err(Error::Shape("model must end in exactly one softmax layer".into()));
        }

        let mut shapes = vec![self.input.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = shapes.last().expect("non-empty");
            let err = |msg: String| Error::Shape(format!("layer {i} ({layer:?}): {msg}"));
            let next = match *layer {
                Layer::Conv2d {
                    in_ch,
                    out_ch,
                    kernel_h,
                    kernel_w,
                    stride,
                    padding,
                } => {
                    let &[c, h, w] = cur.as_slice() else {
                        return Err(err(format!("needs a CxHxW input, got {cur:?}")));
                    };
                    if c != in_ch {
                        return Err(err(format!("expects {in_ch} channels, got {c}")));
                    }
                    if out_ch == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0 {
                        return Err(err("zero-sized parameter".into()));
                    }
                    let oh = conv_extent(h, kernel_h, stride, padding)
                        .ok_or_else(|| err("kernel taller than input".into()))?;
                    let ow = conv_extent(w, kernel_w, stride, padding)
                        .ok_or_else(|| err("kernel wider than input".into()))?;
                    vec![out_ch, oh, ow]
                }
                Layer::MaxPool2d { size, stride } => {
                    let &[c, h, w] = cur.as_slice() else {
                        return Err(err(format!("needs a CxHxW input, got {cur:?}")));
                    };
                    if size == 0 || stride == 0 {
                        return Err(err("zero-sized pooling window".into()));
                    }
                    let oh = conv_extent(h, size, stride, 0).ok_or_else(|| err("window taller than input".into()))?;
                    let ow = conv_extent(w, size, stride, 0).ok_or_else(|| err("window wider than input".into()))?;
                    vec![c, oh, ow]
                }
                Layer::Relu => cur.clone(),
                Layer::Flatten => vec![crate::tensor::checked_numel(cur)?],
                Layer::Dense { inputs, outputs } => {
                    if cur.as_slice() != [inputs] {
                        return Err(err(format!("expects a flat input of {inputs}, got {cur:?}")));
                    }
                    if outputs == 0 {
                        return Err(err("zero outputs".into()));
                    }
                    vec![outputs]
                }
                Layer::Softmax => {
                    if cur.len() != 1 {
                        return Err(err(format!("needs a flat input, got {cur:?}")));
                    }
                    cur.clone()
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    pub fn num_classes(&self) -> Result<usize> {
        Ok(self.shapes()?.last().expect("non-empty")[0])
    }

    /// Parameter slots in layer order: `conv{k}.*` and `dense{k}.*`, numbered from 1.
    pub fn param_slots(&self) -> Vec<ParamSlot> {
        let (mut convs, mut denses) = (0, 0);
        let mut slots = Vec::new();
        for (layer, l) in self.layers.iter().enumerate() {
            match *l {
                Layer::Conv2d {
                    in_ch,
                    out_ch,
                    kernel_h,
                    kernel_w,
                    ..
                } => {
                    convs += 1;
                    slots.push(ParamSlot {
                        layer,
                        weight: format!("conv{convs}.weight"),
                        weight_dims: vec![out_ch, in_ch, kernel_h, kernel_w],
                        bias: format!("conv{convs}.bias"),
                        bias_dims: vec![out_ch],
                    });
                }
                Layer::Dense { inputs, outputs } => {
                    denses += 1;
                    slots.push(ParamSlot {
                        layer,
                        weight: format!("dense{denses}.weight"),
                        weight_dims: vec![outputs, inputs],
                        bias: format!("dense{denses}.bias"),
                        bias_dims: vec![outputs],
                    });
                }
                _ => {}
            }
        }
        slots
    }
}

fn conv_extent(input: usize, window: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = padding.checked_mul(2)?.checked_add(input)?;
    (padded >= window).then(|| (padded - window) / stride + 1)
}

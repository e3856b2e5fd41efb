use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::archive::TensorArchive;
use super::idx::Dataset;
use super::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2d, maxpool2d_backward, relu, relu_backward,
    softmax,
};
use super::spec::{Layer, ModelSpec, ParamSlot};
use crate::error::{Error, Result};
use crate::float_mul::Backend;
use crate::rng::mix_seed;
use crate::tensor::Tensor;

/// Which multiplications are routed through the configured backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApproxScope {
    /// Convolution products only; dense layers multiply natively.
    #[default]
    ConvOnly,
    AllMultiplies,
}

impl std::str::FromStr for ApproxScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv" | "conv-only" => Ok(ApproxScope::ConvOnly),
            "all" | "all-multiplies" => Ok(ApproxScope::AllMultiplies),
            other => Err(Error::InvalidConfig(format!("unknown scope `{other}`"))),
        }
    }
}

/// Arithmetic used by an inference pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Arithmetic {
    pub backend: Backend,
    pub scope: ApproxScope,
}

impl Arithmetic {
    pub const EXACT: Arithmetic = Arithmetic {
        backend: Backend::Native,
        scope: ApproxScope::ConvOnly,
    };

    pub fn new(backend: Backend, scope: ApproxScope) -> Self {
        Arithmetic { backend, scope }
    }

    pub fn conv_only(backend: Backend) -> Self {
        Arithmetic {
            backend,
            scope: ApproxScope::ConvOnly,
        }
    }

    /// Backend name, suffixed with `+dense` when dense layers are approximate too.
    pub fn label(self) -> String {
        match self.scope {
            ApproxScope::ConvOnly => self.backend.name(),
            ApproxScope::AllMultiplies => format!("{}+dense", self.backend.name()),
        }
    }

    fn dense_backend(self) -> Backend {
        match self.scope {
            ApproxScope::ConvOnly => Backend::Native,
            ApproxScope::AllMultiplies => self.backend,
        }
    }
}

/// Parameters of a [`ModelSpec`], stored in the model's slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    slots: Vec<ParamSlot>,
    params: Vec<(Tensor, Tensor)>,
}

impl Weights {
    /// Matches archive entries to the model's slots by name; every slot must be present
    /// with its exact shape and nothing else may be.
    pub fn from_archive(spec: &ModelSpec, archive: TensorArchive) -> Result<Self> {
        let slots = spec.param_slots();
        if archive.len() != 2 * slots.len() {
            return Err(Error::Shape(format!(
                "archive holds {} tensors, model needs {}",
                archive.len(),
                2 * slots.len()
            )));
        }
        let mut params = Vec::with_capacity(slots.len());
        for slot in &slots {
            let w = archive
                .get(&slot.weight)
                .ok_or_else(|| Error::Shape(format!("missing `{}`", slot.weight)))?;
            let b = archive
                .get(&slot.bias)
                .ok_or_else(|| Error::Shape(format!("missing `{}`", slot.bias)))?;
            w.ensure_dims(&slot.weight_dims, &slot.weight)?;
            b.ensure_dims(&slot.bias_dims, &slot.bias)?;
            params.push((w.clone(), b.clone()));
        }
        Ok(Weights { slots, params })
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut a = TensorArchive::new();
        for (slot, (w, b)) in self.slots.iter().zip(&self.params) {
            a.insert(slot.weight.clone(), w.clone()).expect("unique slot names");
            a.insert(slot.bias.clone(), b.clone()).expect("unique slot names");
        }
        a
    }

    /// All-zero parameters.
    pub fn zeros(spec: &ModelSpec) -> Self {
        let slots = spec.param_slots();
        let params = slots
            .iter()
            .map(|s| (Tensor::zeros(s.weight_dims.clone()), Tensor::zeros(s.bias_dims.clone())))
            .collect();
        Weights { slots, params }
    }

    /// He-uniform weights and zero biases drawn from `seed`.
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let mut w = Weights::zeros(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (slot, (weight, _)) in w.slots.iter().zip(w.params.iter_mut()) {
            let fan_in: usize = slot.weight_dims[1..].iter().product();
            let bound = (6.0 / fan_in as f32).sqrt();
            for v in weight.data_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        w
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slots.iter().zip(&self.params).find_map(|(s, (w, b))| {
            if s.weight == name {
                Some(w)
            } else if s.bias == name {
                Some(b)
            } else {
                None
            }
        })
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.slots.iter().zip(self.params.iter_mut()).find_map(|(s, (w, b))| {
            if s.weight == name {
                Some(w)
            } else if s.bias == name {
                Some(b)
            } else {
                None
            }
        })
    }

    fn for_layer(&self, layer: usize) -> Result<&(Tensor, Tensor)> {
        self.slots
            .iter()
            .position(|s| s.layer == layer)
            .map(|i| &self.params[i])
            .ok_or_else(|| Error::Shape(format!("no parameters for layer {layer}")))
    }
}

pub fn save_weights(weights: &Weights, path: &Path) -> Result<()> {
    weights.to_archive().save(path)
}

pub fn load_weights(path: &Path, spec: &ModelSpec) -> Result<Weights> {
    Weights::from_archive(spec, TensorArchive::load(path)?)
}

/// A model spec with matching weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    weights: Weights,
    input_dims: Vec<usize>,
    classes: usize,
}

/// Per-sample loss and gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f32,
    pub input: Tensor,
    /// `(d weight, d bias)` per parameter slot.
    pub params: Vec<(Tensor, Tensor)>,
}

impl Model {
    pub fn new(spec: ModelSpec, weights: Weights) -> Result<Self> {
        let shapes = spec.shapes()?;
        if weights.slots != spec.param_slots() {
            return Err(Error::Shape("weights were built for a different model".into()));
        }
        let classes = shapes.last().expect("non-empty")[0];
        Ok(Model {
            input_dims: spec.input.clone(),
            spec,
            weights,
            classes,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn into_weights(self) -> Weights {
        self.weights
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    /// Class probabilities for one input.
    pub fn forward(&self, x: &Tensor, arith: Arithmetic) -> Result<Tensor> {
        x.ensure_dims(&self.input_dims, "model input")?;
        let mut act = x.clone();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            act = self.apply(i, *layer, &act, arith)?;
        }
        Ok(act)
    }

    pub fn predict(&self, x: &Tensor, arith: Arithmetic) -> Result<usize> {
        Ok(self.forward(x, arith)?.argmax())
    }

    fn apply(&self, index: usize, layer: Layer, act: &Tensor, arith: Arithmetic) -> Result<Tensor> {
        Ok(match layer {
            Layer::Conv2d { stride, padding, .. } => {
                let (k, b) = self.weights.for_layer(index)?;
                conv2d_forward(act, k, b, stride, padding, arith.backend)?
            }
            Layer::Relu => relu(act),
            Layer::MaxPool2d { size, stride } => maxpool2d(act, size, stride)?,
            Layer::Flatten => {
                let n = act.len();
                act.clone().reshape(vec![n])?
            }
            Layer::Dense { .. } => {
                let (w, b) = self.weights.for_layer(index)?;
                dense_forward(act, w, b, arith.dense_backend())?
            }
            Layer::Softmax => softmax(act),
        })
    }

    /// Cross-entropy loss and its gradients with respect to the input and
    /// every parameter, all with exact arithmetic.
    pub fn gradients(&self, x: &Tensor, label: usize) -> Result<Gradients> {
        if label >= self.classes {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.classes,
            });
        }
        x.ensure_dims(&self.input_dims, "model input")?;
        let mut acts = vec![x.clone()];
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let next = self.apply(i, *layer, acts.last().expect("non-empty"), Arithmetic::EXACT)?;
            acts.push(next);
        }
        let probs = acts.last().expect("non-empty");
        let loss = -(probs.data()[label].max(f32::MIN_POSITIVE)).ln();

        // softmax followed by cross-entropy: d logits = p - onehot
        let mut grad = probs.clone();
        grad.data_mut()[label] -= 1.0;
        let mut params: Vec<Option<(Tensor, Tensor)>> = vec![None; self.weights.slots.len()];
        let last = self.spec.layers.len() - 1;
        for i in (0..last).rev() {
            let input = &acts[i];
            grad = match self.spec.layers[i] {
                Layer::Conv2d { stride, padding, .. } => {
                    let (k, b) = self.weights.for_layer(i)?;
                    let (gx, gk, gb) = conv2d_backward(input, k, b, stride, padding, &grad)?;
                    params[self.slot_index(i)] = Some((gk, gb));
                    gx
                }
                Layer::Relu => relu_backward(input, &grad)?,
                Layer::MaxPool2d { size, stride } => maxpool2d_backward(input, size, stride, &grad)?,
                Layer::Flatten => grad.reshape(input.dims().to_vec())?,
                Layer::Dense { .. } => {
                    let (w, b) = self.weights.for_layer(i)?;
                    let (gx, gw, gb) = dense_backward(input, w, b, &grad)?;
                    params[self.slot_index(i)] = Some((gw, gb));
                    gx
                }
                Layer::Softmax => unreachable!("softmax is terminal"),
            };
        }
        Ok(Gradients {
            loss,
            input: grad,
            params: params.into_iter().map(|p| p.expect("every slot visited")).collect(),
        })
    }

    pub fn input_gradient(&self, x: &Tensor, label: usize) -> Result<Tensor> {
        Ok(self.gradients(x, label)?.input)
    }

    fn slot_index(&self, layer: usize) -> usize {
        self.weights
            .slots
            .iter()
            .position(|s| s.layer == layer)
            .expect("parametrized layer has a slot")
    }

    /// Fraction of `dataset` classified correctly.
    pub fn accuracy(&self, dataset: &Dataset, arith: Arithmetic) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let mut correct = 0usize;
        for i in 0..dataset.len() {
            if self.predict(&dataset.image(i)?, arith)? == dataset.label(i) as usize {
                correct += 1;
            }
        }
        Ok(correct as f64 / dataset.len() as f64)
    }
}

/// Convenience wrapper matching [`Model::input_gradient`].
pub fn backward_input_grad(model: &Model, x: &Tensor, label: usize) -> Result<Tensor> {
    model.input_gradient(x, label)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f32,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

/// Per-epoch progress report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Mini-batch SGD from a seeded initialization. Deterministic in `cfg`:
/// the shuffle of epoch `e` is drawn from `mix_seed(seed, e + 1)` and batch
/// gradients are summed in sample order.
pub fn train_sgd(spec: &ModelSpec, dataset: &Dataset, cfg: TrainConfig) -> Result<Weights> {
    train_sgd_with(spec, Weights::init(spec, cfg.seed), dataset, cfg, |_| {})
}

pub fn train_sgd_with(
    spec: &ModelSpec,
    init: Weights,
    dataset: &Dataset,
    cfg: TrainConfig,
    mut on_epoch: impl FnMut(EpochStats),
) -> Result<Weights> {
    if dataset.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if cfg.batch == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    if !cfg.lr.is_finite() || cfg.lr < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "learning rate {} must be finite and non-negative",
            cfg.lr
        )));
    }
    let mut model = Model::new(spec.clone(), init)?;
    if let Some(&l) = dataset.labels().iter().find(|&&l| l as usize >= model.classes) {
        return Err(Error::LabelOutOfRange {
            label: l as usize,
            classes: model.classes,
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, epoch as u64 + 1));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for batch in order.chunks(cfg.batch) {
            let mut acc: Option<Vec<(Tensor, Tensor)>> = None;
            for &i in batch {
                let g = model.gradients(&dataset.image(i)?, dataset.label(i) as usize)?;
                loss_sum += g.loss as f64;
                match acc.as_mut() {
                    None => acc = Some(g.params),
                    Some(sum) => {
                        for ((sw, sb), (gw, gb)) in sum.iter_mut().zip(&g.params) {
                            add_assign(sw, gw);
                            add_assign(sb, gb);
                        }
                    }
                }
            }
            let step = cfg.lr / batch.len() as f32;
            for ((w, b), (gw, gb)) in model.weights.params.iter_mut().zip(acc.expect("non-empty batch")) {
                sgd_step(w, &gw, step);
                sgd_step(b, &gb, step);
            }
        }
        on_epoch(EpochStats {
            epoch,
            mean_loss: loss_sum / dataset.len() as f64,
        });
    }
    Ok(model.weights)
}

fn add_assign(dst: &mut Tensor, src: &Tensor) {
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

fn sgd_step(param: &mut Tensor, grad: &Tensor, step: f32) {
    for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
        *p -= step * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_spec() -> ModelSpec {
        ModelSpec::from_json(
            r#"{"input":[1,6,6],"layers":[
                {"type":"conv2d","in_ch":1,"out_ch":2,"kernel_h":3,"kernel_w":3,"stride":1,"padding":0},
                {"type":"relu"},
                {"type":"maxpool2d","size":2,"stride":2},
                {"type":"flatten"},
                {"type":"dense","in":8,"out":3},
                {"type":"softmax"}]}"#,
        )
        .unwrap()
    }

    fn toy_dataset(n: usize) -> Dataset {
        let data: Vec<f32> = (0..n * 36).map(|i| ((i * 37 % 101) as f32) / 100.0).collect();
        let labels = (0..n).map(|i| (i % 3) as u8).collect();
        Dataset::new(Tensor::new(vec![n, 1, 6, 6], data).unwrap(), labels).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let spec = ModelSpec::lenet();
        let model = Model::new(spec.clone(), Weights::zeros(&spec)).unwrap();
        let x = Tensor::full(vec![1, 28, 28], 0.5);
        for backend in [Backend::Native, Backend::ax_fpm(), Backend::Bfloat16] {
            let p = model.forward(&x, Arithmetic::conv_only(backend)).unwrap();
            assert!(p.data().iter().all(|&v| (v - 0.1).abs() < 1e-6));
        }
    }

    #[test]
    fn forward_is_repeatable_and_normalized() {
        let spec = toy_spec();
        let model = Model::new(spec.clone(), Weights::init(&spec, 3)).unwrap();
        let x = toy_dataset(1).image(0).unwrap();
        for backend in [Backend::Native, Backend::ExactFpm, Backend::ax_fpm(), Backend::Bfloat16] {
            for scope in [ApproxScope::ConvOnly, ApproxScope::AllMultiplies] {
                let arith = Arithmetic::new(backend, scope);
                let a = model.forward(&x, arith).unwrap();
                let b = model.forward(&x, arith).unwrap();
                assert_eq!(
                    a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                );
                assert!((a.data().iter().sum::<f32>() - 1.0).abs() <= 1e-5);
                assert!(a.data().iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let spec = toy_spec();
        let model = Model::new(spec.clone(), Weights::init(&spec, 3)).unwrap();
        assert!(model.forward(&Tensor::zeros(vec![1, 5, 6]), Arithmetic::EXACT).is_err());
        assert!(matches!(
            model.gradients(&Tensor::zeros(vec![1, 6, 6]), 3),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let spec = toy_spec();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 2,
            batch: 4,
            seed: 11,
        };
        let trained = train_sgd(&spec, &toy_dataset(10), cfg).unwrap();
        assert_eq!(trained, Weights::init(&spec, 11));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let spec = toy_spec();
        let empty = toy_dataset(3).truncated(0);
        let cfg = TrainConfig {
            lr: 0.1,
            epochs: 1,
            batch: 4,
            seed: 1,
        };
        assert!(matches!(train_sgd(&spec, &empty, cfg), Err(Error::Empty(_))));
    }

    #[test]
    fn single_sample_overfits() {
        let spec = toy_spec();
        let ds = toy_dataset(1);
        let cfg = TrainConfig {
            lr: 0.5,
            epochs: 200,
            batch: 1,
            seed: 5,
        };
        let mut last = f64::INFINITY;
        let w = train_sgd_with(&spec, Weights::init(&spec, 5), &ds, cfg, |s| last = s.mean_loss).unwrap();
        let model = Model::new(spec, w).unwrap();
        let loss = model
            .gradients(&ds.image(0).unwrap(), ds.label(0) as usize)
            .unwrap()
            .loss;
        assert!(loss <= 0.01, "loss {loss} (last epoch mean {last})");
    }

    #[test]
    fn training_is_deterministic() {
        let spec = toy_spec();
        let ds = toy_dataset(12);
        let cfg = TrainConfig {
            lr: 0.05,
            epochs: 3,
            batch: 5,
            seed: 9,
        };
        let a = train_sgd(&spec, &ds, cfg).unwrap().to_archive().encode();
        let b = train_sgd(&spec, &ds, cfg).unwrap().to_archive().encode();
        assert_eq!(a, b);
    }

    #[test]
    fn weights_archive_round_trip_and_validation() {
        let spec = toy_spec();
        let w = Weights::init(&spec, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.axtf");
        save_weights(&w, &path).unwrap();
        assert_eq!(load_weights(&path, &spec).unwrap(), w);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_weights(&path, &spec), Err(Error::Format { .. })));

        assert!(matches!(
            load_weights(&dir.path().join("missing"), &spec),
            Err(Error::Io { .. })
        ));
        let lenet = ModelSpec::lenet();
        save_weights(&w, &path).unwrap();
        assert!(matches!(load_weights(&path, &lenet), Err(Error::Shape(_))));
    }
}

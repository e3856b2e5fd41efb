//! Gradient-sign attacks and distortion metrics.
//!
//! Gradients always come from exact arithmetic; callers judge success with
//! whichever backend they are evaluating.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Arithmetic, Dataset, Model, TensorArchive};
use crate::tensor::Tensor;

pub const CLIP_MIN: f32 = 0.0;
pub const CLIP_MAX: f32 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Fgsm,
    Pgd,
}

impl std::str::FromStr for AttackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fgsm" => Ok(AttackMethod::Fgsm),
            "pgd" => Ok(AttackMethod::Pgd),
            other => Err(Error::InvalidConfig(format!("unknown attack `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: AttackMethod,
    /// L-infinity budget in pixel units.
    pub epsilon: f32,
    /// PGD step size; FGSM uses `epsilon`.
    pub alpha: f32,
    pub iterations: usize,
}

impl AttackConfig {
    pub fn fgsm(epsilon: f32) -> Result<Self> {
        AttackConfig {
            method: AttackMethod::Fgsm,
            epsilon,
            alpha: epsilon,
            iterations: 1,
        }
        .validated()
    }

    pub fn pgd(epsilon: f32, alpha: f32, iterations: usize) -> Result<Self> {
        AttackConfig {
            method: AttackMethod::Pgd,
            epsilon,
            alpha,
            iterations,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        if !(0.0..=self.epsilon).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {} outside [0, epsilon = {}]",
                self.alpha, self.epsilon
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        Ok(self)
    }

    pub fn craft(&self, model: &Model, x: &Tensor, label: usize) -> Result<Tensor> {
        match self.method {
            AttackMethod::Fgsm => fgsm(model, x, label, self.epsilon),
            AttackMethod::Pgd => pgd(model, x, label, self.epsilon, self.alpha, self.iterations),
        }
    }
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One signed gradient step of size `epsilon`, clipped to the pixel range.
pub fn fgsm(model: &Model, x: &Tensor, label: usize, epsilon: f32) -> Result<Tensor> {
    AttackConfig::fgsm(epsilon)?;
    let grad = model.input_gradient(x, label)?;
    let mut out = x.clone();
    for (o, g) in out.data_mut().iter_mut().zip(grad.data()) {
        *o = (*o + epsilon * sign(*g)).clamp(CLIP_MIN, CLIP_MAX);
    }
    Ok(out)
}

/// Iterated sign steps of size `alpha`, each projected back onto the
/// `epsilon` ball around `x` and the pixel range. Starts from `x` itself.
pub fn pgd(model: &Model, x: &Tensor, label: usize, epsilon: f32, alpha: f32, iterations: usize) -> Result<Tensor> {
    AttackConfig::pgd(epsilon, alpha, iterations)?;
    let mut cur = x.clone();
    for _ in 0..iterations {
        let grad = model.input_gradient(&cur, label)?;
        for ((c, g), x0) in cur.data_mut().iter_mut().zip(grad.data()).zip(x.data()) {
            let stepped = *c + alpha * sign(*g);
            *c = stepped.clamp(x0 - epsilon, x0 + epsilon).clamp(CLIP_MIN, CLIP_MAX);
        }
    }
    Ok(cur)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    L0,
    L2,
    LInf,
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" | "l0" | "L0" => Ok(Norm::L0),
            "2" | "l2" | "L2" => Ok(Norm::L2),
            "inf" | "linf" | "Linf" => Ok(Norm::LInf),
            other => Err(Error::InvalidConfig(format!("unknown norm `{other}`"))),
        }
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

pub fn lp_distance(x: &Tensor, x_star: &Tensor, norm: Norm) -> Result<f64> {
    same_shape(x, x_star)?;
    let diffs = x
        .data()
        .iter()
        .zip(x_star.data())
        .map(|(&a, &b)| (b as f64 - a as f64).abs());
    Ok(match norm {
        Norm::L0 => diffs.filter(|&d| d != 0.0).count() as f64,
        Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        Norm::LInf => diffs.fold(0.0, f64::max),
    })
}

pub fn mse(x: &Tensor, x_star: &Tensor) -> Result<f64> {
    same_shape(x, x_star)?;
    if x.is_empty() {
        return Err(Error::Empty("image"));
    }
    let sum: f64 = x
        .data()
        .iter()
        .zip(x_star.data())
        .map(|(&a, &b)| (b as f64 - a as f64).powi(2))
        .sum();
    Ok(sum / x.len() as f64)
}

/// Peak signal-to-noise ratio in decibels.
pub fn psnr(x: &Tensor, x_star: &Tensor, max_value: f64) -> Result<f64> {
    let m = mse(x, x_star)?;
    if m == 0.0 {
        return Err(Error::InfinitePsnr);
    }
    Ok(20.0 * (max_value / m.sqrt()).log10())
}

/// True-class probability minus the best competing probability.
pub fn confidence(probs: &Tensor, label: usize) -> Result<f32> {
    let p = probs.data();
    if label >= p.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: p.len(),
        });
    }
    let runner_up = p
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label)
        .map(|(_, &v)| v)
        .fold(f32::NEG_INFINITY, f32::max);
    if runner_up == f32::NEG_INFINITY {
        return Ok(p[label]);
    }
    Ok(p[label] - runner_up)
}

/// Clean inputs, their perturbed versions and true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialSet {
    pub x: Tensor,
    pub x_star: Tensor,
    pub labels: Vec<u8>,
    /// Budget the set was crafted with, when known.
    pub epsilon: Option<f32>,
}

impl AdversarialSet {
    pub fn new(x: Tensor, x_star: Tensor, labels: Vec<u8>, epsilon: Option<f32>) -> Result<Self> {
        same_shape(&x, &x_star)?;
        if x.rank() < 2 || x.dims()[0] != labels.len() {
            return Err(Error::Shape(format!(
                "{} labels for adversarial tensors of shape {:?}",
                labels.len(),
                x.dims()
            )));
        }
        Ok(AdversarialSet {
            x,
            x_star,
            labels,
            epsilon,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn clean(&self, i: usize) -> Result<Tensor> {
        self.x.slice_first(i)
    }

    pub fn perturbed(&self, i: usize) -> Result<Tensor> {
        self.x_star.slice_first(i)
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut a = TensorArchive::new();
        a.insert("x", self.x.clone()).expect("fresh archive");
        a.insert("x_star", self.x_star.clone()).expect("fresh archive");
        let labels = self.labels.iter().map(|&l| l as f32).collect();
        a.insert("labels", Tensor::new(vec![self.labels.len()], labels).expect("1-d"))
            .expect("fresh archive");
        if let Some(eps) = self.epsilon {
            a.insert("epsilon", Tensor::new(vec![1], vec![eps]).expect("scalar"))
                .expect("fresh archive");
        }
        a
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        let bad = |reason: String| Error::format("adversarial set", reason);
        let labels = a
            .require("labels")?
            .data()
            .iter()
            .map(|&v| {
                if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
                    Ok(v as u8)
                } else {
                    Err(bad(format!("label {v} is not a class index")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let epsilon = match a.get("epsilon") {
            None => None,
            Some(t) if t.len() == 1 => Some(t.data()[0]),
            Some(_) => return Err(bad("epsilon must be a single value".into())),
        };
        Self::new(a.require("x")?.clone(), a.require("x_star")?.clone(), labels, epsilon)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&TensorArchive::load(path)?)
    }
}

/// Attacks the first `samples` inputs of `dataset` that `target` classifies
/// correctly. With `only_successful`, examples that do not fool `target` are
/// dropped from the result (they still count towards `samples`).
pub fn craft_adversarial_set(
    model: &Model,
    dataset: &Dataset,
    target: Arithmetic,
    cfg: &AttackConfig,
    samples: usize,
    only_successful: bool,
) -> Result<AdversarialSet> {
    let cfg = cfg.validated()?;
    let (mut xs, mut stars, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    let mut taken = 0;
    let mut start = 0;
    while taken < samples && start < dataset.len() {
        let end = (start + samples - taken).min(dataset.len());
        let chunk: Vec<Option<(Tensor, Tensor, bool)>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let x = dataset.image(i)?;
                let l = dataset.label(i) as usize;
                if model.predict(&x, target)? != l {
                    return Ok(None);
                }
                let adv = cfg.craft(model, &x, l)?;
                let fooled = model.predict(&adv, target)? != l;
                Ok(Some((x, adv, fooled)))
            })
            .collect::<Result<_>>()?;
        for (i, item) in (start..end).zip(chunk) {
            let Some((x, adv, fooled)) = item else { continue };
            taken += 1;
            if only_successful && !fooled {
                continue;
            }
            xs.push(x);
            stars.push(adv);
            labels.push(dataset.label(i));
        }
        start = end;
    }
    if labels.is_empty() {
        return Err(Error::Empty("adversarial examples"));
    }
    AdversarialSet::new(Tensor::stack(&xs)?, Tensor::stack(&stars)?, labels, Some(cfg.epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Arithmetic, ModelSpec, Weights};

    fn t(v: &[f32]) -> Tensor {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    fn toy_model() -> Model {
        let spec = ModelSpec::from_json(
            r#"{"input":[1,4,4],"layers":[
                {"type":"conv2d","in_ch":1,"out_ch":2,"kernel_h":3,"kernel_w":3,"stride":1,"padding":1},
                {"type":"relu"},
                {"type":"flatten"},
                {"type":"dense","in":32,"out":3},
                {"type":"softmax"}]}"#,
        )
        .unwrap();
        let w = Weights::init(&spec, 4);
        Model::new(spec, w).unwrap()
    }

    fn image() -> Tensor {
        Tensor::new(vec![1, 4, 4], (0..16).map(|i| (i as f32) / 16.0).collect()).unwrap()
    }

    #[test]
    fn distances() {
        let z = t(&[0.0, 0.0]);
        assert_eq!(lp_distance(&z, &t(&[3.0, 4.0]), Norm::L2).unwrap(), 5.0);
        assert_eq!(lp_distance(&t(&[0.0, 1.0]), &t(&[0.0, 1.5]), Norm::L0).unwrap(), 1.0);
        assert_eq!(lp_distance(&z, &t(&[3.0, -4.0]), Norm::LInf).unwrap(), 4.0);
        for n in [Norm::L0, Norm::L2, Norm::LInf] {
            assert_eq!(lp_distance(&z, &z, n).unwrap(), 0.0);
        }
        assert!(lp_distance(&z, &t(&[1.0]), Norm::L2).is_err());
    }

    #[test]
    fn mse_and_psnr() {
        let a = t(&[0.0, 0.0, 0.0]);
        let b = t(&[1.0, -1.0, 1.0]);
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), 0.0);
        let half = t(&[0.5, -0.5, 0.5]);
        let gain = psnr(&a, &half, 1.0).unwrap() - psnr(&a, &b, 1.0).unwrap();
        assert!((gain - 6.0206).abs() < 1e-3);
        assert!(matches!(psnr(&a, &a, 1.0), Err(Error::InfinitePsnr)));
    }

    #[test]
    fn confidence_examples() {
        assert!((confidence(&t(&[0.9, 0.05, 0.05]), 0).unwrap() - 0.85).abs() < 1e-6);
        assert_eq!(confidence(&t(&[0.25; 4]), 2).unwrap(), 0.0);
        assert_eq!(confidence(&t(&[0.0, 1.0, 0.0]), 1).unwrap(), 1.0);
        assert!(confidence(&t(&[0.5, 0.5]), 2).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig::fgsm(1.5).is_err());
        assert!(AttackConfig::fgsm(-0.1).is_err());
        assert!(AttackConfig::pgd(0.1, 0.2, 3).is_err());
        assert!(AttackConfig::pgd(0.1, 0.05, 0).is_err());
        assert!(AttackConfig::pgd(0.2, 0.05, 10).is_ok());
        assert_eq!("PGD".parse::<AttackMethod>().unwrap(), AttackMethod::Pgd);
    }

    #[test]
    fn zero_budget_is_identity() {
        let m = toy_model();
        let x = image();
        assert_eq!(fgsm(&m, &x, 1, 0.0).unwrap(), x);
        assert_eq!(pgd(&m, &x, 1, 0.0, 0.0, 5).unwrap(), x);
    }

    #[test]
    fn single_step_pgd_is_fgsm() {
        let m = toy_model();
        let x = image();
        assert_eq!(pgd(&m, &x, 2, 0.1, 0.1, 1).unwrap(), fgsm(&m, &x, 2, 0.1).unwrap());
    }

    #[test]
    fn budget_and_range_hold() {
        let m = toy_model();
        let x = image();
        for adv in [fgsm(&m, &x, 0, 0.3).unwrap(), pgd(&m, &x, 0, 0.3, 0.07, 10).unwrap()] {
            assert!(lp_distance(&x, &adv, Norm::LInf).unwrap() <= 0.3 + 1e-6);
            assert!(adv.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn fgsm_step_raises_loss_to_first_order() {
        let m = toy_model();
        let x = Tensor::full(vec![1, 4, 4], 0.5);
        let g = m.input_gradient(&x, 0).unwrap();
        let adv = fgsm(&m, &x, 0, 0.01).unwrap();
        let dot: f32 = g
            .data()
            .iter()
            .zip(adv.data().iter().zip(x.data()))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        assert!(dot >= 0.0);
        let before = m.gradients(&x, 0).unwrap().loss;
        let after = m.gradients(&adv, 0).unwrap().loss;
        assert!(after >= before);
        let _ = m.forward(&adv, Arithmetic::EXACT).unwrap();
    }

    #[test]
    fn adversarial_set_round_trip() {
        let x = Tensor::new(vec![2, 1, 2, 2], vec![0.0; 8]).unwrap();
        let xs = Tensor::new(vec![2, 1, 2, 2], vec![0.1; 8]).unwrap();
        let set = AdversarialSet::new(x, xs, vec![3, 7], Some(0.1)).unwrap();
        let back = AdversarialSet::from_archive(&TensorArchive::decode(&set.to_archive().encode()).unwrap()).unwrap();
        assert_eq!(back, set);
        let mut a = set.to_archive().into_entries();
        a.retain(|(n, _)| n != "epsilon");
        let mut arch = TensorArchive::new();
        for (n, t) in a {
            arch.insert(n, t).unwrap();
        }
        assert_eq!(AdversarialSet::from_archive(&arch).unwrap().epsilon, None);
        assert!(AdversarialSet::new(
            Tensor::zeros(vec![2, 1, 2, 2]),
            Tensor::zeros(vec![2, 1, 2, 2]),
            vec![1],
            None
        )
        .is_err());
    }
}

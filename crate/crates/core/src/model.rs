//! Differentiable score functions `h_w(x)` with hand-written backprop.
//!
//! Parameter layout for the MLP: `W1` (hidden x input, row-major), `b1`
//! (hidden), `w2` (hidden), `b2` (scalar). Linear models have no bias.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{PaucError, Result};
use crate::losses::PairwiseLoss;
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Softplus,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> (T, T) {
        match self {
            Activation::Softplus => (softplus(z), sigmoid(z)),
            Activation::Tanh => {
                let t = z.tanh();
                (t, T::one() - t * t)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Arch {
    LinearRaw,
    LinearSigmoid,
    MlpSigmoid { hidden: usize, activation: Activation },
}

impl Arch {
    pub fn mlp(hidden: usize) -> Self {
        Arch::MlpSigmoid {
            hidden,
            activation: Activation::Softplus,
        }
    }

    pub fn num_params(&self, input_dim: usize) -> usize {
        match *self {
            Arch::LinearRaw | Arch::LinearSigmoid => input_dim,
            Arch::MlpSigmoid { hidden, .. } => hidden * input_dim + 2 * hidden + 1,
        }
    }

    /// Whether scores pass through an output sigmoid.
    pub fn is_capped(&self) -> bool {
        !matches!(self, Arch::LinearRaw)
    }

    pub fn tag(&self) -> String {
        match *self {
            Arch::LinearRaw => "linear_raw".into(),
            Arch::LinearSigmoid => "linear_sigmoid".into(),
            Arch::MlpSigmoid { hidden, activation } => match activation {
                Activation::Softplus => format!("mlp_sigmoid({hidden})"),
                Activation::Tanh => format!("mlp_sigmoid_tanh({hidden})"),
            },
        }
    }

    /// Parses `linear_raw`, `linear_sigmoid`, `mlp_sigmoid(H)` or `mlp_sigmoid_tanh(H)`.
    pub fn parse(tag: &str) -> Result<Self> {
        let tag = tag.trim();
        let hidden_of = |prefix: &str| -> Option<usize> {
            tag.strip_prefix(prefix)?
                .strip_prefix('(')?
                .strip_suffix(')')?
                .trim()
                .parse()
                .ok()
        };
        match tag {
            "linear_raw" => Ok(Arch::LinearRaw),
            "linear_sigmoid" => Ok(Arch::LinearSigmoid),
            _ => {
                if let Some(h) = hidden_of("mlp_sigmoid_tanh") {
                    Ok(Arch::MlpSigmoid { hidden: h, activation: Activation::Tanh })
                } else if let Some(h) = hidden_of("mlp_sigmoid") {
                    Ok(Arch::mlp(h))
                } else {
                    Err(PaucError::invalid("arch", format!("unknown architecture `{tag}`")))
                }
            }
        }
    }
}

/// A score function together with its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel<T> {
    arch: Arch,
    input_dim: usize,
    params: Vec<T>,
}

impl<T: Scalar> ScoreModel<T> {
    pub fn new(arch: Arch, input_dim: usize, params: Vec<T>) -> Result<Self> {
        if input_dim == 0 {
            return Err(PaucError::invalid("input_dim", "must be positive"));
        }
        if let Arch::MlpSigmoid { hidden: 0, .. } = arch {
            return Err(PaucError::invalid("hidden", "must be positive"));
        }
        let expected = arch.num_params(input_dim);
        if params.len() != expected {
            return Err(PaucError::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Self { arch, input_dim, params })
    }

    pub fn zeros(arch: Arch, input_dim: usize) -> Result<Self> {
        Self::new(arch, input_dim, vec![T::zero(); arch.num_params(input_dim)])
    }

    /// Uniform initialization in `[-r, r]` with `r = 1/sqrt(fan_in)` per layer.
    pub fn init(arch: Arch, input_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |fan_in: usize| -> T {
            let r = 1.0 / (fan_in as f64).sqrt();
            T::lit(rng.random_range(-r..=r))
        };
        let params: Vec<T> = match arch {
            Arch::LinearRaw | Arch::LinearSigmoid => (0..input_dim).map(|_| draw(input_dim)).collect(),
            Arch::MlpSigmoid { hidden, .. } => {
                let mut p = Vec::with_capacity(arch.num_params(input_dim));
                for _ in 0..hidden * input_dim + hidden {
                    p.push(draw(input_dim));
                }
                for _ in 0..hidden + 1 {
                    p.push(draw(hidden));
                }
                p
            }
        };
        Self::new(arch, input_dim, params)
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(PaucError::DimensionMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn with_params(&self, params: &[T]) -> Result<Self> {
        let mut m = self.clone();
        m.set_params(params)?;
        Ok(m)
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(PaucError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-sigmoid output and its gradient written into `grad`.
    /// For `LinearRaw` this is the score itself.
    fn logit_into(&self, x: &[T], grad: Option<&mut [T]>) -> T {
        match self.arch {
            Arch::LinearRaw | Arch::LinearSigmoid => {
                if let Some(g) = grad {
                    g.copy_from_slice(x);
                }
                crate::scalar::dot(&self.params, x)
            }
            Arch::MlpSigmoid { hidden, activation } => {
                let d = self.input_dim;
                let (w1, rest) = self.params.split_at(hidden * d);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let mut out = b2[0];
                let mut acts = Vec::with_capacity(hidden);
                for k in 0..hidden {
                    let row = &w1[k * d..(k + 1) * d];
                    let z = row.iter().zip(x).fold(b1[k], |acc, (&w, &xi)| acc + w * xi);
                    let (a, da) = activation.apply(z);
                    out += w2[k] * a;
                    acts.push((a, da));
                }
                if let Some(g) = grad {
                    let (gw1, grest) = g.split_at_mut(hidden * d);
                    let (gb1, grest) = grest.split_at_mut(hidden);
                    let (gw2, gb2) = grest.split_at_mut(hidden);
                    for k in 0..hidden {
                        let (a, da) = acts[k];
                        let dz = w2[k] * da;
                        for (gi, &xi) in gw1[k * d..(k + 1) * d].iter_mut().zip(x) {
                            *gi = dz * xi;
                        }
                        gb1[k] = dz;
                        gw2[k] = a;
                    }
                    gb2[0] = T::one();
                }
                out
            }
        }
    }

    /// Score and gradient, writing `∇_w h` into `grad`.
    pub fn score_grad_into(&self, x: &[T], grad: &mut [T]) -> Result<T> {
        self.check_dim(x)?;
        if grad.len() != self.params.len() {
            return Err(PaucError::DimensionMismatch {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let z = self.logit_into(x, Some(grad));
        if self.arch.is_capped() {
            let h = sigmoid(z);
            let dh = h * (T::one() - h);
            grad.iter_mut().for_each(|g| *g *= dh);
            Ok(h)
        } else {
            Ok(z)
        }
    }

    pub fn score(&self, x: &[T]) -> Result<T> {
        self.check_dim(x)?;
        let z = self.logit_into(x, None);
        Ok(if self.arch.is_capped() { sigmoid(z) } else { z })
    }

    pub fn score_grad(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.score_and_grad(x)?.1)
    }

    pub fn score_and_grad(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        let mut g = vec![T::zero(); self.params.len()];
        let h = self.score_grad_into(x, &mut g)?;
        Ok((h, g))
    }

    /// Pre-sigmoid logit and its gradient (the score itself for `LinearRaw`).
    pub fn logit_and_grad(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        self.check_dim(x)?;
        let mut g = vec![T::zero(); self.params.len()];
        let z = self.logit_into(x, Some(&mut g));
        Ok((z, g))
    }

    /// Scores of every example in `data`, in example order.
    pub fn scores(&self, data: &LabeledDataset<T>) -> Result<Vec<T>> {
        (0..data.len()).map(|i| self.score(data.row(i))).collect()
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            arch: self.arch.tag(),
            input_dim: self.input_dim,
            num_params: self.params.len(),
            params: self.params.iter().map(|p| p.to_f64_lossy()).collect(),
        }
    }

    pub fn from_checkpoint(ck: &ModelCheckpoint) -> Result<Self> {
        let arch = Arch::parse(&ck.arch)?;
        let params = ck.params.iter().map(|&p| T::lit(p)).collect();
        Self::new(arch, ck.input_dim, params)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_checkpoint())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: ModelCheckpoint = serde_json::from_str(&text)?;
        Self::from_checkpoint(&ck)
    }
}

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// On-disk model record. Parameters are written as shortest round-trip decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub schema_version: u32,
    pub arch: String,
    pub input_dim: usize,
    pub num_params: usize,
    pub params: Vec<f64>,
}

/// Pairwise surrogate `L = ℓ(h(x_pos) - h(x_neg))` and its parameter gradient.
pub fn pairloss_grad<T: Scalar>(
    model: &ScoreModel<T>,
    loss: &PairwiseLoss<T>,
    x_pos: &[T],
    x_neg: &[T],
) -> Result<(T, Vec<T>)> {
    let (hp, gp) = model.score_and_grad(x_pos)?;
    let (hn, gn) = model.score_and_grad(x_neg)?;
    let (value, deriv) = loss.eval(hp - hn);
    let grad = gp.iter().zip(&gn).map(|(&a, &b)| deriv * (a - b)).collect();
    Ok((value, grad))
}

/// Scores and score gradients for a set of examples.
#[derive(Debug, Clone)]
pub struct ScoreTable<T> {
    pub scores: Vec<T>,
    /// Row-major, `scores.len() x num_params`.
    pub grads: Vec<T>,
    pub num_params: usize,
}

impl<T: Scalar> ScoreTable<T> {
    pub fn compute(model: &ScoreModel<T>, data: &LabeledDataset<T>, ids: &[usize]) -> Result<Self> {
        let p = model.num_params();
        let mut grads = vec![T::zero(); ids.len() * p];
        let mut scores = Vec::with_capacity(ids.len());
        for (k, &id) in ids.iter().enumerate() {
            scores.push(model.score_grad_into(data.row(id), &mut grads[k * p..(k + 1) * p])?);
        }
        Ok(Self { scores, grads, num_params: p })
    }

    pub fn grad(&self, k: usize) -> &[T] {
        &self.grads[k * self.num_params..(k + 1) * self.num_params]
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossKind;

    #[test]
    fn score_examples() {
        let m = ScoreModel::<f64>::zeros(Arch::LinearRaw, 3).unwrap();
        assert_eq!(m.score(&[1.0, -2.0, 5.0]).unwrap(), 0.0);
        let m = ScoreModel::<f64>::zeros(Arch::LinearSigmoid, 2).unwrap();
        assert_eq!(m.score(&[7.0, -3.0]).unwrap(), 0.5);
        let m = ScoreModel::new(Arch::LinearRaw, 2, vec![1.0, 2.0]).unwrap();
        assert_eq!(m.score(&[3.0, -1.0]).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let m = ScoreModel::<f64>::zeros(Arch::LinearRaw, 2).unwrap();
        assert!(matches!(m.score(&[1.0]), Err(PaucError::DimensionMismatch { .. })));
        assert!(m.score_grad(&[1.0, 2.0, 3.0]).is_err());
        assert!(ScoreModel::new(Arch::LinearRaw, 2, vec![1.0_f64]).is_err());
    }

    #[test]
    fn score_grad_examples() {
        let m = ScoreModel::new(Arch::LinearRaw, 3, vec![0.3, -1.0, 2.0]).unwrap();
        let x = [1.5, -2.0, 0.25];
        assert_eq!(m.score_grad(&x).unwrap(), x.to_vec());
        let m = ScoreModel::<f64>::zeros(Arch::LinearSigmoid, 3).unwrap();
        assert_eq!(m.score_grad(&x).unwrap(), vec![0.375, -0.5, 0.0625]);
    }

    #[test]
    fn pairloss_examples() {
        let loss = PairwiseLoss::new(LossKind::SquaredHinge, 1.0).unwrap();
        let m = ScoreModel::<f64>::init(Arch::mlp(4), 2, 3).unwrap();
        let (l, g) = pairloss_grad(&m, &loss, &[0.2, 0.4], &[0.2, 0.4]).unwrap();
        assert_eq!(l, 1.0);
        assert!(g.iter().all(|&v| v == 0.0));

        let m = ScoreModel::<f64>::zeros(Arch::LinearRaw, 2).unwrap();
        let (l, g) = pairloss_grad(&m, &loss, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g, vec![-2.0, 2.0]);
    }

    #[test]
    fn arch_tags_round_trip() {
        for arch in [
            Arch::LinearRaw,
            Arch::LinearSigmoid,
            Arch::mlp(7),
            Arch::MlpSigmoid { hidden: 3, activation: Activation::Tanh },
        ] {
            assert_eq!(Arch::parse(&arch.tag()).unwrap(), arch);
        }
        assert!(Arch::parse("resnet18").is_err());
        assert_eq!(Arch::mlp(5).num_params(4), 5 * 4 + 5 + 5 + 1);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ScoreModel::<f64>::init(Arch::mlp(8), 4, 11).unwrap();
        let b = ScoreModel::<f64>::init(Arch::mlp(8), 4, 11).unwrap();
        assert_eq!(a, b);
        let r_in = 1.0 / 2.0;
        assert!(a.params()[..8 * 4 + 8].iter().all(|p| p.abs() <= r_in));
        let r_out = 1.0 / 8f64.sqrt();
        assert!(a.params()[8 * 4 + 8..].iter().all(|p| p.abs() <= r_out));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = ScoreModel::<f64>::init(Arch::mlp(3), 5, 2).unwrap();
        m.save_json(&path).unwrap();
        let back = ScoreModel::<f64>::load_json(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn sigmoid_capped_in_unit_interval() {
        let m = ScoreModel::new(Arch::LinearSigmoid, 1, vec![1e3_f64]).unwrap();
        let hi = m.score(&[0.5]).unwrap();
        let lo = m.score(&[-0.5]).unwrap();
        assert!(hi <= 1.0 && lo >= 0.0);
    }
}

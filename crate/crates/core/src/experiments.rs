//! Reproducible experiment drivers: the relative error of the KL estimator
//! against the exact CVaR estimator, and paired training comparisons
//! against the cross-entropy baseline.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{generate, LabeledDataset, Preset, SynthSpec};
use crate::error::{PaucError, Result};
use crate::losses::{dro_cvar, dro_kl, FullTables, PairBlock, PairwiseLoss};
use crate::model::{Arch, ScoreModel};
use crate::optim::train::{run_training, TrainConfig};
use crate::optim::{OptimizerTag, StepHyper, UpdateStyle};
use crate::scalar::{CompensatedSum, Scalar};

pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [0.05, 0.1, 0.3, 1.0, 3.0, 10.0];
pub const DEFAULT_RE_BETAS: [f64; 2] = [0.3, 0.5];

#[derive(Debug, Clone, PartialEq)]
pub struct ReConfig<T> {
    pub lambdas: Vec<f64>,
    pub betas: Vec<f64>,
    pub draws: usize,
    /// Standard deviation of the i.i.d. Gaussian model parameters.
    pub draw_scale: f64,
    pub arch: Arch,
    pub loss: PairwiseLoss<T>,
    pub seed: u64,
}

impl<T: Scalar> ReConfig<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            lambdas: DEFAULT_LAMBDA_GRID.to_vec(),
            betas: DEFAULT_RE_BETAS.to_vec(),
            draws: 100,
            draw_scale: 1.0,
            arch: Arch::LinearSigmoid,
            loss: PairwiseLoss::squared_hinge(T::one()),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(PaucError::invalid("lambdas", "empty lambda grid"));
        }
        if self.betas.is_empty() {
            return Err(PaucError::invalid("betas", "empty beta list"));
        }
        if self.lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(PaucError::invalid("lambdas", "every lambda must be positive"));
        }
        if self.betas.iter().any(|&b| !(b > 0.0 && b <= 1.0)) {
            return Err(PaucError::invalid("betas", "every beta must lie in (0, 1]"));
        }
        if !(self.draw_scale > 0.0 && self.draw_scale.is_finite()) {
            return Err(PaucError::invalid("draw_scale", "must be positive"));
        }
        if self.draws == 0 {
            return Err(PaucError::invalid("draws", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReRow {
    pub beta: f64,
    pub lambda: f64,
    pub mean_re: f64,
    /// Sample standard deviation over the used draws (0 for a single draw).
    pub std_re: f64,
    pub draws: usize,
    /// Draws skipped because the CVaR objective was zero.
    pub skipped: usize,
}

/// Model for draw `r`: every parameter i.i.d. `N(0, scale²)`. Draw `r`
/// reads stream `r` of the seeded generator, so draws are independent of
/// how many are taken.
pub fn draw_model<T: Scalar>(arch: Arch, dim: usize, scale: f64, seed: u64, r: usize) -> Result<ScoreModel<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    let params = (0..arch.num_params(dim))
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(scale * z)
        })
        .collect();
    ScoreModel::new(arch, dim, params)
}

/// Relative error `|KL(λ) − CVaR(β)| / CVaR(β)` of the one-way objectives,
/// averaged over random models, for every `(β, λ)` on the grid.
pub fn re_curve<T: Scalar>(data: &LabeledDataset<T>, cfg: &ReConfig<T>) -> Result<Vec<ReRow>> {
    cfg.validate()?;
    data.require_both_classes()?;
    for &b in &cfg.betas {
        crate::losses::integral_count(data.n_neg(), b)?;
    }
    let nb = cfg.betas.len();
    let nl = cfg.lambdas.len();
    let mut res: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.draws); nb * nl];
    let mut skipped = vec![0usize; nb];
    for r in 0..cfg.draws {
        let model = draw_model::<T>(cfg.arch, data.dim(), cfg.draw_scale, cfg.seed, r)?;
        let t = FullTables::compute(&model, data)?;
        let block = PairBlock::compute(&t.pos, &t.neg, &cfg.loss);
        let row_mean = |f: &dyn Fn(&[T]) -> Result<T>| -> Result<f64> {
            let mut acc = CompensatedSum::new();
            for i in 0..block.n_pos {
                acc.add(f(block.row(i))?);
            }
            Ok((acc.value() / T::from_count(block.n_pos)).to_f64_lossy())
        };
        let kl: Vec<f64> = cfg
            .lambdas
            .iter()
            .map(|&l| row_mean(&|row| dro_kl(row, T::lit(l))))
            .collect::<Result<_>>()?;
        for (bi, &b) in cfg.betas.iter().enumerate() {
            let cvar = row_mean(&|row| dro_cvar(row, T::lit(b)))?;
            if cvar == 0.0 {
                skipped[bi] += 1;
                continue;
            }
            for (li, &k) in kl.iter().enumerate() {
                res[bi * nl + li].push((k - cvar).abs() / cvar.abs());
            }
        }
    }
    let mut rows = Vec::with_capacity(nb * nl);
    for (bi, &beta) in cfg.betas.iter().enumerate() {
        for (li, &lambda) in cfg.lambdas.iter().enumerate() {
            let xs = &res[bi * nl + li];
            let (mean, std) = mean_std(xs);
            rows.push(ReRow { beta, lambda, mean_re: mean, std_re: std, draws: xs.len(), skipped: skipped[bi] });
        }
    }
    Ok(rows)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn write_re_csv(rows: &[ReRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| PaucError::Io(std::io::Error::other(e.to_string())))?;
    }
    w.flush()?;
    Ok(())
}

/// Paired training runs on the hard-negative preset: SOPA against
/// cross-entropy on one-way pAUC and SOTA-s against cross-entropy on
/// two-way pAUC, from the same data and the same initial model.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingProtocol {
    pub n: usize,
    pub pos_frac: f64,
    pub dim: usize,
    pub preset: Preset,
    pub arch: Arch,
    pub epochs: usize,
    pub ce: StepHyper<f64>,
    pub sopa: StepHyper<f64>,
    pub sota_s: StepHyper<f64>,
}

impl Default for OrderingProtocol {
    fn default() -> Self {
        let base = StepHyper {
            batch_pos: 32,
            batch_neg: 64,
            update_style: UpdateStyle::adam(),
            gamma1: 0.1,
            ..StepHyper::default()
        };
        Self {
            n: 2000,
            pos_frac: 0.1,
            dim: 10,
            preset: Preset::hard_negatives_default(),
            arch: Arch::LinearSigmoid,
            epochs: 60,
            ce: StepHyper { eta1: 1e-2, ..base },
            sopa: StepHyper { eta1: 1e-2, eta2: 1.0, beta_fpr: 0.3, ..base },
            sota_s: StepHyper {
                eta1: 1e-2,
                gamma0: 0.9,
                gamma1: 0.9,
                gamma2: 0.1,
                lambda: 1.0,
                lambda_prime: 1.0,
                ..base
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingOutcome {
    pub seed: u64,
    pub ce_opauc: f64,
    pub sopa_opauc: f64,
    pub ce_tpauc: f64,
    pub sota_s_tpauc: f64,
}

impl OrderingOutcome {
    pub fn opauc_gain(&self) -> f64 {
        self.sopa_opauc - self.ce_opauc
    }

    pub fn tpauc_gain(&self) -> f64 {
        self.sota_s_tpauc - self.ce_tpauc
    }
}

impl OrderingProtocol {
    pub fn dataset(&self, seed: u64) -> Result<LabeledDataset<f64>> {
        generate(&SynthSpec::new(self.n, self.pos_frac, self.dim, self.preset, seed))
    }

    /// Final training-set normalized OPAUC(FPR ≤ 0.3) and TPAUC(0.5, 0.5).
    pub fn run(&self, seed: u64) -> Result<OrderingOutcome> {
        let data = self.dataset(seed)?;
        let model = ScoreModel::init(self.arch, self.dim, seed)?;
        let train = |tag, hyper| -> Result<crate::optim::MetricReport> {
            let cfg = TrainConfig::new(tag, hyper, self.epochs, seed);
            Ok(run_training(&cfg, &data, None, &model, None)?.1)
        };
        let pick = |x: Option<f64>| x.ok_or_else(|| PaucError::invalid("data", "reporting window is empty"));
        let ce = train(OptimizerTag::Ce, self.ce)?;
        let sopa = train(OptimizerTag::Sopa, self.sopa)?;
        let sota_s = train(OptimizerTag::SotaS, self.sota_s)?;
        Ok(OrderingOutcome {
            seed,
            ce_opauc: pick(ce.last().train.opauc[0])?,
            sopa_opauc: pick(sopa.last().train.opauc[0])?,
            ce_tpauc: pick(ce.last().train.tpauc[1])?,
            sota_s_tpauc: pick(sota_s.last().train.tpauc[1])?,
        })
    }
}

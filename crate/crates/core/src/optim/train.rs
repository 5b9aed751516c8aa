//! Epoch loop, evaluation, trace CSV and batch replay log.

use std::io::{BufRead, Write};
use std::time::Instant;

use log::{error, info};
use serde::{Deserialize, Serialize};

use crate::data::{Batch, BatchSampler, LabeledDataset};
use crate::error::{PaucError, Result};
use crate::losses::{
    integral_count, mean_pairwise_loss, opauc_cvar_min, opauc_cvar_objective, opauc_kl_objective_and_grad,
    opauc_topk_surrogate, tpauc_cvar_objective, tpauc_kl_objective_and_grad,
};
use crate::metrics::{opauc_exact, roc_auc, tpauc_exact, Normalization, ScoreSet};
use crate::model::ScoreModel;
use crate::scalar::{norm2, Scalar};

use super::baselines::ce_objective;
use super::sota::{check_prox_gamma, rho_for_arch, sota_stage};
use super::{
    ce_step, mb_baseline_step, sopa_s_step, sopa_step, sota_s_step, MbMode, OptimizerState, OptimizerTag,
    SotaSchedule, StepContext, StepHyper, StepOutput,
};

/// FPR upper bounds at which one-way pAUC is reported.
pub const OPAUC_FPRS: [f64; 2] = [0.3, 0.5];
/// `(α, β)` = (TPR lower bound, FPR upper bound) at which two-way pAUC is reported.
pub const TPAUC_POINTS: [(f64, f64); 2] = [(0.6, 0.4), (0.5, 0.5)];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub tag: OptimizerTag,
    pub hyper: StepHyper<T>,
    pub epochs: usize,
    pub seed: u64,
    /// Multiply the model step size by `decay_factor` every this many
    /// epochs; 0 disables decay. Not applied to the stagewise solver, whose
    /// stage schedule already shrinks its steps.
    pub decay_every: usize,
    pub decay_factor: T,
    /// Stage lengths for [`OptimizerTag::Sota`], one stage per epoch.
    pub sota_schedule: SotaSchedule,
    /// Weak-convexity bound for architectures without a closed-form estimate.
    pub sota_rho: Option<T>,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(tag: OptimizerTag, hyper: StepHyper<T>, epochs: usize, seed: u64) -> Self {
        Self {
            tag,
            hyper,
            epochs,
            seed,
            decay_every: 20,
            decay_factor: T::lit(0.1),
            sota_schedule: SotaSchedule { stages: epochs.max(1), base: 1.0, scale_by_n_pos: false },
            sota_rho: None,
        }
    }

    fn validate(&self, data: &LabeledDataset<T>, model: &ScoreModel<T>) -> Result<()> {
        self.hyper.validate_for(data)?;
        if model.input_dim() != data.dim() {
            return Err(PaucError::DimensionMismatch { expected: model.input_dim(), got: data.dim() });
        }
        if !(self.decay_factor > T::zero() && self.decay_factor <= T::one()) {
            return Err(PaucError::invalid("decay_factor", "must lie in (0, 1]"));
        }
        if self.tag == OptimizerTag::Sota {
            let h = &self.hyper;
            self.sota_schedule.validate(data.n_pos())?;
            integral_count(data.n_pos(), h.alpha_tpr.to_f64_lossy())?;
            integral_count(data.n_neg(), h.beta_fpr.to_f64_lossy())?;
            let rho = rho_for_arch(model.arch(), data, &h.loss, h.alpha_tpr, h.beta_fpr, self.sota_rho);
            if let Some(rho) = rho {
                check_prox_gamma(h.prox_gamma, rho)?;

            }
        }
        Ok(())
    }
}

/// Exact AUC, one-way and two-way pAUC (normalized) at the reporting points.
/// A point whose rank window is empty for this dataset is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub auc: f64,
    pub opauc: [Option<f64>; 2],
    pub tpauc: [Option<f64>; 2],
}

impl EvalMetrics {
    pub fn compute<T: Scalar>(model: &ScoreModel<T>, data: &LabeledDataset<T>) -> Result<Self> {
        data.require_both_classes()?;
        let scores = model.scores(data)?;
        let set = ScoreSet::new(
            data.pos_ids().iter().map(|&i| scores[i]).collect(),
            data.neg_ids().iter().map(|&j| scores[j]).collect(),
        )?;
        let window = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(PaucError::EmptyFprWindow { .. } | PaucError::EmptySelectionWindow { .. }) => Ok(None),
            Err(e) => Err(e),
        };
        let norm = Normalization::Normalized;
        Ok(Self {
            auc: roc_auc(&set)?,
            opauc: [
                window(opauc_exact(&set, 0.0, OPAUC_FPRS[0], norm))?,
                window(opauc_exact(&set, 0.0, OPAUC_FPRS[1], norm))?,
            ],
            tpauc: [
                window(tpauc_exact(&set, TPAUC_POINTS[0].0, TPAUC_POINTS[0].1, norm))?,
                window(tpauc_exact(&set, TPAUC_POINTS[1].0, TPAUC_POINTS[1].1, norm))?,
            ],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub steps: usize,
    /// Full-data training objective of the optimizer, when defined.
    pub objective: Option<f64>,
    /// Mean norm of the stochastic gradient estimator over the epoch.
    pub grad_norm: f64,
    pub train: EvalMetrics,
    pub val: Option<EvalMetrics>,
    /// Tracker floor activations so far.
    pub floor_hits: u64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub optimizer: String,
    pub seed: u64,
    /// Row 0 holds the metrics of the initial model.
    pub rows: Vec<EpochRow>,
    pub floor_hits: u64,
}

/// Columns of the trace CSV, in order. `wall_seconds` is appended only when
/// timing is requested, so that repeated runs produce identical files.
pub const TRACE_COLUMNS: [&str; 15] = [
    "epoch",
    "steps",
    "objective",
    "grad_norm",
    "train_auc",
    "train_opauc_0.3",
    "train_opauc_0.5",
    "train_tpauc_0.6_0.4",
    "train_tpauc_0.5_0.5",
    "val_auc",
    "val_opauc_0.3",
    "val_opauc_0.5",
    "val_tpauc_0.6_0.4",
    "val_tpauc_0.5_0.5",
    "floor_hits",
];

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.12e}")).unwrap_or_default()
}

impl MetricReport {
    pub fn last(&self) -> &EpochRow {
        self.rows.last().expect("report always holds the initial row")
    }

    pub fn initial(&self) -> &EpochRow {
        &self.rows[0]
    }

    /// One line per completed epoch; the initial row stays in `rows` but is
    /// not part of the trace.
    pub fn write_trace_csv(&self, out: impl Write, include_timing: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = TRACE_COLUMNS.to_vec();
        if include_timing {
            header.push("wall_seconds");
        }
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows[1..] {
            let metrics = |m: Option<&EvalMetrics>| -> Vec<String> {
                match m {
                    Some(m) => vec![
                        cell(Some(m.auc)),
                        cell(m.opauc[0]),
                        cell(m.opauc[1]),
                        cell(m.tpauc[0]),
                        cell(m.tpauc[1]),
                    ],
                    None => vec![String::new(); 5],
                }
            };
            let mut rec = vec![
                row.epoch.to_string(),
                row.steps.to_string(),
                cell(row.objective),
                cell(Some(row.grad_norm)),
            ];
            rec.extend(metrics(Some(&row.train)));
            rec.extend(metrics(row.val.as_ref()));
            rec.push(row.floor_hits.to_string());
            if include_timing {
                rec.push(format!("{:.6}", row.wall_seconds));
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> PaucError {
    PaucError::Io(std::io::Error::other(e.to_string()))
}

/// Non-stagewise step dispatch.
pub fn step<T: Scalar>(
    tag: OptimizerTag,
    state: &mut OptimizerState<T>,
    hyper: &StepHyper<T>,
    ctx: &StepContext<'_, T>,
    batch: &Batch,
) -> Result<StepOutput<T>> {
    match tag {
        OptimizerTag::Sopa => sopa_step(state, hyper, ctx, batch),
        OptimizerTag::SopaS => sopa_s_step(state, hyper, ctx, batch),
        OptimizerTag::SotaS => sota_s_step(state, hyper, ctx, batch),
        OptimizerTag::Ce => ce_step(state, hyper, ctx, batch),
        OptimizerTag::Auc => {
            let h = StepHyper { mb_neg_frac: T::one(), mb_pos_frac: T::one(), ..*hyper };
            mb_baseline_step(state, &h, ctx, batch, MbMode::Opauc)
        }
        OptimizerTag::MbOpauc => mb_baseline_step(state, hyper, ctx, batch, MbMode::Opauc),
        OptimizerTag::MbTpauc => mb_baseline_step(state, hyper, ctx, batch, MbMode::Tpauc),
        OptimizerTag::Sota => Err(PaucError::invalid("optimizer", "the stagewise solver has no single-step form")),
    }
}

fn not_integral<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(PaucError::CvarLevelNotIntegral { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// The full-data objective each optimizer is minimizing.
pub fn training_objective<T: Scalar>(
    tag: OptimizerTag,
    state: &OptimizerState<T>,
    hyper: &StepHyper<T>,
    model: &ScoreModel<T>,
    data: &LabeledDataset<T>,
) -> Result<Option<T>> {
    let h = hyper;
    match tag {
        OptimizerTag::Sopa => match not_integral(opauc_cvar_min(model, data, &h.loss, h.beta_fpr))? {
            Some(v) => Ok(Some(v)),
            None => opauc_cvar_objective(model, data, &h.loss, h.beta_fpr, &state.s).map(Some),
        },
        OptimizerTag::SopaS => Ok(Some(opauc_kl_objective_and_grad(model, data, &h.loss, h.lambda)?.0)),
        OptimizerTag::SotaS => {
            Ok(Some(tpauc_kl_objective_and_grad(model, data, &h.loss, h.lambda, h.lambda_prime)?.0))
        }
        OptimizerTag::Sota => not_integral(tpauc_cvar_objective(model, data, &h.loss, h.alpha_tpr, h.beta_fpr)),
        OptimizerTag::Ce => ce_objective(model, data, state.bias).map(Some),
        OptimizerTag::Auc => Ok(Some(mean_pairwise_loss(model, data, &h.loss)?.0)),
        OptimizerTag::MbOpauc => not_integral(opauc_topk_surrogate(model, data, &h.loss, h.mb_neg_frac)),
        OptimizerTag::MbTpauc => not_integral(tpauc_cvar_objective(model, data, &h.loss, h.mb_pos_frac, h.mb_neg_frac)),
    }
}

/// One line of the batch replay log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedBatch {
    pub epoch: usize,
    pub batch: Batch,
}

fn join(ids: &[usize]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

pub fn write_batch_line(out: &mut dyn Write, epoch: usize, step: u64, batch: &Batch) -> Result<()> {
    writeln!(out, "{epoch}\t{step}\t{}\t{}", join(&batch.pos), join(&batch.neg))?;
    Ok(())
}

/// Parses a log written by [`run_training`]: `epoch<TAB>step<TAB>pos ids<TAB>neg ids`,
/// ids comma-separated, `#` lines ignored.
pub fn read_batch_log(input: impl BufRead) -> Result<Vec<LoggedBatch>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: &str| PaucError::Parse { line: n + 1, message: m.to_string() };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 tab-separated fields"));
        }
        let ids = |s: &str| -> Result<Vec<usize>> {
            s.split(',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<usize>().map_err(|_| bad("bad example id")))
                .collect()
        };
        out.push(LoggedBatch {
            epoch: fields[0].parse().map_err(|_| bad("bad epoch"))?,
            batch: Batch { pos: ids(fields[2])?, neg: ids(fields[3])? },
        });
    }
    Ok(out)
}

/// Trains `model` on `train` and reports exact pAUC metrics after every
/// epoch. With `batch_log` set, every sampled batch is written out so that
/// [`replay_training`] can reproduce the run.
pub fn run_training<T: Scalar>(
    cfg: &TrainConfig<T>,
    train: &LabeledDataset<T>,
    val: Option<&LabeledDataset<T>>,
    model: &ScoreModel<T>,
    batch_log: Option<&mut dyn Write>,
) -> Result<(OptimizerState<T>, MetricReport)> {
    cfg.validate(train, model)?;
    let mut sampler = BatchSampler::new(train, cfg.hyper.batch_pos, cfg.hyper.batch_neg, cfg.seed)?;
    let mut queue: Vec<Batch> = Vec::new();
    let mut source = |_epoch: usize, wanted: Option<usize>| -> Result<Vec<Batch>> {
        Ok(match wanted {
            None => sampler.next_epoch(),
            Some(n) => {
                let mut out = Vec::with_capacity(n);
                while out.len() < n {
                    if queue.is_empty() {
                        queue = sampler.next_epoch();
                        queue.reverse();
                    }
                    out.push(queue.pop().expect("non-empty epoch"));
                }
                out
            }
        })
    };
    drive(cfg, train, val, model, &mut source, batch_log)
}

/// Re-runs a training trajectory from a batch log instead of the sampler.
pub fn replay_training<T: Scalar>(
    cfg: &TrainConfig<T>,
    train: &LabeledDataset<T>,
    val: Option<&LabeledDataset<T>>,
    model: &ScoreModel<T>,
    log: &[LoggedBatch],
) -> Result<(OptimizerState<T>, MetricReport)> {
    cfg.validate(train, model)?;
    let mut source = |epoch: usize, _wanted: Option<usize>| -> Result<Vec<Batch>> {
        Ok(log.iter().filter(|l| l.epoch == epoch).map(|l| l.batch.clone()).collect())
    };
    drive(cfg, train, val, model, &mut source, None)
}

type BatchSource<'a> = dyn FnMut(usize, Option<usize>) -> Result<Vec<Batch>> + 'a;

fn drive<T: Scalar>(
    cfg: &TrainConfig<T>,
    train: &LabeledDataset<T>,
    val: Option<&LabeledDataset<T>>,
    model: &ScoreModel<T>,
    source: &mut BatchSource<'_>,
    mut batch_log: Option<&mut dyn Write>,
) -> Result<(OptimizerState<T>, MetricReport)> {
    let ctx = StepContext::new(model, train);
    let mut state = match cfg.tag {
        OptimizerTag::Sota => OptimizerState::for_sota(model.params().to_vec(), train.n_pos()),
        _ => OptimizerState::new(model.params().to_vec(), train.n_pos()),
    };
    let mut hyper = cfg.hyper;
    let started = Instant::now();
    let mut rows = Vec::with_capacity(cfg.epochs + 1);
    rows.push(epoch_row(cfg, &state, &hyper, &ctx, val, 0, 0, 0.0, started)?);

    for epoch in 1..=cfg.epochs {
        if cfg.tag != OptimizerTag::Sota && cfg.decay_every > 0 && epoch > 1 && (epoch - 1) % cfg.decay_every == 0 {
            hyper.eta1 *= cfg.decay_factor;
            info!("epoch {epoch}: model step size decayed to {}", hyper.eta1);
        }
        let wanted = match cfg.tag {
            OptimizerTag::Sota => Some(cfg.sota_schedule.iters(epoch, train.n_pos())),
            _ => None,
        };
        let batches = source(epoch, wanted)?;
        if let Some(log) = batch_log.as_deref_mut() {
            for (k, b) in batches.iter().enumerate() {
                write_batch_line(log, epoch, state.step_count + k as u64 + 1, b)?;
            }
        }
        let mut grad_norm_sum = 0.0;
        if cfg.tag == OptimizerTag::Sota {
            sota_stage(&mut state, &hyper, &ctx, epoch, &batches)?;
        } else {
            for b in &batches {
                let out = step(cfg.tag, &mut state, &hyper, &ctx, b)?;
                grad_norm_sum += norm2(&out.grad).to_f64_lossy();
            }
        }
        let mean_norm = if batches.is_empty() { 0.0 } else { grad_norm_sum / batches.len() as f64 };
        rows.push(epoch_row(cfg, &state, &hyper, &ctx, val, epoch, batches.len(), mean_norm, started)?);
    }
    let report = MetricReport {
        optimizer: cfg.tag.to_string(),
        seed: cfg.seed,
        rows,
        floor_hits: state.floor_hits,
    };
    Ok((state, report))
}

#[allow(clippy::too_many_arguments)]
fn epoch_row<T: Scalar>(
    cfg: &TrainConfig<T>,
    state: &OptimizerState<T>,
    hyper: &StepHyper<T>,
    ctx: &StepContext<'_, T>,
    val: Option<&LabeledDataset<T>>,
    epoch: usize,
    steps: usize,
    grad_norm: f64,
    started: Instant,
) -> Result<EpochRow> {
    let model = ctx.model.with_params(&state.w)?;
    let objective = training_objective(cfg.tag, state, hyper, &model, ctx.data)?;
    if let Some(v) = objective {
        if !v.is_finite() {
            let range = |xs: &[T]| {
                let lo = xs.iter().map(|x| x.to_f64_lossy()).fold(f64::INFINITY, f64::min);
                let hi = xs.iter().map(|x| x.to_f64_lossy()).fold(f64::NEG_INFINITY, f64::max);
                format!("[{lo:.4e}, {hi:.4e}]")
            };
            let dump = format!(
                "{} objective is {v} after epoch {epoch} (step {}): |w| = {}, s in {}, u in {}, v = {}, pi = {}, floor hits = {}",
                cfg.tag,
                state.step_count,
                norm2(&state.w),
                range(&state.s),
                range(&state.u),
                state.v,
                state.pi,
                state.floor_hits
            );
            error!("{dump}");
            return Err(PaucError::NonFinite(dump));
        }
    }
    let train = EvalMetrics::compute(&model, ctx.data)?;
    let val = val.map(|v| EvalMetrics::compute(&model, v)).transpose()?;
    Ok(EpochRow {
        epoch,
        steps,
        objective: objective.map(|v| v.to_f64_lossy()),
        grad_norm,
        train,
        val,
        floor_hits: state.floor_hits,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

//! Labeled datasets: synthetic imbalanced generators, CSV ingestion,
//! stratified splits and the per-class mini-batch sampler.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PaucError, Result};
use crate::scalar::Scalar;

/// Feature matrix with ±1 labels. Example ids are row indices and are stable
/// for the lifetime of the dataset; per-positive optimizer state is keyed by
/// [`LabeledDataset::pos_slot`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    dim: usize,
    features: Vec<T>,
    labels: Vec<i8>,
    pos_ids: Vec<usize>,
    neg_ids: Vec<usize>,
    slots: Vec<Option<usize>>,
}

impl<T: Scalar> LabeledDataset<T> {
    /// `features` is row-major `labels.len() x dim`.
    pub fn new(dim: usize, features: Vec<T>, labels: Vec<i8>) -> Result<Self> {
        if dim == 0 {
            return Err(PaucError::invalid("dim", "must be positive"));
        }
        if features.len() != labels.len() * dim {
            return Err(PaucError::DimensionMismatch {
                expected: labels.len() * dim,
                got: features.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(PaucError::invalid("labels", format!("expected ±1, found {bad}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(PaucError::NonFinite("feature".into()));
        }
        let mut pos_ids = Vec::new();
        let mut neg_ids = Vec::new();
        let mut slots = vec![None; labels.len()];
        for (i, &l) in labels.iter().enumerate() {
            if l == 1 {
                slots[i] = Some(pos_ids.len());
                pos_ids.push(i);
            } else {
                neg_ids.push(i);
            }
        }
        Ok(Self { dim, features, labels, pos_ids, neg_ids, slots })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn pos_ids(&self) -> &[usize] {
        &self.pos_ids
    }

    pub fn neg_ids(&self) -> &[usize] {
        &self.neg_ids
    }

    pub fn n_pos(&self) -> usize {
        self.pos_ids.len()
    }

    pub fn n_neg(&self) -> usize {
        self.neg_ids.len()
    }

    /// Position of a positive example among `pos_ids`.
    pub fn pos_slot(&self, id: usize) -> Option<usize> {
        self.slots.get(id).copied().flatten()
    }

    pub fn require_both_classes(&self) -> Result<()> {
        if self.pos_ids.is_empty() {
            return Err(PaucError::DegenerateClass("no positive examples"));
        }
        if self.neg_ids.is_empty() {
            return Err(PaucError::DegenerateClass("no negative examples"));
        }
        Ok(())
    }

    /// New dataset made of the given rows, in the given order.
    pub fn subset(&self, ids: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(ids.len() * self.dim);
        let mut labels = Vec::with_capacity(ids.len());
        for &i in ids {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(self.dim, features, labels)
    }

    /// Zero mean, unit (population) variance per column. Constant columns are only centered.
    pub fn standardize(&mut self) {
        let n = self.len();
        if n == 0 {
            return;
        }
        let nf = T::from_count(n);
        for c in 0..self.dim {
            let mean = crate::scalar::csum((0..n).map(|i| self.features[i * self.dim + c])) / nf;
            let var = crate::scalar::csum((0..n).map(|i| {
                let d = self.features[i * self.dim + c] - mean;
                d * d
            })) / nf;
            let sd = var.sqrt();
            for i in 0..n {
                let v = &mut self.features[i * self.dim + c];
                *v -= mean;
                if sd > T::zero() {
                    *v /= sd;
                }
            }
        }
    }

    /// Largest pairwise distance between a positive and a negative example.
    pub fn max_pair_distance(&self) -> T {
        let mut best = T::zero();
        for &i in &self.pos_ids {
            for &j in &self.neg_ids {
                let d = self
                    .row(i)
                    .iter()
                    .zip(self.row(j))
                    .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
                best = best.max(d);
            }
        }
        best.sqrt()
    }
}

/// Synthetic data recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Preset {
    /// Two classes separated by a slab of width `margin` along the first axis.
    Separable { margin: f64 },
    /// Class means ±0.5 on the first axis with isotropic noise `sigma`.
    Overlap { sigma: f64 },
    /// Gaussian classes plus a `frac` share of negatives moved `shift` units
    /// past the positive mean on the first axis; they are told apart from
    /// positives only through the second axis.
    HardNegatives { frac: f64, shift: f64 },
}

impl Preset {
    pub fn hard_negatives_default() -> Self {
        Preset::HardNegatives { frac: 0.05, shift: 3.0 }
    }
}

/// Mean of the positive class on the first axis for the hard-negative preset.
const HARD_POS_MEAN: f64 = 2.0;
/// Offset of hard negatives on the second axis.
const HARD_NEG_OFFSET: f64 = -2.5;
/// Per-axis standard deviation of the hard-negative cluster.
const HARD_NEG_SPREAD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub pos_frac: f64,
    pub dim: usize,
    pub preset: Preset,
    pub seed: u64,
    pub standardize: bool,
}

impl SynthSpec {
    pub fn new(n: usize, pos_frac: f64, dim: usize, preset: Preset, seed: u64) -> Self {
        Self { n, pos_frac, dim, preset, seed, standardize: true }
    }

    pub fn counts(&self) -> Result<(usize, usize)> {
        if !(self.pos_frac > 0.0 && self.pos_frac < 1.0) {
            return Err(PaucError::InfeasibleCounts(format!("pos_frac {} not in (0,1)", self.pos_frac)));
        }
        let n_pos = (self.n as f64 * self.pos_frac).round() as usize;
        if n_pos == 0 || n_pos >= self.n {
            return Err(PaucError::InfeasibleCounts(format!(
                "n={} with pos_frac={} leaves an empty class",
                self.n, self.pos_frac
            )));
        }
        Ok((n_pos, self.n - n_pos))
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(PaucError::invalid("dim", "must be positive"));
        }
        match self.preset {
            Preset::Separable { margin } if !(margin >= 0.0) => {
                Err(PaucError::invalid("margin", "must be non-negative"))
            }
            Preset::Overlap { sigma } if !(sigma > 0.0) => Err(PaucError::invalid("sigma", "must be positive")),
            Preset::HardNegatives { frac, .. } if !(0.0..=1.0).contains(&frac) => {
                Err(PaucError::invalid("frac", "must lie in [0, 1]"))
            }
            Preset::HardNegatives { .. } if self.dim < 2 => {
                Err(PaucError::invalid("dim", "hard_negatives needs at least 2 features"))
            }
            _ => Ok(()),
        }
    }
}

/// Deterministic synthetic dataset. Positives come first, then negatives.
pub fn generate<T: Scalar>(spec: &SynthSpec) -> Result<LabeledDataset<T>> {
    spec.validate()?;
    let (n_pos, n_neg) = spec.counts()?;
    let d = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut rows: Vec<f64> = Vec::with_capacity(spec.n * d);
    let mut labels = Vec::with_capacity(spec.n);

    match spec.preset {
        Preset::Separable { margin } => {
            for k in 0..spec.n {
                let positive = k < n_pos;
                let sign = if positive { 1.0 } else { -1.0 };
                rows.push(sign * (margin / 2.0 + gauss().abs()));
                for _ in 1..d {
                    rows.push(gauss());
                }
                labels.push(if positive { 1 } else { -1 });
            }
        }
        Preset::Overlap { sigma } => {
            for k in 0..spec.n {
                let positive = k < n_pos;
                let mean = if positive { 0.5 } else { -0.5 };
                rows.push(mean + sigma * gauss());
                for _ in 1..d {
                    rows.push(sigma * gauss());
                }
                labels.push(if positive { 1 } else { -1 });
            }
        }
        Preset::HardNegatives { frac, shift } => {
            let n_hard = (n_neg as f64 * frac).round() as usize;
            for _ in 0..n_pos {
                rows.push(HARD_POS_MEAN + gauss());
                for _ in 1..d {
                    rows.push(gauss());
                }
                labels.push(1);
            }
            for k in 0..n_neg {
                if k < n_hard {
                    rows.push(HARD_POS_MEAN + shift + HARD_NEG_SPREAD * gauss());
                    rows.push(HARD_NEG_OFFSET + HARD_NEG_SPREAD * gauss());
                    for _ in 2..d {
                        rows.push(gauss());
                    }
                } else {
                    for _ in 0..d {
                        rows.push(gauss());
                    }
                }
                labels.push(-1);
            }
        }
    }
    let mut data = LabeledDataset::new(d, rows.into_iter().map(T::lit).collect(), labels)?;
    if spec.standardize {
        data.standardize();
    }
    Ok(data)
}

/// Which CSV column holds the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl LabelColumn {
    /// Numeric strings select by index, anything else by header name.
    pub fn parse(s: &str) -> Self {
        match s.trim().parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.trim().to_string()),
        }
    }
}

fn labels_match(cell: &str, positive: &str) -> bool {
    let (a, b) = (cell.trim(), positive.trim());
    if a == b {
        return true;
    }
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Loads a comma-separated file. The first row is a header if any of its
/// cells fails to parse as a number. Rows whose label equals
/// `positive_label` become positives, all others negatives.
pub fn load_csv<T: Scalar>(
    path: impl AsRef<Path>,
    label_column: &LabelColumn,
    positive_label: &str,
    standardize: bool,
) -> Result<LabeledDataset<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(csv_err)?;
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        records.push((line, rec));
    }
    if records.is_empty() {
        return Err(PaucError::EmptyDataset);
    }
    let has_header = match label_column {
        LabelColumn::Name(_) => true,
        LabelColumn::Index(i) => records[0]
            .1
            .iter()
            .enumerate()
            .any(|(k, c)| k != *i && c.parse::<f64>().is_err()),
    };
    let (header, body) = if has_header {
        (Some(records[0].1.clone()), &records[1..])
    } else {
        (None, &records[..])
    };
    let label_idx = match label_column {
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| PaucError::MissingColumn(name.clone()))?,
    };
    if body.is_empty() {
        return Err(PaucError::EmptyDataset);
    }
    let width = body[0].1.len();
    if label_idx >= width {
        return Err(PaucError::MissingColumn(format!("index {label_idx}")));
    }
    if width < 2 {
        return Err(PaucError::Parse { line: body[0].0, message: "no feature columns".into() });
    }
    let dim = width - 1;
    let mut features = Vec::with_capacity(body.len() * dim);
    let mut labels = Vec::with_capacity(body.len());
    for (line, rec) in body {
        if rec.len() != width {
            return Err(PaucError::Parse {
                line: *line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (k, cell) in rec.iter().enumerate() {
            if k == label_idx {
                labels.push(if labels_match(cell, positive_label) { 1 } else { -1 });
            } else {
                let v: f64 = cell.parse().map_err(|_| PaucError::Parse {
                    line: *line,
                    message: format!("non-numeric cell `{cell}` in column {k}"),
                })?;
                features.push(T::lit(v));
            }
        }
    }
    let mut data = LabeledDataset::new(dim, features, labels)?;
    if standardize {
        data.standardize();
    }
    Ok(data)
}

fn csv_err(e: csv::Error) -> PaucError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => PaucError::Io(io),
        other => PaucError::Parse { line, message: format!("{other:?}") },
    }
}

/// Writes `f0..f{d-1},label` with labels as `1` / `-1`.
pub fn write_csv<T: Scalar>(data: &LabeledDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_err)?;
    let mut header: Vec<String> = (0..data.dim()).map(|k| format!("f{k}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.len() {
        let mut row: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        row.push(data.labels()[i].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Stratified train/validation/test split. Each class is shuffled on its own
/// stream; `floor(n_c * frac)` examples of class `c` go to train and to
/// validation, the rest to test.
pub fn split<T: Scalar>(
    data: &LabeledDataset<T>,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>, LabeledDataset<T>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) || !(val_frac > 0.0 && val_frac < 1.0) {
        return Err(PaucError::invalid("split", "fractions must lie in (0, 1)"));
    }
    if train_frac + val_frac > 1.0 + 1e-12 {
        return Err(PaucError::invalid("split", "fractions sum above 1"));
    }
    let take = |n: usize, f: f64| ((n as f64) * f + 1e-9).floor() as usize;
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (stream, ids) in [(11u64, data.pos_ids()), (12, data.neg_ids())] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut shuffled = ids.to_vec();
        shuffled.shuffle(&mut rng);
        let n_train = take(ids.len(), train_frac);
        let n_val = take(ids.len(), val_frac).min(ids.len() - n_train);
        parts[0].extend_from_slice(&shuffled[..n_train]);
        parts[1].extend_from_slice(&shuffled[n_train..n_train + n_val]);
        parts[2].extend_from_slice(&shuffled[n_train + n_val..]);
    }
    let names = ["train", "validation", "test"];
    for (part, name) in parts.iter_mut().zip(names) {
        part.sort_unstable();
        let pos = part.iter().filter(|&&i| data.labels()[i] == 1).count();
        let empty_class = pos == 0 || pos == part.len();
        // an entirely empty test part is allowed when the fractions sum to one
        if empty_class && !(name == "test" && part.is_empty()) {
            return Err(PaucError::DegenerateClass(match name {
                "train" => "train split lacks a class",
                "validation" => "validation split lacks a class",
                _ => "test split lacks a class",
            }));
        }
    }
    Ok((data.subset(&parts[0])?, data.subset(&parts[1])?, data.subset(&parts[2])?))
}

/// Global example ids sampled for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

/// Per-class mini-batch sampler without replacement.
///
/// Positives are visited once per epoch in shuffled order (the final batch
/// of an epoch may be short). Negatives come from an independent stream that
/// reshuffles whenever fewer than `batch_neg` ids remain.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    pos_ids: Vec<usize>,
    neg_ids: Vec<usize>,
    batch_pos: usize,
    batch_neg: usize,
    pos_rng: ChaCha8Rng,
    neg_rng: ChaCha8Rng,
    neg_queue: Vec<usize>,
    neg_cursor: usize,
}

impl BatchSampler {
    pub fn new<T: Scalar>(data: &LabeledDataset<T>, batch_pos: usize, batch_neg: usize, seed: u64) -> Result<Self> {
        data.require_both_classes()?;
        if batch_pos == 0 || batch_pos > data.n_pos() {
            return Err(PaucError::invalid("batch_pos", format!("must lie in 1..={}", data.n_pos())));
        }
        if batch_neg == 0 || batch_neg > data.n_neg() {
            return Err(PaucError::invalid("batch_neg", format!("must lie in 1..={}", data.n_neg())));
        }
        let mut pos_rng = ChaCha8Rng::seed_from_u64(seed);
        pos_rng.set_stream(1);
        let mut neg_rng = ChaCha8Rng::seed_from_u64(seed);
        neg_rng.set_stream(2);
        Ok(Self {
            pos_ids: data.pos_ids().to_vec(),
            neg_ids: data.neg_ids().to_vec(),
            batch_pos,
            batch_neg,
            pos_rng,
            neg_rng,
            neg_queue: Vec::new(),
            neg_cursor: 0,
        })
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.pos_ids.len().div_ceil(self.batch_pos)
    }

    fn next_neg(&mut self) -> Vec<usize> {
        if self.neg_queue.len() - self.neg_cursor < self.batch_neg {
            self.neg_queue = self.neg_ids.clone();
            self.neg_queue.shuffle(&mut self.neg_rng);
            self.neg_cursor = 0;
        }
        let out = self.neg_queue[self.neg_cursor..self.neg_cursor + self.batch_neg].to_vec();
        self.neg_cursor += self.batch_neg;
        out
    }

    /// All batches of the next epoch.
    pub fn next_epoch(&mut self) -> Vec<Batch> {
        let mut order = self.pos_ids.clone();
        order.shuffle(&mut self.pos_rng);
        let chunks: Vec<Vec<usize>> = order.chunks(self.batch_pos).map(|c| c.to_vec()).collect();
        chunks
            .into_iter()
            .map(|pos| Batch { pos, neg: self.next_neg() })
            .collect()
    }
}

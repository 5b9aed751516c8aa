//! Flat `key = value` run configuration.
//!
//! A config file holds one assignment per line; `#` starts a comment. Keys
//! given with `--set` (and `--seed`) replace the file's values. Everything
//! is parsed and range-checked here, before any data is generated.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dropauc::data::{LabelColumn, Preset, SynthSpec};
use dropauc::losses::{LossKind, PairwiseLoss};
use dropauc::model::Arch;
use dropauc::optim::{OptimizerTag, SotaSchedule, StepHyper, TrainConfig, UpdateStyle};

use crate::CliError;

/// Every key the harness understands, with its default. `data = synthetic`
/// builds the dataset from the `preset`/`n`/... keys; any other value is a
/// CSV path.
pub const KEYS: &[(&str, &str)] = &[
    ("optimizer", "sopa"),
    ("arch", "linear_sigmoid"),
    ("epochs", "20"),
    ("seed", "0"),
    ("data", "synthetic"),
    ("preset", "overlap"),
    ("n", "1000"),
    ("pos_frac", "0.1"),
    ("dim", "10"),
    ("sigma", "1"),
    ("margin", "1"),
    ("hard_frac", "0.05"),
    ("shift", "3"),
    ("standardize", "true"),
    ("data_seed", ""),
    ("label_column", "label"),
    ("positive_label", "1"),
    ("train_frac", "0.8"),
    ("val_frac", "0.2"),
    ("loss", "squared_hinge"),
    ("loss_c", "1"),
    ("eta1", "0.01"),
    ("eta2", "0.1"),
    ("eta3", "0.01"),
    ("eta4", "0.01"),
    ("gamma0", "0.9"),
    ("gamma1", "0.9"),
    ("gamma2", "0.1"),
    ("beta_fpr", "0.3"),
    ("alpha_tpr", "0.5"),
    ("lambda", "1"),
    ("lambda_prime", "1"),
    ("prox_gamma", "0.1"),
    ("batch_pos", "32"),
    ("batch_neg", "32"),
    ("update_style", "adam"),
    ("weight_decay", "0"),
    ("adam_beta2", "0.999"),
    ("adam_eps", "1e-8"),
    ("mb_neg_frac", "0.3"),
    ("mb_pos_frac", "0.5"),
    ("decay_every", "20"),
    ("decay_factor", "0.1"),
    ("sota_stages", ""),
    ("sota_base", "1"),
    ("sota_scale_by_n_pos", "false"),
    ("sota_rho", ""),
    ("trace_timing", "false"),
    ("batch_log", "false"),
    ("checkpoint", ""),
    ("re_lambdas", "0.05,0.1,0.3,1,3,10"),
    ("re_betas", "0.3,0.5"),
    ("re_draws", "100"),
    ("re_scale", "1"),
    ("target", "auto"),
    ("workers", "0"),
];

/// Prefix marking a sweep axis: `sweep.lambda = 0.1,1,10`.
pub const SWEEP_PREFIX: &str = "sweep.";

/// Raw assignments in key order, defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    /// Sweep axes in the order they were declared.
    pub axes: Vec<(String, Vec<String>)>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl RawConfig {
    pub fn defaults() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            axes: Vec::new(),
        }
    }

    /// Defaults, then the file (if any), then the overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut cfg = Self::defaults();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            let mut seen = Vec::new();
            for (no, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = split_assignment(line)
                    .ok_or_else(|| CliError::Config(format!("{}:{}: expected key = value", path.display(), no + 1)))?;
                if seen.contains(&k) {
                    return Err(CliError::Config(format!("{}:{}: duplicate key `{k}`", path.display(), no + 1)));
                }
                seen.push(k.clone());
                cfg.set(&k, &v)?;
            }
        }
        for o in overrides {
            let (k, v) = split_assignment(o).ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{o}`")))?;
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if let Some(axis) = key.strip_prefix(SWEEP_PREFIX) {
            if !known(axis) || matches!(axis, "data" | "checkpoint" | "workers" | "target") {
                return Err(CliError::Config(format!("`{axis}` cannot be swept")));
            }
            let points: Vec<String> = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            if points.is_empty() {
                return Err(CliError::Config(format!("sweep axis `{axis}` has no values")));
            }
            match self.axes.iter_mut().find(|(k, _)| k == axis) {
                Some(slot) => slot.1 = points,
                None => self.axes.push((axis.to_string(), points)),
            }
            return Ok(());
        }
        if !known(key) {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// The configuration of one grid point: the axes fixed to `point`.
    pub fn at_point(&self, point: &[(String, String)]) -> Result<Self, CliError> {
        let mut cfg = Self { values: self.values.clone(), axes: Vec::new() };
        for (k, v) in point {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Cartesian product of the sweep axes, first axis slowest.
    pub fn grid(&self) -> Vec<Vec<(String, String)>> {
        let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (key, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((key.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.get(key);
        raw.parse().map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{raw}`")))
    }

    fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        if self.get(key).is_empty() {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::Config(format!("`{key}`: expected a boolean, got `{other}`"))),
        }
    }

    fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{s}`"))))
            .collect()
    }
}

fn split_assignment(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SynthSpec),
    Csv { path: PathBuf, label: LabelColumn, positive: String, standardize: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPlan {
    pub source: DataSource,
    pub train_frac: f64,
    /// 0 trains on the whole dataset without a validation split.
    pub val_frac: f64,
    pub split_seed: u64,
}

/// Which final metric ranks sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Auc,
    Opauc(usize),
    Tpauc(usize),
}

impl Target {
    pub const NAMES: [&'static str; 5] = ["auc", "opauc_0.3", "opauc_0.5", "tpauc_0.6_0.4", "tpauc_0.5_0.5"];

    fn parse(s: &str, tag: OptimizerTag) -> Result<Self, CliError> {
        Ok(match s {
            "auto" => match tag {
                OptimizerTag::Ce | OptimizerTag::Auc => Target::Auc,
                OptimizerTag::Sopa | OptimizerTag::SopaS | OptimizerTag::MbOpauc => Target::Opauc(0),
                OptimizerTag::SotaS | OptimizerTag::Sota | OptimizerTag::MbTpauc => Target::Tpauc(1),
            },
            "auc" => Target::Auc,
            "opauc_0.3" => Target::Opauc(0),
            "opauc_0.5" => Target::Opauc(1),
            "tpauc_0.6_0.4" => Target::Tpauc(0),
            "tpauc_0.5_0.5" => Target::Tpauc(1),
            other => {
                return Err(CliError::Config(format!("`target`: expected auto or one of {:?}, got `{other}`", Self::NAMES)))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Target::Auc => Self::NAMES[0],
            Target::Opauc(i) => Self::NAMES[1 + i],
            Target::Tpauc(i) => Self::NAMES[3 + i],
        }
    }
}

/// A fully parsed and range-checked run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub data: DataPlan,
    pub arch: Arch,
    pub train: TrainConfig<f64>,
    pub trace_timing: bool,
    pub batch_log: bool,
    pub checkpoint: Option<PathBuf>,
    pub re_lambdas: Vec<f64>,
    pub re_betas: Vec<f64>,
    pub re_draws: usize,
    pub re_scale: f64,
    pub target: Target,
    pub workers: usize,
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self, CliError> {
        let seed: u64 = raw.parse("seed")?;
        let data_seed = raw.optional::<u64>("data_seed")?.unwrap_or(seed);
        let standardize = raw.flag("standardize")?;
        let source = match raw.get("data") {
            "synthetic" => {
                let preset = match raw.get("preset") {
                    "overlap" => Preset::Overlap { sigma: raw.parse("sigma")? },
                    "separable" => Preset::Separable { margin: raw.parse("margin")? },
                    "hard_negatives" => Preset::HardNegatives { frac: raw.parse("hard_frac")?, shift: raw.parse("shift")? },
                    other => {
                        return Err(CliError::Config(format!(
                            "`preset`: expected overlap, separable or hard_negatives, got `{other}`"
                        )))
                    }
                };
                let mut spec = SynthSpec::new(raw.parse("n")?, raw.parse("pos_frac")?, raw.parse("dim")?, preset, data_seed);
                spec.standardize = standardize;
                spec.counts().map_err(CliError::from)?;
                DataSource::Synthetic(spec)
            }
            path => {
                let path = PathBuf::from(path);
                if !path.is_file() {
                    return Err(CliError::Config(format!("data file {} does not exist", path.display())));
                }
                DataSource::Csv {
                    path,
                    label: LabelColumn::parse(raw.get("label_column")),
                    positive: raw.get("positive_label").to_string(),
                    standardize,
                }
            }
        };
        let train_frac: f64 = raw.parse("train_frac")?;
        let val_frac: f64 = raw.parse("val_frac")?;
        if val_frac != 0.0 && !(val_frac > 0.0 && val_frac < 1.0 && train_frac > 0.0 && train_frac + val_frac <= 1.0 + 1e-12) {
            return Err(CliError::Config(
                "`train_frac`/`val_frac`: need positive fractions with train_frac + val_frac <= 1, or val_frac = 0".into(),
            ));
        }
        let data = DataPlan { source, train_frac, val_frac, split_seed: data_seed };

        let arch = Arch::parse(raw.get("arch"))?;
        let tag: OptimizerTag = raw
            .get("optimizer")
            .parse()
            .map_err(|_| CliError::Config(format!("`optimizer`: unknown tag `{}`", raw.get("optimizer"))))?;
        let update_style: UpdateStyle = raw
            .get("update_style")
            .parse()
            .map_err(|_| CliError::Config(format!("`update_style`: unknown style `{}`", raw.get("update_style"))))?;
        let hyper = StepHyper {
            eta1: raw.parse("eta1")?,
            eta2: raw.parse("eta2")?,
            eta3: raw.parse("eta3")?,
            eta4: raw.parse("eta4")?,
            gamma0: raw.parse("gamma0")?,
            gamma1: raw.parse("gamma1")?,
            gamma2: raw.parse("gamma2")?,
            beta_fpr: raw.parse("beta_fpr")?,
            alpha_tpr: raw.parse("alpha_tpr")?,
            lambda: raw.parse("lambda")?,
            lambda_prime: raw.parse("lambda_prime")?,
            prox_gamma: raw.parse("prox_gamma")?,
            batch_pos: raw.parse("batch_pos")?,
            batch_neg: raw.parse("batch_neg")?,
            update_style,
            weight_decay: raw.parse("weight_decay")?,
            adam_beta2: raw.parse("adam_beta2")?,
            adam_eps: raw.parse("adam_eps")?,
            mb_neg_frac: raw.parse("mb_neg_frac")?,
            mb_pos_frac: raw.parse("mb_pos_frac")?,
            loss: PairwiseLoss::new(LossKind::parse(raw.get("loss"))?, raw.parse("loss_c")?)?,
        };
        hyper.validate()?;

        let epochs: usize = raw.parse("epochs")?;
        let mut train = TrainConfig::new(tag, hyper, epochs, seed);
        train.decay_every = raw.parse("decay_every")?;
        train.decay_factor = raw.parse("decay_factor")?;
        if !(train.decay_factor > 0.0 && train.decay_factor <= 1.0) {
            return Err(CliError::Config("`decay_factor`: must lie in (0, 1]".into()));
        }
        train.sota_schedule = SotaSchedule {
            stages: raw.optional("sota_stages")?.unwrap_or(epochs.max(1)),
            base: raw.parse("sota_base")?,
            scale_by_n_pos: raw.flag("sota_scale_by_n_pos")?,
        };
        train.sota_rho = raw.optional("sota_rho")?;
        if tag == OptimizerTag::Sota && !(train.sota_schedule.base > 0.0) {
            return Err(CliError::Config("`sota_base`: must be positive".into()));
        }

        let checkpoint = raw.optional::<PathBuf>("checkpoint")?;
        if let Some(path) = checkpoint.as_ref().filter(|p| !p.is_file()) {
            return Err(CliError::Config(format!("checkpoint {} does not exist", path.display())));
        }
        let re_draws: usize = raw.parse("re_draws")?;
        let re_scale: f64 = raw.parse("re_scale")?;
        if re_draws == 0 || !(re_scale > 0.0) {
            return Err(CliError::Config("`re_draws` and `re_scale` must be positive".into()));
        }
        Ok(Self {
            data,
            arch,
            trace_timing: raw.flag("trace_timing")?,
            batch_log: raw.flag("batch_log")?,
            checkpoint,
            re_lambdas: raw.list("re_lambdas")?,
            re_betas: raw.list("re_betas")?,
            re_draws,
            re_scale,
            target: Target::parse(raw.get("target"), tag)?,
            workers: raw.parse("workers")?,
            train,
            raw,
        })
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let cfg = RunConfig::from_raw(RawConfig::defaults()).unwrap();
        assert_eq!(cfg.train.tag, OptimizerTag::Sopa);
        assert_eq!(cfg.train.epochs, 20);
        assert_eq!(cfg.re_lambdas.len(), 6);
    }

    #[test]
    fn override_beats_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# comment\neta1 = 0.5\nepochs=3 # trailing\n").unwrap();
        let raw = RawConfig::load(Some(&path), &["eta1=0.25".into()]).unwrap();
        let cfg = RunConfig::from_raw(raw).unwrap();
        assert_eq!(cfg.train.hyper.eta1, 0.25);
        assert_eq!(cfg.train.epochs, 3);
    }

    #[test]
    fn bad_keys_and_values_are_rejected() {
        assert!(RawConfig::load(None, &["nope=1".into()]).is_err());
        assert!(RawConfig::load(None, &["eta1".into()]).is_err());
        let raw = RawConfig::load(None, &["gamma0=1.5".into()]).unwrap();
        assert!(RunConfig::from_raw(raw).is_err());
        let raw = RawConfig::load(None, &["data=/does/not/exist.csv".into()]).unwrap();
        assert!(RunConfig::from_raw(raw).is_err());
    }

    #[test]
    fn duplicate_file_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "eta1 = 0.5\neta1 = 0.1\n").unwrap();
        assert!(RawConfig::load(Some(&path), &[]).is_err());
    }

    #[test]
    fn grid_is_cartesian_first_axis_slowest() {
        let raw = RawConfig::load(None, &["sweep.lambda=0.1,1".into(), "sweep.eta1=1e-3,1e-2,1e-1".into()]).unwrap();
        let grid = raw.grid();
        assert_eq!(grid.len(), 6);
        assert_eq!(grid[0], vec![("lambda".into(), "0.1".into()), ("eta1".into(), "1e-3".into())]);
        assert_eq!(grid[3][0].1, "1");
        assert_eq!(RawConfig::defaults().grid(), vec![Vec::<(String, String)>::new()]);
    }
}

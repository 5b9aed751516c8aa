use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use dropauc::checks::{run_all, CheckReport};
use dropauc::data::{generate, load_csv, split};
use dropauc::experiments::{re_curve, write_re_csv, ReConfig, ReRow};
use dropauc::model::ScoreModel;
use dropauc::optim::{run_training, EvalMetrics, MetricReport};
use dropauc::DatasetF64;

use crate::config::{DataSource, RawConfig, RunConfig, Target};
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
/// Items run by `selftest`; the stagewise solver check lives in the
/// acceptance tests only.
pub const SELFTEST_IDS: [u8; 8] = [1, 2, 3, 4, 5, 6, 7, 8];

pub struct Splits {
    pub train: DatasetF64,
    pub val: Option<DatasetF64>,
    pub test: Option<DatasetF64>,
}

pub fn load_data(cfg: &RunConfig) -> Result<Splits, CliError> {
    let full: DatasetF64 = match &cfg.data.source {
        DataSource::Synthetic(spec) => generate(spec)?,
        DataSource::Csv { path, label, positive, standardize } => load_csv(path, label, positive, *standardize)?,
    };
    full.require_both_classes()?;
    if cfg.data.val_frac == 0.0 {
        return Ok(Splits { train: full, val: None, test: None });
    }
    let (train, val, test) = split(&full, cfg.data.train_frac, cfg.data.val_frac, cfg.data.split_seed)?;
    let test = (!test.is_empty()).then_some(test);
    Ok(Splits { train, val: Some(val), test })
}

/// Final metrics keyed by reporting point, e.g. `opauc_0.3`.
pub fn named(m: &EvalMetrics) -> BTreeMap<&'static str, Option<f64>> {
    let names = Target::NAMES;
    BTreeMap::from([
        (names[0], Some(m.auc)),
        (names[1], m.opauc[0]),
        (names[2], m.opauc[1]),
        (names[3], m.tpauc[0]),
        (names[4], m.tpauc[1]),
    ])
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitSizes {
    pub train: [usize; 2],
    pub val: Option<[usize; 2]>,
    pub test: Option<[usize; 2]>,
}

impl SplitSizes {
    fn of(s: &Splits) -> Self {
        let counts = |d: &DatasetF64| [d.n_pos(), d.n_neg()];
        Self { train: counts(&s.train), val: s.val.as_ref().map(counts), test: s.test.as_ref().map(counts) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub schema_version: u32,
    pub command: &'static str,
    pub optimizer: String,
    pub arch: String,
    pub seed: u64,
    pub epochs: usize,
    /// `[positives, negatives]` per split.
    pub sizes: SplitSizes,
    pub objective: Option<f64>,
    /// Metrics of the initial model on the training split.
    pub initial: BTreeMap<&'static str, Option<f64>>,
    pub train: BTreeMap<&'static str, Option<f64>>,
    pub val: Option<BTreeMap<&'static str, Option<f64>>>,
    pub test: Option<BTreeMap<&'static str, Option<f64>>>,
    pub floor_hits: u64,
    pub config: BTreeMap<String, String>,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Io(e.to_string()))
}

/// One training run writing `trace.csv`, `summary.json` and `model.json`
/// (plus `batches.tsv` when requested) into `out`.
pub fn train_into(cfg: &RunConfig, out: &Path) -> Result<(TrainSummary, MetricReport), CliError> {
    let data = load_data(cfg)?;
    let model = ScoreModel::init(cfg.arch, data.train.dim(), cfg.seed())?;
    create_dir(out)?;
    let mut log_file = if cfg.batch_log { Some(create(&out.join("batches.tsv"))?) } else { None };
    let log: Option<&mut dyn Write> = log_file.as_mut().map(|f| f as &mut dyn Write);
    info!("training {} for {} epochs into {}", cfg.train.tag, cfg.train.epochs, out.display());
    let (state, report) = run_training(&cfg.train, &data.train, data.val.as_ref(), &model, log)?;
    if let Some(mut f) = log_file {
        f.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }

    report.write_trace_csv(create(&out.join("trace.csv"))?, cfg.trace_timing)?;
    let trained = model.with_params(&state.w)?;
    trained.save_json(out.join("model.json"))?;
    let last = report.last();
    let summary = TrainSummary {
        schema_version: SCHEMA_VERSION,
        command: "train",
        optimizer: cfg.train.tag.to_string(),
        arch: cfg.arch.tag(),
        seed: cfg.seed(),
        epochs: cfg.train.epochs,
        sizes: SplitSizes::of(&data),
        objective: last.objective,
        initial: named(&report.initial().train),
        train: named(&last.train),
        val: last.val.as_ref().map(named),
        test: data.test.as_ref().map(|t| EvalMetrics::compute(&trained, t).map(|m| named(&m))).transpose()?,
        floor_hits: report.floor_hits,
        config: cfg.raw.values().clone(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok((summary, report))
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (summary, _) = train_into(cfg, out)?;
    let show = |m: &BTreeMap<&str, Option<f64>>| {
        m.iter()
            .map(|(k, v)| format!("{k}={}", v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("train: {}", show(&summary.train));
    if let Some(v) = &summary.val {
        println!("val:   {}", show(v));
    }
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    schema_version: u32,
    command: &'static str,
    checkpoint: String,
    arch: String,
    sizes: SplitSizes,
    train: BTreeMap<&'static str, Option<f64>>,
    val: Option<BTreeMap<&'static str, Option<f64>>>,
    test: Option<BTreeMap<&'static str, Option<f64>>>,
    config: BTreeMap<String, String>,
}

pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Config("eval needs `checkpoint = PATH` to a saved model".into()))?;
    let model = ScoreModel::<f64>::load_json(path)?;
    let data = load_data(cfg)?;
    if model.input_dim() != data.train.dim() {
        return Err(CliError::Config(format!(
            "checkpoint expects {} features, the data has {}",
            model.input_dim(),
            data.train.dim()
        )));
    }
    let eval = |d: &DatasetF64| EvalMetrics::compute(&model, d).map(|m| named(&m));
    let summary = EvalSummary {
        schema_version: SCHEMA_VERSION,
        command: "eval",
        checkpoint: path.display().to_string(),
        arch: model.arch().tag(),
        sizes: SplitSizes::of(&data),
        train: eval(&data.train)?,
        val: data.val.as_ref().map(eval).transpose()?,
        test: data.test.as_ref().map(eval).transpose()?,
        config: cfg.raw.values().clone(),
    };
    create_dir(out)?;
    write_json(&out.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary.train).expect("plain map"));
    Ok(())
}

#[derive(Debug, Serialize)]
struct ReSummary<'a> {
    schema_version: u32,
    command: &'static str,
    draws: usize,
    /// Lowest mean relative error per β: `(beta, lambda, mean_re)`.
    best: Vec<(f64, f64, f64)>,
    rows: &'a [ReRow],
    config: BTreeMap<String, String>,
}

pub fn cmd_re_curve(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let re = ReConfig {
        lambdas: cfg.re_lambdas.clone(),
        betas: cfg.re_betas.clone(),
        draws: cfg.re_draws,
        draw_scale: cfg.re_scale,
        arch: cfg.arch,
        loss: cfg.train.hyper.loss,
        seed: cfg.seed(),
    };
    re.validate()?;
    let data = load_data(&RunConfig { data: crate::config::DataPlan { val_frac: 0.0, ..cfg.data.clone() }, ..cfg.clone() })?;
    let rows = re_curve(&data.train, &re)?;
    let skipped: usize = rows.iter().map(|r| r.skipped).max().unwrap_or(0);
    if skipped > 0 {
        warn!("{skipped} draws had a zero CVaR objective and were skipped");
    }
    create_dir(out)?;
    let mut w = create(&out.join("re_curve.csv"))?;
    write_re_csv(&rows, &mut w)?;
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    let best: Vec<(f64, f64, f64)> = re
        .betas
        .iter()
        .filter_map(|&b| {
            rows.iter()
                .filter(|r| r.beta == b && r.mean_re.is_finite())
                .min_by(|x, y| x.mean_re.total_cmp(&y.mean_re))
                .map(|r| (b, r.lambda, r.mean_re))
        })
        .collect();
    for (b, l, re) in &best {
        println!("beta {b}: min mean RE {re:.4} at lambda {l}");
    }
    let summary = ReSummary {
        schema_version: SCHEMA_VERSION,
        command: "re-curve",
        draws: re.draws,
        best,
        rows: &rows,
        config: cfg.raw.values().clone(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub rank: usize,
    pub run: usize,
    pub point: Vec<(String, String)>,
    pub target: &'static str,
    /// Validation value of the target when a validation split exists,
    /// otherwise the training value.
    pub value: Option<f64>,
    pub status: String,
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    schema_version: u32,
    command: &'static str,
    runs: usize,
    failed: usize,
    ranking: &'a [SweepRow],
    config: BTreeMap<String, String>,
}

fn run_dir(out: &Path, run: usize) -> PathBuf {
    out.join("runs").join(format!("run_{run:03}"))
}

/// Every grid point is validated before any run starts; runs then execute
/// in a worker pool, each writing only to its own directory.
pub fn cmd_sweep(raw: &RawConfig, out: &Path) -> Result<(), CliError> {
    let grid = raw.grid();
    let configs: Vec<RunConfig> = grid
        .iter()
        .map(|p| raw.at_point(p).and_then(RunConfig::from_raw))
        .collect::<Result<_, _>>()?;
    let workers = configs.first().map(|c| c.workers).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    create_dir(out)?;
    let results: Vec<Result<TrainSummary, CliError>> =
        pool.install(|| configs.par_iter().enumerate().map(|(i, c)| train_into(c, &run_dir(out, i)).map(|r| r.0)).collect());

    let mut rows: Vec<SweepRow> = results
        .iter()
        .zip(&configs)
        .enumerate()
        .map(|(i, (res, c))| {
            let (value, status) = match res {
                Ok(s) => {
                    let m = s.val.as_ref().unwrap_or(&s.train);
                    (m.get(c.target.name()).copied().flatten(), "ok".to_string())
                }
                Err(e) => (None, format!("failed: {e}")),
            };
            SweepRow { rank: 0, run: i, point: grid[i].clone(), target: c.target.name(), value, status }
        })
        .collect();
    // best first; missing values last; ties keep grid order
    rows.sort_by(|a, b| match (a.value, b.value) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.run.cmp(&b.run)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.run.cmp(&b.run),
    });
    for (k, r) in rows.iter_mut().enumerate() {
        r.rank = k + 1;
    }

    let mut w = csv::Writer::from_writer(create(&out.join("sweep.csv"))?);
    let mut header = vec!["rank".to_string(), "run".into()];
    header.extend(raw.axes.iter().map(|(k, _)| k.clone()));
    header.extend(["target".into(), "value".into(), "status".into()]);
    w.write_record(&header).map_err(|e| CliError::Io(e.to_string()))?;
    for r in &rows {
        let mut rec = vec![r.rank.to_string(), r.run.to_string()];
        rec.extend(r.point.iter().map(|(_, v)| v.clone()));
        rec.extend([r.target.to_string(), r.value.map(|v| format!("{v:.12e}")).unwrap_or_default(), r.status.clone()]);
        w.write_record(&rec).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;

    let failed = rows.iter().filter(|r| r.status != "ok").count();
    write_json(
        &out.join("sweep.json"),
        &SweepSummary {
            schema_version: SCHEMA_VERSION,
            command: "sweep",
            runs: rows.len(),
            failed,
            ranking: &rows,
            config: raw.values().clone(),
        },
    )?;
    for r in rows.iter().take(5) {
        let point: Vec<String> = r.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "#{} run {} [{}] {}={}",
            r.rank,
            r.run,
            point.join(" "),
            r.target,
            r.value.map(|v| format!("{v:.4}")).unwrap_or_else(|| r.status.clone())
        );
    }
    // a numerical failure in any run is reported like a failed train
    match results.into_iter().find_map(Result::err) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn cmd_selftest(seed: u64) -> Result<(), CliError> {
    let reports: Vec<CheckReport> = run_all(seed, &SELFTEST_IDS);
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<u8> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if failed.is_empty() {
        println!("all {} items passed", reports.len());
        Ok(())
    } else {
        Err(CliError::Check(format!("items {failed:?} failed")))
    }
}

//! The numeric core runs in single precision as well.

use dropauc::data::{generate, Preset, SynthSpec};
use dropauc::losses::{dro_kl, opauc_kl_objective_and_grad, PairwiseLoss};
use dropauc::metrics::{roc_auc, ScoreSet};
use dropauc::model::{Arch, ScoreModel};
use dropauc::optim::{run_training, OptimizerTag, StepHyper, TrainConfig};
use dropauc::{DatasetF32, DatasetF64, ScoreModelF32};

fn spec() -> SynthSpec {
    SynthSpec::new(300, 0.2, 4, Preset::Overlap { sigma: 1.0 }, 3)
}

#[test]
fn f32_metrics_and_kl_agree_with_f64() {
    let auc32 = roc_auc(&ScoreSet::new(vec![0.9f32, 0.4, 0.7], vec![0.1f32, 0.5]).unwrap()).unwrap();
    let auc64 = roc_auc(&ScoreSet::new(vec![0.9f64, 0.4, 0.7], vec![0.1f64, 0.5]).unwrap()).unwrap();
    assert_eq!(auc32, auc64);
    // max subtraction keeps small lambda finite in single precision
    let v = dro_kl(&[4.0f32, 0.5, 3.9], 0.01).unwrap();
    let w = dro_kl(&[4.0f64, 0.5, 3.9], 0.01).unwrap();
    assert!(v.is_finite() && (v as f64 - w).abs() < 1e-5, "{v} vs {w}");
}

#[test]
fn f32_objective_tracks_f64() {
    let d32: DatasetF32 = generate(&spec()).unwrap();
    let d64: DatasetF64 = generate(&spec()).unwrap();
    let m64 = ScoreModel::<f64>::init(Arch::mlp(3), 4, 1).unwrap();
    let m32: ScoreModelF32 =
        ScoreModel::new(Arch::mlp(3), 4, m64.params().iter().map(|&w| w as f32).collect()).unwrap();
    let (v32, g32) = opauc_kl_objective_and_grad(&m32, &d32, &PairwiseLoss::squared_hinge(1.0f32), 0.5).unwrap();
    let (v64, g64) = opauc_kl_objective_and_grad(&m64, &d64, &PairwiseLoss::squared_hinge(1.0f64), 0.5).unwrap();
    assert!((v32 as f64 - v64).abs() < 1e-4 * v64.abs().max(1.0));
    for (a, b) in g32.iter().zip(&g64) {
        assert!((*a as f64 - b).abs() < 1e-3 * b.abs().max(1e-2), "{a} vs {b}");
    }
}

#[test]
fn f32_training_runs_and_learns() {
    let data: DatasetF32 = generate(&spec()).unwrap();
    let model = ScoreModel::<f32>::init(Arch::LinearSigmoid, 4, 2).unwrap();
    let hyper = StepHyper::<f32> { batch_pos: 16, batch_neg: 32, eta1: 0.05, ..StepHyper::default() };
    for tag in [OptimizerTag::Sopa, OptimizerTag::SopaS, OptimizerTag::SotaS, OptimizerTag::Ce] {
        let cfg = TrainConfig::new(tag, hyper, 10, 0);
        let (_, report) = run_training(&cfg, &data, None, &model, None).unwrap();
        assert!(report.last().train.auc > report.initial().train.auc, "{tag}");
    }
}

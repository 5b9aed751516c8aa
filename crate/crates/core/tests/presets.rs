//! The hard-negative preset is built so that full AUC and early-region
//! partial AUC prefer different linear separators.

use dropauc::data::{generate, Preset, SynthSpec};
use dropauc::metrics::{opauc_exact, roc_auc, Normalization, ScoreSet};
use dropauc::DatasetF64;

fn scores(data: &DatasetF64, theta: f64) -> ScoreSet<f64> {
    let (c, s) = (theta.cos(), theta.sin());
    let score = |i: usize| c * data.row(i)[0] + s * data.row(i)[1];
    ScoreSet::new(data.pos_ids().iter().map(|&i| score(i)).collect(), data.neg_ids().iter().map(|&j| score(j)).collect())
        .unwrap()
}

fn argmax(values: &[f64]) -> usize {
    (0..values.len()).fold(0, |best, i| if values[i] > values[best] { i } else { best })
}

#[test]
fn auc_and_partial_auc_pick_different_directions() {
    let steps = 720;
    for seed in 0..3 {
        let data: DatasetF64 = generate(&SynthSpec::new(2000, 0.1, 10, Preset::hard_negatives_default(), seed)).unwrap();
        let thetas: Vec<f64> = (0..steps).map(|k| std::f64::consts::TAU * k as f64 / steps as f64).collect();
        let auc: Vec<f64> = thetas.iter().map(|&t| roc_auc(&scores(&data, t)).unwrap()).collect();
        let pauc: Vec<f64> = thetas
            .iter()
            .map(|&t| opauc_exact(&scores(&data, t), 0.0, 0.1, Normalization::Normalized).unwrap())
            .collect();
        let (a, p) = (argmax(&auc), argmax(&pauc));
        let apart = (a as i64 - p as i64).rem_euclid(steps as i64).min((p as i64 - a as i64).rem_euclid(steps as i64));
        assert!(apart >= 4, "seed {seed}: directions {} and {} degrees", thetas[a].to_degrees(), thetas[p].to_degrees());
        // each direction is strictly worse on the other's metric
        assert!(auc[p] < auc[a] && pauc[a] < pauc[p], "seed {seed}");
    }
}

#[test]
fn overlap_sigma_controls_difficulty() {
    let auc_of = |sigma: f64| {
        let data: DatasetF64 = generate(&SynthSpec::new(2000, 0.2, 3, Preset::Overlap { sigma }, 1)).unwrap();
        roc_auc(&scores(&data, 0.0)).unwrap()
    };
    assert!(auc_of(0.3) > auc_of(1.0));
    assert!(auc_of(1.0) > auc_of(3.0));
}

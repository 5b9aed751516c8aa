use dropauc::losses::{cvar_variational, dro_cvar, dro_kl};
use dropauc::metrics::{opauc_exact, roc_auc, tpauc_exact, Normalization, ScoreSet};
use dropauc::oracle::{cvar_scan_min, pauc_bruteforce, PaucMode};
use proptest::prelude::*;

const LEVELS: [f64; 9] = [0.0, 0.1, 0.2, 0.25, 0.3, 0.5, 0.6, 0.75, 1.0];

/// Scores from a small integer range, so ties are common.
fn scores(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..6).prop_map(f64::from), 1..=max_len)
}

fn same(a: dropauc::Result<f64>, b: dropauc::Result<f64>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x == y,
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

proptest! {
    #[test]
    fn one_way_matches_bruteforce(pos in scores(9), neg in scores(12), a in 0usize..4, b in 4usize..9) {
        let set = ScoreSet::new(pos, neg).unwrap();
        let (a0, a1) = (LEVELS[a], LEVELS[b]);
        let mode = PaucMode::OneWay { alpha0: a0, alpha1: a1 };
        for norm in [Normalization::Normalized, Normalization::Unnormalized] {
            prop_assert!(same(
                opauc_exact(&set, a0, a1, norm),
                pauc_bruteforce(&set, mode, norm)
            ));
        }
    }

    #[test]
    fn two_way_matches_bruteforce(pos in scores(9), neg in scores(12), a in 1usize..9, b in 1usize..9) {
        let set = ScoreSet::new(pos, neg).unwrap();
        let (alpha, beta) = (LEVELS[a], LEVELS[b]);
        let mode = PaucMode::TwoWay { alpha, beta };
        for norm in [Normalization::Normalized, Normalization::Unnormalized] {
            prop_assert!(same(
                tpauc_exact(&set, alpha, beta, norm),
                pauc_bruteforce(&set, mode, norm)
            ));
        }
    }

    /// A strictly increasing map of the scores changes no metric.
    #[test]
    fn metrics_are_rank_invariant(pos in scores(9), neg in scores(12), shift in -3.0f64..3.0, scale in 0.1f64..10.0) {
        let set = ScoreSet::new(pos.clone(), neg.clone()).unwrap();
        let map = |xs: &[f64]| xs.iter().map(|&x| (scale * x + shift).exp()).collect::<Vec<_>>();
        let moved = ScoreSet::new(map(&pos), map(&neg)).unwrap();
        prop_assert_eq!(roc_auc(&set).unwrap(), roc_auc(&moved).unwrap());
        let norm = Normalization::Normalized;
        prop_assert!(same(opauc_exact(&set, 0.0, 0.3, norm), opauc_exact(&moved, 0.0, 0.3, norm)));
        prop_assert!(same(tpauc_exact(&set, 0.5, 0.5, norm), tpauc_exact(&moved, 0.5, 0.5, norm)));
    }

    #[test]
    fn metrics_lie_in_unit_interval(pos in scores(9), neg in scores(12)) {
        let set = ScoreSet::new(pos, neg).unwrap();
        let auc = roc_auc(&set).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
        if let Ok(v) = opauc_exact(&set, 0.0, 0.5, Normalization::Normalized) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn kl_sits_between_mean_and_max(losses in prop::collection::vec(0.0f64..5.0, 1..40), lambda in 1e-3f64..1e3) {
        let n = losses.len() as f64;
        let mean = losses.iter().sum::<f64>() / n;
        let max = losses.iter().copied().fold(f64::MIN, f64::max);
        let v = dro_kl(&losses, lambda).unwrap();
        prop_assert!(v <= max + 1e-12);
        prop_assert!(v >= mean - 1e-12);
        prop_assert!(v >= max - lambda * n.ln() - 1e-12);
    }

    #[test]
    fn kl_is_non_increasing_and_shift_equivariant(
        losses in prop::collection::vec(0.0f64..5.0, 1..40),
        l1 in 1e-2f64..10.0,
        ratio in 1.0f64..10.0,
        c in -2.0f64..2.0,
    ) {
        prop_assert!(dro_kl(&losses, l1 * ratio).unwrap() <= dro_kl(&losses, l1).unwrap() + 1e-12);
        let shifted: Vec<f64> = losses.iter().map(|l| l + c).collect();
        prop_assert!((dro_kl(&shifted, l1).unwrap() - dro_kl(&losses, l1).unwrap() - c).abs() <= 1e-9);
    }

    /// The variational CVaR minimum over thresholds equals the top-k mean,
    /// and every threshold gives an upper bound.
    #[test]
    fn cvar_threshold_form(losses in prop::collection::vec(0.0f64..5.0, 1..30), k in 1usize..30, s in -1.0f64..6.0) {
        let k = k.min(losses.len());
        let gamma = k as f64 / losses.len() as f64;
        let top = dro_cvar(&losses, gamma).unwrap();
        let (min, argmin) = cvar_scan_min(&losses, gamma).unwrap();
        prop_assert!((min - top).abs() <= 1e-9 * (1.0 + top.abs()));
        prop_assert!((cvar_variational(&losses, gamma, argmin) - top).abs() <= 1e-9 * (1.0 + top.abs()));
        prop_assert!(cvar_variational(&losses, gamma, s) >= top - 1e-9);
    }
}

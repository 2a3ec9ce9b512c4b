use daal::learner::{entropy_of_rows, ClassifierModel};
use daal::numerics::Tensor;
use daal::selector::{daal_scores, select_batch, select_by_uncertainty, Pool, PoolLabel};
use daal::teacher::{standardized_sigmoid, DensityCalibration};
use proptest::prelude::*;

fn pool(m: usize) -> Pool {
    Pool::new(
        Tensor::zeros(vec![m, 2]),
        (0..m).map(|i| PoolLabel::Class(i % 2)).collect(),
        (0..m as u64).map(|i| 100 + i).collect(),
    )
    .unwrap()
}

fn probs(rows: &[Vec<f64>]) -> Tensor {
    let normalised: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(|v| v / s).collect()
        })
        .collect();
    Tensor::from_rows(&normalised).unwrap()
}

fn scores_and_q() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|m| {
        (
            prop::collection::vec(0.0..std::f64::consts::LN_2, m),
            prop::collection::vec(0.001f64..0.999, m),
        )
    })
}

proptest! {
    #[test]
    fn entropy_is_bounded(rows in prop::collection::vec(prop::collection::vec(0.001f64..1.0, 4), 1..20)) {
        for h in entropy_of_rows(&probs(&rows)) {
            prop_assert!(h >= 0.0);
            prop_assert!(h <= 4f64.ln() + 1e-12);
        }
    }

    #[test]
    fn entropy_ignores_class_order(rows in prop::collection::vec(prop::collection::vec(0.001f64..1.0, 3), 1..10)) {
        let reversed: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().rev().copied().collect()).collect();
        for (a, b) in entropy_of_rows(&probs(&rows)).iter().zip(entropy_of_rows(&probs(&reversed))) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn classifier_entropy_follows_row_permutation(seed in 0u64..50, shift in 1usize..9) {
        let model = ClassifierModel::new(vec![2, 8, 4, 3], seed).unwrap();
        let rows: Vec<[f64; 2]> = (0..10).map(|i| [i as f64 * 0.3 - 1.5, (i * i) as f64 * 0.05]).collect();
        let rotated: Vec<[f64; 2]> = (0..10).map(|i| rows[(i + shift) % 10]).collect();
        let a = model.entropy_scores(&Tensor::from_rows(&rows).unwrap()).unwrap();
        let b = model.entropy_scores(&Tensor::from_rows(&rotated).unwrap()).unwrap();
        for i in 0..10 {
            prop_assert_eq!(b[i], a[(i + shift) % 10]);
        }
    }

    #[test]
    fn beta_zero_is_uncertainty_sampling((phi, q) in scores_and_q(), k in 1usize..10) {
        let k = k.min(phi.len());
        let scores = daal_scores(&phi, &q, 0.0).unwrap();
        let mut a = pool(phi.len());
        let mut b = pool(phi.len());
        let candidates: Vec<usize> = (0..phi.len()).collect();
        prop_assert_eq!(
            select_batch(&mut a, &scores, k).unwrap(),
            select_by_uncertainty(&mut b, &candidates, &phi, k).unwrap()
        );
    }

    #[test]
    fn scaling_q_keeps_the_batch((phi, q) in scores_and_q(), c in 0.01f64..1.0, beta in 0.0f64..5.0, k in 1usize..10) {
        let k = k.min(phi.len());
        let scaled: Vec<f64> = q.iter().map(|v| v * c).collect();
        let mut a = pool(phi.len());
        let mut b = pool(phi.len());
        let first = select_batch(&mut a, &daal_scores(&phi, &q, beta).unwrap(), k).unwrap();
        let second = select_batch(&mut b, &daal_scores(&phi, &scaled, beta).unwrap(), k).unwrap();
        // a common factor shifts every log score by β ln c; only exact ties can reorder
        let log_phi = daal_scores(&phi, &q, beta).unwrap();
        let mut sorted: Vec<f64> = log_phi.iter().map(|s| s.log_phi).collect();
        sorted.sort_by(|x, y| y.total_cmp(x));
        if k < sorted.len() && (sorted[k - 1] - sorted[k]).abs() < 1e-9 {
            return Ok(());
        }
        prop_assert_eq!(first, second);
    }

    #[test]
    fn density_score_is_monotone_in_elbo(a in -500.0f64..50.0, b in -500.0f64..50.0, mean in -100.0f64..0.0, std in 0.1f64..50.0) {
        let cal = DensityCalibration { elbo_mean: mean, elbo_std: std, computed_over: "test".into() };
        let (qa, qb) = (standardized_sigmoid(a, &cal), standardized_sigmoid(b, &cal));
        prop_assert!(qa > 0.0 && qa < 1.0 && qb > 0.0 && qb < 1.0);
        if a < b {
            prop_assert!(qa <= qb);
        }
    }

    #[test]
    fn larger_beta_never_raises_low_density_scores((phi, q) in scores_and_q(), beta in 0.0f64..4.0) {
        let low = daal_scores(&phi, &q, beta).unwrap();
        let high = daal_scores(&phi, &q, beta + 1.0).unwrap();
        for (l, h) in low.iter().zip(&high) {
            prop_assert!(h.log_phi <= l.log_phi);
        }
    }
}

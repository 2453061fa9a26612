//! Property tests for the crate's structural invariants.

use proptest::prelude::*;

use dcsl::costs::{
    apply_score_costs, clinical_ordering_violations, ClassRoles, CostKind, ScoreCostMatrix,
    ScoreTransform,
};
use dcsl::data::{generate, load_csv, save_csv, SynthConfig};
use dcsl::losses::{softmax, softmax_ce, LabeledBatch};
use dcsl::nncore::Matrix;

fn logit_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0..30.0f64, n)
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in (2usize..8).prop_flat_map(logit_vec)) {
        let p = softmax(&logits).unwrap();
        prop_assert!(p.iter().all(|&v| v > 0.0));
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_ce_is_shift_invariant(
        logits in logit_vec(4),
        shift in -50.0..50.0f64,
        label in 0usize..4,
    ) {
        let features = Matrix::zeros(1, 1);
        let base = Matrix::from_rows(std::slice::from_ref(&logits)).unwrap();
        let shifted =
            Matrix::from_rows(&[logits.iter().map(|v| v + shift).collect::<Vec<_>>()]).unwrap();
        let labels = [label];
        let (l0, g0) =
            softmax_ce(&LabeledBatch::new(&features, &base, &labels).unwrap(), None).unwrap();
        let (l1, g1) =
            softmax_ce(&LabeledBatch::new(&features, &shifted, &labels).unwrap(), None).unwrap();
        prop_assert!((l0 - l1).abs() < 1e-9 * (1.0 + l0.abs()));
        for (a, b) in g0.data().iter().zip(g1.data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn score_transform_is_linear(
        f in logit_vec(3),
        g in logit_vec(3),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let costs = ScoreCostMatrix::new(Matrix::from_fn(3, 3, |p, q| {
            // Deterministic positive grid, not data-dependent.
            1.0 + 0.3 * ((p * 3 + q) as f64)
        })).unwrap();
        let apply = |v: &[f64]| {
            let m = Matrix::from_rows(&[v.to_vec()]).unwrap();
            apply_score_costs(&m, &costs, ScoreTransform::MatrixProduct, None)
                .unwrap()
                .row(0)
                .to_vec()
        };
        let combined: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let lhs = apply(&combined);
        let fa = apply(&f);
        let gb = apply(&g);
        for k in 0..3 {
            let rhs = a * fa[k] + b * gb[k];
            prop_assert!((lhs[k] - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn clinical_validation_is_complete(entries in prop::collection::vec(0.01..5.0f64, 9)) {
        // The validator must accept exactly the matrices whose six severity
        // inequalities hold, per a brute-force re-evaluation.
        let roles = ClassRoles::default_benchmark();
        let m = Matrix::from_vec(3, 3, entries).unwrap();
        let violations =
            clinical_ordering_violations(&m, CostKind::Loss, &roles).unwrap();
        let ranking = roles.severity_ranking();
        let mut expected = 0;
        for w in ranking.windows(2) {
            if !(m.get(w[0].0, w[0].1) > m.get(w[1].0, w[1].1)) {
                expected += 1;
            }
        }
        prop_assert_eq!(violations.len(), expected);
    }

    #[test]
    fn dataset_csv_roundtrip(seed in any::<u64>(), spread in 0.1..4.0f64) {
        let dataset = generate(&SynthConfig {
            n_classes: 2,
            in_dim: 3,
            class_counts: vec![4, 6],
            class_separation: 1.5,
            intra_spread: spread,
            seed,
        }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        save_csv(&dataset, &path).unwrap();
        let back = load_csv(&path).unwrap();
        prop_assert_eq!(back.labels(), dataset.labels());
        prop_assert_eq!(back.features(), dataset.features());
    }
}

use acv::linops::{estimate_op_norm, DenseMatrix, LinearOperator};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn svd_norm(op: &LinearOperator) -> f64 {
    let d = op.to_dense();
    let m = DMatrix::from_row_slice(d.rows(), d.cols(), d.as_slice());
    m.singular_values().max()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn builders() -> Vec<(&'static str, LinearOperator)> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let dense = DenseMatrix::new(7, 5, random_vec(&mut rng, 35)).unwrap();
    let keep: Vec<bool> = (0..20).map(|i| i % 3 != 0).collect();
    let widths: Vec<usize> = (0..20).map(|i| i % 3).collect();
    vec![
        ("identity", LinearOperator::identity(6)),
        ("zero", LinearOperator::zero(4, 3)),
        ("dense", LinearOperator::dense(dense)),
        ("diagonal", LinearOperator::diagonal(vec![3.0, -1.0, 0.5])),
        ("pairs", LinearOperator::pair_difference(vec![(0, 2), (1, 3), (2, 3), (4, 0)], 5).unwrap()),
        ("diff1d", LinearOperator::forward_difference_1d(8).unwrap()),
        ("diff2d", LinearOperator::forward_difference_2d(4, 5).unwrap()),
        ("mask", LinearOperator::mask(keep)),
        ("blur", LinearOperator::local_average(4, 5, widths).unwrap()),
        ("scaled", LinearOperator::scaled(LinearOperator::forward_difference_2d(3, 3).unwrap(), 0.01)),
    ]
}

#[test]
fn adjoint_identity_on_every_builder() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (name, op) in builders() {
        for _ in 0..100 {
            let x = random_vec(&mut rng, op.in_dim());
            let y = random_vec(&mut rng, op.out_dim());
            let lhs = dot(&op.apply(&x).unwrap(), &y);
            let rhs = dot(&x, &op.apply_adjoint(&y).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1e-300) + 1e-14, "{name}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn norm_estimates_match_dense_svd() {
    for (name, op) in builders() {
        let truth = svd_norm(&op);
        let est = estimate_op_norm(&op, 1e-10, 20_000, 3);
        assert!((est.value - truth).abs() <= 1e-6 * truth.max(1.0), "{name}: {} vs {truth}", est.value);
        let bound = op.norm_upper_bound(9);
        assert!(bound >= truth * (1.0 - 1e-9), "{name}: bound {bound} below {truth}");
    }
}

#[test]
fn forward_difference_examples() {
    let d1 = LinearOperator::forward_difference_1d(8).unwrap();
    let est = estimate_op_norm(&d1, 1e-6, 1000, 0).value;
    assert!((est - svd_norm(&d1)).abs() <= 1e-6);
    let d2 = LinearOperator::forward_difference_2d(2, 2).unwrap();
    assert!(svd_norm(&d2).powi(2) <= 8.0);
}

#[test]
fn upper_bound_holds_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (name, op) in builders() {
        let bound = op.norm_upper_bound(2);
        for _ in 0..100 {
            let x = random_vec(&mut rng, op.in_dim());
            let ax = op.apply(&x).unwrap();
            assert!(dot(&ax, &ax).sqrt() <= bound * dot(&x, &x).sqrt() + 1e-12, "{name}");
        }
    }
}

#[test]
fn scaled_norm_tracks_factor() {
    let base = LinearOperator::forward_difference_2d(6, 5).unwrap();
    let b = estimate_op_norm(&base, 1e-10, 10_000, 4).value;
    let s = estimate_op_norm(&LinearOperator::scaled(base, 0.01), 1e-10, 10_000, 4).value;
    assert!((s - 0.01 * b).abs() <= 1e-6 * 0.01 * b);
}

proptest! {
    #[test]
    fn dense_operator_is_linear(
        data in prop::collection::vec(-5.0f64..5.0, 12),
        x in prop::collection::vec(-5.0f64..5.0, 4),
        z in prop::collection::vec(-5.0f64..5.0, 4),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let op = LinearOperator::dense(DenseMatrix::new(3, 4, data).unwrap());
        let comb: Vec<f64> = x.iter().zip(&z).map(|(p, q)| a * p + b * q).collect();
        let lhs = op.apply(&comb).unwrap();
        let (ax, az) = (op.apply(&x).unwrap(), op.apply(&z).unwrap());
        for i in 0..3 {
            let rhs = a * ax[i] + b * az[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs().max(lhs[i].abs())) * 10.0);
        }
    }

    #[test]
    fn pair_difference_adjoint(
        pairs in prop::collection::vec((0usize..6, 0usize..6), 1..8),
        x in prop::collection::vec(-5.0f64..5.0, 6),
        seed in 0u64..1000,
    ) {
        let pairs: Vec<(usize, usize)> = pairs.into_iter().filter(|(i, j)| i != j).collect();
        prop_assume!(!pairs.is_empty());
        let op = LinearOperator::pair_difference(pairs, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = random_vec(&mut rng, op.out_dim());
        let lhs = dot(&op.apply(&x).unwrap(), &y);
        let rhs = dot(&x, &op.apply_adjoint(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }
}

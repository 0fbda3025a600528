use acv::functions::{grad_least_squares, ProxFunction};
use acv::linops::{DenseMatrix, LinearOperator};
use acv::metrics::{fit_rate_slope, lagrangian, pd_gap_box, primal_objective, GapBox, RecordOptions};
use acv::problems::{build_fused_elastic_net, build_pair_index, FusedElasticNetSpec};
use acv::solver::{acv_step, run, Algorithm, SaddleProblem, SolverState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_fused(seed: u64, beta: f64) -> SaddleProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d) = (12, 6);
    let w = DenseMatrix::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let b = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut spec = FusedElasticNetSpec::new(w, b);
    spec.beta = beta;
    spec.lambda2 = 0.3;
    spec.pair_fraction = 0.4;
    build_fused_elastic_net(&spec).unwrap()
}

// Last iterate of a long Condat-Vu run.
fn saddle_point(p: &SaddleProblem) -> (Vec<f64>, Vec<f64>) {
    let params = Algorithm::CvBook.schedule(p).unwrap().params(0);
    let mut s = p.zero_state();
    for _ in 0..200_000 {
        s = acv_step(p, &s, &params).unwrap();
    }
    (s.x, s.y)
}

fn in_box(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let dir: Vec<f64> = center.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = radius * rng.random::<f64>();
    center.iter().zip(&dir).map(|(c, d)| c + r * d / n).collect()
}

#[test]
fn saddle_inequalities_hold_at_reference() {
    let p = small_fused(1, 0.5);
    let (xs, ys) = saddle_point(&p);
    let zero = p.zero_state();
    let gbox = GapBox::around_reference(&xs, &ys, &zero.x, &zero.y);
    let mid = lagrangian(&p, &xs, &ys);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let x = in_box(&mut rng, &xs, gbox.primal_radius);
        let y = p.f_conj.prox(&in_box(&mut rng, &ys, gbox.dual_radius), 1e-12);
        assert!(lagrangian(&p, &xs, &y) <= mid + 1e-6);
        assert!(mid <= lagrangian(&p, &x, &ys) + 1e-6);
    }
    let gap = pd_gap_box(&p, &xs, &ys, &gbox, 8, 0);
    assert!((-1e-9..=1e-6).contains(&gap), "{gap}");
}

#[test]
fn recorded_gaps_are_nonnegative_when_box_holds_reference() {
    let p = small_fused(3, 0.5);
    let (xs, ys) = saddle_point(&p);
    let init = p.zero_state();
    let gbox = GapBox::around_reference(&xs, &ys, &init.x, &init.y);
    let opts = RecordOptions {
        log_every: 7,
        reference_objective: Some(primal_objective(&p, &xs)),
        gap_box: Some(gbox),
        pd_gap_probes: 4,
        seed: 5,
        record_time: false,
    };
    for alg in [Algorithm::AcvGeneral, Algorithm::AcvSc, Algorithm::CvBook] {
        let s = alg.schedule(&p).unwrap();
        let out = run(&p, &s, init.clone(), 300, &opts).unwrap();
        for row in out.record.rows() {
            let g = row.pd_gap.unwrap();
            assert!(g >= -1e-9, "{alg} k={} gap {g}", row.k);
        }
    }
}

#[test]
fn accelerated_gradient_slope_on_quadratic() {
    // spectrum i^-2 with |x*_i|^2 = 1/i: the unresolved energy after k steps is ~ 1/k^2
    let d = 4000;
    let diag: Vec<f64> = (1..=d).map(|i| 1.0 / (i as f64).powi(2)).collect();
    let x_true: Vec<f64> = (1..=d).map(|i| (i as f64).powf(-0.5) * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let b: Vec<f64> = diag.iter().zip(&x_true).map(|(a, x)| a * x).collect();
    let p = SaddleProblem::new(
        ProxFunction::OriginIndicator,
        ProxFunction::Zero,
        grad_least_squares(LinearOperator::diagonal(diag), b),
        LinearOperator::zero(d, 1),
    )
    .unwrap();
    let s = Algorithm::AcvGeneral.schedule(&p).unwrap();
    let opts = RecordOptions {
        reference_objective: Some(0.0),
        record_time: false,
        ..RecordOptions::default()
    };
    let out = run(&p, &s, SolverState::new(vec![0.0; d], vec![0.0]), 1000, &opts).unwrap();
    let slope = fit_rate_slope(&out.record, 100, 1000).unwrap();
    assert!(slope <= -1.8, "{slope}");
}

fn brute_force_pairs(w: &DenseMatrix, fraction: f64) -> Vec<(usize, usize)> {
    let d = w.cols();
    let mut scored = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let (a, b) = (w.column(i), w.column(j));
            let n = a.len() as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            let cov: f64 = a.iter().zip(&b).map(|(p, q)| (p - ma) * (q - mb)).sum();
            let va: f64 = a.iter().map(|p| (p - ma).powi(2)).sum();
            let vb: f64 = b.iter().map(|q| (q - mb).powi(2)).sum();
            if va > 0.0 && vb > 0.0 {
                scored.push(((cov / (va * vb).sqrt()).abs(), i, j));
            }
        }
    }
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let want = (fraction * (d * (d - 1) / 2) as f64).ceil() as usize;
    scored.into_iter().take(want).map(|(_, i, j)| (i, j)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gap_is_monotone_in_radii(seed in 0u64..500, beta in prop_oneof![Just(0.5), Just(1.0)], shift in 0.0f64..2.0) {
        let p = small_fused(seed, beta);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..p.primal_dim()).map(|_| rng.random_range(-shift..shift.max(1e-3))).collect();
        let y = p.f_conj.prox(&(0..p.dual_dim()).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>(), 1e-12);
        let gbox = GapBox {
            primal_center: x.iter().map(|v| v * 0.5).collect(),
            primal_radius: 1.0,
            dual_center: vec![0.0; p.dual_dim()],
            dual_radius: 0.5,
        };
        let mut last = f64::NEG_INFINITY;
        for factor in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let g = pd_gap_box(&p, &x, &y, &gbox.scaled(factor), 4, seed);
            prop_assert!(g.is_finite());
            prop_assert!(g >= last - 1e-9 * last.abs().max(1.0), "factor {factor}: {last} -> {g}");
            last = g;
        }
    }

    #[test]
    fn gap_nonnegative_inside_box(seed in 0u64..500) {
        let p = small_fused(seed, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let x: Vec<f64> = (0..p.primal_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = p.f_conj.prox(&(0..p.dual_dim()).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>(), 1e-12);
        let gbox = GapBox { primal_center: x.clone(), primal_radius: 2.0, dual_center: y.clone(), dual_radius: 1.0 };
        prop_assert!(pd_gap_box(&p, &x, &y, &gbox, 4, seed) >= -1e-9);
    }

    #[test]
    fn objective_matches_direct_formula(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d) = (10, 5);
        let data: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = DenseMatrix::new(n, d, data).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut spec = FusedElasticNetSpec::new(w.clone(), b.clone());
        spec.pair_fraction = 0.3;
        let p = build_fused_elastic_net(&spec).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let pairs = build_pair_index(&w, 0.3);
        let r: f64 = (0..n).map(|i| (w.row(i).iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() - b[i]).powi(2)).sum();
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        let l2: f64 = x.iter().map(|v| v * v).sum();
        let fused: f64 = pairs.iter().map(|&(i, j)| (x[i] - x[j]).abs()).sum();
        let want = 0.5 * r + 0.1 * 0.5 * l1 + 0.1 * 0.5 * 0.5 * l2 + 0.1 * fused;
        let got = primal_objective(&p, &x);
        prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn pair_index_matches_brute_force(seed in 0u64..1000, fraction in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d) = (8, 7);
        let mut data: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if seed % 3 == 0 {
            for r in 0..n {
                data[r * d + 2] = 0.25;
            }
        }
        let w = DenseMatrix::new(n, d, data).unwrap();
        prop_assert_eq!(build_pair_index(&w, fraction), brute_force_pairs(&w, fraction));
    }
}

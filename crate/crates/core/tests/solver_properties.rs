use acv::functions::{grad_least_squares, ProxFunction, SmoothFunction};
use acv::linops::{DenseMatrix, LinearOperator};
use acv::metrics::{primal_objective, RecordOptions};
use acv::solver::{
    acv_step, compute_t0, condat_vu_book_params, pdhg_params, run, run_with, schedule_general, schedule_sc_dual,
    schedule_sc_primal, schedule_sc_smooth, validate_general, validate_sc, validate_sc_smooth, Algorithm, ParamSchedule,
    Regime, SaddleProblem, SolverState, StepParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fused_lasso(seed: u64, mu_g: f64, smooth_dual: bool) -> SaddleProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d) = (15, 8);
    let w = DenseMatrix::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let pairs = vec![(0, 1), (2, 3), (4, 7), (1, 5)];
    let f_conj = if smooth_dual {
        ProxFunction::HuberConjugate { lambda2: 0.3, lambda3: 10.0 }
    } else {
        ProxFunction::LinfBall { radius: 0.3 }
    };
    let g = if mu_g > 0.0 {
        ProxFunction::ElasticNet { lambda1: 2.0 * mu_g, beta: 0.5 }
    } else {
        ProxFunction::L1 { weight: 0.1 }
    };
    SaddleProblem::new(
        f_conj,
        g,
        grad_least_squares(LinearOperator::dense(w), b),
        LinearOperator::pair_difference(pairs, d).unwrap(),
    )
    .unwrap()
}

#[test]
fn problem_constants_come_from_components() {
    let p = fused_lasso(1, 0.05, true);
    assert_eq!(p.lipschitz, p.h.lipschitz());
    assert_eq!(p.mu_g, p.g.strong_convexity());
    assert_eq!(p.mu_fstar, p.f_conj.strong_convexity());
    let dense = p.a.to_dense();
    let m = nalgebra::DMatrix::from_row_slice(dense.rows(), dense.cols(), dense.as_slice());
    assert!(p.opnorm_a >= m.singular_values().max());
}

#[test]
fn first_state_has_x_prev_equal_x() {
    let s = SolverState::new(vec![1.0, 2.0], vec![0.5]);
    assert_eq!(s.x_prev, s.x);
    assert_eq!(s.v, s.x);
    assert_eq!(s.w, s.y);
    assert_eq!(s.k, 0);
}

#[test]
fn condat_vu_step_matches_hand_step() {
    let p = fused_lasso(2, 0.0, false);
    let params = StepParams {
        gamma: 0.4,
        tau: 0.01,
        alpha: 1.0,
        theta: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut state = SolverState::new(x.clone(), vec![0.1, -0.2, 0.0, 0.25]);
    state.x_prev = x.iter().map(|v| v * 0.9).collect();
    let next = acv_step(&p, &state, &params).unwrap();
    let ext: Vec<f64> = x.iter().zip(&state.x_prev).map(|(a, b)| 2.0 * a - b).collect();
    let aext = p.a.apply(&ext).unwrap();
    let y: Vec<f64> = state.y.iter().zip(&aext).map(|(y, a)| (y + 0.4 * a).clamp(-0.3, 0.3)).collect();
    let grad = p.h.gradient(&x);
    let aty = p.a.apply_adjoint(&y).unwrap();
    let xn: Vec<f64> = (0..8)
        .map(|i| {
            let z = x[i] - 0.01 * grad[i] - 0.01 * aty[i];
            z.signum() * (z.abs() - 0.001).max(0.0)
        })
        .collect();
    for ((a, v), b) in next.x.iter().zip(&next.v).zip(&xn) {
        assert!((a - b).abs() <= 1e-12);
        assert!((v - b).abs() <= 1e-12);
    }
    for (a, b) in next.y.iter().zip(&y) {
        assert!((a - b).abs() <= 1e-12);
    }
    assert_eq!(next.x_prev, x);
    assert_eq!(next.k, 1);
}

#[test]
fn zero_coupling_keeps_dual_at_origin() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = DenseMatrix::new(6, 4, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let p = SaddleProblem::new(
        ProxFunction::OriginIndicator,
        ProxFunction::L1 { weight: 0.1 },
        grad_least_squares(LinearOperator::dense(w), vec![1.0; 6]),
        LinearOperator::zero(4, 3),
    )
    .unwrap();
    let s = Algorithm::AcvGeneral.schedule(&p).unwrap();
    run_with(&p, &s, SolverState::new(vec![0.5; 4], vec![0.0; 3]), 50, |st| {
        assert!(st.y.iter().all(|v| *v == 0.0));
    })
    .unwrap();
}

#[test]
fn constructor_examples() {
    let p = schedule_general(2.0, 2f64.sqrt()).unwrap().params(2);
    assert!((p.gamma - 3.0 / 14.0).abs() <= 1e-15);
    assert_eq!(p.alpha, 0.5);
    let p0 = schedule_general(1.0, 0.0).unwrap().params(0);
    assert_eq!((p0.alpha, p0.gamma, p0.tau, p0.theta), (1.0, 0.25, 0.25, 1.0));
    assert_eq!(compute_t0(100.0, 1.0, 1.0).unwrap().t0, 123);
    let book = condat_vu_book_params(2.0, 1.0).unwrap().params(0);
    assert_eq!((book.tau, book.gamma), (0.25, 2.0));
}

#[test]
fn shipped_schedules_validate_to_1e5() {
    let horizon = 100_000;
    assert!(validate_general(&schedule_general(1.0, 1.0).unwrap(), 1.0, 1.0, horizon).passed());
    assert!(validate_sc(&schedule_sc_primal(4.0, 1.0, 1.0).unwrap(), 4.0, 1.0, 1.0, horizon).passed());
    assert!(validate_sc(&schedule_sc_primal(100.0, 1.0, 1.0).unwrap(), 100.0, 1.0, 1.0, horizon).passed());
    assert!(validate_general(&condat_vu_book_params(3.0, 2.0).unwrap(), 3.0, 2.0, horizon).passed());
    assert!(validate_general(&pdhg_params(3.0, 2.0).unwrap(), 3.0, 2.0, horizon).passed());
    let smooth = schedule_sc_smooth(3.0, 1.0, 1.0, 1.0).unwrap().params(0);
    assert!(validate_sc_smooth(&smooth, 3.0, 1.0, 1.0, 1.0).passed());
}

#[test]
fn literal_steady_step_fails_steady_coupling() {
    use acv::solver::{schedule_sc_primal_with, Variant};
    let s = schedule_sc_primal_with(100.0, 1.0, 1.0, Variant::PaperLiteral, None).unwrap();
    let r = validate_sc(&s, 100.0, 1.0, 1.0, 1000);
    let c = r.constraint("steady coupling |A|^2/2 + L*a/(2s) - 1/(2gt) <= 0").unwrap();
    assert_eq!(c.first_violation.as_ref().map(|v| v.k), s.warmup_t0());
}

#[test]
fn hand_configured_alpha_above_one_fails() {
    let s = ParamSchedule::constant(
        Regime::General,
        StepParams {
            gamma: 0.1,
            tau: 0.1,
            alpha: 1.5,
            theta: 1.0,
        },
    );
    let r = validate_general(&s, 1.0, 1.0, 10);
    assert!(r.constraint("alpha in (0,1]").unwrap().first_violation.is_some());
}

#[test]
fn large_constant_steps_fail_coupling_at_zero() {
    let s = ParamSchedule::constant(
        Regime::General,
        StepParams {
            gamma: 10.0,
            tau: 10.0,
            alpha: 1.0,
            theta: 1.0,
        },
    );
    let r = validate_general(&s, 0.0, 1.0, 10);
    let c = r.constraint("coupling L*a*tau + g*tau*|A|^2 <= 1").unwrap();
    assert_eq!(c.first_violation.as_ref().map(|v| v.k), Some(0));
}

#[test]
fn runs_are_deterministic() {
    let p = fused_lasso(5, 0.05, false);
    let opts = RecordOptions {
        record_time: false,
        ..RecordOptions::default()
    };
    for alg in [Algorithm::AcvGeneral, Algorithm::AcvSc, Algorithm::CvBook, Algorithm::Pdhg] {
        let s = alg.schedule(&p).unwrap();
        let a = run(&p, &s, p.zero_state(), 300, &opts).unwrap();
        let b = run(&p, &s, p.zero_state(), 300, &opts).unwrap();
        assert_eq!(a.state, b.state, "{alg}");
        assert_eq!(a.record, b.record, "{alg}");
    }
}

#[test]
fn every_applicable_algorithm_decreases_the_objective() {
    for (p, label) in [
        (fused_lasso(6, 0.0, false), "general"),
        (fused_lasso(6, 0.05, false), "sc"),
        (fused_lasso(6, 0.05, true), "smooth"),
    ] {
        let start = primal_objective(&p, &p.zero_state().v);
        for alg in Algorithm::ALL {
            let Ok(s) = alg.schedule(&p) else { continue };
            let out = run(&p, &s, p.zero_state(), 2000, &RecordOptions::default()).unwrap();
            let end = primal_objective(&p, &out.state.v);
            assert!(end < start, "{alg} on {label}: {end} >= {start}");
            assert!(out.state.x.iter().chain(&out.state.y).all(|v| v.is_finite()));
        }
    }
}

#[test]
fn smoothed_problems_admit_the_dual_schedule() {
    let p = fused_lasso(7, 0.0, true);
    assert!(p.mu_fstar > 0.0 && p.mu_g == 0.0);
    let s = schedule_sc_dual(p.lipschitz, p.mu_fstar, p.opnorm_a);
    if p.lipschitz * p.mu_fstar <= 2.0 * p.opnorm_a * p.opnorm_a {
        let s = s.unwrap();
        assert!(Algorithm::AcvScDual.validate(&p, &s, 10_000).passed());
    } else {
        assert!(s.is_err());
    }
}

#[test]
fn smooth_zero_function_gradient() {
    let h = SmoothFunction::Zero { dim: 3 };
    assert_eq!(h.gradient(&[1.0, 2.0, 3.0]), vec![0.0; 3]);
}

#[test]
fn uncoupled_general_schedule_has_quadratic_rate() {
    let d = 4000;
    let diag: Vec<f64> = (1..=d).map(|i| 1.0 / (i as f64).powi(2)).collect();
    let b: Vec<f64> = (1..=d)
        .map(|i| (i as f64).powf(-2.5) * if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let p = SaddleProblem::new(
        ProxFunction::OriginIndicator,
        ProxFunction::L1 { weight: 1e-6 },
        grad_least_squares(LinearOperator::diagonal(diag), b),
        LinearOperator::zero(d, 1),
    )
    .unwrap();
    let s = schedule_general(p.lipschitz, p.opnorm_a).unwrap();
    let mut reference = f64::INFINITY;
    run_with(&p, &s, p.zero_state(), 50_000, |st| reference = reference.min(primal_objective(&p, &st.v))).unwrap();
    let opts = RecordOptions {
        reference_objective: Some(reference),
        record_time: false,
        ..RecordOptions::default()
    };
    let out = run(&p, &s, p.zero_state(), 1000, &opts).unwrap();
    let slope = acv::metrics::fit_rate_slope(&out.record, 100, 1000).unwrap();
    assert!(slope <= -1.8, "{slope}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn general_schedule_valid_for_random_constants(l in 1e-3f64..1e4, a in 0.0f64..1e3) {
        let s = schedule_general(l, a).unwrap();
        let r = validate_general(&s, l, a, 100_000);
        prop_assert!(r.passed(), "{:?}", r.first_failure());
        for k in [0usize, 1, 10, 99_999] {
            let p = s.params(k);
            prop_assert!(p.alpha > 0.0 && p.alpha <= 1.0);
        }
    }

    #[test]
    fn sc_primal_schedule_valid_for_random_constants(l in 1e-2f64..1e4, ratio in 1e-4f64..1.0, a in 1e-2f64..1e2) {
        let mu = l * ratio;
        let s = schedule_sc_primal(l, mu, a).unwrap();
        let r = validate_sc(&s, l, mu, a, 100_000);
        prop_assert!(r.passed(), "{:?}", r.first_failure());
    }

    #[test]
    fn sc_smooth_params_valid(l in 0.0f64..1e3, mu_g in 1e-3f64..10.0, mu_f in 1e-3f64..10.0, a in 0.0f64..1e2) {
        let p = schedule_sc_smooth(l, mu_g, mu_f, a).unwrap().params(0);
        prop_assert!(validate_sc_smooth(&p, l, mu_g, mu_f, a).passed());
    }

    #[test]
    fn baseline_params_valid(l in 0.0f64..1e4, a in 1e-3f64..1e3) {
        prop_assert!(validate_general(&condat_vu_book_params(l, a).unwrap(), l, a, 10).passed());
        prop_assert!(validate_general(&pdhg_params(l, a).unwrap(), l, a, 10).passed());
    }

    #[test]
    fn iterates_stay_finite(seed in 0u64..200, mu in prop_oneof![Just(0.0), Just(0.05)]) {
        let p = fused_lasso(seed, mu, false);
        let (_, s) = acv::solver::strongest_acv(&p);
        run_with(&p, &s, p.zero_state(), 200, |st| {
            assert!(st.x.iter().chain(&st.y).chain(&st.v).chain(&st.w).all(|v| v.is_finite()));
        }).unwrap();
    }
}

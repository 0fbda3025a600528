//! The accelerated Condat-Vu iteration and its drivers.
//!
//! Solves `min_x f(Ax) + g(x) + h(x)` through the saddle-point form
//! `min_x max_y <Ax, y> - f*(y) + g(x) + h(x)` using only `prox` of `f*`
//! and `g` and the gradient of `h`.

pub mod schedule;
pub mod tuning;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::functions::{ProxFunction, SmoothFunction};
use crate::linops::LinearOperator;
use crate::metrics::{ConvergenceRecord, Recorder, RecordOptions};
use crate::vecops::all_finite;

pub use schedule::{
    compute_t0, condat_vu_book_params, pdhg_params, schedule_general, schedule_general_with, schedule_sc_dual,
    schedule_sc_dual_with, schedule_sc_primal, schedule_sc_primal_with, schedule_sc_smooth, validate_general,
    validate_sc, validate_sc_smooth, validate_schedule, ParamSchedule, Regime, ScheduleError, StepOverrides, StepParams,
    ValidationReport, Variant,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid step parameters at k={k}: {reason}")]
    InvalidParams { k: usize, reason: String },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("algorithm {algorithm} is not applicable: {reason}")]
    NotApplicable { algorithm: Algorithm, reason: String },
    #[error("step-size tuning failed: {0}")]
    TuningFailed(String),
    #[error("iterates diverged at k={k}")]
    Diverged {
        k: usize,
        /// Last state whose iterates were all finite.
        state: Box<SolverState>,
        /// Rows recorded before the failure.
        record: ConvergenceRecord,
    },
}

/// `min_x max_y <Ax, y> - f*(y) + g(x) + h(x)` with its constants.
#[derive(Debug, Clone)]
pub struct SaddleProblem {
    pub f_conj: ProxFunction,
    pub g: ProxFunction,
    pub h: SmoothFunction,
    pub a: LinearOperator,
    pub lipschitz: f64,
    pub opnorm_a: f64,
    pub mu_g: f64,
    pub mu_fstar: f64,
}

pub const OPNORM_SEED: u64 = 0xacc0;

impl SaddleProblem {
    /// Reads `L`, `mu_g` and `mu_f*` from the functions and bounds `||A||`
    /// from above.
    pub fn new(f_conj: ProxFunction, g: ProxFunction, h: SmoothFunction, a: LinearOperator) -> Result<Self, SolverError> {
        if h.dim() != a.in_dim() {
            return Err(SolverError::Dimension(format!(
                "h acts on R^{} but A maps from R^{}",
                h.dim(),
                a.in_dim()
            )));
        }
        let opnorm_a = a.norm_upper_bound(OPNORM_SEED);
        Ok(SaddleProblem {
            lipschitz: h.lipschitz(),
            mu_g: g.strong_convexity(),
            mu_fstar: f_conj.strong_convexity(),
            opnorm_a,
            f_conj,
            g,
            h,
            a,
        })
    }

    pub fn primal_dim(&self) -> usize {
        self.a.in_dim()
    }

    pub fn dual_dim(&self) -> usize {
        self.a.out_dim()
    }

    /// `f`, recovered as the conjugate of `f*`.
    pub fn f(&self) -> Option<ProxFunction> {
        self.f_conj.conjugate()
    }

    /// True when `f(Ax)` is identically zero.
    pub fn coupling_inert(&self) -> bool {
        self.a.is_zero() || matches!(self.f_conj, ProxFunction::OriginIndicator)
    }

    pub fn zero_state(&self) -> SolverState {
        SolverState::new(vec![0.0; self.primal_dim()], vec![0.0; self.dual_dim()])
    }

    fn check_state(&self, s: &SolverState) -> Result<(), SolverError> {
        let (n, m) = (self.primal_dim(), self.dual_dim());
        for (name, len, want) in [
            ("x", s.x.len(), n),
            ("x_prev", s.x_prev.len(), n),
            ("v", s.v.len(), n),
            ("y", s.y.len(), m),
            ("w", s.w.len(), m),
        ] {
            if len != want {
                return Err(SolverError::Dimension(format!("{name} has length {len}, expected {want}")));
            }
        }
        Ok(())
    }
}

/// Iterate bundle; `v` and `w` are the primal and dual averages.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub k: usize,
}

impl SolverState {
    /// `x_prev = v = x0`, `w = y0`, `k = 0`.
    pub fn new(x0: Vec<f64>, y0: Vec<f64>) -> Self {
        SolverState {
            x_prev: x0.clone(),
            v: x0.clone(),
            w: y0.clone(),
            x: x0,
            y: y0,
            k: 0,
        }
    }

    fn is_finite(&self) -> bool {
        all_finite(&self.x) && all_finite(&self.y) && all_finite(&self.v) && all_finite(&self.w)
    }
}

fn check_params(k: usize, p: &StepParams) -> Result<(), SolverError> {
    let reason = if !(p.gamma > 0.0 && p.gamma.is_finite()) {
        format!("gamma = {} must be positive", p.gamma)
    } else if !(p.tau > 0.0 && p.tau.is_finite()) {
        format!("tau = {} must be positive", p.tau)
    } else if !(p.alpha > 0.0 && p.alpha <= 1.0) {
        format!("alpha = {} must lie in (0, 1]", p.alpha)
    } else if !(p.theta >= 0.0 && p.theta.is_finite()) {
        format!("theta = {} must be non-negative", p.theta)
    } else {
        return Ok(());
    };
    Err(SolverError::InvalidParams { k, reason })
}

/// One iteration:
///
/// ```text
/// u  = alpha x + (1 - alpha) v
/// y+ = prox_{gamma f*}(y + gamma A (x + theta (x - x_prev)))
/// x+ = prox_{tau g}(x - tau grad h(u) - tau A^T y+)
/// v+ = alpha x+ + (1 - alpha) v
/// w+ = alpha y+ + (1 - alpha) w
/// ```
pub fn acv_step(problem: &SaddleProblem, state: &SolverState, params: &StepParams) -> Result<SolverState, SolverError> {
    problem.check_state(state)?;
    check_params(state.k, params)?;
    let next = step_unchecked(problem, state, params);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(SolverError::Diverged {
            k: state.k,
            state: Box::new(state.clone()),
            record: ConvergenceRecord::default(),
        })
    }
}

fn step_unchecked(problem: &SaddleProblem, s: &SolverState, p: &StepParams) -> SolverState {
    let (n, m) = (problem.primal_dim(), problem.dual_dim());
    let StepParams {
        gamma,
        tau,
        alpha,
        theta,
    } = *p;

    let u: Vec<f64> = s.x.iter().zip(&s.v).map(|(x, v)| alpha * x + (1.0 - alpha) * v).collect();

    let xbar: Vec<f64> = s.x.iter().zip(&s.x_prev).map(|(x, xp)| x + theta * (x - xp)).collect();
    let mut ax = vec![0.0; m];
    problem.a.apply_into(&xbar, &mut ax);
    let dual_arg: Vec<f64> = s.y.iter().zip(&ax).map(|(y, a)| y + gamma * a).collect();
    let mut y = vec![0.0; m];
    problem.f_conj.prox_into(&dual_arg, gamma, &mut y);

    let mut grad = vec![0.0; n];
    problem.h.gradient_into(&u, &mut grad);
    let mut aty = vec![0.0; n];
    problem.a.adjoint_into(&y, &mut aty);
    let primal_arg: Vec<f64> = (0..n).map(|i| s.x[i] - tau * grad[i] - tau * aty[i]).collect();
    let mut x = vec![0.0; n];
    problem.g.prox_into(&primal_arg, tau, &mut x);

    let v = x.iter().zip(&s.v).map(|(x, v)| alpha * x + (1.0 - alpha) * v).collect();
    let w = y.iter().zip(&s.w).map(|(y, w)| alpha * y + (1.0 - alpha) * w).collect();

    SolverState {
        x_prev: s.x.clone(),
        x,
        y,
        v,
        w,
        k: s.k + 1,
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: SolverState,
    pub record: ConvergenceRecord,
}

/// Runs `t_max` iterations from `init`, recording metrics per `options`.
///
/// Two-phase schedules restart the extrapolation at the phase boundary
/// (`x_prev := x`). Wall time covers the iteration only.
pub fn run(
    problem: &SaddleProblem,
    schedule: &ParamSchedule,
    init: SolverState,
    t_max: usize,
    options: &RecordOptions,
) -> Result<RunOutput, SolverError> {
    let mut recorder = Recorder::new(problem, options);
    let mut elapsed = 0.0;
    let state = drive(problem, schedule, init, t_max, |state, step_secs| {
        elapsed += step_secs;
        recorder.observe(state, elapsed)
    })
    .map_err(|e| match e {
        SolverError::Diverged { k, state, .. } => SolverError::Diverged {
            k,
            state,
            record: recorder.record().clone(),
        },
        other => other,
    })?;
    Ok(RunOutput {
        state,
        record: recorder.into_record(),
    })
}

/// Like [`run`] but hands every new state to `on_step` instead of recording.
pub fn run_with<F>(
    problem: &SaddleProblem,
    schedule: &ParamSchedule,
    init: SolverState,
    t_max: usize,
    mut on_step: F,
) -> Result<SolverState, SolverError>
where
    F: FnMut(&SolverState),
{
    drive(problem, schedule, init, t_max, |s, _| {
        on_step(s);
        true
    })
}

// `observe` returning false marks the state as diverged (e.g. a non-finite
// objective).
fn drive<F>(
    problem: &SaddleProblem,
    schedule: &ParamSchedule,
    init: SolverState,
    t_max: usize,
    mut observe: F,
) -> Result<SolverState, SolverError>
where
    F: FnMut(&SolverState, f64) -> bool,
{
    problem.check_state(&init)?;
    let mut state = init;
    for _ in 0..t_max {
        let k = state.k;
        let params = schedule.params(k);
        check_params(k, &params)?;
        let started = Instant::now();
        if schedule.is_restart(k) {
            state.x_prev.clone_from(&state.x);
        }
        let next = step_unchecked(problem, &state, &params);
        let secs = started.elapsed().as_secs_f64();
        if !next.is_finite() || !observe(&next, secs) {
            return Err(SolverError::Diverged {
                k,
                state: Box::new(state),
                record: ConvergenceRecord::default(),
            });
        }
        state = next;
    }
    Ok(state)
}

/// Algorithms selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    AcvGeneral,
    AcvSc,
    AcvScDual,
    AcvScSmooth,
    CvBook,
    CvTuned,
    Apgd,
    Pdhg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::AcvGeneral,
        Algorithm::AcvSc,
        Algorithm::AcvScDual,
        Algorithm::AcvScSmooth,
        Algorithm::CvBook,
        Algorithm::CvTuned,
        Algorithm::Apgd,
        Algorithm::Pdhg,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::AcvGeneral => "acv-general",
            Algorithm::AcvSc => "acv-sc",
            Algorithm::AcvScDual => "acv-sc-dual",
            Algorithm::AcvScSmooth => "acv-sc-smooth",
            Algorithm::CvBook => "cv-book",
            Algorithm::CvTuned => "cv-tuned",
            Algorithm::Apgd => "apgd",
            Algorithm::Pdhg => "pdhg",
        }
    }

    /// Builds the schedule for `problem`. `cv-tuned` needs a grid search and
    /// is handled by [`tuning::tune_cv`].
    pub fn schedule(&self, problem: &SaddleProblem) -> Result<ParamSchedule, SolverError> {
        self.schedule_with(problem, Variant::Shipped)
    }

    pub fn schedule_with(&self, problem: &SaddleProblem, variant: Variant) -> Result<ParamSchedule, SolverError> {
        let p = problem;
        let not_applicable = |reason: &str| SolverError::NotApplicable {
            algorithm: *self,
            reason: reason.to_string(),
        };
        let s = match self {
            Algorithm::AcvGeneral => schedule_general_with(p.lipschitz, p.opnorm_a, variant)?,
            Algorithm::AcvSc => {
                if p.mu_g <= 0.0 {
                    return Err(not_applicable("g is not strongly convex (mu_g = 0)"));
                }
                schedule_sc_primal_with(p.lipschitz, p.mu_g, p.opnorm_a, variant, None)?
            }
            Algorithm::AcvScDual => {
                if p.mu_fstar <= 0.0 {
                    return Err(not_applicable("f* is not strongly convex (mu_f* = 0)"));
                }
                schedule_sc_dual_with(p.lipschitz, p.mu_fstar, p.opnorm_a, variant, None)?
            }
            Algorithm::AcvScSmooth => {
                if p.mu_g <= 0.0 {
                    return Err(not_applicable("g is not strongly convex (mu_g = 0)"));
                }
                if p.mu_fstar <= 0.0 {
                    return Err(not_applicable("f* is not strongly convex (mu_f* = 0)"));
                }
                schedule_sc_smooth(p.lipschitz, p.mu_g, p.mu_fstar, p.opnorm_a)?
            }
            Algorithm::CvBook => condat_vu_book_params(p.lipschitz, p.opnorm_a)?,
            Algorithm::Pdhg => pdhg_params(p.lipschitz, p.opnorm_a)?,
            Algorithm::Apgd => {
                if !p.coupling_inert() {
                    return Err(not_applicable("f(Ax) is not identically zero"));
                }
                schedule_general(p.lipschitz, 0.0)?
            }
            Algorithm::CvTuned => return Err(not_applicable("requires a grid search")),
        };
        Ok(s)
    }

    /// Runs the validator matching this algorithm's schedule.
    pub fn validate(&self, problem: &SaddleProblem, schedule: &ParamSchedule, horizon: usize) -> ValidationReport {
        let p = problem;
        let opnorm = if *self == Algorithm::Apgd { 0.0 } else { p.opnorm_a };
        validate_schedule(schedule, p.lipschitz, p.mu_g, p.mu_fstar, opnorm, horizon)
    }
}

/// Schedule of the most specialised ACV variant applicable to `problem`
/// (smooth, then primal, then dual strong convexity, then general).
pub fn strongest_acv(problem: &SaddleProblem) -> (Algorithm, ParamSchedule) {
    for alg in [Algorithm::AcvScSmooth, Algorithm::AcvSc, Algorithm::AcvScDual] {
        if let Ok(s) = alg.schedule(problem) {
            return (alg, s);
        }
    }
    let s = match Algorithm::AcvGeneral.schedule(problem) {
        Ok(s) => s,
        Err(_) => ParamSchedule::constant(
            Regime::General,
            StepParams {
                gamma: 1.0,
                tau: 1.0,
                alpha: 1.0,
                theta: 1.0,
            },
        ),
    };
    (Algorithm::AcvGeneral, s)
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown algorithm '{0}' (expected one of acv-general, acv-sc, acv-sc-dual, acv-sc-smooth, cv-book, cv-tuned, apgd, pdhg)")]
pub struct UnknownAlgorithm(pub String);

impl FromStr for Algorithm {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| UnknownAlgorithm(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::grad_least_squares;
    use crate::linops::DenseMatrix;

    fn lasso() -> SaddleProblem {
        let w = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![2.0, 0.0]]).unwrap();
        let h = grad_least_squares(LinearOperator::dense(w), vec![1.0, 0.0, -1.0]);
        SaddleProblem::new(
            ProxFunction::LinfBall { radius: 0.2 },
            ProxFunction::Zero,
            h,
            LinearOperator::identity(2),
        )
        .unwrap()
    }

    #[test]
    fn fixed_point_without_driving_terms() {
        let p = SaddleProblem::new(
            ProxFunction::OriginIndicator,
            ProxFunction::Zero,
            SmoothFunction::Zero { dim: 3 },
            LinearOperator::zero(3, 2),
        )
        .unwrap();
        let s = SolverState::new(vec![1.0, -2.0, 3.0], vec![0.0; 2]);
        let params = StepParams {
            gamma: 1.0,
            tau: 0.5,
            alpha: 0.3,
            theta: 1.0,
        };
        let next = acv_step(&p, &s, &params).unwrap();
        assert_eq!(next.x, s.x);
        assert_eq!(next.k, 1);
        assert_eq!(next.x_prev, s.x);
    }

    #[test]
    fn rejects_bad_params_and_dims() {
        let p = lasso();
        let s = p.zero_state();
        let bad = StepParams {
            gamma: 1.0,
            tau: 1.0,
            alpha: 1.5,
            theta: 1.0,
        };
        assert!(matches!(acv_step(&p, &s, &bad), Err(SolverError::InvalidParams { .. })));
        let wrong = SolverState::new(vec![0.0; 3], vec![0.0; 2]);
        let ok = StepParams { alpha: 1.0, ..bad };
        assert!(matches!(acv_step(&p, &wrong, &ok), Err(SolverError::Dimension(_))));
    }

    #[test]
    fn divergence_keeps_last_finite_state() {
        let p = lasso();
        let s = ParamSchedule::constant(
            Regime::CondatVuBaseline,
            StepParams {
                gamma: 1.0,
                tau: 50.0,
                alpha: 1.0,
                theta: 1.0,
            },
        );
        match run_with(&p, &s, p.zero_state(), 10_000, |_| {}) {
            Err(SolverError::Diverged { k, state, .. }) => {
                assert_eq!(state.k, k);
                assert!(state.is_finite());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_iterations_returns_init() {
        let p = lasso();
        let s = Algorithm::CvBook.schedule(&p).unwrap();
        let init = SolverState::new(vec![0.5, 0.5], vec![0.1, 0.1]);
        let out = run_with(&p, &s, init.clone(), 0, |_| {}).unwrap();
        assert_eq!(out, init);
    }

    #[test]
    fn restart_resets_extrapolation() {
        let p = SaddleProblem::new(
            ProxFunction::LinfBall { radius: 1.0 },
            ProxFunction::NonNegPlusL2 { mu: 1.0 },
            grad_least_squares(LinearOperator::identity(2), vec![1.0, 2.0]),
            LinearOperator::identity(2),
        )
        .unwrap();
        let sched = Algorithm::AcvSc.schedule(&p).unwrap();
        let t0 = sched.warmup_t0().unwrap();
        let mut before = None;
        let mut seen = Vec::new();
        run_with(&p, &sched, p.zero_state(), t0 + 1, |s| {
            if s.k == t0 {
                before = Some(s.clone());
            }
            seen.push(s.clone());
        })
        .unwrap();
        let at_t0 = before.unwrap();
        let mut manual = at_t0.clone();
        manual.x_prev = manual.x.clone();
        let expected = acv_step(&p, &manual, &sched.params(t0)).unwrap();
        assert_eq!(seen.last().unwrap(), &expected);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("alggorithm".parse::<Algorithm>().is_err());
    }

    #[test]
    fn applicability() {
        let p = lasso();
        assert!(matches!(
            Algorithm::Apgd.schedule(&p),
            Err(SolverError::NotApplicable { .. })
        ));
        assert!(Algorithm::AcvSc.schedule(&p).is_err());
        let (alg, _) = strongest_acv(&p);
        assert_eq!(alg, Algorithm::AcvGeneral);
    }
}

//! Grid search for Condat-Vu step sizes.
//!
//! Two grids are supported: a primal grid `i * 10^-j * tau_acc`
//! (`i = 1..=10`) where `tau_acc` is the first primal step of the strongest
//! applicable ACV schedule, and a dual grid scaling the book `gamma` by
//! `10^j`, `j = -5..=5`.

use std::str::FromStr;

use thiserror::Error;

use super::{condat_vu_book_params, run_with, strongest_acv, ParamSchedule, Regime, SaddleProblem, SolverError, SolverState, StepParams};
use crate::metrics::primal_objective;

/// Smallest primal grid depth.
pub const MIN_PRIMAL_DEPTH: u32 = 2;
/// Dual grid exponents `-DUAL_RANGE..=DUAL_RANGE`.
pub const DUAL_RANGE: i32 = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// `i * 10^-j * tau_acc` with the depth chosen to reach below the book step.
    Primal,
    /// Book parameters with `gamma * 10^j`, `j = -5..=5`.
    Dual,
    PrimalMultipliers(Vec<f64>),
    DualExponents(Vec<i32>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid grid '{0}' (expected primal, dual, primal:<m1,m2,..> or dual:<j1,j2,..>)")]
pub struct GridParseError(pub String);

impl FromStr for GridSpec {
    type Err = GridParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || GridParseError(s.to_string());
        let s = s.trim();
        match s {
            "primal" => return Ok(GridSpec::Primal),
            "dual" => return Ok(GridSpec::Dual),
            _ => {}
        }
        let (mode, list) = s.split_once(':').ok_or_else(err)?;
        let items: Vec<&str> = list.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
        if items.is_empty() {
            return Err(err());
        }
        match mode.trim() {
            "primal" => {
                let m = items
                    .iter()
                    .map(|t| t.parse::<f64>().ok().filter(|v| *v > 0.0 && v.is_finite()))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(err)?;
                Ok(GridSpec::PrimalMultipliers(m))
            }
            "dual" => {
                let j = items
                    .iter()
                    .map(|t| t.parse::<i32>().ok())
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(err)?;
                Ok(GridSpec::DualExponents(j))
            }
            _ => Err(err()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Primal grid: multiple of `tau_acc`; dual grid: factor on the book `gamma`.
    pub multiplier: f64,
    pub params: StepParams,
    /// Best objective seen over the run; `None` when the run diverged.
    pub best_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: Candidate,
    pub candidates: Vec<Candidate>,
    /// Reference step `tau_acc` (primal grids) or book `gamma` (dual grids).
    pub base_step: f64,
}

impl TuneResult {
    pub fn schedule(&self) -> ParamSchedule {
        ParamSchedule::constant(Regime::CondatVuBaseline, self.best.params)
    }
}

/// `gamma` paired with a primal step `tau` on the primal grid.
pub fn dual_step_for(tau: f64, lipschitz: f64, opnorm_a: f64) -> Option<f64> {
    if opnorm_a == 0.0 {
        return Some(1.0);
    }
    let g = 0.5 * (1.0 / tau - lipschitz / 2.0) / (opnorm_a * opnorm_a);
    (g > 0.0 && g.is_finite()).then_some(g)
}

/// Default primal multipliers reaching below `book_tau / tau_acc`.
pub fn primal_multipliers(tau_acc: f64, book_tau: f64) -> Vec<f64> {
    let mut depth = MIN_PRIMAL_DEPTH;
    while depth < 30 && 10f64.powi(-(depth as i32)) * tau_acc > book_tau {
        depth += 1;
    }
    let mut out: Vec<f64> = Vec::new();
    for j in 0..=depth {
        for i in 1..=10 {
            let m = i as f64 * 10f64.powi(-(j as i32));
            if !out.iter().any(|o| (o - m).abs() <= 1e-12 * m) {
                out.push(m);
            }
        }
    }
    out
}

fn candidate_params(problem: &SaddleProblem, grid: &GridSpec) -> Result<(f64, Vec<(f64, StepParams)>), SolverError> {
    let book = condat_vu_book_params(problem.lipschitz, problem.opnorm_a)?.params(0);
    let cv = |gamma: f64, tau: f64| StepParams {
        gamma,
        tau,
        alpha: 1.0,
        theta: 1.0,
    };
    match grid {
        GridSpec::Primal | GridSpec::PrimalMultipliers(_) => {
            let tau_acc = strongest_acv(problem).1.params(0).tau;
            let mults = match grid {
                GridSpec::PrimalMultipliers(m) => m.clone(),
                _ => primal_multipliers(tau_acc, book.tau),
            };
            let list = mults
                .into_iter()
                .map(|m| {
                    let tau = m * tau_acc;
                    let gamma = dual_step_for(tau, problem.lipschitz, problem.opnorm_a).unwrap_or(book.gamma);
                    (m, cv(gamma, tau))
                })
                .collect();
            Ok((tau_acc, list))
        }
        GridSpec::Dual | GridSpec::DualExponents(_) => {
            let exps: Vec<i32> = match grid {
                GridSpec::DualExponents(j) => j.clone(),
                _ => (-DUAL_RANGE..=DUAL_RANGE).collect(),
            };
            let list = exps
                .into_iter()
                .map(|j| {
                    let m = 10f64.powi(j);
                    (m, cv(book.gamma * m, book.tau))
                })
                .collect();
            Ok((book.gamma, list))
        }
    }
}

/// Best objective over an `iters`-step Condat-Vu run, or `None` if the run
/// diverged (non-finite values, or final objective above the starting one).
pub fn evaluate(problem: &SaddleProblem, params: StepParams, init: &SolverState, iters: usize) -> Option<f64> {
    let f0 = primal_objective(problem, &init.v);
    let schedule = ParamSchedule::constant(Regime::CondatVuBaseline, params);
    let mut best = f64::INFINITY;
    let mut last = f0;
    let res = run_with(problem, &schedule, init.clone(), iters, |s| {
        last = primal_objective(problem, &s.v);
        if last < best {
            best = last;
        }
    });
    if res.is_err() || !last.is_finite() || last > f0 {
        return None;
    }
    Some(best.min(f0))
}

/// Runs every grid point for `iters` iterations and keeps the one with the
/// smallest best-so-far objective; ties go to the larger step.
pub fn tune_cv(problem: &SaddleProblem, grid: &GridSpec, init: &SolverState, iters: usize) -> Result<TuneResult, SolverError> {
    let (base_step, list) = candidate_params(problem, grid)?;
    if list.is_empty() {
        return Err(SolverError::TuningFailed("empty grid".into()));
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(list.len());
    let mut scores: Vec<Option<f64>> = vec![None; list.len()];
    std::thread::scope(|scope| {
        let chunk = list.len().div_ceil(workers);
        for (items, out) in list.chunks(chunk).zip(scores.chunks_mut(chunk)) {
            scope.spawn(move || {
                for ((_, p), o) in items.iter().zip(out.iter_mut()) {
                    *o = evaluate(problem, *p, init, iters);
                }
            });
        }
    });
    let candidates: Vec<Candidate> = list
        .into_iter()
        .zip(scores)
        .map(|((multiplier, params), best_objective)| Candidate {
            multiplier,
            params,
            best_objective,
        })
        .collect();

    let step = |c: &Candidate| match grid {
        GridSpec::Dual | GridSpec::DualExponents(_) => c.params.gamma,
        _ => c.params.tau,
    };
    let mut best: Option<&Candidate> = None;
    for c in &candidates {
        let Some(obj) = c.best_objective else { continue };
        best = match best {
            None => Some(c),
            Some(b) => {
                let bo = b.best_objective.unwrap();
                if obj < bo || (obj == bo && step(c) > step(b)) {
                    Some(c)
                } else {
                    Some(b)
                }
            }
        };
    }
    let best = best
        .cloned()
        .ok_or_else(|| SolverError::TuningFailed("every grid point diverged".into()))?;
    Ok(TuneResult {
        best,
        candidates,
        base_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{grad_least_squares, ProxFunction};
    use crate::linops::{DenseMatrix, LinearOperator};

    fn problem() -> SaddleProblem {
        let w = DenseMatrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        SaddleProblem::new(
            ProxFunction::LinfBall { radius: 0.1 },
            ProxFunction::Zero,
            grad_least_squares(LinearOperator::dense(w), vec![1.0, -1.0, 0.5]),
            LinearOperator::pair_difference(vec![(0, 1)], 2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn parses_grids() {
        assert_eq!("primal".parse::<GridSpec>().unwrap(), GridSpec::Primal);
        assert_eq!(
            "dual:-1,0,2".parse::<GridSpec>().unwrap(),
            GridSpec::DualExponents(vec![-1, 0, 2])
        );
        assert_eq!(
            "primal:0.5, 1".parse::<GridSpec>().unwrap(),
            GridSpec::PrimalMultipliers(vec![0.5, 1.0])
        );
        assert!("primal:".parse::<GridSpec>().is_err());
        assert!("sideways".parse::<GridSpec>().is_err());
    }

    #[test]
    fn multipliers_reach_below_book() {
        let m = primal_multipliers(1.0, 1e-4);
        let min = m.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min <= 1e-4);
        let m = primal_multipliers(1.0, 0.5);
        assert_eq!(m.len(), 28);
    }

    #[test]
    fn single_point_grid() {
        let p = problem();
        let r = tune_cv(&p, &GridSpec::DualExponents(vec![0]), &p.zero_state(), 50).unwrap();
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.best.multiplier, 1.0);
    }

    #[test]
    fn dual_grid_no_worse_than_book() {
        let p = problem();
        let init = p.zero_state();
        let r = tune_cv(&p, &GridSpec::Dual, &init, 200).unwrap();
        let book = condat_vu_book_params(p.lipschitz, p.opnorm_a).unwrap().params(0);
        let book_obj = evaluate(&p, book, &init, 200).unwrap();
        assert!(r.best.best_objective.unwrap() <= book_obj);
    }

    #[test]
    fn all_diverged_is_an_error() {
        let p = problem();
        let r = tune_cv(&p, &GridSpec::PrimalMultipliers(vec![1e6]), &p.zero_state(), 500);
        assert!(matches!(r, Err(SolverError::TuningFailed(_))));
    }
}

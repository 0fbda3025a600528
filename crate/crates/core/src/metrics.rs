//! Objective and Lagrangian evaluation, partial primal-dual gaps, reference
//! tracking and rate fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::functions::{ProxFunction, SmoothFunction};
use crate::solver::{SaddleProblem, SolverState};
use crate::vecops::{dist, dot, norm};

/// Negative gaps below this are reported as an under-converged reference.
pub const NEGATIVE_GAP_WARN: f64 = -1e-12;
/// Stopping tolerance of the inner minimisation in [`pd_gap_box`].
pub const INNER_TOL: f64 = 1e-8;
const INNER_MAX_ITERS: usize = 20_000;
const BISECTION_ITERS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("window [{0}, {1}] holds fewer than two records")]
    TooFewPoints(usize, usize),
    #[error("gap at k={0} is not positive ({1})")]
    NonPositiveGap(usize, f64),
    #[error("record has no reference gaps")]
    NoReference,
}

/// `<Ax, y> - f*(y) + g(x) + h(x)`.
pub fn lagrangian(problem: &SaddleProblem, x: &[f64], y: &[f64]) -> f64 {
    let ax = problem.a.apply(x).expect("x has the primal dimension");
    dot(&ax, y) - problem.f_conj.value(y) + problem.g.value(x) + problem.h.value(x)
}

/// `F(x) = f(Ax) + g(x) + h(x)` with `f` the conjugate of `f*`.
pub fn primal_objective(problem: &SaddleProblem, x: &[f64]) -> f64 {
    let ax = problem.a.apply(x).expect("x has the primal dimension");
    problem.f_conj.conjugate_value(&ax) + problem.g.value(x) + problem.h.value(x)
}

/// `max(value - reference, 0)`; warns when the clamp hides a real negative.
pub fn gap_vs_reference(value: f64, reference: f64) -> f64 {
    let (gap, below) = clamped_gap(value, reference);
    if below {
        warn_below(value, reference);
    }
    gap
}

fn clamped_gap(value: f64, reference: f64) -> (f64, bool) {
    let gap = value - reference;
    (gap.max(0.0), gap < NEGATIVE_GAP_WARN * reference.abs().max(1.0))
}

fn warn_below(value: f64, reference: f64) {
    log::warn!("objective {value:e} is below the reference {reference:e}; reference is not converged");
}

/// Product of l2 balls `B1 x B2` for the partial primal-dual gap.
#[derive(Debug, Clone, PartialEq)]
pub struct GapBox {
    pub primal_center: Vec<f64>,
    pub primal_radius: f64,
    pub dual_center: Vec<f64>,
    pub dual_radius: f64,
}

impl GapBox {
    /// Balls centred at `(x*, y*)` with radii `max(1, 2|x0 - x*|)` and
    /// `max(1, 2|y0 - y*|)`.
    pub fn around_reference(x_star: &[f64], y_star: &[f64], x0: &[f64], y0: &[f64]) -> Self {
        GapBox {
            primal_center: x_star.to_vec(),
            primal_radius: (2.0 * dist(x0, x_star)).max(1.0),
            dual_center: y_star.to_vec(),
            dual_radius: (2.0 * dist(y0, y_star)).max(1.0),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        GapBox {
            primal_radius: self.primal_radius * factor,
            dual_radius: self.dual_radius * factor,
            ..self.clone()
        }
    }

    pub fn contains(&self, x: &[f64], y: &[f64]) -> bool {
        dist(x, &self.primal_center) <= self.primal_radius && dist(y, &self.dual_center) <= self.dual_radius
    }
}

// Minimiser of p(x) - <lin, x> + w/2 |x - z|^2 over |x - center| <= radius,
// via bisection on the ball multiplier nu:
// x(nu) = prox_{p/(w+nu)}((w z + nu center + lin)/(w + nu)).
fn ball_prox(p: &ProxFunction, lin: &[f64], w: f64, z: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    let at = |nu: f64| {
        let q = w + nu;
        let m: Vec<f64> = (0..center.len())
            .map(|i| (w * z[i] + nu * center[i] + lin[i]) / q)
            .collect();
        p.prox(&m, 1.0 / q)
    };
    let outside = |x: &[f64]| dist(x, center) > radius;

    let mut lo = 0.0;
    if w > 0.0 {
        let x0 = at(0.0);
        if !outside(&x0) {
            return x0;
        }
    } else {
        // shrink nu until the point leaves the ball (or the ball is inactive)
        let mut nu = 1.0;
        let mut x = at(nu);
        while !outside(&x) {
            if nu < 1e-300 {
                return x;
            }
            nu *= 1e-3;
            x = at(nu);
        }
        lo = nu;
    }
    let mut hi = (w + norm(lin) / radius).max(1.0);
    let mut x_hi = at(hi);
    let mut grow = 0;
    while outside(&x_hi) && grow < 2000 {
        lo = hi;
        hi *= 4.0;
        x_hi = at(hi);
        grow += 1;
    }
    for _ in 0..BISECTION_ITERS {
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        if mid <= lo || mid >= hi {
            break;
        }
        let x = at(mid);
        if outside(&x) {
            lo = mid;
        } else {
            hi = mid;
            x_hi = x;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    x_hi
}

/// `max_{y' in B2} L(x, y')`, exact up to bisection accuracy.
fn max_over_dual_ball(problem: &SaddleProblem, x: &[f64], y: &[f64], gbox: &GapBox, probes: &[Vec<f64>]) -> f64 {
    let c = problem.a.apply(x).expect("primal dimension");
    let rest = problem.g.value(x) + problem.h.value(x);
    let inner = |yp: &[f64]| dot(&c, yp) - problem.f_conj.value(yp);
    let zeros = vec![0.0; c.len()];
    let y_opt = ball_prox(&problem.f_conj, &c, 0.0, &zeros, &gbox.dual_center, gbox.dual_radius);
    let mut best = inner(&y_opt);
    let mut consider = |cand: &[f64]| {
        if dist(cand, &gbox.dual_center) <= gbox.dual_radius {
            let v = inner(cand);
            if v > best {
                best = v;
            }
        }
    };
    consider(y);
    for p in probes {
        consider(p);
    }
    best + rest
}

/// `min_{x' in B1} L(x', y)`; exact when `h = 0`, accelerated proximal
/// gradient with adaptive restart otherwise.
fn min_over_primal_ball(problem: &SaddleProblem, x: &[f64], y: &[f64], gbox: &GapBox, probes: &[Vec<f64>]) -> f64 {
    let d = problem.a.apply_adjoint(y).expect("dual dimension");
    let fy = problem.f_conj.value(y);
    let phi = |xp: &[f64]| dot(&d, xp) + problem.g.value(xp) + problem.h.value(xp);
    let (c, r) = (&gbox.primal_center, gbox.primal_radius);
    let neg_d: Vec<f64> = d.iter().map(|v| -v).collect();

    let solved = match &problem.h {
        SmoothFunction::Zero { .. } => ball_prox(&problem.g, &neg_d, 0.0, c, c, r),
        h => {
            let step = 1.0 / h.lipschitz().max(f64::MIN_POSITIVE);
            let zeros = vec![0.0; c.len()];
            let mut xk = if dist(x, c) <= r {
                x.to_vec()
            } else {
                ball_prox(&problem.g, &zeros, 1.0, c, c, r)
            };
            let mut zk = xk.clone();
            let mut t: f64 = 1.0;
            let mut fk = phi(&xk);
            for _ in 0..INNER_MAX_ITERS {
                let grad = h.gradient(&zk);
                let target: Vec<f64> = (0..zk.len()).map(|i| zk[i] - step * (grad[i] + d[i])).collect();
                let xn = ball_prox(&problem.g, &zeros, 1.0 / step, &target, c, r);
                let fnew = phi(&xn);
                let moved = dist(&xn, &xk);
                if fnew > fk {
                    if t == 1.0 {
                        break;
                    }
                    // restart momentum from the last accepted point
                    t = 1.0;
                    zk = xk.clone();
                    continue;
                }
                let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                zk = (0..xn.len()).map(|i| xn[i] + (t - 1.0) / tn * (xn[i] - xk[i])).collect();
                t = tn;
                xk = xn;
                fk = fnew;
                if moved <= INNER_TOL * (1.0 + norm(&xk)) {
                    break;
                }
            }
            xk
        }
    };
    let mut best = phi(&solved);
    let mut consider = |cand: &[f64]| {
        if dist(cand, c) <= r {
            let v = phi(cand);
            if v < best {
                best = v;
            }
        }
    };
    consider(x);
    for p in probes {
        consider(p);
    }
    best - fy
}

fn ball_probes(center: &[f64], radius: f64, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let dir: Vec<f64> = (0..center.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let n = norm(&dir).max(f64::MIN_POSITIVE);
            let s = radius * rng.random::<f64>();
            center.iter().zip(&dir).map(|(c, d)| c + s * d / n).collect()
        })
        .collect()
}

/// Partial primal-dual gap `max_{y' in B2} L(x, y') - min_{x' in B1} L(x', y)`.
///
/// The dual maximisation is solved exactly through the ball multiplier. The
/// primal minimisation is solved exactly when `h = 0` and to `INNER_TOL`
/// otherwise. `(x, y)` and `n_probe` random points of each ball are added as
/// candidates, so the result is non-negative whenever `(x, y)` lies in the box.
pub fn pd_gap_box(problem: &SaddleProblem, x: &[f64], y: &[f64], gbox: &GapBox, n_probe: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dual_probes = ball_probes(&gbox.dual_center, gbox.dual_radius, n_probe, &mut rng);
    let primal_probes = ball_probes(&gbox.primal_center, gbox.primal_radius, n_probe, &mut rng);
    max_over_dual_ball(problem, x, y, gbox, &dual_probes) - min_over_primal_ball(problem, x, y, gbox, &primal_probes)
}

/// One logged iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub k: usize,
    pub wall_time_s: f64,
    pub objective: f64,
    pub gap_ref: Option<f64>,
    pub pd_gap: Option<f64>,
    pub iterate_norm: f64,
}

/// Rows with strictly increasing `k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceRecord {
    rows: Vec<RecordRow>,
}

impl ConvergenceRecord {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics when `row.k` does not exceed the last recorded `k`.
    pub fn push(&mut self, row: RecordRow) {
        if let Some(last) = self.rows.last() {
            assert!(row.k > last.k, "record iterations must increase ({} after {})", row.k, last.k);
        }
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[RecordRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&RecordRow> {
        self.rows.last()
    }

    /// Best-so-far reference gaps as `(k, gap)`.
    pub fn gap_envelope(&self) -> Vec<(usize, f64)> {
        let mut best = f64::INFINITY;
        self.rows
            .iter()
            .filter_map(|r| {
                r.gap_ref.map(|g| {
                    best = best.min(g);
                    (r.k, best)
                })
            })
            .collect()
    }

    /// Best reference gap at or before iteration `k`.
    pub fn best_gap_at(&self, k: usize) -> Option<f64> {
        self.gap_envelope()
            .into_iter()
            .take_while(|(kk, _)| *kk <= k)
            .last()
            .map(|(_, g)| g)
    }

    /// First logged iteration whose reference gap is at most `threshold`.
    pub fn iterations_to(&self, threshold: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.gap_ref.is_some_and(|g| g <= threshold))
            .map(|r| r.k)
    }

    /// Fills `gap_ref` from a reference objective.
    pub fn set_reference(&mut self, reference: f64) {
        let mut lowest = None;
        for r in &mut self.rows {
            let (gap, below) = clamped_gap(r.objective, reference);
            if below {
                lowest = Some(r.objective.min(lowest.unwrap_or(f64::INFINITY)));
            }
            r.gap_ref = Some(gap);
        }
        if let Some(v) = lowest {
            warn_below(v, reference);
        }
    }
}

fn window(record: &ConvergenceRecord, k_lo: usize, k_hi: usize) -> Result<Vec<(f64, f64)>, MetricsError> {
    let env = record.gap_envelope();
    if env.is_empty() {
        return Err(MetricsError::NoReference);
    }
    let pts: Vec<(usize, f64)> = env.into_iter().filter(|(k, _)| *k >= k_lo && *k <= k_hi).collect();
    if pts.len() < 2 {
        return Err(MetricsError::TooFewPoints(k_lo, k_hi));
    }
    pts.iter()
        .map(|&(k, g)| {
            if g > 0.0 {
                Ok((k as f64, g.ln()))
            } else {
                Err(MetricsError::NonPositiveGap(k, g))
            }
        })
        .collect()
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Least-squares slope of `log gap` against `log k` over the best-so-far
/// envelope restricted to `[k_lo, k_hi]`.
pub fn fit_rate_slope(record: &ConvergenceRecord, k_lo: usize, k_hi: usize) -> Result<f64, MetricsError> {
    let pts: Vec<(f64, f64)> = window(record, k_lo, k_hi)?
        .into_iter()
        .map(|(k, lg)| (k.ln(), lg))
        .collect();
    Ok(ls_slope(&pts))
}

/// Per-iteration contraction factor `exp(slope)` of `log gap` against `k`.
pub fn fit_linear_rate(record: &ConvergenceRecord, k_lo: usize, k_hi: usize) -> Result<f64, MetricsError> {
    Ok(ls_slope(&window(record, k_lo, k_hi)?).exp())
}

/// What [`Recorder`] logs.
#[derive(Debug, Clone)]
pub struct RecordOptions {
    /// Log after every `log_every`-th iteration; 0 disables logging.
    pub log_every: usize,
    pub reference_objective: Option<f64>,
    pub gap_box: Option<GapBox>,
    pub pd_gap_probes: usize,
    pub seed: u64,
    /// When false, wall times are written as 0 so repeated runs are identical.
    pub record_time: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        RecordOptions {
            log_every: 1,
            reference_objective: None,
            gap_box: None,
            pd_gap_probes: 0,
            seed: 0,
            record_time: true,
        }
    }
}

/// Builds a [`ConvergenceRecord`] from solver states. Objectives and norms
/// are taken at the primal average `v`; the gap pair is `(v, w)`.
pub struct Recorder<'a> {
    problem: &'a SaddleProblem,
    options: &'a RecordOptions,
    record: ConvergenceRecord,
    warned: bool,
}

impl<'a> Recorder<'a> {
    pub fn new(problem: &'a SaddleProblem, options: &'a RecordOptions) -> Self {
        Recorder {
            problem,
            options,
            record: ConvergenceRecord::new(),
            warned: false,
        }
    }

    /// Logs `state` if due. Returns false when the objective is not finite.
    pub fn observe(&mut self, state: &SolverState, elapsed_s: f64) -> bool {
        let o = self.options;
        if o.log_every == 0 || !state.k.is_multiple_of(o.log_every) {
            return true;
        }
        let objective = primal_objective(self.problem, &state.v);
        if !objective.is_finite() {
            return false;
        }
        let pd_gap = o
            .gap_box
            .as_ref()
            .map(|b| pd_gap_box(self.problem, &state.v, &state.w, b, o.pd_gap_probes, o.seed));
        let gap_ref = o.reference_objective.map(|r| {
            let (gap, below) = clamped_gap(objective, r);
            if below && !self.warned {
                self.warned = true;
                warn_below(objective, r);
            }
            gap
        });
        self.record.push(RecordRow {
            k: state.k,
            wall_time_s: if o.record_time { elapsed_s } else { 0.0 },
            objective,
            gap_ref,
            pd_gap,
            iterate_norm: norm(&state.v),
        });
        true
    }

    pub fn record(&self) -> &ConvergenceRecord {
        &self.record
    }

    pub fn into_record(self) -> ConvergenceRecord {
        self.record
    }
}

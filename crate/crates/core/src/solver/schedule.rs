//! Step-size schedules `(gamma_k, tau_k, alpha_k, theta_k)` and their
//! constraint validators.
//!
//! Four ACV regimes are provided (general, strongly convex primal, strongly
//! convex dual, strongly convex + smooth) together with the classical
//! Condat-Vu baseline (`alpha = theta = 1`). Each regime has a validator
//! that sweeps its feasibility inequalities over a horizon of iterations.

use std::fmt;

use thiserror::Error;

/// Slack allowed on every inequality, relative to the magnitude of its
/// largest term.
pub const VALIDATION_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("invalid schedule constants: {0}")]
    InvalidConstants(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    /// Dual step size.
    pub gamma: f64,
    /// Primal step size.
    pub tau: f64,
    /// Momentum weight in `(0, 1]`.
    pub alpha: f64,
    /// Extrapolation factor.
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    General,
    StronglyConvexPrimal,
    StronglyConvexDual,
    StronglyConvexSmooth,
    CondatVuBaseline,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::General => "general",
            Regime::StronglyConvexPrimal => "strongly-convex-primal",
            Regime::StronglyConvexDual => "strongly-convex-dual",
            Regime::StronglyConvexSmooth => "strongly-convex-smooth",
            Regime::CondatVuBaseline => "condat-vu",
        };
        f.write_str(s)
    }
}

/// Selects between the shipped formulas and the formulas exactly as printed
/// in the original derivation (kept for validator demonstrations only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Shipped,
    PaperLiteral,
}

#[derive(Debug, Clone, PartialEq)]
enum Rule {
    General {
        lipschitz: f64,
        opnorm: f64,
        literal: bool,
    },
    TwoPhase {
        warmup: StepParams,
        t0: usize,
        /// steady growing step: `scale * (j + offset)`
        scale: f64,
        offset: f64,
        mu: f64,
        opnorm_sq: f64,
        /// dual regime: the growing step is `tau`, not `gamma`
        dual: bool,
    },
    Constant(StepParams),
}

/// Fixed values replacing the scheduled ones at every iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepOverrides {
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub theta: Option<f64>,
}

impl StepOverrides {
    pub fn is_empty(&self) -> bool {
        self.gamma.is_none() && self.tau.is_none() && self.alpha.is_none() && self.theta.is_none()
    }

    fn apply(&self, p: StepParams) -> StepParams {
        StepParams {
            gamma: self.gamma.unwrap_or(p.gamma),
            tau: self.tau.unwrap_or(p.tau),
            alpha: self.alpha.unwrap_or(p.alpha),
            theta: self.theta.unwrap_or(p.theta),
        }
    }
}

/// A per-iteration parameter sequence together with its regime.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSchedule {
    regime: Regime,
    rule: Rule,
    overrides: StepOverrides,
}

impl ParamSchedule {
    /// Constant parameters for every `k`.
    pub fn constant(regime: Regime, params: StepParams) -> Self {
        ParamSchedule {
            regime,
            rule: Rule::Constant(params),
            overrides: StepOverrides::default(),
        }
    }

    /// Replaces the selected parameters at every iteration.
    pub fn with_overrides(mut self, overrides: StepOverrides) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Number of warm-up iterations for two-phase schedules.
    pub fn warmup_t0(&self) -> Option<usize> {
        match self.rule {
            Rule::TwoPhase { t0, .. } => Some(t0),
            _ => None,
        }
    }

    /// True at the iteration where the steady phase restarts the
    /// extrapolation (`x_prev := x`).
    pub fn is_restart(&self, k: usize) -> bool {
        matches!(self.rule, Rule::TwoPhase { t0, .. } if t0 > 0 && k == t0)
    }

    pub fn params(&self, k: usize) -> StepParams {
        self.overrides.apply(self.base_params(k))
    }

    fn base_params(&self, k: usize) -> StepParams {
        match &self.rule {
            Rule::Constant(p) => *p,
            Rule::General {
                lipschitz,
                opnorm,
                literal,
            } => {
                let gamma = |k: usize| general_step(k, *lipschitz, *opnorm, *literal);
                let g = gamma(k);
                let theta = if k == 0 { 1.0 } else { gamma(k - 1) / g };
                StepParams {
                    gamma: g,
                    tau: g,
                    alpha: 1.0 / (k as f64 / 2.0 + 1.0),
                    theta,
                }
            }
            Rule::TwoPhase {
                warmup,
                t0,
                scale,
                offset,
                mu,
                opnorm_sq,
                dual,
            } => {
                if k < *t0 {
                    return *warmup;
                }
                let j = k - t0;
                let grow = |j: usize| scale * (j as f64 + offset);
                let s = grow(j);
                let theta = if j == 0 { 1.0 } else { grow(j - 1) / s };
                let other = 1.0 / (2.0 * opnorm_sq * s);
                let alpha = mu / (4.0 * opnorm_sq * s);
                if *dual {
                    StepParams {
                        gamma: other,
                        tau: s,
                        alpha,
                        theta,
                    }
                } else {
                    StepParams {
                        gamma: s,
                        tau: other,
                        alpha,
                        theta,
                    }
                }
            }
        }
    }
}

fn general_step(k: usize, lipschitz: f64, opnorm: f64, literal: bool) -> f64 {
    let kf = k as f64;
    let coupling = if literal { kf } else { kf + 1.0 };
    (kf + 1.0) / (std::f64::consts::SQRT_2 * opnorm * coupling + 4.0 * lipschitz)
}

fn check_nonneg(name: &str, v: f64) -> Result<(), ScheduleError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ScheduleError::InvalidConstants(format!(
            "{name} must be finite and non-negative, got {v}"
        )))
    }
}

fn check_pos(name: &str, v: f64) -> Result<(), ScheduleError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ScheduleError::InvalidConstants(format!(
            "{name} must be finite and positive, got {v}"
        )))
    }
}

/// `alpha_k = 1/(k/2+1)`, `gamma_k = tau_k = (k+1)/(sqrt2 ||A|| (k+1) + 4L)`,
/// `theta_k = gamma_{k-1}/gamma_k` with `theta_0 = 1`.
pub fn schedule_general(lipschitz: f64, opnorm_a: f64) -> Result<ParamSchedule, ScheduleError> {
    schedule_general_with(lipschitz, opnorm_a, Variant::Shipped)
}

/// With [`Variant::PaperLiteral`] the coupling term uses `k` instead of `k+1`.
pub fn schedule_general_with(
    lipschitz: f64,
    opnorm_a: f64,
    variant: Variant,
) -> Result<ParamSchedule, ScheduleError> {
    check_nonneg("L", lipschitz)?;
    check_nonneg("||A||", opnorm_a)?;
    if lipschitz == 0.0 && opnorm_a == 0.0 {
        return Err(ScheduleError::InvalidConstants(
            "L and ||A|| cannot both be zero".into(),
        ));
    }
    Ok(ParamSchedule {
        regime: Regime::General,
        overrides: StepOverrides::default(),
        rule: Rule::General {
            lipschitz,
            opnorm: opnorm_a,
            literal: variant == Variant::PaperLiteral,
        },
    })
}

/// Warm-up length from the smoothness / strong-convexity / coupling balance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WarmupLength {
    pub t0: usize,
    /// Set when `||A||` was zero and replaced by [`OPNORM_FLOOR`].
    pub norm_floored: bool,
}

pub const OPNORM_FLOOR: f64 = 1e-12;

/// `floor( sqrt(L/mu) + max(log(5L/(2||A||^2)), 0) / log(1 + sqrt(mu/(4L))) )`
pub fn compute_t0(lipschitz: f64, mu: f64, opnorm_a: f64) -> Result<WarmupLength, ScheduleError> {
    check_pos("L", lipschitz)?;
    check_pos("mu", mu)?;
    check_nonneg("||A||", opnorm_a)?;
    let norm_floored = opnorm_a < OPNORM_FLOOR;
    let a = opnorm_a.max(OPNORM_FLOOR);
    let head = (lipschitz / mu).sqrt();
    let tail = (5.0 * lipschitz / (2.0 * a * a)).ln().max(0.0) / (mu / (4.0 * lipschitz)).sqrt().ln_1p();
    let total = (head + tail).floor();
    let t0 = if total >= usize::MAX as f64 {
        usize::MAX
    } else {
        total as usize
    };
    Ok(WarmupLength { t0, norm_floored })
}

struct TwoPhaseConstants {
    warmup: StepParams,
    scale: f64,
    offset: f64,
}

// Warm-up: constant (big step, small step, alpha0, theta0); steady: the big
// step grows as `mu (j + offset) / (8 ||A||^2)`.
fn two_phase_constants(lipschitz: f64, mu: f64, opnorm_a: f64, variant: Variant) -> TwoPhaseConstants {
    let a2 = opnorm_a * opnorm_a;
    let r = (mu / (4.0 * lipschitz)).sqrt();
    let big = (mu * lipschitz).sqrt() / (2.0 * a2);
    let small = 1.0 / (mu * lipschitz).sqrt();
    let warmup = StepParams {
        gamma: big,
        tau: small,
        alpha: r,
        theta: 1.0 / (1.0 + r),
    };
    let offset = match variant {
        Variant::Shipped => 4.0 * (lipschitz / mu).sqrt(),
        Variant::PaperLiteral => 4.0 * (mu / lipschitz).sqrt(),
    };
    TwoPhaseConstants {
        warmup,
        scale: mu / (8.0 * a2),
        offset,
    }
}

fn check_two_phase_inputs(lipschitz: f64, mu: f64, opnorm_a: f64, mu_name: &str) -> Result<(), ScheduleError> {
    check_pos("L", lipschitz)?;
    check_pos(mu_name, mu)?;
    check_pos("||A||", opnorm_a)?;
    if mu > 4.0 * lipschitz {
        return Err(ScheduleError::InvalidConstants(format!(
            "{mu_name} = {mu} exceeds 4L = {}; warm-up momentum would exceed 1",
            4.0 * lipschitz
        )));
    }
    Ok(())
}

/// Two-phase schedule for strongly convex `g`.
pub fn schedule_sc_primal(lipschitz: f64, mu_g: f64, opnorm_a: f64) -> Result<ParamSchedule, ScheduleError> {
    schedule_sc_primal_with(lipschitz, mu_g, opnorm_a, Variant::Shipped, None)
}

/// `t0_override` replaces the computed warm-up length (`usize::MAX` keeps the
/// warm-up parameters forever).
pub fn schedule_sc_primal_with(
    lipschitz: f64,
    mu_g: f64,
    opnorm_a: f64,
    variant: Variant,
    t0_override: Option<usize>,
) -> Result<ParamSchedule, ScheduleError> {
    check_two_phase_inputs(lipschitz, mu_g, opnorm_a, "mu_g")?;
    let c = two_phase_constants(lipschitz, mu_g, opnorm_a, variant);
    let t0 = match t0_override {
        Some(t) => t,
        None => compute_t0(lipschitz, mu_g, opnorm_a)?.t0,
    };
    Ok(ParamSchedule {
        regime: Regime::StronglyConvexPrimal,
        overrides: StepOverrides::default(),
        rule: Rule::TwoPhase {
            warmup: c.warmup,
            t0,
            scale: c.scale,
            offset: c.offset,
            mu: mu_g,
            opnorm_sq: opnorm_a * opnorm_a,
            dual: false,
        },
    })
}

/// Two-phase schedule for strongly convex `f*`: the primal construction
/// with `gamma` and `tau` interchanged and `mu_g` replaced by `mu_f*`.
///
/// The primal step must still satisfy `L alpha tau + gamma tau ||A||^2 <= 1`,
/// which under the interchange holds only when `L mu_f* <= 2 ||A||^2`.
pub fn schedule_sc_dual(lipschitz: f64, mu_fstar: f64, opnorm_a: f64) -> Result<ParamSchedule, ScheduleError> {
    schedule_sc_dual_with(lipschitz, mu_fstar, opnorm_a, Variant::Shipped, None)
}

pub fn schedule_sc_dual_with(
    lipschitz: f64,
    mu_fstar: f64,
    opnorm_a: f64,
    variant: Variant,
    t0_override: Option<usize>,
) -> Result<ParamSchedule, ScheduleError> {
    check_two_phase_inputs(lipschitz, mu_fstar, opnorm_a, "mu_f*")?;
    if lipschitz * mu_fstar > 2.0 * opnorm_a * opnorm_a {
        return Err(ScheduleError::InvalidConstants(format!(
            "dual schedule needs L * mu_f* <= 2 ||A||^2 (got {} > {})",
            lipschitz * mu_fstar,
            2.0 * opnorm_a * opnorm_a
        )));
    }
    let c = two_phase_constants(lipschitz, mu_fstar, opnorm_a, variant);
    let warmup = StepParams {
        gamma: c.warmup.tau,
        tau: c.warmup.gamma,
        ..c.warmup
    };
    let t0 = match t0_override {
        Some(t) => t,
        None => compute_t0(lipschitz, mu_fstar, opnorm_a)?.t0,
    };
    Ok(ParamSchedule {
        regime: Regime::StronglyConvexDual,
        overrides: StepOverrides::default(),
        rule: Rule::TwoPhase {
            warmup,
            t0,
            scale: c.scale,
            offset: c.offset,
            mu: mu_fstar,
            opnorm_sq: opnorm_a * opnorm_a,
            dual: true,
        },
    })
}

/// Constant linear-rate parameters for strongly convex `g` and `f*`:
/// with `Lbar = ||A||^2/mu_f* + L`, `gamma = sqrt(mu_g/(mu_f*^2 Lbar))`,
/// `tau = 1/sqrt(Lbar mu_g)`, `alpha = sqrt(mu_g/Lbar)` and
/// `theta = 1/(1 + sqrt(mu_g/Lbar))`.
pub fn schedule_sc_smooth(
    lipschitz: f64,
    mu_g: f64,
    mu_fstar: f64,
    opnorm_a: f64,
) -> Result<ParamSchedule, ScheduleError> {
    check_nonneg("L", lipschitz)?;
    check_pos("mu_g", mu_g)?;
    check_pos("mu_f*", mu_fstar)?;
    check_nonneg("||A||", opnorm_a)?;
    let lbar = opnorm_a * opnorm_a / mu_fstar + lipschitz;
    if lbar <= 0.0 {
        return Err(ScheduleError::InvalidConstants(
            "L and ||A|| cannot both be zero".into(),
        ));
    }
    if mu_g > lbar {
        return Err(ScheduleError::InvalidConstants(format!(
            "mu_g = {mu_g} exceeds the smoothness constant {lbar}; momentum would exceed 1"
        )));
    }
    let alpha = (mu_g / lbar).sqrt();
    let params = StepParams {
        gamma: (mu_g / (mu_fstar * mu_fstar * lbar)).sqrt(),
        tau: (1.0 / (lbar * mu_g)).sqrt(),
        alpha,
        theta: 1.0 / (1.0 + alpha),
    };
    Ok(ParamSchedule::constant(Regime::StronglyConvexSmooth, params))
}

/// Classical Condat-Vu constants: `tau = 1/(L + 2||A||)`,
/// `gamma = (1 - L tau)/(tau ||A||^2)` (or `gamma = 1` when `A = 0`),
/// `alpha = theta = 1`.
pub fn condat_vu_book_params(lipschitz: f64, opnorm_a: f64) -> Result<ParamSchedule, ScheduleError> {
    check_nonneg("L", lipschitz)?;
    check_nonneg("||A||", opnorm_a)?;
    if lipschitz == 0.0 && opnorm_a == 0.0 {
        return Err(ScheduleError::InvalidConstants(
            "L and ||A|| cannot both be zero".into(),
        ));
    }
    let tau = 1.0 / (lipschitz + 2.0 * opnorm_a);
    let gamma = if opnorm_a > 0.0 {
        (1.0 - lipschitz * tau) / (tau * opnorm_a * opnorm_a)
    } else {
        1.0
    };
    Ok(ParamSchedule::constant(
        Regime::CondatVuBaseline,
        StepParams {
            gamma,
            tau,
            alpha: 1.0,
            theta: 1.0,
        },
    ))
}

/// Symmetric Condat-Vu steps `gamma = tau` with `L tau + tau^2 ||A||^2 = 1`;
/// the Chambolle-Pock steps `1/||A||` when `L = 0`.
pub fn pdhg_params(lipschitz: f64, opnorm_a: f64) -> Result<ParamSchedule, ScheduleError> {
    check_nonneg("L", lipschitz)?;
    check_nonneg("||A||", opnorm_a)?;
    let a2 = opnorm_a * opnorm_a;
    let tau = if a2 > 0.0 {
        2.0 / (lipschitz + (lipschitz * lipschitz + 4.0 * a2).sqrt())
    } else if lipschitz > 0.0 {
        1.0 / lipschitz
    } else {
        return Err(ScheduleError::InvalidConstants(
            "L and ||A|| cannot both be zero".into(),
        ));
    };
    Ok(ParamSchedule::constant(
        Regime::CondatVuBaseline,
        StepParams {
            gamma: tau,
            tau,
            alpha: 1.0,
            theta: 1.0,
        },
    ))
}

/// First failure of one named constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub k: usize,
    /// `lhs - rhs` (positive means violated).
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintResult {
    pub name: &'static str,
    pub checked: usize,
    pub first_violation: Option<Violation>,
}

/// Per-constraint pass/fail summary of a sweep over `k = 0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub regime: Regime,
    pub horizon: usize,
    pub constraints: Vec<ConstraintResult>,
}

impl ValidationReport {
    fn new(regime: Regime, horizon: usize) -> Self {
        ValidationReport {
            regime,
            horizon,
            constraints: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.constraints.iter().all(|c| c.first_violation.is_none())
    }

    /// Earliest violation across all constraints.
    pub fn first_failure(&self) -> Option<(&'static str, &Violation)> {
        self.constraints
            .iter()
            .filter_map(|c| c.first_violation.as_ref().map(|v| (c.name, v)))
            .min_by_key(|(_, v)| v.k)
    }

    pub fn constraint(&self, name: &str) -> Option<&ConstraintResult> {
        self.constraints.iter().find(|c| c.name == name)
    }

    /// Records `lhs <= rhs` at iteration `k`.
    fn le(&mut self, name: &'static str, k: usize, lhs: f64, rhs: f64, scale: f64) {
        let ok = lhs.is_finite() && rhs.is_finite() && lhs <= rhs + VALIDATION_SLACK * scale.abs().max(1.0);
        let excess = if lhs.is_finite() && rhs.is_finite() {
            lhs - rhs
        } else {
            f64::INFINITY
        };
        let entry = match self.constraints.iter_mut().find(|c| c.name == name) {
            Some(e) => e,
            None => {
                self.constraints.push(ConstraintResult {
                    name,
                    checked: 0,
                    first_violation: None,
                });
                self.constraints.last_mut().unwrap()
            }
        };
        entry.checked += 1;
        if !ok && entry.first_violation.is_none() {
            entry.first_violation = Some(Violation { k, excess });
        }
    }

    fn equal(&mut self, name: &'static str, k: usize, lhs: f64, rhs: f64) {
        let scale = lhs.abs().max(rhs.abs());
        self.le(name, k, (lhs - rhs).abs(), 0.0, scale);
    }

    fn alpha_range(&mut self, k: usize, alpha: f64) {
        let ok = alpha > 0.0 && alpha <= 1.0;
        self.le("alpha in (0,1]", k, if ok { 0.0 } else { 1.0 }, 0.0, 0.0);
    }

    fn positive_steps(&mut self, k: usize, p: &StepParams) {
        let ok = p.gamma > 0.0 && p.tau > 0.0 && p.gamma.is_finite() && p.tau.is_finite();
        self.le("gamma, tau > 0", k, if ok { 0.0 } else { 1.0 }, 0.0, 0.0);
    }

    pub fn summary_lines(&self) -> Vec<String> {
        self.constraints
            .iter()
            .map(|c| match &c.first_violation {
                None => format!("PASS  {:<40} ({} checks)", c.name, c.checked),
                Some(v) => format!(
                    "FAIL  {:<40} first at k={} (excess {:.3e})",
                    c.name, v.k, v.excess
                ),
            })
            .collect()
    }
}

/// Sweeps the general-regime constraints for `k = 0..=horizon`:
/// momentum telescoping, step-ratio monotonicity, the coupling bound
/// `L alpha_k tau_k + gamma_k tau_k ||A||^2 <= 1` and
/// `theta_k = gamma_{k-1}/gamma_k`.
pub fn validate_general(schedule: &ParamSchedule, lipschitz: f64, opnorm_a: f64, horizon: usize) -> ValidationReport {
    let mut report = ValidationReport::new(schedule.regime(), horizon);
    let a2 = opnorm_a * opnorm_a;
    let mut cur = schedule.params(0);
    for k in 0..=horizon {
        let next = schedule.params(k + 1);
        report.positive_steps(k, &cur);
        report.alpha_range(k, cur.alpha);
        let lhs = next.gamma * (1.0 - next.alpha) / next.alpha;
        let rhs = cur.gamma / cur.alpha;
        report.le("momentum telescoping", k, lhs, rhs, rhs);
        let (lhs, rhs) = (next.gamma / next.tau, cur.gamma / cur.tau);
        report.le("step ratio non-increasing", k, lhs, rhs, rhs);
        let lhs = lipschitz * cur.alpha * cur.tau + cur.gamma * cur.tau * a2;
        report.le("coupling L*a*tau + g*tau*|A|^2 <= 1", k, lhs, 1.0, 1.0);
        if k > 0 {
            let prev = schedule.params(k - 1);
            report.equal("theta_k = gamma_(k-1)/gamma_k", k, cur.theta, prev.gamma / cur.gamma);
        }
        cur = next;
    }
    report
}

/// Sweeps the two-phase constraints. Warm-up iterations are checked against
/// `1/theta <= (1 - L alpha tau)/(gamma tau theta^2 ||A||^2)`,
/// `1/theta <= 1/(1 - alpha)` and `1/theta <= 1 + mu tau`; steady iterations
/// against momentum telescoping, `gamma_{k+1}/tau_{k+1} <= gamma_k (1 + mu tau_k)/tau_k`,
/// `||A||^2/2 + L alpha/(2 gamma) - 1/(2 tau gamma) <= 0` and the
/// extrapolation identity. For the dual regime the roles of `gamma` and
/// `tau` are interchanged and the primal coupling bound is checked as well.
pub fn validate_sc(schedule: &ParamSchedule, lipschitz: f64, mu: f64, opnorm_a: f64, horizon: usize) -> ValidationReport {
    let mut report = ValidationReport::new(schedule.regime(), horizon);
    let dual = schedule.regime() == Regime::StronglyConvexDual;
    let a2 = opnorm_a * opnorm_a;
    let t0 = schedule.warmup_t0().unwrap_or(0);
    // (big, small): the step that grows in the steady phase and its partner
    let split = |p: &StepParams| if dual { (p.tau, p.gamma) } else { (p.gamma, p.tau) };

    for k in 0..=horizon {
        let p = schedule.params(k);
        report.positive_steps(k, &p);
        report.alpha_range(k, p.alpha);
        let (big, small) = split(&p);
        if dual {
            // interchange does not apply to the primal smoothness term
            let lhs = lipschitz * p.alpha * p.tau + p.theta * p.gamma * p.tau * a2;
            report.le("primal coupling L*a*tau + th*g*tau*|A|^2 <= 1", k, lhs, 1.0, 1.0);
        }
        if k < t0 {
            let lhs = p.theta * big * small * a2 + lipschitz * p.alpha * small;
            report.le("warm-up coupling (theta^2 form)", k, lhs, 1.0, 1.0);
            report.le("warm-up 1/theta <= 1/(1-alpha)", k, 1.0 - p.alpha, p.theta, 1.0);
            report.le("warm-up 1/theta <= 1 + mu*step", k, 1.0 / p.theta, 1.0 + mu * small, 1.0 / p.theta);
            continue;
        }
        let q = schedule.params(k + 1);
        let (qbig, qsmall) = split(&q);
        let lhs = qbig * (1.0 - q.alpha) / q.alpha;
        let rhs = big / p.alpha;
        report.le("steady momentum telescoping", k, lhs, rhs, rhs);
        let lhs = qbig / qsmall;
        let rhs = big * (1.0 + mu * small) / small;
        report.le("steady step ratio with strong convexity", k, lhs, rhs, rhs);
        // multiplied through by 2 gamma tau
        let lhs = a2 * big * small + lipschitz * p.alpha * small;
        report.le("steady coupling |A|^2/2 + L*a/(2s) - 1/(2gt) <= 0", k, lhs, 1.0, 1.0);
        if k > t0 {
            let prev = split(&schedule.params(k - 1)).0;
            report.equal("steady theta_k = s_(k-1)/s_k", k, p.theta, prev / big);
        } else {
            report.equal("steady restart theta = 1", k, p.theta, 1.0);
        }
    }
    report
}

/// Checks the four constant-parameter inequalities
/// `1/theta <= 1/(1-alpha)`, `1/theta <= 1 + mu_f* gamma`,
/// `1/theta <= 1 + mu_g tau` and
/// `1/theta <= (1 - L alpha tau)/(gamma tau theta^2 ||A||^2)`.
pub fn validate_sc_smooth(params: &StepParams, lipschitz: f64, mu_g: f64, mu_fstar: f64, opnorm_a: f64) -> ValidationReport {
    let mut report = ValidationReport::new(Regime::StronglyConvexSmooth, 0);
    let p = params;
    let inv = 1.0 / p.theta;
    report.positive_steps(0, p);
    report.alpha_range(0, p.alpha);
    report.le("1/theta <= 1/(1-alpha)", 0, 1.0 - p.alpha, p.theta, 1.0);
    report.le("1/theta <= 1 + mu_f* gamma", 0, inv, 1.0 + mu_fstar * p.gamma, inv);
    report.le("1/theta <= 1 + mu_g tau", 0, inv, 1.0 + mu_g * p.tau, inv);
    // multiplied through by gamma tau theta^2 ||A||^2 >= 0
    let lhs = p.gamma * p.tau * p.theta * opnorm_a * opnorm_a;
    report.le("1/theta <= (1-L a tau)/(g tau th^2 |A|^2)", 0, lhs, 1.0 - lipschitz * p.alpha * p.tau, 1.0);
    report
}

/// The ratio `(1 - L alpha tau)/(gamma tau theta^2 ||A||^2)` bounding the
/// achievable contraction.
pub fn coupling_rate_bound(params: &StepParams, lipschitz: f64, opnorm_a: f64) -> f64 {
    let p = params;
    (1.0 - lipschitz * p.alpha * p.tau) / (p.gamma * p.tau * p.theta * p.theta * opnorm_a * opnorm_a)
}

/// Runs the validator matching the schedule's regime.
pub fn validate_schedule(
    schedule: &ParamSchedule,
    lipschitz: f64,
    mu_g: f64,
    mu_fstar: f64,
    opnorm_a: f64,
    horizon: usize,
) -> ValidationReport {
    match schedule.regime() {
        Regime::General | Regime::CondatVuBaseline => validate_general(schedule, lipschitz, opnorm_a, horizon),
        Regime::StronglyConvexPrimal => validate_sc(schedule, lipschitz, mu_g, opnorm_a, horizon),
        Regime::StronglyConvexDual => validate_sc(schedule, lipschitz, mu_fstar, opnorm_a, horizon),
        Regime::StronglyConvexSmooth => {
            let mut report = validate_sc_smooth(&schedule.params(0), lipschitz, mu_g, mu_fstar, opnorm_a);
            report.horizon = horizon;
            report
        }
    }
}

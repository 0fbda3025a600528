//! Proximal and smooth convex functions.
//!
//! [`ProxFunction`] covers every non-smooth term used by the problem
//! builders (the primal regularizer `g` and the conjugate `f*`). Each one is
//! separable, exposes `prox(z, eta) = argmin_x 1/2 |x - z|^2 + eta f(x)`, a
//! value (with `+inf` outside indicator domains) and, where known, its
//! convex conjugate. [`SmoothFunction`] covers the smooth term `h`.

use crate::linops::LinearOperator;
use crate::vecops::{dot, norm};

/// Points within this distance of an indicator's set count as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// `sgn(z_i) * max(|z_i| - lambda, 0)`
pub fn soft_threshold(z: &[f64], lambda: f64) -> Vec<f64> {
    z.iter().map(|&zi| soft_scalar(zi, lambda)).collect()
}

#[inline]
fn soft_scalar(z: f64, lambda: f64) -> f64 {
    let m = z.abs() - lambda;
    if m > 0.0 {
        m.copysign(z)
    } else {
        0.0
    }
}

/// Prox of `eta * (lambda1*beta*|x|_1 + lambda1*(1-beta)/2 |x|^2)`.
pub fn prox_elastic_net_g(z: &[f64], eta: f64, lambda1: f64, beta: f64) -> Vec<f64> {
    let shrink = 1.0 + eta * lambda1 * (1.0 - beta);
    let thresh = eta * lambda1 * beta / shrink;
    z.iter().map(|&zi| soft_scalar(zi / shrink, thresh)).collect()
}

/// Prox of `eta * f*` with `f*(y) = indicator(|y|_inf <= lambda2) + |y|^2 / (2 lambda2 lambda3)`.
///
/// Scales by `1 / (1 + eta/(lambda2 lambda3))`, then clips to `[-lambda2, lambda2]`.
pub fn prox_huber_conjugate(z: &[f64], eta: f64, lambda2: f64, lambda3: f64) -> Vec<f64> {
    let shrink = 1.0 + eta / (lambda2 * lambda3);
    z.iter()
        .map(|&zi| (zi / shrink).clamp(-lambda2, lambda2))
        .collect()
}

/// Projection onto `{ |y|_inf <= lambda }`; independent of `eta`.
pub fn prox_linf_ball(z: &[f64], _eta: f64, lambda: f64) -> Vec<f64> {
    z.iter().map(|&zi| zi.clamp(-lambda, lambda)).collect()
}

pub fn prox_nonneg(z: &[f64], _eta: f64) -> Vec<f64> {
    z.iter().map(|&zi| zi.max(0.0)).collect()
}

/// Prox of `eta * (indicator(x >= 0) + mu/2 |x|^2)`.
pub fn prox_nonneg_plus_l2(z: &[f64], eta: f64, mu: f64) -> Vec<f64> {
    let shrink = 1.0 + eta * mu;
    z.iter().map(|&zi| zi.max(0.0) / shrink).collect()
}

/// Scalar Huber envelope `min_u |t - u| + lambda3/2 u^2`.
pub fn huber_scalar(t: f64, lambda3: f64) -> f64 {
    let a = t.abs();
    if a * lambda3 <= 1.0 {
        0.5 * lambda3 * t * t
    } else {
        a - 0.5 / lambda3
    }
}

/// A separable, prox-capable convex function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProxFunction {
    /// `f(x) = 0`
    Zero,
    /// Indicator of `{0}`.
    OriginIndicator,
    /// `weight * |x|_1`
    L1 { weight: f64 },
    /// Indicator of `{ |x|_inf <= radius }`.
    LinfBall { radius: f64 },
    /// `lambda1*beta*|x|_1 + lambda1*(1-beta)/2 |x|^2`
    ElasticNet { lambda1: f64, beta: f64 },
    /// `lambda2 * J(x)` with `J` the Huber envelope of the l1 norm.
    Huber { lambda2: f64, lambda3: f64 },
    /// Conjugate of `Huber`: `indicator(|y|_inf <= lambda2) + |y|^2 / (2 lambda2 lambda3)`.
    HuberConjugate { lambda2: f64, lambda3: f64 },
    /// Indicator of the non-negative orthant.
    NonNeg,
    /// Indicator of the non-positive orthant.
    NonPos,
    /// `indicator(x >= 0) + mu/2 |x|^2`
    NonNegPlusL2 { mu: f64 },
}

impl ProxFunction {
    pub fn prox(&self, z: &[f64], eta: f64) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        self.prox_into(z, eta, &mut out);
        out
    }

    pub fn prox_into(&self, z: &[f64], eta: f64, out: &mut [f64]) {
        debug_assert_eq!(z.len(), out.len());
        match *self {
            ProxFunction::Zero => out.copy_from_slice(z),
            ProxFunction::OriginIndicator => out.iter_mut().for_each(|o| *o = 0.0),
            ProxFunction::L1 { weight } => {
                for (o, &zi) in out.iter_mut().zip(z) {
                    *o = soft_scalar(zi, eta * weight);
                }
            }
            ProxFunction::LinfBall { radius } => {
                for (o, &zi) in out.iter_mut().zip(z) {
                    *o = zi.clamp(-radius, radius);
                }
            }
            ProxFunction::ElasticNet { lambda1, beta } => {
                let shrink = 1.0 + eta * lambda1 * (1.0 - beta);
                let thresh = eta * lambda1 * beta / shrink;
                for (o, &zi) in out.iter_mut().zip(z) {
                    *o = soft_scalar(zi / shrink, thresh);
                }
            }
            ProxFunction::Huber { lambda2, lambda3 } => {
                // quadratic zone |x| <= 1/lambda3, linear zone beyond
                let shrink = 1.0 + eta * lambda2 * lambda3;
                for (o, &zi) in out.iter_mut().zip(z) {
                    *o = if zi.abs() * lambda3 <= shrink {
                        zi / shrink
                    } else {
                        zi - (eta * lambda2).copysign(zi)
                    };
                }
            }
            ProxFunction::HuberConjugate { lambda2, lambda3 } => {
                let shrink = 1.0 + eta / (lambda2 * lambda3);
                for (o, &zi) in out.iter_mut().zip(z) {
                    *o = (zi / shrink).clamp(-lambda2, lambda2);
                }
            }
            ProxFunction::NonNeg => {
                for (o, &zi) in out.iter_mut().zip(z) {
                    *o = zi.max(0.0);
                }
            }
            ProxFunction::NonPos => {
                for (o, &zi) in out.iter_mut().zip(z) {
                    *o = zi.min(0.0);
                }
            }
            ProxFunction::NonNegPlusL2 { mu } => {
                let shrink = 1.0 + eta * mu;
                for (o, &zi) in out.iter_mut().zip(z) {
                    *o = zi.max(0.0) / shrink;
                }
            }
        }
    }

    /// Function value; `+inf` outside the domain of an indicator.
    pub fn value(&self, z: &[f64]) -> f64 {
        let ball = |r: f64| {
            let tol = FEASIBILITY_TOL * r.max(1.0);
            z.iter().all(|v| v.abs() <= r + tol)
        };
        let feasible_if = |ok: bool, v: f64| if ok { v } else { f64::INFINITY };
        match *self {
            ProxFunction::Zero => 0.0,
            ProxFunction::OriginIndicator => {
                feasible_if(z.iter().all(|v| v.abs() <= FEASIBILITY_TOL), 0.0)
            }
            ProxFunction::L1 { weight } => weight * z.iter().map(|v| v.abs()).sum::<f64>(),
            ProxFunction::LinfBall { radius } => feasible_if(ball(radius), 0.0),
            ProxFunction::ElasticNet { lambda1, beta } => {
                let l1: f64 = z.iter().map(|v| v.abs()).sum();
                lambda1 * beta * l1 + 0.5 * lambda1 * (1.0 - beta) * dot(z, z)
            }
            ProxFunction::Huber { lambda2, lambda3 } => {
                lambda2 * z.iter().map(|&t| huber_scalar(t, lambda3)).sum::<f64>()
            }
            ProxFunction::HuberConjugate { lambda2, lambda3 } => {
                feasible_if(ball(lambda2), dot(z, z) / (2.0 * lambda2 * lambda3))
            }
            ProxFunction::NonNeg => feasible_if(z.iter().all(|&v| v >= -FEASIBILITY_TOL), 0.0),
            ProxFunction::NonPos => feasible_if(z.iter().all(|&v| v <= FEASIBILITY_TOL), 0.0),
            ProxFunction::NonNegPlusL2 { mu } => {
                feasible_if(z.iter().all(|&v| v >= -FEASIBILITY_TOL), 0.5 * mu * dot(z, z))
            }
        }
    }

    /// Strong convexity modulus (0 when not strongly convex).
    pub fn strong_convexity(&self) -> f64 {
        match *self {
            ProxFunction::ElasticNet { lambda1, beta } => lambda1 * (1.0 - beta),
            ProxFunction::HuberConjugate { lambda2, lambda3 } => 1.0 / (lambda2 * lambda3),
            ProxFunction::NonNegPlusL2 { mu } => mu,
            _ => 0.0,
        }
    }

    /// Value of the convex conjugate `sup_x <z, x> - f(x)`, in closed form.
    pub fn conjugate_value(&self, z: &[f64]) -> f64 {
        match *self {
            ProxFunction::ElasticNet { lambda1, beta } => {
                let (a, c) = (lambda1 * beta, lambda1 * (1.0 - beta));
                if c > 0.0 {
                    z.iter().map(|v| (v.abs() - a).max(0.0).powi(2)).sum::<f64>() / (2.0 * c)
                } else {
                    ProxFunction::LinfBall { radius: a }.value(z)
                }
            }
            ProxFunction::NonNegPlusL2 { mu } => {
                if mu > 0.0 {
                    z.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>() / (2.0 * mu)
                } else {
                    ProxFunction::NonPos.value(z)
                }
            }
            other => other.conjugate().map_or(f64::NAN, |c| c.value(z)),
        }
    }

    /// The convex conjugate, when it is itself in the catalog.
    pub fn conjugate(&self) -> Option<ProxFunction> {
        match *self {
            ProxFunction::Zero => Some(ProxFunction::OriginIndicator),
            ProxFunction::OriginIndicator => Some(ProxFunction::Zero),
            ProxFunction::L1 { weight } => Some(ProxFunction::LinfBall { radius: weight }),
            ProxFunction::LinfBall { radius } => Some(ProxFunction::L1 { weight: radius }),
            ProxFunction::Huber { lambda2, lambda3 } => {
                Some(ProxFunction::HuberConjugate { lambda2, lambda3 })
            }
            ProxFunction::HuberConjugate { lambda2, lambda3 } => {
                Some(ProxFunction::Huber { lambda2, lambda3 })
            }
            ProxFunction::NonNeg => Some(ProxFunction::NonPos),
            ProxFunction::NonPos => Some(ProxFunction::NonNeg),
            ProxFunction::ElasticNet { .. } | ProxFunction::NonNegPlusL2 { .. } => None,
        }
    }
}

/// Moreau identity residual `|prox_{eta f}(z) + eta prox_{f*/eta}(z/eta) - z|`.
///
/// Zero (up to round-off) exactly when `p_conj` is the conjugate of `p`.
pub fn moreau_check(p: &ProxFunction, p_conj: &ProxFunction, z: &[f64], eta: f64) -> f64 {
    let primal = p.prox(z, eta);
    let scaled: Vec<f64> = z.iter().map(|v| v / eta).collect();
    let dual = p_conj.prox(&scaled, 1.0 / eta);
    primal
        .iter()
        .zip(&dual)
        .zip(z)
        .map(|((a, b), zi)| {
            let r = a + eta * b - zi;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// A convex function with Lipschitz gradient.
#[derive(Debug, Clone)]
pub enum SmoothFunction {
    Zero { dim: usize },
    /// `1/2 |W x - b|^2`
    LeastSquares {
        op: LinearOperator,
        b: Vec<f64>,
        lipschitz: f64,
    },
}

/// `h(x) = 1/2 |W x - b|^2` with `L = ||W||_op^2` (estimated, see
/// [`LinearOperator::norm_upper_bound`]).
pub fn grad_least_squares(op: LinearOperator, b: Vec<f64>) -> SmoothFunction {
    assert_eq!(op.out_dim(), b.len(), "label length must match operator rows");
    let n = op.norm_upper_bound(0x5eed);
    SmoothFunction::LeastSquares {
        op,
        b,
        lipschitz: n * n,
    }
}

impl SmoothFunction {
    pub fn dim(&self) -> usize {
        match self {
            SmoothFunction::Zero { dim } => *dim,
            SmoothFunction::LeastSquares { op, .. } => op.in_dim(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            SmoothFunction::Zero { .. } => 0.0,
            SmoothFunction::LeastSquares { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn strong_convexity(&self) -> f64 {
        0.0
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            SmoothFunction::Zero { .. } => 0.0,
            SmoothFunction::LeastSquares { op, b, .. } => {
                let mut r = vec![0.0; op.out_dim()];
                op.apply_into(x, &mut r);
                r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= bi);
                0.5 * dot(&r, &r)
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            SmoothFunction::Zero { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            SmoothFunction::LeastSquares { op, b, .. } => {
                let mut r = vec![0.0; op.out_dim()];
                op.apply_into(x, &mut r);
                r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= bi);
                op.adjoint_into(&r, out);
            }
        }
    }

    /// Largest observed `|grad(u) - grad(x)| / |u - x|`; used by tests.
    pub fn lipschitz_ratio(&self, u: &[f64], x: &[f64]) -> f64 {
        let gu = self.gradient(u);
        let gx = self.gradient(x);
        let dg: Vec<f64> = gu.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = u.iter().zip(x).map(|(a, b)| a - b).collect();
        norm(&dg) / norm(&dx)
    }
}

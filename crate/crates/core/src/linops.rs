//! Adjoint-capable linear operators and operator-norm estimation.
//!
//! Every operator used by the problem builders is represented by
//! [`LinearOperator`]: dense matrices, sparse pair-difference matrices,
//! 2-D forward differences, pixel masks, local-averaging blurs and scaled
//! wrappers. Structured operators are applied matrix-free.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::vecops::{dot, norm};

/// Multiplicative margin applied to estimated norms before they are used as
/// upper bounds by step-size schedules.
pub const NORM_SAFETY_FACTOR: f64 = 1.0 + 1e-3;

pub const DEFAULT_NORM_TOL: f64 = 1e-6;
pub const DEFAULT_NORM_MAX_ITERS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinopError {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid pair ({0}, {1}) for dimension {2}")]
    InvalidPair(usize, usize, usize),
    #[error("invalid operator geometry: {0}")]
    InvalidGeometry(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinopError> {
        if data.len() != rows * cols {
            return Err(LinopError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinopError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinopError::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    fn mul_transpose_into(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Identity,
    Zero,
    Dense(DenseMatrix),
    Diagonal(Vec<f64>),
    PairDifference(Vec<(usize, usize)>),
    ForwardDifference1d,
    ForwardDifference2d { height: usize, width: usize },
    Mask(Vec<bool>),
    /// Per-pixel box average with reflective boundary.
    LocalAverage {
        height: usize,
        width: usize,
        half_widths: Vec<usize>,
    },
    Scaled { inner: Box<LinearOperator>, factor: f64 },
}

/// A bounded linear map `A: R^in_dim -> R^out_dim` with its adjoint.
///
/// Operators are immutable once built; `apply` and `apply_adjoint` take
/// `&self` and can be shared across threads.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    in_dim: usize,
    out_dim: usize,
    kind: Kind,
    norm_hint: Option<f64>,
}

impl LinearOperator {
    pub fn identity(dim: usize) -> Self {
        LinearOperator {
            in_dim: dim,
            out_dim: dim,
            kind: Kind::Identity,
            norm_hint: Some(1.0),
        }
    }

    pub fn zero(in_dim: usize, out_dim: usize) -> Self {
        LinearOperator {
            in_dim,
            out_dim,
            kind: Kind::Zero,
            norm_hint: Some(0.0),
        }
    }

    pub fn dense(matrix: DenseMatrix) -> Self {
        LinearOperator {
            in_dim: matrix.cols,
            out_dim: matrix.rows,
            kind: Kind::Dense(matrix),
            norm_hint: None,
        }
    }

    pub fn diagonal(diag: Vec<f64>) -> Self {
        let hint = diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        LinearOperator {
            in_dim: diag.len(),
            out_dim: diag.len(),
            kind: Kind::Diagonal(diag),
            norm_hint: Some(hint),
        }
    }

    /// One row `e_i - e_j` per pair. Indices are zero-based.
    pub fn pair_difference(pairs: Vec<(usize, usize)>, dim: usize) -> Result<Self, LinopError> {
        for &(i, j) in &pairs {
            if i == j || i >= dim || j >= dim {
                return Err(LinopError::InvalidPair(i, j, dim));
            }
        }
        if pairs.is_empty() {
            return Err(LinopError::InvalidGeometry(
                "pair-difference operator needs at least one pair".into(),
            ));
        }
        Ok(LinearOperator {
            in_dim: dim,
            out_dim: pairs.len(),
            kind: Kind::PairDifference(pairs),
            norm_hint: None,
        })
    }

    /// `(Dx)_i = x_{i+1} - x_i` for `i < n - 1`.
    pub fn forward_difference_1d(n: usize) -> Result<Self, LinopError> {
        if n < 2 {
            return Err(LinopError::InvalidGeometry(format!(
                "1-D forward difference needs n >= 2, got {n}"
            )));
        }
        Ok(LinearOperator {
            in_dim: n,
            out_dim: n - 1,
            kind: Kind::ForwardDifference1d,
            norm_hint: None,
        })
    }

    /// Horizontal then vertical forward differences of a row-major
    /// `height x width` image. Only interior differences are emitted, so the
    /// output has `height*(width-1) + (height-1)*width` entries.
    pub fn forward_difference_2d(height: usize, width: usize) -> Result<Self, LinopError> {
        if height == 0 || width == 0 || height * width < 2 {
            return Err(LinopError::InvalidGeometry(format!(
                "image {height}x{width} has no differences"
            )));
        }
        Ok(LinearOperator {
            in_dim: height * width,
            out_dim: height * (width - 1) + (height - 1) * width,
            kind: Kind::ForwardDifference2d { height, width },
            norm_hint: None,
        })
    }

    /// Square 0/1 diagonal operator.
    pub fn mask(keep: Vec<bool>) -> Self {
        let hint = if keep.iter().any(|&k| k) { 1.0 } else { 0.0 };
        LinearOperator {
            in_dim: keep.len(),
            out_dim: keep.len(),
            kind: Kind::Mask(keep),
            norm_hint: Some(hint),
        }
    }

    /// Box average over a `(2r+1) x (2r+1)` window centred at each pixel,
    /// where `r = half_widths[pixel]`. Out-of-image samples are reflected.
    pub fn local_average(
        height: usize,
        width: usize,
        half_widths: Vec<usize>,
    ) -> Result<Self, LinopError> {
        if height == 0 || width == 0 {
            return Err(LinopError::InvalidGeometry("empty image".into()));
        }
        if half_widths.len() != height * width {
            return Err(LinopError::DimensionMismatch {
                expected: height * width,
                got: half_widths.len(),
            });
        }
        Ok(LinearOperator {
            in_dim: height * width,
            out_dim: height * width,
            kind: Kind::LocalAverage {
                height,
                width,
                half_widths,
            },
            norm_hint: None,
        })
    }

    /// `c * op`. A known norm hint is scaled by `|c|`.
    pub fn scaled(op: LinearOperator, factor: f64) -> Self {
        let hint = op.norm_hint.map(|h| h * factor.abs());
        LinearOperator {
            in_dim: op.in_dim,
            out_dim: op.out_dim,
            kind: Kind::Scaled {
                inner: Box::new(op),
                factor,
            },
            norm_hint: hint,
        }
    }

    pub fn with_norm_hint(mut self, hint: f64) -> Self {
        self.norm_hint = Some(hint);
        self
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn norm_hint(&self) -> Option<f64> {
        self.norm_hint
    }

    /// True when the operator is structurally zero.
    pub fn is_zero(&self) -> bool {
        match &self.kind {
            Kind::Zero => true,
            Kind::Scaled { inner, factor } => *factor == 0.0 || inner.is_zero(),
            _ => false,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, LinopError> {
        check_len(self.in_dim, x.len())?;
        let mut out = vec![0.0; self.out_dim];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>, LinopError> {
        check_len(self.out_dim, y.len())?;
        let mut out = vec![0.0; self.in_dim];
        self.adjoint_into(y, &mut out);
        Ok(out)
    }

    /// Unchecked `out = A x`; lengths must already match.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        match &self.kind {
            Kind::Identity => out.copy_from_slice(x),
            Kind::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Kind::Dense(m) => m.mul_vec_into(x, out),
            Kind::Diagonal(d) => {
                for ((o, &di), &xi) in out.iter_mut().zip(d).zip(x) {
                    *o = di * xi;
                }
            }
            Kind::PairDifference(pairs) => {
                for (o, &(i, j)) in out.iter_mut().zip(pairs) {
                    *o = x[i] - x[j];
                }
            }
            Kind::ForwardDifference1d => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = x[i + 1] - x[i];
                }
            }
            Kind::ForwardDifference2d { height, width } => {
                let (h, w) = (*height, *width);
                let mut idx = 0;
                for r in 0..h {
                    for c in 0..w - 1 {
                        out[idx] = x[r * w + c + 1] - x[r * w + c];
                        idx += 1;
                    }
                }
                for r in 0..h - 1 {
                    for c in 0..w {
                        out[idx] = x[(r + 1) * w + c] - x[r * w + c];
                        idx += 1;
                    }
                }
            }
            Kind::Mask(keep) => {
                for ((o, &k), &xi) in out.iter_mut().zip(keep).zip(x) {
                    *o = if k { xi } else { 0.0 };
                }
            }
            Kind::LocalAverage {
                height,
                width,
                half_widths,
            } => {
                for (p, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    let (weight, taps) = window(p, *height, *width, half_widths[p]);
                    for q in taps {
                        acc += x[q];
                    }
                    *o = acc * weight;
                }
            }
            Kind::Scaled { inner, factor } => {
                inner.apply_into(x, out);
                out.iter_mut().for_each(|o| *o *= factor);
            }
        }
    }

    /// Unchecked `out = A^T y`; lengths must already match.
    pub fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.out_dim);
        debug_assert_eq!(out.len(), self.in_dim);
        match &self.kind {
            Kind::Identity => out.copy_from_slice(y),
            Kind::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Kind::Dense(m) => m.mul_transpose_into(y, out),
            Kind::Diagonal(d) => {
                for ((o, &di), &yi) in out.iter_mut().zip(d).zip(y) {
                    *o = di * yi;
                }
            }
            Kind::PairDifference(pairs) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (&yk, &(i, j)) in y.iter().zip(pairs) {
                    out[i] += yk;
                    out[j] -= yk;
                }
            }
            Kind::ForwardDifference1d => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (i, &yi) in y.iter().enumerate() {
                    out[i + 1] += yi;
                    out[i] -= yi;
                }
            }
            Kind::ForwardDifference2d { height, width } => {
                let (h, w) = (*height, *width);
                out.iter_mut().for_each(|o| *o = 0.0);
                let mut idx = 0;
                for r in 0..h {
                    for c in 0..w - 1 {
                        out[r * w + c + 1] += y[idx];
                        out[r * w + c] -= y[idx];
                        idx += 1;
                    }
                }
                for r in 0..h - 1 {
                    for c in 0..w {
                        out[(r + 1) * w + c] += y[idx];
                        out[r * w + c] -= y[idx];
                        idx += 1;
                    }
                }
            }
            Kind::Mask(keep) => {
                for ((o, &k), &yi) in out.iter_mut().zip(keep).zip(y) {
                    *o = if k { yi } else { 0.0 };
                }
            }
            Kind::LocalAverage {
                height,
                width,
                half_widths,
            } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (p, &yp) in y.iter().enumerate() {
                    let (weight, taps) = window(p, *height, *width, half_widths[p]);
                    for q in taps {
                        out[q] += weight * yp;
                    }
                }
            }
            Kind::Scaled { inner, factor } => {
                inner.adjoint_into(y, out);
                out.iter_mut().for_each(|o| *o *= factor);
            }
        }
    }

    /// Materializes the operator column by column.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.out_dim, self.in_dim);
        let mut e = vec![0.0; self.in_dim];
        let mut col = vec![0.0; self.out_dim];
        for j in 0..self.in_dim {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            for (i, &v) in col.iter().enumerate() {
                m.set(i, j, v);
            }
            e[j] = 0.0;
        }
        m
    }

    /// Upper bound on `||A||_op` suitable for step-size schedules: the norm
    /// hint when the operator carries one, otherwise a power-iteration
    /// estimate inflated by [`NORM_SAFETY_FACTOR`].
    pub fn norm_upper_bound(&self, seed: u64) -> f64 {
        match self.norm_hint {
            Some(h) => h,
            None => {
                let est = estimate_op_norm(self, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITERS, seed);
                if !est.converged {
                    log::warn!(
                        "operator norm estimate did not converge after {} iterations",
                        est.iterations
                    );
                }
                est.value * NORM_SAFETY_FACTOR
            }
        }
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), LinopError> {
    if expected != got {
        Err(LinopError::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

fn window(p: usize, height: usize, width: usize, r: usize) -> (f64, impl Iterator<Item = usize>) {
    let (pr, pc) = ((p / width) as isize, (p % width) as isize);
    let r = r as isize;
    let side = (2 * r + 1) as f64;
    let taps = (-r..=r).flat_map(move |dr| {
        (-r..=r).map(move |dc| reflect(pr + dr, height) * width + reflect(pc + dc, width))
    });
    (1.0 / (side * side), taps)
}

/// Outcome of a power-iteration norm estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration on `A^T A` from a seeded random start. Stops when the
/// eigen-residual `|A^T A v - lambda v|` drops below `tol * lambda`.
pub fn estimate_op_norm(op: &LinearOperator, tol: f64, max_iters: usize, seed: u64) -> NormEstimate {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..op.in_dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut av = vec![0.0; op.out_dim];
    let mut w = vec![0.0; op.in_dim];
    let mut best = 0.0_f64;
    for it in 1..=max_iters {
        op.apply_into(&v, &mut av);
        let lambda = dot(&av, &av);
        best = best.max(lambda);
        if lambda == 0.0 {
            return NormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        op.adjoint_into(&av, &mut w);
        let residual = w.iter().zip(&v).map(|(wi, vi)| (wi - lambda * vi).powi(2)).sum::<f64>().sqrt();
        if residual <= tol * lambda {
            return NormEstimate {
                value: lambda.sqrt(),
                iterations: it,
                converged: true,
            };
        }
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    NormEstimate {
        value: best.sqrt(),
        iterations: max_iters,
        converged: false,
    }
}

//! Builders for the fused elastic net and total-variation imaging problems,
//! plus seeded synthetic data.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::functions::{grad_least_squares, ProxFunction, SmoothFunction};
use crate::linops::{DenseMatrix, LinearOperator, LinopError};
use crate::solver::{SaddleProblem, SolverError};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linop(#[from] LinopError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn invalid(msg: impl Into<String>) -> ProblemError {
    ProblemError::Invalid(msg.into())
}

/// Pearson correlation of two columns; `None` if either is constant.
fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// The `ceil(fraction * d(d-1)/2)` column pairs with largest absolute
/// correlation, ties broken by `(i, j)`. Constant columns are never paired.
pub fn build_pair_index(w: &DenseMatrix, fraction: f64) -> Vec<(usize, usize)> {
    let d = w.cols();
    if d < 2 {
        return Vec::new();
    }
    let cols: Vec<Vec<f64>> = (0..d).map(|j| w.column(j)).collect();
    let mut scored: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            if let Some(c) = correlation(&cols[i], &cols[j]) {
                scored.push((c.abs(), i, j));
            }
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let total = d * (d - 1) / 2;
    let want = (fraction * total as f64).ceil() as usize;
    scored.into_iter().take(want).map(|(_, i, j)| (i, j)).collect()
}

/// `1/2|Wx - b|^2 + lambda1 beta |x|_1 + lambda1 (1-beta)/2 |x|^2 + lambda2 J(Fx)`
/// where `J` is the Huber envelope (smoothed) or the l1 norm.
#[derive(Debug, Clone)]
pub struct FusedElasticNetSpec {
    pub w: DenseMatrix,
    pub b: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub beta: f64,
    pub smoothed: bool,
    pub pair_fraction: f64,
}

impl FusedElasticNetSpec {
    pub fn new(w: DenseMatrix, b: Vec<f64>) -> Self {
        FusedElasticNetSpec {
            w,
            b,
            lambda1: 0.1,
            lambda2: 0.1,
            lambda3: 1e3,
            beta: 0.5,
            smoothed: false,
            pair_fraction: 0.1,
        }
    }

    fn check(&self) -> Result<(), ProblemError> {
        if self.w.rows() != self.b.len() {
            return Err(invalid(format!(
                "W has {} rows but b has {} entries",
                self.w.rows(),
                self.b.len()
            )));
        }
        if self.w.rows() == 0 || self.w.cols() == 0 {
            return Err(invalid("W is empty"));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if self.smoothed && !(self.lambda3 > 0.0 && self.lambda3.is_finite()) {
            return Err(invalid(format!(
                "smoothing needs a finite positive lambda3, got {}",
                self.lambda3
            )));
        }
        if !(self.pair_fraction > 0.0 && self.pair_fraction <= 1.0) {
            return Err(invalid(format!(
                "pair_fraction must lie in (0, 1], got {}",
                self.pair_fraction
            )));
        }
        Ok(())
    }

    /// Pair-difference operator `F` over the most correlated columns.
    pub fn pair_operator(&self) -> Result<LinearOperator, ProblemError> {
        let pairs = build_pair_index(&self.w, self.pair_fraction);
        if pairs.is_empty() {
            return Ok(LinearOperator::zero(self.w.cols(), 1));
        }
        Ok(LinearOperator::pair_difference(pairs, self.w.cols())?)
    }
}

/// `f* = lambda2 J*`, `g` the elastic net, `h = 1/2|Wx - b|^2`, `A = F`.
pub fn build_fused_elastic_net(spec: &FusedElasticNetSpec) -> Result<SaddleProblem, ProblemError> {
    spec.check()?;
    let a = spec.pair_operator()?;
    let f_conj = if spec.lambda2 == 0.0 || a.is_zero() {
        ProxFunction::OriginIndicator
    } else if spec.smoothed {
        ProxFunction::HuberConjugate {
            lambda2: spec.lambda2,
            lambda3: spec.lambda3,
        }
    } else {
        ProxFunction::LinfBall { radius: spec.lambda2 }
    };
    let g = ProxFunction::ElasticNet {
        lambda1: spec.lambda1,
        beta: spec.beta,
    };
    let h = grad_least_squares(LinearOperator::dense(spec.w.clone()), spec.b.clone());
    Ok(SaddleProblem::new(f_conj, g, h, a)?)
}

/// Factor `c` such that `|cW|^2 = ratio * opnorm_a`.
pub fn lipschitz_ratio_scale(w: &DenseMatrix, opnorm_a: f64, ratio: f64) -> f64 {
    let wn = LinearOperator::dense(w.clone()).norm_upper_bound(0x5eed);
    (ratio * opnorm_a).sqrt() / wn
}

/// Seeded regression data `b = W x_true + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRegression {
    pub n: usize,
    pub d: usize,
    /// Fraction of non-zero entries in `x_true`.
    pub sparsity: f64,
    /// Standard deviation of the label noise.
    pub noise: f64,
    /// Scale of the last column relative to the first (geometric in between).
    pub column_decay: f64,
    pub seed: u64,
}

impl SyntheticRegression {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        SyntheticRegression {
            n,
            d,
            sparsity: 0.1,
            noise: 0.01,
            column_decay: 1.0,
            seed,
        }
    }

    /// Returns `(W, b, x_true)`.
    pub fn generate(&self) -> (DenseMatrix, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (n, d) = (self.n, self.d);
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                if d > 1 {
                    self.column_decay.powf(j as f64 / (d - 1) as f64)
                } else {
                    1.0
                }
            })
            .collect();
        let mut w = DenseMatrix::zeros(n, d);
        for i in 0..n {
            for (j, s) in scale.iter().enumerate() {
                w.set(i, j, s * rng.sample::<f64, _>(StandardNormal));
            }
        }
        let nnz = ((self.sparsity * d as f64).ceil() as usize).clamp(1, d);
        let mut idx: Vec<usize> = (0..d).collect();
        idx.shuffle(&mut rng);
        let mut x = vec![0.0; d];
        for &j in &idx[..nnz] {
            x[j] = rng.sample::<f64, _>(StandardNormal);
        }
        let mut b = LinearOperator::dense(w.clone()).apply(&x).expect("matching dims");
        for bi in &mut b {
            *bi += self.noise * rng.sample::<f64, _>(StandardNormal);
        }
        (w, b, x)
    }
}

/// How the observed image is produced from the true one.
#[derive(Debug, Clone, PartialEq)]
pub enum ForwardModel {
    /// Keeps `round(keep_fraction * pixels)` randomly chosen pixels.
    Mask { keep_fraction: f64, seed: u64 },
    /// Box average of half-width `half_width`; with `radial`, the half-width
    /// grows linearly from 0 at the centre to `half_width` at the corners.
    Blur { half_width: usize, radial: bool },
    /// Dense Gaussian `rows x pixels` operator with entries `gain * N(0, 1/rows)`.
    Projection { rows: usize, gain: f64, seed: u64 },
}

pub fn build_forward_operator(height: usize, width: usize, model: &ForwardModel) -> Result<LinearOperator, ProblemError> {
    let npix = height * width;
    if npix == 0 {
        return Err(invalid("empty image"));
    }
    match *model {
        ForwardModel::Mask { keep_fraction, seed } => {
            if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
                return Err(invalid(format!("keep_fraction must lie in (0, 1], got {keep_fraction}")));
            }
            let kept = ((keep_fraction * npix as f64).round() as usize).clamp(1, npix);
            let mut idx: Vec<usize> = (0..npix).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut keep = vec![false; npix];
            for &i in &idx[..kept] {
                keep[i] = true;
            }
            Ok(LinearOperator::mask(keep))
        }
        ForwardModel::Blur { half_width, radial } => {
            let radii = if radial {
                let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
                let far = (cy * cy + cx * cx).sqrt().max(1.0);
                (0..npix)
                    .map(|p| {
                        let (r, c) = ((p / width) as f64, (p % width) as f64);
                        let dist = ((r - cy).powi(2) + (c - cx).powi(2)).sqrt();
                        (half_width as f64 * dist / far).round() as usize
                    })
                    .collect()
            } else {
                vec![half_width; npix]
            };
            Ok(LinearOperator::local_average(height, width, radii)?)
        }
        ForwardModel::Projection { rows, gain, seed } => {
            if rows == 0 {
                return Err(invalid("projection needs at least one row"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = gain / (rows as f64).sqrt();
            let data = (0..rows * npix).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
            Ok(LinearOperator::dense(DenseMatrix::new(rows, npix, data)?))
        }
    }
}

/// `1/2|Mx - b|^2 + lambda1 |Dx|_1 + indicator(x >= 0) + mu_g/2 |x|^2`,
/// with `D` rescaled by `1/rho1` and the dual ball dilated by `rho1`.
#[derive(Debug, Clone)]
pub struct ImagingSpec {
    pub height: usize,
    pub width: usize,
    pub observed: Vec<f64>,
    pub forward: ForwardModel,
    pub lambda1: f64,
    pub mu_g: f64,
    pub rho1: f64,
}

pub fn build_imaging(spec: &ImagingSpec) -> Result<SaddleProblem, ProblemError> {
    if !(spec.rho1 > 0.0 && spec.rho1.is_finite()) {
        return Err(invalid(format!("rho1 must be positive, got {}", spec.rho1)));
    }
    if !(spec.lambda1 >= 0.0 && spec.mu_g >= 0.0) {
        return Err(invalid("lambda1 and mu_g must be non-negative"));
    }
    let m = build_forward_operator(spec.height, spec.width, &spec.forward)?;
    if m.out_dim() != spec.observed.len() {
        return Err(invalid(format!(
            "observation has {} entries, forward model produces {}",
            spec.observed.len(),
            m.out_dim()
        )));
    }
    let d = LinearOperator::forward_difference_2d(spec.height, spec.width)?;
    let a = LinearOperator::scaled(d, 1.0 / spec.rho1);
    let g = if spec.mu_g > 0.0 {
        ProxFunction::NonNegPlusL2 { mu: spec.mu_g }
    } else {
        ProxFunction::NonNeg
    };
    let h: SmoothFunction = grad_least_squares(m, spec.observed.clone());
    let f_conj = ProxFunction::LinfBall {
        radius: spec.lambda1 * spec.rho1,
    };
    Ok(SaddleProblem::new(f_conj, g, h, a)?)
}

/// Piecewise-constant test image in `[0, 1]`: a background, two rectangles
/// and a disc at seeded positions.
pub fn synthetic_image(height: usize, width: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = vec![0.1; height * width];
    let (hf, wf) = (height as f64, width as f64);
    for _ in 0..2 {
        let (r0, c0) = (rng.random::<f64>() * hf * 0.6, rng.random::<f64>() * wf * 0.6);
        let (rh, cw) = (hf * (0.2 + 0.3 * rng.random::<f64>()), wf * (0.2 + 0.3 * rng.random::<f64>()));
        let level = 0.3 + 0.5 * rng.random::<f64>();
        for r in 0..height {
            for c in 0..width {
                let (rf, cf) = (r as f64, c as f64);
                if rf >= r0 && rf < r0 + rh && cf >= c0 && cf < c0 + cw {
                    img[r * width + c] = level;
                }
            }
        }
    }
    let (cy, cx) = (hf * (0.3 + 0.4 * rng.random::<f64>()), wf * (0.3 + 0.4 * rng.random::<f64>()));
    let rad = 0.2 * hf.min(wf);
    for r in 0..height {
        for c in 0..width {
            if (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2) <= rad * rad {
                img[r * width + c] = 1.0;
            }
        }
    }
    img
}

/// `M x + noise * N(0, 1)`; rows of `M` that sum to zero (unobserved
/// pixels of a mask) stay at 0.
pub fn observe(forward: &LinearOperator, image: &[f64], noise: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = forward.apply(image).expect("image matches the forward model");
    let row_sums = forward.apply(&vec![1.0; forward.in_dim()]).expect("dims");
    for (bi, s) in b.iter_mut().zip(&row_sums) {
        let e: f64 = rng.sample(StandardNormal);
        if *s != 0.0 {
            *bi += noise * e;
        }
    }
    b
}

//! Small dense linear algebra for skill space.
//!
//! Skill vectors live in R^D with D <= 8, so everything here is plain
//! row-major `Vec<f64>` with O(D^2) loops. The one nontrivial piece is the
//! Mahalanobis distance
//!
//! d_Sigma(a, b) = sqrt((a-b)^T Sigma^-1 (a-b))
//!
//! computed through the lower Cholesky factor L of Sigma: solve L y = a - b,
//! then d = ||y||_2. No inverse is ever formed.
//!
//! Empirical covariance uses the N-1 divisor and adds diagonal jitter
//! eps_jit = 1e-8 * trace(Sigma)/D before factorization so that
//! near-degenerate point sets stay positive definite. Identical points have
//! zero trace; an absolute floor keeps the factorization alive there.

use std::sync::OnceLock;
use thiserror::Error;

/// Relative diagonal jitter applied by [`empirical_covariance`].
pub const DEFAULT_JITTER_SCALE: f64 = 1e-8;

/// Absolute jitter floor for point sets with zero spread.
const JITTER_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinalgError {
    #[error("degenerate input: need at least {needed} points, got {got}")]
    DegenerateInput { needed: usize, got: usize },
    #[error("singular matrix: covariance is not positive definite")]
    Singular,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// A point in skill space. Entries are finite by construction at the
/// boundaries that produce them (environment features, VAE embeddings,
/// file loads).
#[derive(Debug, Clone, PartialEq)]
pub struct SkillVec {
    values: Vec<f64>,
}

impl SkillVec {
    pub fn new(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()), "non-finite skill");
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Euclidean norm of self - other.
    pub fn euclidean_distance(&self, other: &SkillVec) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl std::ops::Index<usize> for SkillVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl From<Vec<f64>> for SkillVec {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

/// Symmetric positive (semi-)definite matrix over skill space with a lazily
/// computed lower Cholesky factor. Construction never fails; factorization
/// failures surface as [`LinalgError::Singular`] at the first operation that
/// needs the factor.
#[derive(Debug)]
pub struct CovMatrix {
    dim: usize,
    mat: Vec<f64>,
    chol: OnceLock<Option<Vec<f64>>>,
}

impl Clone for CovMatrix {
    fn clone(&self) -> Self {
        let chol = OnceLock::new();
        if let Some(f) = self.chol.get() {
            let _ = chol.set(f.clone());
        }
        Self { dim: self.dim, mat: self.mat.clone(), chol }
    }
}

impl PartialEq for CovMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.mat == other.mat
    }
}

impl CovMatrix {
    /// Row-major `dim * dim` entries. The caller supplies a symmetric matrix;
    /// only the lower triangle is read by the factorization.
    pub fn from_flat(dim: usize, mat: Vec<f64>) -> Result<Self, LinalgError> {
        if mat.len() != dim * dim {
            return Err(LinalgError::DimensionMismatch { left: mat.len(), right: dim * dim });
        }
        Ok(Self { dim, mat, chol: OnceLock::new() })
    }

    pub fn identity(dim: usize) -> Self {
        let mut mat = vec![0.0; dim * dim];
        for i in 0..dim {
            mat[i * dim + i] = 1.0;
        }
        Self { dim, mat, chol: OnceLock::new() }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut mat = vec![0.0; dim * dim];
        for i in 0..dim {
            mat[i * dim + i] = diag[i];
        }
        Self { dim, mat, chol: OnceLock::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat[i * self.dim + j]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.mat
    }

    /// Entrywise scaling, used to turn an empirical covariance into a KDE
    /// bandwidth covariance h^2 * Sigma.
    pub fn scaled(&self, factor: f64) -> CovMatrix {
        let mat = self.mat.iter().map(|v| v * factor).collect();
        CovMatrix { dim: self.dim, mat, chol: OnceLock::new() }
    }

    fn factor(&self) -> Result<&[f64], LinalgError> {
        let cached = self.chol.get_or_init(|| cholesky(self.dim, &self.mat));
        cached.as_deref().ok_or(LinalgError::Singular)
    }

    /// log det(Sigma) = 2 sum_i log L_ii.
    pub fn log_det(&self) -> Result<f64, LinalgError> {
        let l = self.factor()?;
        let n = self.dim;
        Ok(2.0 * (0..n).map(|i| l[i * n + i].ln()).sum::<f64>())
    }

    /// Solve L y = b for the lower Cholesky factor L.
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.dim {
            return Err(LinalgError::DimensionMismatch { left: b.len(), right: self.dim });
        }
        let l = self.factor()?;
        Ok(solve_lower_triangular(self.dim, l, b))
    }

    /// Sample y = L x for x ~ N(0, I), giving y ~ N(0, Sigma).
    pub fn transform_standard_normal(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.dim {
            return Err(LinalgError::DimensionMismatch { left: x.len(), right: self.dim });
        }
        let l = self.factor()?;
        let n = self.dim;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..=i {
                s += l[i * n + k] * x[k];
            }
            y[i] = s;
        }
        Ok(y)
    }
}

/// Lower Cholesky factorization of a symmetric matrix given row-major.
/// Returns `None` when the matrix is not positive definite. Shared by
/// [`CovMatrix`] and the GP posterior in [`crate::adapt`].
pub fn cholesky(n: usize, mat: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(mat.len(), n * n);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        for i in j..n {
            let mut s = mat[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[j * n + j] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Forward substitution for lower-triangular L.
pub fn solve_lower_triangular(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Mahalanobis distance under `cov`.
pub fn mahalanobis(a: &SkillVec, b: &SkillVec, cov: &CovMatrix) -> Result<f64, LinalgError> {
    if a.dim() != b.dim() {
        return Err(LinalgError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    if a.dim() != cov.dim() {
        return Err(LinalgError::DimensionMismatch { left: a.dim(), right: cov.dim() });
    }
    let diff: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect();
    let y = cov.solve_lower(&diff)?;
    Ok(y.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Sample covariance (N-1 divisor) with relative diagonal jitter.
pub fn empirical_covariance(points: &[SkillVec]) -> Result<CovMatrix, LinalgError> {
    empirical_covariance_with_jitter(points, DEFAULT_JITTER_SCALE)
}

/// Sample covariance with an explicit jitter scale; `jitter_scale = 0.0`
/// disables regularization entirely (tests rely on this for exact scaling
/// identities).
pub fn empirical_covariance_with_jitter(
    points: &[SkillVec],
    jitter_scale: f64,
) -> Result<CovMatrix, LinalgError> {
    if points.len() < 2 {
        return Err(LinalgError::DegenerateInput { needed: 2, got: points.len() });
    }
    let dim = points[0].dim();
    for p in points {
        if p.dim() != dim {
            return Err(LinalgError::DimensionMismatch { left: p.dim(), right: dim });
        }
    }
    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p.as_slice()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut mat = vec![0.0; dim * dim];
    for p in points {
        for i in 0..dim {
            let di = p[i] - mean[i];
            for j in 0..=i {
                mat[i * dim + j] += di * (p[j] - mean[j]);
            }
        }
    }
    let divisor = n - 1.0;
    for i in 0..dim {
        for j in 0..=i {
            mat[i * dim + j] /= divisor;
            mat[j * dim + i] = mat[i * dim + j];
        }
    }
    if jitter_scale > 0.0 {
        let trace: f64 = (0..dim).map(|i| mat[i * dim + i]).sum();
        let mut jit = jitter_scale * trace / dim as f64;
        if jit == 0.0 {
            jit = JITTER_FLOOR;
        }
        for i in 0..dim {
            mat[i * dim + i] += jit;
        }
    }
    CovMatrix::from_flat(dim, mat)
}

/// Nearest neighbor of `points[query]` among the other points, Mahalanobis
/// metric, ties broken by lowest index. Errors on singleton inputs.
pub fn nearest_neighbor(
    query: usize,
    points: &[SkillVec],
    cov: &CovMatrix,
) -> Result<(usize, f64), LinalgError> {
    if points.len() < 2 {
        return Err(LinalgError::DegenerateInput { needed: 2, got: points.len() });
    }
    let mut best: Option<(usize, f64)> = None;
    for (j, p) in points.iter().enumerate() {
        if j == query {
            continue;
        }
        let d = mahalanobis(&points[query], p, cov)?;
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((j, d)),
        }
    }
    Ok(best.expect("at least one other point"))
}

/// Nearest-neighbor index and distance for every point, one O(N^2/2) pass.
/// Tie-breaking matches [`nearest_neighbor`]: lowest index wins.
pub fn nn_distances(
    points: &[SkillVec],
    cov: &CovMatrix,
) -> Result<Vec<(usize, f64)>, LinalgError> {
    let n = points.len();
    if n < 2 {
        return Err(LinalgError::DegenerateInput { needed: 2, got: n });
    }
    let mut best: Vec<(usize, f64)> = vec![(usize::MAX, f64::INFINITY); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = mahalanobis(&points[i], &points[j], cov)?;
            if d < best[i].1 || (d == best[i].1 && j < best[i].0) {
                best[i] = (j, d);
            }
            if d < best[j].1 || (d == best[j].1 && i < best[j].0) {
                best[j] = (i, d);
            }
        }
    }
    Ok(best)
}

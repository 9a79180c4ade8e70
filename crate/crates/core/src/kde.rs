//! Gaussian kernel density estimate over the skill repertoire.
//!
//! With repertoire skills z_1..z_N in R^D the sampling density is the equal
//! weight mixture
//!
//! q(z) = (1/N) sum_j N(z | z_j, Sigma_h),  Sigma_h = h^2 * Sigma_emp,
//!
//! with Scott's rule bandwidth h = N^(-1/(D+4)) and Sigma_emp the sample
//! covariance of the skills. Entropy of q is estimated by Monte Carlo at the
//! centers,
//!
//! H_hat(q) = -(1/N) sum_i log q(z_i),
//!
//! and admits the closed-form lower bound
//!
//! H_hat >= -(1/N) sum_i log(1 + (N-1) exp(-d_i^2 / 2))
//!          + (1/2) log det Sigma_h + (D/2) log 2pi + log N,
//!
//! where d_i is the Mahalanobis distance from z_i to its nearest neighbor
//! under Sigma_h. The bound is tight at N = 2 because the only mixture term
//! besides the self term is the nearest neighbor itself.
//!
//! The same geometry yields the adaptive skill-tracking threshold
//!
//! delta = (N / N_z)^(1/D) * (1 / 2N) * sum_i d_i,
//!
//! half the mean nearest-neighbor distance, inflated while the repertoire
//! holds more skills than the N_z target.

use crate::linalg::{
    empirical_covariance, mahalanobis, nn_distances, CovMatrix, LinalgError, SkillVec,
};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KdeError {
    #[error("not fittable yet: need at least {needed} skills, got {got}")]
    NotFittable { needed: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Fitted KDE: centers plus bandwidth covariance. Immutable once built.
#[derive(Debug, Clone)]
pub struct KdeModel {
    centers: Vec<SkillVec>,
    bandwidth_cov: CovMatrix,
    scott: f64,
}

/// Scott's rule bandwidth h = n^(-1/(d+4)), computed in base 2 so that
/// power-of-two n with integer log2(n)/(d+4) stays exact (4096 skills in 2-D
/// give h = 0.25 with no rounding).
pub fn scott_bandwidth(n: usize, dim: usize) -> f64 {
    (-(n as f64).log2() / (dim + 4) as f64).exp2()
}

impl KdeModel {
    /// Fit on the current repertoire skills. Needs at least D + 1 skills for
    /// a non-degenerate covariance; fewer is a not-yet-fittable signal and
    /// the caller falls back to [`sample_initial`].
    pub fn fit(skills: &[SkillVec]) -> Result<KdeModel, KdeError> {
        let got = skills.len();
        if got == 0 {
            return Err(KdeError::NotFittable { needed: 2, got });
        }
        let dim = skills[0].dim();
        if got < dim + 1 {
            return Err(KdeError::NotFittable { needed: dim + 1, got });
        }
        let scott = scott_bandwidth(got, dim);
        let sigma = empirical_covariance(skills)?;
        let bandwidth_cov = sigma.scaled(scott * scott);
        Ok(KdeModel { centers: skills.to_vec(), bandwidth_cov, scott })
    }

    /// Model with a pinned bandwidth covariance, bypassing the fit. Used by
    /// diagnostics and tests that need an exact covariance.
    pub fn with_bandwidth_cov(
        centers: Vec<SkillVec>,
        bandwidth_cov: CovMatrix,
    ) -> Result<KdeModel, KdeError> {
        if centers.is_empty() {
            return Err(KdeError::NotFittable { needed: 1, got: 0 });
        }
        let dim = centers[0].dim();
        if bandwidth_cov.dim() != dim {
            return Err(LinalgError::DimensionMismatch { left: bandwidth_cov.dim(), right: dim }.into());
        }
        let scott = scott_bandwidth(centers.len(), dim);
        Ok(KdeModel { centers, bandwidth_cov, scott })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].dim()
    }

    pub fn centers(&self) -> &[SkillVec] {
        &self.centers
    }

    pub fn bandwidth_cov(&self) -> &CovMatrix {
        &self.bandwidth_cov
    }

    pub fn scott(&self) -> f64 {
        self.scott
    }
}

/// One draw from the mixture: uniform center index, then center + L xi with
/// xi standard normal and L the Cholesky factor of the bandwidth covariance.
/// Draw order (index first, then D normals) is part of the determinism
/// contract.
pub fn sample<R: Rng + ?Sized>(model: &KdeModel, rng: &mut R) -> Result<SkillVec, KdeError> {
    let idx = rng.gen_range(0..model.centers.len());
    let dim = model.dim();
    let xi: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let noise = model.bandwidth_cov.transform_standard_normal(&xi)?;
    let center = model.centers[idx].as_slice();
    Ok(SkillVec::new(center.iter().zip(&noise).map(|(c, n)| c + n).collect()))
}

/// Standard normal skill draw, the pre-fit fallback while the repertoire is
/// too small for a covariance. Draws are training targets only; callers must
/// never write them into the repertoire.
pub fn sample_initial<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> SkillVec {
    SkillVec::new((0..dim).map(|_| rng.sample(StandardNormal)).collect())
}

/// log q(z), evaluated through log-sum-exp so far-away queries stay finite.
pub fn log_density(model: &KdeModel, z: &SkillVec) -> Result<f64, KdeError> {
    let n = model.centers.len();
    let dim = model.dim() as f64;
    let log_norm = -0.5 * (dim * (2.0 * std::f64::consts::PI).ln() + model.bandwidth_cov.log_det()?);
    let mut terms = Vec::with_capacity(n);
    for c in &model.centers {
        let d = mahalanobis(z, c, &model.bandwidth_cov)?;
        terms.push(-0.5 * d * d);
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    Ok(lse - (n as f64).ln() + log_norm)
}

/// Monte-Carlo entropy estimate at the centers: -(1/N) sum_i log q(z_i).
pub fn entropy_estimate(model: &KdeModel) -> Result<f64, KdeError> {
    let mut sum = 0.0;
    for c in &model.centers {
        sum += log_density(model, c)?;
    }
    Ok(-sum / model.centers.len() as f64)
}

/// Closed-form lower bound on [`entropy_estimate`] from nearest-neighbor
/// distances; equality at N = 2.
pub fn entropy_lower_bound(model: &KdeModel) -> Result<f64, KdeError> {
    let n = model.centers.len();
    let nn = nn_distances(&model.centers, &model.bandwidth_cov)?;
    let mut sum = 0.0;
    for &(_, d) in &nn {
        sum += (1.0 + (n - 1) as f64 * (-0.5 * d * d).exp()).ln();
    }
    let dim = model.dim() as f64;
    Ok(-sum / n as f64
        + 0.5 * model.bandwidth_cov.log_det()?
        + 0.5 * dim * (2.0 * std::f64::consts::PI).ln()
        + (n as f64).ln())
}

/// Adaptive skill-tracking threshold: half the mean nearest-neighbor
/// Mahalanobis distance, scaled by (N / n_target)^(1/D).
pub fn adaptive_threshold(model: &KdeModel, n_target: usize) -> Result<f64, KdeError> {
    let n = model.centers.len();
    let nn = nn_distances(&model.centers, &model.bandwidth_cov)?;
    let sum: f64 = nn.iter().map(|&(_, d)| d).sum();
    let ratio = (n as f64 / n_target as f64).powf(1.0 / model.dim() as f64);
    Ok(ratio * sum / (2.0 * n as f64))
}

//! Achieved-skill coverage: how much of skill space the repertoire's
//! entries actually reach when re-executed, binned on a fixed grid.
//!
//! Every entry is deployed deterministically from the same canonical
//! start pose (all phases zero); the time average of the feature
//! trajectory is the skill the entry achieves today (for duty factors this
//! lands in [0, 1] per leg). A shared start state means occupied cells
//! measure what the skill conditioning controls: a skill-blind policy
//! lands every entry in the same handful of cells no matter how varied
//! its archive looks. Points are discretized over every pairwise
//! dimension projection, matching how gait grids are usually drawn, and a
//! cell counts as occupied when at least one skill's average falls inside
//! it.

use serde::{Deserialize, Serialize};
use skillrep_core::env::{self, CrawlerState, DamageSpec, EnvParams, NUM_LEGS};
use skillrep_core::features::FeatureMap;
use skillrep_core::learner::PolicyParams;
use skillrep_core::repertoire::Repertoire;
use std::collections::BTreeSet;

/// Time-averaged feature vector of one fresh evaluation rollout.
pub fn achieved_skill(
    policy: &PolicyParams,
    features: &FeatureMap,
    skill: &skillrep_core::linalg::SkillVec,
    start: &CrawlerState,
    steps: usize,
    params: &EnvParams,
) -> Vec<f64> {
    assert!(steps >= 1);
    let mut state = start.clone();
    let mut acc = vec![0.0; features.dim()];
    for _ in 0..steps {
        let action = policy.action(&state, skill);
        let out = env::step(&state, &action, &DamageSpec::none(), params);
        let f = features.features(&out.next_state);
        for (a, v) in acc.iter_mut().zip(f.as_slice()) {
            *a += v;
        }
        state = out.next_state;
    }
    for a in &mut acc {
        *a /= steps as f64;
    }
    acc
}

/// Achieved skills for every repertoire entry, in entry order, each
/// deployed from the canonical start pose.
pub fn achieved_skills(
    policy: &PolicyParams,
    features: &FeatureMap,
    rep: &Repertoire,
    steps: usize,
    params: &EnvParams,
) -> Vec<Vec<f64>> {
    let start = CrawlerState::new([0.0; NUM_LEGS]);
    rep.entries()
        .iter()
        .map(|e| achieved_skill(policy, features, &e.skill, &start, steps, params))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionCoverage {
    /// The two projected dimensions; equal for the 1-D case.
    pub dims: (usize, usize),
    pub occupied: usize,
    /// Occupied (bin_a, bin_b) cells in ascending order.
    pub cells: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub skill_dim: usize,
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    pub n_skills: usize,
    pub projections: Vec<ProjectionCoverage>,
    /// Occupied cells summed over projections.
    pub total_occupied: usize,
}

fn bin_of(x: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = ((x - lo) / (hi - lo) * bins as f64).floor();
    (t.max(0.0) as usize).min(bins - 1)
}

/// Grid occupancy of `points` over every pairwise dimension projection.
/// Out-of-range coordinates clamp into the edge bins, so the report is
/// total; adding points can only grow each occupied set.
pub fn coverage_report(
    points: &[Vec<f64>],
    skill_dim: usize,
    bins: usize,
    lo: f64,
    hi: f64,
) -> CoverageReport {
    assert!(skill_dim >= 1 && bins >= 1 && lo < hi);
    let pairs: Vec<(usize, usize)> = if skill_dim == 1 {
        vec![(0, 0)]
    } else {
        (0..skill_dim)
            .flat_map(|i| ((i + 1)..skill_dim).map(move |j| (i, j)))
            .collect()
    };
    let projections: Vec<ProjectionCoverage> = pairs
        .into_iter()
        .map(|(i, j)| {
            let cells: BTreeSet<(usize, usize)> = points
                .iter()
                .map(|p| (bin_of(p[i], lo, hi, bins), bin_of(p[j], lo, hi, bins)))
                .collect();
            ProjectionCoverage {
                dims: (i, j),
                occupied: cells.len(),
                cells: cells.into_iter().collect(),
            }
        })
        .collect();
    let total_occupied = projections.iter().map(|p| p.occupied).sum();
    CoverageReport { skill_dim, bins, lo, hi, n_skills: points.len(), projections, total_occupied }
}

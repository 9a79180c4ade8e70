//! Fixed-capacity skill archive with nearest-neighbor eviction.
//!
//! Safe executed features are committed one at a time. Under capacity a new
//! distinct skill is appended. At capacity the union R + {candidate} is
//! formed, every element's nearest-neighbor Mahalanobis distance under the
//! cached covariance is computed, and the single element with the smallest
//! distance is removed; evicting the most crowded point can only grow the
//! minimum pairwise distance, which drives the repertoire entropy bound up
//! over time.
//!
//! Tie rule: among elements achieving the minimum distance, the newly
//! committed candidate is evicted if it is among them, otherwise the
//! lowest-index entry goes. Established skills are preferred over newcomers.
//! An exact duplicate of an existing skill is the guaranteed argmin (distance
//! zero to its twin), so duplicates are rejected outright in every regime and
//! no two entries ever share identical skill vectors.
//!
//! The covariance is refreshed explicitly (once per sampling period in
//! training), never inside commit, so the metric stays constant while
//! entries churn. Commits maintain an incremental nearest-neighbor cache;
//! each at-capacity commit costs O(N) distances instead of O(N^2), and the
//! cache reproduces the brute-force scan bit for bit because every pairwise
//! distance value comes from the same deterministic computation.

use crate::linalg::{empirical_covariance, mahalanobis, nn_distances, CovMatrix, SkillVec};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RepertoireError {
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("version mismatch: expected {expected:?}, found {found:?}")]
    VersionMismatch { expected: String, found: String },
    #[error("malformed repertoire file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

const FORMAT_HEADER: &str = "skillrep repertoire v1";

#[derive(Debug, Clone, PartialEq)]
pub struct RepertoireEntry {
    pub skill: SkillVec,
    /// Kinematic snapshot of the state that produced the feature.
    pub raw_state: Vec<f64>,
    pub value_estimate: f64,
    pub step_added: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommitStats {
    pub appended: u64,
    pub evicted: u64,
    pub rejected_unsafe: u64,
    pub rejected_duplicate: u64,
    pub rejected_crowded: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitOutcome {
    /// Unsafe features never enter the archive.
    RejectedUnsafe,
    /// Exact duplicate of an existing skill.
    RejectedDuplicate,
    /// Appended under capacity.
    Appended,
    /// At capacity and the candidate itself was the crowding argmin.
    RejectedCrowded,
    /// At capacity; the entry at this (pre-removal) index was evicted.
    Evicted(usize),
}

#[derive(Debug, Clone)]
pub struct Repertoire {
    entries: Vec<RepertoireEntry>,
    capacity: usize,
    skill_dim: usize,
    state_dim: usize,
    cached_cov: CovMatrix,
    /// Per-entry nearest neighbor (index, distance) under cached_cov.
    nn: Vec<(usize, f64)>,
    nn_valid: bool,
    stats: CommitStats,
}

impl Repertoire {
    pub fn new(capacity: usize, skill_dim: usize, state_dim: usize) -> Self {
        assert!(capacity >= 1, "capacity must be positive");
        Self {
            entries: Vec::new(),
            capacity,
            skill_dim,
            state_dim,
            cached_cov: CovMatrix::identity(skill_dim),
            nn: Vec::new(),
            nn_valid: true,
            stats: CommitStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn skill_dim(&self) -> usize {
        self.skill_dim
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn entries(&self) -> &[RepertoireEntry] {
        &self.entries
    }

    pub fn stats(&self) -> CommitStats {
        self.stats
    }

    pub fn cached_cov(&self) -> &CovMatrix {
        &self.cached_cov
    }

    pub fn skills(&self) -> Vec<SkillVec> {
        self.entries.iter().map(|e| e.skill.clone()).collect()
    }

    /// Pin the metric explicitly. Diagnostics and tests; training uses
    /// [`Repertoire::refresh_covariance`].
    pub fn set_covariance(&mut self, cov: CovMatrix) {
        assert_eq!(cov.dim(), self.skill_dim);
        self.cached_cov = cov;
        self.nn_valid = false;
    }

    /// Recompute the cached covariance from current skills (N-1 divisor plus
    /// jitter). No-op below two entries. Called once per sampling period;
    /// commits between refreshes all see the same metric.
    pub fn refresh_covariance(&mut self) {
        if self.entries.len() >= 2 {
            let skills = self.skills();
            self.cached_cov =
                empirical_covariance(&skills).expect("jittered covariance is factorizable");
            self.nn_valid = false;
        }
    }

    fn ensure_nn(&mut self) {
        if self.nn_valid {
            return;
        }
        let n = self.entries.len();
        if n < 2 {
            self.nn = vec![(usize::MAX, f64::INFINITY); n];
        } else {
            let skills = self.skills();
            self.nn = nn_distances(&skills, &self.cached_cov)
                .expect("cached covariance must be factorizable");
        }
        self.nn_valid = true;
    }

    /// Smallest nearest-neighbor distance among entries, `None` below two.
    pub fn min_nn_distance(&mut self) -> Option<f64> {
        if self.entries.len() < 2 {
            return None;
        }
        self.ensure_nn();
        self.nn.iter().map(|&(_, d)| d).fold(None, |acc, d| match acc {
            Some(m) if m <= d => Some(m),
            _ => Some(d),
        })
    }

    fn dist(&self, a: &SkillVec, b: &SkillVec) -> f64 {
        mahalanobis(a, b, &self.cached_cov).expect("cached covariance must be factorizable")
    }

    pub fn commit(
        &mut self,
        skill: SkillVec,
        raw_state: Vec<f64>,
        is_safe: bool,
        step: u64,
    ) -> CommitOutcome {
        assert_eq!(skill.dim(), self.skill_dim, "skill dim mismatch");
        assert_eq!(raw_state.len(), self.state_dim, "raw state dim mismatch");
        if !is_safe {
            self.stats.rejected_unsafe += 1;
            return CommitOutcome::RejectedUnsafe;
        }
        if self.entries.iter().any(|e| e.skill == skill) {
            self.stats.rejected_duplicate += 1;
            return CommitOutcome::RejectedDuplicate;
        }
        self.ensure_nn();
        let entry = RepertoireEntry { skill, raw_state, value_estimate: 0.0, step_added: step };

        let n = self.entries.len();
        let d_cand: Vec<f64> = self.entries.iter().map(|e| self.dist(&e.skill, &entry.skill)).collect();

        if n < self.capacity {
            let new_idx = n;
            let mut best = (usize::MAX, f64::INFINITY);
            for (i, &d) in d_cand.iter().enumerate() {
                if d < best.1 {
                    best = (i, d);
                }
                // strict improvement only: on a tie the existing lower-index
                // neighbor stays
                if d < self.nn[i].1 {
                    self.nn[i] = (new_idx, d);
                }
            }
            self.entries.push(entry);
            self.nn.push(best);
            self.stats.appended += 1;
            return CommitOutcome::Appended;
        }

        // at capacity: each element of R + {candidate} gets its NN distance
        // within the union; candidate distances fold into the cached values
        let mut cand_nn = f64::INFINITY;
        for &d in &d_cand {
            if d < cand_nn {
                cand_nn = d;
            }
        }
        let mut entry_min = f64::INFINITY;
        let mut entry_arg = usize::MAX;
        for i in 0..n {
            let eff = self.nn[i].1.min(d_cand[i]);
            if eff < entry_min {
                entry_min = eff;
                entry_arg = i;
            }
        }
        if cand_nn <= entry_min {
            self.stats.rejected_crowded += 1;
            return CommitOutcome::RejectedCrowded;
        }
        let evicted_index = entry_arg;
        self.entries.remove(evicted_index);
        self.entries.push(entry);
        self.repair_nn_after_eviction(evicted_index, &d_cand);
        self.stats.evicted += 1;
        CommitOutcome::Evicted(evicted_index)
    }

    /// Rebuild the NN cache after removing old index `removed` and appending
    /// the candidate (whose distances to the old entries are `d_cand`).
    fn repair_nn_after_eviction(&mut self, removed: usize, d_cand: &[f64]) {
        let n = self.entries.len();
        let cand_new = n - 1;
        let map = |old: usize| if old < removed { old } else { old - 1 };
        let mut new_nn: Vec<(usize, f64)> = Vec::with_capacity(n);

        for old_j in (0..d_cand.len()).filter(|&j| j != removed) {
            let (old_idx, old_d) = self.nn[old_j];
            let mut best = if old_idx == removed {
                // orphaned: rescan against current entries (candidate's
                // distance comes out identical to d_cand[old_j] since the
                // computation is deterministic)
                let me = map(old_j);
                let mut b = (usize::MAX, f64::INFINITY);
                for k in 0..n {
                    if k == me {
                        continue;
                    }
                    let d = self.dist(&self.entries[me].skill, &self.entries[k].skill);
                    if d < b.1 {
                        b = (k, d);
                    }
                }
                b
            } else {
                (map(old_idx), old_d)
            };
            if d_cand[old_j] < best.1 {
                best = (cand_new, d_cand[old_j]);
            }
            new_nn.push(best);
        }

        let mut cand_best = (usize::MAX, f64::INFINITY);
        for old_j in (0..d_cand.len()).filter(|&j| j != removed) {
            if d_cand[old_j] < cand_best.1 {
                cand_best = (map(old_j), d_cand[old_j]);
            }
        }
        new_nn.push(cand_best);
        self.nn = new_nn;
        debug_assert_eq!(self.nn.len(), self.entries.len());
    }

    /// Replace an entry's value estimate.
    pub fn update_value(&mut self, index: usize, value: f64) -> Result<(), RepertoireError> {
        let len = self.entries.len();
        let e = self
            .entries
            .get_mut(index)
            .ok_or(RepertoireError::IndexOutOfRange { index, len })?;
        e.value_estimate = value;
        Ok(())
    }

    /// Exponential-moving-average update: v <- (1-weight) v + weight * value.
    pub fn update_value_ema(
        &mut self,
        index: usize,
        value: f64,
        weight: f64,
    ) -> Result<(), RepertoireError> {
        let len = self.entries.len();
        let e = self
            .entries
            .get_mut(index)
            .ok_or(RepertoireError::IndexOutOfRange { index, len })?;
        e.value_estimate = (1.0 - weight) * e.value_estimate + weight * value;
        Ok(())
    }

    /// Replace all skills at once (VAE re-encoding). Entry order, raw states,
    /// values, and steps are preserved; the caller refreshes the covariance.
    pub fn replace_skills(&mut self, skills: Vec<SkillVec>) {
        assert_eq!(skills.len(), self.entries.len());
        for (e, s) in self.entries.iter_mut().zip(skills) {
            assert_eq!(s.dim(), self.skill_dim);
            e.skill = s;
        }
        self.nn_valid = false;
    }

    /// Versioned text format: header, dims, capacity, entry count, then one
    /// flat record per line (skill, raw state, value, step). Floats are
    /// written in shortest round-trip form, so save -> load -> save is byte
    /// identical. Commit statistics and the cached covariance are derived or
    /// diagnostic state and are not persisted.
    pub fn save(&self, path: &Path) -> Result<(), RepertoireError> {
        let mut out = String::new();
        out.push_str(FORMAT_HEADER);
        out.push('\n');
        let _ = writeln!(out, "skill_dim {}", self.skill_dim);
        let _ = writeln!(out, "state_dim {}", self.state_dim);
        let _ = writeln!(out, "capacity {}", self.capacity);
        let _ = writeln!(out, "entries {}", self.entries.len());
        for e in &self.entries {
            let mut first = true;
            for v in e.skill.as_slice().iter().chain(&e.raw_state) {
                if !first {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
                first = false;
            }
            let _ = writeln!(out, " {} {}", e.value_estimate, e.step_added);
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Repertoire, RepertoireError> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or(RepertoireError::Malformed { line: 1, reason: "empty file".into() })?;
        if header != FORMAT_HEADER {
            return Err(RepertoireError::VersionMismatch {
                expected: FORMAT_HEADER.into(),
                found: header.into(),
            });
        }
        fn field(
            lines: &mut std::iter::Enumerate<std::str::Lines>,
            name: &str,
        ) -> Result<usize, RepertoireError> {
            let (i, l) = lines.next().ok_or(RepertoireError::Malformed {
                line: 0,
                reason: format!("missing {name} line"),
            })?;
            let line = i + 1;
            let mut parts = l.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(k), Some(v), None) if k == name => v.parse().map_err(|_| {
                    RepertoireError::Malformed { line, reason: format!("bad {name} value") }
                }),
                _ => Err(RepertoireError::Malformed { line, reason: format!("expected {name}") }),
            }
        }
        let skill_dim = field(&mut lines, "skill_dim")?;
        let state_dim = field(&mut lines, "state_dim")?;
        let capacity = field(&mut lines, "capacity")?;
        let count = field(&mut lines, "entries")?;
        if capacity == 0 || skill_dim == 0 {
            return Err(RepertoireError::Malformed {
                line: 2,
                reason: "capacity and skill_dim must be positive".into(),
            });
        }
        if count > capacity {
            return Err(RepertoireError::Malformed {
                line: 5,
                reason: format!("entry count {count} exceeds capacity {capacity}"),
            });
        }
        let mut rep = Repertoire::new(capacity, skill_dim, state_dim);
        for _ in 0..count {
            let (i, l) = lines.next().ok_or(RepertoireError::Malformed {
                line: 5 + count,
                reason: "truncated entry list".into(),
            })?;
            let line = i + 1;
            let fields: Vec<&str> = l.split_whitespace().collect();
            let expect = skill_dim + state_dim + 2;
            if fields.len() != expect {
                return Err(RepertoireError::Malformed {
                    line,
                    reason: format!("expected {expect} fields, got {}", fields.len()),
                });
            }
            let mut nums = Vec::with_capacity(skill_dim + state_dim + 1);
            for f in &fields[..skill_dim + state_dim + 1] {
                let v: f64 = f.parse().map_err(|_| RepertoireError::Malformed {
                    line,
                    reason: format!("bad float {f:?}"),
                })?;
                if !v.is_finite() {
                    return Err(RepertoireError::Malformed {
                        line,
                        reason: format!("non-finite value {f:?}"),
                    });
                }
                nums.push(v);
            }
            let step: u64 = fields[skill_dim + state_dim + 1].parse().map_err(|_| {
                RepertoireError::Malformed { line, reason: "bad step counter".into() }
            })?;
            rep.entries.push(RepertoireEntry {
                skill: SkillVec::new(nums[..skill_dim].to_vec()),
                raw_state: nums[skill_dim..skill_dim + state_dim].to_vec(),
                value_estimate: nums[skill_dim + state_dim],
                step_added: step,
            });
        }
        if lines.next().is_some() {
            return Err(RepertoireError::Malformed {
                line: 6 + count,
                reason: "trailing content".into(),
            });
        }
        // covariance is derived state: recompute on load
        rep.nn_valid = false;
        rep.refresh_covariance();
        Ok(rep)
    }
}

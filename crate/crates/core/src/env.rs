//! Phase-based quadruped crawler.
//!
//! Each leg is a phase oscillator; the action sets a normalized phase rate
//! per leg. A leg is in ground contact on the lower half of its cycle
//! (sin(theta) < 0). Contacting legs thrust the body forward in proportion
//! to their rate; frozen legs cannot thrust and drag when grounded. The
//! per-step cost is 1 minus the number of grounded legs, so a state is safe
//! exactly when at least one leg carries the body.
//!
//! `step` is a pure function: identical inputs give bit-identical outcomes,
//! and parallel rollouts need no coordination.

use crate::linalg::SkillVec;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

pub const NUM_LEGS: usize = 4;

/// Environment constants. Defaults are tuned so that diverse duty-factor
/// gaits exist and freezing a leg strictly penalizes gaits that load it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    /// Phase advance per step at full rate (radians).
    pub delta_theta_max: f64,
    /// Forward progress per step with all legs thrusting at full rate (m).
    pub k_thrust: f64,
    /// Drag per grounded frozen leg (m).
    pub k_drag: f64,
    /// Reward weight on forward progress.
    pub w_fwd: f64,
    /// Reward weight on the squared effective rates.
    pub w_eff: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self { delta_theta_max: 0.5, k_thrust: 0.1, k_drag: 0.02, w_fwd: 5.0, w_eff: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrawlerState {
    /// Body position along the track (m).
    pub x: f64,
    /// Leg phase angles, wrapped to [0, 2pi).
    pub phases: [f64; NUM_LEGS],
    pub step_count: u64,
}

impl CrawlerState {
    pub fn new(phases: [f64; NUM_LEGS]) -> Self {
        Self { x: 0.0, phases: phases.map(wrap_phase), step_count: 0 }
    }

    /// Kinematic snapshot: (cos, sin) per leg, 8 reals. Carries the full
    /// phase information without the angular discontinuity.
    pub fn snapshot(&self) -> [f64; 2 * NUM_LEGS] {
        let mut out = [0.0; 2 * NUM_LEGS];
        for (i, &th) in self.phases.iter().enumerate() {
            out[2 * i] = th.cos();
            out[2 * i + 1] = th.sin();
        }
        out
    }

    /// Inverse of [`CrawlerState::snapshot`] up to floating-point round
    /// trip through atan2. Position and step count are not part of the
    /// snapshot and are supplied by the caller.
    pub fn from_snapshot(snapshot: &[f64; 2 * NUM_LEGS], x: f64, step_count: u64) -> Self {
        let mut phases = [0.0; NUM_LEGS];
        for (i, p) in phases.iter_mut().enumerate() {
            *p = wrap_phase(snapshot[2 * i + 1].atan2(snapshot[2 * i]));
        }
        Self { x, phases, step_count }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrawlerAction {
    /// Normalized leg phase rates in [0, 1].
    pub rates: [f64; NUM_LEGS],
}

impl CrawlerAction {
    /// Rates are clamped to [0, 1]; non-finite entries become 0.
    pub fn new(rates: [f64; NUM_LEGS]) -> Self {
        Self { rates: rates.map(|r| if r.is_finite() { r.clamp(0.0, 1.0) } else { 0.0 }) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezeMode {
    /// Legs stop wherever they are when the damage is applied.
    AtCurrent,
    /// Legs snap to the given phase (radians, wrapped) and stop.
    AtValue(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DamageSpec {
    pub frozen_legs: [bool; NUM_LEGS],
    pub mode: FreezeMode,
}

impl DamageSpec {
    pub fn none() -> Self {
        Self { frozen_legs: [false; NUM_LEGS], mode: FreezeMode::AtCurrent }
    }

    pub fn freeze(legs: &[usize], mode: FreezeMode) -> Self {
        let mut frozen = [false; NUM_LEGS];
        for &l in legs {
            assert!(l < NUM_LEGS, "leg index {l} out of range");
            frozen[l] = true;
        }
        Self { frozen_legs: frozen, mode }
    }

    pub fn is_frozen(&self, leg: usize) -> bool {
        self.frozen_legs[leg]
    }

    pub fn any_frozen(&self) -> bool {
        self.frozen_legs.iter().any(|&f| f)
    }
}

/// One-time damage application: moves frozen legs for the at-value mode.
/// Subsequent [`step`] calls keep frozen legs where this left them.
pub fn apply_damage(state: &CrawlerState, damage: &DamageSpec) -> CrawlerState {
    let mut out = state.clone();
    if let FreezeMode::AtValue(theta) = damage.mode {
        let th = wrap_phase(theta);
        for (i, p) in out.phases.iter_mut().enumerate() {
            if damage.frozen_legs[i] {
                *p = th;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: CrawlerState,
    pub reward: f64,
    pub cost: f64,
    /// Contact indicators of the post-update phases, one per leg.
    pub features_heuristic: SkillVec,
    pub is_safe: bool,
}

fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU { 0.0 } else { w }
}

fn in_contact(theta: f64) -> bool {
    theta.sin() < 0.0
}

pub fn step(
    state: &CrawlerState,
    action: &CrawlerAction,
    damage: &DamageSpec,
    params: &EnvParams,
) -> StepOutcome {
    let mut u = [0.0; NUM_LEGS];
    let mut phases = [0.0; NUM_LEGS];
    for i in 0..NUM_LEGS {
        let rate = action.rates[i];
        let rate = if rate.is_finite() { rate.clamp(0.0, 1.0) } else { 0.0 };
        if damage.frozen_legs[i] {
            u[i] = 0.0;
            phases[i] = state.phases[i];
        } else {
            u[i] = rate;
            phases[i] = wrap_phase(state.phases[i] + rate * params.delta_theta_max);
        }
    }

    let mut thrust = 0.0;
    let mut drag = 0.0;
    let mut contacts = 0u32;
    let mut features = vec![0.0; NUM_LEGS];
    for i in 0..NUM_LEGS {
        if in_contact(phases[i]) {
            contacts += 1;
            features[i] = 1.0;
            thrust += u[i];
            if damage.frozen_legs[i] {
                drag += 1.0;
            }
        }
    }
    let delta_x = params.k_thrust / NUM_LEGS as f64 * thrust - params.k_drag * drag;
    let effort: f64 = u.iter().map(|v| v * v).sum();
    let reward = params.w_fwd * delta_x - params.w_eff * effort;
    let cost = 1.0 - contacts as f64;

    StepOutcome {
        next_state: CrawlerState {
            x: state.x + delta_x,
            phases,
            step_count: state.step_count + 1,
        },
        reward,
        cost,
        features_heuristic: SkillVec::new(features),
        is_safe: cost <= 0.0,
    }
}

/// Contact indicators of a state, matching what [`step`] reports for its
/// post-update phases.
pub fn features_of(state: &CrawlerState) -> SkillVec {
    SkillVec::new(
        state.phases.iter().map(|&th| if in_contact(th) { 1.0 } else { 0.0 }).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetMode {
    /// Fresh state: phases uniform in [0, 2pi), x = 0. Unit tests only.
    RandomPhases,
    /// Operation proceeds continuously; the current state carries over.
    Continue,
}

pub fn reset(rng: &mut impl Rng, mode: ResetMode, current: &CrawlerState) -> CrawlerState {
    match mode {
        ResetMode::Continue => current.clone(),
        ResetMode::RandomPhases => random_state(rng),
    }
}

/// Phases drawn uniformly in [0, 2pi), leg order. x and step count start at 0.
pub fn random_state(rng: &mut impl Rng) -> CrawlerState {
    let mut phases = [0.0; NUM_LEGS];
    for p in phases.iter_mut() {
        *p = rng.gen::<f64>() * TAU;
    }
    CrawlerState::new(phases)
}

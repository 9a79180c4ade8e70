//! Skill-conditioned constrained policy optimization.
//!
//! The policy is a small feedforward controller mapping (kinematic snapshot,
//! skill z) to leg rates. Critics are Monte-Carlo rollout estimates in the
//! cheap simulator: V, psi, and C are discounted sums of reward, features,
//! and cost over a fixed horizon. The actor ascends the smoothed objective
//!
//!   J = (1 - l1)(1 - l2) V - l1 (1 - l2) (||(1-gamma) psi - z|| - delta) - l2 C
//!
//! where the clipped multipliers l1(z), l2(z) are logistic functions of RBF
//! expansions over a fixed grid of skill-space anchors, updated by dual
//! ascent on the constraint violations. Policy gradients come from
//! antithetic evolution-strategy perturbations; evaluation rollouts are
//! deterministic (exploration noise only acts during collection), so a
//! perturbation pair shares its rollout outcomes by construction.
//!
//! `run_training` interleaves collection and training strictly
//! sequentially: sample a skill from the repertoire KDE (standard normal
//! before the first fit), act one sampling period committing safe executed
//! features, then update duals and policy on a batch of freshly sampled
//! skills. The train phase waits until the repertoire can support a KDE
//! fit, since training skills are defined as draws from it. Collection and
//! training could run concurrently (single repertoire writer, published
//! parameter versions); the sequential interleave is the default and the
//! reference behavior for a fixed seed.

use crate::env::{
    self, CrawlerAction, CrawlerState, DamageSpec, EnvParams, NUM_LEGS,
};
use crate::features::{reencode_repertoire, FeatureMap, VaeParams};
use crate::kde::{self, adaptive_threshold, entropy_lower_bound, KdeModel};
use crate::linalg::SkillVec;
use crate::metrics::PeriodMetrics;
use crate::repertoire::Repertoire;
use crate::rng::{substream, Stream};
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Two-layer controller: (snapshot [8] concat skill [D]) -> tanh hidden ->
/// logistic output, four rates in [0, 1] for any input.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    skill_dim: usize,
    hidden: usize,
    /// hidden x (8 + skill_dim), row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// 4 x hidden.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Gaussian rate-noise scale used during collection.
    pub exploration_noise: f64,
}

impl PolicyParams {
    /// Weights uniform in +-1/sqrt(fan_in) (w1 then w2, row-major), biases
    /// zero.
    pub fn init(
        rng: &mut impl Rng,
        skill_dim: usize,
        hidden: usize,
        exploration_noise: f64,
    ) -> Self {
        assert!(skill_dim >= 1 && hidden >= 1);
        let input = 2 * NUM_LEGS + skill_dim;
        let s1 = 1.0 / (input as f64).sqrt();
        let w1 = (0..hidden * input).map(|_| rng.gen_range(-s1..s1)).collect();
        let s2 = 1.0 / (hidden as f64).sqrt();
        let w2 = (0..NUM_LEGS * hidden).map(|_| rng.gen_range(-s2..s2)).collect();
        Self {
            skill_dim,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; NUM_LEGS],
            exploration_noise,
        }
    }

    /// All-zero weights; the shape receptacle for [`Self::with_flat`] when
    /// deserializing.
    pub fn zeros(skill_dim: usize, hidden: usize, exploration_noise: f64) -> Self {
        assert!(skill_dim >= 1 && hidden >= 1);
        let input = 2 * NUM_LEGS + skill_dim;
        Self {
            skill_dim,
            hidden,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; NUM_LEGS * hidden],
            b2: vec![0.0; NUM_LEGS],
            exploration_noise,
        }
    }

    pub fn skill_dim(&self) -> usize {
        self.skill_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Deterministic action: the evaluation-time policy.
    pub fn action(&self, state: &CrawlerState, z: &SkillVec) -> CrawlerAction {
        assert_eq!(z.dim(), self.skill_dim);
        let snap = state.snapshot();
        let input = 2 * NUM_LEGS + self.skill_dim;
        let mut h = vec![0.0; self.hidden];
        for (k, hk) in h.iter_mut().enumerate() {
            let row = &self.w1[k * input..(k + 1) * input];
            let mut acc = self.b1[k];
            for (i, &s) in snap.iter().enumerate() {
                acc += row[i] * s;
            }
            for (j, &zj) in z.as_slice().iter().enumerate() {
                acc += row[2 * NUM_LEGS + j] * zj;
            }
            *hk = acc.tanh();
        }
        let mut rates = [0.0; NUM_LEGS];
        for (o, r) in rates.iter_mut().enumerate() {
            let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
            let acc: f64 = self.b2[o] + row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
            *r = logistic(acc);
        }
        CrawlerAction { rates }
    }

    /// Collection-time action: deterministic rates plus Gaussian noise
    /// (four draws, leg order), clamped back into [0, 1].
    pub fn action_noisy(
        &self,
        state: &CrawlerState,
        z: &SkillVec,
        rng: &mut impl Rng,
    ) -> CrawlerAction {
        let mut a = self.action(state, z);
        for r in a.rates.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *r += self.exploration_noise * n;
        }
        CrawlerAction::new(a.rates)
    }

    /// Trainable weights in declaration order; exploration noise is a
    /// hyperparameter and stays out.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(
            self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len(),
        );
        for b in [&self.w1, &self.b1, &self.w2, &self.b2] {
            out.extend_from_slice(b);
        }
        out
    }

    pub fn with_flat(&self, flat: &[f64]) -> PolicyParams {
        let mut p = self.clone();
        let mut at = 0;
        for b in [&mut p.w1, &mut p.b1, &mut p.w2, &mut p.b2] {
            let len = b.len();
            b.copy_from_slice(&flat[at..at + len]);
            at += len;
        }
        assert_eq!(at, flat.len(), "flat parameter length mismatch");
        p
    }
}

/// Monte-Carlo critic estimates over one evaluation rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticEstimates {
    /// Discounted return.
    pub v: f64,
    /// Discounted feature sum; (1-gamma) psi approximates the expected
    /// feature.
    pub psi: SkillVec,
    /// Discounted cost.
    pub c: f64,
    pub horizon: usize,
}

/// Discounted sums of a (reward, feature, cost) step stream.
pub fn discounted_critics(
    steps: impl IntoIterator<Item = (f64, SkillVec, f64)>,
    gamma: f64,
) -> CriticEstimates {
    let mut iter = steps.into_iter();
    let (r0, phi0, c0) = iter.next().expect("at least one step");
    let mut v = r0;
    let mut c = c0;
    let mut psi = phi0.as_slice().to_vec();
    let mut horizon = 1;
    let mut disc = 1.0;
    for (r, phi, cost) in iter {
        disc *= gamma;
        v += disc * r;
        c += disc * cost;
        for (acc, &f) in psi.iter_mut().zip(phi.as_slice()) {
            *acc += disc * f;
        }
        horizon += 1;
    }
    CriticEstimates { v, psi: SkillVec::new(psi), c, horizon }
}

/// Deterministic evaluation rollout: exploration off, `horizon` steps from
/// `start`, features read off each post-update state.
pub fn rollout_eval(
    policy: &PolicyParams,
    features: &FeatureMap,
    z: &SkillVec,
    start: &CrawlerState,
    gamma: f64,
    horizon: usize,
    damage: &DamageSpec,
    params: &EnvParams,
) -> CriticEstimates {
    assert!(horizon >= 1);
    assert!(gamma > 0.0 && gamma < 1.0);
    let mut state = start.clone();
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let action = policy.action(&state, z);
        let out = env::step(&state, &action, damage, params);
        let phi = match features {
            FeatureMap::Heuristic => out.features_heuristic.clone(),
            FeatureMap::Vae(p) => p.encode(&out.next_state.snapshot()),
        };
        steps.push((out.reward, phi, out.cost));
        state = out.next_state;
    }
    discounted_critics(steps, gamma)
}

/// ||(1-gamma) psi - z||, the skill-matching constraint residual.
pub fn constraint_distance(est: &CriticEstimates, z: &SkillVec, gamma: f64) -> f64 {
    let scaled = SkillVec::new(est.psi.as_slice().iter().map(|&p| (1.0 - gamma) * p).collect());
    scaled.euclidean_distance(z)
}

/// The smoothed actor objective, exact evaluation.
pub fn actor_objective(
    est: &CriticEstimates,
    z: &SkillVec,
    lambda1: f64,
    lambda2: f64,
    delta: f64,
    gamma: f64,
) -> f64 {
    let dist = constraint_distance(est, z, gamma);
    (1.0 - lambda1) * (1.0 - lambda2) * est.v
        - lambda1 * (1.0 - lambda2) * (dist - delta)
        - lambda2 * est.c
}

/// Clipped dual multipliers: lambda_i(z) = logistic(sum_j coeff_j rbf_j(z))
/// over a fixed grid of anchors with rbf(d) = exp(-2 d^2 / width^2).
#[derive(Debug, Clone, PartialEq)]
pub struct DualParams {
    anchors: Vec<SkillVec>,
    width: f64,
    grid_per_dim: usize,
    grid_lo: f64,
    grid_hi: f64,
    pub coeff1: Vec<f64>,
    pub coeff2: Vec<f64>,
    /// Ablation switch: when false, lambda1 is pinned to 0 and its
    /// coefficients never move (the skill constraint drops out).
    pub lambda1_enabled: bool,
}

impl DualParams {
    /// Regular grid of per_dim^dim anchors spanning [lo, hi] per dimension
    /// (last dimension fastest); the RBF width equals the grid spacing.
    pub fn grid(skill_dim: usize, per_dim: usize, lo: f64, hi: f64) -> Self {
        assert!(skill_dim >= 1);
        assert!(per_dim >= 2, "grid needs at least two points per dimension");
        assert!(hi > lo);
        let spacing = (hi - lo) / (per_dim - 1) as f64;
        let count = per_dim.pow(skill_dim as u32);
        let mut anchors = Vec::with_capacity(count);
        for idx in 0..count {
            let mut rem = idx;
            let mut v = vec![0.0; skill_dim];
            for d in (0..skill_dim).rev() {
                v[d] = lo + (rem % per_dim) as f64 * spacing;
                rem /= per_dim;
            }
            anchors.push(SkillVec::new(v));
        }
        Self {
            anchors,
            width: spacing,
            grid_per_dim: per_dim,
            grid_lo: lo,
            grid_hi: hi,
            coeff1: vec![0.0; count],
            coeff2: vec![0.0; count],
            lambda1_enabled: true,
        }
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn skill_dim(&self) -> usize {
        self.anchors[0].dim()
    }

    pub fn grid_shape(&self) -> (usize, f64, f64) {
        (self.grid_per_dim, self.grid_lo, self.grid_hi)
    }

    pub fn anchors(&self) -> &[SkillVec] {
        &self.anchors
    }

    fn rbf(&self, z: &SkillVec) -> Vec<f64> {
        self.anchors
            .iter()
            .map(|a| {
                let d = a.euclidean_distance(z);
                (-2.0 * d * d / (self.width * self.width)).exp()
            })
            .collect()
    }

    fn activation(&self, coeff: &[f64], z: &SkillVec) -> f64 {
        coeff.iter().zip(self.rbf(z)).map(|(c, r)| c * r).sum()
    }

    pub fn lambda1(&self, z: &SkillVec) -> f64 {
        if !self.lambda1_enabled {
            return 0.0;
        }
        logistic(self.activation(&self.coeff1, z))
    }

    pub fn lambda2(&self, z: &SkillVec) -> f64 {
        logistic(self.activation(&self.coeff2, z))
    }
}

/// Dual ascent on the constraint violations at z: each coefficient moves by
/// lr * violation * rbf_j(z), so the change is confined to a neighborhood
/// of z. lambda1 responds to the skill-distance excess, lambda2 to the
/// cost critic.
pub fn dual_update(
    duals: &DualParams,
    z: &SkillVec,
    est: &CriticEstimates,
    delta: f64,
    gamma: f64,
    lr: f64,
) -> DualParams {
    assert!(lr > 0.0);
    let mut out = duals.clone();
    let rbf = duals.rbf(z);
    if duals.lambda1_enabled {
        let v1 = constraint_distance(est, z, gamma) - delta;
        for (c, r) in out.coeff1.iter_mut().zip(&rbf) {
            *c += lr * v1 * r;
        }
    }
    let v2 = est.c;
    for (c, r) in out.coeff2.iter_mut().zip(&rbf) {
        *c += lr * v2 * r;
    }
    out
}

/// Antithetic ES estimate with the perturbations supplied:
/// grad = (1 / (2 sigma n_used)) * sum (f(theta + sigma e) - f(theta - sigma e)) e.
/// Pairs with a non-finite objective are discarded (n_used shrinks).
pub fn es_gradient_with_eps(
    theta: &[f64],
    mut f: impl FnMut(&[f64]) -> f64,
    sigma: f64,
    eps_list: &[Vec<f64>],
) -> Vec<f64> {
    assert!(sigma > 0.0);
    let mut sum = vec![0.0; theta.len()];
    let mut used = 0usize;
    let mut pert = vec![0.0; theta.len()];
    for eps in eps_list {
        assert_eq!(eps.len(), theta.len());
        for (p, (t, e)) in pert.iter_mut().zip(theta.iter().zip(eps)) {
            *p = t + sigma * e;
        }
        let jp = f(&pert);
        for (p, (t, e)) in pert.iter_mut().zip(theta.iter().zip(eps)) {
            *p = t - sigma * e;
        }
        let jm = f(&pert);
        if !jp.is_finite() || !jm.is_finite() {
            continue;
        }
        let diff = jp - jm;
        for (s, e) in sum.iter_mut().zip(eps) {
            *s += diff * e;
        }
        used += 1;
    }
    if used == 0 {
        return sum;
    }
    let scale = 1.0 / (2.0 * sigma * used as f64);
    for s in sum.iter_mut() {
        *s *= scale;
    }
    sum
}

/// Draws n_pairs standard-normal perturbations (pair order, component
/// order) and delegates to [`es_gradient_with_eps`].
pub fn es_gradient(
    theta: &[f64],
    f: impl FnMut(&[f64]) -> f64,
    n_pairs: usize,
    sigma: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    assert!(n_pairs >= 1);
    let eps_list: Vec<Vec<f64>> = (0..n_pairs)
        .map(|_| (0..theta.len()).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    es_gradient_with_eps(theta, f, sigma, &eps_list)
}

/// One ES ascent step on the batch-mean smoothed objective. Multipliers are
/// evaluated once per batch element and held fixed across perturbations.
#[allow(clippy::too_many_arguments)]
pub fn policy_update(
    policy: &PolicyParams,
    batch: &[(SkillVec, CrawlerState)],
    duals: &DualParams,
    features: &FeatureMap,
    delta: f64,
    gamma: f64,
    horizon: usize,
    n_pairs: usize,
    es_sigma: f64,
    lr: f64,
    params: &EnvParams,
    rng: &mut impl Rng,
) -> PolicyParams {
    assert!(!batch.is_empty());
    let lambdas: Vec<(f64, f64)> =
        batch.iter().map(|(z, _)| (duals.lambda1(z), duals.lambda2(z))).collect();
    let no_damage = DamageSpec::none();
    let objective = |flat: &[f64]| -> f64 {
        let p = policy.with_flat(flat);
        let mut total = 0.0;
        for ((z, start), &(l1, l2)) in batch.iter().zip(&lambdas) {
            let est = rollout_eval(&p, features, z, start, gamma, horizon, &no_damage, params);
            total += actor_objective(&est, z, l1, l2, delta, gamma);
        }
        total / batch.len() as f64
    };
    let theta = policy.flatten();
    let grad = es_gradient(&theta, objective, n_pairs, es_sigma, rng);
    let stepped: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + lr * g).collect();
    policy.with_flat(&stepped)
}

/// Feature-function selection and, for the learned mode, its training
/// hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureConfig {
    Heuristic,
    Vae {
        latent_dim: usize,
        hidden: usize,
        learning_rate: f64,
        recon_scale: f64,
        batch_size: usize,
        /// Re-encode the repertoire every this many periods.
        reencode_every: u64,
    },
}

impl FeatureConfig {
    pub fn skill_dim(&self) -> usize {
        match self {
            FeatureConfig::Heuristic => NUM_LEGS,
            FeatureConfig::Vae { latent_dim, .. } => *latent_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub total_steps: u64,
    /// Steps per sampling period (one executed skill per period).
    pub sampling_period: u64,
    pub gamma: f64,
    pub horizon: usize,
    pub capacity: usize,
    /// Target distinct-skill count in the adaptive threshold.
    pub n_z: usize,
    /// Skills sampled per train phase.
    pub batch_size: usize,
    pub n_pairs: usize,
    pub es_sigma: f64,
    pub lr_policy: f64,
    pub lr_dual: f64,
    pub exploration_sigma: f64,
    pub policy_hidden: usize,
    /// Bounded buffer of visited states that rollouts start from.
    pub replay_capacity: usize,
    pub dual_grid_per_dim: usize,
    pub dual_grid_lo: f64,
    pub dual_grid_hi: f64,
    /// Ablation switch; false pins lambda1 to 0.
    pub distance_constraint_enabled: bool,
    pub features: FeatureConfig,
    pub env: EnvParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            total_steps: 200_000,
            sampling_period: 250,
            gamma: 0.9,
            horizon: 64,
            capacity: 4096,
            n_z: 512,
            batch_size: 16,
            n_pairs: 16,
            es_sigma: 0.05,
            lr_policy: 0.2,
            lr_dual: 0.5,
            exploration_sigma: 0.1,
            policy_hidden: 8,
            replay_capacity: 4096,
            dual_grid_per_dim: 3,
            dual_grid_lo: 0.0,
            dual_grid_hi: 1.0,
            distance_constraint_enabled: true,
            features: FeatureConfig::Heuristic,
            env: EnvParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        fn fail(field: &'static str, reason: impl Into<String>) -> Result<(), TrainError> {
            Err(TrainError::InvalidConfig { field, reason: reason.into() })
        }
        if self.sampling_period == 0 {
            return fail("sampling_period", "must be positive");
        }
        if self.total_steps % self.sampling_period != 0 {
            return fail(
                "total_steps",
                format!("must be a multiple of sampling_period {}", self.sampling_period),
            );
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma", "must lie in (0, 1)");
        }
        if self.horizon == 0 {
            return fail("horizon", "must be positive");
        }
        if self.horizon as u64 > self.sampling_period {
            return fail("horizon", "must not exceed sampling_period");
        }
        if self.capacity == 0 {
            return fail("capacity", "must be positive");
        }
        if self.n_z == 0 {
            return fail("n_z", "must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be positive");
        }
        if self.n_pairs == 0 {
            return fail("n_pairs", "must be positive");
        }
        if self.es_sigma <= 0.0 {
            return fail("es_sigma", "must be positive");
        }
        if self.lr_policy < 0.0 || self.lr_dual < 0.0 {
            return fail("lr_policy", "learning rates must be nonnegative");
        }
        if self.lr_dual == 0.0 {
            return fail("lr_dual", "must be positive");
        }
        if self.exploration_sigma < 0.0 {
            return fail("exploration_sigma", "must be nonnegative");
        }
        if self.policy_hidden == 0 {
            return fail("policy_hidden", "must be positive");
        }
        if self.replay_capacity < self.batch_size {
            return fail("replay_capacity", "must hold at least one batch");
        }
        if self.dual_grid_per_dim < 2 {
            return fail("dual_grid_per_dim", "needs at least two points per dimension");
        }
        if self.dual_grid_lo >= self.dual_grid_hi {
            return fail("dual_grid_lo", "grid bounds must be ordered");
        }
        if let FeatureConfig::Vae { latent_dim, hidden, learning_rate, recon_scale, batch_size, reencode_every } = &self.features {
            if *latent_dim == 0 || *hidden == 0 {
                return fail("features", "vae dimensions must be positive");
            }
            if *learning_rate < 0.0 {
                return fail("features", "vae learning rate must be nonnegative");
            }
            if *recon_scale <= 0.0 {
                return fail("features", "vae recon_scale must be positive");
            }
            if *batch_size == 0 {
                return fail("features", "vae batch size must be positive");
            }
            if *reencode_every == 0 {
                return fail("features", "reencode_every must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub policy: PolicyParams,
    pub duals: DualParams,
    pub repertoire: Repertoire,
    pub vae: Option<VaeParams>,
    pub metrics: Vec<PeriodMetrics>,
}

/// Interleaved collect/train loop. Randomness comes from four named
/// substreams of the config seed: env (initial state), policy (init,
/// exploration, ES perturbations, start-state picks), kde (skill draws),
/// vae (init and reparameterization noise).
pub fn run_training(config: &TrainConfig) -> Result<TrainResult, TrainError> {
    config.validate()?;
    let d = config.features.skill_dim();
    let mut env_rng = substream(config.seed, Stream::Env);
    let mut policy_rng = substream(config.seed, Stream::Policy);
    let mut kde_rng = substream(config.seed, Stream::Kde);
    let mut vae_rng = substream(config.seed, Stream::Vae);

    let mut policy =
        PolicyParams::init(&mut policy_rng, d, config.policy_hidden, config.exploration_sigma);
    let mut duals = DualParams::grid(
        d,
        config.dual_grid_per_dim,
        config.dual_grid_lo,
        config.dual_grid_hi,
    );
    duals.lambda1_enabled = config.distance_constraint_enabled;
    let mut vae = match &config.features {
        FeatureConfig::Heuristic => None,
        FeatureConfig::Vae { latent_dim, hidden, recon_scale, .. } => {
            Some(VaeParams::init(&mut vae_rng, *latent_dim, *hidden, *recon_scale))
        }
    };
    let mut rep = Repertoire::new(config.capacity, d, 2 * NUM_LEGS);
    let mut state = env::random_state(&mut env_rng);
    let mut replay: VecDeque<CrawlerState> = VecDeque::with_capacity(config.replay_capacity);
    let mut metrics = Vec::new();
    let no_damage = DamageSpec::none();
    let mut global_step = 0u64;

    let periods = config.total_steps / config.sampling_period;
    for period in 0..periods {
        // period-start snapshot: refresh the metric once, fit the KDE, fix
        // delta; commits during the period all see this covariance
        rep.refresh_covariance();
        let model = if rep.len() > d {
            Some(KdeModel::fit(&rep.skills()).expect("distinct entries give a usable fit"))
        } else {
            None
        };
        let delta = model
            .as_ref()
            .map(|m| adaptive_threshold(m, config.n_z).expect("fitted model yields a threshold"));
        let entropy_bound = model.as_ref().map(|m| {
            entropy_lower_bound(m).expect("fitted model yields an entropy bound")
        });
        let feature_map = match &vae {
            None => FeatureMap::Heuristic,
            Some(p) => FeatureMap::Vae(p.clone()),
        };

        let z_exec = match &model {
            Some(m) => kde::sample(m, &mut kde_rng).expect("fitted model samples"),
            None => kde::sample_initial(d, &mut kde_rng),
        };

        // collect one period
        let stats_before = rep.stats();
        let mut reward_sum = 0.0;
        let mut exec_steps: Vec<(f64, SkillVec, f64)> = Vec::with_capacity(config.horizon);
        for t in 0..config.sampling_period {
            let action = policy.action_noisy(&state, &z_exec, &mut policy_rng);
            let out = env::step(&state, &action, &no_damage, &config.env);
            let phi = match &feature_map {
                FeatureMap::Heuristic => out.features_heuristic.clone(),
                FeatureMap::Vae(p) => p.encode(&out.next_state.snapshot()),
            };
            rep.commit(phi.clone(), out.next_state.snapshot().to_vec(), out.is_safe, global_step);
            if replay.len() == config.replay_capacity {
                replay.pop_front();
            }
            replay.push_back(out.next_state.clone());
            if (t as usize) < config.horizon {
                exec_steps.push((out.reward, phi, out.cost));
            }
            reward_sum += out.reward;
            state = out.next_state;
            global_step += 1;
        }
        let exec = discounted_critics(exec_steps, config.gamma);
        let exec_dist = constraint_distance(&exec, &z_exec, config.gamma);

        // train on freshly sampled skills once the KDE exists
        let mut dist_violation_rate = None;
        let mut cost_violation_rate = None;
        let mut lambda1_mean = None;
        let mut lambda2_mean = None;
        let mut vae_elbo = None;
        let mut vae_step_skipped = None;
        let train_ran = model.is_some();
        if let (Some(m), Some(delta_v)) = (&model, delta) {
            let batch: Vec<(SkillVec, CrawlerState)> = (0..config.batch_size)
                .map(|_| {
                    let z = kde::sample(m, &mut kde_rng).expect("fitted model samples");
                    let s = replay[policy_rng.gen_range(0..replay.len())].clone();
                    (z, s)
                })
                .collect();
            let mut n_dist = 0usize;
            let mut n_cost = 0usize;
            for (z, s) in &batch {
                let est = rollout_eval(
                    &policy,
                    &feature_map,
                    z,
                    s,
                    config.gamma,
                    config.horizon,
                    &no_damage,
                    &config.env,
                );
                if constraint_distance(&est, z, config.gamma) > delta_v {
                    n_dist += 1;
                }
                if est.c > 0.0 {
                    n_cost += 1;
                }
                duals = dual_update(&duals, z, &est, delta_v, config.gamma, config.lr_dual);
            }
            dist_violation_rate = Some(n_dist as f64 / batch.len() as f64);
            cost_violation_rate = Some(n_cost as f64 / batch.len() as f64);
            lambda1_mean =
                Some(batch.iter().map(|(z, _)| duals.lambda1(z)).sum::<f64>() / batch.len() as f64);
            lambda2_mean =
                Some(batch.iter().map(|(z, _)| duals.lambda2(z)).sum::<f64>() / batch.len() as f64);

            policy = policy_update(
                &policy,
                &batch,
                &duals,
                &feature_map,
                delta_v,
                config.gamma,
                config.horizon,
                config.n_pairs,
                config.es_sigma,
                config.lr_policy,
                &config.env,
                &mut policy_rng,
            );

            if let (
                FeatureConfig::Vae { learning_rate, batch_size, reencode_every, .. },
                Some(vp),
            ) = (&config.features, &mut vae)
            {
                let raw_batch: Vec<Vec<f64>> = (0..*batch_size)
                    .map(|_| {
                        let i = vae_rng.gen_range(0..rep.len());
                        rep.entries()[i].raw_state.clone()
                    })
                    .collect();
                let (newp, info) = vp.train_step(&raw_batch, *learning_rate, &mut vae_rng);
                *vp = newp;
                vae_elbo = Some(info.elbo);
                vae_step_skipped = Some(info.skipped);
                if (period + 1) % reencode_every == 0 {
                    reencode_repertoire(vp, &mut rep);
                }
            }
        }

        let stats = rep.stats();
        metrics.push(PeriodMetrics {
            period,
            step_end: global_step,
            mean_reward: reward_sum / config.sampling_period as f64,
            repertoire_len: rep.len(),
            entropy_bound,
            min_nn_distance: rep.min_nn_distance(),
            delta,
            exec_skill: z_exec.as_slice().to_vec(),
            exec_dist,
            exec_dist_ok: delta.map(|dv| exec_dist <= dv),
            exec_cost_return: exec.c,
            exec_safe_ok: exec.c <= 0.0,
            train_ran,
            dist_violation_rate,
            cost_violation_rate,
            lambda1_mean,
            lambda2_mean,
            commits_appended: stats.appended - stats_before.appended,
            commits_evicted: stats.evicted - stats_before.evicted,
            commits_rejected_unsafe: stats.rejected_unsafe - stats_before.rejected_unsafe,
            commits_rejected_duplicate: stats.rejected_duplicate
                - stats_before.rejected_duplicate,
            commits_rejected_crowded: stats.rejected_crowded - stats_before.rejected_crowded,
            vae_elbo,
            vae_step_skipped,
        });
    }

    // final value population: evaluate each entry's skill from its origin
    // state under the trained policy
    let feature_map = match &vae {
        None => FeatureMap::Heuristic,
        Some(p) => FeatureMap::Vae(p.clone()),
    };
    for i in 0..rep.len() {
        let e = &rep.entries()[i];
        let raw: [f64; 2 * NUM_LEGS] =
            e.raw_state.as_slice().try_into().expect("stored raw state is a snapshot");
        let start = CrawlerState::from_snapshot(&raw, 0.0, 0);
        let skill = e.skill.clone();
        let est = rollout_eval(
            &policy,
            &feature_map,
            &skill,
            &start,
            config.gamma,
            config.horizon,
            &no_damage,
            &config.env,
        );
        rep.update_value(i, est.v).expect("index in range");
    }

    Ok(TrainResult { policy, duals, repertoire: rep, vae, metrics })
}

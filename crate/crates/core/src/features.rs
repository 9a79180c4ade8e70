//! Feature functions mapping crawler states to skill vectors.
//!
//! Two modes. The heuristic map reads the four contact indicators straight
//! off the state. The learned map runs the kinematic snapshot (cos, sin per
//! leg, 8 reals) through the encoder of a small variational autoencoder and
//! uses the posterior mean as a deterministic embedding; determinism is what
//! makes repertoire commits reproducible.
//!
//! The VAE is one hidden tanh layer on each side (8 -> H -> (mu, log var) in
//! R^D, D -> H -> 8), small enough for hand-written analytic gradients. The
//! single-sample ELBO is
//!
//!   -||x - decode(mu + sigma.eps)||^2 / (2 sigma_x^2)
//!     - (1/2) sum(mu^2 + sigma^2 - log sigma^2 - 1)
//!
//! with eps standard normal. Training ascends the batch-mean ELBO by plain
//! gradient steps; `recon_scale` (sigma_x) is a fixed hyperparameter, not a
//! trained block.

use crate::env::{self, CrawlerState, NUM_LEGS};
use crate::linalg::SkillVec;
use crate::repertoire::Repertoire;
use rand::Rng;
use rand_distr::StandardNormal;
use std::ops::Range;

/// Snapshot width: (cos, sin) per leg.
pub const VAE_INPUT: usize = 2 * NUM_LEGS;

#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    latent_dim: usize,
    hidden: usize,
    /// Observation noise scale sigma_x.
    pub recon_scale: f64,
    /// Encoder hidden layer, hidden x VAE_INPUT row-major.
    pub enc_w1: Vec<f64>,
    pub enc_b1: Vec<f64>,
    /// Posterior-mean head, latent x hidden.
    pub enc_w_mu: Vec<f64>,
    pub enc_b_mu: Vec<f64>,
    /// Log-variance head, latent x hidden.
    pub enc_w_lv: Vec<f64>,
    pub enc_b_lv: Vec<f64>,
    /// Decoder hidden layer, hidden x latent.
    pub dec_w1: Vec<f64>,
    pub dec_b1: Vec<f64>,
    /// Decoder output layer, VAE_INPUT x hidden.
    pub dec_w2: Vec<f64>,
    pub dec_b2: Vec<f64>,
}

/// Gradient of the ELBO with respect to every trained block of
/// [`VaeParams`], in the same layout.
#[derive(Debug, Clone)]
pub struct VaeGrad {
    pub enc_w1: Vec<f64>,
    pub enc_b1: Vec<f64>,
    pub enc_w_mu: Vec<f64>,
    pub enc_b_mu: Vec<f64>,
    pub enc_w_lv: Vec<f64>,
    pub enc_b_lv: Vec<f64>,
    pub dec_w1: Vec<f64>,
    pub dec_b1: Vec<f64>,
    pub dec_w2: Vec<f64>,
    pub dec_b2: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeTrainInfo {
    /// Batch-mean single-sample ELBO at the pre-step parameters.
    pub elbo: f64,
    /// True when a non-finite gradient forced the step to be skipped.
    pub skipped: bool,
}

/// Closed-form KL(N(mu, diag sigma^2) || N(0, I)).
pub fn kl_term(mu: &[f64], log_var: &[f64]) -> f64 {
    assert_eq!(mu.len(), log_var.len());
    0.5 * mu
        .iter()
        .zip(log_var)
        .map(|(&m, &lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}

fn matvec(w: &[f64], x: &[f64], rows: usize, cols: usize, b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    (0..rows)
        .map(|r| b[r] + w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

impl VaeParams {
    pub fn zeros(latent_dim: usize, hidden: usize, recon_scale: f64) -> Self {
        assert!(latent_dim >= 1 && hidden >= 1);
        assert!(recon_scale > 0.0);
        Self {
            latent_dim,
            hidden,
            recon_scale,
            enc_w1: vec![0.0; hidden * VAE_INPUT],
            enc_b1: vec![0.0; hidden],
            enc_w_mu: vec![0.0; latent_dim * hidden],
            enc_b_mu: vec![0.0; latent_dim],
            enc_w_lv: vec![0.0; latent_dim * hidden],
            enc_b_lv: vec![0.0; latent_dim],
            dec_w1: vec![0.0; hidden * latent_dim],
            dec_b1: vec![0.0; hidden],
            dec_w2: vec![0.0; VAE_INPUT * hidden],
            dec_b2: vec![0.0; VAE_INPUT],
        }
    }

    /// Weights uniform in +-1/sqrt(fan_in), biases zero. Weight blocks are
    /// drawn in declaration order, row-major within a block.
    pub fn init(rng: &mut impl Rng, latent_dim: usize, hidden: usize, recon_scale: f64) -> Self {
        let mut p = Self::zeros(latent_dim, hidden, recon_scale);
        let fill = |w: &mut Vec<f64>, fan_in: usize, rng: &mut dyn rand::RngCore| {
            let s = 1.0 / (fan_in as f64).sqrt();
            for v in w.iter_mut() {
                *v = rand::Rng::gen_range(rng, -s..s);
            }
        };
        fill(&mut p.enc_w1, VAE_INPUT, rng);
        fill(&mut p.enc_w_mu, hidden, rng);
        fill(&mut p.enc_w_lv, hidden, rng);
        fill(&mut p.dec_w1, latent_dim, rng);
        fill(&mut p.dec_w2, hidden, rng);
        p
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn enc_forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        assert_eq!(x.len(), VAE_INPUT, "raw state must be the {VAE_INPUT}-dim snapshot");
        let mut h = matvec(&self.enc_w1, x, self.hidden, VAE_INPUT, &self.enc_b1);
        for v in h.iter_mut() {
            *v = v.tanh();
        }
        let mu = matvec(&self.enc_w_mu, &h, self.latent_dim, self.hidden, &self.enc_b_mu);
        let lv = matvec(&self.enc_w_lv, &h, self.latent_dim, self.hidden, &self.enc_b_lv);
        (h, mu, lv)
    }

    fn decode(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(z.len(), self.latent_dim);
        let mut hd = matvec(&self.dec_w1, z, self.hidden, self.latent_dim, &self.dec_b1);
        for v in hd.iter_mut() {
            *v = v.tanh();
        }
        let xhat = matvec(&self.dec_w2, &hd, VAE_INPUT, self.hidden, &self.dec_b2);
        (hd, xhat)
    }

    /// Deterministic embedding: the posterior mean mu(raw_state).
    pub fn encode(&self, raw_state: &[f64]) -> SkillVec {
        let (_, mu, _) = self.enc_forward(raw_state);
        SkillVec::new(mu)
    }

    /// Single-sample ELBO with the reparameterization noise supplied, for
    /// finite-difference checks against [`VaeParams::grad_with_eps`].
    pub fn elbo_with_eps(&self, x: &[f64], eps: &[f64]) -> f64 {
        assert_eq!(eps.len(), self.latent_dim);
        let (_, mu, lv) = self.enc_forward(x);
        let z: Vec<f64> = (0..self.latent_dim)
            .map(|d| mu[d] + (0.5 * lv[d]).exp() * eps[d])
            .collect();
        let (_, xhat) = self.decode(&z);
        let sq: f64 = x.iter().zip(&xhat).map(|(a, b)| (a - b) * (a - b)).sum();
        -sq / (2.0 * self.recon_scale * self.recon_scale) - kl_term(&mu, &lv)
    }

    /// Draws eps ~ N(0, I) (latent order) and evaluates the ELBO.
    pub fn elbo(&self, x: &[f64], rng: &mut impl Rng) -> f64 {
        let eps: Vec<f64> = (0..self.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
        self.elbo_with_eps(x, &eps)
    }

    /// Analytic ELBO gradient through the network and the reparameterized
    /// sample. Returns (elbo, gradient).
    pub fn grad_with_eps(&self, x: &[f64], eps: &[f64]) -> (f64, VaeGrad) {
        assert_eq!(eps.len(), self.latent_dim);
        let (h, mu, lv) = self.enc_forward(x);
        let sigma: Vec<f64> = lv.iter().map(|&v| (0.5 * v).exp()).collect();
        let z: Vec<f64> = (0..self.latent_dim).map(|d| mu[d] + sigma[d] * eps[d]).collect();
        let (hd, xhat) = self.decode(&z);

        let sq: f64 = x.iter().zip(&xhat).map(|(a, b)| (a - b) * (a - b)).sum();
        let elbo = -sq / (2.0 * self.recon_scale * self.recon_scale) - kl_term(&mu, &lv);

        let mut g = VaeGrad {
            enc_w1: vec![0.0; self.enc_w1.len()],
            enc_b1: vec![0.0; self.enc_b1.len()],
            enc_w_mu: vec![0.0; self.enc_w_mu.len()],
            enc_b_mu: vec![0.0; self.enc_b_mu.len()],
            enc_w_lv: vec![0.0; self.enc_w_lv.len()],
            enc_b_lv: vec![0.0; self.enc_b_lv.len()],
            dec_w1: vec![0.0; self.dec_w1.len()],
            dec_b1: vec![0.0; self.dec_b1.len()],
            dec_w2: vec![0.0; self.dec_w2.len()],
            dec_b2: vec![0.0; self.dec_b2.len()],
        };

        // reconstruction term back through the decoder
        let inv_var = 1.0 / (self.recon_scale * self.recon_scale);
        let g_xhat: Vec<f64> = x.iter().zip(&xhat).map(|(a, b)| (a - b) * inv_var).collect();
        for o in 0..VAE_INPUT {
            for k in 0..self.hidden {
                g.dec_w2[o * self.hidden + k] = g_xhat[o] * hd[k];
            }
            g.dec_b2[o] = g_xhat[o];
        }
        let mut g_hd_pre = vec![0.0; self.hidden];
        for k in 0..self.hidden {
            let mut acc = 0.0;
            for o in 0..VAE_INPUT {
                acc += self.dec_w2[o * self.hidden + k] * g_xhat[o];
            }
            g_hd_pre[k] = acc * (1.0 - hd[k] * hd[k]);
        }
        for k in 0..self.hidden {
            for d in 0..self.latent_dim {
                g.dec_w1[k * self.latent_dim + d] = g_hd_pre[k] * z[d];
            }
            g.dec_b1[k] = g_hd_pre[k];
        }
        let mut g_z = vec![0.0; self.latent_dim];
        for d in 0..self.latent_dim {
            let mut acc = 0.0;
            for k in 0..self.hidden {
                acc += self.dec_w1[k * self.latent_dim + d] * g_hd_pre[k];
            }
            g_z[d] = acc;
        }

        // z = mu + sigma.eps, plus the KL term's direct dependence
        let g_mu: Vec<f64> = (0..self.latent_dim).map(|d| g_z[d] - mu[d]).collect();
        let g_lv: Vec<f64> = (0..self.latent_dim)
            .map(|d| g_z[d] * 0.5 * sigma[d] * eps[d] - 0.5 * (lv[d].exp() - 1.0))
            .collect();

        for d in 0..self.latent_dim {
            for k in 0..self.hidden {
                g.enc_w_mu[d * self.hidden + k] = g_mu[d] * h[k];
                g.enc_w_lv[d * self.hidden + k] = g_lv[d] * h[k];
            }
            g.enc_b_mu[d] = g_mu[d];
            g.enc_b_lv[d] = g_lv[d];
        }
        let mut g_h_pre = vec![0.0; self.hidden];
        for k in 0..self.hidden {
            let mut acc = 0.0;
            for d in 0..self.latent_dim {
                acc += self.enc_w_mu[d * self.hidden + k] * g_mu[d];
                acc += self.enc_w_lv[d * self.hidden + k] * g_lv[d];
            }
            g_h_pre[k] = acc * (1.0 - h[k] * h[k]);
        }
        for k in 0..self.hidden {
            for i in 0..VAE_INPUT {
                g.enc_w1[k * VAE_INPUT + i] = g_h_pre[k] * x[i];
            }
            g.enc_b1[k] = g_h_pre[k];
        }

        (elbo, g)
    }

    /// One ascent step on the batch-mean single-sample ELBO. One eps draw
    /// per batch element, in batch order. A non-finite gradient or ELBO
    /// leaves the parameters untouched and sets the skip flag.
    pub fn train_step(
        &self,
        batch: &[Vec<f64>],
        learning_rate: f64,
        rng: &mut impl Rng,
    ) -> (VaeParams, VaeTrainInfo) {
        assert!(!batch.is_empty(), "train_step needs a non-empty batch");
        let mut flat_sum = vec![0.0; self.flatten_trainable().len()];
        let mut elbo_sum = 0.0;
        for x in batch {
            let eps: Vec<f64> =
                (0..self.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
            let (e, g) = self.grad_with_eps(x, &eps);
            elbo_sum += e;
            for (acc, v) in flat_sum.iter_mut().zip(g.flatten()) {
                *acc += v;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        let elbo = elbo_sum * scale;
        if !elbo.is_finite() || flat_sum.iter().any(|v| !v.is_finite()) {
            return (self.clone(), VaeTrainInfo { elbo, skipped: true });
        }
        let mut flat = self.flatten_trainable();
        for (p, g) in flat.iter_mut().zip(&flat_sum) {
            *p += learning_rate * g * scale;
        }
        (self.with_trainable(&flat), VaeTrainInfo { elbo, skipped: false })
    }

    /// Trained blocks concatenated in declaration order.
    pub fn flatten_trainable(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for b in [
            &self.enc_w1, &self.enc_b1, &self.enc_w_mu, &self.enc_b_mu, &self.enc_w_lv,
            &self.enc_b_lv, &self.dec_w1, &self.dec_b1, &self.dec_w2, &self.dec_b2,
        ] {
            out.extend_from_slice(b);
        }
        out
    }

    pub fn with_trainable(&self, flat: &[f64]) -> VaeParams {
        let mut p = self.clone();
        let mut at = 0;
        for b in [
            &mut p.enc_w1, &mut p.enc_b1, &mut p.enc_w_mu, &mut p.enc_b_mu, &mut p.enc_w_lv,
            &mut p.enc_b_lv, &mut p.dec_w1, &mut p.dec_b1, &mut p.dec_w2, &mut p.dec_b2,
        ] {
            let len = b.len();
            b.copy_from_slice(&flat[at..at + len]);
            at += len;
        }
        assert_eq!(at, flat.len(), "flat parameter length mismatch");
        p
    }

    /// Named spans of each block inside the flattened layout.
    pub fn block_spans(&self) -> Vec<(&'static str, Range<usize>)> {
        let lens = [
            ("enc_w1", self.enc_w1.len()),
            ("enc_b1", self.enc_b1.len()),
            ("enc_w_mu", self.enc_w_mu.len()),
            ("enc_b_mu", self.enc_b_mu.len()),
            ("enc_w_lv", self.enc_w_lv.len()),
            ("enc_b_lv", self.enc_b_lv.len()),
            ("dec_w1", self.dec_w1.len()),
            ("dec_b1", self.dec_b1.len()),
            ("dec_w2", self.dec_w2.len()),
            ("dec_b2", self.dec_b2.len()),
        ];
        let mut at = 0;
        lens.iter()
            .map(|&(name, len)| {
                let r = at..at + len;
                at += len;
                (name, r)
            })
            .collect()
    }
}

impl VaeGrad {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for b in [
            &self.enc_w1, &self.enc_b1, &self.enc_w_mu, &self.enc_b_mu, &self.enc_w_lv,
            &self.enc_b_lv, &self.dec_w1, &self.dec_b1, &self.dec_w2, &self.dec_b2,
        ] {
            out.extend_from_slice(b);
        }
        out
    }
}

/// Replace every entry's skill with encode(raw_state) and refresh the
/// repertoire covariance. Raw states, values, and step counters survive.
pub fn reencode_repertoire(params: &VaeParams, rep: &mut Repertoire) {
    assert_eq!(rep.state_dim(), VAE_INPUT);
    assert_eq!(rep.skill_dim(), params.latent_dim);
    let skills: Vec<SkillVec> =
        rep.entries().iter().map(|e| params.encode(&e.raw_state)).collect();
    rep.replace_skills(skills);
    rep.refresh_covariance();
}

/// The feature function, selectable per experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    /// Contact indicators, one per leg.
    Heuristic,
    /// VAE posterior mean over the kinematic snapshot.
    Vae(VaeParams),
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::Heuristic => NUM_LEGS,
            FeatureMap::Vae(p) => p.latent_dim(),
        }
    }

    pub fn features(&self, state: &CrawlerState) -> SkillVec {
        match self {
            FeatureMap::Heuristic => env::features_of(state),
            FeatureMap::Vae(p) => p.encode(&state.snapshot()),
        }
    }
}

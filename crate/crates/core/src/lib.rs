//! Skill-repertoire learning for a crawling robot.
//!
//! The library builds a diversity-maximizing archive of skills (time-averaged
//! behavior features), samples training targets from a kernel density estimate
//! over that archive, trains a skill-conditioned policy under safety and
//! skill-tracking constraints with a smoothed Lagrangian objective, and
//! recovers from actuator damage in a handful of trials with Bayesian
//! optimization over the archive.
//!
//! Modules are layered bottom-up:
//!
//! * [`linalg`] - skill vectors, covariance with Cholesky factorization,
//!   Mahalanobis distances, nearest neighbors
//! * [`kde`] - Gaussian KDE over the repertoire: sampling, log density,
//!   entropy estimate and its closed-form lower bound, adaptive threshold
//! * [`repertoire`] - fixed-capacity skill archive with
//!   nearest-neighbor eviction and text persistence
//! * [`env`] - deterministic multi-legged crawler with contact dynamics,
//!   safety costs, and damage injection
//! * [`features`] - heuristic contact features and a small VAE with
//!   hand-written gradients for unsupervised features
//! * [`learner`] - constrained skill-conditioned policy learning with
//!   evolution-strategies updates and RBF-local dual ascent
//! * [`adapt`] - few-trial damage adaptation: Matern-5/2 GP posterior over
//!   repertoire skills, UCB trial selection, exhaustive baseline
//! * [`persist`] - versioned text serialization for policy, dual, and VAE
//!   parameters
//! * [`metrics`] - per-period training metrics records
//! * [`rng`] - one seed, named deterministic substreams

pub mod adapt;
pub mod env;
pub mod features;
pub mod kde;
pub mod learner;
pub mod linalg;
pub mod metrics;
pub mod persist;
pub mod repertoire;
pub mod rng;

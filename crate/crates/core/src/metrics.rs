//! Per-period training metrics.
//!
//! One record per sampling period, serializable as line-delimited JSON.
//! Fields that only exist once the KDE is fitted (entropy bound, threshold,
//! train-phase statistics) are optional and null before the first fit.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodMetrics {
    pub period: u64,
    /// Environment steps completed by the end of this period.
    pub step_end: u64,
    /// Mean per-step reward over the period.
    pub mean_reward: f64,
    pub repertoire_len: usize,
    pub entropy_bound: Option<f64>,
    pub min_nn_distance: Option<f64>,
    /// Adaptive constraint threshold for this period.
    pub delta: Option<f64>,
    /// Skill executed during the period.
    pub exec_skill: Vec<f64>,
    /// ||(1-gamma) psi_exec - z|| over the first `horizon` executed steps.
    pub exec_dist: f64,
    /// exec_dist <= delta; None before the threshold exists.
    pub exec_dist_ok: Option<bool>,
    /// Discounted cost over the first `horizon` executed steps.
    pub exec_cost_return: f64,
    pub exec_safe_ok: bool,
    /// False while the train phase is still waiting for the first KDE fit.
    pub train_ran: bool,
    /// Fraction of the train batch violating the distance constraint.
    pub dist_violation_rate: Option<f64>,
    /// Fraction of the train batch with positive discounted cost.
    pub cost_violation_rate: Option<f64>,
    pub lambda1_mean: Option<f64>,
    pub lambda2_mean: Option<f64>,
    /// Commit outcomes during this period.
    pub commits_appended: u64,
    pub commits_evicted: u64,
    pub commits_rejected_unsafe: u64,
    pub commits_rejected_duplicate: u64,
    pub commits_rejected_crowded: u64,
    /// Batch-mean ELBO of this period's VAE step, learned features only.
    pub vae_elbo: Option<f64>,
    pub vae_step_skipped: Option<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serializes_options_as_nulls() {
        let m = PeriodMetrics {
            period: 3,
            step_end: 1000,
            mean_reward: 0.25,
            repertoire_len: 12,
            entropy_bound: None,
            min_nn_distance: Some(0.5),
            delta: None,
            exec_skill: vec![1.0, 0.0],
            exec_dist: 0.4,
            exec_dist_ok: None,
            exec_cost_return: -1.5,
            exec_safe_ok: true,
            train_ran: false,
            dist_violation_rate: None,
            cost_violation_rate: None,
            lambda1_mean: None,
            lambda2_mean: None,
            commits_appended: 7,
            commits_evicted: 0,
            commits_rejected_unsafe: 2,
            commits_rejected_duplicate: 5,
            commits_rejected_crowded: 0,
            vae_elbo: None,
            vae_step_skipped: None,
        };
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"entropy_bound\":null"));
        assert!(json.contains("\"min_nn_distance\":0.5"));
        let back: PeriodMetrics = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of MS-VBx inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// Acoustic scaling factor applied to emissions.
    pub fa: f64,
    /// Speaker-regularization scaling factor applied to the prior KL term.
    pub fb: f64,
    pub p_loop: f64,
    /// Mean activity below which a stream counts as silent.
    pub tau: f64,
    pub max_iters: usize,
    pub elbo_rel_tol: f64,
    pub pi_drop_eps: f64,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            fa: 0.4,
            fb: 17.0,
            p_loop: 0.8,
            tau: 0.05,
            max_iters: 40,
            elbo_rel_tol: 1e-6,
            pi_drop_eps: 1e-6,
            seed: 0,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.fa > 0.0 && self.fa.is_finite()) {
            return bad(format!("fa must be positive, got {}", self.fa));
        }
        if !(self.fb > 0.0 && self.fb.is_finite()) {
            return bad(format!("fb must be positive, got {}", self.fb));
        }
        if !(self.p_loop > 0.0 && self.p_loop < 1.0) {
            return bad(format!("p_loop must lie in (0,1), got {}", self.p_loop));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0,1), got {}", self.tau));
        }
        if !(self.elbo_rel_tol >= 0.0) {
            return bad(format!("elbo_rel_tol must be >= 0, got {}", self.elbo_rel_tol));
        }
        if !(self.pi_drop_eps >= 0.0 && self.pi_drop_eps < 1.0) {
            return bad(format!("pi_drop_eps must lie in [0,1), got {}", self.pi_drop_eps));
        }
        Ok(())
    }

    pub fn fa_over_fb(&self) -> f64 {
        self.fa / self.fb
    }
}

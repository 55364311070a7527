use std::f64::consts::PI;

use crate::config::InferenceConfig;
use crate::error::{Error, Result};
use crate::features::StreamFeatures;
use crate::hmm::StateSpace;

/// Gaussian `q(y_g) = N(alpha, diag(precision)^-1)` over a speaker's latent.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerPosterior {
    pub alpha: Vec<f64>,
    pub precision: Vec<f64>,
}

impl SpeakerPosterior {
    pub fn prior(dim: usize) -> Self {
        Self {
            alpha: vec![0.0; dim],
            precision: vec![1.0; dim],
        }
    }

    /// `KL(q(y) || N(0, I))`.
    pub fn kl_to_prior(&self) -> f64 {
        0.5 * self
            .alpha
            .iter()
            .zip(&self.precision)
            .map(|(a, l)| 1.0 / l + a * a - 1.0 + l.ln())
            .sum::<f64>()
    }
}

/// Closed-form `q(Y)` update for fixed occupancies `gamma` (`T × S`).
///
/// With `n_g = Σ_t Σ_{s∋g} γ_ts` and `r_g = Σ_t Σ_{(s,c)∈S_g} γ_ts ρ_t^c`,
/// `L_g = 1 + (F_A/F_B) n_g φ` and `α_g = (F_A/F_B) r_g / L_g`, elementwise.
pub fn update_speaker_posteriors(
    space: &StateSpace,
    gamma: &[Vec<f64>],
    feats: &StreamFeatures,
    phi: &[f64],
    cfg: &InferenceConfig,
) -> Result<Vec<SpeakerPosterior>> {
    let dim = feats.dim();
    check_dims(phi, dim, gamma.len(), feats.num_chunks())?;
    let sqrt_phi: Vec<f64> = phi.iter().map(|p| p.sqrt()).collect();
    let mut occupancy = vec![0.0; space.num_speakers()];
    let mut weighted = vec![vec![0.0; dim]; space.num_speakers()];
    for (t, row) in gamma.iter().enumerate() {
        let x_t = feats.chunk(t);
        for (s, &g_ts) in row.iter().enumerate() {
            if g_ts == 0.0 {
                continue;
            }
            let tuple = space.state(s);
            if tuple.len() != x_t.len() {
                return Err(Error::Internal(format!(
                    "occupancy on state {s} of size {} in chunk {t} with {} streams",
                    tuple.len(),
                    x_t.len()
                )));
            }
            for (c, &g) in tuple.iter().enumerate() {
                occupancy[g] += g_ts;
                for ((acc, &x), &sp) in weighted[g].iter_mut().zip(&x_t[c]).zip(&sqrt_phi) {
                    *acc += g_ts * sp * x;
                }
            }
        }
    }
    let ratio = cfg.fa_over_fb();
    Ok(occupancy
        .iter()
        .zip(&weighted)
        .map(|(&n, r)| {
            let precision: Vec<f64> = phi.iter().map(|p| 1.0 + ratio * n * p).collect();
            let alpha = r.iter().zip(&precision).map(|(r, l)| ratio * r / l).collect();
            SpeakerPosterior { alpha, precision }
        })
        .collect())
}

fn check_dims(phi: &[f64], dim: usize, rows: usize, chunks: usize) -> Result<()> {
    if phi.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: phi.len(),
        });
    }
    if rows != chunks {
        return Err(Error::DimensionMismatch {
            expected: chunks,
            got: rows,
        });
    }
    Ok(())
}

/// Per-iteration cache of the speaker-dependent emission terms.
pub struct Emitter<'a> {
    space: &'a StateSpace,
    posteriors: &'a [SpeakerPosterior],
    sqrt_phi: Vec<f64>,
    /// `½ Σ_d φ_d (1/L_gd + α_gd²)` per speaker.
    trace_term: Vec<f64>,
    fa: f64,
}

impl<'a> Emitter<'a> {
    pub fn new(
        space: &'a StateSpace,
        posteriors: &'a [SpeakerPosterior],
        phi: &[f64],
        cfg: &InferenceConfig,
    ) -> Self {
        let trace_term = posteriors
            .iter()
            .map(|q| {
                0.5 * phi
                    .iter()
                    .zip(&q.alpha)
                    .zip(&q.precision)
                    .map(|((p, a), l)| p * (1.0 / l + a * a))
                    .sum::<f64>()
            })
            .collect();
        Self {
            space,
            posteriors,
            sqrt_phi: phi.iter().map(|p| p.sqrt()).collect(),
            trace_term,
            fa: cfg.fa,
        }
    }

    /// `log p̄(x_t | s)` for every state; `-inf` where `C_s ≠ Ĉ_t`.
    pub fn log_emission(&self, t: usize, x_t: &[Vec<f64>]) -> Result<Vec<f64>> {
        let k = x_t.len();
        let allowed = self.space.states_of_size(k);
        if allowed.is_empty() {
            return Err(Error::NoAllowedState {
                chunk: t,
                active: k,
                max: self.space.max_state_size(),
            });
        }
        let dim = self.sqrt_phi.len();
        let norm = -0.5 * dim as f64 * (2.0 * PI).ln();
        let self_term: Vec<f64> = x_t
            .iter()
            .map(|x| norm - 0.5 * x.iter().map(|v| v * v).sum::<f64>())
            .collect();
        // α_gᵀ ρ_t^c for every speaker and stream.
        let cross: Vec<Vec<f64>> = self
            .posteriors
            .iter()
            .map(|q| {
                x_t.iter()
                    .map(|x| {
                        q.alpha
                            .iter()
                            .zip(x)
                            .zip(&self.sqrt_phi)
                            .map(|((a, x), sp)| a * sp * x)
                            .sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        let mut out = vec![f64::NEG_INFINITY; self.space.num_states()];
        for &s in allowed {
            let mut acc = 0.0;
            for (c, &g) in self.space.state(s).iter().enumerate() {
                acc += cross[g][c] - self.trace_term[g] + self_term[c];
            }
            out[s] = self.fa * acc;
        }
        Ok(out)
    }
}

/// Emission vector for one chunk; convenience wrapper over [`Emitter`].
pub fn state_log_emission(
    space: &StateSpace,
    posteriors: &[SpeakerPosterior],
    x_t: &[Vec<f64>],
    phi: &[f64],
    cfg: &InferenceConfig,
) -> Result<Vec<f64>> {
    Emitter::new(space, posteriors, phi, cfg).log_emission(0, x_t)
}

use std::collections::BTreeSet;

use crate::cahc::{init_occupancy, ClusterAssignment, INIT_SMOOTHING};
use crate::config::InferenceConfig;
use crate::error::{Error, Result};
use crate::features::StreamFeatures;
use crate::hmm::{
    build_state_space, forward_backward, update_speaker_posteriors, Emitter, HmmParams,
    SpeakerPosterior, StateSpace,
};

/// Re-estimates `π` from expected entry counts, then drops retained states
/// whose share falls below `eps` and renormalizes.
pub fn update_pi(entry: &[f64], retained: &[bool], p_loop: f64, eps: f64) -> Result<HmmParams> {
    let total: f64 = entry
        .iter()
        .zip(retained)
        .filter(|(_, &r)| r)
        .map(|(e, _)| e)
        .sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateModel);
    }
    let mut keep: Vec<bool> = retained.to_vec();
    for (s, k) in keep.iter_mut().enumerate() {
        if *k && entry[s] / total < eps {
            *k = false;
        }
    }
    let kept: f64 = entry
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(e, _)| e)
        .sum();
    if !(kept > 0.0) {
        return Err(Error::DegenerateModel);
    }
    let pi = entry
        .iter()
        .zip(&keep)
        .map(|(&e, &k)| if k { e / kept } else { 0.0 })
        .collect();
    Ok(HmmParams {
        pi,
        retained: keep,
        p_loop,
    })
}

/// `log_evidence - F_B Σ_g KL(q(y_g) || N(0, I))`.
pub fn elbo(log_evidence: f64, posteriors: &[SpeakerPosterior], cfg: &InferenceConfig) -> f64 {
    log_evidence - cfg.fb * posteriors.iter().map(SpeakerPosterior::kl_to_prior).sum::<f64>()
}

/// Snapshot handed to observers after each full update cycle.
#[derive(Debug)]
pub struct IterationState<'a> {
    pub iter: usize,
    /// `T × S`; rows of silent chunks are zero.
    pub gamma: &'a [Vec<f64>],
    /// `π` after re-estimation and dropping.
    pub pi: &'a [f64],
    pub elbo: f64,
    pub retained_states: usize,
    pub retained_speakers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VbTrace {
    pub elbo: Vec<f64>,
    pub retained_states: Vec<usize>,
    pub retained_speakers: Vec<usize>,
    pub gamma: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct VbOutput {
    pub trace: VbTrace,
    /// Speaker per active stream of each chunk; empty for silent chunks.
    pub labels: Vec<Vec<usize>>,
    pub num_speakers: usize,
    pub space: StateSpace,
}

impl VbOutput {
    /// Hard labels flattened in chunk-major active-stream order.
    pub fn flat_labels(&self) -> Vec<usize> {
        self.labels.iter().flatten().copied().collect()
    }
}

/// Lowest-index argmax of each chunk's occupancy over states of its size.
pub fn hard_labels(space: &StateSpace, gamma: &[Vec<f64>], active_counts: &[usize]) -> Vec<Vec<usize>> {
    gamma
        .iter()
        .zip(active_counts)
        .map(|(row, &k)| {
            let mut best: Option<usize> = None;
            for &s in space.states_of_size(k) {
                if best.is_none_or(|b| row[s] > row[b]) {
                    best = Some(s);
                }
            }
            best.map_or_else(Vec::new, |s| space.state(s).to_vec())
        })
        .collect()
}

fn retained_speaker_count(space: &StateSpace, params: &HmmParams) -> usize {
    let mut speakers = BTreeSet::new();
    for (s, &keep) in params.retained.iter().enumerate() {
        if keep {
            speakers.extend(space.state(s).iter().copied());
        }
    }
    speakers.len()
}

pub fn run_msvbx(
    feats: &StreamFeatures,
    phi: &[f64],
    init: &ClusterAssignment,
    cfg: &InferenceConfig,
) -> Result<VbOutput> {
    run_msvbx_observed(feats, phi, init, cfg, |_| {})
}

/// MS-VBx coordinate ascent from a cAHC initialization.
///
/// Each cycle updates `q(Y)` from the current occupancies, recomputes
/// emissions, runs forward-backward over the non-silent chunks, re-estimates
/// `π` (dropping negligible states) and evaluates the ELBO. Stops after
/// `max_iters` cycles or when the relative ELBO change drops below
/// `elbo_rel_tol`.
pub fn run_msvbx_observed(
    feats: &StreamFeatures,
    phi: &[f64],
    init: &ClusterAssignment,
    cfg: &InferenceConfig,
    mut observer: impl FnMut(&IterationState<'_>),
) -> Result<VbOutput> {
    cfg.validate()?;
    let counts = feats.active_counts();
    let max_streams = feats.max_active_count().max(1);
    let space = build_state_space(init.num_clusters.max(1), max_streams)?;
    let mut gamma = init_occupancy(init, &counts, &space, INIT_SMOOTHING)?;
    let mut params = HmmParams::uniform(space.num_states(), cfg.p_loop);
    let chain: Vec<usize> = (0..counts.len()).filter(|&t| counts[t] > 0).collect();

    let mut trace = VbTrace {
        elbo: Vec::new(),
        retained_states: Vec::new(),
        retained_speakers: Vec::new(),
        gamma: Vec::new(),
        pi: Vec::new(),
    };
    if !chain.is_empty() {
        for iter in 0..cfg.max_iters {
            let posteriors = update_speaker_posteriors(&space, &gamma, feats, phi, cfg)?;
            let emitter = Emitter::new(&space, &posteriors, phi, cfg);
            let emissions = chain
                .iter()
                .map(|&t| emitter.log_emission(t, feats.chunk(t)))
                .collect::<Result<Vec<_>>>()?;
            let fb = forward_backward(&emissions, &params).map_err(|e| match e {
                Error::InfeasibleChunk(row) => Error::InfeasibleChunk(chain[row]),
                other => other,
            })?;
            for (row, &t) in fb.gamma.into_iter().zip(&chain) {
                gamma[t] = row;
            }
            params = update_pi(&fb.entry, &params.retained, cfg.p_loop, cfg.pi_drop_eps)?;
            let value = elbo(fb.log_evidence, &posteriors, cfg);
            let speakers = retained_speaker_count(&space, &params);
            observer(&IterationState {
                iter,
                gamma: &gamma,
                pi: &params.pi,
                elbo: value,
                retained_states: params.num_retained(),
                retained_speakers: speakers,
            });
            let previous = trace.elbo.last().copied();
            trace.elbo.push(value);
            trace.retained_states.push(params.num_retained());
            trace.retained_speakers.push(speakers);
            if let Some(prev) = previous {
                if (value - prev).abs() < cfg.elbo_rel_tol * value.abs() {
                    break;
                }
            }
        }
    }

    let labels = hard_labels(&space, &gamma, &counts);
    let num_speakers = labels.iter().flatten().collect::<BTreeSet<_>>().len();
    trace.gamma = gamma;
    trace.pi = params.pi;
    Ok(VbOutput {
        trace,
        labels,
        num_speakers,
        space,
    })
}

//! Single-stream VBx: one speaker per state, dense `S × S` transition
//! matrix. Kept as a separate code path; on single-stream input MS-VBx must
//! reproduce it exactly.

use std::f64::consts::PI;

use crate::cahc::{ClusterAssignment, INIT_SMOOTHING};
use crate::config::InferenceConfig;
use crate::error::{Error, Result};
use crate::features::StreamFeatures;
use crate::hmm::{build_state_space, log_sum_exp, IterationState, VbOutput, VbTrace, GAMMA_FLOOR};

pub fn run_vbx(
    feats: &StreamFeatures,
    phi: &[f64],
    init: &ClusterAssignment,
    cfg: &InferenceConfig,
) -> Result<VbOutput> {
    run_vbx_observed(feats, phi, init, cfg, |_| {})
}

pub fn run_vbx_observed(
    feats: &StreamFeatures,
    phi: &[f64],
    init: &ClusterAssignment,
    cfg: &InferenceConfig,
    mut observer: impl FnMut(&IterationState<'_>),
) -> Result<VbOutput> {
    cfg.validate()?;
    if feats.max_active_count() > 1 {
        return Err(Error::InvalidConfig(
            "single-stream VBx needs at most one active stream per chunk".into(),
        ));
    }
    if phi.len() != feats.dim() {
        return Err(Error::DimensionMismatch {
            expected: feats.dim(),
            got: phi.len(),
        });
    }
    let n_spk = init.num_clusters.max(1);
    let dim = feats.dim();
    let chain: Vec<usize> = (0..feats.num_chunks())
        .filter(|&t| feats.active_count(t) == 1)
        .collect();
    if init.labels.len() != chain.len() {
        return Err(Error::Internal("assignment does not match active chunks".into()));
    }
    let x: Vec<&[f64]> = chain.iter().map(|&t| feats.chunk(t)[0].as_slice()).collect();
    let rho: Vec<Vec<f64>> = x
        .iter()
        .map(|v| v.iter().zip(phi).map(|(a, p)| a * p.sqrt()).collect())
        .collect();

    let mut gamma: Vec<Vec<f64>> = init
        .labels
        .iter()
        .map(|&g| {
            if n_spk == 1 {
                vec![1.0]
            } else {
                let mut row = vec![INIT_SMOOTHING / (n_spk - 1) as f64; n_spk];
                row[g] = 1.0 - INIT_SMOOTHING;
                row
            }
        })
        .collect();
    let mut pi = vec![1.0 / n_spk as f64; n_spk];
    let mut alive = vec![true; n_spk];
    let mut trace = VbTrace {
        elbo: Vec::new(),
        retained_states: Vec::new(),
        retained_speakers: Vec::new(),
        gamma: Vec::new(),
        pi: Vec::new(),
    };
    let ratio = cfg.fa / cfg.fb;
    let (p, steps) = (cfg.p_loop, chain.len());
    let expand = |gamma: &[Vec<f64>]| {
        let mut full = vec![vec![0.0; n_spk]; feats.num_chunks()];
        for (row, &t) in gamma.iter().zip(&chain) {
            full[t] = row.clone();
        }
        full
    };

    for iter in 0..if steps == 0 { 0 } else { cfg.max_iters } {
        let mut inv_l = vec![vec![0.0; dim]; n_spk];
        let mut alpha = vec![vec![0.0; dim]; n_spk];
        for g in 0..n_spk {
            let n_g: f64 = gamma.iter().map(|row| row[g]).sum();
            for d in 0..dim {
                let r: f64 = gamma.iter().zip(&rho).map(|(row, r)| row[g] * r[d]).sum();
                inv_l[g][d] = 1.0 / (1.0 + ratio * n_g * phi[d]);
                alpha[g][d] = ratio * inv_l[g][d] * r;
            }
        }
        let log_p: Vec<Vec<f64>> = (0..steps)
            .map(|t| {
                let xx: f64 = x[t].iter().map(|v| v * v).sum();
                (0..n_spk)
                    .map(|g| {
                        let dot: f64 = (0..dim).map(|d| alpha[g][d] * rho[t][d]).sum();
                        let tr: f64 = (0..dim)
                            .map(|d| phi[d] * (inv_l[g][d] + alpha[g][d] * alpha[g][d]))
                            .sum();
                        cfg.fa * (dot - 0.5 * tr - 0.5 * dim as f64 * (2.0 * PI).ln() - 0.5 * xx)
                    })
                    .collect()
            })
            .collect();

        let log_a: Vec<Vec<f64>> = (0..n_spk)
            .map(|i| {
                (0..n_spk)
                    .map(|j| ((1.0 - p) * pi[j] + if i == j { p } else { 0.0 }).ln())
                    .collect()
            })
            .collect();
        let mut lf = vec![vec![0.0; n_spk]; steps];
        for j in 0..n_spk {
            lf[0][j] = pi[j].ln() + log_p[0][j];
        }
        for t in 1..steps {
            for j in 0..n_spk {
                let incoming: Vec<f64> = (0..n_spk).map(|i| lf[t - 1][i] + log_a[i][j]).collect();
                lf[t][j] = log_p[t][j] + log_sum_exp(&incoming);
            }
        }
        let mut lb = vec![vec![0.0; n_spk]; steps];
        for t in (0..steps - 1).rev() {
            for i in 0..n_spk {
                let outgoing: Vec<f64> = (0..n_spk)
                    .map(|j| log_a[i][j] + log_p[t + 1][j] + lb[t + 1][j])
                    .collect();
                lb[t][i] = log_sum_exp(&outgoing);
            }
        }
        let log_z = log_sum_exp(&lf[steps - 1]);
        if !log_z.is_finite() {
            return Err(Error::InfeasibleChunk(chain[0]));
        }
        for t in 0..steps {
            for g in 0..n_spk {
                let v = (lf[t][g] + lb[t][g] - log_z).exp();
                gamma[t][g] = if v < GAMMA_FLOOR { 0.0 } else { v };
            }
            let total: f64 = gamma[t].iter().sum();
            gamma[t].iter_mut().for_each(|v| *v /= total);
        }

        let mut entry = gamma[0].clone();
        for t in 1..steps {
            for j in 0..n_spk {
                if pi[j] == 0.0 {
                    continue;
                }
                let into = ((1.0 - p) * pi[j]).ln() + log_p[t][j] + lb[t][j] - log_z;
                entry[j] += lf[t - 1].iter().map(|f| (f + into).exp()).sum::<f64>();
            }
        }
        let total: f64 = (0..n_spk).filter(|&g| alive[g]).map(|g| entry[g]).sum();
        for g in 0..n_spk {
            if alive[g] && entry[g] / total < cfg.pi_drop_eps {
                alive[g] = false;
            }
        }
        let kept: f64 = (0..n_spk).filter(|&g| alive[g]).map(|g| entry[g]).sum();
        if !(kept > 0.0) {
            return Err(Error::DegenerateModel);
        }
        for g in 0..n_spk {
            pi[g] = if alive[g] { entry[g] / kept } else { 0.0 };
        }

        let kl: f64 = (0..n_spk)
            .map(|g| {
                0.5 * (0..dim)
                    .map(|d| inv_l[g][d] + alpha[g][d] * alpha[g][d] - 1.0 - inv_l[g][d].ln())
                    .sum::<f64>()
            })
            .sum();
        let value = log_z - cfg.fb * kl;
        let retained = alive.iter().filter(|&&a| a).count();
        let full = expand(&gamma);
        observer(&IterationState {
            iter,
            gamma: &full,
            pi: &pi,
            elbo: value,
            retained_states: retained,
            retained_speakers: retained,
        });
        let previous = trace.elbo.last().copied();
        trace.elbo.push(value);
        trace.retained_states.push(retained);
        trace.retained_speakers.push(retained);
        if let Some(prev) = previous {
            if (value - prev).abs() < cfg.elbo_rel_tol * value.abs() {
                break;
            }
        }
    }

    let mut labels = vec![Vec::new(); feats.num_chunks()];
    for (row, &t) in gamma.iter().zip(&chain) {
        let mut best = 0;
        for g in 1..n_spk {
            if row[g] > row[best] {
                best = g;
            }
        }
        labels[t] = vec![best];
    }
    let mut used: Vec<usize> = labels.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    trace.gamma = expand(&gamma);
    trace.pi = pi;
    Ok(VbOutput {
        trace,
        labels,
        num_speakers: used.len(),
        space: build_state_space(n_spk, 1)?,
    })
}

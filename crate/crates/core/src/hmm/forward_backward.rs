//! Log-domain forward-backward for the loop-mixture transition
//! `p(s | s') = (1 - P_loop) π_s + δ(s, s') P_loop`.
//!
//! The transition is a diagonal plus a rank-one term, so each step costs
//! `O(S)` instead of `O(S²)`: the rank-one part only needs the log-sum of the
//! previous forward (or next backward) vector.

use crate::error::{Error, Result};

/// Occupancies below this are flushed to zero.
pub const GAMMA_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams {
    /// Entry distribution; zero for dropped states.
    pub pi: Vec<f64>,
    pub retained: Vec<bool>,
    pub p_loop: f64,
}

impl HmmParams {
    pub fn uniform(num_states: usize, p_loop: f64) -> Self {
        Self {
            pi: vec![1.0 / num_states as f64; num_states],
            retained: vec![true; num_states],
            p_loop,
        }
    }

    pub fn num_retained(&self) -> usize {
        self.retained.iter().filter(|&&r| r).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbOutput {
    pub gamma: Vec<Vec<f64>>,
    pub log_evidence: f64,
    /// Expected number of entries into each state through the non-emitting
    /// node: initial occupancy plus non-loop transition responsibilities.
    pub entry: Vec<f64>,
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Exact state posteriors of the chain whose rows are `log_emissions`.
pub fn forward_backward(log_emissions: &[Vec<f64>], params: &HmmParams) -> Result<FbOutput> {
    let s_count = params.pi.len();
    let steps = log_emissions.len();
    if steps == 0 {
        return Ok(FbOutput {
            gamma: Vec::new(),
            log_evidence: 0.0,
            entry: vec![0.0; s_count],
        });
    }
    for (t, row) in log_emissions.iter().enumerate() {
        if row.len() != s_count {
            return Err(Error::DimensionMismatch {
                expected: s_count,
                got: row.len(),
            });
        }
        if !row.iter().any(|v| v.is_finite()) {
            return Err(Error::InfeasibleChunk(t));
        }
    }
    let log_pi: Vec<f64> = params.pi.iter().map(|p| p.ln()).collect();
    let log_loop = params.p_loop.ln();
    let log_leave = (1.0 - params.p_loop).ln();

    let mut fwd = vec![vec![0.0; s_count]; steps];
    // log Σ_s fwd[t][s], cached for the rank-one term.
    let mut fwd_total = vec![0.0; steps];
    for s in 0..s_count {
        fwd[0][s] = log_pi[s] + log_emissions[0][s];
    }
    fwd_total[0] = log_sum_exp(&fwd[0]);
    for t in 1..steps {
        let enter = log_leave + fwd_total[t - 1];
        for s in 0..s_count {
            let e = log_emissions[t][s];
            fwd[t][s] = if e == f64::NEG_INFINITY {
                e
            } else {
                e + log_add(log_loop + fwd[t - 1][s], enter + log_pi[s])
            };
        }
        fwd_total[t] = log_sum_exp(&fwd[t]);
    }
    let log_evidence = fwd_total[steps - 1];
    if !log_evidence.is_finite() {
        let t = fwd_total.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::InfeasibleChunk(t));
    }

    let mut bwd = vec![vec![0.0; s_count]; steps];
    let mut scratch = vec![0.0; s_count];
    for t in (0..steps - 1).rev() {
        for s in 0..s_count {
            scratch[s] = log_emissions[t + 1][s] + bwd[t + 1][s];
        }
        let leave: Vec<f64> = (0..s_count).map(|s| log_pi[s] + scratch[s]).collect();
        let leave = log_leave + log_sum_exp(&leave);
        for s in 0..s_count {
            bwd[t][s] = log_add(log_loop + scratch[s], leave);
        }
    }

    let mut gamma = vec![vec![0.0; s_count]; steps];
    for t in 0..steps {
        let row = &mut gamma[t];
        for s in 0..s_count {
            let g = (fwd[t][s] + bwd[t][s] - log_evidence).exp();
            row[s] = if g < GAMMA_FLOOR { 0.0 } else { g };
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|g| *g /= total);
    }

    let mut entry = gamma[0].clone();
    for t in 1..steps {
        let base = log_leave + fwd_total[t - 1] - log_evidence;
        for s in 0..s_count {
            let e = log_emissions[t][s];
            if e == f64::NEG_INFINITY || log_pi[s] == f64::NEG_INFINITY {
                continue;
            }
            entry[s] += (base + log_pi[s] + e + bwd[t][s]).exp();
        }
    }
    Ok(FbOutput {
        gamma,
        log_evidence,
        entry,
    })
}

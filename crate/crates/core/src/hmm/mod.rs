//! Multi-stream Bayesian HMM (MS-VBx).
//!
//! States are ordered tuples of distinct speakers, so one state explains all
//! active streams of a chunk at once and no speaker can appear twice in a
//! chunk. Speaker models are tied across states. With one stream per chunk
//! the model is plain single-stream VBx.

mod forward_backward;
mod posterior;
mod state_space;
mod vb;

pub use forward_backward::{forward_backward, log_sum_exp, FbOutput, HmmParams, GAMMA_FLOOR};
pub use posterior::{state_log_emission, update_speaker_posteriors, Emitter, SpeakerPosterior};
pub use state_space::{build_state_space, StateSpace};
pub use vb::{
    elbo, hard_labels, run_msvbx, run_msvbx_observed, update_pi, IterationState, VbOutput, VbTrace,
};

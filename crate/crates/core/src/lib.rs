//! Multi-stream Bayesian HMM clustering (MS-VBx) of chunked speaker
//! embeddings from end-to-end neural diarization front-ends.
//!
//! The pipeline reads a [`recording::ChunkedRecording`], projects its active
//! streams with a trained [`plda::PldaBackend`], initializes speakers with
//! constrained AHC ([`cahc`]), refines them with variational inference over
//! ordered speaker tuples ([`hmm`]) and stitches the per-chunk labels into
//! speaker tracks ([`stitch`]). [`scorer`] evaluates RTTM output and
//! [`synth`] samples recordings with known ground truth.

pub mod cahc;
pub mod config;
pub mod error;
pub mod features;
pub mod hmm;
pub mod pipeline;
pub mod plda;
pub mod recording;
pub mod scorer;
pub mod stitch;
pub mod synth;
pub mod vbx;

pub use config::InferenceConfig;
pub use error::{Error, Result};
pub use pipeline::{cluster_recording, Mode, PipelineConfig};
pub use plda::PldaBackend;
pub use recording::ChunkedRecording;

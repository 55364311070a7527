//! End-to-end clustering of one recording: active-stream detection, backend
//! projection, cAHC initialization, VB inference, stitching and smoothing.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cahc::{constrained_ahc, CannotLinkSet, ClusterAssignment};
use crate::config::InferenceConfig;
use crate::error::{Error, Result};
use crate::features::StreamFeatures;
use crate::hmm::{run_msvbx, VbOutput};
use crate::plda::{l2_normalize, PldaBackend};
use crate::recording::ChunkedRecording;
use crate::stitch::{stitch, DiarizationResult};
use crate::vbx::run_vbx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Msvbx,
    /// Single-stream VBx; only valid when no chunk has two active streams.
    Vbx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(flatten)]
    pub inference: InferenceConfig,
    pub cahc_threshold: f64,
    pub lda_dim: usize,
    pub activity_threshold: f64,
    pub median_window: f64,
    pub mode: Mode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inference: InferenceConfig::default(),
            cahc_threshold: 0.8,
            lda_dim: 32,
            activity_threshold: 0.5,
            median_window: 1.0,
            mode: Mode::Msvbx,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.inference.validate()?;
        if !(self.cahc_threshold > 0.0 && self.cahc_threshold.is_finite()) {
            return Err(Error::InvalidConfig("cahc_threshold must be positive".into()));
        }
        if self.lda_dim == 0 {
            return Err(Error::InvalidConfig("lda_dim must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.activity_threshold) {
            return Err(Error::InvalidConfig("activity_threshold must lie in [0, 1]".into()));
        }
        if !(self.median_window >= 0.0 && self.median_window.is_finite()) {
            return Err(Error::InvalidConfig("median_window must be >= 0".into()));
        }
        Ok(())
    }
}

/// One line of the per-recording diagnostics trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub elbo: f64,
    pub retained_states: usize,
    pub retained_speakers: usize,
}

#[derive(Debug, Clone)]
pub struct ClusterOutcome {
    /// Median-filtered result, as written to RTTM.
    pub result: DiarizationResult,
    pub init: ClusterAssignment,
    pub vb: VbOutput,
    pub diagnostics: Vec<IterationRecord>,
}

impl ClusterOutcome {
    pub fn diagnostics_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for rec in &self.diagnostics {
            let _ = writeln!(out, "{}", serde_json::to_string(rec)?);
        }
        Ok(out)
    }
}

/// Clusters already-projected features from a canonical (active-first)
/// recording; cAHC runs on the L2-normalized features.
pub fn cluster_features(
    canonical: &ChunkedRecording,
    feats: &StreamFeatures,
    phi: &[f64],
    cfg: &PipelineConfig,
) -> Result<ClusterOutcome> {
    cfg.validate()?;
    let normalized = feats
        .flat()
        .into_iter()
        .map(l2_normalize)
        .collect::<Result<Vec<_>>>()?;
    let constraints = CannotLinkSet::from_recording(canonical);
    let init = constrained_ahc(&normalized, &constraints, cfg.cahc_threshold)?;
    log::debug!(
        "{}: cAHC found {} clusters over {} streams",
        canonical.recording_id(),
        init.num_clusters,
        normalized.len()
    );
    let vb = match cfg.mode {
        Mode::Msvbx => run_msvbx(feats, phi, &init, &cfg.inference)?,
        Mode::Vbx => run_vbx(feats, phi, &init, &cfg.inference)?,
    };
    let diagnostics = (0..vb.trace.elbo.len())
        .map(|i| IterationRecord {
            iter: i,
            elbo: vb.trace.elbo[i],
            retained_states: vb.trace.retained_states[i],
            retained_speakers: vb.trace.retained_speakers[i],
        })
        .collect();
    let result = stitch(canonical, &vb.labels, cfg.activity_threshold)?.median_filtered(cfg.median_window);
    Ok(ClusterOutcome {
        result,
        init,
        vb,
        diagnostics,
    })
}

pub fn cluster_recording(
    rec: &ChunkedRecording,
    backend: &PldaBackend,
    cfg: &PipelineConfig,
) -> Result<ClusterOutcome> {
    cfg.validate()?;
    if rec.embed_dim() != backend.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: backend.input_dim(),
            got: rec.embed_dim(),
        });
    }
    let canonical = rec.with_active_streams(cfg.inference.tau)?;
    let feats = StreamFeatures::project(&canonical, backend)?;
    cluster_features(&canonical, &feats, backend.phi(), cfg)
}

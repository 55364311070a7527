//! Chunked multi-stream recordings and the MSVB1 interchange format.
//!
//! A recording holds, for each chunk `t` and output stream `c`, one speaker
//! embedding of dimension `D` and a frame-level activity track of length `N`.
//! After [`ChunkedRecording::with_active_streams`] the streams of each chunk
//! are in canonical order: the `Ĉ_t` active streams occupy positions
//! `0..Ĉ_t`, and the permutation applied is kept so that results can be mapped
//! back to the front-end's original stream positions.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"MSVB1\n";
const HEADER_LEN: usize = 6 + 4 * 4 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedRecording {
    recording_id: String,
    num_chunks: usize,
    num_streams: usize,
    embed_dim: usize,
    frames_per_chunk: usize,
    frame_step: f32,
    /// T·C·N, chunk-major, stream-minor, frame-minor.
    activities: Vec<f32>,
    /// T·C·D, same nesting as `activities`.
    embeddings: Vec<f32>,
    active_counts: Vec<usize>,
    /// `stream_order[t][p]` is the original stream index now stored at position `p`.
    stream_order: Vec<Vec<usize>>,
}

/// Result of thresholding mean stream activity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveStreams {
    pub counts: Vec<usize>,
    /// Per chunk, a stable active-first permutation of `0..C`.
    pub order: Vec<Vec<usize>>,
}

/// Counts the streams of each chunk whose mean activity reaches `tau`.
///
/// A stream is active when `mean(a) >= tau`; equality counts as active.
pub fn detect_active_streams(
    activities: &[f32],
    num_chunks: usize,
    num_streams: usize,
    frames_per_chunk: usize,
    tau: f64,
) -> Result<ActiveStreams> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidConfig(format!("tau must lie in (0,1), got {tau}")));
    }
    let expected = num_chunks * num_streams * frames_per_chunk;
    if activities.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: activities.len(),
        });
    }
    let mut counts = Vec::with_capacity(num_chunks);
    let mut order = Vec::with_capacity(num_chunks);
    for t in 0..num_chunks {
        let mut active = Vec::new();
        let mut inactive = Vec::new();
        for c in 0..num_streams {
            let start = (t * num_streams + c) * frames_per_chunk;
            let track = &activities[start..start + frames_per_chunk];
            let mean = if frames_per_chunk == 0 {
                0.0
            } else {
                track.iter().map(|&a| a as f64).sum::<f64>() / frames_per_chunk as f64
            };
            if mean >= tau {
                active.push(c);
            } else {
                inactive.push(c);
            }
        }
        counts.push(active.len());
        active.extend(inactive);
        order.push(active);
    }
    Ok(ActiveStreams { counts, order })
}

impl ChunkedRecording {
    /// Builds a recording with every stream presumed active, in original order.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        recording_id: impl Into<String>,
        num_chunks: usize,
        num_streams: usize,
        embed_dim: usize,
        frames_per_chunk: usize,
        frame_step: f32,
        activities: Vec<f32>,
        embeddings: Vec<f32>,
    ) -> Result<Self> {
        let n_act = checked_len(&[num_chunks, num_streams, frames_per_chunk])?;
        let n_emb = checked_len(&[num_chunks, num_streams, embed_dim])?;
        if activities.len() != n_act {
            return Err(Error::DimensionMismatch {
                expected: n_act,
                got: activities.len(),
            });
        }
        if embeddings.len() != n_emb {
            return Err(Error::DimensionMismatch {
                expected: n_emb,
                got: embeddings.len(),
            });
        }
        if !(frame_step > 0.0 && frame_step.is_finite()) {
            return Err(Error::InvalidRecording(format!(
                "frame_step must be positive, got {frame_step}"
            )));
        }
        if let Some(bad) = activities.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidRecording(format!(
                "activity value {bad} outside [0,1]"
            )));
        }
        Ok(Self {
            recording_id: recording_id.into(),
            num_chunks,
            num_streams,
            embed_dim,
            frames_per_chunk,
            frame_step,
            activities,
            embeddings,
            active_counts: vec![num_streams; num_chunks],
            stream_order: vec![(0..num_streams).collect(); num_chunks],
        })
    }

    pub fn recording_id(&self) -> &str {
        &self.recording_id
    }

    pub fn num_chunks(&self) -> usize {
        self.num_chunks
    }

    pub fn num_streams(&self) -> usize {
        self.num_streams
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn frames_per_chunk(&self) -> usize {
        self.frames_per_chunk
    }

    pub fn frame_step(&self) -> f32 {
        self.frame_step
    }

    pub fn activities(&self) -> &[f32] {
        &self.activities
    }

    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn active_counts(&self) -> &[usize] {
        &self.active_counts
    }

    pub fn active_count(&self, t: usize) -> usize {
        self.active_counts[t]
    }

    pub fn stream_order(&self) -> &[Vec<usize>] {
        &self.stream_order
    }

    /// Original front-end stream index of the stream stored at position `c` in chunk `t`.
    pub fn original_stream(&self, t: usize, c: usize) -> usize {
        self.stream_order[t][c]
    }

    pub fn embedding(&self, t: usize, c: usize) -> &[f32] {
        let start = (t * self.num_streams + c) * self.embed_dim;
        &self.embeddings[start..start + self.embed_dim]
    }

    pub fn activity(&self, t: usize, c: usize) -> &[f32] {
        let start = (t * self.num_streams + c) * self.frames_per_chunk;
        &self.activities[start..start + self.frames_per_chunk]
    }

    /// `(t, c)` for every active stream, chunk-major.
    pub fn active_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.num_chunks)
            .flat_map(|t| (0..self.active_counts[t]).map(move |c| (t, c)))
            .collect()
    }

    pub fn max_active_count(&self) -> usize {
        self.active_counts.iter().copied().max().unwrap_or(0)
    }

    pub fn total_frames(&self) -> usize {
        self.num_chunks * self.frames_per_chunk
    }

    /// Thresholds stream activity and moves active streams to the front of each chunk.
    pub fn with_active_streams(&self, tau: f64) -> Result<Self> {
        let detected = detect_active_streams(
            &self.activities,
            self.num_chunks,
            self.num_streams,
            self.frames_per_chunk,
            tau,
        )?;
        let (c_max, n, d) = (self.num_streams, self.frames_per_chunk, self.embed_dim);
        let mut activities = Vec::with_capacity(self.activities.len());
        let mut embeddings = Vec::with_capacity(self.embeddings.len());
        let mut stream_order = Vec::with_capacity(self.num_chunks);
        for (t, perm) in detected.order.iter().enumerate() {
            for &src in perm {
                let a = (t * c_max + src) * n;
                activities.extend_from_slice(&self.activities[a..a + n]);
                let e = (t * c_max + src) * d;
                embeddings.extend_from_slice(&self.embeddings[e..e + d]);
            }
            stream_order.push(perm.iter().map(|&p| self.stream_order[t][p]).collect());
        }
        Ok(Self {
            activities,
            embeddings,
            active_counts: detected.counts,
            stream_order,
            recording_id: self.recording_id.clone(),
            ..*self
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            HEADER_LEN + 4 * (self.activities.len() + self.embeddings.len()),
        );
        out.extend_from_slice(MAGIC);
        for dim in [
            self.num_chunks,
            self.num_streams,
            self.embed_dim,
            self.frames_per_chunk,
        ] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.frame_step.to_le_bytes());
        for v in self.activities.iter().chain(&self.embeddings) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], recording_id: impl Into<String>) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let word = |i: usize| {
            let at = MAGIC.len() + 4 * i;
            [bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]
        };
        let t = u32::from_le_bytes(word(0)) as usize;
        let c = u32::from_le_bytes(word(1)) as usize;
        let d = u32::from_le_bytes(word(2)) as usize;
        let n = u32::from_le_bytes(word(3)) as usize;
        let frame_step = f32::from_le_bytes(word(4));

        let n_act = checked_len(&[t, c, n])?;
        let n_emb = checked_len(&[t, c, d])?;
        let payload = n_act
            .checked_add(n_emb)
            .and_then(|f| f.checked_mul(4))
            .and_then(|b| b.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::DimensionOverflow(format!("T={t} C={c} D={d} N={n}")))?;
        if bytes.len() < payload {
            return Err(Error::Truncated {
                expected: payload,
                found: bytes.len(),
            });
        }
        if bytes.len() > payload {
            return Err(Error::TrailingBytes(bytes.len() - payload));
        }
        let floats: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let embeddings = floats[n_act..].to_vec();
        let mut activities = floats;
        activities.truncate(n_act);
        Self::new(recording_id, t, c, d, n, frame_step, activities, embeddings)
    }
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::DimensionOverflow(format!("{dims:?}")))
}

/// Reads an MSVB1 file; the recording id is the file stem.
pub fn read_recording(path: impl AsRef<Path>) -> Result<ChunkedRecording> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ChunkedRecording::decode(&bytes, id)
}

pub fn write_recording(rec: &ChunkedRecording, path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&rec.encode())?;
    Ok(())
}

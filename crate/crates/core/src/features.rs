use crate::error::{Error, Result};
use crate::plda::PldaBackend;
use crate::recording::ChunkedRecording;

/// Active-stream embeddings per chunk in the diagonalized PLDA space, the
/// input of VB inference. Chunk `t` holds `Ĉ_t` vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFeatures {
    dim: usize,
    chunks: Vec<Vec<Vec<f64>>>,
}

impl StreamFeatures {
    pub fn new(dim: usize, chunks: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        for v in chunks.iter().flatten() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        Ok(Self { dim, chunks })
    }

    /// Uses the stored embeddings as-is, for data already in model space.
    pub fn from_recording(rec: &ChunkedRecording) -> Self {
        let chunks = (0..rec.num_chunks())
            .map(|t| {
                (0..rec.active_count(t))
                    .map(|c| rec.embedding(t, c).iter().map(|&x| x as f64).collect())
                    .collect()
            })
            .collect();
        Self {
            dim: rec.embed_dim(),
            chunks,
        }
    }

    pub fn project(rec: &ChunkedRecording, backend: &PldaBackend) -> Result<Self> {
        let chunks = (0..rec.num_chunks())
            .map(|t| {
                (0..rec.active_count(t))
                    .map(|c| {
                        let raw: Vec<f64> = rec.embedding(t, c).iter().map(|&x| x as f64).collect();
                        backend.project(&raw)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim: backend.lda_dim(),
            chunks,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn chunk(&self, t: usize) -> &[Vec<f64>] {
        &self.chunks[t]
    }

    pub fn active_count(&self, t: usize) -> usize {
        self.chunks[t].len()
    }

    pub fn active_counts(&self) -> Vec<usize> {
        self.chunks.iter().map(Vec::len).collect()
    }

    pub fn max_active_count(&self) -> usize {
        self.chunks.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// All vectors in chunk-major order, matching cannot-link flat indices.
    pub fn flat(&self) -> Vec<&[f64]> {
        self.chunks.iter().flatten().map(Vec::as_slice).collect()
    }
}

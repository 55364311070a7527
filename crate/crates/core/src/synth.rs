//! Samples recordings from the multi-stream generative model, with known
//! speakers and state sequence, so inference quality can be measured.

use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::build_state_space;
use crate::plda::LabeledEmbeddings;
use crate::recording::ChunkedRecording;
use crate::scorer::optimal_assignment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub recording_id: String,
    pub num_speakers: usize,
    pub num_chunks: usize,
    pub max_streams: usize,
    pub embed_dim: usize,
    /// Between-speaker variances, one per dimension.
    pub phi: Vec<f64>,
    pub p_loop: f64,
    /// Probability of each active count `0..=max_streams`.
    pub active_count_probs: Vec<f64>,
    pub frames_per_chunk: usize,
    pub frame_step: f64,
    /// Chance of flipping each frame's binary activity.
    pub flip_prob: f64,
    pub seed: u64,
}

/// `n` values spaced evenly from `hi` down to `lo`.
pub fn linspace_desc(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![hi],
        _ => (0..n).map(|i| hi + (lo - hi) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            recording_id: "synth".into(),
            num_speakers: 3,
            num_chunks: 200,
            max_streams: 2,
            embed_dim: 32,
            phi: linspace_desc(10.0, 1.0, 32),
            p_loop: 0.8,
            active_count_probs: vec![0.0, 0.5, 0.5],
            frames_per_chunk: 50,
            frame_step: 0.1,
            flip_prob: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_speakers == 0 || self.num_chunks == 0 || self.max_streams == 0 {
            return bad("speakers, chunks and streams must be positive".into());
        }
        if self.embed_dim == 0 || self.frames_per_chunk == 0 {
            return bad("embedding dimension and frames per chunk must be positive".into());
        }
        if self.phi.len() != self.embed_dim {
            return bad(format!("phi has {} entries for dimension {}", self.phi.len(), self.embed_dim));
        }
        if self.phi.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return bad("phi must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.p_loop) || !(0.0..=1.0).contains(&self.flip_prob) {
            return bad("p_loop and flip_prob must lie in [0, 1]".into());
        }
        if !(self.frame_step > 0.0) {
            return bad("frame_step must be positive".into());
        }
        if self.active_count_probs.len() != self.max_streams + 1 {
            return bad(format!(
                "active_count_probs needs {} entries, got {}",
                self.max_streams + 1,
                self.active_count_probs.len()
            ));
        }
        if self.active_count_probs.iter().any(|&p| !(p >= 0.0)) {
            return bad("active count probabilities must be non-negative".into());
        }
        let total: f64 = self.active_count_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("active count probabilities sum to {total}"));
        }
        if let Some(k) = (self.num_speakers + 1..=self.max_streams).find(|&k| self.active_count_probs[k] > 0.0) {
            return bad(format!("active count {k} exceeds {} speakers", self.num_speakers));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Speaker of each active stream, in the canonical active-first order.
    pub labels: Vec<Vec<usize>>,
    pub num_speakers: usize,
    /// State index per chunk in the ordered-tuple state space of
    /// `num_speakers` speakers and `max_streams` streams; `None` when silent.
    pub state_sequence: Vec<Option<usize>>,
}

impl SynthTruth {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn flat_labels(&self) -> Vec<usize> {
        self.labels.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub recording: ChunkedRecording,
    pub truth: SynthTruth,
    /// `Φ^{1/2} y_g` per speaker.
    pub speaker_means: Vec<Vec<f64>>,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Draws `n` speaker means `Φ^{1/2} y` with `y ~ N(0, I)`.
pub fn sample_speaker_means(phi: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            normal_vec(rng, phi.len())
                .into_iter()
                .zip(phi)
                .map(|(y, p)| p.sqrt() * y)
                .collect()
        })
        .collect()
}

fn sample_count(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (t_len, c_max, d, n) = (cfg.num_chunks, cfg.max_streams, cfg.embed_dim, cfg.frames_per_chunk);
    let space = build_state_space(cfg.num_speakers, c_max)?;
    let means = sample_speaker_means(&cfg.phi, cfg.num_speakers, &mut rng);

    let mut activities = vec![0.0f32; t_len * c_max * n];
    let mut embeddings = vec![0.0f32; t_len * c_max * d];
    let mut labels = Vec::with_capacity(t_len);
    let mut states = Vec::with_capacity(t_len);
    let mut previous: Option<Vec<usize>> = None;
    for t in 0..t_len {
        let k = sample_count(&cfg.active_count_probs, &mut rng);
        let stay: f64 = rng.random();
        let tuple: Vec<usize> = match &previous {
            _ if k == 0 => Vec::new(),
            Some(prev) if prev.len() == k && stay < cfg.p_loop => prev.clone(),
            _ => index::sample(&mut rng, cfg.num_speakers, k).into_vec(),
        };
        let mut slots: Vec<usize> = (0..c_max).collect();
        slots.shuffle(&mut rng);
        let mut slots: Vec<usize> = slots[..k].to_vec();
        slots.sort_unstable();
        let mut speaker_at = vec![None; c_max];
        for (&slot, &g) in slots.iter().zip(&tuple) {
            speaker_at[slot] = Some(g);
        }
        for (c, spk) in speaker_at.iter().enumerate() {
            let noise = normal_vec(&mut rng, d);
            let base = (t * c_max + c) * d;
            for i in 0..d {
                let mean = spk.map_or(0.0, |g| means[g][i]);
                embeddings[base + i] = (mean + noise[i]) as f32;
            }
            let on = spk.is_some();
            let base = (t * c_max + c) * n;
            for f in 0..n {
                let flip = cfg.flip_prob > 0.0 && rng.random::<f64>() < cfg.flip_prob;
                activities[base + f] = if on != flip { 1.0 } else { 0.0 };
            }
        }
        states.push(if k == 0 { None } else { space.state_of(&tuple) });
        labels.push(tuple.clone());
        if k > 0 {
            previous = Some(tuple);
        }
    }
    let recording = ChunkedRecording::new(
        cfg.recording_id.clone(),
        t_len,
        c_max,
        d,
        n,
        cfg.frame_step as f32,
        activities,
        embeddings,
    )?;
    Ok(SynthOutput {
        recording,
        truth: SynthTruth {
            labels,
            num_speakers: cfg.num_speakers,
            state_sequence: states,
        },
        speaker_means: means,
    })
}

/// Independent labeled embeddings `x = Φ^{1/2} y_g + ε` for backend training.
pub fn sample_labeled_set(
    phi: &[f64],
    num_speakers: usize,
    per_speaker: usize,
    seed: u64,
) -> Result<LabeledEmbeddings> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = sample_speaker_means(phi, num_speakers, &mut rng);
    let mut vectors = Vec::with_capacity(num_speakers * per_speaker);
    let mut speaker_labels = Vec::with_capacity(num_speakers * per_speaker);
    for (g, mean) in means.iter().enumerate() {
        for _ in 0..per_speaker {
            let noise = normal_vec(&mut rng, phi.len());
            vectors.push(mean.iter().zip(noise).map(|(m, e)| m + e).collect());
            speaker_labels.push(g as i64);
        }
    }
    LabeledEmbeddings::new(vectors, speaker_labels)
}

/// Fraction of mismatched labels under the best one-to-one renaming of
/// predicted speakers onto true ones.
pub fn label_error_rate(truth: &[Vec<usize>], predicted: &[Vec<usize>]) -> Result<f64> {
    if truth.len() != predicted.len() || truth.iter().zip(predicted).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::ShapeMismatch("truth and prediction differ in shape".into()));
    }
    let pairs: Vec<(usize, usize)> = truth
        .iter()
        .flatten()
        .copied()
        .zip(predicted.iter().flatten().copied())
        .collect();
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let rows = pairs.iter().map(|p| p.0).max().unwrap_or(0) + 1;
    let cols = pairs.iter().map(|p| p.1).max().unwrap_or(0) + 1;
    let mut confusion = vec![vec![0u64; cols]; rows];
    for &(a, b) in &pairs {
        confusion[a][b] += 1;
    }
    let matched: u64 = optimal_assignment(&confusion)
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|j| confusion[i][j]))
        .sum();
    Ok(1.0 - matched as f64 / pairs.len() as f64)
}

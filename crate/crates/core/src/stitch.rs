//! Turns per-stream speaker labels back into recording-level speaker tracks.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::recording::ChunkedRecording;

/// One RTTM `SPEAKER` line.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub recording_id: String,
    pub speaker: String,
    pub onset: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiarizationResult {
    pub recording_id: String,
    pub frame_step: f64,
    /// `(speaker id, per-frame activity)` in speaker order; all tracks share
    /// the recording's full timeline.
    pub tracks: Vec<(String, Vec<bool>)>,
}

impl DiarizationResult {
    /// Maximal runs of activity, ordered by onset and then speaker order.
    pub fn segments(&self) -> Vec<Segment> {
        let mut runs = Vec::new();
        for (k, (speaker, track)) in self.tracks.iter().enumerate() {
            let mut start = None;
            for (i, &on) in track.iter().chain(std::iter::once(&false)).enumerate() {
                match (on, start) {
                    (true, None) => start = Some(i),
                    (false, Some(s)) => {
                        runs.push((s, k, i - s, speaker));
                        start = None;
                    }
                    _ => {}
                }
            }
        }
        runs.sort_by_key(|&(s, k, _, _)| (s, k));
        runs.into_iter()
            .map(|(s, _, len, speaker)| Segment {
                recording_id: self.recording_id.clone(),
                speaker: speaker.clone(),
                onset: s as f64 * self.frame_step,
                duration: len as f64 * self.frame_step,
            })
            .collect()
    }

    pub fn num_speakers(&self) -> usize {
        self.tracks.len()
    }

    /// Applies [`median_filter`] to every track and drops tracks left empty.
    pub fn median_filtered(&self, window_seconds: f64) -> Self {
        let tracks = self
            .tracks
            .iter()
            .map(|(spk, tr)| (spk.clone(), median_filter(tr, window_seconds, self.frame_step)))
            .filter(|(_, tr)| tr.iter().any(|&b| b))
            .collect();
        Self {
            recording_id: self.recording_id.clone(),
            frame_step: self.frame_step,
            tracks,
        }
    }
}

/// Projects labeled stream activities onto the global timeline.
///
/// `labels[t][c]` is the speaker of active stream `c` in chunk `t` (canonical
/// order); silent chunks have no labels. Chunk `t` covers frames
/// `[t·N, (t+1)·N)`. Speakers are named `spk<k>` in order of first activity.
pub fn stitch(
    rec: &ChunkedRecording,
    labels: &[Vec<usize>],
    activity_threshold: f64,
) -> Result<DiarizationResult> {
    if labels.len() != rec.num_chunks() {
        return Err(Error::ShapeMismatch(format!(
            "{} label rows for {} chunks",
            labels.len(),
            rec.num_chunks()
        )));
    }
    let n = rec.frames_per_chunk();
    let total = rec.total_frames();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut tracks: Vec<(String, Vec<bool>)> = Vec::new();
    for (t, row) in labels.iter().enumerate() {
        if row.len() != rec.active_count(t) {
            return Err(Error::ShapeMismatch(format!(
                "chunk {t}: {} labels for {} active streams",
                row.len(),
                rec.active_count(t)
            )));
        }
        for (c, &speaker) in row.iter().enumerate() {
            if row[..c].contains(&speaker) {
                return Err(Error::ConstraintViolation { chunk: t, speaker });
            }
            for (i, &a) in rec.activity(t, c).iter().enumerate() {
                if (a as f64) < activity_threshold {
                    continue;
                }
                let k = *slot.entry(speaker).or_insert_with(|| {
                    tracks.push((format!("spk{}", tracks.len()), vec![false; total]));
                    tracks.len() - 1
                });
                tracks[k].1[t * n + i] = true;
            }
        }
    }
    Ok(DiarizationResult {
        recording_id: rec.recording_id().to_string(),
        frame_step: rec.frame_step() as f64,
        tracks,
    })
}

/// Sliding binary median. The window is `round(window_seconds / frame_step)`
/// frames, bumped to the next odd number; near the edges it shrinks
/// symmetrically so it stays centered.
pub fn median_filter(track: &[bool], window_seconds: f64, frame_step: f64) -> Vec<bool> {
    let mut width = (window_seconds / frame_step).round().max(1.0) as usize;
    if width.is_multiple_of(2) {
        width += 1;
    }
    let half = width / 2;
    let mut prefix = vec![0usize; track.len() + 1];
    for (i, &b) in track.iter().enumerate() {
        prefix[i + 1] = prefix[i] + b as usize;
    }
    (0..track.len())
        .map(|i| {
            let h = half.min(i).min(track.len() - 1 - i);
            let ones = prefix[i + h + 1] - prefix[i - h];
            2 * ones > 2 * h + 1 - 1
        })
        .collect()
}

pub fn format_rttm(segments: &[Segment]) -> String {
    let mut out = String::new();
    for s in segments {
        let _ = writeln!(
            out,
            "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
            s.recording_id, s.onset, s.duration, s.speaker
        );
    }
    out
}

pub fn write_rttm(result: &DiarizationResult, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_rttm(&result.segments()))?;
    Ok(())
}

pub fn parse_rttm(text: &str) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() || fields[0].starts_with(';') {
            continue;
        }
        let bad = |reason: &str| Error::Rttm {
            line: i + 1,
            reason: reason.to_string(),
        };
        if fields[0] != "SPEAKER" {
            continue;
        }
        if fields.len() < 8 {
            return Err(bad("expected at least 8 fields"));
        }
        let onset: f64 = fields[3].parse().map_err(|_| bad("bad onset"))?;
        let duration: f64 = fields[4].parse().map_err(|_| bad("bad duration"))?;
        if !(onset >= 0.0) || !(duration >= 0.0) {
            return Err(bad("negative onset or duration"));
        }
        out.push(Segment {
            recording_id: fields[1].to_string(),
            speaker: fields[7].to_string(),
            onset,
            duration,
        });
    }
    Ok(out)
}

pub fn read_rttm(path: impl AsRef<Path>) -> Result<Vec<Segment>> {
    parse_rttm(&fs::read_to_string(path)?)
}

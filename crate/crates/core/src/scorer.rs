//! Diarization error rate and speaker-count mean error.

use std::collections::BTreeMap;

use pathfinding::prelude::{kuhn_munkres, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stitch::Segment;

/// Scoring resolution in seconds.
pub const FRAME: f64 = 0.01;

fn to_frame(seconds: f64) -> usize {
    (seconds / FRAME).round().max(0.0) as usize
}

/// One-to-one mapping maximizing the summed weight. `weights[i][j]` is the
/// affinity of row `i` with column `j`; the result maps each row to at most
/// one column (rows left over when there are more rows than columns get
/// `None`).
pub fn optimal_assignment(weights: &[Vec<u64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let transpose = rows > cols;
    let (r, c) = if transpose { (cols, rows) } else { (rows, cols) };
    let m = Matrix::from_fn(r, c, |(i, j)| {
        let w = if transpose { weights[j][i] } else { weights[i][j] };
        w as i64
    });
    let (_, assign) = kuhn_munkres(&m);
    let mut out = vec![None; rows];
    if transpose {
        for (col, &row) in assign.iter().enumerate() {
            out[row] = Some(col);
        }
    } else {
        for (row, &col) in assign.iter().enumerate() {
            out[row] = Some(col);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingScore {
    pub recording_id: String,
    /// Percentages of scored reference speech time.
    pub der: f64,
    pub miss: f64,
    pub fa: f64,
    pub confusion: f64,
    /// Absolute times in seconds.
    pub scored_speech: f64,
    pub missed_seconds: f64,
    pub fa_seconds: f64,
    pub confusion_seconds: f64,
    pub ref_speakers: usize,
    pub hyp_speakers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub der: f64,
    pub miss: f64,
    pub fa: f64,
    pub confusion: f64,
    pub me: f64,
    pub recordings: Vec<RecordingScore>,
}

fn speaker_tracks(segments: &[Segment], len: usize) -> Vec<(String, Vec<bool>)> {
    let mut tracks: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    for s in segments {
        let track = tracks.entry(&s.speaker).or_insert_with(|| vec![false; len]);
        let (a, b) = (to_frame(s.onset), to_frame(s.onset + s.duration));
        track[a..b].iter_mut().for_each(|f| *f = true);
    }
    tracks.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Frame-based DER of one recording. Frames within `collar` seconds of any
/// reference segment boundary are not scored; overlapped speech counts once
/// per speaker.
pub fn der(reference: &[Segment], hypothesis: &[Segment], collar: f64) -> Result<RecordingScore> {
    if collar < 0.0 || !collar.is_finite() {
        return Err(Error::InvalidConfig(format!("collar must be >= 0, got {collar}")));
    }
    let len = reference
        .iter()
        .chain(hypothesis)
        .map(|s| to_frame(s.onset + s.duration))
        .max()
        .unwrap_or(0);
    let refs = speaker_tracks(reference, len);
    let hyps = speaker_tracks(hypothesis, len);

    let mut scored = vec![true; len];
    let reach = to_frame(collar);
    if reach > 0 {
        for s in reference {
            for b in [to_frame(s.onset), to_frame(s.onset + s.duration)] {
                let lo = b.saturating_sub(reach);
                let hi = (b + reach).min(len);
                scored[lo..hi].iter_mut().for_each(|f| *f = false);
            }
        }
    }

    let overlap: Vec<Vec<u64>> = refs
        .iter()
        .map(|(_, r)| {
            hyps.iter()
                .map(|(_, h)| (0..len).filter(|&i| scored[i] && r[i] && h[i]).count() as u64)
                .collect()
        })
        .collect();
    let mapping = optimal_assignment(&overlap);

    let (mut speech, mut miss, mut fa, mut conf) = (0u64, 0u64, 0u64, 0u64);
    for i in (0..len).filter(|&i| scored[i]) {
        let n_ref = refs.iter().filter(|(_, r)| r[i]).count() as u64;
        let n_hyp = hyps.iter().filter(|(_, h)| h[i]).count() as u64;
        let correct = mapping
            .iter()
            .enumerate()
            .filter(|(k, m)| m.is_some_and(|j| refs[*k].1[i] && hyps[j].1[i]))
            .count() as u64;
        speech += n_ref;
        miss += n_ref.saturating_sub(n_hyp);
        fa += n_hyp.saturating_sub(n_ref);
        conf += n_ref.min(n_hyp) - correct;
    }
    if speech == 0 {
        return Err(Error::EmptyReference);
    }
    let pct = |x: u64| 100.0 * x as f64 / speech as f64;
    Ok(RecordingScore {
        recording_id: reference[0].recording_id.clone(),
        der: pct(miss + fa + conf),
        miss: pct(miss),
        fa: pct(fa),
        confusion: pct(conf),
        scored_speech: speech as f64 * FRAME,
        missed_seconds: miss as f64 * FRAME,
        fa_seconds: fa as f64 * FRAME,
        confusion_seconds: conf as f64 * FRAME,
        ref_speakers: refs.len(),
        hyp_speakers: hyps.len(),
    })
}

/// `(1/R) Σ_r |C_r − Ĉ_r|`.
pub fn mean_error(ref_counts: &[usize], hyp_counts: &[usize]) -> Result<f64> {
    if ref_counts.len() != hyp_counts.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} reference counts vs {} hypothesis counts",
            ref_counts.len(),
            hyp_counts.len()
        )));
    }
    if ref_counts.is_empty() {
        return Err(Error::ShapeMismatch("no recordings".into()));
    }
    let total: usize = ref_counts.iter().zip(hyp_counts).map(|(&a, &b)| a.abs_diff(b)).sum();
    Ok(total as f64 / ref_counts.len() as f64)
}

/// Aggregates per-recording scores; corpus DER weights recordings by their
/// scored speech time.
pub fn aggregate(recordings: Vec<RecordingScore>) -> Result<ScoreReport> {
    let refs: Vec<usize> = recordings.iter().map(|r| r.ref_speakers).collect();
    let hyps: Vec<usize> = recordings.iter().map(|r| r.hyp_speakers).collect();
    let me = mean_error(&refs, &hyps)?;
    let speech: f64 = recordings.iter().map(|r| r.scored_speech).sum();
    let sum = |f: fn(&RecordingScore) -> f64| recordings.iter().map(f).sum::<f64>() / speech * 100.0;
    let miss = sum(|r| r.missed_seconds);
    let fa = sum(|r| r.fa_seconds);
    let confusion = sum(|r| r.confusion_seconds);
    Ok(ScoreReport {
        der: miss + fa + confusion,
        miss,
        fa,
        confusion,
        me,
        recordings,
    })
}

/// Groups segments by recording id.
pub fn group_by_recording(segments: Vec<Segment>) -> BTreeMap<String, Vec<Segment>> {
    let mut out: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
    for s in segments {
        out.entry(s.recording_id.clone()).or_default().push(s);
    }
    out
}

/// Scores paired recordings. Every reference recording needs a hypothesis and
/// vice versa; a recording whose hypothesis is empty is represented by an
/// empty segment list.
pub fn score_corpus(
    reference: &BTreeMap<String, Vec<Segment>>,
    hypothesis: &BTreeMap<String, Vec<Segment>>,
    collar: f64,
) -> Result<ScoreReport> {
    let missing_hyp: Vec<&str> = reference
        .keys()
        .filter(|k| !hypothesis.contains_key(*k))
        .map(String::as_str)
        .collect();
    let missing_ref: Vec<&str> = hypothesis
        .keys()
        .filter(|k| !reference.contains_key(*k))
        .map(String::as_str)
        .collect();
    if !missing_hyp.is_empty() || !missing_ref.is_empty() {
        return Err(Error::Pairing {
            missing_hyp: missing_hyp.join(", "),
            missing_ref: missing_ref.join(", "),
        });
    }
    let scores = reference
        .iter()
        .map(|(id, r)| {
            let mut s = der(r, &hypothesis[id], collar)?;
            s.recording_id = id.clone();
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn seg(spk: &str, on: f64, off: f64) -> Segment {
        Segment {
            recording_id: "r".into(),
            speaker: spk.into(),
            onset: on,
            duration: off - on,
        }
    }

    #[test]
    fn identity_is_zero() {
        let r = vec![seg("a", 0.0, 3.0), seg("b", 2.0, 5.5)];
        let s = der(&r, &r, 0.0).unwrap();
        assert_eq!(s.der, 0.0);
        assert_eq!(s.ref_speakers, 2);
    }

    #[test]
    fn truncated_hypothesis_is_pure_miss() {
        let s = der(&[seg("a", 0.0, 10.0)], &[seg("x", 0.0, 9.0)], 0.0).unwrap();
        assert_abs_diff_eq!(s.der, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.miss, 10.0, epsilon = 1e-9);
        assert_eq!((s.fa, s.confusion), (0.0, 0.0));
    }

    #[test]
    fn crossed_two_by_two() {
        // A→X overlaps 5 s, B→Y 5 s; the swapped mapping only 1 s each. With
        // the best mapping the errors are the two overlapped seconds where
        // one of two reference speakers goes undetected: 2 s out of 12 s.
        let r = vec![seg("A", 0.0, 6.0), seg("B", 4.0, 10.0)];
        let h = vec![seg("Y", 0.0, 5.0), seg("X", 5.0, 10.0)];
        let s = der(&r, &h, 0.0).unwrap();
        assert_abs_diff_eq!(s.der, 200.0 / 12.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.miss, 200.0 / 12.0, epsilon = 1e-9);
        assert_eq!(s.confusion, 0.0);
        assert_abs_diff_eq!(s.scored_speech, 12.0, epsilon = 1e-9);
    }

    #[test]
    fn collar_removes_boundary_errors() {
        let r = vec![seg("a", 0.0, 5.0)];
        let h = vec![seg("a", 0.2, 5.2)];
        let tight = der(&r, &h, 0.0).unwrap();
        let loose = der(&r, &h, 0.25).unwrap();
        assert!(tight.der > 0.0);
        assert_eq!(loose.der, 0.0);
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert!(matches!(der(&[], &[seg("a", 0.0, 1.0)], 0.0), Err(Error::EmptyReference)));
    }

    #[test]
    fn mean_error_examples() {
        assert_eq!(mean_error(&[2, 3], &[2, 5]).unwrap(), 1.0);
        assert_eq!(mean_error(&[4, 1, 7], &[4, 1, 7]).unwrap(), 0.0);
        assert_eq!(mean_error(&[4], &[2]).unwrap(), 2.0);
        assert!(mean_error(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn assignment_handles_rectangular_inputs() {
        assert_eq!(optimal_assignment(&[vec![1, 9, 2]]), vec![Some(1)]);
        assert_eq!(optimal_assignment(&[vec![1], vec![9], vec![2]]), vec![None, Some(0), None]);
        assert_eq!(optimal_assignment(&[vec![], vec![]]), vec![None, None]);
    }

    #[test]
    fn pairing_lists_missing_ids() {
        let mut r = BTreeMap::new();
        r.insert("a".to_string(), vec![seg("s", 0.0, 1.0)]);
        let mut h = BTreeMap::new();
        h.insert("b".to_string(), vec![seg("s", 0.0, 1.0)]);
        match score_corpus(&r, &h, 0.0) {
            Err(Error::Pairing { missing_hyp, missing_ref }) => {
                assert_eq!((missing_hyp.as_str(), missing_ref.as_str()), ("a", "b"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn corpus_report_weights_by_speech() {
        let mut r = BTreeMap::new();
        r.insert("a".to_string(), vec![seg("s", 0.0, 10.0)]);
        r.insert("b".to_string(), vec![seg("s", 0.0, 30.0)]);
        let mut h = r.clone();
        h.insert("a".to_string(), vec![seg("s", 0.0, 6.0)]);
        let rep = score_corpus(&r, &h, 0.0).unwrap();
        assert_abs_diff_eq!(rep.der, 10.0, epsilon = 1e-9);
        assert_eq!(rep.me, 0.0);
    }
}

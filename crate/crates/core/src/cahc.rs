//! Constrained average-linkage agglomerative clustering.
//!
//! Items from the same chunk carry a cannot-link constraint; two clusters
//! may only merge when no pair of their members is constrained. Merging
//! proceeds on the globally smallest mergeable average-linkage distance,
//! with ties broken by the lexicographically lowest pair of cluster ids (a
//! cluster's id is its smallest member index), and stops once that distance
//! exceeds the threshold.

use crate::error::{Error, Result};
use crate::hmm::StateSpace;
use crate::recording::ChunkedRecording;

/// Default occupancy mass spread over competing states at initialization.
pub const INIT_SMOOTHING: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CannotLinkSet {
    groups: Vec<Vec<usize>>,
}

impl CannotLinkSet {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for g in &groups {
            for &i in g {
                if !seen.insert(i) {
                    return Err(Error::InvalidConfig(format!(
                        "index {i} appears in more than one cannot-link group"
                    )));
                }
            }
        }
        Ok(Self { groups })
    }

    pub fn empty() -> Self {
        Self { groups: Vec::new() }
    }

    /// One group per chunk holding the flat indices of its active streams,
    /// numbered in [`ChunkedRecording::active_pairs`] order.
    pub fn from_recording(rec: &ChunkedRecording) -> Self {
        let mut next = 0;
        let groups = rec
            .active_counts()
            .iter()
            .filter(|&&k| k > 0)
            .map(|&k| {
                let g: Vec<usize> = (next..next + k).collect();
                next += k;
                g
            })
            .collect();
        Self { groups }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn violated_by(&self, labels: &[usize]) -> bool {
        self.groups.iter().any(|g| {
            let mut seen = std::collections::HashSet::new();
            g.iter().any(|&i| !seen.insert(labels[i]))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    /// Cluster id per flat index, numbered by first appearance.
    pub labels: Vec<usize>,
    pub num_clusters: usize,
}

impl ClusterAssignment {
    /// Relabels arbitrary ids to first-appearance order.
    pub fn from_raw_labels(raw: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|r| {
                let next = map.len();
                *map.entry(*r).or_insert(next)
            })
            .collect();
        Self {
            labels,
            num_clusters: map.len(),
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Nearest mergeable partner with a larger id, per active cluster.
#[derive(Clone, Copy)]
struct Candidate {
    dist: f64,
    partner: usize,
}

struct Linkage {
    n: usize,
    dist: Vec<f64>,
    blocked: Vec<bool>,
    size: Vec<usize>,
    alive: Vec<bool>,
    best: Vec<Option<Candidate>>,
}

impl Linkage {
    fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    fn mergeable(&self, i: usize, j: usize) -> bool {
        self.alive[j] && !self.blocked[i * self.n + j]
    }

    fn rescan(&mut self, i: usize) {
        let mut best: Option<Candidate> = None;
        for j in i + 1..self.n {
            if self.mergeable(i, j) {
                let dist = self.d(i, j);
                if best.is_none_or(|b| dist < b.dist) {
                    best = Some(Candidate { dist, partner: j });
                }
            }
        }
        self.best[i] = best;
    }

    fn closest(&self) -> Option<(usize, Candidate)> {
        let mut out: Option<(usize, Candidate)> = None;
        for i in 0..self.n {
            if !self.alive[i] {
                continue;
            }
            if let Some(c) = self.best[i] {
                if out.is_none_or(|(_, b)| c.dist < b.dist) {
                    out = Some((i, c));
                }
            }
        }
        out
    }

    /// Folds cluster `j` into `i` (`i < j`) with the Lance-Williams average update.
    fn merge(&mut self, i: usize, j: usize) {
        let (ni, nj) = (self.size[i] as f64, self.size[j] as f64);
        let n = self.n;
        for k in 0..n {
            if !self.alive[k] || k == i || k == j {
                continue;
            }
            let merged = (ni * self.d(i, k) + nj * self.d(j, k)) / (ni + nj);
            self.dist[i * n + k] = merged;
            self.dist[k * n + i] = merged;
            let blocked = self.blocked[i * n + k] || self.blocked[j * n + k];
            self.blocked[i * n + k] = blocked;
            self.blocked[k * n + i] = blocked;
        }
        self.alive[j] = false;
        self.size[i] += self.size[j];
        self.best[j] = None;
        self.rescan(i);
        for k in 0..i {
            if !self.alive[k] {
                continue;
            }
            match self.best[k] {
                Some(c) if c.partner == i || c.partner == j => self.rescan(k),
                Some(c) => {
                    if self.mergeable(k, i) {
                        let dist = self.d(k, i);
                        if dist < c.dist || (dist == c.dist && i < c.partner) {
                            self.best[k] = Some(Candidate { dist, partner: i });
                        }
                    }
                }
                None => {
                    if self.mergeable(k, i) {
                        self.best[k] = Some(Candidate {
                            dist: self.d(k, i),
                            partner: i,
                        });
                    }
                }
            }
        }
        for k in i + 1..j {
            if self.alive[k] && self.best[k].is_some_and(|c| c.partner == j) {
                self.rescan(k);
            }
        }
    }
}

/// Average-linkage AHC honoring cannot-link groups. Merges while the closest
/// mergeable pair is at distance `<= threshold`.
pub fn constrained_ahc(
    embeddings: &[Vec<f64>],
    constraints: &CannotLinkSet,
    threshold: f64,
) -> Result<ClusterAssignment> {
    let n = embeddings.len();
    if n == 0 {
        return Ok(ClusterAssignment {
            labels: Vec::new(),
            num_clusters: 0,
        });
    }
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::InvalidConfig(format!("threshold must be >= 0, got {threshold}")));
    }
    let dim = embeddings[0].len();
    if let Some(v) = embeddings.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&embeddings[i], &embeddings[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut blocked = vec![false; n * n];
    for g in constraints.groups() {
        for &a in g {
            for &b in g {
                if a >= n || b >= n {
                    return Err(Error::InvalidConfig(format!(
                        "cannot-link index out of range for {n} items"
                    )));
                }
                if a != b {
                    blocked[a * n + b] = true;
                }
            }
        }
    }
    let mut link = Linkage {
        n,
        dist,
        blocked,
        size: vec![1; n],
        alive: vec![true; n],
        best: vec![None; n],
    };
    for i in 0..n {
        link.rescan(i);
    }
    let mut root: Vec<usize> = (0..n).collect();
    while let Some((i, c)) = link.closest() {
        if c.dist > threshold {
            break;
        }
        let j = c.partner;
        link.merge(i, j);
        for r in root.iter_mut() {
            if *r == j {
                *r = i;
            }
        }
    }
    Ok(ClusterAssignment::from_raw_labels(&root))
}

/// Initial state occupancy from a clustering: each chunk's ordered tuple of
/// stream labels picks one state, which receives `1 - smoothing`; the rest is
/// spread evenly over the other states of the same size. Rows of silent
/// chunks are all zero.
pub fn init_occupancy(
    assignment: &ClusterAssignment,
    active_counts: &[usize],
    space: &StateSpace,
    smoothing: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut flat = 0;
    let mut gamma = Vec::with_capacity(active_counts.len());
    for (t, &k) in active_counts.iter().enumerate() {
        let mut row = vec![0.0; space.num_states()];
        if k > 0 {
            let tuple = assignment
                .labels
                .get(flat..flat + k)
                .ok_or_else(|| Error::Internal("assignment shorter than active streams".into()))?;
            flat += k;
            let target = space.state_of(tuple).ok_or_else(|| {
                Error::Internal(format!("chunk {t}: label tuple {tuple:?} is not a state"))
            })?;
            let peers = space.states_of_size(k);
            if peers.len() == 1 {
                row[target] = 1.0;
            } else {
                let share = smoothing / (peers.len() - 1) as f64;
                for &s in peers {
                    row[s] = share;
                }
                row[target] = 1.0 - smoothing;
            }
        }
        gamma.push(row);
    }
    if flat != assignment.labels.len() {
        return Err(Error::Internal(format!(
            "assignment covers {} items but recording has {flat} active streams",
            assignment.labels.len()
        )));
    }
    Ok(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::build_state_space;

    fn unit(angle: f64) -> Vec<f64> {
        vec![angle.cos(), angle.sin()]
    }

    #[test]
    fn identical_embeddings_merge_across_chunks() {
        let x = vec![unit(0.3), unit(0.3)];
        let cl = CannotLinkSet::new(vec![vec![0], vec![1]]).unwrap();
        assert_eq!(constrained_ahc(&x, &cl, 0.9).unwrap().num_clusters, 1);
    }

    #[test]
    fn cannot_link_blocks_merge() {
        let x = vec![unit(0.3), unit(0.3)];
        let cl = CannotLinkSet::new(vec![vec![0, 1]]).unwrap();
        let a = constrained_ahc(&x, &cl, 0.9).unwrap();
        assert_eq!(a.num_clusters, 2);
        assert_eq!(a.labels, vec![0, 1]);
    }

    #[test]
    fn empty_and_singleton() {
        let a = constrained_ahc(&[], &CannotLinkSet::empty(), 1.0).unwrap();
        assert_eq!(a.num_clusters, 0);
        let a = constrained_ahc(&[unit(0.0)], &CannotLinkSet::empty(), 1.0).unwrap();
        assert_eq!(a.labels, vec![0]);
    }

    #[test]
    fn transitive_constraint_after_merge() {
        // 0 and 2 are close, 1 is close to 0 but linked to 2 by chunk.
        let x = vec![unit(0.0), unit(0.05), unit(0.02)];
        let cl = CannotLinkSet::new(vec![vec![0], vec![1, 2]]).unwrap();
        let a = constrained_ahc(&x, &cl, 1.0).unwrap();
        assert_eq!(a.num_clusters, 2);
        assert!(!cl.violated_by(&a.labels));
    }

    #[test]
    fn overlapping_groups_rejected() {
        assert!(CannotLinkSet::new(vec![vec![0, 1], vec![1, 2]]).is_err());
    }

    #[test]
    fn occupancy_two_speaker_pair() {
        let rec = ChunkedRecording::new("r", 1, 2, 1, 1, 0.1, vec![1.0, 1.0], vec![0.0, 1.0])
            .unwrap()
            .with_active_streams(0.5)
            .unwrap();
        let space = build_state_space(2, 2).unwrap();
        let a = ClusterAssignment {
            labels: vec![0, 1],
            num_clusters: 2,
        };
        let g = init_occupancy(&a, rec.active_counts(), &space, INIT_SMOOTHING).unwrap();
        assert_eq!(g[0][space.state_of(&[0, 1]).unwrap()], 0.9);
        assert_eq!(g[0][space.state_of(&[1, 0]).unwrap()], 0.1);
        assert_eq!(g[0][space.state_of(&[0]).unwrap()], 0.0);
    }

    #[test]
    fn occupancy_single_stream_rows() {
        let rec = ChunkedRecording::new("r", 2, 1, 1, 1, 0.1, vec![1.0, 1.0], vec![0.0, 1.0])
            .unwrap()
            .with_active_streams(0.5)
            .unwrap();
        let space = build_state_space(2, 1).unwrap();
        let a = ClusterAssignment {
            labels: vec![0, 1],
            num_clusters: 2,
        };
        let g = init_occupancy(&a, rec.active_counts(), &space, INIT_SMOOTHING).unwrap();
        assert_eq!(g, vec![vec![0.9, 0.1], vec![0.1, 0.9]]);
        for row in &g {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn occupancy_rejects_repeated_speaker() {
        let rec = ChunkedRecording::new("r", 1, 2, 1, 1, 0.1, vec![1.0, 1.0], vec![0.0, 1.0])
            .unwrap()
            .with_active_streams(0.5)
            .unwrap();
        let space = build_state_space(2, 2).unwrap();
        let a = ClusterAssignment {
            labels: vec![1, 1],
            num_clusters: 2,
        };
        assert!(matches!(
            init_occupancy(&a, rec.active_counts(), &space, INIT_SMOOTHING),
            Err(Error::Internal(_))
        ));
    }
}

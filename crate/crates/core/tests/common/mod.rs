//! Independent reference implementations and random problem generators
//! shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use msvbx::cahc::{ClusterAssignment, CannotLinkSet};
use msvbx::features::StreamFeatures;
use msvbx::hmm::{log_sum_exp, HmmParams};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exact posteriors by summing over every state path.
pub struct BruteForce {
    pub gamma: Vec<Vec<f64>>,
    pub log_evidence: f64,
    pub entry: Vec<f64>,
}

pub fn brute_force_fb(log_e: &[Vec<f64>], params: &HmmParams) -> BruteForce {
    let steps = log_e.len();
    let s = params.pi.len();
    let p = params.p_loop;
    let log_a = |from: usize, to: usize| ((1.0 - p) * params.pi[to] + if from == to { p } else { 0.0 }).ln();
    let mut path = vec![0usize; steps];
    let mut weights = Vec::new();
    let mut paths = Vec::new();
    loop {
        let mut w = params.pi[path[0]].ln() + log_e[0][path[0]];
        for t in 1..steps {
            w += log_a(path[t - 1], path[t]) + log_e[t][path[t]];
        }
        weights.push(w);
        paths.push(path.clone());
        // Odometer increment.
        let mut k = 0;
        while k < steps {
            path[k] += 1;
            if path[k] < s {
                break;
            }
            path[k] = 0;
            k += 1;
        }
        if k == steps {
            break;
        }
    }
    let log_z = log_sum_exp(&weights);
    let mut gamma = vec![vec![0.0; s]; steps];
    let mut entry = vec![0.0; s];
    for (w, path) in weights.iter().zip(&paths) {
        let post = (w - log_z).exp();
        if post == 0.0 {
            continue;
        }
        for t in 0..steps {
            gamma[t][path[t]] += post;
        }
        entry[path[0]] += post;
        for t in 1..steps {
            let (a, b) = (path[t - 1], path[t]);
            let total = (1.0 - p) * params.pi[b] + if a == b { p } else { 0.0 };
            entry[b] += post * (1.0 - p) * params.pi[b] / total;
        }
    }
    BruteForce {
        gamma,
        log_evidence: log_z,
        entry,
    }
}

/// Dense `O(T·S²)` forward-backward with an explicit transition matrix.
pub fn dense_fb(log_e: &[Vec<f64>], params: &HmmParams) -> (Vec<Vec<f64>>, f64) {
    let steps = log_e.len();
    let s = params.pi.len();
    let p = params.p_loop;
    let log_a: Vec<Vec<f64>> = (0..s)
        .map(|i| {
            (0..s)
                .map(|j| ((1.0 - p) * params.pi[j] + if i == j { p } else { 0.0 }).ln())
                .collect()
        })
        .collect();
    let mut f = vec![vec![0.0; s]; steps];
    for j in 0..s {
        f[0][j] = params.pi[j].ln() + log_e[0][j];
    }
    for t in 1..steps {
        for j in 0..s {
            let v: Vec<f64> = (0..s).map(|i| f[t - 1][i] + log_a[i][j]).collect();
            f[t][j] = log_e[t][j] + log_sum_exp(&v);
        }
    }
    let mut b = vec![vec![0.0; s]; steps];
    for t in (0..steps.saturating_sub(1)).rev() {
        for i in 0..s {
            let v: Vec<f64> = (0..s).map(|j| log_a[i][j] + log_e[t + 1][j] + b[t + 1][j]).collect();
            b[t][i] = log_sum_exp(&v);
        }
    }
    let z = log_sum_exp(&f[steps - 1]);
    let gamma = (0..steps)
        .map(|t| (0..s).map(|j| (f[t][j] + b[t][j] - z).exp()).collect())
        .collect();
    (gamma, z)
}

/// Random chain: emissions in [-6, 2] with some forbidden entries (never a
/// whole row), random `π` with a few zeroed states.
pub fn random_chain(rng: &mut ChaCha8Rng, max_t: usize, max_s: usize) -> (Vec<Vec<f64>>, HmmParams) {
    let steps = rng.random_range(1..=max_t);
    let s = rng.random_range(1..=max_s);
    let mut retained: Vec<bool> = (0..s).map(|_| rng.random::<f64>() > 0.2).collect();
    let keep = rng.random_range(0..s);
    retained[keep] = true;
    let raw: Vec<f64> = retained
        .iter()
        .map(|&r| if r { rng.random_range(0.05..1.0) } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    let pi = raw.iter().map(|v| v / total).collect();
    let e = (0..steps)
        .map(|_| {
            let mut row: Vec<f64> = (0..s)
                .map(|_| {
                    if rng.random::<f64>() < 0.2 {
                        f64::NEG_INFINITY
                    } else {
                        rng.random_range(-6.0..2.0)
                    }
                })
                .collect();
            row[keep] = rng.random_range(-6.0..2.0);
            row
        })
        .collect();
    let params = HmmParams {
        pi,
        retained,
        p_loop: rng.random_range(0.05..0.95),
    };
    (e, params)
}

/// A random multi-stream clustering problem drawn from the generative
/// model, with a random constraint-respecting initialization.
pub struct VbProblem {
    pub feats: StreamFeatures,
    pub phi: Vec<f64>,
    pub init: ClusterAssignment,
}

pub fn random_vb_problem(
    rng: &mut ChaCha8Rng,
    max_t: usize,
    max_speakers: usize,
    max_streams: usize,
    max_dim: usize,
) -> VbProblem {
    let c_max = rng.random_range(1..=max_streams);
    let n_spk = rng.random_range(c_max.max(1)..=max_speakers.max(c_max));
    let dim = rng.random_range(1..=max_dim);
    let steps = rng.random_range(2..=max_t);
    let mut phi: Vec<f64> = (0..dim).map(|_| rng.random_range(0.1..8.0)).collect();
    phi.sort_by(|a, b| b.total_cmp(a));
    let true_spk = rng.random_range(1..=n_spk.max(c_max));
    let means: Vec<Vec<f64>> = (0..true_spk.max(c_max))
        .map(|_| {
            phi.iter()
                .map(|p| p.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut chunks = Vec::with_capacity(steps);
    let mut raw_init = Vec::new();
    for _ in 0..steps {
        let k = rng.random_range(0..=c_max);
        let truth = index::sample(rng, means.len(), k.min(means.len())).into_vec();
        let init = index::sample(rng, n_spk, k).into_vec();
        raw_init.extend(init);
        chunks.push(
            truth
                .iter()
                .map(|&g| {
                    means[g]
                        .iter()
                        .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect(),
        );
    }
    VbProblem {
        feats: StreamFeatures::new(dim, chunks).unwrap(),
        phi,
        init: ClusterAssignment::from_raw_labels(&raw_init),
    }
}

/// Naive constrained average-linkage AHC: every step recomputes all
/// cluster-pair averages from the raw distances and scans all pairs.
pub fn naive_cahc(points: &[Vec<f64>], constraints: &CannotLinkSet, threshold: f64) -> Vec<usize> {
    let n = points.len();
    let dist = |a: usize, b: usize| -> f64 {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut group_of = vec![usize::MAX; n];
    for (g, members) in constraints.groups().iter().enumerate() {
        for &i in members {
            group_of[i] = g;
        }
    }
    let linked = |a: usize, b: usize| group_of[a] != usize::MAX && group_of[a] == group_of[b];
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                if clusters[i].iter().any(|&a| clusters[j].iter().any(|&b| linked(a, b))) {
                    continue;
                }
                let mut total = 0.0;
                for &a in &clusters[i] {
                    for &b in &clusters[j] {
                        total += dist(a, b);
                    }
                }
                let avg = total / (clusters[i].len() * clusters[j].len()) as f64;
                // Cluster ids are the smallest members; clusters are kept
                // sorted by id, so scan order is lexicographic in ids and
                // the first of several equal distances wins.
                let tie = |d: f64| (avg - d).abs() <= 1e-12 * d.abs().max(1.0);
                if best.is_none_or(|(d, _, _)| avg < d && !tie(d)) {
                    best = Some((avg, i, j));
                }
            }
        }
        match best {
            Some((d, i, j)) if d <= threshold => {
                let moved = clusters.remove(j);
                clusters[i].extend(moved);
                clusters[i].sort_unstable();
            }
            _ => break,
        }
    }
    let mut labels = vec![0; n];
    for (k, c) in clusters.iter().enumerate() {
        for &i in c {
            labels[i] = k;
        }
    }
    ClusterAssignment::from_raw_labels(&labels).labels
}

/// Maximum-weight one-to-one mapping by enumerating every injection of the
/// smaller side into the larger one.
pub fn exhaustive_assignment_value(w: &[Vec<u64>]) -> u64 {
    let rows = w.len();
    let cols = w.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0;
    }
    fn go(w: &[Vec<u64>], row: usize, used: &mut Vec<bool>, transpose: bool) -> u64 {
        let (rows, cols) = if transpose { (w[0].len(), w.len()) } else { (w.len(), w[0].len()) };
        if row == rows {
            return 0;
        }
        let mut best = 0;
        for c in 0..cols {
            if used[c] {
                continue;
            }
            used[c] = true;
            let v = if transpose { w[c][row] } else { w[row][c] };
            best = best.max(v + go(w, row + 1, used, transpose));
            used[c] = false;
        }
        best
    }
    let transpose = rows > cols;
    let mut used = vec![false; if transpose { rows } else { cols }];
    go(w, 0, &mut used, transpose)
}

/// `Σ_t Σ_s γ_ts log p̄(x_t | s) − F_B Σ_g KL(q_g)` for fixed occupancies,
/// written out directly from the emission definition.
pub fn qy_objective(
    space: &msvbx::hmm::StateSpace,
    gamma: &[Vec<f64>],
    feats: &StreamFeatures,
    phi: &[f64],
    cfg: &msvbx::InferenceConfig,
    q: &[msvbx::hmm::SpeakerPosterior],
) -> f64 {
    let dim = phi.len() as f64;
    let mut total = 0.0;
    for (t, row) in gamma.iter().enumerate() {
        for (s, &g) in row.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let mut e = 0.0;
            for (c, &spk) in space.state(s).iter().enumerate() {
                let x = &feats.chunk(t)[c];
                let q = &q[spk];
                for d in 0..phi.len() {
                    e += q.alpha[d] * phi[d].sqrt() * x[d]
                        - 0.5 * phi[d] * (1.0 / q.precision[d] + q.alpha[d] * q.alpha[d])
                        - 0.5 * x[d] * x[d];
                }
                e -= 0.5 * dim * (2.0 * std::f64::consts::PI).ln();
            }
            total += g * cfg.fa * e;
        }
    }
    let kl: f64 = q
        .iter()
        .map(|q| {
            0.5 * q
                .alpha
                .iter()
                .zip(&q.precision)
                .map(|(a, l)| 1.0 / l + a * a - 1.0 + l.ln())
                .sum::<f64>()
        })
        .sum();
    total - cfg.fb * kl
}

/// Largest central-difference derivative of [`qy_objective`] over all
/// `α_g` components at `q`.
pub fn max_alpha_gradient(
    space: &msvbx::hmm::StateSpace,
    gamma: &[Vec<f64>],
    feats: &StreamFeatures,
    phi: &[f64],
    cfg: &msvbx::InferenceConfig,
    q: &[msvbx::hmm::SpeakerPosterior],
    h: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for g in 0..q.len() {
        for d in 0..phi.len() {
            let mut plus = q.to_vec();
            plus[g].alpha[d] += h;
            let mut minus = q.to_vec();
            minus[g].alpha[d] -= h;
            let grad = (qy_objective(space, gamma, feats, phi, cfg, &plus)
                - qy_objective(space, gamma, feats, phi, cfg, &minus))
                / (2.0 * h);
            worst = worst.max(grad.abs());
        }
    }
    worst
}

/// Occurrences of one label on two streams of the same chunk.
pub fn cannot_link_violations(labels: &[Vec<usize>]) -> usize {
    labels
        .iter()
        .map(|row| {
            (0..row.len())
                .filter(|&i| row[..i].contains(&row[i]))
                .count()
        })
        .sum()
}

/// Random cAHC instance: `n` points in 2-D (integer grid when `grid`, to
/// provoke ties), random chunk-style cannot-link groups, random threshold.
pub fn random_cahc_instance(rng: &mut ChaCha8Rng, n: usize, grid: bool) -> (Vec<Vec<f64>>, CannotLinkSet, f64) {
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..2)
                .map(|_| {
                    if grid {
                        rng.random_range(0..4) as f64
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        })
        .collect();
    let mut groups = Vec::new();
    let mut i = 0;
    while i < n {
        let k = rng.random_range(1..=3).min(n - i);
        groups.push((i..i + k).collect());
        i += k;
    }
    let threshold = if grid { rng.random_range(0.5..4.0) } else { rng.random_range(0.05..2.0) };
    (points, CannotLinkSet::new(groups).unwrap(), threshold)
}

/// Average linkage between two clusters, from raw distances.
pub fn average_linkage(points: &[Vec<f64>], a: &[usize], b: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in a {
        for &j in b {
            total += points[i]
                .iter()
                .zip(&points[j])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
        }
    }
    total / (a.len() * b.len()) as f64
}

/// Within-speaker covariance (pooled scatter over `n − K`) and the
/// method-of-moments between-speaker covariance, recomputed from scratch.
pub fn two_covariances(vectors: &[Vec<f64>], labels: &[i64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dim = vectors[0].len();
    let n = vectors.len() as f64;
    let mut ids: Vec<i64> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let k = ids.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|d| vectors.iter().map(|v| v[d]).sum::<f64>() / n).collect();
    let mut within = vec![vec![0.0; dim]; dim];
    let mut between = vec![vec![0.0; dim]; dim];
    let mut sq_counts = 0.0;
    for id in &ids {
        let members: Vec<&Vec<f64>> = vectors.iter().zip(labels).filter(|(_, l)| *l == id).map(|(v, _)| v).collect();
        let nk = members.len() as f64;
        sq_counts += nk * nk;
        let mk: Vec<f64> = (0..dim).map(|d| members.iter().map(|v| v[d]).sum::<f64>() / nk).collect();
        for v in &members {
            for a in 0..dim {
                for b in 0..dim {
                    within[a][b] += (v[a] - mk[a]) * (v[b] - mk[b]);
                }
            }
        }
        for a in 0..dim {
            for b in 0..dim {
                between[a][b] += nk * (mk[a] - mean[a]) * (mk[b] - mean[b]);
            }
        }
    }
    for a in 0..dim {
        for b in 0..dim {
            within[a][b] /= n - k;
        }
    }
    let effective = n - sq_counts / n;
    for a in 0..dim {
        for b in 0..dim {
            between[a][b] = (between[a][b] - (k - 1.0) * within[a][b]) / effective;
        }
    }
    (within, between)
}

/// Frobenius norm of `m − diag(target)`.
pub fn frobenius_from_diag(m: &[Vec<f64>], target: &[f64]) -> f64 {
    let mut total = 0.0;
    for (a, row) in m.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            let t = if a == b { target[a] } else { 0.0 };
            total += (v - t) * (v - t);
        }
    }
    total.sqrt()
}

/// Labeled set with strong, well-conditioned speaker structure in `dim`
/// dimensions, shifted off the origin so L2 normalization keeps it full rank.
pub fn structured_labeled_set(seed: u64, speakers: usize, per: usize, dim: usize) -> msvbx::plda::LabeledEmbeddings {
    let mut r = rng(seed);
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for g in 0..speakers {
        let mean: Vec<f64> = (0..dim).map(|d| 3.0 * r.sample::<f64, _>(StandardNormal) + if d == 0 { 10.0 } else { 0.0 }).collect();
        for _ in 0..per {
            vectors.push(mean.iter().map(|m| m + 0.5 * r.sample::<f64, _>(StandardNormal)).collect());
            labels.push(g as i64);
        }
    }
    msvbx::plda::LabeledEmbeddings::new(vectors, labels).unwrap()
}

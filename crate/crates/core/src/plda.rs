//! Embedding backend: L2 normalization, LDA reduction and a two-covariance
//! PLDA model whose whitening transform diagonalizes the between-speaker
//! covariance.
//!
//! The processing order is fixed: L2 normalize, LDA project, center by the
//! global mean, whiten. In the whitened space the within-speaker covariance is
//! the identity and the between-speaker covariance is `diag(phi)`, which is
//! exactly what the HMM emissions consume.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RIDGE_TRIGGER: f64 = 1e-10;
const RIDGE_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEmbeddings {
    pub vectors: Vec<Vec<f64>>,
    pub speaker_labels: Vec<i64>,
}

impl LabeledEmbeddings {
    pub fn new(vectors: Vec<Vec<f64>>, speaker_labels: Vec<i64>) -> Result<Self> {
        let data = Self {
            vectors,
            speaker_labels,
        };
        data.dim()?;
        Ok(data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let data: Self = serde_json::from_slice(&fs::read(path)?)?;
        data.dim()?;
        Ok(data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Common vector dimension; errors on ragged input or label count mismatch.
    pub fn dim(&self) -> Result<usize> {
        if self.vectors.len() != self.speaker_labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} vectors but {} labels",
                self.vectors.len(),
                self.speaker_labels.len()
            )));
        }
        let dim = self.vectors.first().map_or(0, Vec::len);
        if let Some(v) = self.vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        Ok(dim)
    }

    fn groups(&self) -> BTreeMap<i64, Vec<usize>> {
        let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &label) in self.speaker_labels.iter().enumerate() {
            groups.entry(label).or_default().push(i);
        }
        groups
    }
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::DegenerateInput(format!(
            "cannot normalize vector with norm {norm}"
        )));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Class means, overall mean, within-class and between-class scatter sums.
struct Scatter {
    mean: DVector<f64>,
    within: DMatrix<f64>,
    between: DMatrix<f64>,
    counts: Vec<usize>,
}

fn scatter(data: &LabeledEmbeddings) -> Result<Scatter> {
    let dim = data.dim()?;
    if data.is_empty() {
        return Err(Error::DegenerateInput("no training vectors".into()));
    }
    let n = data.len() as f64;
    let vecs: Vec<DVector<f64>> = data
        .vectors
        .iter()
        .map(|v| DVector::from_column_slice(v))
        .collect();
    let mean = vecs.iter().fold(DVector::zeros(dim), |acc, v| acc + v) / n;
    let mut within = DMatrix::zeros(dim, dim);
    let mut between = DMatrix::zeros(dim, dim);
    let mut counts = Vec::new();
    for members in data.groups().values() {
        let nk = members.len() as f64;
        let mk = members
            .iter()
            .fold(DVector::zeros(dim), |acc, &i| acc + &vecs[i])
            / nk;
        for &i in members {
            let d = &vecs[i] - &mk;
            within += &d * d.transpose();
        }
        let d = &mk - &mean;
        between += (&d * d.transpose()) * nk;
        counts.push(members.len());
    }
    Ok(Scatter {
        mean,
        within,
        between,
        counts,
    })
}

/// Solves `between · w = λ · within · w` for symmetric `within` (positive
/// definite after an optional ridge) and symmetric `between`.
///
/// Returns `W` with `Wᵀ·within·W = I` and `Wᵀ·between·W = diag(λ)`, columns
/// ordered by descending `λ`, each column's largest-magnitude entry positive.
pub fn simultaneous_diagonalize(
    within: &DMatrix<f64>,
    between: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let dim = within.nrows();
    if within.ncols() != dim || between.nrows() != dim || between.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: between.nrows(),
        });
    }
    let within = regularized(within)?;
    let chol = within
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("within-class covariance".into()))?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(dim, dim))
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let m = &l_inv * between * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lt = l_inv.transpose();
    let mut w = DMatrix::zeros(dim, dim);
    let mut values = Vec::with_capacity(dim);
    for (col, &k) in order.iter().enumerate() {
        let mut v = &lt * eig.eigenvectors.column(k);
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.neg_mut();
        }
        w.set_column(col, &v);
        values.push(eig.eigenvalues[k]);
    }
    Ok((w, values))
}

fn regularized(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = m.nrows();
    let trace = m.trace();
    if !(trace > 0.0 && trace.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!(
            "within-class covariance has trace {trace}"
        )));
    }
    let sym = (m + m.transpose()) * 0.5;
    let min_eig = SymmetricEigen::new(sym.clone()).eigenvalues.min();
    let scale = trace / dim as f64;
    if min_eig <= RIDGE_TRIGGER * scale || sym.clone().cholesky().is_none() {
        let ridge = RIDGE_SCALE * scale;
        warn!("within-class covariance is rank deficient; adding ridge {ridge:.3e}");
        return Ok(sym + DMatrix::identity(dim, dim) * ridge);
    }
    Ok(sym)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// `input_dim × out_dim`; columns are discriminant directions.
    pub lda_matrix: DMatrix<f64>,
    /// Projection of the training mean.
    pub global_mean: DVector<f64>,
    pub eigenvalues: Vec<f64>,
}

/// Fisher LDA. Requested dimensions beyond `min(input_dim, speakers - 1)` are
/// clamped with a warning.
pub fn train_lda(data: &LabeledEmbeddings, out_dim: usize) -> Result<LdaModel> {
    let dim = data.dim()?;
    let s = scatter(data)?;
    let speakers = s.counts.len();
    if speakers < 2 {
        return Err(Error::DegenerateInput(
            "LDA needs at least two speakers".into(),
        ));
    }
    let feasible = dim.min(speakers - 1);
    let out_dim = if out_dim > feasible {
        warn!("LDA dimension {out_dim} not feasible, clamping to {feasible}");
        feasible
    } else {
        out_dim
    };
    if out_dim == 0 {
        return Err(Error::InvalidConfig("LDA dimension must be positive".into()));
    }
    let n = data.len() as f64;
    let (w, values) = simultaneous_diagonalize(&(s.within / n), &(s.between / n))?;
    let lda_matrix = w.columns(0, out_dim).into_owned();
    let global_mean = lda_matrix.transpose() * &s.mean;
    Ok(LdaModel {
        lda_matrix,
        global_mean,
        eigenvalues: values[..out_dim].to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    pub whiten_transform: DMatrix<f64>,
    pub phi: Vec<f64>,
}

/// Two-covariance PLDA on already reduced, centered embeddings.
///
/// `Σ_w` is the pooled within-speaker scatter divided by `n - K`; `Σ_b` is the
/// method-of-moments estimate `(S_b - (K-1)·Σ_w) / (n - Σ n_k² / n)` built from
/// count-weighted speaker-mean scatter `S_b`. Negative diagonalized
/// between-speaker variances are clamped to zero.
pub fn train_plda(data: &LabeledEmbeddings) -> Result<PldaModel> {
    let s = scatter(data)?;
    let speakers = s.counts.len();
    if speakers < 2 {
        return Err(Error::DegenerateInput(
            "PLDA needs at least two speakers".into(),
        ));
    }
    if s.counts.iter().any(|&c| c < 2) {
        return Err(Error::DegenerateInput(
            "every speaker needs at least two vectors".into(),
        ));
    }
    let n = data.len() as f64;
    let k = speakers as f64;
    let sigma_w = s.within / (n - k);
    let effective = n - s.counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n;
    let sigma_b = (s.between - &sigma_w * (k - 1.0)) / effective;
    let (whiten_transform, values) = simultaneous_diagonalize(&sigma_w, &sigma_b)?;
    let phi = values.into_iter().map(|v| v.max(0.0)).collect();
    Ok(PldaModel {
        whiten_transform,
        phi,
    })
}

/// Trained backend: maps raw embeddings into the diagonalized PLDA space.
#[derive(Debug, Clone, PartialEq)]
pub struct PldaBackend {
    input_dim: usize,
    lda_dim: usize,
    global_mean: DVector<f64>,
    lda_matrix: DMatrix<f64>,
    whiten_transform: DMatrix<f64>,
    phi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BackendFile {
    input_dim: usize,
    lda_dim: usize,
    global_mean: Vec<f64>,
    lda_matrix: Vec<Vec<f64>>,
    whiten_transform: Vec<Vec<f64>>,
    phi: Vec<f64>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidConfig(format!(
            "{what} must be {nrows}×{ncols}"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl PldaBackend {
    pub fn train(data: &LabeledEmbeddings, lda_dim: usize) -> Result<Self> {
        let input_dim = data.dim()?;
        let normalized = LabeledEmbeddings {
            vectors: data
                .vectors
                .iter()
                .map(|v| l2_normalize(v))
                .collect::<Result<_>>()?,
            speaker_labels: data.speaker_labels.clone(),
        };
        let lda = train_lda(&normalized, lda_dim)?;
        let lda_t = lda.lda_matrix.transpose();
        let reduced = LabeledEmbeddings {
            vectors: normalized
                .vectors
                .iter()
                .map(|v| (&lda_t * DVector::from_column_slice(v) - &lda.global_mean).as_slice().to_vec())
                .collect(),
            speaker_labels: normalized.speaker_labels,
        };
        let plda = train_plda(&reduced)?;
        Ok(Self {
            input_dim,
            lda_dim: lda.lda_matrix.ncols(),
            global_mean: lda.global_mean,
            lda_matrix: lda.lda_matrix,
            whiten_transform: plda.whiten_transform,
            phi: plda.phi,
        })
    }

    pub fn from_parts(
        global_mean: DVector<f64>,
        lda_matrix: DMatrix<f64>,
        whiten_transform: DMatrix<f64>,
        phi: Vec<f64>,
    ) -> Result<Self> {
        let (input_dim, lda_dim) = lda_matrix.shape();
        if global_mean.len() != lda_dim
            || whiten_transform.shape() != (lda_dim, lda_dim)
            || phi.len() != lda_dim
        {
            return Err(Error::InvalidConfig(format!(
                "backend parts inconsistent with lda_dim {lda_dim}"
            )));
        }
        if phi.iter().any(|p| !(*p >= 0.0)) || phi.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidConfig(
                "phi must be nonnegative and non-increasing".into(),
            ));
        }
        Ok(Self {
            input_dim,
            lda_dim,
            global_mean,
            lda_matrix,
            whiten_transform,
            phi,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn lda_dim(&self) -> usize {
        self.lda_dim
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn global_mean(&self) -> &DVector<f64> {
        &self.global_mean
    }

    pub fn lda_matrix(&self) -> &DMatrix<f64> {
        &self.lda_matrix
    }

    pub fn whiten_transform(&self) -> &DMatrix<f64> {
        &self.whiten_transform
    }

    /// Maps a raw embedding into the whitened, diagonalized space.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: v.len(),
            });
        }
        let unit = DVector::from_vec(l2_normalize(v)?);
        let centered = self.lda_matrix.tr_mul(&unit) - &self.global_mean;
        Ok(self.whiten_transform.tr_mul(&centered).as_slice().to_vec())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = BackendFile {
            input_dim: self.input_dim,
            lda_dim: self.lda_dim,
            global_mean: self.global_mean.as_slice().to_vec(),
            lda_matrix: to_rows(&self.lda_matrix),
            whiten_transform: to_rows(&self.whiten_transform),
            phi: self.phi.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: BackendFile = serde_json::from_str(text)?;
        let lda_matrix = from_rows(&f.lda_matrix, f.input_dim, f.lda_dim, "lda_matrix")?;
        let whiten = from_rows(&f.whiten_transform, f.lda_dim, f.lda_dim, "whiten_transform")?;
        Self::from_parts(DVector::from_vec(f.global_mean), lda_matrix, whiten, f.phi)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

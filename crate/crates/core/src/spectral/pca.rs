//! Standardization, covariance, principal subspace and latent decoding.

use crate::error::{Result, SdeError};
use crate::spectral::history::LengthHistory;
use crate::spectral::linalg::{eigendecompose_symmetric, Matrix};
use crate::spectral::morphology::{Block, MorphologyVector, Symmetry};

/// Column-standardized history.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub data: Matrix,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Columns with zero sample variance; their std is recorded as 1.
    pub inert: Vec<bool>,
}

/// Column-wise z-score with the `n - 1` convention.
pub fn standardize(h: &Matrix) -> Result<Standardized> {
    let (t, m) = (h.rows(), h.cols());
    if t < 2 {
        return Err(SdeError::domain(format!(
            "standardizing needs at least 2 rows, got {t}"
        )));
    }
    let mut means = vec![0.0; m];
    for r in 0..t {
        for (mu, v) in means.iter_mut().zip(h.row(r)) {
            *mu += v;
        }
    }
    means.iter_mut().for_each(|mu| *mu /= t as f64);
    let mut var = vec![0.0; m];
    for r in 0..t {
        for c in 0..m {
            let d = h[(r, c)] - means[c];
            var[c] += d * d;
        }
    }
    let mut stds = Vec::with_capacity(m);
    let mut inert = Vec::with_capacity(m);
    for v in var {
        let s = (v / (t - 1) as f64).sqrt();
        if s > 0.0 && s.is_finite() {
            stds.push(s);
            inert.push(false);
        } else {
            stds.push(1.0);
            inert.push(true);
        }
    }
    let mut data = Matrix::zeros(t, m);
    for r in 0..t {
        for c in 0..m {
            data[(r, c)] = if inert[c] {
                0.0
            } else {
                (h[(r, c)] - means[c]) / stds[c]
            };
        }
    }
    Ok(Standardized {
        data,
        means,
        stds,
        inert,
    })
}

/// `HᵀH / (T - 1)`, symmetric by construction.
pub fn covariance(h: &Matrix) -> Result<Matrix> {
    let (t, m) = (h.rows(), h.cols());
    if t < 2 {
        return Err(SdeError::domain(format!(
            "covariance needs at least 2 rows, got {t}"
        )));
    }
    let mut c = Matrix::zeros(m, m);
    for r in 0..t {
        let row = h.row(r);
        for i in 0..m {
            for j in 0..=i {
                c[(i, j)] += row[i] * row[j];
            }
        }
    }
    let denom = (t - 1) as f64;
    for i in 0..m {
        for j in 0..=i {
            let v = c[(i, j)] / denom;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Principal subspace of group-averaged muscle-length dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    pub symmetry: Symmetry,
    pub mean_theta: MorphologyVector,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub inert: Vec<bool>,
    /// All `M` eigenvalues, descending, non-negative.
    pub eigenvalues: Vec<f64>,
    /// `M x k` with orthonormal columns.
    pub vectors: Matrix,
}

impl SpectralBasis {
    /// Identity basis over all `m` groups: the latent is the raw offset from
    /// the reference design.
    pub fn identity(m: usize, symmetry: Symmetry) -> Self {
        Self {
            symmetry,
            mean_theta: MorphologyVector::default_for(m),
            feature_means: vec![0.0; m],
            feature_stds: vec![1.0; m],
            inert: vec![false; m],
            eigenvalues: vec![1.0; m],
            vectors: Matrix::identity(m),
        }
    }

    pub fn m(&self) -> usize {
        self.vectors.rows()
    }

    pub fn k(&self) -> usize {
        self.vectors.cols()
    }

    /// Dimension of the full latent code.
    pub fn latent_dim(&self) -> usize {
        3 * self.k()
    }

    /// Share of total variance captured by the first `k` eigenvalues.
    pub fn explained_variance_at(&self, k: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        if k >= self.eigenvalues.len() {
            return 1.0;
        }
        self.eigenvalues[..k].iter().sum::<f64>() / total
    }

    pub fn explained_variance(&self) -> f64 {
        self.explained_variance_at(self.k())
    }

    /// Cumulative explained variance for `k = 1..=M`.
    pub fn cumulative_explained_variance(&self) -> Vec<f64> {
        (1..=self.eigenvalues.len())
            .map(|k| self.explained_variance_at(k))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, k) = (self.m(), self.k());
        if k == 0 || k > m {
            return Err(SdeError::domain(format!(
                "retained components {k} outside [1, {m}]"
            )));
        }
        if self.mean_theta.m() != m
            || self.feature_means.len() != m
            || self.feature_stds.len() != m
            || self.inert.len() != m
            || self.eigenvalues.len() != m
        {
            return Err(SdeError::domain("basis component lengths disagree with M"));
        }
        if self.eigenvalues.windows(2).any(|w| w[0] < w[1])
            || self.eigenvalues.iter().any(|v| *v < 0.0)
        {
            return Err(SdeError::domain(
                "eigenvalues must be non-negative and descending",
            ));
        }
        Ok(())
    }
}

/// Standardize, form the covariance, eigendecompose and keep the top `k`
/// directions. `mean_theta` is the reference design.
pub fn build_basis(history: &LengthHistory, k: usize) -> Result<SpectralBasis> {
    let m = history.m();
    if k == 0 || k > m {
        return Err(SdeError::domain(format!("k = {k} outside [1, {m}]")));
    }
    let std = standardize(&history.data)?;
    let c = covariance(&std.data)?;
    let eig = eigendecompose_symmetric(&c)?;
    let eigenvalues: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    if eigenvalues.iter().sum::<f64>() <= 0.0 {
        return Err(SdeError::domain("history has no variance in any group"));
    }
    let mut vectors = Matrix::zeros(m, k);
    for r in 0..m {
        for c in 0..k {
            vectors[(r, c)] = eig.vectors[(r, c)];
        }
    }
    Ok(SpectralBasis {
        symmetry: history.symmetry,
        mean_theta: MorphologyVector::default_for(m),
        feature_means: std.means,
        feature_stds: std.stds,
        inert: std.inert,
        eigenvalues,
        vectors,
    })
}

/// `3M x 3k` matrix with `V_k` repeated on the block diagonal.
pub fn expand_block_diagonal(basis: &SpectralBasis) -> Matrix {
    let (m, k) = (basis.m(), basis.k());
    let mut out = Matrix::zeros(3 * m, 3 * k);
    for b in 0..3 {
        for r in 0..m {
            for c in 0..k {
                out[(b * m + r, b * k + c)] = basis.vectors[(r, c)];
            }
        }
    }
    out
}

/// Latent design coordinates laid out as `[z_sigma, z_nu, z_kappa]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    z: Vec<f64>,
}

impl LatentCode {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.is_empty() || z.len() % 3 != 0 {
            return Err(SdeError::domain(format!(
                "latent length {} is not a positive multiple of 3",
                z.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(SdeError::domain("latent code is not finite"));
        }
        Ok(Self { z })
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            z: vec![0.0; 3 * k],
        }
    }

    pub fn k(&self) -> usize {
        self.z.len() / 3
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.z
    }

    pub fn block(&self, b: Block) -> &[f64] {
        let k = self.k();
        &self.z[b.index() * k..(b.index() + 1) * k]
    }
}

/// `clamp(mean_theta + Ṽ_k z)` into the per-block bounds.
pub fn decode_morphology(z: &LatentCode, basis: &SpectralBasis) -> Result<MorphologyVector> {
    if z.k() != basis.k() {
        return Err(SdeError::domain(format!(
            "latent has {} components per block, basis has {}",
            z.k(),
            basis.k()
        )));
    }
    let m = basis.m();
    let mut theta = basis.mean_theta.as_slice().to_vec();
    for b in Block::ALL {
        let offset = basis.vectors.matvec(z.block(b))?;
        for (t, d) in theta[b.index() * m..(b.index() + 1) * m]
            .iter_mut()
            .zip(offset)
        {
            *t += d;
        }
    }
    Ok(MorphologyVector::new(theta)?.clamped())
}

/// `Ṽ_kᵀ (theta - mean_theta)`.
pub fn project(theta: &MorphologyVector, basis: &SpectralBasis) -> Result<LatentCode> {
    if theta.m() != basis.m() {
        return Err(SdeError::domain("design vector and basis disagree on M"));
    }
    let mut z = Vec::with_capacity(basis.latent_dim());
    for b in Block::ALL {
        let d: Vec<f64> = theta
            .block(b)
            .iter()
            .zip(basis.mean_theta.block(b))
            .map(|(t, mu)| t - mu)
            .collect();
        z.extend(basis.vectors.t_matvec(&d)?);
    }
    LatentCode::new(z)
}

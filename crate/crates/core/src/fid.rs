//! Fréchet distance between Gaussian fits of two feature sets.
//!
//! Features arrive precomputed (e.g. 64-dim pooled Inception activations).
//! Covariances use the unbiased `n − 1` divisor. The trace of the matrix
//! square root is taken through the symmetric form
//! `(Σ1^{1/2} Σ2 Σ1^{1/2})^{1/2}`, which has the same trace as
//! `(Σ1 Σ2)^{1/2}` but only needs symmetric eigendecompositions.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"FSFE";

const SYMMETRY_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-9;
/// Negative eigenvalues beyond this are reported, not silently clipped.
const CLIP_WARN: f64 = 1e-6;
const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

/// Rows of equal-length, finite feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    rows: DMatrix<f64>,
}

impl FeatureSet {
    /// Builds a set from row-major data.
    pub fn from_rows(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("feature dimension must be positive"));
        }
        if data.len() != rows * dim {
            return Err(Error::domain(format!(
                "{} values do not fill {rows} rows of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite feature value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            rows: DMatrix::from_row_slice(rows, dim, &data),
        })
    }

    pub fn from_vecs(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::domain(format!("row {i} has dimension {}, expected {dim}", rows[i].len())));
        }
        Self::from_rows(rows.len(), dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.rows.row(i).iter().copied().collect()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianStats {
    /// Validates that `cov` is square, matches `mean`, is symmetric within
    /// 1e-9 and has no eigenvalue below −1e-9.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::domain(format!(
                "covariance is {}x{} but the mean has {d} entries",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("Gaussian statistics contain non-finite values"));
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::domain(format!("covariance is not symmetric (max deviation {asym:e})")));
        }
        let min_eig = eigen(&cov)?.eigenvalues.min();
        if min_eig < -PSD_TOL {
            return Err(Error::domain(format!("covariance has eigenvalue {min_eig:e} < 0")));
        }
        Ok(Self { mean, cov })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and symmetrized `n − 1` covariance.
pub fn fit_gaussian(features: &FeatureSet) -> Result<GaussianStats> {
    let n = features.len();
    if n < 2 {
        return Err(Error::domain(format!("fitting a covariance needs at least 2 rows, got {n}")));
    }
    let x = features.matrix();
    let mean: DVector<f64> = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianStats { mean, cov })
}

fn eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numeric(format!("symmetric eigendecomposition of a {}x{} matrix did not converge", m.nrows(), m.ncols())))
}

fn clipped(values: &DVector<f64>, what: &str) -> DVector<f64> {
    let min = values.min();
    if min < -CLIP_WARN {
        log::warn!("{what} has eigenvalue {min:e}; clipping negative eigenvalues to 0");
    }
    values.map(|v| v.max(0.0))
}

/// PSD square root via eigendecomposition, negative eigenvalues clipped to 0.
pub fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = eigen(&sym)?;
    let roots = clipped(&eig.eigenvalues, "matrix").map(f64::sqrt);
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// `‖μ1−μ2‖² + Tr(Σ1 + Σ2 − 2(Σ1^{1/2} Σ2 Σ1^{1/2})^{1/2})`, clamped to ≥ 0.
pub fn frechet_distance(g1: &GaussianStats, g2: &GaussianStats) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::domain(format!("dimension mismatch: {} vs {}", g1.dim(), g2.dim())));
    }
    let mean_term = (&g1.mean - &g2.mean).norm_squared();
    let root1 = sqrt_psd(&g1.cov)?;
    let inner = &root1 * &g2.cov * &root1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let eig = eigen(&inner)?;
    let cross_trace: f64 = clipped(&eig.eigenvalues, "Σ1^½ Σ2 Σ1^½").iter().map(|v| v.sqrt()).sum();
    let d = mean_term + g1.cov.trace() + g2.cov.trace() - 2.0 * cross_trace;
    Ok(d.max(0.0))
}

pub fn fid(features_a: &FeatureSet, features_b: &FeatureSet) -> Result<f64> {
    if features_a.dim() != features_b.dim() {
        return Err(Error::domain(format!(
            "dimension mismatch: {} vs {}",
            features_a.dim(),
            features_b.dim()
        )));
    }
    frechet_distance(&fit_gaussian(features_a)?, &fit_gaussian(features_b)?)
}

/// Parses comma-separated rows of numbers; blank lines are skipped.
pub fn read_features_csv<R: BufRead>(input: R) -> Result<FeatureSet> {
    let mut rows = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(format!("line {}: {e}", lineno + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format("feature file has no rows"));
    }
    FeatureSet::from_vecs(&rows)
}

/// `FSFE` magic, u32 LE row count, u32 LE dimension, then row-major f32 LE values.
pub fn read_features_binary<R: Read>(mut input: R) -> Result<FeatureSet> {
    let mut header = [0u8; 12];
    input
        .read_exact(&mut header)
        .map_err(|_| Error::format("binary feature header is truncated"))?;
    if &header[..4] != FEATURE_MAGIC {
        return Err(Error::format("missing FSFE magic"));
    }
    let n = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let count = n
        .checked_mul(d)
        .ok_or_else(|| Error::format("binary feature shape overflows"))?;
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    if payload.len() != count * 4 {
        return Err(Error::format(format!(
            "expected {count} f32 values ({} bytes) after the header, found {} bytes",
            count * 4,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FeatureSet::from_rows(n, d, data)
}

pub fn write_features_binary<W: Write>(features: &FeatureSet, mut out: W) -> Result<()> {
    let n = u32::try_from(features.len()).map_err(|_| Error::domain("too many rows for the binary format"))?;
    let d = u32::try_from(features.dim()).map_err(|_| Error::domain("dimension too large for the binary format"))?;
    out.write_all(FEATURE_MAGIC)?;
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&d.to_le_bytes())?;
    for row in features.matrix().row_iter() {
        for v in row.iter() {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_features_csv<W: Write>(features: &FeatureSet, mut out: W) -> Result<()> {
    for row in features.matrix().row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Decodes either format, picking binary when the bytes start with `FSFE`.
pub fn parse_features(bytes: &[u8]) -> Result<FeatureSet> {
    if bytes.starts_with(FEATURE_MAGIC) {
        read_features_binary(bytes)
    } else {
        read_features_csv(bytes)
    }
}

pub fn load_features(path: &Path) -> Result<FeatureSet> {
    let bytes = std::fs::read(path)?;
    parse_features(&bytes).map_err(|e| e.at_path(path))
}

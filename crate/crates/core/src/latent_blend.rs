//! Norm-corrected blending of a latent with noise.
//!
//! Plain interpolation `z' = (1−α)z + αn` of two roughly orthogonal
//! high-dimensional vectors shrinks the norm. The corrected blend keeps the
//! direction of `z'` but rescales it to `(1−α)‖z‖ + α‖n‖`, which still
//! returns `z` at `α = 0`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// Below this norm the raw blend has no usable direction.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// A flat latent vector with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVec(Vec<f64>);

impl LatentVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("latent vectors need at least one entry"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("latent entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Blend weight `α ∈ [0, 1]`; 0 keeps the latent, 1 is pure noise.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BlendParams {
    alpha: f64,
}

impl BlendParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::domain(format!("alpha {alpha} is outside [0, 1]")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

fn check_dims(z: &LatentVec, n: &LatentVec) -> Result<()> {
    if z.dim() != n.dim() {
        return Err(Error::domain(format!("latent dimension mismatch: {} vs {}", z.dim(), n.dim())));
    }
    Ok(())
}

/// `(1−α)z + αn`, elementwise.
pub fn blend_raw(z: &LatentVec, n: &LatentVec, params: BlendParams) -> Result<LatentVec> {
    check_dims(z, n)?;
    let a = params.alpha;
    Ok(LatentVec(
        z.0.iter().zip(&n.0).map(|(zi, ni)| (1.0 - a) * zi + a * ni).collect(),
    ))
}

/// The raw blend rescaled to norm `(1−α)‖z‖ + α‖n‖`.
pub fn blend_norm_corrected(z: &LatentVec, n: &LatentVec, params: BlendParams) -> Result<LatentVec> {
    let raw = blend_raw(z, n, params)?;
    let raw_norm = raw.norm();
    if raw_norm < DEGENERATE_NORM {
        return Err(Error::DegenerateBlend { norm: raw_norm });
    }
    let a = params.alpha;
    let target = (1.0 - a) * z.norm() + a * n.norm();
    let scale = target / raw_norm;
    Ok(LatentVec(raw.0.into_iter().map(|v| v * scale).collect()))
}

/// Picks a latent uniformly, draws standard-normal noise of the same
/// dimension, and returns the chosen index with the corrected blend.
pub fn sample_blend(latents: &[LatentVec], params: BlendParams, seed: u64) -> Result<(usize, LatentVec)> {
    let first = latents
        .first()
        .ok_or_else(|| Error::domain("sample_blend needs at least one latent"))?;
    if let Some(bad) = latents.iter().find(|l| l.dim() != first.dim()) {
        return Err(Error::domain(format!(
            "latent dimension mismatch: {} vs {}",
            first.dim(),
            bad.dim()
        )));
    }
    let mut rng = rng::stream(seed);
    let k = rng.random_range(0..latents.len());
    let noise = LatentVec((0..first.dim()).map(|_| rng.sample(StandardNormal)).collect());
    let out = blend_norm_corrected(&latents[k], &noise, params)?;
    Ok((k, out))
}

/// Noise drawn by [`sample_blend`] for `seed`; exposed for checking outputs.
pub fn sample_noise(dim: usize, latent_count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed);
    let _ = rng.random_range(0..latent_count.max(1));
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

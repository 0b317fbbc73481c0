//! Fréchet distance between feature populations and uniform-noise
//! corruption of images.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::raster::GrayRaster;

/// `n` samples of dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl FeatureSet {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 || data.len() != n * d {
            return Err(Error::InvalidDimensions { width: d, height: n, len: data.len() });
        }
        if n < 2 {
            return Err(Error::TooFewSamples);
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("feature values must be finite"));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch);
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

/// Sample mean and unbiased (n - 1) covariance, row-major `d x d`.
pub fn mean_cov(fs: &FeatureSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, d) = (fs.n, fs.d);
    if n < 2 {
        return Err(Error::TooFewSamples);
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(fs.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for i in 0..n {
        for ((c, v), m) in centered.iter_mut().zip(fs.row(i)).zip(&mean) {
            *c = v - m;
        }
        for a in 0..d {
            let ca = centered[a];
            for b in a..d {
                cov[a * d + b] += ca * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] / (n - 1) as f64;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    Ok((mean, cov))
}

const SYM_TOL: f64 = 1e-8;
const PSD_TOL: f64 = 1e-8;

fn check_square(m: &[f64], d: usize) -> Result<()> {
    if d == 0 || m.len() != d * d {
        return Err(Error::DimensionMismatch);
    }
    Ok(())
}

/// Eigenvalues of a symmetric PSD matrix with small negatives clamped to 0.
/// Tolerances scale with `max(1, max |m_ij|)`.
fn psd_eigen(m: &[f64], d: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_square(m, d)?;
    let scale = linalg::max_abs(m).max(1.0);
    for i in 0..d {
        for j in i + 1..d {
            if libm::fabs(m[i * d + j] - m[j * d + i]) > SYM_TOL * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    let mut sym = m.to_vec();
    linalg::symmetrize(&mut sym, d);
    let (mut vals, vecs) = linalg::symmetric_eigen(&sym, d);
    for v in vals.iter_mut() {
        if *v < -PSD_TOL * scale {
            return Err(Error::NotPsd { eigenvalue: *v });
        }
        *v = v.max(0.0);
    }
    Ok((vals, vecs))
}

/// Symmetric square root of a symmetric positive semidefinite matrix.
pub fn psd_sqrt(m: &[f64], d: usize) -> Result<Vec<f64>> {
    let (vals, vecs) = psd_eigen(m, d)?;
    Ok(linalg::recompose(&vals, &vecs, d, libm::sqrt))
}

/// Fréchet distance between Gaussians with the given moments. The cross
/// term is `tr sqrt(A cov_g A)` with `A = sqrt(cov_r)`.
pub fn frechet_distance(mu_r: &[f64], cov_r: &[f64], mu_g: &[f64], cov_g: &[f64]) -> Result<f64> {
    let d = mu_r.len();
    if mu_g.len() != d || cov_r.len() != d * d || cov_g.len() != d * d {
        return Err(Error::DimensionMismatch);
    }
    let a = psd_sqrt(cov_r, d)?;
    let mut inner = linalg::matmul(&linalg::matmul(&a, cov_g, d), &a, d);
    linalg::symmetrize(&mut inner, d);
    let (vals, _) = psd_eigen(&inner, d)?;
    let cross: f64 = vals.iter().map(|&l| libm::sqrt(l)).sum();
    let mean_term: f64 = mu_r.iter().zip(mu_g).map(|(a, b)| (a - b) * (a - b)).sum();
    let tr = linalg::trace(cov_r, d) + linalg::trace(cov_g, d);
    let value = mean_term + tr - 2.0 * cross;
    if value >= 0.0 {
        Ok(value)
    } else if value > -1e-6 * tr.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NegativeDistance(value))
    }
}

pub fn fid(real: &FeatureSet, generated: &FeatureSet) -> Result<f64> {
    if real.d != generated.d {
        return Err(Error::DimensionMismatch);
    }
    let (mr, cr) = mean_cov(real)?;
    let (mg, cg) = mean_cov(generated)?;
    frechet_distance(&mr, &cr, &mg, &cg)
}

/// Block-average the image down to `side x side`, flatten row-major and
/// scale to `[0, 1]`. Block `k` spans `[floor(k W / side), floor((k+1) W / side))`.
pub fn baseline_features(img: &GrayRaster, side: usize) -> Result<Vec<f64>> {
    let (w, h) = img.dims();
    if side == 0 || side > w.min(h) {
        return Err(Error::InvalidSize);
    }
    let px = img.pixels();
    let mut out = Vec::with_capacity(side * side);
    for by in 0..side {
        let (y0, y1) = (by * h / side, (by + 1) * h / side);
        for bx in 0..side {
            let (x0, x1) = (bx * w / side, (bx + 1) * w / side);
            let mut sum = 0u64;
            for y in y0..y1 {
                sum += px[y * w + x0..y * w + x1].iter().map(|&v| v as u64).sum::<u64>();
            }
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            out.push(sum as f64 / count / 255.0);
        }
    }
    Ok(out)
}

/// Number of pixels replaced at a given fraction: `round(fraction * N)`.
pub fn noise_count(pixels: usize, fraction: f64) -> usize {
    libm::round(fraction * pixels as f64) as usize
}

/// Replace `round(fraction * N)` distinct pixels, chosen uniformly without
/// replacement, by independent uniform intensities. Also returns the
/// replaced positions in draw order.
pub fn inject_noise_with_positions(img: &GrayRaster, fraction: f64, seed: u64) -> Result<(GrayRaster, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter("noise fraction must be in [0, 1]"));
    }
    let n = img.pixels().len();
    let k = noise_count(n, fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = rand::seq::index::sample(&mut rng, n, k).into_vec();
    let mut out = img.clone();
    let px = out.pixels_mut();
    for &p in &positions {
        px[p] = rng.random::<u8>();
    }
    Ok((out, positions))
}

pub fn inject_noise(img: &GrayRaster, fraction: f64, seed: u64) -> Result<GrayRaster> {
    inject_noise_with_positions(img, fraction, seed).map(|(g, _)| g)
}

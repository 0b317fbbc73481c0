use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::GrayRaster;
use crate::error::{Error, Result};

// Kernel weights are fixed point with this many fractional bits and sum to
// exactly 1 << WEIGHT_BITS, so blur(img + c) == blur(img) + c bit for bit.
const WEIGHT_BITS: u32 = 20;
const WEIGHT_ONE: i64 = 1 << WEIGHT_BITS;

/// Gaussian kernel configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurParams {
    pub kernel_side: usize,
    pub sigma: f64,
}

impl BlurParams {
    /// Size-driven default: nearest odd integer to `min(w, h) / 25`, clamped
    /// to `[3, 9]`, with the conventional sigma for that side.
    pub fn adaptive(width: usize, height: usize) -> Self {
        let target = width.min(height) as f64 / 25.0;
        let odd = 2.0 * libm::round((target - 1.0) / 2.0) + 1.0;
        let kernel_side = odd.clamp(3.0, 9.0) as usize;
        Self { kernel_side, sigma: Self::default_sigma(kernel_side) }
    }

    pub fn default_sigma(kernel_side: usize) -> f64 {
        0.3 * ((kernel_side as f64 - 1.0) * 0.5 - 1.0) + 0.8
    }
}

fn fixed_point_kernel(side: usize, sigma: f64) -> Vec<i64> {
    let r = (side / 2) as f64;
    let g: Vec<f64> = (0..side)
        .map(|i| {
            let d = i as f64 - r;
            libm::exp(-d * d / (2.0 * sigma * sigma))
        })
        .collect();
    let gsum: f64 = g.iter().sum();
    let mut k: Vec<i64> = Vec::with_capacity(side * side);
    for gy in &g {
        for gx in &g {
            k.push(libm::round(gy / gsum * gx / gsum * WEIGHT_ONE as f64) as i64);
        }
    }
    // Push the rounding residue into the center tap.
    let residue = WEIGHT_ONE - k.iter().sum::<i64>();
    k[side * side / 2] += residue;
    k
}

/// Normalized Gaussian blur with edge replication, rounded to the nearest
/// intensity (halves round up).
pub fn gaussian_blur(img: &GrayRaster, kernel_side: usize, sigma: f64) -> Result<GrayRaster> {
    let (w, h) = img.dims();
    if kernel_side == 0 || kernel_side.is_multiple_of(2) || kernel_side > w.min(h) {
        return Err(Error::InvalidKernel { side: kernel_side });
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter("sigma must be a positive finite number"));
    }
    if kernel_side == 1 {
        return Ok(img.clone());
    }
    let kernel = fixed_point_kernel(kernel_side, sigma);
    let r = (kernel_side / 2) as isize;
    let src = img.pixels();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc: i64 = 0;
            let mut tap = 0;
            for dy in -r..=r {
                let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                let row = &src[sy * w..(sy + 1) * w];
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w as isize - 1) as usize;
                    acc += kernel[tap] * row[sx] as i64;
                    tap += 1;
                }
            }
            out.push(((acc + WEIGHT_ONE / 2) >> WEIGHT_BITS).clamp(0, 255) as u8);
        }
    }
    GrayRaster::new(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn variance(px: &[u8]) -> f64 {
        let n = px.len() as f64;
        let mean = px.iter().map(|&v| v as f64).sum::<f64>() / n;
        px.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let img = GrayRaster::filled(20, 17, 77).unwrap();
        for side in [3, 5, 7, 9] {
            assert_eq!(gaussian_blur(&img, side, 1.3).unwrap(), img);
        }
    }

    #[test]
    fn impulse_spreads_and_conserves_mass() {
        let mut img = GrayRaster::filled(5, 5, 0).unwrap();
        img.set(2, 2, 255);
        let out = gaussian_blur(&img, 3, 0.8).unwrap();
        assert!(out.get(2, 2) < 255);
        let mass: i64 = out.pixels().iter().map(|&v| v as i64).sum();
        assert!((mass - 255).abs() as f64 <= 9.0 / 2.0, "mass {mass}");
    }

    #[test]
    fn blur_reduces_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = GrayRaster::from_fn(64, 64, |_, _| rng.random()).unwrap();
        let out = gaussian_blur(&img, 5, 1.0).unwrap();
        assert!(variance(out.pixels()) < variance(img.pixels()));
    }

    #[test]
    fn kernel_validation() {
        let img = GrayRaster::filled(8, 6, 3).unwrap();
        assert_eq!(gaussian_blur(&img, 4, 1.0), Err(Error::InvalidKernel { side: 4 }));
        assert_eq!(gaussian_blur(&img, 7, 1.0), Err(Error::InvalidKernel { side: 7 }));
        assert!(gaussian_blur(&img, 3, 0.0).is_err());
        assert_eq!(gaussian_blur(&img, 1, 5.0).unwrap(), img);
    }

    #[test]
    fn kernel_sums_to_one_exactly() {
        for side in [3, 5, 7, 9, 11] {
            for sigma in [0.5, 0.8, 1.1, 2.0, 5.0] {
                assert_eq!(fixed_point_kernel(side, sigma).iter().sum::<i64>(), WEIGHT_ONE);
            }
        }
    }

    #[test]
    fn adaptive_defaults() {
        assert_eq!(BlurParams::adaptive(128, 128).kernel_side, 5);
        assert!((BlurParams::adaptive(128, 128).sigma - 1.1).abs() < 1e-12);
        assert_eq!(BlurParams::adaptive(40, 64).kernel_side, 3);
        assert!((BlurParams::adaptive(40, 40).sigma - 0.8).abs() < 1e-12);
        assert_eq!(BlurParams::adaptive(2048, 2048).kernel_side, 9);
    }

    #[test]
    fn shift_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = GrayRaster::from_fn(30, 30, |_, _| rng.random_range(20..200)).unwrap();
        let shifted = GrayRaster::from_fn(30, 30, |x, y| img.get(x, y) + 37).unwrap();
        let a = gaussian_blur(&img, 5, 1.1).unwrap();
        let b = gaussian_blur(&shifted, 5, 1.1).unwrap();
        for (p, q) in a.pixels().iter().zip(b.pixels()) {
            assert_eq!(*p + 37, *q);
        }
    }
}

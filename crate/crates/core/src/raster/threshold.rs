use super::{BinaryMask, GrayRaster};
use crate::error::{Error, Result};

/// Smallest intensity `p` such that at least `floor(fraction * N)` pixels
/// (and at least one) have intensity `<= p`.
pub fn percentile_threshold(img: &GrayRaster, fraction: f64) -> Result<u8> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter("percentile fraction must lie in (0, 1)"));
    }
    let n = img.pixels().len() as f64;
    // The epsilon keeps products like 0.29 * 100 from flooring to 28.
    let required = (libm::floor(fraction * n + 1e-9) as u64).max(1);
    let hist = img.histogram();
    let mut cumulative = 0u64;
    for (p, &count) in hist.iter().enumerate() {
        cumulative += count;
        if cumulative >= required {
            return Ok(p as u8);
        }
    }
    Ok(255)
}

/// Foreground exactly where the intensity is strictly above `p`.
pub fn binarize(img: &GrayRaster, p: u8) -> BinaryMask {
    let bits = img.pixels().iter().map(|&v| v > p).collect();
    BinaryMask::new(img.width(), img.height(), bits).expect("dimensions come from a valid raster")
}

// Largest image for which the exact comparison below cannot overflow.
const OTSU_MAX_PIXELS: u64 = 1 << 27;

/// Otsu threshold: the `p` maximizing between-class variance when the
/// classes are `<= p` and `> p`. Ties go to the smallest `p`.
///
/// Between-class variance times `N^2` equals `(s0*N - S*n0)^2 / (n0*n1)`,
/// so candidates are compared exactly as integer fractions.
pub fn otsu_threshold(img: &GrayRaster) -> Result<u8> {
    if !img.is_non_degenerate() {
        return Err(Error::DegenerateImage);
    }
    let hist = img.histogram();
    let total = img.pixels().len() as u64;
    if total > OTSU_MAX_PIXELS {
        return Err(Error::InvalidSize);
    }
    let total_sum: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();

    let mut best: Option<(u8, u128, u128)> = None;
    let mut n0 = 0u64;
    let mut s0 = 0u64;
    for t in 0..256usize {
        n0 += hist[t];
        s0 += t as u64 * hist[t];
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = s0 as i128 * total as i128 - total_sum as i128 * n0 as i128;
        let num = d.unsigned_abs() * d.unsigned_abs();
        let den = n0 as u128 * n1 as u128;
        let better = match best {
            None => true,
            Some((_, bnum, bden)) => wide_mul(num, bden) > wide_mul(bnum, den),
        };
        if better {
            best = Some((t as u8, num, den));
        }
    }
    best.map(|(t, _, _)| t).ok_or(Error::DegenerateImage)
}

/// Full 256-bit product as `(high, low)`.
fn wide_mul(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a1, a0) = (a >> 64, a & MASK);
    let (b1, b0) = (b >> 64, b & MASK);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & MASK) + (p10 & MASK);
    let lo = (p00 & MASK) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

//! Deterministic synthetic target chips with known geometry.
//!
//! Used by the test suites and the CLI demo fixtures; each generator is a
//! pure function of its arguments and seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boxes::LabeledBox;
use crate::raster::GrayRaster;

fn clamp_u8(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

/// Constant block on a constant background, with uniform speckle of
/// amplitude `speckle` added to every pixel.
#[allow(clippy::too_many_arguments)]
pub fn speckled_block_chip(
    width: usize,
    height: usize,
    x: usize,
    y: usize,
    block_w: usize,
    block_h: usize,
    block_value: u8,
    background: u8,
    speckle: u8,
    seed: u64,
) -> (GrayRaster, LabeledBox) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = speckle as i32;
    let chip = GrayRaster::from_fn(width, height, |px, py| {
        let inside = px >= x && px < x + block_w && py >= y && py < y + block_h;
        let base = if inside { block_value } else { background } as i32;
        clamp_u8(base + rng.random_range(-amp..=amp))
    })
    .expect("non-zero chip dimensions");
    (chip, LabeledBox::new(0, x as f64, y as f64, block_w as f64, block_h as f64))
}

/// Geometry for [`object_shadow_chip`].
#[derive(Debug, Clone, Copy)]
pub struct ChipSpec {
    pub width: usize,
    pub height: usize,
    pub background: u8,
    pub speckle: u8,
    pub object_w: usize,
    pub object_h: usize,
    pub object_value: u8,
    pub shadow_h: usize,
    pub shadow_value: u8,
}

impl Default for ChipSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            background: 100,
            speckle: 10,
            object_w: 26,
            object_h: 18,
            object_value: 215,
            shadow_h: 14,
            shadow_value: 8,
        }
    }
}

/// Rectangle as `(x, y, w, h)`.
pub type Rect = (usize, usize, usize, usize);

/// Bright object with a dark shadow block directly below it on a
/// mid-gray speckled background. Returns the chip, object and shadow rects.
pub fn object_shadow_chip(spec: &ChipSpec, seed: u64) -> (GrayRaster, Rect, Rect) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total_h = spec.object_h + spec.shadow_h;
    let ox = (spec.width - spec.object_w) / 2;
    let oy = (spec.height - total_h) / 2;
    let obj = (ox, oy, spec.object_w, spec.object_h);
    let shadow = (ox, oy + spec.object_h, spec.object_w, spec.shadow_h);
    let amp = spec.speckle as i32;
    let inside = |r: Rect, x: usize, y: usize| x >= r.0 && x < r.0 + r.2 && y >= r.1 && y < r.1 + r.3;
    let chip = GrayRaster::from_fn(spec.width, spec.height, |x, y| {
        let n = rng.random_range(-amp..=amp);
        if inside(obj, x, y) {
            clamp_u8(spec.object_value as i32 + n)
        } else if inside(shadow, x, y) {
            clamp_u8(spec.shadow_value as i32 + n / 4)
        } else {
            clamp_u8(spec.background as i32 + n)
        }
    })
    .expect("non-zero chip dimensions");
    (chip, obj, shadow)
}

/// Nominal target sizes `(w, h)` of the four synthetic vehicle classes.
pub const NOMINAL_TARGET_SIZES: [(usize, usize); 4] = [(24, 16), (30, 20), (36, 24), (40, 30)];

/// A labeled single-target chip with salt specks.
#[derive(Debug, Clone)]
pub struct SaltedChip {
    pub chip: GrayRaster,
    pub truth: LabeledBox,
    /// Percentile fraction matching the class's nominal target area.
    pub class_fraction: f64,
}

/// 128x128 chip with one textured bright target near the center, a speckled
/// dark background and a handful of 2x2 salt specks. Each speck is far
/// narrower than the auto-label white-pixel threshold.
pub fn salted_target_chip(seed: u64) -> SaltedChip {
    const SIDE: usize = 128;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_id = rng.random_range(0..NOMINAL_TARGET_SIZES.len());
    let (nw, nh) = NOMINAL_TARGET_SIZES[class_id];
    let w = nw + rng.random_range(0..=4) - 2;
    let h = nh + rng.random_range(0..=4) - 2;
    let cx = SIDE / 2 + rng.random_range(0..=16) - 8;
    let cy = SIDE / 2 + rng.random_range(0..=16) - 8;
    let (x0, y0) = (cx - w / 2, cy - h / 2);

    let mut px: alloc::vec::Vec<u8> = (0..SIDE * SIDE)
        .map(|i| {
            let (x, y) = (i % SIDE, i / SIDE);
            if x >= x0 && x < x0 + w && y >= y0 && y < y0 + h {
                rng.random_range(170..=250)
            } else {
                rng.random_range(20..=70)
            }
        })
        .collect();

    let specks = rng.random_range(6..=12);
    let mut placed = 0;
    while placed < specks {
        let sx = rng.random_range(0..SIDE - 1);
        let sy = rng.random_range(0..SIDE - 1);
        // keep specks a few pixels clear of the target
        if sx + 6 > x0 && sx < x0 + w + 4 && sy + 6 > y0 && sy < y0 + h + 4 {
            continue;
        }
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            px[(sy + dy) * SIDE + sx + dx] = 255;
        }
        placed += 1;
    }

    let chip = GrayRaster::new(SIDE, SIDE, px).expect("fixed chip dimensions");
    let class_fraction = 1.0 - (nw * nh) as f64 / (SIDE * SIDE) as f64;
    SaltedChip {
        chip,
        truth: LabeledBox::new(class_id as u32, x0 as f64, y0 as f64, w as f64, h as f64),
        class_fraction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(salted_target_chip(4).chip, salted_target_chip(4).chip);
        assert_ne!(salted_target_chip(4).chip, salted_target_chip(5).chip);
        let a = object_shadow_chip(&ChipSpec::default(), 1);
        let b = object_shadow_chip(&ChipSpec::default(), 1);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn salted_truth_inside_chip() {
        for seed in 0..50 {
            let s = salted_target_chip(seed);
            assert!(s.truth.x >= 0.0 && s.truth.x_max() <= 128.0);
            assert!(s.truth.y >= 0.0 && s.truth.y_max() <= 128.0);
            assert!(s.class_fraction > 0.9 && s.class_fraction < 1.0);
        }
    }
}

//! Raster containers and pixel-level primitives.

mod blur;
mod morphology;
mod threshold;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use blur::{gaussian_blur, BlurParams};
pub use morphology::{morph, MorphOp};
pub use threshold::{binarize, otsu_threshold, percentile_threshold};

/// 8-bit single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidDimensions { width, height, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &v in &self.data {
            hist[v as usize] += 1;
        }
        hist
    }

    /// True when at least two distinct intensities are present.
    pub fn is_non_degenerate(&self) -> bool {
        let first = self.data[0];
        self.data.iter().any(|&v| v != first)
    }

    /// Intensity inversion `255 - v`.
    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 255 - v).collect(),
        }
    }

    /// Copy out the rectangle at `(x, y)` of size `w` x `h`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::InvalidSize);
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Self::new(w, h, data)
    }

    /// Write `patch` into this raster with its top-left corner at `(x, y)`.
    pub fn paste(&mut self, patch: &GrayRaster, x: usize, y: usize) -> Result<()> {
        if x + patch.width > self.width || y + patch.height > self.height {
            return Err(Error::InvalidSize);
        }
        for row in 0..patch.height {
            let dst = (y + row) * self.width + x;
            let src = row * patch.width;
            self.data[dst..dst + patch.width].copy_from_slice(&patch.data[src..src + patch.width]);
        }
        Ok(())
    }
}

/// Boolean raster, `true` is foreground.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidDimensions { width, height, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![true; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Any non-zero intensity is foreground.
    pub fn from_raster(raster: &GrayRaster) -> Self {
        Self {
            width: raster.width,
            height: raster.height,
            data: raster.data.iter().map(|&v| v != 0).collect(),
        }
    }

    /// Foreground becomes 255, background 0.
    pub fn to_raster(&self) -> GrayRaster {
        GrayRaster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn not(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| !b).collect(),
        }
    }

    pub fn and(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::ShapeMismatch);
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Tight bounding box of the foreground as `(x, y, w, h)`.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut x0 = usize::MAX;
        let mut y0 = usize::MAX;
        let mut x1 = 0;
        let mut y1 = 0;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| (x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    /// Number of 8-connected foreground components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.data.len()];
        let mut stack = Vec::new();
        let mut count = 0;
        for start in 0..self.data.len() {
            if !self.data[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(idx) = stack.pop() {
                let (x, y) = ((idx % self.width) as isize, (idx / self.width) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
                            continue;
                        }
                        let n = ny as usize * self.width + nx as usize;
                        if self.data[n] && !seen[n] {
                            seen[n] = true;
                            stack.push(n);
                        }
                    }
                }
            }
        }
        count
    }

    /// Copy out a sub-rectangle.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::InvalidSize);
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Self::new(w, h, data)
    }
}

/// Square structuring element of odd side, anchored at its center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    side: usize,
}

impl StructuringElement {
    pub fn square(side: usize) -> Result<Self> {
        if side == 0 || side.is_multiple_of(2) {
            return Err(Error::InvalidKernel { side });
        }
        Ok(Self { side })
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.side / 2
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self { side: 3 }
    }
}

/// Masked composition: chip where the mask is set, scene cut elsewhere.
pub fn compose(chip: &GrayRaster, scene_cut: &GrayRaster, mask: &BinaryMask) -> Result<GrayRaster> {
    if chip.dims() != scene_cut.dims() || chip.dims() != mask.dims() {
        return Err(Error::ShapeMismatch);
    }
    let data = chip
        .data
        .iter()
        .zip(&scene_cut.data)
        .zip(&mask.data)
        .map(|((&c, &s), &m)| if m { c } else { s })
        .collect();
    GrayRaster::new(chip.width, chip.height, data)
}

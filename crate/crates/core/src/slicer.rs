//! Sliding-window tiling of labeled scenes.
//!
//! Windows start at `i * stride` on each axis. When the full-size windows do
//! not reach the far edge, one trailing window of reduced size starts at the
//! next stride position, so every window offset is still `index * stride`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::boxes::LabeledBox;
use crate::error::{Error, Result};
use crate::raster::GrayRaster;

/// Window edge lengths used for training slices.
pub fn slice_sizes_default() -> [usize; 4] {
    [128, 256, 512, 1024]
}

/// Half-overlap stride for a window size.
pub fn default_stride(size: usize) -> usize {
    (size / 2).max(1)
}

/// Pixel rectangle of one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Strict containment: the box must not touch any window edge.
pub fn contains(window: &Window, b: &LabeledBox) -> bool {
    let (wx, wy) = (window.x as f64, window.y as f64);
    b.x > wx && b.x_max() < wx + window.width as f64 && b.y > wy && b.y_max() < wy + window.height as f64
}

fn check_geometry(size: usize, stride: usize) -> Result<()> {
    if size == 0 || stride == 0 || stride > size {
        return Err(Error::InvalidStride);
    }
    Ok(())
}

/// `(start, length)` of every window along an axis of length `len`.
pub fn window_starts(len: usize, size: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    check_geometry(size, stride)?;
    if len == 0 {
        return Err(Error::InvalidSize);
    }
    if len <= size {
        return Ok(alloc::vec![(0, len)]);
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + size <= len {
        out.push((start, size));
        start += stride;
    }
    let covered = out.last().map_or(0, |&(s, l)| s + l);
    if covered < len {
        out.push((start, len - start));
    }
    Ok(out)
}

/// Every window of the grid in row-major order with its `(i, j)` index.
pub fn windows(dims: (usize, usize), size: usize, stride: usize) -> Result<Vec<((usize, usize), Window)>> {
    let xs = window_starts(dims.0, size, stride)?;
    let ys = window_starts(dims.1, size, stride)?;
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for (j, &(y, height)) in ys.iter().enumerate() {
        for (i, &(x, width)) in xs.iter().enumerate() {
            out.push(((i, j), Window { x, y, width, height }));
        }
    }
    Ok(out)
}

/// A retained window and its labels in window coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub scene_id: String,
    pub i: usize,
    pub j: usize,
    pub stride: usize,
    pub window: Window,
    pub labels: Vec<LabeledBox>,
}

impl SliceRecord {
    /// `{scene}_{i}_{j}`, the slice's file stem.
    pub fn name(&self) -> String {
        alloc::format!("{}_{}_{}", self.scene_id, self.i, self.j)
    }

    pub fn crop_from(&self, scene: &GrayRaster) -> Result<GrayRaster> {
        scene.crop(self.window.x, self.window.y, self.window.width, self.window.height)
    }
}

/// Tile a scene of the given dimensions, keeping windows with at least one
/// strictly contained label. A label contained in several windows is
/// emitted once per window.
pub fn slide_dims(scene_id: &str, dims: (usize, usize), labels: &[LabeledBox], size: usize, stride: usize) -> Result<Vec<SliceRecord>> {
    let mut out = Vec::new();
    for ((i, j), window) in windows(dims, size, stride)? {
        let kept: Vec<LabeledBox> = labels
            .iter()
            .filter(|b| contains(&window, b))
            .map(|b| b.translated(-(window.x as f64), -(window.y as f64)))
            .collect();
        if !kept.is_empty() {
            out.push(SliceRecord { scene_id: String::from(scene_id), i, j, stride, window, labels: kept });
        }
    }
    Ok(out)
}

pub fn slide(scene_id: &str, scene: &GrayRaster, labels: &[LabeledBox], size: usize, stride: usize) -> Result<Vec<SliceRecord>> {
    slide_dims(scene_id, scene.dims(), labels, size, stride)
}

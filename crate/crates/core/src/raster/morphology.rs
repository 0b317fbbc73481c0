use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{BinaryMask, StructuringElement};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Erode,
    Dilate,
    /// Erode then dilate.
    Open,
    /// Dilate then erode.
    Close,
}

/// Binary morphology with a square element. Pixels outside the mask count
/// as background for both erosion and dilation.
pub fn morph(mask: &BinaryMask, op: MorphOp, se: StructuringElement) -> Result<BinaryMask> {
    if se.side() > mask.width().min(mask.height()) {
        return Err(Error::InvalidKernel { side: se.side() });
    }
    let r = se.radius();
    Ok(match op {
        MorphOp::Erode => erode(mask, r),
        MorphOp::Dilate => dilate(mask, r),
        MorphOp::Open => dilate(&erode(mask, r), r),
        MorphOp::Close => erode(&dilate(mask, r), r),
    })
}

// A square window factors into a horizontal run followed by a vertical run.
fn erode(mask: &BinaryMask, r: usize) -> BinaryMask {
    separable(mask, r, true)
}

fn dilate(mask: &BinaryMask, r: usize) -> BinaryMask {
    separable(mask, r, false)
}

fn separable(mask: &BinaryMask, r: usize, all: bool) -> BinaryMask {
    if r == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let mut horiz: Vec<bool> = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            horiz.push(window_reduce(mask.bits(), y * w, 1, w, x, r, all));
        }
    }
    let mut out: Vec<bool> = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push(window_reduce(&horiz, x, w, h, y, r, all));
        }
    }
    BinaryMask::new(w, h, out).expect("same dimensions as the input")
}

// Reduces the run `data[offset + i * stride]` for `i` within `r` of `center`
// on a line of `len` samples. Erosion (`all`) fails as soon as the window
// leaves the line; dilation ignores the outside part.
fn window_reduce(data: &[bool], offset: usize, stride: usize, len: usize, center: usize, r: usize, all: bool) -> bool {
    let at = |i: usize| data[offset + i * stride];
    if all {
        if center < r || center + r >= len {
            return false;
        }
        (center - r..=center + r).all(at)
    } else {
        let lo = center.saturating_sub(r);
        let hi = (center + r).min(len - 1);
        (lo..=hi).any(at)
    }
}

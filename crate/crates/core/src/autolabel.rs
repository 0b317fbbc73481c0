//! Bounding-box labeling of single-target chips by four-direction
//! projection scans.
//!
//! The chip is binarized with the object threshold stage of
//! [`segmentation`](crate::segmentation). Rows are scanned top-down and
//! bottom-up, columns left-right and right-left, and the first line in each
//! direction holding at least `white_pixel_threshold` foreground pixels fixes
//! one edge. Isolated bright specks never reach the threshold and are
//! skipped. The resulting rectangle is grown about its center by
//! `expand_fraction` to recover target edges that fell under the threshold,
//! then clamped to the chip.

use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::boxes::{iou, LabeledBox};
use crate::error::{Direction, Error, Result};
use crate::raster::{BinaryMask, GrayRaster};
use crate::segmentation::{threshold_stage, SegmentationParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoLabelParams {
    /// Minimum foreground count for a row or column to count as target.
    pub white_pixel_threshold: usize,
    pub expand_fraction: f64,
    pub binarize: SegmentationParams,
}

impl Default for AutoLabelParams {
    fn default() -> Self {
        Self { white_pixel_threshold: 10, expand_fraction: 0.5, binarize: SegmentationParams::default() }
    }
}

impl AutoLabelParams {
    pub fn validate(&self) -> Result<()> {
        if self.white_pixel_threshold == 0 {
            return Err(Error::InvalidParameter("white_pixel_threshold must be at least 1"));
        }
        if !(self.expand_fraction >= 0.0) || !self.expand_fraction.is_finite() {
            return Err(Error::InvalidParameter("expand_fraction must be a non-negative number"));
        }
        self.binarize.validate()
    }
}

/// Integer pixel rectangle; may extend past the chip before clamping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl PixelRect {
    pub fn to_box(self, class_id: u32) -> LabeledBox {
        LabeledBox::new(class_id, self.x as f64, self.y as f64, self.w as f64, self.h as f64)
    }
}

/// Every stage of one labeling run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoLabel {
    pub traversal: PixelRect,
    pub expanded: PixelRect,
    pub label: LabeledBox,
}

/// Rectangle bounded by the first qualifying line from each side.
pub fn traverse(mask: &BinaryMask, white_pixel_threshold: usize) -> Result<PixelRect> {
    let (w, h) = mask.dims();
    let row_count = |y: usize| (0..w).filter(|&x| mask.get(x, y)).count();
    let col_count = |x: usize| (0..h).filter(|&y| mask.get(x, y)).count();
    let t = white_pixel_threshold;

    let top = (0..h).find(|&y| row_count(y) >= t).ok_or(Error::NoTarget(Direction::TopDown))?;
    let bottom = (0..h).rev().find(|&y| row_count(y) >= t).ok_or(Error::NoTarget(Direction::BottomUp))?;
    let left = (0..w).find(|&x| col_count(x) >= t).ok_or(Error::NoTarget(Direction::LeftRight))?;
    let right = (0..w).rev().find(|&x| col_count(x) >= t).ok_or(Error::NoTarget(Direction::RightLeft))?;

    Ok(PixelRect {
        x: left as i64,
        y: top as i64,
        w: (right - left + 1) as i64,
        h: (bottom - top + 1) as i64,
    })
}

/// Grow each side length to `round(len * (1 + fraction))`, keeping the
/// center; the leading edge moves by `floor(growth / 2)`.
pub fn expand(rect: PixelRect, fraction: f64) -> PixelRect {
    let grow = |len: i64| libm::round(len as f64 * (1.0 + fraction)) as i64;
    let (nw, nh) = (grow(rect.w), grow(rect.h));
    PixelRect {
        x: rect.x - (nw - rect.w).div_euclid(2),
        y: rect.y - (nh - rect.h).div_euclid(2),
        w: nw,
        h: nh,
    }
}

/// Intersection with `[0, width) x [0, height)`.
pub fn clamp(rect: PixelRect, width: usize, height: usize) -> PixelRect {
    let x0 = rect.x.max(0);
    let y0 = rect.y.max(0);
    let x1 = (rect.x + rect.w).min(width as i64);
    let y1 = (rect.y + rect.h).min(height as i64);
    PixelRect { x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
}

/// Scan, expand and clamp on an already binarized chip.
pub fn auto_label_mask(mask: &BinaryMask, class_id: u32, params: &AutoLabelParams) -> Result<AutoLabel> {
    params.validate()?;
    let traversal = traverse(mask, params.white_pixel_threshold)?;
    let expanded = expand(traversal, params.expand_fraction);
    let label = clamp(expanded, mask.width(), mask.height()).to_box(class_id);
    Ok(AutoLabel { traversal, expanded, label })
}

/// Label a single-target chip.
pub fn auto_label(chip: &GrayRaster, class_id: u32, params: &AutoLabelParams) -> Result<LabeledBox> {
    auto_label_detailed(chip, class_id, params).map(|a| a.label)
}

pub fn auto_label_detailed(chip: &GrayRaster, class_id: u32, params: &AutoLabelParams) -> Result<AutoLabel> {
    params.validate()?;
    let (mask, _) = threshold_stage(chip, &params.binarize)?;
    auto_label_mask(&mask, class_id, params)
}

/// Minimum IoU against a reference box for a label to count as correct.
pub const REFERENCE_IOU: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassLabelStats {
    pub total: usize,
    pub labeled: usize,
    pub no_target: usize,
    /// Labeled, but below [`REFERENCE_IOU`] against the supplied reference.
    pub mislabeled: usize,
    /// Other failures (unreadable chip, degenerate image, ...).
    pub other_errors: usize,
}

impl ClassLabelStats {
    pub fn error_count(&self) -> usize {
        self.no_target + self.mislabeled + self.other_errors
    }

    pub fn error_rate(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.error_count() as f64 / self.total as f64)
    }
}

/// Per-class labeling error counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub classes: BTreeMap<String, ClassLabelStats>,
}

impl LabelReport {
    pub fn record(&mut self, class: &str, outcome: &Result<LabeledBox>, reference: Option<&LabeledBox>) {
        let e = self.classes.entry(String::from(class)).or_default();
        e.total += 1;
        match outcome {
            Ok(label) => {
                let ok = match reference {
                    Some(r) => iou(label, r).map(|v| v >= REFERENCE_IOU).unwrap_or(false),
                    None => true,
                };
                if ok {
                    e.labeled += 1;
                } else {
                    e.mislabeled += 1;
                }
            }
            Err(Error::NoTarget(_)) => e.no_target += 1,
            Err(_) => e.other_errors += 1,
        }
    }

    /// Unweighted mean of per-class error rates.
    pub fn average_error_rate(&self) -> Option<f64> {
        let rates: alloc::vec::Vec<f64> = self.classes.values().filter_map(|c| c.error_rate()).collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BlurParams;
    use proptest::prelude::*;

    fn block(w: usize, h: usize, x0: usize, y0: usize, bw: usize, bh: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x0 + bw && y >= y0 && y < y0 + bh).unwrap()
    }

    // Brute-force oracle: the hull of rows and columns whose counts reach the threshold.
    fn oracle_rect(mask: &BinaryMask, t: usize) -> Option<PixelRect> {
        let (w, h) = mask.dims();
        let rows: alloc::vec::Vec<usize> = (0..h).filter(|&y| (0..w).filter(|&x| mask.get(x, y)).count() >= t).collect();
        let cols: alloc::vec::Vec<usize> = (0..w).filter(|&x| (0..h).filter(|&y| mask.get(x, y)).count() >= t).collect();
        if rows.is_empty() || cols.is_empty() {
            return None;
        }
        let (top, bottom) = (rows[0], *rows.last().unwrap());
        let (left, right) = (cols[0], *cols.last().unwrap());
        Some(PixelRect {
            x: left as i64,
            y: top as i64,
            w: (right - left + 1) as i64,
            h: (bottom - top + 1) as i64,
        })
    }

    #[test]
    fn solid_block_example() {
        let mask = block(128, 128, 49, 54, 30, 20);
        assert_eq!(oracle_rect(&mask, 10), Some(PixelRect { x: 49, y: 54, w: 30, h: 20 }));
        let a = auto_label_mask(&mask, 3, &AutoLabelParams::default()).unwrap();
        assert_eq!(a.traversal, PixelRect { x: 49, y: 54, w: 30, h: 20 });
        assert_eq!(a.expanded, PixelRect { x: 42, y: 49, w: 45, h: 30 });
        assert_eq!(a.label, LabeledBox::new(3, 42.0, 49.0, 45.0, 30.0));
    }

    #[test]
    fn solid_block_chip_end_to_end() {
        let chip = GrayRaster::from_fn(128, 128, |x, y| {
            if (49..79).contains(&x) && (54..74).contains(&y) {
                220
            } else {
                30
            }
        })
        .unwrap();
        let params = AutoLabelParams {
            binarize: SegmentationParams { blur: Some(BlurParams { kernel_side: 1, sigma: 1.0 }), ..Default::default() },
            ..Default::default()
        };
        let a = auto_label_detailed(&chip, 0, &params).unwrap();
        assert_eq!(a.traversal, PixelRect { x: 49, y: 54, w: 30, h: 20 });
        assert_eq!(a.label, LabeledBox::new(0, 42.0, 49.0, 45.0, 30.0));
    }

    #[test]
    fn thin_stripe_has_no_target() {
        // 5 wide and 40 tall: columns reach 10, rows never do
        let mask = block(64, 64, 30, 10, 5, 40);
        assert_eq!(
            auto_label_mask(&mask, 0, &AutoLabelParams::default()).unwrap_err(),
            Error::NoTarget(Direction::TopDown)
        );
    }

    #[test]
    fn zero_expansion_is_identity() {
        let mask = block(100, 90, 20, 30, 17, 13);
        let params = AutoLabelParams { expand_fraction: 0.0, ..Default::default() };
        let a = auto_label_mask(&mask, 0, &params).unwrap();
        assert_eq!(a.expanded, a.traversal);
        assert_eq!(a.label, LabeledBox::new(0, 20.0, 30.0, 17.0, 13.0));
    }

    #[test]
    fn expansion_clamps_at_border() {
        let mask = block(64, 64, 0, 0, 20, 20);
        let a = auto_label_mask(&mask, 0, &AutoLabelParams::default()).unwrap();
        assert_eq!(a.expanded, PixelRect { x: -5, y: -5, w: 30, h: 30 });
        assert_eq!(a.label, LabeledBox::new(0, 0.0, 0.0, 25.0, 25.0));
    }

    #[test]
    fn params_validation() {
        let p = AutoLabelParams { white_pixel_threshold: 0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = AutoLabelParams { expand_fraction: -0.1, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn report_counts() {
        let mut r = LabelReport::default();
        let good = LabeledBox::new(0, 10.0, 10.0, 10.0, 10.0);
        let far = LabeledBox::new(0, 50.0, 50.0, 10.0, 10.0);
        r.record("A", &Ok(good), Some(&good));
        r.record("A", &Ok(far), Some(&good));
        r.record("A", &Err(Error::NoTarget(Direction::LeftRight)), None);
        r.record("A", &Err(Error::DegenerateImage), None);
        let a = &r.classes["A"];
        assert_eq!((a.labeled, a.mislabeled, a.no_target, a.other_errors), (1, 1, 1, 1));
        assert_eq!(a.error_rate(), Some(75.0));
        assert_eq!(LabelReport::default().average_error_rate(), None);
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (8usize..40, 8usize..40).prop_flat_map(|(w, h)| {
            proptest::collection::vec(proptest::bool::weighted(0.3), w * h)
                .prop_map(move |bits| BinaryMask::new(w, h, bits).unwrap())
        })
    }

    proptest! {
        #[test]
        fn traversal_matches_projection_oracle(mask in arb_mask(), t in 1usize..8) {
            let got = traverse(&mask, t).ok();
            prop_assert_eq!(got, oracle_rect(&mask, t));
            if let Some(r) = got {
                // every foreground pixel on a qualifying row and column is inside
                let (w, h) = mask.dims();
                for y in 0..h {
                    for x in 0..w {
                        let row_ok = (0..w).filter(|&i| mask.get(i, y)).count() >= t;
                        let col_ok = (0..h).filter(|&j| mask.get(x, j)).count() >= t;
                        if mask.get(x, y) && row_ok && col_ok {
                            prop_assert!(x as i64 >= r.x && (x as i64) < r.x + r.w);
                            prop_assert!(y as i64 >= r.y && (y as i64) < r.y + r.h);
                        }
                    }
                }
            }
        }

        #[test]
        fn expansion_keeps_center_and_grows(x in -50i64..50, y in -50i64..50, w in 1i64..80, h in 1i64..80,
                                            f in 0.0f64..2.0, g in 0.0f64..2.0) {
            let r = PixelRect { x, y, w, h };
            let a = expand(r, f);
            let ca = (a.x as f64 + a.w as f64 / 2.0, a.y as f64 + a.h as f64 / 2.0);
            let cr = (x as f64 + w as f64 / 2.0, y as f64 + h as f64 / 2.0);
            prop_assert!((ca.0 - cr.0).abs() <= 0.5 && (ca.1 - cr.1).abs() <= 0.5);
            let (lo, hi) = if f <= g { (f, g) } else { (g, f) };
            let (small, big) = (expand(r, lo), expand(r, hi));
            prop_assert!(big.x <= small.x && big.y <= small.y);
            prop_assert!(big.x + big.w >= small.x + small.w && big.y + big.h >= small.y + small.h);
        }

        #[test]
        fn translation_equivariant(dx in 0usize..30, dy in 0usize..30, bw in 10usize..30, bh in 10usize..30) {
            let base = block(120, 120, 30, 30, bw, bh);
            let moved = block(120, 120, 30 + dx, 30 + dy, bw, bh);
            let p = AutoLabelParams::default();
            let a = auto_label_mask(&base, 0, &p).unwrap().expanded;
            let b = auto_label_mask(&moved, 0, &p).unwrap().expanded;
            prop_assert_eq!((b.x - a.x, b.y - a.y, b.w, b.h), (dx as i64, dy as i64, a.w, a.h));
        }

        #[test]
        fn chip_translation_equivariant(dx in 0usize..25, dy in 0usize..25) {
            let chip_at = |ox: usize, oy: usize| {
                GrayRaster::from_fn(128, 128, |x, y| {
                    if (ox..ox + 26).contains(&x) && (oy..oy + 18).contains(&y) { 200 } else { 35 }
                })
                .unwrap()
            };
            let p = AutoLabelParams::default();
            let a = auto_label_detailed(&chip_at(40, 40), 0, &p).unwrap().expanded;
            let b = auto_label_detailed(&chip_at(40 + dx, 40 + dy), 0, &p).unwrap().expanded;
            prop_assert_eq!((b.x - a.x, b.y - a.y, b.w, b.h), (dx as i64, dy as i64, a.w, a.h));
        }
    }
}

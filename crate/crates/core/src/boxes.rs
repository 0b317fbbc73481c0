//! Axis-aligned labeled boxes shared by ground truth and detections.

use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class id plus an axis-aligned box in pixels; `(x, y)` is the top-left
/// corner and the box spans `[x, x + w) x [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub class_id: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl LabeledBox {
    pub fn new(class_id: u32, x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { class_id, x, y, w, h, confidence: None }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = Some(confidence);
        self
    }

    #[inline]
    pub fn x_max(&self) -> f64 {
        self.x + self.w
    }

    #[inline]
    pub fn y_max(&self) -> f64 {
        self.y + self.h
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self { x: self.x + dx, y: self.y + dy, ..*self }
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    /// True when `(px, py)` lies in the half-open box.
    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.x_max() && py >= self.y && py < self.y_max()
    }

    /// Detection order: descending confidence, then ascending `(x, y, class_id, w, h)`.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        let ca = self.confidence.unwrap_or(0.0);
        let cb = other.confidence.unwrap_or(0.0);
        cb.total_cmp(&ca)
            .then(self.x.total_cmp(&other.x))
            .then(self.y.total_cmp(&other.y))
            .then(self.class_id.cmp(&other.class_id))
            .then(self.w.total_cmp(&other.w))
            .then(self.h.total_cmp(&other.h))
    }

    /// Lexicographic `(x, y, class_id, w, h)` order.
    pub fn position_cmp(&self, other: &Self) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.class_id.cmp(&other.class_id))
            .then(self.w.total_cmp(&other.w))
            .then(self.h.total_cmp(&other.h))
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &LabeledBox, b: &LabeledBox) -> Result<f64> {
    if !a.is_valid() || !b.is_valid() {
        return Err(Error::DegenerateBox);
    }
    let iw = a.x_max().min(b.x_max()) - a.x.max(b.x);
    let ih = a.y_max().min(b.y_max()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return Ok(0.0);
    }
    let inter = iw * ih;
    Ok(inter / (a.area() + b.area() - inter))
}

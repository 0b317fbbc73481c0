//! Grid responsibility, class confidence and the sum-squared detection
//! loss of a single-scale grid detector.
//!
//! Cells are indexed `row * s + col`. Box coordinates inside a cell are
//! `(x, y)` offsets of the center relative to the cell and `(w, h)`
//! relative to the image.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::boxes::{iou, LabeledBox};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GridBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTruth {
    pub object: bool,
    /// Index of the predictor responsible for the object.
    pub responsible: usize,
    pub target: GridBox,
    /// One-hot class distribution; all zeros in empty cells.
    pub classes: Vec<f64>,
    /// Target confidence per predictor.
    pub confidence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTruth {
    pub s: usize,
    pub b: usize,
    pub c: usize,
    pub cells: Vec<CellTruth>,
}

impl GridTruth {
    pub fn empty(s: usize, b: usize, c: usize) -> Result<Self> {
        if s == 0 || b == 0 || c == 0 {
            return Err(Error::InvalidSize);
        }
        let cell = CellTruth { object: false, responsible: 0, target: GridBox::default(), classes: vec![0.0; c], confidence: vec![0.0; b] };
        Ok(Self { s, b, c, cells: vec![cell; s * s] })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PredBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPrediction {
    pub s: usize,
    pub b: usize,
    pub c: usize,
    /// `s * s * b` boxes, cell-major.
    pub boxes: Vec<PredBox>,
    /// `s * s * c` class scores, cell-major.
    pub classes: Vec<f64>,
}

impl GridPrediction {
    pub fn zeros(s: usize, b: usize, c: usize) -> Result<Self> {
        if s == 0 || b == 0 || c == 0 {
            return Err(Error::InvalidSize);
        }
        Ok(Self { s, b, c, boxes: vec![PredBox::default(); s * s * b], classes: vec![0.0; s * s * c] })
    }

    /// Prediction that reproduces the truth exactly.
    pub fn from_truth(truth: &GridTruth) -> Self {
        let mut boxes = Vec::with_capacity(truth.cells.len() * truth.b);
        let mut classes = Vec::with_capacity(truth.cells.len() * truth.c);
        for cell in &truth.cells {
            for j in 0..truth.b {
                let t = if cell.object && j == cell.responsible { cell.target } else { GridBox::default() };
                boxes.push(PredBox { x: t.x, y: t.y, w: t.w, h: t.h, confidence: cell.confidence[j] });
            }
            classes.extend_from_slice(&cell.classes);
        }
        Self { s: truth.s, b: truth.b, c: truth.c, boxes, classes }
    }

    fn check(&self) -> Result<()> {
        let cells = self.s * self.s;
        if self.s == 0 || self.b == 0 || self.c == 0 || self.boxes.len() != cells * self.b || self.classes.len() != cells * self.c {
            return Err(Error::ShapeMismatch);
        }
        Ok(())
    }
}

/// Two objects whose centers fall in the same cell; the later one is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCollision {
    pub cell: usize,
    pub kept: usize,
    pub dropped: usize,
}

/// `(col, row)` of the cell containing a point; points on a cell boundary
/// belong to the higher-index cell.
pub fn cell_of(cx: f64, cy: f64, s: usize, image: (usize, usize)) -> (usize, usize) {
    let col = libm::floor(cx * s as f64 / image.0 as f64);
    let row = libm::floor(cy * s as f64 / image.1 as f64);
    let clamp = |v: f64| (v.max(0.0) as usize).min(s - 1);
    (clamp(col), clamp(row))
}

fn pred_to_image(p: &PredBox, col: usize, row: usize, s: usize, image: (usize, usize)) -> LabeledBox {
    let (iw, ih) = (image.0 as f64, image.1 as f64);
    let cx = (col as f64 + p.x) / s as f64 * iw;
    let cy = (row as f64 + p.y) / s as f64 * ih;
    let (w, h) = (p.w * iw, p.h * ih);
    LabeledBox::new(0, cx - w / 2.0, cy - h / 2.0, w, h)
}

/// Build the training target for one image. With `predictions`, the
/// responsible predictor in each object cell is the one with the highest
/// IoU against the object (lowest index on ties); otherwise predictor 0.
pub fn assign_cells(
    gt: &[LabeledBox],
    s: usize,
    b: usize,
    num_classes: usize,
    image: (usize, usize),
    predictions: Option<&GridPrediction>,
) -> Result<(GridTruth, Vec<CellCollision>)> {
    let mut truth = GridTruth::empty(s, b, num_classes)?;
    if image.0 == 0 || image.1 == 0 {
        return Err(Error::InvalidSize);
    }
    if let Some(p) = predictions {
        p.check()?;
        if (p.s, p.b, p.c) != (s, b, num_classes) {
            return Err(Error::ShapeMismatch);
        }
    }
    let (iw, ih) = (image.0 as f64, image.1 as f64);
    let mut owner: Vec<Option<usize>> = vec![None; s * s];
    let mut collisions = Vec::new();
    for (k, g) in gt.iter().enumerate() {
        if !g.is_valid() {
            return Err(Error::DegenerateBox);
        }
        if g.class_id as usize >= num_classes {
            return Err(Error::InvalidParameter("class id out of range"));
        }
        if g.x < 0.0 || g.y < 0.0 || g.x_max() > iw || g.y_max() > ih {
            return Err(Error::InvalidParameter("box outside image"));
        }
        let (cx, cy) = g.center();
        let (col, row) = cell_of(cx, cy, s, image);
        let idx = row * s + col;
        if let Some(kept) = owner[idx] {
            collisions.push(CellCollision { cell: idx, kept, dropped: k });
            continue;
        }
        owner[idx] = Some(k);
        let responsible = match predictions {
            None => 0,
            Some(p) => {
                let mut best = (0, f64::NEG_INFINITY);
                for j in 0..b {
                    let v = iou(&pred_to_image(&p.boxes[idx * b + j], col, row, s, image), g).unwrap_or(0.0);
                    if v > best.1 {
                        best = (j, v);
                    }
                }
                best.0
            }
        };
        let cell = &mut truth.cells[idx];
        cell.object = true;
        cell.responsible = responsible;
        cell.target = GridBox { x: cx * s as f64 / iw - col as f64, y: cy * s as f64 / ih - row as f64, w: g.w / iw, h: g.h / ih };
        cell.classes[g.class_id as usize] = 1.0;
        cell.confidence[responsible] = 1.0;
    }
    Ok((truth, collisions))
}

/// Class-specific confidence: class probability times box confidence.
pub fn class_confidence(p_class: f64, confidence: f64) -> f64 {
    p_class * confidence
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub lambda_coord: f64,
    pub lambda_noobj: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self { lambda_coord: 5.0, lambda_noobj: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    /// Set when a responsible predictor had a negative width or height
    /// that was clamped to zero before the square root.
    pub clamped: bool,
}

fn check_pair(pred: &GridPrediction, truth: &GridTruth) -> Result<()> {
    pred.check()?;
    if (pred.s, pred.b, pred.c) != (truth.s, truth.b, truth.c)
        || truth.cells.len() != truth.s * truth.s
        || truth.cells.iter().any(|c| c.classes.len() != truth.c || c.confidence.len() != truth.b || c.responsible >= truth.b)
    {
        return Err(Error::ShapeMismatch);
    }
    Ok(())
}

fn sq(v: f64) -> f64 {
    v * v
}

fn cell_loss_unchecked(pred: &GridPrediction, truth: &GridTruth, idx: usize, params: &LossParams) -> LossValue {
    let cell = &truth.cells[idx];
    let (b, c) = (truth.b, truth.c);
    let mut total = 0.0;
    let mut clamped = false;
    for j in 0..b {
        let p = &pred.boxes[idx * b + j];
        let responsible = cell.object && j == cell.responsible;
        if responsible {
            let t = &cell.target;
            clamped |= p.w < 0.0 || p.h < 0.0;
            total += params.lambda_coord * (sq(t.x - p.x) + sq(t.y - p.y));
            total += params.lambda_coord
                * (sq(libm::sqrt(t.w) - libm::sqrt(p.w.max(0.0))) + sq(libm::sqrt(t.h) - libm::sqrt(p.h.max(0.0))));
            total += sq(cell.confidence[j] - p.confidence);
        } else {
            total += params.lambda_noobj * sq(cell.confidence[j] - p.confidence);
        }
    }
    if cell.object {
        total += (0..c).map(|k| sq(cell.classes[k] - pred.classes[idx * c + k])).sum::<f64>();
    }
    LossValue { total, clamped }
}

/// Loss contributed by one cell.
pub fn cell_loss(pred: &GridPrediction, truth: &GridTruth, cell: usize, params: &LossParams) -> Result<LossValue> {
    check_pair(pred, truth)?;
    if cell >= truth.cells.len() {
        return Err(Error::InvalidParameter("cell index out of range"));
    }
    Ok(cell_loss_unchecked(pred, truth, cell, params))
}

/// Coordinate, size, object confidence, no-object confidence and class
/// terms summed over every cell.
pub fn yolo_loss(pred: &GridPrediction, truth: &GridTruth, params: &LossParams) -> Result<LossValue> {
    check_pair(pred, truth)?;
    let mut out = LossValue { total: 0.0, clamped: false };
    for idx in 0..truth.cells.len() {
        let v = cell_loss_unchecked(pred, truth, idx, params);
        out.total += v.total;
        out.clamped |= v.clamped;
    }
    Ok(out)
}

/// Analytic gradient of [`yolo_loss`] with respect to every predicted
/// scalar, in the prediction's layout. Clamped widths or heights have zero
/// gradient; at exactly zero width the derivative is reported as zero.
pub fn yolo_loss_gradient(pred: &GridPrediction, truth: &GridTruth, params: &LossParams) -> Result<GridPrediction> {
    check_pair(pred, truth)?;
    let (b, c) = (truth.b, truth.c);
    let mut grad = GridPrediction::zeros(truth.s, b, c)?;
    let dsqrt = |t: f64, p: f64| if p > 0.0 { params.lambda_coord * (libm::sqrt(p) - libm::sqrt(t)) / libm::sqrt(p) } else { 0.0 };
    for (idx, cell) in truth.cells.iter().enumerate() {
        for j in 0..b {
            let p = &pred.boxes[idx * b + j];
            let g = &mut grad.boxes[idx * b + j];
            if cell.object && j == cell.responsible {
                let t = &cell.target;
                g.x = 2.0 * params.lambda_coord * (p.x - t.x);
                g.y = 2.0 * params.lambda_coord * (p.y - t.y);
                g.w = dsqrt(t.w, p.w);
                g.h = dsqrt(t.h, p.h);
                g.confidence = 2.0 * (p.confidence - cell.confidence[j]);
            } else {
                g.confidence = 2.0 * params.lambda_noobj * (p.confidence - cell.confidence[j]);
            }
        }
        if cell.object {
            for k in 0..c {
                grad.classes[idx * c + k] = 2.0 * (pred.classes[idx * c + k] - cell.classes[k]);
            }
        }
    }
    Ok(grad)
}

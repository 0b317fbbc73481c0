//! Detection matching, confusion matrices and ACC / FNR / FPR.
//!
//! Rates are percentages. A class with no ground truth has undefined
//! ACC and FNR (`None`) and is left out of the class averages.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::boxes::{iou, LabeledBox};
use crate::error::{Error, Result};

pub const DEFAULT_IOU_MIN: f64 = 0.5;

/// Index pairs produced by greedy matching.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Assignment {
    /// `(gt index, detection index)`.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_det: Vec<usize>,
}

/// Detections in rank order each take the unmatched ground-truth box of any
/// class with the largest IoU at or above `iou_min`. IoU ties go to the
/// ground-truth box first in position order. Degenerate boxes match nothing.
pub fn match_detections(gt: &[LabeledBox], det: &[LabeledBox], iou_min: f64) -> Assignment {
    let mut order: Vec<usize> = (0..det.len()).collect();
    order.sort_by(|&a, &b| det[a].rank_cmp(&det[b]).then(a.cmp(&b)));
    let mut taken = vec![false; gt.len()];
    let mut out = Assignment::default();
    for d in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gbox) in gt.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(gbox, &det[d]).unwrap_or(0.0);
            if v < iou_min || v <= 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bg, bv)) => v > bv || (v == bv && gbox.position_cmp(&gt[bg]).then(g.cmp(&bg)).is_lt()),
            };
            if better {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, _)) => {
                taken[g] = true;
                out.matches.push((g, d));
            }
            None => out.unmatched_det.push(d),
        }
    }
    out.matches.sort_unstable();
    out.unmatched_det.sort_unstable();
    out.unmatched_gt = (0..gt.len()).filter(|&g| !taken[g]).collect();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub ground_truth: u64,
    pub tp: u64,
    /// Misclassified plus missed.
    pub fn_count: u64,
    pub acc: Option<f64>,
    pub fnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `matrix[gt][pred]`; the last column counts misses.
    pub matrix: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    pub tp: u64,
    pub fn_count: u64,
    pub fp: u64,
    pub tn: u64,
    pub background_units: u64,
    pub fpr: f64,
    /// Unweighted mean over classes with ground truth.
    pub average_acc: Option<f64>,
    pub average_fnr: Option<f64>,
    /// Total TP over total ground truth.
    pub pooled_acc: Option<f64>,
    pub pooled_fnr: Option<f64>,
}

fn percent(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

impl EvalReport {
    pub fn num_classes(&self) -> usize {
        self.matrix.len()
    }

    /// Build a report from confusion counts. `background_units` is the
    /// number of evaluated target-free units; TN is that count minus FP.
    pub fn from_matrix(matrix: Vec<Vec<u64>>, fp: u64, background_units: u64) -> Result<Self> {
        let n = matrix.len();
        if matrix.iter().any(|row| row.len() != n + 1) {
            return Err(Error::ShapeMismatch);
        }
        if background_units < fp {
            return Err(Error::BackgroundTooSmall { background: background_units, false_positives: fp });
        }
        let per_class: Vec<ClassMetrics> = matrix
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let ground_truth: u64 = row.iter().sum();
                let tp = row[c];
                let fn_count = ground_truth - tp;
                ClassMetrics { ground_truth, tp, fn_count, acc: percent(tp, ground_truth), fnr: percent(fn_count, ground_truth) }
            })
            .collect();
        let tp = per_class.iter().map(|m| m.tp).sum();
        let fn_count = per_class.iter().map(|m| m.fn_count).sum();
        let total = tp + fn_count;
        Ok(Self {
            average_acc: mean(per_class.iter().filter_map(|m| m.acc)),
            average_fnr: mean(per_class.iter().filter_map(|m| m.fnr)),
            pooled_acc: percent(tp, total),
            pooled_fnr: percent(fn_count, total),
            matrix,
            per_class,
            tp,
            fn_count,
            fp,
            tn: background_units - fp,
            background_units,
            fpr: percent(fp, background_units).unwrap_or(0.0),
        })
    }

    /// Sum the counts of two reports over the same class set.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.num_classes() != other.num_classes() {
            return Err(Error::ShapeMismatch);
        }
        let matrix = self
            .matrix
            .iter()
            .zip(&other.matrix)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Self::from_matrix(matrix, self.fp + other.fp, self.background_units + other.background_units)
    }
}

/// Confusion counts for one scene and its FP count.
pub fn confusion(gt: &[LabeledBox], det: &[LabeledBox], assignment: &Assignment, num_classes: usize) -> Result<(Vec<Vec<u64>>, u64)> {
    let in_range = |b: &LabeledBox| (b.class_id as usize) < num_classes;
    if !gt.iter().all(in_range) || !det.iter().all(in_range) {
        return Err(Error::InvalidParameter("class id out of range"));
    }
    let mut matrix = vec![vec![0u64; num_classes + 1]; num_classes];
    for &(g, d) in &assignment.matches {
        matrix[gt[g].class_id as usize][det[d].class_id as usize] += 1;
    }
    for &g in &assignment.unmatched_gt {
        matrix[gt[g].class_id as usize][num_classes] += 1;
    }
    Ok((matrix, assignment.unmatched_det.len() as u64))
}

/// Match, count and score one scene.
pub fn evaluate(gt: &[LabeledBox], det: &[LabeledBox], num_classes: usize, iou_min: f64, background_units: u64) -> Result<EvalReport> {
    let assignment = match_detections(gt, det, iou_min);
    let (matrix, fp) = confusion(gt, det, &assignment, num_classes)?;
    EvalReport::from_matrix(matrix, fp, background_units)
}

fn fmt_rate(v: Option<f64>) -> String {
    v.map_or_else(|| String::from("-"), |x| format!("{x:.2}"))
}

/// Aligned plain-text confusion table with ACC and FNR columns, an
/// average row and an FPR footer. Missing names fall back to the class id.
pub fn render_table(report: &EvalReport, names: &[String]) -> String {
    let n = report.num_classes();
    let name = |c: usize| names.get(c).cloned().unwrap_or_else(|| format!("{c}"));
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec![String::from("class")];
    header.extend((0..n).map(name));
    header.extend(["None", "ACC(%)", "FNR(%)"].map(String::from));
    rows.push(header);
    for (c, row) in report.matrix.iter().enumerate() {
        let mut r = vec![name(c)];
        r.extend(row.iter().map(|v| format!("{v}")));
        r.push(fmt_rate(report.per_class[c].acc));
        r.push(fmt_rate(report.per_class[c].fnr));
        rows.push(r);
    }
    if n > 0 {
        let mut avg = vec![String::from("Average")];
        avg.extend((0..=n).map(|_| String::new()));
        avg.push(fmt_rate(report.average_acc));
        avg.push(fmt_rate(report.average_fnr));
        rows.push(avg);
    }
    let cols = n + 4;
    let widths: Vec<usize> = (0..cols).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(cell, &w)| format!("{cell:>w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    if n > 0 {
        let _ = writeln!(out, "FPR(%) {:.2}", report.fpr);
    }
    out
}

//! Scene-frame mapping of per-slice detections and cross-slice suppression.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::boxes::{iou, LabeledBox};
use crate::error::{Error, Result};
use crate::slicer::SliceRecord;

pub const DEFAULT_NMS_THRESHOLD: f64 = 0.7;

/// Grid position of the slice a detection was produced on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SliceRef {
    pub scene_id: String,
    pub i: usize,
    pub j: usize,
    pub stride: usize,
}

impl From<&SliceRecord> for SliceRef {
    fn from(s: &SliceRecord) -> Self {
        Self { scene_id: s.scene_id.clone(), i: s.i, j: s.j, stride: s.stride }
    }
}

/// Slice name to grid position, as written next to the slice images.
pub type SliceIndex = BTreeMap<String, SliceRef>;

pub fn lookup_slice<'a>(index: &'a SliceIndex, name: &str) -> Result<&'a SliceRef> {
    index.get(name).ok_or(Error::UnknownSlice)
}

/// A scored box in either a slice frame (`slice` set) or the scene frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: LabeledBox,
    pub slice: Option<SliceRef>,
}

impl Detection {
    /// Requires a confidence in `[0, 1]` and a non-degenerate box.
    pub fn new(bbox: LabeledBox, slice: Option<SliceRef>) -> Result<Self> {
        match bbox.confidence {
            Some(c) if (0.0..=1.0).contains(&c) => {}
            _ => return Err(Error::InvalidParameter("confidence must be in [0, 1]")),
        }
        if !bbox.is_valid() {
            return Err(Error::DegenerateBox);
        }
        Ok(Self { bbox, slice })
    }

    pub fn confidence(&self) -> f64 {
        self.bbox.confidence.unwrap_or(0.0)
    }
}

/// Shift a slice-frame detection by its window offset. Scene-frame input
/// is returned unchanged.
pub fn map_to_scene(d: &Detection) -> Detection {
    match &d.slice {
        None => d.clone(),
        Some(s) => Detection { bbox: d.bbox.translated((s.i * s.stride) as f64, (s.j * s.stride) as f64), slice: None },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmsParams {
    pub iou_threshold: f64,
    /// Suppress only within a class instead of across classes.
    pub per_class: bool,
}

impl Default for NmsParams {
    fn default() -> Self {
        Self { iou_threshold: DEFAULT_NMS_THRESHOLD, per_class: false }
    }
}

fn rank(boxes: &[LabeledBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[a].rank_cmp(&boxes[b]).then(a.cmp(&b)));
    order
}

/// Indices of the boxes kept by greedy suppression, in keep order
/// (descending confidence). A box is removed when its IoU with an
/// already kept box is strictly above the threshold. Degenerate boxes
/// overlap nothing.
pub fn nms_indices(boxes: &[LabeledBox], params: &NmsParams) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for idx in rank(boxes) {
        let b = &boxes[idx];
        let suppressed = kept.iter().any(|&k| {
            let other = &boxes[k];
            (!params.per_class || other.class_id == b.class_id) && iou(other, b).unwrap_or(0.0) > params.iou_threshold
        });
        if !suppressed {
            kept.push(idx);
        }
    }
    kept
}

pub fn nms(boxes: &[LabeledBox], params: &NmsParams) -> Vec<LabeledBox> {
    nms_indices(boxes, params).into_iter().map(|i| boxes[i]).collect()
}

/// Map every detection into the scene frame, then suppress per scene.
/// Scenes come back in ascending id order.
pub fn merge_scene_detections(dets: &[(String, Detection)], params: &NmsParams) -> BTreeMap<String, Vec<LabeledBox>> {
    let mut by_scene: BTreeMap<String, Vec<LabeledBox>> = BTreeMap::new();
    for (scene, d) in dets {
        let key = d.slice.as_ref().map_or_else(|| scene.clone(), |s| s.scene_id.clone());
        by_scene.entry(key).or_default().push(map_to_scene(d).bbox);
    }
    by_scene.into_iter().map(|(k, v)| (k, nms(&v, params))).collect()
}

/// Compare two kept lists for equality of order and content.
pub fn same_boxes(a: &[LabeledBox], b: &[LabeledBox]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.position_cmp(y) == Ordering::Equal && x.confidence == y.confidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::slicer::slide_dims;
    use proptest::prelude::*;

    fn det(c: u32, x: f64, y: f64, w: f64, h: f64, conf: f64) -> LabeledBox {
        LabeledBox::new(c, x, y, w, h).with_confidence(conf)
    }

    // Repeatedly pick the best survivor among all remaining candidates and
    // strike every candidate it overlaps.
    fn brute_nms(boxes: &[LabeledBox], thr: f64) -> Vec<LabeledBox> {
        let mut alive = vec![true; boxes.len()];
        let mut out = Vec::new();
        loop {
            let mut best: Option<usize> = None;
            for i in 0..boxes.len() {
                if !alive[i] {
                    continue;
                }
                best = match best {
                    None => Some(i),
                    Some(b) => {
                        let (ci, cb) = (boxes[i].confidence.unwrap(), boxes[b].confidence.unwrap());
                        let key = |k: &LabeledBox| (k.x, k.y, k.class_id, k.w, k.h);
                        let better = ci > cb || (ci == cb && key(&boxes[i]).partial_cmp(&key(&boxes[b])) == Some(Ordering::Less));
                        Some(if better { i } else { b })
                    }
                };
            }
            let Some(b) = best else { break };
            out.push(boxes[b]);
            alive[b] = false;
            for i in 0..boxes.len() {
                if alive[i] && iou(&boxes[b], &boxes[i]).unwrap() > thr {
                    alive[i] = false;
                }
            }
        }
        out
    }

    #[test]
    fn duplicate_suppressed() {
        let kept = nms(&[det(0, 1.0, 1.0, 10.0, 10.0, 0.8), det(1, 1.0, 1.0, 10.0, 10.0, 0.9)], &NmsParams::default());
        assert_eq!(kept, vec![det(1, 1.0, 1.0, 10.0, 10.0, 0.9)]);
        let per_class = NmsParams { per_class: true, ..NmsParams::default() };
        assert_eq!(nms(&[det(0, 1.0, 1.0, 10.0, 10.0, 0.8), det(1, 1.0, 1.0, 10.0, 10.0, 0.9)], &per_class).len(), 2);
    }

    #[test]
    fn low_overlap_kept() {
        // IoU 0.5
        let kept = nms(&[det(0, 0.0, 0.0, 10.0, 10.0, 0.9), det(0, 0.0, 0.0, 10.0, 5.0, 0.8)], &NmsParams::default());
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].confidence, Some(0.9));
    }

    #[test]
    fn threshold_is_strict() {
        // IoU exactly 0.75 at threshold 0.75 keeps both
        let a = det(0, 0.0, 0.0, 4.0, 1.0, 0.9);
        let b = det(0, 0.0, 0.0, 3.0, 1.0, 0.5);
        let p = NmsParams { iou_threshold: 0.75, per_class: false };
        assert_eq!(nms(&[a, b], &p).len(), 2);
    }

    #[test]
    fn map_examples() {
        let b = det(2, 10.0, 20.0, 30.0, 40.0, 0.5);
        let d = Detection::new(b, Some(SliceRef { scene_id: "s".into(), i: 0, j: 0, stride: 512 })).unwrap();
        assert_eq!(map_to_scene(&d).bbox, b);
        let d = Detection::new(b, Some(SliceRef { scene_id: "s".into(), i: 2, j: 1, stride: 512 })).unwrap();
        let m = map_to_scene(&d);
        assert_eq!((m.bbox.x, m.bbox.y, m.bbox.w, m.bbox.h), (1034.0, 532.0, 30.0, 40.0));
        assert_eq!((m.bbox.class_id, m.bbox.confidence), (2, Some(0.5)));
        assert!(m.slice.is_none());
    }

    #[test]
    fn detection_validation() {
        assert!(Detection::new(LabeledBox::new(0, 0.0, 0.0, 1.0, 1.0), None).is_err());
        assert!(Detection::new(det(0, 0.0, 0.0, 1.0, 1.0, 1.5), None).is_err());
        assert_eq!(Detection::new(det(0, 0.0, 0.0, 0.0, 1.0, 0.5), None), Err(Error::DegenerateBox));
        let index = SliceIndex::new();
        assert_eq!(lookup_slice(&index, "x"), Err(Error::UnknownSlice));
    }

    #[test]
    fn slicer_round_trip() {
        let labels = [LabeledBox::new(0, 700.0, 300.0, 60.0, 40.0), LabeledBox::new(1, 1500.0, 1200.0, 30.0, 30.0)];
        for s in slide_dims("sc", (2000, 1500), &labels, 512, 256).unwrap() {
            for l in &s.labels {
                let d = Detection::new(l.with_confidence(0.9), Some(SliceRef::from(&s))).unwrap();
                let back = map_to_scene(&d).bbox;
                assert!(labels.iter().any(|o| o.with_confidence(0.9) == back));
            }
        }
    }

    fn arb_boxes() -> impl Strategy<Value = Vec<LabeledBox>> {
        prop::collection::vec((0u32..3, 0u32..40, 0u32..40, 1u32..20, 1u32..20, 0u32..10), 0..50).prop_map(|v| {
            v.into_iter()
                .map(|(c, x, y, w, h, q)| det(c, x as f64, y as f64, w as f64, h as f64, q as f64 / 10.0))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(boxes in arb_boxes(), thr in 0.0f64..1.0) {
            let p = NmsParams { iou_threshold: thr, per_class: false };
            let kept = nms(&boxes, &p);
            prop_assert!(same_boxes(&kept, &brute_nms(&boxes, thr)));
            prop_assert!(same_boxes(&nms(&kept, &p), &kept));
            for (a, ka) in kept.iter().enumerate() {
                for kb in &kept[a + 1..] {
                    prop_assert!(iou(ka, kb).unwrap() <= thr);
                }
            }
        }

        #[test]
        fn confidence_scale_invariant(boxes in arb_boxes(), s in 0.01f64..1.0) {
            let p = NmsParams::default();
            let scaled: Vec<_> = boxes.iter().map(|b| b.with_confidence(b.confidence.unwrap() * s)).collect();
            let a = nms_indices(&boxes, &p);
            let b = nms_indices(&scaled, &p);
            prop_assert_eq!(a, b);
        }
    }
}

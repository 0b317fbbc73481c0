//! Placement planning and masked compositing of chips into a scene.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boxes::LabeledBox;
use crate::error::{Error, Result};
use crate::raster::{compose, BinaryMask, GrayRaster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementRequest {
    pub class_id: u32,
    pub count: usize,
}

/// One chip placed at a top-left position in the scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementEntry {
    /// Running index within the entry's class.
    pub chip_id: u32,
    pub class_id: u32,
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PlacementEntry {
    fn overlaps(&self, other: &PlacementEntry) -> bool {
        self.x < other.x + other.width
            && other.x < self.x + self.width
            && self.y < other.y + other.height
            && other.y < self.y + self.height
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub scene_id: String,
    pub scene_width: usize,
    pub scene_height: usize,
    pub rng_seed: u64,
    pub entries: Vec<PlacementEntry>,
}

impl PlacementPlan {
    /// Containment, pairwise disjointness and (optionally) exclusion checks.
    pub fn validate(&self, exclusion: Option<&BinaryMask>) -> Result<()> {
        let sat = exclusion.map(SummedArea::new);
        for (i, e) in self.entries.iter().enumerate() {
            if e.width == 0 || e.height == 0 || e.x + e.width > self.scene_width || e.y + e.height > self.scene_height {
                return Err(Error::PlanSceneMismatch);
            }
            if self.entries[..i].iter().any(|o| o.overlaps(e)) {
                return Err(Error::PlanSceneMismatch);
            }
            if let Some(s) = &sat {
                if s.dims != (self.scene_width, self.scene_height) || s.sum(e.x, e.y, e.width, e.height) > 0 {
                    return Err(Error::PlanSceneMismatch);
                }
            }
        }
        Ok(())
    }
}

// Summed-area table over the exclusion mask for O(1) rectangle queries.
struct SummedArea {
    dims: (usize, usize),
    table: Vec<u32>,
}

impl SummedArea {
    fn new(mask: &BinaryMask) -> Self {
        let (w, h) = mask.dims();
        let mut table = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += mask.get(x, y) as u32;
                table[(y + 1) * (w + 1) + x + 1] = table[y * (w + 1) + x + 1] + row;
            }
        }
        Self { dims: (w, h), table }
    }

    fn sum(&self, x: usize, y: usize, w: usize, h: usize) -> u32 {
        let stride = self.dims.0 + 1;
        let at = |xx: usize, yy: usize| self.table[yy * stride + xx];
        at(x + w, y + h) + at(x, y) - at(x + w, y) - at(x, y + h)
    }
}

/// Rejection-sample non-overlapping chip positions that avoid the
/// exclusion mask. Requests are served in order; each entry gets
/// `max_attempts` draws.
pub fn plan_placements(
    scene_id: &str,
    scene_dims: (usize, usize),
    exclusion: &BinaryMask,
    requests: &[PlacementRequest],
    chip_dims: (usize, usize),
    seed: u64,
    max_attempts: usize,
) -> Result<PlacementPlan> {
    let (sw, sh) = scene_dims;
    let (cw, ch) = chip_dims;
    if exclusion.dims() != scene_dims {
        return Err(Error::ShapeMismatch);
    }
    if cw == 0 || ch == 0 {
        return Err(Error::InvalidSize);
    }
    let sat = SummedArea::new(exclusion);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries: Vec<PlacementEntry> = Vec::new();

    for req in requests {
        for k in 0..req.count {
            let exhausted = Error::PlacementExhausted { class_id: req.class_id, placed: k, requested: req.count };
            if cw > sw || ch > sh {
                return Err(exhausted);
            }
            let mut accepted = None;
            for _ in 0..max_attempts {
                let candidate = PlacementEntry {
                    chip_id: k as u32,
                    class_id: req.class_id,
                    x: rng.random_range(0..=sw - cw),
                    y: rng.random_range(0..=sh - ch),
                    width: cw,
                    height: ch,
                };
                if sat.sum(candidate.x, candidate.y, cw, ch) == 0 && !entries.iter().any(|e| e.overlaps(&candidate)) {
                    accepted = Some(candidate);
                    break;
                }
            }
            entries.push(accepted.ok_or(exhausted)?);
        }
    }
    Ok(PlacementPlan { scene_id: String::from(scene_id), scene_width: sw, scene_height: sh, rng_seed: seed, entries })
}

/// A segmented chip ready to be composited.
#[derive(Debug, Clone, Copy)]
pub struct SynthSource<'a> {
    pub chip: &'a GrayRaster,
    /// Object-and-shadow mask; foreground pixels are copied from the chip.
    pub mask: &'a BinaryMask,
    /// Target box in chip coordinates, usually from auto-labeling.
    pub chip_label: LabeledBox,
}

/// Composite `sources[i]` at `plan.entries[i]`. Scene pixels outside every
/// mask footprint are left untouched. Labels come back in plan order with
/// the entry's class id.
pub fn synthesize_scene(scene: &GrayRaster, plan: &PlacementPlan, sources: &[SynthSource<'_>]) -> Result<(GrayRaster, Vec<LabeledBox>)> {
    if sources.len() != plan.entries.len() || scene.dims() != (plan.scene_width, plan.scene_height) {
        return Err(Error::PlanSceneMismatch);
    }
    plan.validate(None)?;
    let mut out = scene.clone();
    let mut labels = Vec::with_capacity(sources.len());
    for (entry, src) in plan.entries.iter().zip(sources) {
        let dims = (entry.width, entry.height);
        if src.chip.dims() != dims || src.mask.dims() != dims {
            return Err(Error::ShapeMismatch);
        }
        let cut = scene.crop(entry.x, entry.y, entry.width, entry.height)?;
        let merged = compose(src.chip, &cut, src.mask)?;
        out.paste(&merged, entry.x, entry.y)?;
        let mut label = src.chip_label.translated(entry.x as f64, entry.y as f64);
        label.class_id = entry.class_id;
        label.confidence = None;
        labels.push(label);
    }
    Ok((out, labels))
}

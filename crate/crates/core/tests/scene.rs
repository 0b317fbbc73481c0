use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sarforge_core::autolabel::{auto_label, AutoLabelParams};
use sarforge_core::boxes::iou;
use sarforge_core::detect::{map_to_scene, Detection, SliceRef};
use sarforge_core::eval::{evaluate, EvalReport, DEFAULT_IOU_MIN};
use sarforge_core::segmentation::{segment_object, segment_object_shadow, SegmentationParams};
use sarforge_core::slicer::slide;
use sarforge_core::synth::{plan_placements, synthesize_scene, PlacementPlan, PlacementRequest, SynthSource};
use sarforge_core::synthetic::salted_target_chip;
use sarforge_core::{BinaryMask, GrayRaster, LabeledBox};

struct Prepared {
    chip: GrayRaster,
    mask: BinaryMask,
    label: LabeledBox,
}

fn prepared_chips(per_class: usize) -> Vec<Vec<Prepared>> {
    let mut out: Vec<Vec<Prepared>> = (0..4).map(|_| Vec::new()).collect();
    let mut seed = 500;
    while out.iter().any(|v| v.len() < per_class) {
        let s = salted_target_chip(seed);
        seed += 1;
        let c = s.truth.class_id as usize;
        if out[c].len() == per_class {
            continue;
        }
        let p = SegmentationParams { percentile_fraction: s.class_fraction, ..SegmentationParams::default() };
        let Ok(object) = segment_object(&s.chip, &p) else { continue };
        let Ok(mask) = segment_object_shadow(&s.chip, &object, &p) else { continue };
        let Ok(label) = auto_label(&s.chip, c as u32, &AutoLabelParams { binarize: p, ..AutoLabelParams::default() }) else { continue };
        out[c].push(Prepared { chip: s.chip, mask, label });
    }
    out
}

fn scene_with_targets(side: usize, seed: u64) -> (GrayRaster, GrayRaster, PlacementPlan, Vec<LabeledBox>, Vec<Vec<Prepared>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = GrayRaster::from_fn(side, side, |_, _| rng.random_range(20..=70)).unwrap();
    let chips = prepared_chips(3);
    let requests: Vec<PlacementRequest> = (0..4).map(|c| PlacementRequest { class_id: c, count: 3 }).collect();
    let plan = plan_placements("s", (side, side), &BinaryMask::empty(side, side).unwrap(), &requests, (128, 128), seed, 5000).unwrap();
    let sources: Vec<SynthSource> = plan
        .entries
        .iter()
        .map(|e| {
            let p = &chips[e.class_id as usize][e.chip_id as usize];
            SynthSource { chip: &p.chip, mask: &p.mask, chip_label: p.label }
        })
        .collect();
    let (scene, labels) = synthesize_scene(&background, &plan, &sources).unwrap();
    (background, scene, plan, labels, chips)
}

#[test]
fn compositing_only_touches_mask_footprints() {
    let (background, scene, plan, labels, chips) = scene_with_targets(1100, 3);
    let mut footprint = BinaryMask::empty(1100, 1100).unwrap();
    for e in &plan.entries {
        let m = &chips[e.class_id as usize][e.chip_id as usize].mask;
        for y in 0..e.height {
            for x in 0..e.width {
                if m.get(x, y) {
                    footprint.set(e.x + x, e.y + y, true);
                }
            }
        }
    }
    for y in 0..1100 {
        for x in 0..1100 {
            if !footprint.get(x, y) {
                assert_eq!(scene.get(x, y), background.get(x, y), "({x}, {y})");
            }
        }
    }
    assert_eq!(labels.len(), 12);
    for (l, e) in labels.iter().zip(&plan.entries) {
        assert_eq!(l.class_id, e.class_id);
        assert!(l.x >= 0.0 && l.y >= 0.0 && l.x_max() <= 1100.0 && l.y_max() <= 1100.0);
        let (cx, cy) = l.center();
        let (lx, ly) = (cx as usize - e.x, cy as usize - e.y);
        let m = &chips[e.class_id as usize][e.chip_id as usize].mask;
        assert!(m.get(lx, ly), "label center outside its mask footprint");
    }
}

#[test]
fn sliced_labels_map_back_to_scene_labels() {
    let (_, scene, _, labels, _) = scene_with_targets(1100, 4);
    let slices = slide("s", &scene, &labels, 512, 256).unwrap();
    let mut seen = vec![0usize; labels.len()];
    for s in &slices {
        assert_eq!(s.crop_from(&scene).unwrap().dims(), (s.window.width, s.window.height));
        for l in &s.labels {
            let d = Detection::new(l.with_confidence(1.0), Some(SliceRef::from(s))).unwrap();
            let back = map_to_scene(&d).bbox;
            let t = labels.iter().position(|g| iou(g, &back).unwrap() == 1.0).expect("maps onto a scene label");
            seen[t] += 1;
        }
    }
    assert!(seen.iter().all(|&n| n >= 1), "every 128 px chip fits some 512 px window: {seen:?}");
}

#[test]
fn per_scene_reports_merge_to_the_pooled_report() {
    let (_, _, _, a, _) = scene_with_targets(1100, 5);
    let (_, _, _, b, _) = scene_with_targets(1100, 6);
    // Drop one target in each scene and add a stray box to the second.
    let det_a: Vec<LabeledBox> = a[1..].iter().map(|g| g.with_confidence(0.8)).collect();
    let mut det_b: Vec<LabeledBox> = b[..b.len() - 1].iter().map(|g| g.with_confidence(0.8)).collect();
    det_b.push(LabeledBox::new(2, 1.0, 1.0, 10.0, 10.0).with_confidence(0.3));
    let ra = evaluate(&a, &det_a, 4, DEFAULT_IOU_MIN, 3).unwrap();
    let rb = evaluate(&b, &det_b, 4, DEFAULT_IOU_MIN, 5).unwrap();
    let merged = ra.merge(&rb).unwrap();
    assert_eq!((merged.tp, merged.fn_count, merged.fp, merged.tn), (22, 2, 1, 7));
    assert_eq!(merged, rb.merge(&ra).unwrap());
    let direct = EvalReport::from_matrix(merged.matrix.clone(), 1, 8).unwrap();
    assert_eq!(merged, direct);
}

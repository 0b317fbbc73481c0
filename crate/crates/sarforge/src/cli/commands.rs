use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sarforge_core::autolabel::{auto_label, LabelReport};
use sarforge_core::detect::{lookup_slice, merge_scene_detections, Detection, SliceIndex};
use sarforge_core::eval::{confusion, match_detections, render_table, EvalReport};
use sarforge_core::genmetrics::{baseline_features, fid, inject_noise, FeatureSet};
use sarforge_core::segmentation::{segment_object, segment_object_shadow, SegmentationSummary};
use sarforge_core::slicer::{contains, default_stride, slide, windows, SliceRecord};
use sarforge_core::synth::{plan_placements, synthesize_scene, PlacementPlan, PlacementRequest, SynthSource};
use sarforge_core::{BinaryMask, GrayRaster, LabeledBox};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::*;
use crate::config::ClassTable;
use crate::formats::{
    normalized_text, read_features, read_json, read_jsonl, resolve, slice_index, write_bytes, write_json, write_jsonl,
    BoxRecord, ChipRecord, RunMetadata, SceneManifest, SliceIndexEntry,
};
use crate::io::{create_dir, file_stem, list_images, read_gray, read_mask, write_gray, write_mask};

pub fn dispatch(cfg: PipelineConfig, command: Command) -> Result<()> {
    match command {
        Command::Segment(a) => segment(cfg, a),
        Command::Autolabel(a) => autolabel(cfg, a),
        Command::Plan(a) => plan(cfg, a),
        Command::Synth(a) => synth(cfg, a),
        Command::Slice(a) => slice(cfg, a),
        Command::Noise(a) => noise(cfg, a),
        Command::Nms(a) => nms(cfg, a),
        Command::Eval(a) => eval(cfg, a),
        Command::Fid(a) => fid_cmd(cfg, a),
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

/// `<out>.run.json` for file artifacts.
fn run_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

fn write_run(path: &Path, cfg: &PipelineConfig, subcommand: &str, seeds: &[(&str, u64)], inputs: &[&Path], outputs: Vec<String>) -> Result<()> {
    let meta = RunMetadata {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand.into(),
        config_sha256: cfg.sha256(),
        seeds: seeds.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        inputs: inputs.iter().map(|p| show(p)).collect(),
        outputs,
    };
    write_json(path, &meta)
}

fn print_line<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("summary serializes"));
}

struct Chip {
    record: ChipRecord,
    path: PathBuf,
    class_id: u32,
}

fn load_chips(manifest: &Path, classes: &ClassTable) -> Result<Vec<Chip>> {
    read_jsonl::<ChipRecord>(manifest)?
        .into_iter()
        .enumerate()
        .map(|(n, record)| {
            let class_id = classes
                .id(&record.class)
                .ok_or_else(|| RunError::format(manifest, format!("record {}: unknown class {:?}", n + 1, record.class)))?;
            let path = resolve(manifest, &record.image);
            Ok(Chip { record, path, class_id })
        })
        .collect()
}

/// Output names are derived from file stems, so they must be unique.
fn unique_stems(manifest: &Path, chips: &[Chip]) -> Result<Vec<String>> {
    let stems: Vec<String> = chips.iter().map(|c| file_stem(&c.path)).collect();
    let mut seen = BTreeSet::new();
    for s in &stems {
        if !seen.insert(s.as_str()) {
            return Err(RunError::format(manifest, format!("two chips share the file stem {s:?}")));
        }
    }
    Ok(stems)
}

#[derive(Serialize)]
struct Failure {
    image: String,
    error: String,
    message: String,
}

fn failure(image: &Path, e: &sarforge_core::Error) -> Failure {
    Failure { image: show(image), error: e.kind().into(), message: e.to_string() }
}

fn segment(cfg: PipelineConfig, a: SegmentArgs) -> Result<()> {
    let classes = cfg.class_table()?;
    let chips = load_chips(&a.manifest, &classes)?;
    let stems = unique_stems(&a.manifest, &chips)?;
    create_dir(&a.out)?;
    let outcomes: Vec<sarforge_core::Result<BinaryMask>> = chips
        .par_iter()
        .zip(&stems)
        .map(|(c, stem)| {
            let img = read_gray(&c.path)?;
            let p = cfg.segmentation(c.class_id);
            let mask = segment_object(&img, &p).and_then(|m| if a.object_only { Ok(m) } else { segment_object_shadow(&img, &m, &p) });
            if let Ok(m) = &mask {
                write_mask(&a.out.join(format!("{stem}{}.png", a.suffix)), m)?;
            }
            Ok(mask)
        })
        .collect::<Result<_>>()?;

    let mut summary = SegmentationSummary::default();
    let mut failures = Vec::new();
    let mut outputs = Vec::new();
    for ((c, stem), outcome) in chips.iter().zip(&stems).zip(&outcomes) {
        summary.record(&c.record.class, outcome);
        match outcome {
            Ok(_) => outputs.push(format!("{stem}{}.png", a.suffix)),
            Err(e) => failures.push(failure(&c.record.image, e)),
        }
    }
    let report = json!({
        "summary": summary,
        "average_success": summary.average_rate(),
        "pooled_success": summary.pooled_rate(),
        "failures": failures,
    });
    write_json(&a.out.join("summary.json"), &report)?;
    outputs.push("summary.json".into());
    write_run(&a.out.join("run.json"), &cfg, "segment", &[], &[&a.manifest], outputs)?;
    print_line(&json!({ "chips": chips.len(), "masks": chips.len() - failures.len(), "average_success": summary.average_rate() }));
    Ok(())
}

fn autolabel(mut cfg: PipelineConfig, a: AutolabelArgs) -> Result<()> {
    if let Some(t) = a.white_pixel_threshold {
        cfg.autolabel.white_pixel_threshold = t;
    }
    if let Some(f) = a.expand_fraction {
        cfg.autolabel.expand_fraction = f;
    }
    cfg.validate()?;
    let classes = cfg.class_table()?;
    let chips = load_chips(&a.manifest, &classes)?;
    let stems = unique_stems(&a.manifest, &chips)?;
    let references: BTreeMap<String, LabeledBox> = match &a.reference {
        None => BTreeMap::new(),
        Some(path) => read_jsonl::<BoxRecord>(path)?
            .into_iter()
            .map(|r| {
                let key = r.image.clone().ok_or_else(|| RunError::format(path, "reference record without `image`"))?;
                let b = r.to_box(&classes).map_err(|m| RunError::format(path, m))?;
                Ok((key, b))
            })
            .collect::<Result<_>>()?,
    };
    create_dir(&a.out)?;
    let outcomes: Vec<(sarforge_core::Result<LabeledBox>, (usize, usize))> = chips
        .par_iter()
        .map(|c| {
            let img = read_gray(&c.path)?;
            Ok((auto_label(&img, c.class_id, &cfg.autolabel_for(c.class_id)), img.dims()))
        })
        .collect::<Result<_>>()?;

    let mut report = LabelReport::default();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut outputs = vec![String::from("labels.jsonl")];
    for ((c, stem), (outcome, (w, h))) in chips.iter().zip(&stems).zip(&outcomes) {
        let key = c.record.image.to_string_lossy().into_owned();
        report.record(&c.record.class, outcome, references.get(&key));
        match outcome {
            Ok(b) => {
                let mut rec = BoxRecord::from_box(b, &classes);
                rec.image = Some(key);
                records.push(rec);
                write_bytes(&a.out.join(format!("{stem}.txt")), normalized_text(&[*b], *w, *h).as_bytes())?;
                outputs.push(format!("{stem}.txt"));
            }
            Err(e) => failures.push(failure(&c.record.image, e)),
        }
    }
    write_jsonl(&a.out.join("labels.jsonl"), &records)?;
    let summary = json!({ "report": report, "average_error_rate": report.average_error_rate(), "failures": failures });
    write_json(&a.out.join("report.json"), &summary)?;
    outputs.push("report.json".into());
    let mut inputs = vec![a.manifest.as_path()];
    inputs.extend(a.reference.as_deref());
    write_run(&a.out.join("run.json"), &cfg, "autolabel", &[], &inputs, outputs)?;
    print_line(&json!({ "chips": chips.len(), "labeled": records.len(), "average_error_rate": report.average_error_rate() }));
    Ok(())
}

fn plan(mut cfg: PipelineConfig, a: PlanArgs) -> Result<()> {
    if let Some(s) = a.seed {
        cfg.seeds.plan = s;
    }
    if let Some(m) = a.max_attempts {
        cfg.synth.max_attempts = m;
    }
    cfg.validate()?;
    let classes = cfg.class_table()?;
    let requests = a
        .requests
        .iter()
        .map(|(name, count)| {
            let class_id = classes.id(name).ok_or_else(|| RunError::Usage(format!("unknown class {name:?} in --request")))?;
            Ok(PlacementRequest { class_id, count: *count })
        })
        .collect::<Result<Vec<_>>>()?;
    let scene = read_gray(&a.scene)?;
    let (w, h) = scene.dims();
    let exclusion = match &a.exclusion {
        Some(p) => read_mask(p)?,
        None => BinaryMask::empty(w, h)?,
    };
    let scene_id = a.scene_id.clone().unwrap_or_else(|| file_stem(&a.scene));
    let plan = plan_placements(&scene_id, (w, h), &exclusion, &requests, a.chip_size, cfg.seeds.plan, cfg.synth.max_attempts)?;
    write_json(&a.out, &plan)?;
    let mut inputs = vec![a.scene.as_path()];
    inputs.extend(a.exclusion.as_deref());
    write_run(&run_path(&a.out), &cfg, "plan", &[("plan", cfg.seeds.plan)], &inputs, vec![show(&a.out)])?;
    print_line(&json!({ "scene_id": scene_id, "entries": plan.entries.len(), "seed": cfg.seeds.plan }));
    Ok(())
}

fn synth(cfg: PipelineConfig, a: SynthArgs) -> Result<()> {
    let classes = cfg.class_table()?;
    let scene = read_gray(&a.scene)?;
    let plan: PlacementPlan = read_json(&a.plan)?;
    let chips = load_chips(&a.chips, &classes)?;
    let mut by_class: BTreeMap<u32, Vec<&Chip>> = BTreeMap::new();
    for c in &chips {
        by_class.entry(c.class_id).or_default().push(c);
    }
    let prepared: Vec<(GrayRaster, BinaryMask, LabeledBox)> = plan
        .entries
        .par_iter()
        .map(|e| {
            let chip = by_class.get(&e.class_id).and_then(|v| v.get(e.chip_id as usize)).ok_or_else(|| {
                RunError::format(&a.chips, format!("plan needs chip {} of class {:?}", e.chip_id, classes.name(e.class_id)))
            })?;
            let img = read_gray(&chip.path)?;
            let p = cfg.segmentation(e.class_id);
            let object = segment_object(&img, &p)?;
            let mask = segment_object_shadow(&img, &object, &p)?;
            let label = auto_label(&img, e.class_id, &cfg.autolabel_for(e.class_id))?;
            Ok((img, mask, label))
        })
        .collect::<Result<_>>()?;
    let sources: Vec<SynthSource<'_>> =
        prepared.iter().map(|(chip, mask, label)| SynthSource { chip, mask, chip_label: *label }).collect();
    let (out_scene, labels) = synthesize_scene(&scene, &plan, &sources)?;

    create_dir(&a.out)?;
    let id = &plan.scene_id;
    let (scene_name, labels_name, manifest_name) = (format!("{id}.png"), format!("{id}.jsonl"), format!("{id}.scene.json"));
    write_gray(&a.out.join(&scene_name), &out_scene)?;
    let records: Vec<BoxRecord> = labels
        .iter()
        .map(|b| BoxRecord { scene: Some(id.clone()), ..BoxRecord::from_box(b, &classes) })
        .collect();
    write_jsonl(&a.out.join(&labels_name), &records)?;
    let manifest = SceneManifest { scene: scene_name.clone().into(), labels: labels_name.clone().into(), seed: plan.rng_seed };
    write_json(&a.out.join(&manifest_name), &manifest)?;
    write_run(
        &a.out.join("run.json"),
        &cfg,
        "synth",
        &[("plan", plan.rng_seed)],
        &[&a.scene, &a.plan, &a.chips],
        vec![scene_name, labels_name, manifest_name],
    )?;
    print_line(&json!({ "scene_id": id, "targets": labels.len() }));
    Ok(())
}

fn slice(mut cfg: PipelineConfig, a: SliceArgs) -> Result<()> {
    let size = a.size.unwrap_or(cfg.slicer.size);
    let stride = match (a.stride, a.size) {
        (Some(s), _) => s,
        (None, Some(s)) => default_stride(s),
        (None, None) => cfg.slicer_stride(),
    };
    cfg.slicer.size = size;
    cfg.slicer.stride = Some(stride);
    cfg.validate()?;
    let classes = cfg.class_table()?;
    let scene = read_gray(&a.scene)?;
    let scene_id = a.scene_id.clone().unwrap_or_else(|| file_stem(&a.scene));
    let labels: Vec<LabeledBox> = match &a.labels {
        None => Vec::new(),
        Some(path) => read_jsonl::<BoxRecord>(path)?
            .into_iter()
            .filter(|r| r.scene.as_deref().is_none_or(|s| s == scene_id))
            .map(|r| r.to_box(&classes).map_err(|m| RunError::format(path, m)))
            .collect::<Result<_>>()?,
    };
    let records: Vec<SliceRecord> = if a.all {
        windows(scene.dims(), size, stride)?
            .into_iter()
            .map(|((i, j), window)| SliceRecord {
                scene_id: scene_id.clone(),
                i,
                j,
                stride,
                window,
                labels: labels
                    .iter()
                    .filter(|b| contains(&window, b))
                    .map(|b| b.translated(-(window.x as f64), -(window.y as f64)))
                    .collect(),
            })
            .collect()
    } else {
        slide(&scene_id, &scene, &labels, size, stride)?
    };

    create_dir(&a.out)?;
    records
        .par_iter()
        .map(|r| {
            let name = r.name();
            write_gray(&a.out.join(format!("{name}.png")), &r.crop_from(&scene)?)?;
            let text = normalized_text(&r.labels, r.window.width, r.window.height);
            write_bytes(&a.out.join(format!("{name}.txt")), text.as_bytes())
        })
        .collect::<Result<()>>()?;
    let index: Vec<SliceIndexEntry> = records.iter().map(SliceIndexEntry::from).collect();
    write_json(&a.out.join("index.json"), &index)?;
    let mut outputs: Vec<String> = index.iter().flat_map(|e| [format!("{}.png", e.name), format!("{}.txt", e.name)]).collect();
    outputs.push("index.json".into());
    let mut inputs = vec![a.scene.as_path()];
    inputs.extend(a.labels.as_deref());
    write_run(&a.out.join("run.json"), &cfg, "slice", &[], &inputs, outputs)?;
    print_line(&json!({ "scene_id": scene_id, "slices": records.len(), "size": size, "stride": stride }));
    Ok(())
}

/// Per-file seed: the first eight bytes of SHA-256 over the run seed and
/// the file name, so results do not depend on listing order.
pub fn file_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn noise(mut cfg: PipelineConfig, a: NoiseArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.fraction) {
        return Err(RunError::Usage(format!("--fraction must be in [0, 1], got {}", a.fraction)));
    }
    if let Some(s) = a.seed {
        cfg.seeds.noise = s;
    }
    let seed = cfg.seeds.noise;
    let files = if a.input.is_dir() { list_images(&a.input)? } else { vec![a.input.clone()] };
    create_dir(&a.out)?;
    let names: Vec<String> = files
        .par_iter()
        .map(|f| {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let img = read_gray(f)?;
            write_gray(&a.out.join(&name), &inject_noise(&img, a.fraction, file_seed(seed, &name))?)?;
            Ok(name)
        })
        .collect::<Result<_>>()?;
    write_run(&a.out.join("run.json"), &cfg, "noise", &[("noise", seed)], &[&a.input], names.clone())?;
    print_line(&json!({ "images": names.len(), "fraction": a.fraction, "seed": seed }));
    Ok(())
}

fn nms(mut cfg: PipelineConfig, a: NmsArgs) -> Result<()> {
    if let Some(t) = a.threshold {
        cfg.nms.iou_threshold = t;
    }
    cfg.nms.per_class |= a.per_class;
    cfg.validate()?;
    let classes = cfg.class_table()?;
    let index: Option<SliceIndex> = match &a.index {
        Some(p) => Some(slice_index(&read_json::<Vec<SliceIndexEntry>>(p)?)),
        None => None,
    };
    let path = &a.detections;
    let mut dets = Vec::new();
    for (n, r) in read_jsonl::<BoxRecord>(path)?.into_iter().enumerate() {
        let at = |m: String| RunError::format(path, format!("record {}: {m}", n + 1));
        let b = r.to_box(&classes).map_err(at)?;
        if b.confidence.is_none() {
            return Err(at("detection without `conf`".into()));
        }
        let entry = match (&r.scene, &r.slice) {
            (None, Some(name)) => {
                let index = index.as_ref().ok_or_else(|| RunError::Usage("slice-frame detections need --index".into()))?;
                let sref = lookup_slice(index, name).map_err(|e| at(format!("{e}: {name:?}")))?.clone();
                (sref.scene_id.clone(), Detection::new(b, Some(sref))?)
            }
            (Some(scene), _) => (scene.clone(), Detection::new(b, None)?),
            (None, None) => return Err(at("record names neither `scene` nor `slice`".into())),
        };
        dets.push(entry);
    }
    let merged = merge_scene_detections(&dets, &cfg.nms);
    let records: Vec<BoxRecord> = merged
        .iter()
        .flat_map(|(scene, boxes)| boxes.iter().map(|b| BoxRecord { scene: Some(scene.clone()), ..BoxRecord::from_box(b, &classes) }))
        .collect();
    write_jsonl(&a.out, &records)?;
    let mut inputs = vec![a.detections.as_path()];
    inputs.extend(a.index.as_deref());
    write_run(&run_path(&a.out), &cfg, "nms", &[], &inputs, vec![show(&a.out)])?;
    print_line(&json!({ "input": dets.len(), "kept": records.len(), "scenes": merged.len() }));
    Ok(())
}

fn group_boxes(path: &Path, classes: &ClassTable) -> Result<BTreeMap<String, Vec<LabeledBox>>> {
    let mut out: BTreeMap<String, Vec<LabeledBox>> = BTreeMap::new();
    for (n, r) in read_jsonl::<BoxRecord>(path)?.into_iter().enumerate() {
        let b = r.to_box(classes).map_err(|m| RunError::format(path, format!("record {}: {m}", n + 1)))?;
        out.entry(r.frame().unwrap_or_default().to_string()).or_default().push(b);
    }
    Ok(out)
}

fn eval(mut cfg: PipelineConfig, a: EvalArgs) -> Result<()> {
    if let Some(v) = a.iou_min {
        cfg.eval.iou_min = v;
    }
    cfg.validate()?;
    let classes = cfg.class_table()?;
    let n = classes.len();
    let gt = group_boxes(&a.gt, &classes)?;
    let det = group_boxes(&a.detections, &classes)?;
    let frames: Vec<&String> = gt.keys().chain(det.keys()).collect::<BTreeSet<_>>().into_iter().collect();
    let none = Vec::new();
    let counts = frames
        .par_iter()
        .map(|f| {
            let (g, d) = (gt.get(*f).unwrap_or(&none), det.get(*f).unwrap_or(&none));
            confusion(g, d, &match_detections(g, d, cfg.eval.iou_min), n)
        })
        .collect::<sarforge_core::Result<Vec<_>>>()?;
    let mut matrix = vec![vec![0u64; n + 1]; n];
    let mut fp = 0;
    for (m, f) in counts {
        for (row, add) in matrix.iter_mut().zip(m) {
            row.iter_mut().zip(add).for_each(|(x, y)| *x += y);
        }
        fp += f;
    }
    let report = EvalReport::from_matrix(matrix, fp, a.background_units)?;
    let mut table = render_table(&report, classes.names());
    if let Some(p) = report.pooled_acc {
        table.push_str(&format!("Pooled ACC(%) {p:.2}\n"));
    }
    print!("{table}");
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        let table_path = out.with_extension("txt");
        write_bytes(&table_path, table.as_bytes())?;
        write_run(&run_path(out), &cfg, "eval", &[], &[&a.gt, &a.detections], vec![show(out), show(&table_path)])?;
    }
    if let Some(min) = a.min_acc {
        match report.average_acc {
            Some(v) if v >= min => {}
            Some(v) => return Err(RunError::Gate(format!("average ACC {v:.2}% is below the --min-acc gate {min}%"))),
            None => return Err(RunError::Gate("no ground truth, average ACC undefined".into())),
        }
    }
    Ok(())
}

fn feature_set(path: &Path, side: usize) -> Result<FeatureSet> {
    if !path.is_dir() {
        return read_features(path);
    }
    let rows = list_images(path)?
        .par_iter()
        .map(|f| Ok(baseline_features(&read_gray(f)?, side)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureSet::from_rows(&rows)?)
}

fn fid_cmd(mut cfg: PipelineConfig, a: FidArgs) -> Result<()> {
    if let Some(s) = a.side {
        cfg.fid.side = s;
    }
    cfg.validate()?;
    let real = feature_set(&a.real, cfg.fid.side)?;
    let generated = feature_set(&a.generated, cfg.fid.side)?;
    let value = fid(&real, &generated)?;
    let result = json!({
        "fid": value,
        "real": { "n": real.n(), "d": real.d() },
        "generated": { "n": generated.n(), "d": generated.d() },
    });
    print_line(&result);
    if let Some(out) = &a.out {
        write_json(out, &result)?;
        write_run(&run_path(out), &cfg, "fid", &[], &[&a.real, &a.generated], vec![show(out)])?;
    }
    Ok(())
}

//! On-disk record formats.
//!
//! * box records: JSON Lines, one box per line, frame given by `scene`,
//!   `slice` or `image`;
//! * normalized text: `class_id cx cy w h` with coordinates divided by the
//!   image dimensions;
//! * slice index: JSON array mapping slice names back to scene offsets;
//! * feature sets: headerless CSV, or raw little-endian `f64` rows with a
//!   `{n, d}` JSON sidecar at `<file>.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use sarforge_core::detect::{SliceIndex, SliceRef};
use sarforge_core::genmetrics::FeatureSet;
use sarforge_core::slicer::SliceRecord;
use sarforge_core::LabeledBox;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ClassTable;
use crate::error::{Result, RunError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub class: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", alias = "confidence")]
    pub conf: Option<f64>,
}

impl BoxRecord {
    pub fn from_box(b: &LabeledBox, classes: &ClassTable) -> Self {
        Self {
            scene: None,
            slice: None,
            image: None,
            class: classes.name(b.class_id),
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
            conf: b.confidence,
        }
    }

    pub fn to_box(&self, classes: &ClassTable) -> std::result::Result<LabeledBox, String> {
        let id = classes.id(&self.class).ok_or_else(|| format!("unknown class {:?}", self.class))?;
        let b = LabeledBox { class_id: id, x: self.x, y: self.y, w: self.w, h: self.h, confidence: self.conf };
        if !b.is_valid() {
            return Err(format!("degenerate box for class {:?}", self.class));
        }
        Ok(b)
    }

    /// The frame the box lives in: scene, then image, then slice name.
    pub fn frame(&self) -> Option<&str> {
        self.scene.as_deref().or(self.image.as_deref()).or(self.slice.as_deref())
    }
}

/// One chip in a batch manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChipRecord {
    pub image: PathBuf,
    pub class: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub scene: PathBuf,
    pub labels: PathBuf,
    pub seed: u64,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| RunError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RunError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| RunError::format(path, format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    write_bytes(path, &buf)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| RunError::format(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value).expect("value serializes");
    buf.push(b'\n');
    write_bytes(path, &buf)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| RunError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| RunError::io(path, e))
}

/// Resolve a manifest entry relative to the manifest's directory.
pub fn resolve(manifest: &Path, entry: &Path) -> PathBuf {
    if entry.is_absolute() {
        return entry.to_path_buf();
    }
    manifest.parent().map_or_else(|| entry.to_path_buf(), |dir| dir.join(entry))
}

pub fn normalized_line(b: &LabeledBox, width: usize, height: usize) -> String {
    let (cx, cy) = b.center();
    let (w, h) = (width as f64, height as f64);
    format!("{} {:.6} {:.6} {:.6} {:.6}", b.class_id, cx / w, cy / h, b.w / w, b.h / h)
}

pub fn normalized_text(boxes: &[LabeledBox], width: usize, height: usize) -> String {
    let mut out = String::new();
    for b in boxes {
        let _ = writeln!(out, "{}", normalized_line(b, width, height));
    }
    out
}

pub fn parse_normalized(text: &str, width: usize, height: usize) -> std::result::Result<Vec<LabeledBox>, String> {
    let (w, h) = (width as f64, height as f64);
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let bad = || format!("line {}: expected `class cx cy w h`", n + 1);
        if fields.len() != 5 {
            return Err(bad());
        }
        let class_id: u32 = fields[0].parse().map_err(|_| bad())?;
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| bad())?;
        }
        let (bw, bh) = (v[2] * w, v[3] * h);
        out.push(LabeledBox::new(class_id, v[0] * w - bw / 2.0, v[1] * h - bh / 2.0, bw, bh));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceIndexEntry {
    pub name: String,
    pub scene_id: String,
    pub i: usize,
    pub j: usize,
    /// Top-left corner in the scene, `[x, y]`.
    pub offset: [usize; 2],
    /// `[width, height]`; edge slices may be short.
    pub size: [usize; 2],
    pub stride: usize,
}

impl From<&SliceRecord> for SliceIndexEntry {
    fn from(r: &SliceRecord) -> Self {
        Self {
            name: r.name(),
            scene_id: r.scene_id.clone(),
            i: r.i,
            j: r.j,
            offset: [r.window.x, r.window.y],
            size: [r.window.width, r.window.height],
            stride: r.stride,
        }
    }
}

pub fn slice_index(entries: &[SliceIndexEntry]) -> SliceIndex {
    entries
        .iter()
        .map(|e| (e.name.clone(), SliceRef { scene_id: e.scene_id.clone(), i: e.i, j: e.j, stride: e.stride }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub n: usize,
    pub d: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_features_csv(path: &Path) -> Result<FeatureSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| RunError::format(path, e))?;
    let mut rows = Vec::new();
    for rec in reader.deserialize::<Vec<f64>>() {
        rows.push(rec.map_err(|e| RunError::format(path, e))?);
    }
    Ok(FeatureSet::from_rows(&rows)?)
}

pub fn write_features_csv(path: &Path, fs: &FeatureSet) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for i in 0..fs.n() {
        writer.serialize(fs.row(i)).map_err(|e| RunError::format(path, e))?;
    }
    let bytes = writer.into_inner().map_err(|e| RunError::format(path, e))?;
    write_bytes(path, &bytes)
}

pub fn read_features_raw(path: &Path) -> Result<FeatureSet> {
    let side: RawSidecar = read_json(&sidecar_path(path))?;
    let bytes = fs::read(path).map_err(|e| RunError::io(path, e))?;
    if bytes.len() != side.n * side.d * 8 {
        return Err(RunError::format(path, format!("expected {} bytes for n={} d={}, found {}", side.n * side.d * 8, side.n, side.d, bytes.len())));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(FeatureSet::new(side.n, side.d, data)?)
}

pub fn write_features_raw(path: &Path, fs: &FeatureSet) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| RunError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for v in fs.data() {
        w.write_all(&v.to_le_bytes()).map_err(|e| RunError::io(path, e))?;
    }
    w.flush().map_err(|e| RunError::io(path, e))?;
    write_json(&sidecar_path(path), &RawSidecar { n: fs.n(), d: fs.d() })
}

/// CSV by extension, raw otherwise.
pub fn read_features(path: &Path) -> Result<FeatureSet> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => read_features_csv(path),
        _ => read_features_raw(path),
    }
}

/// Provenance written next to every artifact. Deliberately free of
/// timestamps and host details so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

//! Pipeline configuration, read from one TOML file.
//!
//! Every table is optional. The class table defaults to the ten MSTAR
//! classes with their per-class segmentation fractions; a class without a
//! `segmentation` table gets the defaults for its name.

use std::collections::BTreeSet;
use std::path::Path;

use sarforge_core::autolabel::AutoLabelParams;
use sarforge_core::detect::{NmsParams, DEFAULT_NMS_THRESHOLD};
use sarforge_core::eval::DEFAULT_IOU_MIN;
use sarforge_core::segmentation::{SegmentationParams, MSTAR_CLASS_FRACTIONS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RunError};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "SARFORGE_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub name: String,
    /// Position in the table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<SegmentationParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlicerConfig {
    pub size: usize,
    /// Half the size when absent.
    pub stride: Option<usize>,
}

impl Default for SlicerConfig {
    fn default() -> Self {
        Self { size: 1024, stride: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_min: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_min: DEFAULT_IOU_MIN }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub max_attempts: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { max_attempts: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidConfig {
    /// Side of the block-averaged thumbnail used as the feature vector.
    pub side: usize,
}

impl Default for FidConfig {
    fn default() -> Self {
        Self { side: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub plan: u64,
    pub noise: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub classes: Vec<ClassEntry>,
    /// `binarize` is replaced by the class's segmentation parameters.
    pub autolabel: AutoLabelParams,
    pub slicer: SlicerConfig,
    pub nms: NmsParams,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
    pub fid: FidConfig,
    pub seeds: Seeds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            classes: MSTAR_CLASS_FRACTIONS
                .iter()
                .map(|(name, _)| ClassEntry { name: (*name).into(), id: None, segmentation: None })
                .collect(),
            autolabel: AutoLabelParams::default(),
            slicer: SlicerConfig::default(),
            nms: NmsParams { iou_threshold: DEFAULT_NMS_THRESHOLD, per_class: false },
            eval: EvalConfig::default(),
            synth: SynthConfig::default(),
            fid: FidConfig::default(),
            seeds: Seeds::default(),
        }
    }
}

/// Dense id to name mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    names: Vec<String>,
}

impl ClassTable {
    pub fn new(names: Vec<String>) -> std::result::Result<Self, String> {
        if names.is_empty() {
            return Err("class table is empty".into());
        }
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(format!("class {n:?} listed twice"));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.names.iter().position(|n| n == name).map(|i| i as u32)
    }

    /// Falls back to the decimal id for ids outside the table.
    pub fn name(&self, id: u32) -> String {
        self.names.get(id as usize).cloned().unwrap_or_else(|| id.to_string())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.normalized()
    }

    /// `path`, or the defaults when `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| RunError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Order classes by id, check ids are dense from 0, and validate the
    /// embedded parameter sets.
    pub fn normalized(mut self) -> Result<Self> {
        let explicit = self.classes.iter().filter(|c| c.id.is_some()).count();
        if explicit != 0 && explicit != self.classes.len() {
            return Err(RunError::Config("either every class has an id or none does".into()));
        }
        if explicit != 0 {
            self.classes.sort_by_key(|c| c.id);
            for (k, c) in self.classes.iter().enumerate() {
                if c.id != Some(k as u32) {
                    return Err(RunError::Config(format!("class ids must be dense from 0; {:?} has id {:?}", c.name, c.id)));
                }
            }
        }
        self.class_table()?;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, e: sarforge_core::Error| RunError::Config(format!("{what}: {e}"));
        for (k, c) in self.classes.iter().enumerate() {
            self.segmentation(k as u32).validate().map_err(|e| bad(&c.name, e))?;
        }
        self.autolabel.validate().map_err(|e| bad("autolabel", e))?;
        let stride = self.slicer_stride();
        if self.slicer.size == 0 || stride == 0 || stride > self.slicer.size {
            return Err(RunError::Config("slicer needs 0 < stride <= size".into()));
        }
        if !(0.0..=1.0).contains(&self.nms.iou_threshold) {
            return Err(RunError::Config("nms.iou_threshold must be in [0, 1]".into()));
        }
        if !(self.eval.iou_min > 0.0 && self.eval.iou_min <= 1.0) {
            return Err(RunError::Config("eval.iou_min must be in (0, 1]".into()));
        }
        if self.synth.max_attempts == 0 {
            return Err(RunError::Config("synth.max_attempts must be positive".into()));
        }
        if self.fid.side == 0 {
            return Err(RunError::Config("fid.side must be positive".into()));
        }
        Ok(())
    }

    pub fn class_table(&self) -> Result<ClassTable> {
        ClassTable::new(self.classes.iter().map(|c| c.name.clone()).collect()).map_err(RunError::Config)
    }

    pub fn segmentation(&self, id: u32) -> SegmentationParams {
        match self.classes.get(id as usize) {
            Some(ClassEntry { segmentation: Some(p), .. }) => *p,
            Some(c) => SegmentationParams::for_class(&c.name),
            None => SegmentationParams::default(),
        }
    }

    pub fn autolabel_for(&self, id: u32) -> AutoLabelParams {
        AutoLabelParams { binarize: self.segmentation(id), ..self.autolabel }
    }

    pub fn slicer_stride(&self) -> usize {
        self.slicer.stride.unwrap_or(self.slicer.size / 2)
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

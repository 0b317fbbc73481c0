//! Dataset construction and detector scoring for large-scene SAR imagery.
//!
//! This crate holds the pure algorithmic pieces: raster primitives
//! (blur, thresholding, morphology, masked composition), two-stage target
//! segmentation, projection-based auto-labeling, placement planning and scene
//! compositing, sliding-window tiling, cross-slice NMS, confusion-matrix
//! evaluation, Fréchet distance over feature sets and the YOLO grid loss.
//!
//! It is `no_std` and only needs `alloc`. File formats, batch processing and
//! the command line live in the `sarforge` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autolabel;
pub mod boxes;
pub mod detect;
pub mod error;
pub mod eval;
pub mod genmetrics;
mod linalg;
pub mod raster;
pub mod segmentation;
pub mod slicer;
pub mod synth;
pub mod synthetic;
pub mod yolo;

pub use boxes::LabeledBox;
pub use error::{Error, Result};
pub use raster::{BinaryMask, GrayRaster, StructuringElement};

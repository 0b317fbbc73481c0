//! Raster and mask files. 8-bit grayscale PNG and PGM are read and written;
//! colour inputs are converted to luma on load.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat};
use sarforge_core::{BinaryMask, GrayRaster};

use crate::error::{Result, RunError};

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "pnm", "ppm"];

pub fn read_gray(path: &Path) -> Result<GrayRaster> {
    let img = image::open(path).map_err(|source| RunError::Image { path: path.to_path_buf(), source })?;
    let luma = img.into_luma8();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    Ok(GrayRaster::new(w, h, luma.into_raw())?)
}

/// Writes PGM for `.pgm`/`.pnm` paths and PNG otherwise.
pub fn write_gray(path: &Path, raster: &GrayRaster) -> Result<()> {
    let format = match extension(path).as_deref() {
        Some("pgm") | Some("pnm") => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    };
    let img = GrayImage::from_raw(raster.width() as u32, raster.height() as u32, raster.pixels().to_vec())
        .expect("raster buffer matches its dimensions");
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| RunError::io(parent, e))?;
    }
    img.save_with_format(path, format).map_err(|source| RunError::Image { path: path.to_path_buf(), source })
}

/// Any non-zero pixel is foreground.
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    Ok(BinaryMask::from_raster(&read_gray(path)?))
}

/// Foreground is written as 255.
pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    write_gray(path, &mask.to_raster())
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

pub fn is_image(path: &Path) -> bool {
    extension(path).is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str()))
}

/// Image files directly inside `dir`, sorted by path.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| RunError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| RunError::io(dir, e))?.path();
        if path.is_file() && is_image(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))
}

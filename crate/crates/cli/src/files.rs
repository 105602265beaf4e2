//! Box-list and image-sequence I/O.
//!
//! Box files are OTB-style: one `x,y,w,h` line per frame, 1-based pixel
//! origin (converted to the library's 0-based convention on read, back on
//! write), two decimals on output. Fields may be separated by commas or
//! whitespace so common ground-truth distributions load unmodified.

use crate::CliError;
use drt_core::bbox::BoundingBox;
use drt_core::features::Image;
use std::fs;
use std::path::{Path, PathBuf};

fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn runtime_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Reads a box file; requires at least one line.
pub fn read_boxes(path: &Path) -> Result<Vec<BoundingBox>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| input_err(path, e))?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| input_err(path, format!("line {}: {e}", idx + 1)))?;
        if fields.len() != 4 {
            return Err(input_err(
                path,
                format!("line {}: expected x,y,w,h, got {} fields", idx + 1, fields.len()),
            ));
        }
        out.push(BoundingBox::new(
            fields[0] - 1.0,
            fields[1] - 1.0,
            fields[2],
            fields[3],
        ));
    }
    if out.is_empty() {
        return Err(input_err(path, "no boxes"));
    }
    Ok(out)
}

fn format_box(b: &BoundingBox) -> String {
    format!("{:.2},{:.2},{:.2},{:.2}", b.x + 1.0, b.y + 1.0, b.w, b.h)
}

/// Writes one `x,y,w,h` line per box.
pub fn write_boxes(path: &Path, boxes: &[BoundingBox]) -> Result<(), CliError> {
    let mut body = String::new();
    for b in boxes {
        body.push_str(&format_box(b));
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| runtime_err(path, e))
}

/// Loads every png/jpg in `dir`, ordered by file name.
pub fn load_sequence(dir: &Path) -> Result<Vec<Image>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| input_err(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(input_err(dir, "no png/jpg frames"));
    }
    paths.iter().map(|p| load_image(p)).collect()
}

fn load_image(path: &Path) -> Result<Image, CliError> {
    let decoded = image::open(path).map_err(|e| input_err(path, e))?;
    let built = match decoded {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            Image::gray(w, h, g.into_raw())
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            Image::rgb(w, h, rgb.into_raw())
        }
    };
    built.map_err(|e| input_err(path, e))
}

/// Writes grayscale frames as `0001.png`, `0002.png`, … under `dir`.
pub fn write_frames(dir: &Path, frames: &[Image]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime_err(dir, e))?;
    for (i, frame) in frames.iter().enumerate() {
        let path = dir.join(format!("{:04}.png", i + 1));
        let (w, h) = (frame.width() as u32, frame.height() as u32);
        let buf = image::GrayImage::from_raw(w, h, frame.data().to_vec())
            .expect("frame buffer matches its dimensions");
        buf.save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| runtime_err(&path, e))?;
    }
    Ok(())
}

//! Frame stacks stored as `frame_00000.png`, `frame_00001.png`, ...

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, ImageFormat};

use super::IoError;
use crate::volume::{Shape, Volume};

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

fn frame_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    (digits.len() >= 5 && digits.bytes().all(|b| b.is_ascii_digit())).then(|| digits.parse().ok())?
}

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let mut found = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| IoError::io(dir, e))? {
        let entry = entry.map_err(|e| IoError::io(dir, e))?;
        if let Some(i) = entry.file_name().to_str().and_then(frame_index) {
            found.insert(i, entry.path());
        }
    }
    if found.is_empty() {
        return Err(IoError::EmptyStack(dir.to_path_buf()));
    }
    let missing: Vec<String> = (0..=*found.keys().last().unwrap())
        .filter(|i| !found.contains_key(i))
        .map(frame_name)
        .collect();
    if !missing.is_empty() {
        return Err(IoError::NonContiguousIndices {
            missing: missing.join(", "),
        });
    }
    Ok(found.into_values().collect())
}

/// Stacks the frames in index order into `(F, H, W, C)` with `C = 1` for
/// 8-bit gray and `C = 3` for 8-bit RGB.
pub fn read_png_stack(dir: &Path) -> Result<Volume, IoError> {
    let paths = list_frames(dir)?;
    let mut data = Vec::new();
    let mut first: Option<(u32, u32, usize)> = None;
    for path in &paths {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let img = image::ImageReader::open(path)
            .map_err(|e| IoError::io(path, e))?
            .with_guessed_format()
            .map_err(|e| IoError::io(path, e))?
            .decode()
            .map_err(|e| IoError::Image(format!("{name}: {e}")))?;
        let (w, h) = (img.width(), img.height());
        let (channels, bytes) = match img {
            DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
            DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
            _ => return Err(IoError::UnsupportedPng(name)),
        };
        let this = (w, h, channels);
        match first {
            None => first = Some(this),
            Some(d) if d != this => {
                return Err(IoError::MixedDimensions {
                    name,
                    detail: format!(
                        "{}x{}x{} vs {}x{}x{} (HxWxC)",
                        this.1, this.0, this.2, d.1, d.0, d.2
                    ),
                })
            }
            _ => {}
        }
        data.extend_from_slice(&bytes);
    }
    let (w, h, c) = first.unwrap();
    Ok(Volume::from_u8(Shape::new(paths.len(), h as usize, w as usize, c), data)?)
}

/// Writes one PNG per frame. The directory is created if needed.
pub fn write_png_stack(dir: &Path, v: &Volume) -> Result<(), IoError> {
    let s = v.shape();
    let color = match s.channels {
        1 => ColorType::L8,
        3 => ColorType::Rgb8,
        _ => return Err(IoError::NotImage),
    };
    if v.as_u8().is_none() {
        return Err(IoError::NotImage);
    }
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    for f in 0..s.frames {
        let path = dir.join(frame_name(f));
        image::save_buffer_with_format(
            &path,
            v.frame_u8(f).unwrap(),
            s.width as u32,
            s.height as u32,
            color,
            ImageFormat::Png,
        )
        .map_err(|e| IoError::Image(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

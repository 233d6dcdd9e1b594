//! Image and mask files: PNG or binary PPM (P6) in, PNG out.

use std::io::{Cursor, Write};
use std::path::Path;

use image::{ImageFormat, ImageReader, RgbImage};
use rigidstyle::{ImageBuffer, Mask};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("encoding PNG: {0}")]
    Encode(#[source] image::ImageError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(#[from] rigidstyle::Error),
}

/// Reads an 8-bit RGB image (alpha dropped) and maps `v -> v / 255`.
pub fn read_image(path: &Path) -> Result<ImageBuffer, ImageIoError> {
    let decode_err = |source| ImageIoError::Decode { path: path.display().to_string(), source };
    let img = ImageReader::open(path)
        .map_err(|e| with_path(path, e))?
        .with_guessed_format()?
        .decode()
        .map_err(decode_err)?
        .to_rgb8();
    let data = img.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
    Ok(ImageBuffer::new(img.height() as usize, img.width() as usize, data)?)
}

/// Luminance at or above one half is inside the mask.
pub fn read_mask(path: &Path) -> Result<Mask, ImageIoError> {
    let decode_err = |source| ImageIoError::Decode { path: path.display().to_string(), source };
    let img = ImageReader::open(path)
        .map_err(|e| with_path(path, e))?
        .with_guessed_format()?
        .decode()
        .map_err(decode_err)?
        .to_luma8();
    let bits = img.as_raw().iter().map(|&v| v >= 128).collect();
    Ok(Mask::new(img.height() as usize, img.width() as usize, bits)?)
}

pub(crate) fn with_path(path: &Path, e: std::io::Error) -> std::io::Error {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

/// Round to nearest, ties away from zero.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn to_rgb8(img: &ImageBuffer) -> RgbImage {
    let raw = img.data().iter().map(|&v| quantize(v)).collect();
    RgbImage::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer matches dimensions")
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>, ImageIoError> {
    let mut buf = Cursor::new(Vec::new());
    to_rgb8(img).write_to(&mut buf, ImageFormat::Png).map_err(ImageIoError::Encode)?;
    Ok(buf.into_inner())
}

pub fn write_png(path: &Path, img: &ImageBuffer) -> Result<(), ImageIoError> {
    write_atomic(path, &encode_png(img)?).map_err(|e| with_path(path, e))?;
    Ok(())
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Places images left to right on a common height (top-aligned, black fill).
pub fn horizontal_strip(images: &[ImageBuffer]) -> Result<ImageBuffer, ImageIoError> {
    let height = images.iter().map(|i| i.height()).max().unwrap_or(0);
    let width: usize = images.iter().map(|i| i.width()).sum();
    let mut data = vec![0.0; height * width * 3];
    let mut x0 = 0;
    for img in images {
        for y in 0..img.height() {
            for x in 0..img.width() {
                for c in 0..3 {
                    data[(y * width + x0 + x) * 3 + c] = img.get(y, x, c);
                }
            }
        }
        x0 += img.width();
    }
    Ok(ImageBuffer::new(height, width, data)?)
}

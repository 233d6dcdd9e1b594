//! RGB images in `[0, 1]` and the raw (unclamped) image-domain helpers the
//! pipeline works with between codec levels.

use crate::error::{dim_err, Error, Result};
use crate::feature::FeatureMap;

/// `H x W x 3` image, interleaved, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    /// Builds an image from interleaved RGB values, clamping into `[0, 1]`.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width * 3 {
            return Err(dim_err(format!(
                "image of {height}x{width} needs {} values, got {}",
                height * width * 3,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite pixel value".into()));
        }
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self { height, width, data })
    }

    /// `f(y, x, channel)`; results are clamped.
    ///
    /// Panics on a zero dimension or a non-finite value.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, data).expect("valid image")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    /// Planar `3 x H x W` view.
    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap::from_fn(3, self.height, self.width, |c, y, x| self.get(y, x, c)).expect("valid image")
    }

    /// Clamps a raw `3 x H x W` map into an image.
    pub fn from_feature_map(f: &FeatureMap) -> Result<Self> {
        if f.channels() != 3 {
            return Err(dim_err(format!("an image needs 3 channels, got {}", f.channels())));
        }
        Ok(Self::from_fn(f.height(), f.width(), |y, x, c| f.get(c, y, x)))
    }

    pub fn resample_bilinear(&self, height: usize, width: usize) -> Result<Self> {
        Self::from_feature_map(&self.to_feature_map().resample_bilinear(height, width)?)
    }
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Pads bottom and right by reflection to `height x width`.
pub fn pad_reflect(f: &FeatureMap, height: usize, width: usize) -> Result<FeatureMap> {
    if height < f.height() || width < f.width() {
        return Err(dim_err("padding target is smaller than the input"));
    }
    FeatureMap::from_fn(f.channels(), height, width, |c, y, x| {
        f.get(c, reflect(y as isize, f.height()), reflect(x as isize, f.width()))
    })
}

/// Keeps the top-left `height x width` window.
pub fn crop(f: &FeatureMap, height: usize, width: usize) -> Result<FeatureMap> {
    if height > f.height() || width > f.width() || height == 0 || width == 0 {
        return Err(dim_err("crop window exceeds the input"));
    }
    FeatureMap::from_fn(f.channels(), height, width, |c, y, x| f.get(c, y, x))
}

/// Smallest multiple of `m` that is at least `n`.
pub fn round_up(n: usize, m: usize) -> usize {
    n.div_ceil(m) * m
}

/// Peak signal-to-noise ratio in dB for signals in `[0, 1]`. Identical
/// images give `f64::INFINITY`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if a.height != b.height || a.width != b.width {
        return Err(dim_err("psnr needs equally sized images"));
    }
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

//! Exactly invertible multi-level image codec.
//!
//! Level `l` applies `l` stages of [2x2 space-to-depth, then multiplication
//! of every pixel's channel vector by a fixed orthogonal matrix]. Stage `k`
//! works on `3 * 4^k` channels (12, 48, 192, 768), so a `H x W` RGB image
//! encodes to `3 * 4^l x H/2^l x W/2^l`. Every stage is an isometry and
//! decoding is the exact transpose, which makes self-stylization an
//! identity up to round-off.
//!
//! The mixing matrices are the orthogonal QR factors of seeded Gaussian
//! matrices with positive-diagonal `R`; the same seed always produces the
//! same tables.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::feature::FeatureMap;
use crate::image::ImageBuffer;
use crate::synth::haar_orthogonal;

pub const MAX_LEVEL: usize = 4;

/// Seed used when neither `--seed` nor `RIGIDSTYLE_SEED` is given.
pub const DEFAULT_SEED: u64 = 0x5EED_2019;

/// Channel count after `level` stages.
pub fn channels_at(level: usize) -> usize {
    3 * 4usize.pow(level as u32)
}

#[derive(Debug)]
pub struct Codec {
    seed: u64,
    stages: [OnceLock<DMatrix<f64>>; MAX_LEVEL],
}

impl Default for Codec {
    fn default() -> Self {
        Self::new(DEFAULT_SEED)
    }
}

fn check_level(level: usize) -> Result<()> {
    if (1..=MAX_LEVEL).contains(&level) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("codec level must be in 1..={MAX_LEVEL}, got {level}")))
    }
}

impl Codec {
    pub fn new(seed: u64) -> Self {
        Self { seed, stages: Default::default() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Orthogonal mixing matrix of stage `stage` (1-based), built on first use.
    pub fn mixing_matrix(&self, stage: usize) -> Result<&DMatrix<f64>> {
        check_level(stage)?;
        Ok(self.stages[stage - 1].get_or_init(|| {
            let stage_seed = self.seed ^ (stage as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(stage_seed);
            haar_orthogonal(&mut rng, channels_at(stage), false)
        }))
    }

    /// Encodes a raw `3 x H x W` map. `H` and `W` must be divisible by `2^level`.
    pub fn encode(&self, f: &FeatureMap, level: usize) -> Result<FeatureMap> {
        check_level(level)?;
        if f.channels() != 3 {
            return Err(dim_err(format!("codec input needs 3 channels, got {}", f.channels())));
        }
        let step = 1 << level;
        if f.height() % step != 0 || f.width() % step != 0 {
            return Err(dim_err(format!(
                "{}x{} is not divisible by {step} for level {level}",
                f.height(),
                f.width()
            )));
        }
        let mut cur = f.clone();
        for stage in 1..=level {
            let s2d = space_to_depth(&cur)?;
            let mixed = self.mixing_matrix(stage)? * s2d.to_matrix();
            cur = FeatureMap::from_matrix(&mixed, s2d.height(), s2d.width())?;
        }
        Ok(cur)
    }

    pub fn encode_image(&self, img: &ImageBuffer, level: usize) -> Result<FeatureMap> {
        self.encode(&img.to_feature_map(), level)
    }

    /// Exact inverse of [`Codec::encode`], without clamping.
    pub fn decode_raw(&self, f: &FeatureMap, level: usize) -> Result<FeatureMap> {
        check_level(level)?;
        if f.channels() != channels_at(level) {
            return Err(dim_err(format!(
                "level {level} features need {} channels, got {}",
                channels_at(level),
                f.channels()
            )));
        }
        let mut cur = f.clone();
        for stage in (1..=level).rev() {
            let unmixed = self.mixing_matrix(stage)?.transpose() * cur.to_matrix();
            cur = depth_to_space(&FeatureMap::from_matrix(&unmixed, cur.height(), cur.width())?)?;
        }
        Ok(cur)
    }

    /// [`Codec::decode_raw`] followed by clamping into an image.
    pub fn decode(&self, f: &FeatureMap, level: usize) -> Result<ImageBuffer> {
        ImageBuffer::from_feature_map(&self.decode_raw(f, level)?)
    }
}

/// `C x H x W -> 4C x H/2 x W/2`; output channel `4c + 2dy + dx` holds input
/// channel `c` at offset `(dy, dx)` of each 2x2 block.
fn space_to_depth(f: &FeatureMap) -> Result<FeatureMap> {
    let (c, h, w) = f.shape();
    FeatureMap::from_fn(4 * c, h / 2, w / 2, |oc, y, x| {
        let (ic, k) = (oc / 4, oc % 4);
        f.get(ic, 2 * y + k / 2, 2 * x + k % 2)
    })
}

fn depth_to_space(f: &FeatureMap) -> Result<FeatureMap> {
    let (c, h, w) = f.shape();
    FeatureMap::from_fn(c / 4, 2 * h, 2 * w, |ic, y, x| {
        f.get(4 * ic + 2 * (y % 2) + x % 2, y / 2, x / 2)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::texture;

    fn max_abs(a: &FeatureMap, b: &FeatureMap) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn mixing_matrices_are_orthogonal_and_seeded() {
        let codec = Codec::default();
        for stage in 1..=MAX_LEVEL {
            let o = codec.mixing_matrix(stage).unwrap();
            let n = channels_at(stage);
            assert_eq!(o.shape(), (n, n));
            assert!((o.transpose() * o - DMatrix::identity(n, n)).amax() < 1e-6);
        }
        let again = Codec::default();
        assert_eq!(codec.mixing_matrix(2).unwrap(), again.mixing_matrix(2).unwrap());
        assert_ne!(codec.mixing_matrix(2).unwrap(), Codec::new(1).mixing_matrix(2).unwrap());
    }

    #[test]
    fn encode_shape() {
        let f = Codec::default().encode_image(&texture(1, 32, 32), 2).unwrap();
        assert_eq!(f.shape(), (48, 8, 8));
    }

    #[test]
    fn round_trip_and_isometry_all_levels() {
        let codec = Codec::default();
        let img = texture(2, 32, 48).to_feature_map();
        for level in 1..=MAX_LEVEL {
            let z = codec.encode(&img, level).unwrap();
            assert!((z.frobenius_norm() - img.frobenius_norm()).abs() <= 1e-5 * img.frobenius_norm());
            let back = codec.decode_raw(&z, level).unwrap();
            assert!(max_abs(&back, &img) < 1e-5, "level {level}");
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let codec = Codec::default();
        let zero = FeatureMap::zeros(3, 16, 16).unwrap();
        let z = codec.encode(&zero, 3).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let img = codec.decode(&z, 3).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn perturbation_is_not_amplified() {
        let codec = Codec::default();
        let z = codec.encode(&texture(3, 16, 16).to_feature_map(), 2).unwrap();
        let delta = FeatureMap::from_fn(48, 4, 4, |c, y, x| ((c * 7 + y * 3 + x) % 5) as f64 * 0.01).unwrap();
        let moved = z.map_with(&delta, |a, b| a + b);
        let a = codec.decode_raw(&z, 2).unwrap();
        let b = codec.decode_raw(&moved, 2).unwrap();
        let diff = a.map_with(&b, |x, y| x - y).frobenius_norm();
        assert!(diff <= delta.frobenius_norm() * (1.0 + 1e-9));
    }

    #[test]
    fn rejects_bad_shapes() {
        let codec = Codec::default();
        let f = FeatureMap::zeros(3, 12, 16).unwrap();
        assert!(matches!(codec.encode(&f, 3), Err(Error::Dimension(_))));
        assert!(codec.encode(&f, 5).is_err());
        let wrong = FeatureMap::zeros(12, 4, 4).unwrap();
        assert!(matches!(codec.decode_raw(&wrong, 2), Err(Error::Dimension(_))));
    }
}

//! Multi-level stylization cascade.
//!
//! The content image is encoded at the deepest configured level, transformed
//! against the style features of that level, decoded, and the result is fed
//! as the new content into the next (shallower) level. Levels listed in
//! `ra_levels` run the configured deepest operation (moment matching then
//! rigid alignment by default); the others run moment matching only.

use rayon::prelude::*;

use crate::align::{self, AlignOptions, Mask, DEFAULT_EPS};
use crate::codec::{Codec, MAX_LEVEL};
use crate::error::{dim_err, Error, Result};
use crate::feature::FeatureMap;
use crate::image::{crop, pad_reflect, round_up, ImageBuffer};

/// Transform run at the levels listed in [`PipelineConfig::ra_levels`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeepestOp {
    /// Moment matching, then rigid alignment of the style onto the
    /// moment-matched content.
    #[default]
    MmThenRa,
    /// Rigid alignment onto the raw content features.
    RaOnly,
    /// Moment matching only.
    MmOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Strictly descending subset of `1..=4`.
    pub levels: Vec<usize>,
    pub deepest_op: DeepestOp,
    pub ra_levels: Vec<usize>,
    /// Content weight of the final blend at every level.
    pub alpha: f64,
    pub align: AlignOptions,
    pub eps: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            levels: vec![4, 3, 2, 1],
            deepest_op: DeepestOp::MmThenRa,
            ra_levels: vec![4],
            alpha: 0.0,
            align: AlignOptions::default(),
            eps: DEFAULT_EPS,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.levels.is_empty() {
            return bad("at least one level is required".into());
        }
        if self.levels.iter().any(|l| !(1..=MAX_LEVEL).contains(l)) {
            return bad(format!("levels must lie in 1..={MAX_LEVEL}, got {:?}", self.levels));
        }
        if self.levels.windows(2).any(|w| w[0] <= w[1]) {
            return bad(format!("levels must be strictly descending, got {:?}", self.levels));
        }
        if let Some(l) = self.ra_levels.iter().find(|l| !self.levels.contains(l)) {
            return bad(format!("ra level {l} is not one of the levels {:?}", self.levels));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.align.tau >= 0.0 && self.align.tau < 1.0) {
            return bad(format!("tau must lie in [0, 1), got {}", self.align.tau));
        }
        Ok(())
    }

    fn deepest(&self) -> usize {
        self.levels[0]
    }
}

#[derive(Debug, Clone)]
pub struct StyleEntry {
    pub image: ImageBuffer,
    pub weight: f64,
    pub mask: Option<Mask>,
}

/// One or more styles; weights are normalised to sum to one.
#[derive(Debug, Clone)]
pub struct StyleSpec {
    entries: Vec<StyleEntry>,
}

impl StyleSpec {
    pub fn new(mut entries: Vec<StyleEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidConfig("at least one style is required".into()));
        }
        if entries.iter().any(|e| !(e.weight >= 0.0 && e.weight.is_finite())) {
            return Err(Error::InvalidConfig("style weights must be finite and non-negative".into()));
        }
        let total: f64 = entries.iter().map(|e| e.weight).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidConfig("style weights sum to zero".into()));
        }
        for e in &mut entries {
            e.weight /= total;
        }
        Ok(Self { entries })
    }

    pub fn single(image: ImageBuffer) -> Self {
        Self { entries: vec![StyleEntry { image, weight: 1.0, mask: None }] }
    }

    /// `beta` on the first style, `1 - beta` on the second.
    pub fn pair(first: ImageBuffer, second: ImageBuffer, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidConfig(format!("beta must lie in [0, 1], got {beta}")));
        }
        Ok(Self {
            entries: vec![
                StyleEntry { image: first, weight: beta, mask: None },
                StyleEntry { image: second, weight: 1.0 - beta, mask: None },
            ],
        })
    }

    /// Each style restricted to its own region; uncovered sites keep the
    /// content.
    pub fn masked(regions: Vec<(ImageBuffer, Mask)>) -> Result<Self> {
        Self::new(
            regions
                .into_iter()
                .map(|(image, mask)| StyleEntry { image, weight: 1.0, mask: Some(mask) })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[StyleEntry] {
        &self.entries
    }
}

#[derive(Debug, Clone)]
pub struct StylizeOutput {
    pub image: ImageBuffer,
    /// Levels where alignment was degenerate and moment matching was used
    /// instead.
    pub warnings: Vec<String>,
}

fn apply_op(
    op: DeepestOp,
    zc: &FeatureMap,
    zs: &FeatureMap,
    cfg: &PipelineConfig,
) -> Result<FeatureMap> {
    let ra = |target: &FeatureMap| align::rigid_align_with(target, zs, &cfg.align).map(|(f, _)| f);
    match op {
        DeepestOp::MmOnly => align::moment_match(zc, zs, cfg.eps),
        DeepestOp::MmThenRa => ra(&align::moment_match(zc, zs, cfg.eps)?),
        DeepestOp::RaOnly => ra(zc),
    }
}

fn reconcile(zc: &FeatureMap, zs: &FeatureMap) -> Result<FeatureMap> {
    if zc.channels() != zs.channels() {
        return Err(dim_err(format!(
            "content has {} channels, style has {}",
            zc.channels(),
            zs.channels()
        )));
    }
    zs.resample_bilinear(zc.height(), zc.width())
}

/// Single-level transform `T(z_c, z_s)` exactly as run at the deepest level
/// of [`stylize`]. Style features are resampled to the content grid when the
/// spatial sizes differ.
pub fn transform_features(zc: &FeatureMap, zs: &FeatureMap, cfg: &PipelineConfig) -> Result<FeatureMap> {
    cfg.validate()?;
    apply_op(cfg.deepest_op, zc, &reconcile(zc, zs)?, cfg)
}

fn transform_at_level(
    level: usize,
    zc: &FeatureMap,
    zs: &FeatureMap,
    cfg: &PipelineConfig,
    warnings: &mut Vec<String>,
) -> Result<FeatureMap> {
    if !cfg.ra_levels.contains(&level) {
        return align::moment_match(zc, zs, cfg.eps);
    }
    match apply_op(cfg.deepest_op, zc, zs, cfg) {
        Err(Error::DegenerateAlignment(msg)) => {
            warnings.push(format!("level {level}: {msg}; fell back to moment matching"));
            align::moment_match(zc, zs, cfg.eps)
        }
        other => other,
    }
}

fn pad_mask(mask: &Mask, height: usize, width: usize, ph: usize, pw: usize) -> Result<Mask> {
    let m = mask.resample_nearest(height, width)?;
    let values = m.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let padded = pad_reflect(&FeatureMap::new(1, height, width, values)?, ph, pw)?;
    Mask::from_values(ph, pw, padded.data())
}

struct PreparedStyle {
    raw: FeatureMap,
    weight: f64,
    mask: Option<Mask>,
}

fn combine(zc: &FeatureMap, styled: &[FeatureMap], styles: &[PreparedStyle]) -> Result<FeatureMap> {
    let free: Vec<_> = styles.iter().zip(styled).filter(|(s, _)| s.mask.is_none()).collect();
    let fallback = if free.is_empty() {
        zc.clone()
    } else {
        let total: f64 = free.iter().map(|(s, _)| s.weight).sum();
        let terms: Vec<_> = free.iter().map(|(s, f)| (s.weight / total, *f)).collect();
        align::weighted_sum(&terms)?
    };
    let regions: Vec<_> = styles
        .iter()
        .zip(styled)
        .filter_map(|(s, f)| s.mask.as_ref().map(|m| (m.clone(), f.clone())))
        .collect();
    if regions.is_empty() {
        Ok(fallback)
    } else {
        align::spatial_composite(&regions, &fallback)
    }
}

/// Runs the cascade. Images are reflection-padded to a multiple of
/// `2^deepest_level` for the codec and cropped back afterwards; styles are
/// bilinearly resampled to the content size first.
pub fn stylize(
    codec: &Codec,
    content: &ImageBuffer,
    styles: &StyleSpec,
    cfg: &PipelineConfig,
) -> Result<StylizeOutput> {
    cfg.validate()?;
    let (h, w) = (content.height(), content.width());
    let step = 1 << cfg.deepest();
    let (ph, pw) = (round_up(h, step), round_up(w, step));

    let prepared = styles
        .entries()
        .iter()
        .map(|e| {
            let img = e.image.resample_bilinear(h, w)?;
            Ok(PreparedStyle {
                raw: pad_reflect(&img.to_feature_map(), ph, pw)?,
                weight: e.weight,
                mask: e.mask.as_ref().map(|m| pad_mask(m, h, w, ph, pw)).transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut warnings = Vec::new();
    let mut current = pad_reflect(&content.to_feature_map(), ph, pw)?;
    for &level in &cfg.levels {
        let zc = codec.encode(&current, level)?;
        let styled = prepared
            .iter()
            .map(|s| {
                let zs = codec.encode(&s.raw, level)?;
                transform_at_level(level, &zc, &zs, cfg, &mut warnings)
            })
            .collect::<Result<Vec<_>>>()?;
        let mixed = combine(&zc, &styled, &prepared)?;
        let out = align::blend(&zc, &mixed, cfg.alpha)?;
        current = codec.decode_raw(&out, level)?;
    }
    let image = ImageBuffer::from_feature_map(&crop(&current, h, w)?)?;
    Ok(StylizeOutput { image, warnings })
}

/// Independent per-frame stylization; frames run in parallel and come back
/// in input order.
pub fn stylize_video(
    codec: &Codec,
    frames: &[ImageBuffer],
    styles: &StyleSpec,
    cfg: &PipelineConfig,
) -> Result<Vec<StylizeOutput>> {
    cfg.validate()?;
    if let Some(first) = frames.first() {
        if let Some(i) = frames
            .iter()
            .position(|f| f.height() != first.height() || f.width() != first.width())
        {
            return Err(Error::Frame {
                index: i,
                source: Box::new(dim_err("frame size differs from frame 0")),
            });
        }
    }
    let results: Vec<_> = frames.par_iter().map(|f| stylize(codec, f, styles, cfg)).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Frame { index, source: Box::new(e) }))
        .collect()
}

fn image_diff_norm(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Relative difference `||a - b|| / ||b||` between two images.
pub fn relative_difference(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(dim_err("images differ in size"));
    }
    let norm = b.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(image_diff_norm(a, b) / norm.max(f64::MIN_POSITIVE))
}

/// For consecutive frame pairs, `||out_i+1 - out_i|| / ||in_i+1 - in_i||`:
/// how much the stylization amplifies frame-to-frame change. Pairs of
/// identical input frames report 0 when their outputs agree, else infinity.
pub fn frame_amplification(inputs: &[ImageBuffer], outputs: &[ImageBuffer]) -> Result<Vec<f64>> {
    if inputs.len() != outputs.len() {
        return Err(dim_err("input and output frame counts differ"));
    }
    Ok(inputs
        .windows(2)
        .zip(outputs.windows(2))
        .map(|(i, o)| {
            let din = image_diff_norm(&i[0], &i[1]);
            let dout = image_diff_norm(&o[0], &o[1]);
            if din > 0.0 {
                dout / din
            } else if dout == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect())
}

/// Relative image difference between running the deepest operation at every
/// level and only at the deepest level.
#[derive(Debug, Clone, Copy)]
pub struct PlacementReport {
    pub relative_difference: f64,
    pub psnr_db: f64,
}

pub fn ra_placement_ablation(
    codec: &Codec,
    content: &ImageBuffer,
    styles: &StyleSpec,
    cfg: &PipelineConfig,
) -> Result<PlacementReport> {
    let deepest_only = PipelineConfig { ra_levels: vec![cfg.levels[0]], ..cfg.clone() };
    let everywhere = PipelineConfig { ra_levels: cfg.levels.clone(), ..cfg.clone() };
    let a = stylize(codec, content, styles, &everywhere)?.image;
    let b = stylize(codec, content, styles, &deepest_only)?.image;
    Ok(PlacementReport {
        relative_difference: relative_difference(&a, &b)?,
        psnr_db: crate::image::psnr(&a, &b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::AxisConfig;
    use crate::image::psnr;
    use crate::synth::{scene, texture};

    fn small_cfg() -> PipelineConfig {
        PipelineConfig { levels: vec![3, 2, 1], ra_levels: vec![3], ..PipelineConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let mut c = PipelineConfig { levels: vec![3, 4], ..PipelineConfig::default() };
        assert!(c.validate().is_err());
        c.levels = vec![];
        assert!(c.validate().is_err());
        c = PipelineConfig { ra_levels: vec![2], levels: vec![4, 3], ..PipelineConfig::default() };
        assert!(c.validate().is_err());
        c = PipelineConfig { alpha: 1.2, ..PipelineConfig::default() };
        assert!(c.validate().is_err());
        c = PipelineConfig { levels: vec![5], ra_levels: vec![], ..PipelineConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn style_spec_normalises() {
        let img = scene(1, 8, 8);
        let spec = StyleSpec::new(vec![
            StyleEntry { image: img.clone(), weight: 3.0, mask: None },
            StyleEntry { image: img.clone(), weight: 1.0, mask: None },
        ])
        .unwrap();
        assert_eq!(spec.entries()[0].weight, 0.75);
        assert!(StyleSpec::new(vec![]).is_err());
        assert!(StyleSpec::new(vec![StyleEntry { image: img, weight: 0.0, mask: None }]).is_err());
    }

    #[test]
    fn self_style_reproduces_content() {
        let codec = Codec::default();
        let content = scene(4, 48, 40);
        let out = stylize(&codec, &content, &StyleSpec::single(content.clone()), &small_cfg()).unwrap();
        assert!(out.warnings.is_empty());
        assert!(psnr(&out.image, &content).unwrap() >= 50.0);
    }

    #[test]
    fn alpha_one_reproduces_content() {
        let codec = Codec::default();
        let content = scene(5, 32, 32);
        let cfg = PipelineConfig { alpha: 1.0, ..small_cfg() };
        let out = stylize(&codec, &content, &StyleSpec::single(texture(6, 40, 24)), &cfg).unwrap();
        assert!(psnr(&out.image, &content).unwrap() >= 50.0);
    }

    #[test]
    fn transform_dispatch() {
        let codec = Codec::default();
        let zc = codec.encode_image(&scene(7, 16, 16), 2).unwrap();
        let zs = codec.encode_image(&texture(8, 16, 16), 2).unwrap();
        let cfg = PipelineConfig::default();
        let same = transform_features(&zc, &zc, &cfg).unwrap();
        let rel = same.map_with(&zc, |a, b| a - b).frobenius_norm() / zc.frobenius_norm();
        assert!(rel < 1e-6);

        let mm = PipelineConfig { deepest_op: DeepestOp::MmOnly, ..cfg.clone() };
        assert_eq!(
            transform_features(&zc, &zs, &mm).unwrap(),
            align::moment_match(&zc, &zs, cfg.eps).unwrap()
        );

        let chw = transform_features(&zc, &zs, &cfg).unwrap();
        let mut hwc_cfg = cfg.clone();
        hwc_cfg.align.axis = AxisConfig::PixelsAsPoints;
        let hwc = transform_features(&zc, &zs, &hwc_cfg).unwrap();
        assert!(chw.map_with(&hwc, |a, b| a - b).frobenius_norm() > 1e-3 * chw.frobenius_norm());
    }

    #[test]
    fn transform_resamples_style_grid() {
        let codec = Codec::default();
        let zc = codec.encode_image(&scene(9, 16, 16), 2).unwrap();
        let zs = codec.encode_image(&texture(10, 32, 16), 2).unwrap();
        let out = transform_features(&zc, &zs, &PipelineConfig::default()).unwrap();
        assert_eq!(out.shape(), zc.shape());
        let wrong = codec.encode_image(&texture(10, 16, 16), 1).unwrap();
        assert!(matches!(
            transform_features(&zc, &wrong, &PipelineConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn degenerate_level_falls_back_with_warning() {
        let codec = Codec::default();
        let content = scene(11, 16, 16);
        let flat = ImageBuffer::from_fn(16, 16, |_, _, _| 0.0);
        let cfg = PipelineConfig { levels: vec![2, 1], ra_levels: vec![2], ..PipelineConfig::default() };
        let out = stylize(&codec, &content, &StyleSpec::single(flat), &cfg).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].starts_with("level 2"));
    }

    #[test]
    fn odd_sizes_are_padded_and_cropped() {
        let codec = Codec::default();
        let content = scene(12, 21, 13);
        let out = stylize(&codec, &content, &StyleSpec::single(texture(13, 9, 30)), &small_cfg()).unwrap();
        assert_eq!((out.image.height(), out.image.width()), (21, 13));
    }

    #[test]
    fn masks_partition_the_image() {
        let codec = Codec::default();
        let content = scene(14, 32, 32);
        let (s1, s2) = (texture(15, 32, 32), texture(16, 32, 32));
        let left = Mask::from_fn(32, 32, |_, x| x < 16).unwrap();
        // Single level: later levels recompute global channel statistics, so
        // the stitch is only sitewise-exact within one level. The split at
        // x = 16 falls on a 4-pixel codec block boundary.
        let cfg = PipelineConfig { levels: vec![2], ra_levels: vec![2], ..PipelineConfig::default() };
        let spec = StyleSpec::masked(vec![(s1.clone(), left.clone()), (s2.clone(), left.complement())]).unwrap();
        let masked = stylize(&codec, &content, &spec, &cfg).unwrap().image;
        let full1 = stylize(&codec, &content, &StyleSpec::single(s1), &cfg).unwrap().image;
        for y in 0..32 {
            for x in 0..16 {
                for c in 0..3 {
                    assert!((masked.get(y, x, c) - full1.get(y, x, c)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn video_is_ordered_and_deterministic() {
        let codec = Codec::default();
        let frames = vec![scene(20, 16, 16), scene(21, 16, 16), scene(20, 16, 16)];
        let spec = StyleSpec::single(texture(22, 16, 16));
        let cfg = PipelineConfig { levels: vec![2, 1], ra_levels: vec![2], ..PipelineConfig::default() };
        let out = stylize_video(&codec, &frames, &spec, &cfg).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].image, out[2].image);
        assert_eq!(out[1].image, stylize(&codec, &frames[1], &spec, &cfg).unwrap().image);

        let bad = vec![scene(1, 16, 16), scene(2, 8, 16)];
        assert!(matches!(stylize_video(&codec, &bad, &spec, &cfg), Err(Error::Frame { index: 1, .. })));
    }
}

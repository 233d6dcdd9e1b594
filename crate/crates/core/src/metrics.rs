//! Gram-based content/style losses and a wall-clock timing harness.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::{self, AlignOptions};
use crate::codec::Codec;
use crate::error::{dim_err, Error, Result};
use crate::feature::FeatureMap;
use crate::pipeline::{self, PipelineConfig, StyleSpec};
use crate::synth::{gaussian_matrix, scene, texture};

/// Unnormalised Gram matrix `Z Z^T` of the `C x HW` flattening.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(pub DMatrix<f64>);

impl GramMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }
}

pub fn gram(f: &FeatureMap) -> GramMatrix {
    let z = f.to_matrix();
    GramMatrix(&z * z.transpose())
}

/// `1 / (2 C H W) * sum (z_c - z)^2`.
pub fn content_loss(content: &FeatureMap, z: &FeatureMap) -> Result<f64> {
    content.ensure_same_shape(z, "content_loss")?;
    let n = content.data().len() as f64;
    let sq: f64 = content.data().iter().zip(z.data()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(sq / (2.0 * n))
}

/// `1 / (4 C^2 H^2 W^2) * sum (G(z_s) - G(z))^2`, with `C, H, W` taken from
/// `z`. The two maps must agree in `C` and in `H * W`.
pub fn style_loss(style: &FeatureMap, z: &FeatureMap) -> Result<f64> {
    if style.channels() != z.channels() || style.spatial() != z.spatial() {
        return Err(dim_err(format!(
            "style_loss needs equal C and H*W, got {:?} and {:?}",
            style.shape(),
            z.shape()
        )));
    }
    let diff = gram(style).0 - gram(z).0;
    let n = (z.channels() * z.spatial()) as f64;
    Ok(diff.norm_squared() / (4.0 * n * n))
}

#[derive(Debug, Clone)]
pub struct TimingReport {
    pub label: String,
    pub dims: String,
    /// Wall-clock seconds, one per timed repetition (warm-up excluded).
    pub samples: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
}

impl TimingReport {
    fn from_samples(label: &str, dims: &str, samples: Vec<f64>) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self { label: label.into(), dims: dims.into(), samples, mean, std_dev: var.sqrt() }
    }

    /// `std_dev / mean`.
    pub fn relative_spread(&self) -> f64 {
        if self.mean > 0.0 {
            self.std_dev / self.mean
        } else {
            0.0
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "{:<24} {:<18} n={:<3} mean={:.6}s std={:.6}s ({:.1}%)",
            self.label,
            self.dims,
            self.samples.len(),
            self.mean,
            self.std_dev,
            100.0 * self.relative_spread()
        )
    }

    /// Single `key=value` line.
    pub fn to_key_values(&self) -> String {
        let mut s = format!(
            "label={} dims={} reps={} mean_s={:.9} std_s={:.9} rel_std={:.6}",
            self.label,
            self.dims,
            self.samples.len(),
            self.mean,
            self.std_dev,
            self.relative_spread()
        );
        let samples: Vec<_> = self.samples.iter().map(|v| format!("{v:.9}")).collect();
        let _ = write!(s, " samples={}", samples.join(","));
        s
    }
}

/// Times `f` `repetitions` times after one discarded warm-up call.
pub fn bench<T>(label: &str, dims: &str, repetitions: usize, mut f: impl FnMut() -> Result<T>) -> Result<TimingReport> {
    if repetitions < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 repetitions, got {repetitions}")));
    }
    std::hint::black_box(f()?);
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t = Instant::now();
        std::hint::black_box(f()?);
        samples.push(t.elapsed().as_secs_f64());
    }
    Ok(TimingReport::from_samples(label, dims, samples))
}

fn random_features(rng: &mut ChaCha8Rng, channels: usize, dim: usize) -> FeatureMap {
    FeatureMap::from_matrix(&gaussian_matrix(rng, channels, dim), 1, dim).expect("finite gaussian data")
}

#[derive(Debug, Clone)]
pub struct PathComparison {
    pub thin: TimingReport,
    pub dense: TimingReport,
    /// `dense.mean / thin.mean`.
    pub speedup: f64,
}

/// Thin-factor rigid alignment against the dense `D x D` SVD reference on
/// seeded Gaussian clouds of `channels` points in `R^dim`.
pub fn bench_alignment_paths(channels: usize, dim: usize, repetitions: usize, seed: u64) -> Result<PathComparison> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zc = random_features(&mut rng, channels, dim);
    let zs = random_features(&mut rng, channels, dim);
    let opts = AlignOptions::default();
    let dims = format!("C={channels},D={dim}");
    let thin = bench("rigid_align_thin", &dims, repetitions, || align::rigid_align_with(&zc, &zs, &opts))?;
    let dense = bench("rigid_align_dense", &dims, repetitions, || align::rigid_align_dense(&zc, &zs, &opts))?;
    let speedup = dense.mean / thin.mean.max(f64::MIN_POSITIVE);
    Ok(PathComparison { thin, dense, speedup })
}

/// Single-level `transform_features` on seeded Gaussian features.
pub fn bench_transform(
    channels: usize,
    height: usize,
    width: usize,
    repetitions: usize,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<TimingReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zc = FeatureMap::from_matrix(&gaussian_matrix(&mut rng, channels, height * width), height, width)?;
    let zs = FeatureMap::from_matrix(&gaussian_matrix(&mut rng, channels, height * width), height, width)?;
    bench(
        "transform_features",
        &format!("C={channels},H={height},W={width}"),
        repetitions,
        || pipeline::transform_features(&zc, &zs, cfg),
    )
}

/// Full cascade on a seeded procedural content/style pair.
pub fn bench_stylize(
    codec: &Codec,
    height: usize,
    width: usize,
    repetitions: usize,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<TimingReport> {
    let content = scene(seed, height, width);
    let style = StyleSpec::single(texture(seed.wrapping_add(1), height, width));
    bench("stylize", &format!("{height}x{width}"), repetitions, || {
        pipeline::stylize(codec, &content, &style, cfg)
    })
}

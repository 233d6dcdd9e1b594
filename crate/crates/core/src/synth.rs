//! Seeded random matrices and procedural test images.
//!
//! Used by the codec tables, the benchmark harness and the test suites, so
//! every consumer draws from the same reproducible generators.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::image::ImageBuffer;

/// `rows x cols` matrix of independent standard normal draws, filled row by
/// row.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

/// Orthogonal factor of the QR decomposition of a Gaussian matrix, with
/// column signs fixed so the triangular factor has a positive diagonal
/// (Haar-distributed). With `random_reflection` the first column is negated
/// with probability one half, so both determinant signs occur.
pub fn haar_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize, random_reflection: bool) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, n, n).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if random_reflection && rng.random_bool(0.5) {
        q.column_mut(0).neg_mut();
    }
    q
}

fn palette<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]
}

/// Smooth two-colour gradient with a handful of solid discs and boxes on
/// top: structured content with large flat regions and sharp edges.
pub fn scene(seed: u64, height: usize, width: usize) -> ImageBuffer {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (top, bottom) = (palette(&mut rng), palette(&mut rng));
    let shapes: Vec<_> = (0..6)
        .map(|_| {
            let cy = rng.random::<f64>() * height as f64;
            let cx = rng.random::<f64>() * width as f64;
            let r = (0.05 + 0.2 * rng.random::<f64>()) * height.min(width) as f64;
            let disc = rng.random_bool(0.5);
            (cy, cx, r, disc, palette(&mut rng))
        })
        .collect();
    ImageBuffer::from_fn(height, width, |y, x, c| {
        let t = y as f64 / height.max(2) as f64;
        let mut v = top[c] * (1.0 - t) + bottom[c] * t;
        for &(cy, cx, r, disc, col) in &shapes {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let inside = if disc { dy * dy + dx * dx < r * r } else { dy.abs() < r && dx.abs() < 0.6 * r };
            if inside {
                v = col[c];
            }
        }
        v
    })
}

/// Oriented sinusoidal stripes in a random palette with additive noise:
/// a texture with strong second-order structure.
pub fn texture(seed: u64, height: usize, width: usize) -> ImageBuffer {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (palette(&mut rng), palette(&mut rng));
    let theta = rng.random::<f64>() * std::f64::consts::PI;
    let freq = 0.05 + 0.3 * rng.random::<f64>();
    let (s, c) = theta.sin_cos();
    let noise: Vec<f64> = (0..height * width * 3).map(|_| rng.random::<f64>() - 0.5).collect();
    ImageBuffer::from_fn(height, width, |y, x, ch| {
        let phase = (freq * (c * x as f64 + s * y as f64)).sin() * 0.5 + 0.5;
        a[ch] * phase + b[ch] * (1.0 - phase) + 0.15 * noise[(y * width + x) * 3 + ch]
    })
}

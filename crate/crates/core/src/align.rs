//! Feature transforms: channel-wise moment matching, closed-form rigid
//! alignment of the style point cloud onto the content point cloud, and the
//! convex combinators behind the user controls.
//!
//! Rigid alignment follows four steps on the `C x HW` channel clouds:
//! shift both clouds to their centroids, bring them to unit Frobenius scale,
//! rotate the style cloud by the orthogonal `Q` maximising
//! `trace(zc^T zs Q)`, then rescale to the content norm and shift onto the
//! content centroid. `Q = V U^T` for the SVD `zc^T zs = U S V^T`.
//!
//! `zc^T zs` is `D x D` with `D = H*W` but has rank at most `min(N, D)`, so
//! the solve never forms it. Both clouds are factored as
//! `z^T = Q_z R_z` (thin QR, `D x k`), the small `k x k` core `R_c R_s^T` is
//! decomposed, and its factors are lifted back through `Q_c` and `Q_s`.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::feature::{channel_stats, AxisConfig, FeatureMap, PointCloud};
use crate::linalg;

/// Floor on the per-channel standard deviation of the content in
/// [`moment_match`].
pub const DEFAULT_EPS: f64 = 1e-5;

/// Singular directions below `tau * s_1` are dropped from the rotation.
pub const DEFAULT_TAU: f64 = 1e-7;

/// Largest singular value of the cross-covariance below which the alignment
/// is reported as degenerate.
pub const DEGENERATE_FLOOR: f64 = 1e-12;

/// Which Frobenius norm normalises a cloud before rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleVariant {
    /// Norm of the centered cloud (standard Procrustes).
    #[default]
    Centered,
    /// Norm of the raw, uncentered cloud.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignOptions {
    pub variant: ScaleVariant,
    pub axis: AxisConfig,
    pub tau: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            variant: ScaleVariant::Centered,
            axis: AxisConfig::ChannelsAsPoints,
            tau: DEFAULT_TAU,
        }
    }
}

/// Matches the per-channel mean and standard deviation of `content` to those
/// of `style`. The content deviation is floored at `eps`.
pub fn moment_match(content: &FeatureMap, style: &FeatureMap, eps: f64) -> Result<FeatureMap> {
    if content.channels() != style.channels() {
        return Err(dim_err(format!(
            "moment matching needs equal channel counts, got {} and {}",
            content.channels(),
            style.channels()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let cs = channel_stats(content);
    let ss = channel_stats(style);
    let c_std = cs.std_dev();
    let s_std = ss.std_dev();

    let mut data = Vec::with_capacity(content.data().len());
    for c in 0..content.channels() {
        let gain = s_std[c] / c_std[c].max(eps);
        let (mu_c, mu_s) = (cs.mean[c], ss.mean[c]);
        data.extend(content.channel(c).iter().map(|v| (v - mu_c) * gain + mu_s));
    }
    Ok(content.with_data(data))
}

/// Thin factors of the cross-covariance `A = zc^T zs = U_r S_r V_r^T`,
/// representing the rotation `Q = V_r U_r^T`.
#[derive(Debug, Clone)]
pub struct ThinRotation {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    singular_values: Vec<f64>,
}

impl ThinRotation {
    /// Left factor `U_r`, `D x r`.
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Right factor `V_r`, `D x r`.
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Retained singular values, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Ambient dimension `D`.
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// Right-multiplies the rows of `points` (`N x D`) by `Q`.
    pub fn apply(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        (points * &self.v) * self.u.transpose()
    }

    /// `V_r U_r^T` as a dense `D x D` matrix. Orthogonal when `r = D`;
    /// otherwise the rotation restricted to the retained subspace.
    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.v * self.u.transpose()
    }
}

/// Everything needed to replay a rigid alignment.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub rotation: ThinRotation,
    pub content_centroid: DVector<f64>,
    pub style_centroid: DVector<f64>,
    pub content_scale: f64,
    pub style_scale: f64,
}

impl AlignmentResult {
    pub fn rank(&self) -> usize {
        self.rotation.rank()
    }
}

fn ensure_centered(pc: &PointCloud, which: &str) -> Result<()> {
    let scale = pc.matrix().amax().max(f64::MIN_POSITIVE);
    let off = pc.centroid().amax();
    if off > 1e-6 * scale {
        return Err(Error::InvalidInput(format!(
            "{which} cloud is not centered (centroid max-abs {off:e})"
        )));
    }
    Ok(())
}

/// Solves `argmax_Q trace(zc^T zs Q)` over orthogonal `Q` for two centered
/// clouds of equal shape, returning the thin SVD factors of `zc^T zs`.
pub fn solve_rotation(content: &PointCloud, style: &PointCloud, tau: f64) -> Result<ThinRotation> {
    if content.len() != style.len() || content.dim() != style.dim() {
        return Err(dim_err(format!(
            "point clouds differ in shape: {}x{} vs {}x{}",
            content.len(),
            content.dim(),
            style.len(),
            style.dim()
        )));
    }
    if content.is_empty() || content.dim() == 0 {
        return Err(dim_err("empty point cloud"));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidInput(format!("rank tolerance must lie in [0, 1), got {tau}")));
    }
    ensure_centered(content, "content")?;
    ensure_centered(style, "style")?;

    let (q_c, r_c) = linalg::thin_qr(&content.matrix().transpose());
    let (q_s, r_s) = linalg::thin_qr(&style.matrix().transpose());

    let core = &r_c * r_s.transpose();
    let (core_u, s, core_v) = linalg::svd(&core)
        .ok_or_else(|| Error::DegenerateAlignment("SVD of the alignment core did not converge".into()))?;
    let s1 = s.first().copied().unwrap_or(0.0);
    if !(s1 >= DEGENERATE_FLOOR) {
        return Err(Error::DegenerateAlignment(format!(
            "largest singular value {s1:e} of the cross-covariance is below {DEGENERATE_FLOOR:e}"
        )));
    }
    let rank = s.iter().take_while(|&&v| v > tau * s1).count();

    Ok(ThinRotation {
        u: q_c * core_u.columns(0, rank),
        v: q_s * core_v.columns(0, rank),
        singular_values: s[..rank].to_vec(),
    })
}

fn cloud_scale(raw: &PointCloud, centered: &PointCloud, variant: ScaleVariant) -> f64 {
    match variant {
        ScaleVariant::Centered => centered.frobenius_norm(),
        ScaleVariant::Literal => raw.frobenius_norm(),
    }
}

struct Normalized {
    content_hat: PointCloud,
    style_hat: PointCloud,
    content_centroid: DVector<f64>,
    style_centroid: DVector<f64>,
    content_scale: f64,
    style_scale: f64,
}

fn normalize_pair(content: &PointCloud, style: &PointCloud, variant: ScaleVariant) -> Result<Normalized> {
    if content.len() != style.len() || content.dim() != style.dim() {
        return Err(dim_err(format!(
            "rigid alignment needs equal cloud shapes, got {}x{} and {}x{}",
            content.len(),
            content.dim(),
            style.len(),
            style.dim()
        )));
    }
    let (c_bar, content_centroid) = content.center();
    let (s_bar, style_centroid) = style.center();
    let content_scale = cloud_scale(content, &c_bar, variant);
    let style_scale = cloud_scale(style, &s_bar, variant);
    for (which, scale) in [("content", content_scale), ("style", style_scale)] {
        if !(scale > DEGENERATE_FLOOR) {
            return Err(Error::DegenerateAlignment(format!("{which} cloud has zero spread")));
        }
    }
    Ok(Normalized {
        content_hat: c_bar.scaled(1.0 / content_scale),
        style_hat: s_bar.scaled(1.0 / style_scale),
        content_centroid,
        style_centroid,
        content_scale,
        style_scale,
    })
}

fn shift_rows(mut m: DMatrix<f64>, by: &DVector<f64>) -> DMatrix<f64> {
    for mut row in m.row_iter_mut() {
        row += by.transpose();
    }
    m
}

/// Rigidly aligns the style cloud onto the content cloud:
/// `z_sc = content_scale * (zs_bar / style_scale) Q + 1 mu_c^T`.
pub fn align_point_clouds(
    content: &PointCloud,
    style: &PointCloud,
    variant: ScaleVariant,
    tau: f64,
) -> Result<(PointCloud, AlignmentResult)> {
    let n = normalize_pair(content, style, variant)?;
    let rotation = solve_rotation(&n.content_hat, &n.style_hat, tau)?;
    let rotated = rotation.apply(n.style_hat.matrix()) * n.content_scale;
    let out = shift_rows(rotated, &n.content_centroid);
    Ok((
        PointCloud::from_matrix(out, content.axis()),
        AlignmentResult {
            rotation,
            content_centroid: n.content_centroid,
            style_centroid: n.style_centroid,
            content_scale: n.content_scale,
            style_scale: n.style_scale,
        },
    ))
}

fn check_align_shapes(content: &FeatureMap, style: &FeatureMap) -> Result<()> {
    if content.channels() != style.channels() || content.spatial() != style.spatial() {
        return Err(dim_err(format!(
            "rigid alignment needs equal C and H*W, got {:?} and {:?}",
            content.shape(),
            style.shape()
        )));
    }
    Ok(())
}

/// Rigid alignment of `style` onto `content` on the channel clouds with the
/// default rank tolerance.
pub fn rigid_align(content: &FeatureMap, style: &FeatureMap, variant: ScaleVariant) -> Result<FeatureMap> {
    let opts = AlignOptions { variant, ..AlignOptions::default() };
    rigid_align_with(content, style, &opts).map(|(f, _)| f)
}

pub fn rigid_align_with(
    content: &FeatureMap,
    style: &FeatureMap,
    opts: &AlignOptions,
) -> Result<(FeatureMap, AlignmentResult)> {
    check_align_shapes(content, style)?;
    let (out, result) = align_point_clouds(
        &content.as_point_cloud(opts.axis),
        &style.as_point_cloud(opts.axis),
        opts.variant,
        opts.tau,
    )?;
    let f = FeatureMap::from_point_cloud(&out, content.height(), content.width())?;
    Ok((f, result))
}

/// Reference path: forms the full `D x D` cross-covariance, takes its dense
/// SVD and applies the explicit `Q = V U^T`. Cubic in `D`; used to check and
/// benchmark the thin solve.
pub fn rigid_align_dense(content: &FeatureMap, style: &FeatureMap, opts: &AlignOptions) -> Result<FeatureMap> {
    check_align_shapes(content, style)?;
    let n = normalize_pair(
        &content.as_point_cloud(opts.axis),
        &style.as_point_cloud(opts.axis),
        opts.variant,
    )?;
    let a = n.content_hat.matrix().transpose() * n.style_hat.matrix();
    let svd = a.svd(true, true);
    if !(svd.singular_values.max() >= DEGENERATE_FLOOR) {
        return Err(Error::DegenerateAlignment("cross-covariance is numerically zero".into()));
    }
    let q = svd.v_t.expect("requested V^T").transpose() * svd.u.expect("requested U").transpose();
    let out = shift_rows(n.style_hat.matrix() * q * n.content_scale, &n.content_centroid);
    FeatureMap::from_point_cloud(
        &PointCloud::from_matrix(out, opts.axis),
        content.height(),
        content.width(),
    )
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// `alpha * content + (1 - alpha) * styled`.
pub fn blend(content: &FeatureMap, styled: &FeatureMap, alpha: f64) -> Result<FeatureMap> {
    check_unit("alpha", alpha)?;
    content.ensure_same_shape(styled, "blend")?;
    Ok(content.map_with(styled, |c, s| alpha * c + (1.0 - alpha) * s))
}

/// `alpha * content + (1 - alpha) * (beta * styled_1 + (1 - beta) * styled_2)`.
pub fn interpolate_styles(
    content: &FeatureMap,
    styled_1: &FeatureMap,
    styled_2: &FeatureMap,
    alpha: f64,
    beta: f64,
) -> Result<FeatureMap> {
    check_unit("alpha", alpha)?;
    check_unit("beta", beta)?;
    content.ensure_same_shape(styled_1, "interpolate_styles")?;
    content.ensure_same_shape(styled_2, "interpolate_styles")?;
    let data = content
        .data()
        .iter()
        .zip(styled_1.data())
        .zip(styled_2.data())
        .map(|((&c, &s1), &s2)| alpha * c + (1.0 - alpha) * (beta * s1 + (1.0 - beta) * s2))
        .collect();
    Ok(content.with_data(data))
}

/// Weighted sum of equally shaped maps. Weights are used as given.
pub fn weighted_sum(terms: &[(f64, &FeatureMap)]) -> Result<FeatureMap> {
    let (_, first) = terms.first().ok_or_else(|| Error::InvalidInput("no terms to combine".into()))?;
    let mut acc = vec![0.0; first.data().len()];
    for (w, f) in terms {
        first.ensure_same_shape(f, "weighted_sum")?;
        for (a, v) in acc.iter_mut().zip(f.data()) {
            *a += w * v;
        }
    }
    FeatureMap::new(first.channels(), first.height(), first.width(), acc)
}

/// A binary spatial mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || bits.len() != height * width {
            return Err(dim_err(format!(
                "mask of {height}x{width} needs {} entries, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(Self { height, width, bits })
    }

    /// Accepts only exact 0/1 values.
    pub fn from_values(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        let bits = values
            .iter()
            .map(|&v| {
                if v == 0.0 || v == 1.0 {
                    Ok(v == 1.0)
                } else {
                    Err(Error::InvalidInput(format!("mask value {v} is not binary")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(height, width, bits)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let bits = (0..height).flat_map(|y| (0..width).map(move |x| (y, x))).map(|(y, x)| f(y, x)).collect();
        Self::new(height, width, bits)
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn complement(&self) -> Mask {
        Mask {
            bits: self.bits.iter().map(|b| !b).collect(),
            ..self.clone()
        }
    }

    /// Nearest-neighbour resampling, sampling source pixel centres.
    pub fn resample_nearest(&self, height: usize, width: usize) -> Result<Mask> {
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        let pick = |i: usize, out: usize, src: usize| {
            (((i as f64 + 0.5) * src as f64 / out as f64).floor() as usize).min(src - 1)
        };
        Mask::from_fn(height, width, |y, x| {
            self.get(pick(y, height, self.height), pick(x, width, self.width))
        })
    }
}

/// At each spatial site takes the styled map of the first region whose mask
/// is set, else `fallback`. Masks are resampled to the feature grid when
/// their size differs.
pub fn spatial_composite(regions: &[(Mask, FeatureMap)], fallback: &FeatureMap) -> Result<FeatureMap> {
    let (h, w) = (fallback.height(), fallback.width());
    let masks = regions
        .iter()
        .map(|(m, f)| {
            fallback.ensure_same_shape(f, "spatial_composite")?;
            m.resample_nearest(h, w)
        })
        .collect::<Result<Vec<_>>>()?;

    let hw = h * w;
    let mut data = fallback.data().to_vec();
    for site in 0..hw {
        if let Some(k) = masks.iter().position(|m| m.bits[site]) {
            let src = regions[k].1.data();
            for c in 0..fallback.channels() {
                data[c * hw + site] = src[c * hw + site];
            }
        }
    }
    Ok(fallback.with_data(data))
}

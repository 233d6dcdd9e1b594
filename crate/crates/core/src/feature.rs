//! Feature tensors, their point-cloud views, and the statistics every
//! transform is built from.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};

/// A `C x H x W` feature tensor stored channel-first, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(dim_err(format!(
                "feature map dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(dim_err(format!(
                "expected {} values for {channels}x{height}x{width}, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at index {i}")));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(channels, height, width, vec![0.0; channels * height * width])
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of spatial sites, `H * W`.
    pub fn spatial(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// The values of one channel, row by row.
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.spatial();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn ensure_same_shape(&self, other: &FeatureMap, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(dim_err(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    /// Elementwise map producing a map of the same shape. The caller keeps
    /// values finite.
    pub(crate) fn map_with(&self, other: &FeatureMap, f: impl Fn(f64, f64) -> f64) -> FeatureMap {
        debug_assert!(self.same_shape(other));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        self.with_data(data)
    }

    pub(crate) fn with_data(&self, data: Vec<f64>) -> FeatureMap {
        debug_assert_eq!(data.len(), self.data.len());
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Rows are channels, columns are spatial sites.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.channels, self.spatial(), &self.data)
    }

    pub fn from_matrix(matrix: &DMatrix<f64>, height: usize, width: usize) -> Result<Self> {
        if matrix.ncols() != height * width {
            return Err(dim_err(format!(
                "matrix has {} columns, expected {height}x{width}",
                matrix.ncols()
            )));
        }
        let data = matrix.transpose().as_slice().to_vec();
        Self::new(matrix.nrows(), height, width, data)
    }

    pub fn as_point_cloud(&self, axis: AxisConfig) -> PointCloud {
        let hw = self.spatial();
        let matrix = match axis {
            AxisConfig::ChannelsAsPoints => DMatrix::from_row_slice(self.channels, hw, &self.data),
            AxisConfig::PixelsAsPoints => DMatrix::from_column_slice(hw, self.channels, &self.data),
        };
        PointCloud { matrix, axis }
    }

    /// Inverse of [`FeatureMap::as_point_cloud`].
    pub fn from_point_cloud(pc: &PointCloud, height: usize, width: usize) -> Result<Self> {
        let hw = height * width;
        match pc.axis {
            AxisConfig::ChannelsAsPoints => {
                if pc.dim() != hw {
                    return Err(dim_err(format!(
                        "cloud dimension {} does not match {height}x{width}",
                        pc.dim()
                    )));
                }
                let data = pc.matrix.transpose().as_slice().to_vec();
                Self::new(pc.len(), height, width, data)
            }
            AxisConfig::PixelsAsPoints => {
                if pc.len() != hw {
                    return Err(dim_err(format!(
                        "cloud has {} points, expected {height}x{width}",
                        pc.len()
                    )));
                }
                Self::new(pc.dim(), height, width, pc.matrix.as_slice().to_vec())
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Per-channel bilinear resampling on a corner-aligned grid.
    pub fn resample_bilinear(&self, height: usize, width: usize) -> Result<FeatureMap> {
        if height == 0 || width == 0 {
            return Err(dim_err("resample target must be at least 1x1"));
        }
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        let ys: Vec<_> = (0..height).map(|i| grid_coord(i, height, self.height)).collect();
        let xs: Vec<_> = (0..width).map(|j| grid_coord(j, width, self.width)).collect();
        let mut data = Vec::with_capacity(self.channels * height * width);
        for c in 0..self.channels {
            let src = self.channel(c);
            for &(y0, y1, fy) in &ys {
                for &(x0, x1, fx) in &xs {
                    let top = src[y0 * self.width + x0] * (1.0 - fx) + src[y0 * self.width + x1] * fx;
                    let bottom =
                        src[y1 * self.width + x0] * (1.0 - fx) + src[y1 * self.width + x1] * fx;
                    data.push(top * (1.0 - fy) + bottom * fy);
                }
            }
        }
        FeatureMap::new(self.channels, height, width, data)
    }
}

/// Source interval and weight for output index `i` on a corner-aligned grid.
fn grid_coord(i: usize, out: usize, src: usize) -> (usize, usize, f64) {
    if out == 1 || src == 1 {
        return (0, 0, 0.0);
    }
    let pos = i as f64 * (src - 1) as f64 / (out - 1) as f64;
    let lo = (pos.floor() as usize).min(src - 1);
    let hi = (lo + 1).min(src - 1);
    (lo, hi, pos - lo as f64)
}

/// How a feature tensor is laid out as a point cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AxisConfig {
    /// `C` points in `R^(H*W)`: point `i` is channel `i` scanned row by row.
    #[default]
    ChannelsAsPoints,
    /// `H*W` points in `R^C`.
    PixelsAsPoints,
}

/// `N` points in `R^D`, one point per matrix row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    matrix: DMatrix<f64>,
    axis: AxisConfig,
}

impl PointCloud {
    pub fn from_matrix(matrix: DMatrix<f64>, axis: AxisConfig) -> Self {
        Self { matrix, axis }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d) {
            return Err(dim_err("ragged point rows"));
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Ok(Self::from_matrix(
            DMatrix::from_row_slice(rows.len(), d, &flat),
            AxisConfig::ChannelsAsPoints,
        ))
    }

    /// Number of points, `N`.
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// Ambient dimension, `D`.
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn axis(&self) -> AxisConfig {
        self.axis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.matrix.row(i).iter().copied().collect()
    }

    /// Arithmetic mean of the points.
    pub fn centroid(&self) -> DVector<f64> {
        let n = self.len().max(1) as f64;
        let mut mean = DVector::zeros(self.dim());
        for row in self.matrix.row_iter() {
            mean += row.transpose();
        }
        mean / n
    }

    /// Subtracts the centroid from every point.
    pub fn center(&self) -> (PointCloud, DVector<f64>) {
        let mu = self.centroid();
        let mut m = self.matrix.clone();
        for mut row in m.row_iter_mut() {
            row -= mu.transpose();
        }
        (PointCloud::from_matrix(m, self.axis), mu)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn scaled(&self, factor: f64) -> PointCloud {
        PointCloud::from_matrix(&self.matrix * factor, self.axis)
    }
}

/// Channel-wise mean and population variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl ChannelStats {
    pub fn std_dev(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }
}

pub fn channel_stats(f: &FeatureMap) -> ChannelStats {
    let n = f.spatial() as f64;
    let mut mean = Vec::with_capacity(f.channels());
    let mut variance = Vec::with_capacity(f.channels());
    for c in 0..f.channels() {
        let ch = f.channel(c);
        let mu = ch.iter().sum::<f64>() / n;
        let var = ch.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        mean.push(mu);
        variance.push(var.max(0.0));
    }
    ChannelStats { mean, variance }
}

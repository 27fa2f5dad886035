//! Scan geometry, the discrete ray transform and its matched adjoint,
//! filtered backprojection and operator-norm estimation.

mod fbp;
mod geometry;
mod norm;
mod projector;

pub use fbp::{fbp, RampFilter};
pub use geometry::{build_geometry, Beam, BeamSpec, Ray, ScanGeometry};
pub use norm::{operator_norm, NormEstimate, NormTarget};
pub use projector::{back_project, forward_project, ForwardOp};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TomoError {
    #[error("InvalidGeometry: {0}")]
    InvalidGeometry(String),
    #[error("GeometryMismatch: {0}")]
    GeometryMismatch(String),
    #[error("InvalidImage: {0}")]
    InvalidImage(String),
    #[error("UnitMismatch: projector input must be in attenuation units")]
    UnitMismatch,
    #[error("NoConvergence: power iteration stopped after {iterations} iterations at estimate {estimate}")]
    NoConvergence { estimate: f64, iterations: usize },
}

/// Which physical scale an image's values live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnitSpace {
    /// Linear attenuation coefficients in 1/mm.
    #[default]
    Attenuation,
    /// Display-normalized values, nominally in [0, 1].
    Normalized,
}

/// Pixel grid of an image without its values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    /// Pixel pitch in mm.
    pub pixel_size: f64,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, pixel_size: f64) -> Self {
        Self { width, height, pixel_size }
    }

    pub fn square(size: usize, pixel_size: f64) -> Self {
        Self::new(size, size, pixel_size)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical coordinates (x, y) in mm of the center of pixel (row, col).
    /// `x` grows with the column index and `y` with the row index.
    #[inline]
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        ((col as f64 - cx) * self.pixel_size, (row as f64 - cy) * self.pixel_size)
    }

    /// Pixels whose centers lie within `radius` of the origin.
    pub fn fov_mask(&self, radius: f64) -> Vec<bool> {
        let r2 = radius * radius * (1.0 + 1e-12);
        let mut mask = Vec::with_capacity(self.len());
        for row in 0..self.height {
            for col in 0..self.width {
                let (x, y) = self.pixel_center(row, col);
                mask.push(x * x + y * y <= r2);
            }
        }
        mask
    }
}

/// 2D real-valued image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
    pub units: UnitSpace,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixel_size: f64, data: Vec<f64>) -> Result<Self, TomoError> {
        if width == 0 || height == 0 {
            return Err(TomoError::InvalidImage("image dimensions must be positive".into()));
        }
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(TomoError::InvalidImage(format!("pixel size {pixel_size} must be positive")));
        }
        if data.len() != width * height {
            return Err(TomoError::InvalidImage(format!(
                "data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TomoError::InvalidImage("image contains non-finite values".into()));
        }
        Ok(Self { width, height, pixel_size, units: UnitSpace::Attenuation, data })
    }

    pub fn zeros(grid: ImageGrid) -> Self {
        Self {
            width: grid.width,
            height: grid.height,
            pixel_size: grid.pixel_size,
            units: UnitSpace::Attenuation,
            data: vec![0.0; grid.len()],
        }
    }

    /// Builds an image on `grid` from raw values without the finiteness scan.
    pub(crate) fn from_grid(grid: ImageGrid, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self {
            width: grid.width,
            height: grid.height,
            pixel_size: grid.pixel_size,
            units: UnitSpace::Attenuation,
            data,
        }
    }

    pub fn with_units(mut self, units: UnitSpace) -> Self {
        self.units = units;
        self
    }

    pub fn grid(&self) -> ImageGrid {
        ImageGrid::new(self.width, self.height, self.pixel_size)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn norm(&self) -> f64 {
        l2(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Zeroes every pixel whose center lies outside `radius`.
    pub fn mask_outside(&mut self, radius: f64) {
        let mask = self.grid().fov_mask(radius);
        for (v, inside) in self.data.iter_mut().zip(mask) {
            if !inside {
                *v = 0.0;
            }
        }
    }
}

/// Projection data, angle-major (`data[view * n_det + bin]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_angles: usize,
    pub n_det: usize,
    pub data: Vec<f64>,
    /// Fingerprint of the geometry that produced the data, when known.
    pub geometry_id: Option<u64>,
}

impl Sinogram {
    pub fn new(n_angles: usize, n_det: usize, data: Vec<f64>) -> Result<Self, TomoError> {
        if n_angles == 0 || n_det == 0 {
            return Err(TomoError::InvalidImage("sinogram dimensions must be positive".into()));
        }
        if data.len() != n_angles * n_det {
            return Err(TomoError::InvalidImage(format!(
                "data length {} != {}x{}",
                data.len(),
                n_angles,
                n_det
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TomoError::InvalidImage("sinogram contains non-finite values".into()));
        }
        Ok(Self { n_angles, n_det, data, geometry_id: None })
    }

    pub fn zeros(n_angles: usize, n_det: usize) -> Self {
        Self { n_angles, n_det, data: vec![0.0; n_angles * n_det], geometry_id: None }
    }

    /// Views an image as data of an identity "scanner": one row per image row.
    pub fn from_image(img: &Image) -> Self {
        Self { n_angles: img.height, n_det: img.width, data: img.data.clone(), geometry_id: None }
    }

    #[inline]
    pub fn get(&self, view: usize, bin: usize) -> f64 {
        self.data[view * self.n_det + bin]
    }

    pub fn same_shape(&self, other: &Sinogram) -> bool {
        self.n_angles == other.n_angles && self.n_det == other.n_det
    }

    pub fn norm(&self) -> f64 {
        l2(&self.data)
    }
}

/// Two-component field on an image grid (horizontal = along columns,
/// vertical = along rows).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub width: usize,
    pub height: usize,
    pub h: Vec<f64>,
    pub v: Vec<f64>,
}

impl VectorField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, h: vec![0.0; width * height], v: vec![0.0; width * height] }
    }

    pub fn same_shape(&self, other: &VectorField) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn matches(&self, img: &Image) -> bool {
        self.width == img.width && self.height == img.height
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> Vec<f64> {
        self.h.iter().zip(&self.v).map(|(a, b)| a.hypot(*b)).collect()
    }

    pub fn dot(&self, other: &VectorField) -> f64 {
        dot(&self.h, &other.h) + dot(&self.v, &other.v)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Affine map between normalized display values and attenuation (1/mm):
/// `attenuation = scale * normalized + offset`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UnitMap {
    pub scale: f64,
    pub offset: f64,
}

impl UnitMap {
    /// Normalized 1.0 corresponds to roughly water at 70 keV.
    pub const SHEPP_LOGAN: UnitMap = UnitMap { scale: 0.02, offset: 0.0 };
    /// Normalized 1.0 corresponds to iodine-enhanced blood / dense vessel.
    pub const CARDIAC: UnitMap = UnitMap { scale: 0.03, offset: 0.0 };

    pub fn to_attenuation(&self, img: &Image) -> Image {
        let data = img.data.iter().map(|v| self.scale * v + self.offset).collect();
        Image::from_grid(img.grid(), data).with_units(UnitSpace::Attenuation)
    }

    pub fn to_normalized(&self, img: &Image) -> Image {
        let data = img.data.iter().map(|v| (v - self.offset) / self.scale).collect();
        Image::from_grid(img.grid(), data).with_units(UnitSpace::Normalized)
    }
}

impl Default for UnitMap {
    fn default() -> Self {
        Self::SHEPP_LOGAN
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

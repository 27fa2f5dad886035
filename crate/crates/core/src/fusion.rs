//! Centered 2D DFT, missing-wedge masks and Fourier-domain fusion.
//!
//! Spectra are stored DC-centered: frequency offset `(du, dv)` lives at
//! column `du + width/2`, row `dv + height/2` (integer division), the same
//! layout `fftshift` produces. The transform is unitary.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::tomo::{Beam, Image, ImageGrid, ScanGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("NonNegligibleImaginary: imaginary residue {residue:e} exceeds 1e-9 of the spectrum norm {norm:e}")]
    NonNegligibleImaginary { residue: f64, norm: f64 },
    #[error("UnsupportedGeometry: {0}")]
    UnsupportedGeometry(String),
    #[error("AsymmetricMask: mask is not point-symmetric about DC")]
    AsymmetricMask,
}

/// DC-centered complex spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
    pub data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn dc_index(&self) -> usize {
        (self.height / 2) * self.width + self.width / 2
    }
}

/// Binary DC-centered mask; 1 keeps a frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl FrequencyMask {
    pub fn ones(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![1; width * height] }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    /// Index of the bin at frequency `-(du, dv)`, wrapping like the DFT.
    pub fn mirror_index(&self, idx: usize) -> usize {
        mirror(self.width, self.height, idx)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.data.len()).all(|i| self.data[i] == self.data[self.mirror_index(i)])
    }

    /// Fraction of non-DC bins set to 1.
    pub fn fraction(&self) -> f64 {
        let dc = (self.height / 2) * self.width + self.width / 2;
        let ones = self.data.iter().enumerate().filter(|(i, v)| *i != dc && **v == 1).count();
        ones as f64 / (self.data.len() - 1).max(1) as f64
    }

    /// 0/1 image for export.
    pub fn to_image(&self) -> Image {
        let data = self.data.iter().map(|v| *v as f64).collect();
        Image::new(self.width, self.height, 1.0, data).expect("mask is finite")
    }
}

fn mirror(width: usize, height: usize, idx: usize) -> usize {
    let (row, col) = (idx / width, idx % width);
    let mrow = (2 * (height / 2) as isize - row as isize).rem_euclid(height as isize) as usize;
    let mcol = (2 * (width / 2) as isize - col as isize).rem_euclid(width as isize) as usize;
    mrow * width + mcol
}

fn fft2(data: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    for row in data.chunks_mut(width) {
        row_fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); height];
    for c in 0..width {
        for r in 0..height {
            col[r] = data[r * width + c];
        }
        col_fft.process(&mut col);
        for r in 0..height {
            data[r * width + c] = col[r];
        }
    }
    let scale = 1.0 / ((width * height) as f64).sqrt();
    data.iter_mut().for_each(|v| *v *= scale);
}

/// Moves index 0 to the center (`shift = true`) or back.
fn shift(data: &[Complex64], width: usize, height: usize, forward: bool) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    let (hw, hh) = (width / 2, height / 2);
    for r in 0..height {
        for c in 0..width {
            let (dr, dc) = if forward {
                ((r + hh) % height, (c + hw) % width)
            } else {
                ((r + height - hh) % height, (c + width - hw) % width)
            };
            out[dr * width + dc] = data[r * width + c];
        }
    }
    out
}

/// Unitary 2D DFT with DC moved to the grid center.
pub fn centered_dft2(img: &Image) -> ComplexGrid {
    let mut buf: Vec<Complex64> = img.data.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    fft2(&mut buf, img.width, img.height, false);
    ComplexGrid { width: img.width, height: img.height, pixel_size: img.pixel_size, data: shift(&buf, img.width, img.height, true) }
}

/// Inverse of [`centered_dft2`]; the result must be real to within
/// `1e-9 · ‖g‖`.
pub fn inverse_centered_dft2(g: &ComplexGrid) -> Result<Image, FusionError> {
    let mut buf = shift(&g.data, g.width, g.height, false);
    fft2(&mut buf, g.width, g.height, true);
    let residue = buf.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
    let norm = g.norm();
    if residue > 1e-9 * norm {
        return Err(FusionError::NonNegligibleImaginary { residue, norm });
    }
    let data = buf.iter().map(|c| c.re).collect();
    Ok(Image::new(g.width, g.height, g.pixel_size, data).map_err(|e| FusionError::ShapeMismatch(e.to_string()))?)
}

/// Mask selecting the frequencies a limited-angle scan never measures.
///
/// A view whose rays travel at angle `θ` samples the central frequency line
/// at orientation `θ + π/2`. Bin `(du, dv)` is set iff its orientation
/// `atan2(dv/height, du/width) mod π` is outside the measured set; DC is 0.
/// Bins on the Nyquist row/column are only set when their DFT mirror is too,
/// keeping the mask point-symmetric. Fan-beam geometries reuse the parallel
/// wedge of the same angular coverage.
pub fn build_missing_wedge_mask(geom: &ScanGeometry, grid: ImageGrid) -> Result<FrequencyMask, FusionError> {
    if geom.angles().is_empty() {
        return Err(FusionError::UnsupportedGeometry("no projection angles".into()));
    }
    if geom.beam() == Beam::FanEquiangular {
        log::warn!("missing-wedge mask for a fan-beam scan uses the parallel-beam approximation");
    }
    let (w, h) = (grid.width, grid.height);
    let start = geom.angle_start();
    let coverage = geom.coverage();
    let full = coverage >= PI * (1.0 - 1e-12);
    let raw: Vec<bool> = (0..w * h)
        .map(|idx| {
            let du = (idx % w) as f64 - (w / 2) as f64;
            let dv = (idx / w) as f64 - (h / 2) as f64;
            if full || (du == 0.0 && dv == 0.0) {
                return false;
            }
            let phi = (dv / h as f64).atan2(du / w as f64);
            let delta = (phi - start - PI / 2.0).rem_euclid(PI);
            delta > coverage
        })
        .collect();
    let data = (0..w * h).map(|i| (raw[i] && raw[mirror(w, h, i)]) as u8).collect();
    Ok(FrequencyMask { width: w, height: h, data })
}

/// `F⁻¹{ M·F(x_dn) + F(x_lact) }`.
pub fn fourier_fuse(x_dn: &Image, x_lact: &Image, mask: &FrequencyMask) -> Result<Image, FusionError> {
    fourier_fuse_with(x_dn, x_lact, mask, false)
}

/// As [`fourier_fuse`]; with `complement_lact` the LACT spectrum is weighted
/// by `1 − M` so wedge content is not counted twice.
pub fn fourier_fuse_with(
    x_dn: &Image,
    x_lact: &Image,
    mask: &FrequencyMask,
    complement_lact: bool,
) -> Result<Image, FusionError> {
    if !x_dn.same_shape(x_lact) || mask.width != x_dn.width || mask.height != x_dn.height {
        return Err(FusionError::ShapeMismatch(format!(
            "images {}x{} / {}x{} and mask {}x{} differ",
            x_dn.width, x_dn.height, x_lact.width, x_lact.height, mask.width, mask.height
        )));
    }
    if !mask.is_symmetric() {
        return Err(FusionError::AsymmetricMask);
    }
    let a = centered_dft2(x_dn);
    let b = centered_dft2(x_lact);
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .zip(&mask.data)
        .map(|((fa, fb), m)| {
            let m = *m as f64;
            let lact = if complement_lact { *fb * (1.0 - m) } else { *fb };
            *fa * m + lact
        })
        .collect();
    let mut out = inverse_centered_dft2(&ComplexGrid { data, ..a })?;
    out.units = x_dn.units;
    Ok(out)
}

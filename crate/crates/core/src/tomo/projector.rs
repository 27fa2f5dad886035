//! Joseph-style ray-driven projector with an exactly transposed adjoint.
//!
//! Each ray is sampled once per image column (rays closer to horizontal) or
//! once per image row (rays closer to vertical). At each sample the image is
//! linearly interpolated between the two neighbouring pixels and weighted by
//! the path length per step, `pixel_size / max(|cos θ|, |sin θ|)`. The
//! adjoint scatters with exactly the same stencil. Pixels whose centers fall
//! outside the FOV are treated as zero in both directions.

use rayon::prelude::*;

use super::{Image, ImageGrid, Ray, ScanGeometry, Sinogram, TomoError, UnitSpace};

/// Views handled per accumulation buffer in the adjoint. Fixed so that the
/// summation order does not depend on the thread pool.
const ADJOINT_VIEWS_PER_BUFFER: usize = 8;

/// Visits every (pixel index, weight) pair of the Joseph stencil of `ray`.
#[inline]
pub(crate) fn trace_ray<F: FnMut(usize, f64)>(grid: &ImageGrid, ray: Ray, mut visit: F) {
    let (w, h, ps) = (grid.width, grid.height, grid.pixel_size);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let (sin, cos) = ray.theta.sin_cos();
    if cos.abs() >= sin.abs() {
        let step = ps / cos.abs();
        let offset = ray.s / cos;
        let slope = sin / cos;
        for col in 0..w {
            let x = (col as f64 - cx) * ps;
            let r = (offset + x * slope) / ps + cy;
            let r0 = r.floor();
            let frac = r - r0;
            let r0 = r0 as isize;
            if r0 >= 0 && (r0 as usize) < h {
                visit(r0 as usize * w + col, step * (1.0 - frac));
            }
            let r1 = r0 + 1;
            if r1 >= 0 && (r1 as usize) < h {
                visit(r1 as usize * w + col, step * frac);
            }
        }
    } else {
        let step = ps / sin.abs();
        let offset = -ray.s / sin;
        let slope = cos / sin;
        for row in 0..h {
            let y = (row as f64 - cy) * ps;
            let c = (offset + y * slope) / ps + cx;
            let c0 = c.floor();
            let frac = c - c0;
            let c0 = c0 as isize;
            if c0 >= 0 && (c0 as usize) < w {
                visit(row * w + c0 as usize, step * (1.0 - frac));
            }
            let c1 = c0 + 1;
            if c1 >= 0 && (c1 as usize) < w {
                visit(row * w + c1 as usize, step * frac);
            }
        }
    }
}

/// Discrete line integrals of `img` along every ray of `geom`.
pub fn forward_project(img: &Image, geom: &ScanGeometry) -> Result<Sinogram, TomoError> {
    if img.units != UnitSpace::Attenuation {
        return Err(TomoError::UnitMismatch);
    }
    let grid = img.grid();
    geom.check_grid(&grid)?;
    let mask = grid.fov_mask(geom.fov_radius());
    let masked: Vec<f64> = img.data.iter().zip(&mask).map(|(v, m)| if *m { *v } else { 0.0 }).collect();
    let n_det = geom.n_det();
    let mut data = vec![0.0; geom.n_angles() * n_det];
    data.par_chunks_mut(n_det).enumerate().for_each(|(view, row)| {
        for (bin, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            trace_ray(&grid, geom.ray(view, bin), |idx, wgt| acc += wgt * masked[idx]);
            *out = acc;
        }
    });
    Ok(Sinogram { n_angles: geom.n_angles(), n_det, data, geometry_id: Some(geom.id()) })
}

/// Exact transpose of [`forward_project`] onto an image of the given grid.
pub fn back_project(sino: &Sinogram, geom: &ScanGeometry, grid: ImageGrid) -> Result<Image, TomoError> {
    check_sinogram(sino, geom)?;
    geom.check_grid(&grid)?;
    let n_det = geom.n_det();
    let n_views = geom.n_angles();
    let groups: Vec<Vec<f64>> = (0..n_views.div_ceil(ADJOINT_VIEWS_PER_BUFFER))
        .into_par_iter()
        .map(|g| {
            let mut buf = vec![0.0; grid.len()];
            let lo = g * ADJOINT_VIEWS_PER_BUFFER;
            let hi = (lo + ADJOINT_VIEWS_PER_BUFFER).min(n_views);
            for view in lo..hi {
                for bin in 0..n_det {
                    let val = sino.data[view * n_det + bin];
                    if val != 0.0 {
                        trace_ray(&grid, geom.ray(view, bin), |idx, wgt| buf[idx] += wgt * val);
                    }
                }
            }
            buf
        })
        .collect();
    let mut data = vec![0.0; grid.len()];
    for buf in &groups {
        for (d, b) in data.iter_mut().zip(buf) {
            *d += b;
        }
    }
    let mut img = Image::from_grid(grid, data);
    img.mask_outside(geom.fov_radius());
    Ok(img)
}

pub(crate) fn check_sinogram(sino: &Sinogram, geom: &ScanGeometry) -> Result<(), TomoError> {
    if sino.n_angles != geom.n_angles() || sino.n_det != geom.n_det() {
        return Err(TomoError::GeometryMismatch(format!(
            "sinogram is {}x{} but geometry has {} views x {} bins",
            sino.n_angles,
            sino.n_det,
            geom.n_angles(),
            geom.n_det()
        )));
    }
    if let Some(id) = sino.geometry_id {
        if id != geom.id() {
            return Err(TomoError::GeometryMismatch("sinogram was produced by a different geometry".into()));
        }
    }
    Ok(())
}

/// The data-fidelity operator of a reconstruction problem.
#[derive(Debug, Clone, Copy)]
pub enum ForwardOp<'a> {
    Tomography(&'a ScanGeometry),
    /// `A = I`; data space is image-shaped (see [`Sinogram::from_image`]).
    Identity,
}

impl ForwardOp<'_> {
    pub fn forward(&self, img: &Image) -> Result<Sinogram, TomoError> {
        match self {
            ForwardOp::Tomography(g) => forward_project(img, g),
            ForwardOp::Identity => Ok(Sinogram::from_image(img)),
        }
    }

    pub fn adjoint(&self, sino: &Sinogram, grid: ImageGrid) -> Result<Image, TomoError> {
        match self {
            ForwardOp::Tomography(g) => back_project(sino, g, grid),
            ForwardOp::Identity => {
                if sino.n_angles != grid.height || sino.n_det != grid.width {
                    return Err(TomoError::GeometryMismatch("identity data must be image-shaped".into()));
                }
                Ok(Image::from_grid(grid, sino.data.clone()))
            }
        }
    }

    /// Data-space shape `(rows, cols)` for images on `grid`.
    pub fn data_shape(&self, grid: &ImageGrid) -> (usize, usize) {
        match self {
            ForwardOp::Tomography(g) => (g.n_angles(), g.n_det()),
            ForwardOp::Identity => (grid.height, grid.width),
        }
    }
}

//! Shared oracles for the integration tests: independently assembled dense
//! operators and seeded random fields.
#![allow(dead_code)]

use lact_core::{Image, ImageGrid, ScanGeometry, Sinogram, VectorField};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(grid: ImageGrid, seed: u64) -> Image {
    let mut r = rng(seed);
    Image::new(grid.width, grid.height, grid.pixel_size, (0..grid.len()).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_sinogram(n_angles: usize, n_det: usize, seed: u64) -> Sinogram {
    let mut r = rng(seed);
    Sinogram::new(n_angles, n_det, (0..n_angles * n_det).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_field(width: usize, height: usize, seed: u64) -> VectorField {
    let mut r = rng(seed);
    let mut vf = VectorField::zeros(width, height);
    vf.h.iter_mut().chain(vf.v.iter_mut()).for_each(|v| *v = r.random_range(-1.0..1.0));
    vf
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Dense system matrix of the Joseph projector, assembled ray by ray from
/// the geometry alone. Each ray `y cos θ − x sin θ = s` is sampled on every
/// column (or row, for steep rays) and linearly interpolated between the two
/// nearest pixel centers, weighted by the path length per sample. Pixels
/// whose centers lie outside the FOV contribute nothing.
pub fn dense_projector(geom: &ScanGeometry, grid: ImageGrid) -> DMatrix<f64> {
    let (w, h, ps) = (grid.width, grid.height, grid.pixel_size);
    let inside = grid.fov_mask(geom.fov_radius());
    let n_rows = geom.n_angles() * geom.n_det();
    let mut a = DMatrix::zeros(n_rows, w * h);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    for view in 0..geom.n_angles() {
        for bin in 0..geom.n_det() {
            let row = view * geom.n_det() + bin;
            let ray = geom.ray(view, bin);
            let (c, s) = (ray.theta.cos(), ray.theta.sin());
            let mut add = |r: isize, col: isize, wgt: f64| {
                if r >= 0 && col >= 0 && (r as usize) < h && (col as usize) < w {
                    let j = r as usize * w + col as usize;
                    if inside[j] {
                        a[(row, j)] += wgt;
                    }
                }
            };
            if c.abs() >= s.abs() {
                for col in 0..w {
                    let x = (col as f64 - cx) * ps;
                    let y = (ray.s + x * s) / c;
                    let fr = y / ps + cy;
                    let r0 = fr.floor();
                    let t = fr - r0;
                    add(r0 as isize, col as isize, ps / c.abs() * (1.0 - t));
                    add(r0 as isize + 1, col as isize, ps / c.abs() * t);
                }
            } else {
                for r in 0..h {
                    let y = (r as f64 - cy) * ps;
                    let x = (y * c - ray.s) / s;
                    let fc = x / ps + cx;
                    let c0 = fc.floor();
                    let t = fc - c0;
                    add(r as isize, c0 as isize, ps / s.abs() * (1.0 - t));
                    add(r as isize, c0 as isize + 1, ps / s.abs() * t);
                }
            }
        }
    }
    a
}

/// Forward-difference gradient with Neumann boundary, rows `[h; v]`.
pub fn dense_gradient(width: usize, height: usize) -> DMatrix<f64> {
    let n = width * height;
    let mut g = DMatrix::zeros(2 * n, n);
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if c + 1 < width {
                g[(i, i)] = -1.0;
                g[(i, i + 1)] = 1.0;
            }
            if r + 1 < height {
                g[(n + i, i)] = -1.0;
                g[(n + i, i + width)] = 1.0;
            }
        }
    }
    g
}

pub fn largest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}

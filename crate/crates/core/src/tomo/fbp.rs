//! Filtered backprojection. Fan-beam data are rebinned to parallel rays first.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::projector::check_sinogram;
use super::{Beam, Image, ImageGrid, ScanGeometry, Sinogram, TomoError};

/// Apodization applied on top of the ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RampFilter {
    #[default]
    RamLak,
    SheppLogan,
    Hann,
}

impl RampFilter {
    /// Window value at `f` cycles/sample, `|f| <= 0.5`.
    fn window(self, f: f64) -> f64 {
        match self {
            RampFilter::RamLak => 1.0,
            RampFilter::SheppLogan => {
                if f == 0.0 {
                    1.0
                } else {
                    (PI * f).sin() / (PI * f)
                }
            }
            RampFilter::Hann => 0.5 * (1.0 + (2.0 * PI * f).cos()),
        }
    }
}

impl std::str::FromStr for RampFilter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "ramlak" | "ramp" => Ok(RampFilter::RamLak),
            "shepplogan" => Ok(RampFilter::SheppLogan),
            "hann" | "hanning" => Ok(RampFilter::Hann),
            other => Err(format!("unknown filter '{other}'")),
        }
    }
}

/// Parallel-beam data on a uniform (θ, s) grid.
struct ParallelData {
    angles: Vec<f64>,
    angle_step: f64,
    n_det: usize,
    spacing: f64,
    data: Vec<f64>,
}

/// Reconstructs an image on `grid` with the selected ramp-family filter.
/// Pixels outside the FOV are zero.
pub fn fbp(sino: &Sinogram, geom: &ScanGeometry, filter: RampFilter, grid: ImageGrid) -> Result<Image, TomoError> {
    check_sinogram(sino, geom)?;
    geom.check_grid(&grid)?;
    let par = match geom.beam() {
        Beam::Parallel => ParallelData {
            angles: geom.angles().to_vec(),
            angle_step: geom.angle_step(),
            n_det: geom.n_det(),
            spacing: geom.det_spacing(),
            data: sino.data.clone(),
        },
        Beam::FanEquiangular => rebin_fan(sino, geom),
    };
    let filtered = ramp_filter(&par.data, par.n_det, par.spacing, filter);
    let mut img = backproject_pixel_driven(&par, &filtered, grid);
    img.mask_outside(geom.fov_radius());
    Ok(img)
}

/// Convolves every view with the band-limited ramp, via a zero-padded FFT of
/// length `2 * next_pow2(n_det)`.
fn ramp_filter(data: &[f64], n_det: usize, spacing: f64, filter: RampFilter) -> Vec<f64> {
    let len = 2 * n_det.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);

    // spatial-domain ramp kernel sampled at the bin pitch, wrapped circularly
    let mut kernel: Vec<Complex64> = (0..len)
        .map(|n| {
            let m = if n <= len / 2 { n as i64 } else { n as i64 - len as i64 };
            let v = if m == 0 {
                1.0 / (4.0 * spacing * spacing)
            } else if m % 2 != 0 {
                -1.0 / ((m * m) as f64 * PI * PI * spacing * spacing)
            } else {
                0.0
            };
            Complex64::new(v, 0.0)
        })
        .collect();
    fwd.process(&mut kernel);
    let response: Vec<f64> = kernel
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let f = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 } / len as f64;
            c.re * spacing * filter.window(f.abs()) / len as f64
        })
        .collect();

    let mut out = vec![0.0; data.len()];
    out.par_chunks_mut(n_det).zip(data.par_chunks(n_det)).for_each(|(dst, src)| {
        let mut buf: Vec<Complex64> = src.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        buf.resize(len, Complex64::new(0.0, 0.0));
        fwd.process(&mut buf);
        for (b, r) in buf.iter_mut().zip(&response) {
            *b *= *r;
        }
        inv.process(&mut buf);
        for (d, b) in dst.iter_mut().zip(&buf) {
            *d = b.re;
        }
    });
    out
}

fn backproject_pixel_driven(par: &ParallelData, filtered: &[f64], grid: ImageGrid) -> Image {
    let coverage = par.angles.len() as f64 * par.angle_step;
    // each line is seen once per π of coverage
    let weight = par.angle_step * PI / coverage.max(PI);
    let trig: Vec<(f64, f64)> = par.angles.iter().map(|a| a.sin_cos()).collect();
    let center = (par.n_det as f64 - 1.0) / 2.0;
    let mut data = vec![0.0; grid.len()];
    data.par_chunks_mut(grid.width).enumerate().for_each(|(row, out)| {
        for (col, px) in out.iter_mut().enumerate() {
            let (x, y) = grid.pixel_center(row, col);
            let mut acc = 0.0;
            for (view, (sin, cos)) in trig.iter().enumerate() {
                let u = (-x * sin + y * cos) / par.spacing + center;
                let u0 = u.floor();
                let frac = u - u0;
                let u0 = u0 as isize;
                let line = &filtered[view * par.n_det..(view + 1) * par.n_det];
                if u0 >= 0 && (u0 as usize) < par.n_det {
                    acc += (1.0 - frac) * line[u0 as usize];
                }
                if u0 + 1 >= 0 && ((u0 + 1) as usize) < par.n_det {
                    acc += frac * line[(u0 + 1) as usize];
                }
            }
            *px = acc * weight;
        }
    });
    Image::from_grid(grid, data)
}

/// Resamples equiangular fan data onto parallel rays `θ = β + γ`, `s = R sin γ`.
fn rebin_fan(sino: &Sinogram, geom: &ScanGeometry) -> ParallelData {
    let n_views = geom.n_angles();
    let n_det = geom.n_det();
    let radius = geom.src_to_origin();
    let d_gamma = geom.det_spacing();
    let d_beta = geom.angle_step();
    let beta0 = geom.angle_start();
    let gamma_c = (n_det as f64 - 1.0) / 2.0 * d_gamma;
    let full_scan = geom.coverage() >= 2.0 * PI - 1e-9;

    let (theta0, n_theta) = if full_scan {
        (beta0, n_views)
    } else {
        let last = geom.angles()[n_views - 1];
        (beta0 - gamma_c, ((last - beta0 + 2.0 * gamma_c) / d_beta).floor() as usize + 1)
    };
    let spacing = radius * d_gamma;
    let s_center = (n_det as f64 - 1.0) / 2.0;
    let g_center = (n_det as f64 - 1.0) / 2.0;

    let sample = |bi: f64, gi: f64| -> f64 {
        // bilinear lookup in (view, bin) index space
        let b0 = bi.floor();
        let g0 = gi.floor();
        let (fb, fg) = (bi - b0, gi - g0);
        let mut acc = 0.0;
        for (db, wb) in [(0i64, 1.0 - fb), (1, fb)] {
            if wb == 0.0 {
                continue;
            }
            let mut b = b0 as i64 + db;
            if full_scan {
                b = b.rem_euclid(n_views as i64);
            } else if b < 0 || b >= n_views as i64 {
                continue;
            }
            for (dg, wg) in [(0i64, 1.0 - fg), (1, fg)] {
                let g = g0 as i64 + dg;
                if wg == 0.0 || g < 0 || g >= n_det as i64 {
                    continue;
                }
                acc += wb * wg * sino.data[b as usize * n_det + g as usize];
            }
        }
        acc
    };

    let mut data = vec![0.0; n_theta * n_det];
    let angles: Vec<f64> = (0..n_theta).map(|m| theta0 + m as f64 * d_beta).collect();
    data.par_chunks_mut(n_det).enumerate().for_each(|(m, out)| {
        let theta = angles[m];
        for (k, v) in out.iter_mut().enumerate() {
            let s = (k as f64 - s_center) * spacing;
            if s.abs() >= radius {
                continue;
            }
            let gamma = (s / radius).asin();
            let gi = gamma / d_gamma + g_center;
            if gi < 0.0 || gi > (n_det - 1) as f64 {
                continue;
            }
            let bi = (theta - gamma - beta0) / d_beta;
            if !full_scan && (bi < 0.0 || bi > (n_views - 1) as f64) {
                continue;
            }
            *v = sample(bi, gi);
        }
    });
    ParallelData { angles, angle_step: d_beta, n_det, spacing, data }
}

//! Phantoms and the pre-log Poisson-Gaussian measurement model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tomo::{forward_project, Image, ImageGrid, ScanGeometry, Sinogram, TomoError, UnitSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error("InvalidNoiseModel: {0}")]
    InvalidNoiseModel(String),
    #[error("InvalidPhantom: {0}")]
    InvalidPhantom(String),
    #[error(transparent)]
    Tomo(#[from] TomoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    SheppLogan,
    EllipseCardiac,
}

impl std::str::FromStr for PhantomKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "shepp-logan" | "shepplogan" => Ok(PhantomKind::SheppLogan),
            "ellipse-cardiac" | "cardiac" => Ok(PhantomKind::EllipseCardiac),
            other => Err(format!("unknown phantom kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub size: usize,
    /// Only used by `EllipseCardiac`.
    pub seed: u64,
    /// mm
    pub pixel_size: f64,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, size: usize) -> Self {
        Self { kind, size, seed: 0, pixel_size: 1.0 }
    }
}

/// One ellipse of an additive phantom, in normalized coordinates `[-1, 1]²`
/// with `y` pointing up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub value: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    /// degrees, counter-clockwise
    pub phi: f64,
}

impl Ellipse {
    const fn new(value: f64, a: f64, b: f64, x0: f64, y0: f64, phi: f64) -> Self {
        Self { value, a, b, x0, y0, phi }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi.to_radians().sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// Modified (higher-contrast) Shepp-Logan ellipses; values sum into `[0, 1]`.
pub const SHEPP_LOGAN_ELLIPSES: [Ellipse; 10] = [
    Ellipse::new(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    Ellipse::new(-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    Ellipse::new(-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    Ellipse::new(-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    Ellipse::new(0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    Ellipse::new(0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    Ellipse::new(0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    Ellipse::new(0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    Ellipse::new(0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    Ellipse::new(0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
];

/// Sum of `ellipses` at normalized point `(x, y)`.
pub fn ellipse_sum(ellipses: &[Ellipse], x: f64, y: f64) -> f64 {
    ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.value).sum()
}

/// Normalized coordinates of a pixel center; `y` points up (row 0 is the top).
pub fn normalized_coords(size: usize, row: usize, col: usize) -> (f64, f64) {
    let half = size as f64 / 2.0;
    let c = (size as f64 - 1.0) / 2.0;
    ((col as f64 - c) / half, (c - row as f64) / half)
}

/// Phantom image in normalized units, values in `[0, 1]`.
pub fn make_phantom(spec: &PhantomSpec) -> Result<Image, SimulateError> {
    if spec.size < 8 {
        return Err(SimulateError::InvalidPhantom(format!("size {} is below 8", spec.size)));
    }
    if !(spec.pixel_size > 0.0 && spec.pixel_size.is_finite()) {
        return Err(SimulateError::InvalidPhantom(format!("pixel size {}", spec.pixel_size)));
    }
    let n = spec.size;
    let data: Vec<f64> = match spec.kind {
        PhantomKind::SheppLogan => (0..n * n)
            .map(|i| {
                let (x, y) = normalized_coords(n, i / n, i % n);
                ellipse_sum(&SHEPP_LOGAN_ELLIPSES, x, y)
            })
            .collect(),
        PhantomKind::EllipseCardiac => cardiac(n, spec.seed),
    };
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(Image::new(n, n, spec.pixel_size, data)?.with_units(UnitSpace::Normalized))
}

/// Painter's-order primitive of the cardiac phantom.
enum Shape {
    Ellipse(Ellipse),
    /// Arc of a circle with a given stroke half-width.
    Arc { cx: f64, cy: f64, r: f64, start: f64, span: f64, half_width: f64, value: f64 },
}

impl Shape {
    fn sample(&self, x: f64, y: f64) -> Option<f64> {
        match self {
            Shape::Ellipse(e) => e.contains(x, y).then_some(e.value),
            Shape::Arc { cx, cy, r, start, span, half_width, value } => {
                let (dx, dy) = (x - cx, y - cy);
                let d = (dx * dx + dy * dy).sqrt();
                let ang = (dy.atan2(dx) - start).rem_euclid(2.0 * std::f64::consts::PI);
                ((d - r).abs() <= *half_width && ang <= *span).then_some(*value)
            }
        }
    }
}

fn cardiac(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut j = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let hx = j(-0.06, 0.06);
    let hy = j(-0.06, 0.06);
    let tilt = j(-30.0, 30.0);
    let outer_a = j(0.30, 0.36);
    let outer_b = j(0.26, 0.31);
    let wall = j(0.06, 0.09);
    let mut shapes = vec![
        // body and mediastinal soft tissue
        Shape::Ellipse(Ellipse::new(0.25, 0.88, 0.70, 0.0, 0.0, 0.0)),
        // myocardium
        Shape::Ellipse(Ellipse::new(0.55, outer_a, outer_b, hx, hy, tilt)),
        // left ventricular blood pool
        Shape::Ellipse(Ellipse::new(j(0.80, 0.90), outer_a - wall, outer_b - wall, hx + 0.04, hy, tilt)),
        // right ventricle, partly outside the left ventricular wall
        Shape::Ellipse(Ellipse::new(j(0.68, 0.78), j(0.14, 0.19), j(0.10, 0.15), hx - outer_a * 0.7, hy + j(0.02, 0.1), tilt + j(-20.0, 20.0))),
    ];
    let n_vessels = if j(0.0, 1.0) < 0.5 { 2 } else { 3 };
    for _ in 0..n_vessels {
        shapes.push(Shape::Arc {
            cx: hx,
            cy: hy,
            r: outer_a + j(0.02, 0.08),
            start: j(0.0, 2.0 * std::f64::consts::PI),
            span: j(0.7, 1.5),
            half_width: j(0.008, 0.014).max(0.75 / n as f64),
            value: 1.0,
        });
    }
    (0..n * n)
        .map(|i| {
            let (x, y) = normalized_coords(n, i / n, i % n);
            shapes.iter().filter_map(|s| s.sample(x, y)).last().unwrap_or(0.0)
        })
        .collect()
}

/// Pre-log detector model: `c ~ Poisson(i0 e^{-ℓ}) + N(0, sigma_e²)`,
/// `y = −ln(max(c, epsilon) / i0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub i0: f64,
    pub sigma_e: f64,
    pub epsilon: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { i0: 1e5, sigma_e: 10.0, epsilon: 0.5 }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SimulateError> {
        if !(self.i0 > 0.0 && self.i0.is_finite()) {
            return Err(SimulateError::InvalidNoiseModel(format!("i0 = {} must be positive", self.i0)));
        }
        if !(self.sigma_e >= 0.0 && self.sigma_e.is_finite()) {
            return Err(SimulateError::InvalidNoiseModel(format!("sigma_e = {} must be nonnegative", self.sigma_e)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= self.i0) {
            return Err(SimulateError::InvalidNoiseModel(format!("epsilon = {} must be in (0, i0]", self.epsilon)));
        }
        Ok(())
    }

    /// One detector reading with expected photon count `mean`.
    pub fn sample_counts<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        let photons = if mean < 30.0 {
            poisson_inversion(mean, rng)
        } else {
            let z: f64 = StandardNormal.sample(rng);
            mean + mean.sqrt() * z
        };
        let z: f64 = StandardNormal.sample(rng);
        photons + self.sigma_e * z
    }

    pub fn log_transform(&self, counts: f64) -> f64 {
        -(counts.max(self.epsilon) / self.i0).ln()
    }
}

fn poisson_inversion<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mut k = 0u32;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf && p > 0.0 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k as f64
}

/// Generator for ray `ray` of a measurement seeded with `seed`; independent
/// of evaluation order.
fn ray_rng(seed: u64, ray: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ray as u64);
    rng
}

/// Pre-log counts for every ray of `geom` through `img` (attenuation units).
pub fn simulate_counts(img: &Image, geom: &ScanGeometry, nm: &NoiseModel, seed: u64) -> Result<Vec<f64>, SimulateError> {
    nm.validate()?;
    let clean = forward_project(img, geom)?;
    Ok(clean
        .data
        .par_iter()
        .enumerate()
        .map(|(ray, l)| nm.sample_counts(nm.i0 * (-l).exp(), &mut ray_rng(seed, ray)))
        .collect())
}

/// Post-log measurement. Without a noise model this is exactly the line
/// integral `Ax`.
pub fn simulate_measurement(
    img: &Image,
    geom: &ScanGeometry,
    nm: Option<&NoiseModel>,
    seed: u64,
) -> Result<Sinogram, SimulateError> {
    let Some(nm) = nm else {
        return Ok(forward_project(img, geom)?);
    };
    let counts = simulate_counts(img, geom, nm, seed)?;
    let mut sino = Sinogram::new(geom.n_angles(), geom.n_det(), counts.iter().map(|c| nm.log_transform(*c)).collect())?;
    sino.geometry_id = Some(geom.id());
    Ok(sino)
}

/// Grid a phantom of `spec` lives on.
pub fn phantom_grid(spec: &PhantomSpec) -> ImageGrid {
    ImageGrid::square(spec.size, spec.pixel_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn shepp_logan_center_and_range() {
        let img = make_phantom(&PhantomSpec::new(PhantomKind::SheppLogan, 128)).unwrap();
        let (x, y) = normalized_coords(128, 64, 64);
        assert_eq!(img.get(64, 64), ellipse_sum(&SHEPP_LOGAN_ELLIPSES, x, y));
        assert!((img.get(64, 64) - 0.2).abs() < 1e-12);
        let (lo, hi) = img.min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
        assert_eq!(img.units, UnitSpace::Normalized);
    }

    #[test]
    fn cardiac_is_seeded() {
        let mut spec = PhantomSpec::new(PhantomKind::EllipseCardiac, 64);
        spec.seed = 4;
        let a = make_phantom(&spec).unwrap();
        assert_eq!(a, make_phantom(&spec).unwrap());
        spec.seed = 5;
        assert_ne!(a, make_phantom(&spec).unwrap());
        let (lo, hi) = a.min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
        assert!(a.data.iter().any(|v| *v == 1.0), "vessels present");
    }

    #[test]
    fn small_phantom_rejected() {
        assert!(make_phantom(&PhantomSpec::new(PhantomKind::SheppLogan, 7)).is_err());
    }

    #[test]
    fn noise_model_validation() {
        assert!(NoiseModel::default().validate().is_ok());
        assert!(NoiseModel { i0: 0.0, ..Default::default() }.validate().is_err());
        assert!(NoiseModel { epsilon: 2e5, ..Default::default() }.validate().is_err());
        assert!(NoiseModel { sigma_e: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn poisson_small_mean_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 40000;
        let lam = 4.0;
        let xs: Vec<f64> = (0..n).map(|_| poisson_inversion(lam, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - lam).abs() < 4.0 * (lam / n as f64).sqrt());
        assert!((var - lam).abs() / lam < 0.05);
    }

    #[test]
    fn noiseless_path_is_forward_projection() {
        let img = make_phantom(&PhantomSpec::new(PhantomKind::SheppLogan, 32)).unwrap();
        let img = crate::tomo::UnitMap::SHEPP_LOGAN.to_attenuation(&img);
        let g = ScanGeometry::parallel_for_size(32, 1.0, 0.0, PI, 20).unwrap();
        let y = simulate_measurement(&img, &g, None, 0).unwrap();
        assert_eq!(y, forward_project(&img, &g).unwrap());
    }

    #[test]
    fn seeds_control_realizations() {
        let img = Image::zeros(ImageGrid::square(16, 1.0));
        let g = ScanGeometry::parallel_for_size(16, 1.0, 0.0, PI, 10).unwrap();
        let nm = NoiseModel::default();
        let a = simulate_measurement(&img, &g, Some(&nm), 1).unwrap();
        assert_eq!(a, simulate_measurement(&img, &g, Some(&nm), 1).unwrap());
        assert_ne!(a, simulate_measurement(&img, &g, Some(&nm), 2).unwrap());
    }

    #[test]
    fn epsilon_floor_keeps_log_finite() {
        let nm = NoiseModel { i0: 10.0, sigma_e: 50.0, epsilon: 0.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert!(nm.log_transform(nm.sample_counts(0.01, &mut rng)).is_finite());
        }
    }
}

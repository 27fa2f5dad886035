//! Image-quality metrics: PSNR, SSIM, histogram correlation and an LBP
//! texture distance.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::tomo::Image;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("ImageTooSmall: {0}")]
    ImageTooSmall(String),
    #[error("DegenerateHistogram: a histogram has zero variance")]
    DegenerateHistogram,
    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),
}

fn check_shapes(a: &Image, b: &Image) -> Result<(), MetricsError> {
    if !a.same_shape(b) {
        return Err(MetricsError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

fn check_range(range: f64) -> Result<(), MetricsError> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(MetricsError::InvalidParameter(format!("data range {range} must be positive")));
    }
    Ok(())
}

/// `10 log10(range² / MSE)`, `+∞` for identical images.
pub fn psnr(a: &Image, b: &Image, range: f64) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    check_range(range)?;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (range * range / mse).log10())
}

const WIN: usize = 11;
const WIN_SIGMA: f64 = 1.5;

fn gaussian_window() -> [f64; WIN] {
    let mut w = [0.0; WIN];
    let c = (WIN / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * WIN_SIGMA * WIN_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-region filtering of a `w × h` grid.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64; WIN]) -> Vec<f64> {
    let ow = w - WIN + 1;
    let oh = h - WIN + 1;
    let mut tmp = vec![0.0; ow * h];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = (0..WIN).map(|j| k[j] * data[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..WIN).map(|j| k[j] * tmp[(r + j) * ow + c]).sum();
        }
    }
    out
}

/// Local SSIM over every full 11×11 Gaussian window (σ = 1.5). The map is
/// `(width − 10) × (height − 10)`.
pub fn ssim_map(a: &Image, b: &Image, range: f64) -> Result<Image, MetricsError> {
    check_shapes(a, b)?;
    check_range(range)?;
    if a.width < WIN || a.height < WIN {
        return Err(MetricsError::ImageTooSmall(format!("SSIM needs at least {WIN}x{WIN} pixels")));
    }
    let (w, h) = (a.width, a.height);
    let k = gaussian_window();
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect() };
    let mu_a = filter_valid(&a.data, w, h, &k);
    let mu_b = filter_valid(&b.data, w, h, &k);
    let aa = filter_valid(&prod(&|x, _| x * x), w, h, &k);
    let bb = filter_valid(&prod(&|_, y| y * y), w, h, &k);
    let ab = filter_valid(&prod(&|x, y| x * y), w, h, &k);
    let map = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect();
    Image::new(w - WIN + 1, h - WIN + 1, a.pixel_size, map).map_err(|e| MetricsError::InvalidParameter(e.to_string()))
}

/// Mean of [`ssim_map`].
pub fn ssim(a: &Image, b: &Image, range: f64) -> Result<f64, MetricsError> {
    let map = ssim_map(a, b, range)?;
    Ok(map.data.iter().sum::<f64>() / map.data.len() as f64)
}

fn histogram(img: &Image, bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let scale = bins as f64 / (hi - lo);
    for v in &img.data {
        let k = ((v - lo) * scale).floor();
        let k = if k < 0.0 { 0 } else { (k as usize).min(bins - 1) };
        h[k] += 1.0;
    }
    h
}

/// Pearson correlation of the two `bins`-bin histograms over `[lo, hi]`;
/// values outside the interval fall into the edge bins.
pub fn histogram_correlation(a: &Image, b: &Image, bins: usize, lo: f64, hi: f64) -> Result<f64, MetricsError> {
    if bins < 2 || !(hi > lo) {
        return Err(MetricsError::InvalidParameter(format!("need bins >= 2 and hi > lo (bins {bins}, [{lo}, {hi}])")));
    }
    let ha = histogram(a, bins, lo, hi);
    let hb = histogram(b, bins, lo, hi);
    let mean = |h: &[f64]| h.iter().sum::<f64>() / bins as f64;
    let (ma, mb) = (mean(&ha), mean(&hb));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ha.iter().zip(&hb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(MetricsError::DegenerateHistogram);
    }
    Ok(cov / (va * vb).sqrt())
}

const NEIGHBOURS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)];

/// Normalized 256-bin histogram of raw 8-neighbour LBP codes over interior
/// pixels.
pub fn lbp_histogram(img: &Image) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let mut hist = vec![0.0; 256];
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let center = img.data[r * w + c];
            let mut code = 0usize;
            for (bit, (dr, dc)) in NEIGHBOURS.iter().enumerate() {
                let v = img.data[(r as isize + dr) as usize * w + (c as isize + dc) as usize];
                if v >= center {
                    code |= 1 << bit;
                }
            }
            hist[code] += 1.0;
        }
    }
    let n = ((w - 2) * (h - 2)) as f64;
    hist.iter_mut().for_each(|v| *v /= n);
    hist
}

/// Total-variation distance between LBP histograms, in `[0, 1]`; smaller
/// means more similar texture.
pub fn lbp_texture_similarity(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    if a.width < 3 || a.height < 3 {
        return Err(MetricsError::ImageTooSmall("LBP needs at least 3x3 pixels".into()));
    }
    let ha = lbp_histogram(a);
    let hb = lbp_histogram(b);
    Ok(0.5 * ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

fn ser_psnr<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_psnr<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// The four quality figures for one image pair. An infinite PSNR is written
/// as JSON `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(serialize_with = "ser_psnr", deserialize_with = "de_psnr")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub hc: f64,
    pub lbp_ts: f64,
    pub data_range: f64,
}

impl MetricsReport {
    /// All metrics of `test` against `reference`; the histogram uses 256 bins
    /// over `[0, data_range]`.
    pub fn compute(test: &Image, reference: &Image, data_range: f64) -> Result<Self, MetricsError> {
        Ok(Self {
            psnr_db: psnr(test, reference, data_range)?,
            ssim: ssim(test, reference, data_range)?,
            hc: histogram_correlation(test, reference, 256, 0.0, data_range)?,
            lbp_ts: lbp_texture_similarity(test, reference)?,
            data_range,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(n: usize, v: f64) -> Image {
        Image::new(n, n, 1.0, vec![v; n * n]).unwrap()
    }

    #[test]
    fn psnr_closed_forms() {
        let a = constant(8, 0.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(psnr(&a, &constant(8, 1.0), 1.0).unwrap(), 0.0);
        let v = psnr(&a, &constant(8, 0.5), 1.0).unwrap();
        assert!((v - 10.0 * 4f64.log10()).abs() < 1e-12);
        assert!((v - 6.0206).abs() < 1e-4);
        assert!(psnr(&a, &constant(4, 0.0), 1.0).is_err());
    }

    #[test]
    fn ssim_constant_offset_is_luminance_term() {
        let (ma, mb) = (0.3, 0.5);
        let c1 = 1e-4;
        let want = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        let got = ssim(&constant(16, ma), &constant(16, mb), 1.0).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!(ssim(&constant(8, 0.0), &constant(8, 0.0), 1.0).is_err());
    }

    #[test]
    fn lbp_constant_images_match() {
        assert_eq!(lbp_texture_similarity(&constant(8, 0.1), &constant(8, 0.9)).unwrap(), 0.0);
        let h = lbp_histogram(&constant(5, 0.4));
        assert_eq!(h[255], 1.0);
    }

    #[test]
    fn report_json_keys() {
        let mut r = MetricsReport { psnr_db: f64::INFINITY, ssim: 1.0, hc: 1.0, lbp_ts: 0.0, data_range: 1.0 };
        let js = r.to_json();
        assert!(js.contains("\"psnr_db\": null"));
        let back: MetricsReport = serde_json::from_str(&js).unwrap();
        assert_eq!(back, r);
        r.psnr_db = 31.5;
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back.psnr_db, 31.5);
    }
}

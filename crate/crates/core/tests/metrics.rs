mod common;

use common::{random_image, rng};
use lact_core::metrics::{histogram_correlation, lbp_texture_similarity, psnr, ssim, ssim_map, MetricsError, MetricsReport};
use lact_core::{Image, ImageGrid};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn constant(w: usize, h: usize, v: f64) -> Image {
    Image::new(w, h, 1.0, vec![v; w * h]).unwrap()
}

fn uniform_noise(n: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    Image::new(n, n, 1.0, (0..n * n).map(|_| r.random_range(0.0..1.0)).collect()).unwrap()
}

/// SSIM evaluated window by window with a 2D Gaussian, no separability.
fn dense_ssim(a: &Image, b: &Image, range: f64) -> f64 {
    let (w, h) = (a.width, a.height);
    let mut k = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (-(((i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2)) / 4.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
    let mut acc = 0.0;
    let mut count = 0;
    for r in 0..=h - 11 {
        for c in 0..=w - 11 {
            let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let g = k[i][j] / total;
                    let (x, y) = (a.data[(r + i) * w + c + j], b.data[(r + i) * w + c + j]);
                    ma += g * x;
                    mb += g * y;
                    aa += g * x * x;
                    bb += g * y * y;
                    ab += g * x * y;
                }
            }
            let (va, vb, cov) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}

/// Pearson correlation of two histograms built by bin-edge comparison.
fn dense_hc(a: &Image, b: &Image, bins: usize, lo: f64, hi: f64) -> f64 {
    let hist = |img: &Image| {
        let mut h = vec![0.0; bins];
        let width = (hi - lo) / bins as f64;
        for v in &img.data {
            let mut k = 0;
            while k + 1 < bins && *v >= lo + (k + 1) as f64 * width {
                k += 1;
            }
            h[k] += 1.0;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    let n = bins as f64;
    let (ma, mb) = (ha.iter().sum::<f64>() / n, hb.iter().sum::<f64>() / n);
    let cov: f64 = ha.iter().zip(&hb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ha.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = hb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// LBP distance with a different (row-major) neighbour bit order; the
/// total-variation distance does not depend on how codes are numbered.
fn dense_lbp(a: &Image, b: &Image) -> f64 {
    let hist = |img: &Image| {
        let (w, h) = (img.width, img.height);
        let mut out = vec![0.0; 256];
        for r in 1..h - 1 {
            for c in 1..w - 1 {
                let center = img.data[r * w + c];
                let mut code = 0;
                let mut bit = 0;
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        if img.data[(r as isize + dr) as usize * w + (c as isize + dc) as usize] >= center {
                            code |= 1 << bit;
                        }
                        bit += 1;
                    }
                }
                out[code] += 1.0 / ((w - 2) * (h - 2)) as f64;
            }
        }
        out
    };
    let (ha, hb) = (hist(a), hist(b));
    0.5 * ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[test]
fn identity_values() {
    let a = uniform_noise(32, 1);
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    assert!((ssim(&a, &a, 1.0).unwrap() - 1.0).abs() <= 1e-12);
    assert!((histogram_correlation(&a, &a, 256, 0.0, 1.0).unwrap() - 1.0).abs() <= 1e-12);
    assert_eq!(lbp_texture_similarity(&a, &a).unwrap(), 0.0);
}

#[test]
fn psnr_closed_forms() {
    let zero = constant(16, 16, 0.0);
    assert_eq!(psnr(&zero, &constant(16, 16, 1.0), 1.0).unwrap(), 0.0);
    assert!((psnr(&zero, &constant(16, 16, 0.5), 1.0).unwrap() - 6.0206).abs() <= 5e-5);
    assert_eq!(psnr(&zero, &constant(16, 16, 0.5), 1.0).unwrap(), 10.0 * 4f64.log10());
    assert!(matches!(psnr(&zero, &constant(8, 16, 0.0), 1.0), Err(MetricsError::ShapeMismatch(_))));
}

#[test]
fn ssim_matches_dense_windows() {
    for (w, h, seed) in [(11, 11, 1), (16, 14, 2), (23, 19, 3)] {
        let a = random_image(ImageGrid::new(w, h, 1.0), seed);
        let b = random_image(ImageGrid::new(w, h, 1.0), seed + 10);
        let got = ssim(&a, &b, 2.0).unwrap();
        assert!((got - dense_ssim(&a, &b, 2.0)).abs() <= 1e-12, "{w}x{h}");
        let map = ssim_map(&a, &b, 2.0).unwrap();
        assert_eq!((map.width, map.height), (w - 10, h - 10));
    }
    assert!(matches!(ssim(&constant(10, 20, 0.0), &constant(10, 20, 0.0), 1.0), Err(MetricsError::ImageTooSmall(_))));
}

#[test]
fn ssim_constant_offset_is_the_luminance_term() {
    for (ma, c) in [(0.2, 0.1), (0.5, 0.3), (0.0, 0.05)] {
        let mb: f64 = ma + c;
        let c1 = 1e-4;
        let want = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        let got = ssim(&constant(20, 20, ma), &constant(20, 20, mb), 1.0).unwrap();
        assert!(got < 1.0);
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

#[test]
fn ssim_of_independent_noise_is_near_zero() {
    let s = ssim(&uniform_noise(128, 11), &uniform_noise(128, 12), 1.0).unwrap();
    assert!(s.abs() < 0.1, "{s}");
}

#[test]
fn histogram_correlation_cases() {
    let a = uniform_noise(40, 3);
    let b = random_image(ImageGrid::square(40, 1.0), 4);
    for bins in [2, 16, 256] {
        let got = histogram_correlation(&a, &b, bins, -0.5, 1.0).unwrap();
        assert!((got - dense_hc(&a, &b, bins, -0.5, 1.0)).abs() <= 1e-12, "bins {bins}");
    }
    let mut shuffled = a.clone();
    shuffled.data.shuffle(&mut rng(5));
    assert!((histogram_correlation(&a, &shuffled, 64, 0.0, 1.0).unwrap() - 1.0).abs() <= 1e-12);
    // a fills the lower half of the range, b the upper half
    let low = Image::new(40, 40, 1.0, a.data.iter().map(|v| 0.5 * v).collect()).unwrap();
    let high = Image::new(40, 40, 1.0, a.data.iter().map(|v| 0.5 + 0.5 * v).collect()).unwrap();
    let hc = histogram_correlation(&low, &high, 64, 0.0, 1.0).unwrap();
    assert!(hc < 0.0, "{hc}");
    assert!((hc - dense_hc(&low, &high, 64, 0.0, 1.0)).abs() <= 1e-12);
    // one pixel per bin gives a flat histogram with zero variance
    let flat = Image::new(4, 4, 1.0, (0..16).map(|k| (k as f64 + 0.5) / 16.0).collect()).unwrap();
    let any = uniform_noise(4, 6);
    assert_eq!(histogram_correlation(&flat, &any, 16, 0.0, 1.0), Err(MetricsError::DegenerateHistogram));
}

#[test]
fn lbp_cases() {
    assert_eq!(lbp_texture_similarity(&constant(20, 20, 0.2), &constant(20, 20, 0.9)).unwrap(), 0.0);
    let stripes = Image::new(64, 64, 1.0, (0..64 * 64).map(|k| ((k % 64) % 2) as f64).collect()).unwrap();
    let noise = uniform_noise(64, 7);
    let d = lbp_texture_similarity(&stripes, &noise).unwrap();
    assert!(d > 0.3, "{d}");
    assert!((d - dense_lbp(&stripes, &noise)).abs() <= 1e-12);
    let other = random_image(ImageGrid::new(17, 9, 1.0), 8);
    let more = random_image(ImageGrid::new(17, 9, 1.0), 9);
    assert!((lbp_texture_similarity(&other, &more).unwrap() - dense_lbp(&other, &more)).abs() <= 1e-12);
    assert!(lbp_texture_similarity(&constant(2, 5, 0.0), &constant(2, 5, 0.0)).is_err());
}

#[test]
fn report_json_keys() {
    let a = uniform_noise(24, 1);
    let b = uniform_noise(24, 2);
    let r = MetricsReport::compute(&a, &b, 1.0).unwrap();
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    for k in ["psnr_db", "ssim", "hc", "lbp_ts", "data_range"] {
        assert!(keys.contains(&k), "{k}");
    }
    assert_eq!(keys.len(), 5);
    let same = MetricsReport::compute(&a, &a, 1.0).unwrap();
    let v: serde_json::Value = serde_json::from_str(&same.to_json()).unwrap();
    assert!(v["psnr_db"].is_null());
    assert_eq!(v["ssim"], 1.0);
    let back: MetricsReport = serde_json::from_str(&same.to_json()).unwrap();
    assert_eq!(back.psnr_db, f64::INFINITY);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn psnr_and_ssim_are_symmetric(seed in any::<u64>(), w in 11usize..24, h in 11usize..24) {
        let a = random_image(ImageGrid::new(w, h, 1.0), seed);
        let b = random_image(ImageGrid::new(w, h, 1.0), seed ^ 0xff);
        prop_assert_eq!(psnr(&a, &b, 2.0).unwrap(), psnr(&b, &a, 2.0).unwrap());
        prop_assert!((ssim(&a, &b, 2.0).unwrap() - ssim(&b, &a, 2.0).unwrap()).abs() <= 1e-12);
        prop_assert!((ssim(&a, &a, 2.0).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert!(ssim(&a, &b, 2.0).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn hc_ignores_common_permutations(seed in any::<u64>(), n in 4usize..30) {
        let a = random_image(ImageGrid::square(n, 1.0), seed);
        let b = random_image(ImageGrid::square(n, 1.0), seed.wrapping_add(1));
        let mut order: Vec<usize> = (0..n * n).collect();
        order.shuffle(&mut rng(seed));
        let permute = |img: &Image| Image::new(n, n, 1.0, order.iter().map(|k| img.data[*k]).collect()).unwrap();
        let base = histogram_correlation(&a, &b, 32, -1.0, 1.0);
        let moved = histogram_correlation(&permute(&a), &permute(&b), 32, -1.0, 1.0);
        match (base, moved) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= 1e-12),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn lbp_ignores_common_offsets(seed in any::<u64>(), w in 3usize..30, h in 3usize..30, shift in -5.0f64..5.0) {
        // quarter-integer grey levels keep `v + shift` comparisons exact
        let mut r = rng(seed);
        let a = Image::new(w, h, 1.0, (0..w * h).map(|_| r.random_range(0..8) as f64 * 0.25).collect()).unwrap();
        let b = Image::new(w, h, 1.0, (0..w * h).map(|_| r.random_range(0..8) as f64 * 0.25).collect()).unwrap();
        let s = (shift * 4.0).round() / 4.0;
        let add = |img: &Image| Image::new(w, h, 1.0, img.data.iter().map(|v| v + s).collect()).unwrap();
        let d = lbp_texture_similarity(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, lbp_texture_similarity(&add(&a), &add(&b)).unwrap());
    }
}

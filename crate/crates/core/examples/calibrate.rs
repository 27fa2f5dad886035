//! Prints the reference numbers the regression thresholds in the test suite
//! were fixed from. Run with `cargo run --release -p lact-core --example calibrate`.

use std::f64::consts::PI;
use std::time::Instant;

use lact_core::diffusion::{NoiseSchedule, NoisyScore, OracleScore};
use lact_core::metrics::psnr;
use lact_core::pipeline::{psdm_reconstruct, PsdmConfig};
use lact_core::simulate::{make_phantom, PhantomKind, PhantomSpec};
use lact_core::tomo::{fbp, forward_project, operator_norm, ForwardOp, NormTarget, RampFilter};
use lact_core::variational::{pdhg_tv, PdhgParams};
use lact_core::{Image, ImageGrid, ScanGeometry, Sinogram, UnitMap};

fn phantom(size: usize) -> (Image, Image) {
    let p = make_phantom(&PhantomSpec::new(PhantomKind::SheppLogan, size)).unwrap();
    let att = UnitMap::SHEPP_LOGAN.to_attenuation(&p);
    (p, att)
}

fn fbp_psnr(size: usize, lo: f64, hi: f64, n: usize, filter: RampFilter) -> f64 {
    let (p, att) = phantom(size);
    let g = ScanGeometry::parallel_for_size(size, 1.0, lo, hi, n).unwrap();
    let y = forward_project(&att, &g).unwrap();
    let rec = fbp(&y, &g, filter, ImageGrid::square(size, 1.0)).unwrap();
    psnr(&UnitMap::SHEPP_LOGAN.to_normalized(&rec), &p, 1.0).unwrap()
}

/// TV weight shared by the PSDM and PDHG-TV fixtures (attenuation units).
const FIXTURE_LAMBDA: f64 = 3e-4;

fn pdhg_baseline(y: &Sinogram, g: &ScanGeometry, grid: ImageGrid, iters: usize) -> Image {
    let op = ForwardOp::Tomography(g);
    let l = operator_norm(NormTarget::Combined(op), grid, 1e-6, 2000, 0).unwrap().value;
    let (mut x, _) = pdhg_tv(y, op, grid, PdhgParams::from_norm(l, FIXTURE_LAMBDA, iters), None).unwrap();
    x.mask_outside(g.fov_radius());
    x
}

fn main() {
    println!("== FBP, Shepp-Logan 128");
    println!("full 360 views / 2pi RamLak: {:.3} dB", fbp_psnr(128, 0.0, 2.0 * PI, 360, RampFilter::RamLak));
    println!("120 deg / 120 views RamLak: {:.3} dB", fbp_psnr(128, 0.0, 2.0 * PI / 3.0, 120, RampFilter::RamLak));
    for n in [90, 180, 360] {
        println!("{n} views / pi RamLak: {:.3} dB", fbp_psnr(128, 0.0, PI, n, RampFilter::RamLak));
    }

    println!("== PDHG tomography 16x16, 8 angles, lambda 1e-3, 500 iterations");
    {
        let (_, att) = phantom(16);
        let g = ScanGeometry::parallel_for_size(16, 1.0, 0.0, PI, 8).unwrap();
        let grid = ImageGrid::square(16, 1.0);
        let y = forward_project(&att, &g).unwrap();
        let op = ForwardOp::Tomography(&g);
        let l = operator_norm(NormTarget::Combined(op), grid, 1e-8, 5000, 0).unwrap().value;
        let (_, d) = pdhg_tv(&y, op, grid, PdhgParams::from_norm(l, 1e-3, 500), None).unwrap();
        println!("L = {l:.6}, residual = {:.5e}", d.last().unwrap().residual);
    }

    let (lo, hi, n120, n90) = (0.0, 2.0 * PI / 3.0, 60, 45);
    let size = 64;
    let grid = ImageGrid::square(size, 1.0);
    let (p, att) = phantom(size);
    for (label, end, n) in [("120", hi, n120), ("90", PI / 2.0, n90)] {
        println!("== Shepp-Logan 64, {label} deg / {n} views, noiseless");
        let g = ScanGeometry::parallel_for_size(size, 1.0, lo, end, n).unwrap();
        let y = forward_project(&att, &g).unwrap();
        let map = UnitMap::SHEPP_LOGAN;
        let f = fbp(&y, &g, RampFilter::RamLak, grid).unwrap();
        println!("fbp: {:.3} dB", psnr(&map.to_normalized(&f), &p, 1.0).unwrap());
        for iters in [300, 1000, 2000] {
            let x = pdhg_baseline(&y, &g, grid, iters);
            println!("pdhg_tv {iters}: {:.3} dB", psnr(&map.to_normalized(&x), &p, 1.0).unwrap());
        }
        let sched = NoiseSchedule::new(0.01, 1.0, 200).unwrap();
        let score = OracleScore { x_true: p.data.clone(), sched };
        let cfg = PsdmConfig { sched, inner_iters: 10, lambda: Some(FIXTURE_LAMBDA), deterministic: true, seed: 7, ..Default::default() };
        let t = Instant::now();
        let (out, trace) = psdm_reconstruct(&y, &g, grid, &score, &cfg, Some(&p)).unwrap();
        println!(
            "psdm oracle: {:.3} dB, residual {:.4e}, {:.1}s, fuse calls {}",
            psnr(&map.to_normalized(&out), &p, 1.0).unwrap(),
            trace.final_residual().unwrap(),
            t.elapsed().as_secs_f64(),
            trace.fuse_calls
        );
        let cfg_off = PsdmConfig { ff_enabled: false, ..cfg.clone() };
        let (out, _) = psdm_reconstruct(&y, &g, grid, &score, &cfg_off, Some(&p)).unwrap();
        println!("psdm oracle, no fusion: {:.3} dB", psnr(&map.to_normalized(&out), &p, 1.0).unwrap());
        for noise in [0.05, 0.2, 0.5] {
            let noisy = NoisyScore { inner: score.clone(), sched, noise_std: noise, seed: 11 };
            let (on, _) = psdm_reconstruct(&y, &g, grid, &noisy, &cfg, Some(&p)).unwrap();
            let (off, _) = psdm_reconstruct(&y, &g, grid, &noisy, &cfg_off, Some(&p)).unwrap();
            println!(
                "noisy score {noise}: fusion on {:.3} dB, off {:.3} dB",
                psnr(&map.to_normalized(&on), &p, 1.0).unwrap(),
                psnr(&map.to_normalized(&off), &p, 1.0).unwrap()
            );
        }
    }
}

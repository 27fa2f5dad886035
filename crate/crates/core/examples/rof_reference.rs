//! Regenerates `tests/fixtures/rof_step32_{noisy,reference}.lact`: a 32x32
//! unit step plus seeded Gaussian noise (std 0.1), and its ROF solution at
//! lambda = 0.2 from 200 000 PDHG iterations at a quarter of the standard step
//! sizes. The input is rounded to f32 before solving so the stored pair is
//! self-consistent.
//!
//! `cargo run --release -p lact-core --example rof_reference`

use std::path::Path;

use lact_core::io::{quantize, write_image};
use lact_core::tomo::{operator_norm, ForwardOp, NormTarget};
use lact_core::variational::{PdhgParams, PdhgSolver};
use lact_core::{Image, ImageGrid, Sinogram};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() {
    let n = 32;
    let grid = ImageGrid::square(n, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let data = (0..n * n).map(|k| if k % n >= n / 2 { 1.0 } else { 0.0 } + noise.sample(&mut rng)).collect();
    let noisy = quantize(&Image::new(n, n, 1.0, data).unwrap());

    let l = operator_norm(NormTarget::Combined(ForwardOp::Identity), grid, 1e-12, 100_000, 0).unwrap().value;
    let params = PdhgParams { tau: 0.25 / l, sigma: 0.25 / l, theta: 1.0, lambda: 0.2, n_iters: 200_000 };
    let y = Sinogram::from_image(&noisy);
    let solver = PdhgSolver::new(ForwardOp::Identity, &y, grid, params).unwrap();
    let mut st = solver.init_warm(None).unwrap();
    let diag = solver.run(&mut st).unwrap();
    let last = diag.last().unwrap();
    println!("L = {l:.12}, final objective {:.12e}, last primal change {:.3e}", last.objective, last.primal_change);

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir).unwrap();
    write_image(&noisy, &dir.join("rof_step32_noisy.lact")).unwrap();
    write_image(&st.x, &dir.join("rof_step32_reference.lact")).unwrap();
}

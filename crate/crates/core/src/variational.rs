//! Discrete gradient/divergence and the primal-dual (Chambolle-Pock) TV solver.
//!
//! The solver minimizes `½‖Ax − y‖² + λ Σ |∇x|` by alternating
//!
//! ```text
//! p ← (p + σ(A x̄ − y)) / (1 + σ)
//! q ← λ (q + σ∇x̄) / max(λ, |q + σ∇x̄|)
//! x ← x − τ Aᵀp + τ div q
//! x̄ ← x + θ (x − x_prev)
//! ```
//!
//! with `p` living in data space and `q` a vector field on the image grid.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::tomo::{ForwardOp, Image, ImageGrid, Sinogram, TomoError, UnitSpace, VectorField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariationalError {
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("InvalidParams: {0}")]
    InvalidParams(String),
    #[error("NonFinite: iterate became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error(transparent)]
    Tomo(#[from] TomoError),
}

/// Forward differences with Neumann boundary: the last column (row) of the
/// horizontal (vertical) component is zero.
pub fn grad(img: &Image) -> VectorField {
    let (w, h) = (img.width, img.height);
    let mut vf = VectorField::zeros(w, h);
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if col + 1 < w {
                vf.h[i] = img.data[i + 1] - img.data[i];
            }
            if row + 1 < h {
                vf.v[i] = img.data[i + w] - img.data[i];
            }
        }
    }
    vf
}

/// Negative adjoint of [`grad`].
pub fn div(vf: &VectorField) -> Image {
    let (w, h) = (vf.width, vf.height);
    let mut out = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            let mut d = 0.0;
            if col + 1 < w {
                d += vf.h[i];
            }
            if col > 0 {
                d -= vf.h[i - 1];
            }
            if row + 1 < h {
                d += vf.v[i];
            }
            if row > 0 {
                d -= vf.v[i - w];
            }
            out[i] = d;
        }
    }
    Image::from_grid(ImageGrid::new(w, h, 1.0), out)
}

/// Isotropic total variation `Σ |∇x|`.
pub fn total_variation(img: &Image) -> f64 {
    grad(img).magnitude().iter().sum()
}

/// Proximal step on the conjugate of the data term: `(p + σ(Ax̄ − y)) / (1 + σ)`.
pub fn dual_update_p(p: &Sinogram, ax_bar: &Sinogram, y: &Sinogram, sigma: f64) -> Result<Sinogram, VariationalError> {
    if !p.same_shape(ax_bar) || !p.same_shape(y) {
        return Err(VariationalError::ShapeMismatch("dual p, A x̄ and y must share a shape".into()));
    }
    let mut out = p.clone();
    dual_p_in_place(&mut out.data, &ax_bar.data, &y.data, sigma);
    Ok(out)
}

fn dual_p_in_place(p: &mut [f64], ax_bar: &[f64], y: &[f64], sigma: f64) {
    let inv = 1.0 / (1.0 + sigma);
    for ((p, a), y) in p.iter_mut().zip(ax_bar).zip(y) {
        *p = (*p + sigma * (a - y)) * inv;
    }
}

/// Projection of `q + σ∇x̄` onto the pointwise ball of radius λ.
pub fn dual_update_q(q: &VectorField, grad_x_bar: &VectorField, sigma: f64, lambda: f64) -> Result<VectorField, VariationalError> {
    if !q.same_shape(grad_x_bar) {
        return Err(VariationalError::ShapeMismatch("dual q and ∇x̄ must share a shape".into()));
    }
    let mut out = q.clone();
    dual_q_in_place(&mut out, grad_x_bar, sigma, lambda);
    Ok(out)
}

fn dual_q_in_place(q: &mut VectorField, g: &VectorField, sigma: f64, lambda: f64) {
    for i in 0..q.h.len() {
        let sh = q.h[i] + sigma * g.h[i];
        let sv = q.v[i] + sigma * g.v[i];
        let m = sh.hypot(sv);
        let scale = lambda / lambda.max(m);
        q.h[i] = sh * scale;
        q.v[i] = sv * scale;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdhgParams {
    pub tau: f64,
    pub sigma: f64,
    pub theta: f64,
    pub lambda: f64,
    pub n_iters: usize,
}

impl PdhgParams {
    /// `τ = σ = 1/L`, `θ = 1`.
    pub fn from_norm(op_norm: f64, lambda: f64, n_iters: usize) -> Self {
        Self { tau: 1.0 / op_norm, sigma: 1.0 / op_norm, theta: 1.0, lambda, n_iters }
    }

    pub fn validate(&self) -> Result<(), VariationalError> {
        let ok = self.tau > 0.0
            && self.sigma > 0.0
            && (0.0..=1.0).contains(&self.theta)
            && self.lambda > 0.0
            && self.tau.is_finite()
            && self.sigma.is_finite()
            && self.lambda.is_finite();
        if ok {
            Ok(())
        } else {
            Err(VariationalError::InvalidParams(format!("{self:?}")))
        }
    }

    /// Step-size condition `τσL² ≤ 1`.
    pub fn satisfies_step_condition(&self, op_norm: f64) -> bool {
        self.tau * self.sigma * op_norm * op_norm <= 1.0 + 1e-9
    }
}

/// Iterate of the primal-dual scheme, with cached data-space images of the
/// primal and extrapolated primal.
#[derive(Debug, Clone)]
pub struct PdhgState {
    pub x: Image,
    pub x_bar: Image,
    pub p: Sinogram,
    pub q: VectorField,
    pub iter: usize,
    ax: Sinogram,
    ax_bar: Sinogram,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    /// `½‖Ax − y‖² + λ TV(x)` at the new primal.
    pub objective: f64,
    /// `‖x_new − x_old‖`
    pub primal_change: f64,
    /// `‖Ax − y‖ / ‖y‖` (absolute when `y = 0`).
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PdhgDiagnostics {
    pub records: Vec<IterRecord>,
}

impl PdhgDiagnostics {
    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(&mut f)?;
        f.flush()
    }

    pub fn write_csv_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,objective,primal_change,residual")?;
        for r in &self.records {
            writeln!(out, "{},{:e},{:e},{:e}", r.iteration, r.objective, r.primal_change, r.residual)?;
        }
        Ok(())
    }
}

/// Operator, data and parameters of one PDHG-TV problem.
pub struct PdhgSolver<'a> {
    pub op: ForwardOp<'a>,
    pub y: &'a Sinogram,
    pub grid: ImageGrid,
    pub params: PdhgParams,
    y_norm: f64,
}

impl<'a> PdhgSolver<'a> {
    pub fn new(op: ForwardOp<'a>, y: &'a Sinogram, grid: ImageGrid, params: PdhgParams) -> Result<Self, VariationalError> {
        params.validate()?;
        let (rows, cols) = op.data_shape(&grid);
        if y.n_angles != rows || y.n_det != cols {
            return Err(VariationalError::ShapeMismatch(format!(
                "data is {}x{} but the operator produces {rows}x{cols}",
                y.n_angles, y.n_det
            )));
        }
        Ok(Self { op, y, grid, params, y_norm: y.norm() })
    }

    /// Zero duals with primal `x` and extrapolated primal `x_bar`.
    pub fn init(&self, x: Image, x_bar: Image) -> Result<PdhgState, VariationalError> {
        for img in [&x, &x_bar] {
            if img.width != self.grid.width || img.height != self.grid.height {
                return Err(VariationalError::ShapeMismatch("initial primal does not match the image grid".into()));
            }
        }
        let x = as_attenuation(x);
        let x_bar = as_attenuation(x_bar);
        let ax = self.op.forward(&x)?;
        let ax_bar = if x_bar.data == x.data { ax.clone() } else { self.op.forward(&x_bar)? };
        let mut p = Sinogram::zeros(self.y.n_angles, self.y.n_det);
        p.geometry_id = self.y.geometry_id;
        Ok(PdhgState { q: VectorField::zeros(self.grid.width, self.grid.height), p, x, x_bar, iter: 0, ax, ax_bar })
    }

    /// Primal and extrapolated primal both at `warm_start` (zero when absent).
    pub fn init_warm(&self, warm_start: Option<&Image>) -> Result<PdhgState, VariationalError> {
        let x = match warm_start {
            Some(img) => img.clone(),
            None => Image::zeros(self.grid),
        };
        self.init(x.clone(), x)
    }

    /// One full primal-dual iteration.
    pub fn step(&self, st: &mut PdhgState) -> Result<IterRecord, VariationalError> {
        let PdhgParams { tau, sigma, theta, lambda, .. } = self.params;
        dual_p_in_place(&mut st.p.data, &st.ax_bar.data, &self.y.data, sigma);
        let gxb = grad(&st.x_bar);
        dual_q_in_place(&mut st.q, &gxb, sigma, lambda);

        let atp = self.op.adjoint(&st.p, self.grid)?;
        let dq = div(&st.q);
        let mut x_new = st.x.clone();
        let mut change2 = 0.0;
        for i in 0..x_new.data.len() {
            let v = st.x.data[i] - tau * atp.data[i] + tau * dq.data[i];
            change2 += (v - st.x.data[i]).powi(2);
            x_new.data[i] = v;
        }
        let ax_new = self.op.forward(&x_new)?;

        for i in 0..x_new.data.len() {
            st.x_bar.data[i] = x_new.data[i] + theta * (x_new.data[i] - st.x.data[i]);
        }
        for i in 0..ax_new.data.len() {
            st.ax_bar.data[i] = ax_new.data[i] + theta * (ax_new.data[i] - st.ax.data[i]);
        }
        st.x = x_new;
        st.ax = ax_new;
        st.iter += 1;

        if !st.x.is_finite() || !st.x_bar.is_finite() || st.p.data.iter().any(|v| !v.is_finite()) {
            return Err(VariationalError::NonFinite { iteration: st.iter });
        }
        let res2: f64 = st.ax.data.iter().zip(&self.y.data).map(|(a, y)| (a - y).powi(2)).sum();
        let residual = if self.y_norm > 0.0 { res2.sqrt() / self.y_norm } else { res2.sqrt() };
        Ok(IterRecord {
            iteration: st.iter,
            objective: 0.5 * res2 + lambda * total_variation(&st.x),
            primal_change: change2.sqrt(),
            residual,
        })
    }

    /// Runs `params.n_iters` iterations from `st`.
    pub fn run(&self, st: &mut PdhgState) -> Result<PdhgDiagnostics, VariationalError> {
        let mut diag = PdhgDiagnostics { records: Vec::with_capacity(self.params.n_iters) };
        for _ in 0..self.params.n_iters {
            diag.records.push(self.step(st)?);
        }
        Ok(diag)
    }
}

fn as_attenuation(img: Image) -> Image {
    img.with_units(UnitSpace::Attenuation)
}

/// PDHG-TV from zero duals and primal `warm_start` (or zero). Returns the
/// final primal iterate.
pub fn pdhg_tv(
    y: &Sinogram,
    op: ForwardOp,
    grid: ImageGrid,
    params: PdhgParams,
    warm_start: Option<&Image>,
) -> Result<(Image, PdhgDiagnostics), VariationalError> {
    let solver = PdhgSolver::new(op, y, grid, params)?;
    let mut st = solver.init_warm(warm_start)?;
    let diag = solver.run(&mut st)?;
    Ok((st.x, diag))
}

/// Data-adaptive TV weight: `1e-2 · mean|y| / mean|∇x_ref|`, with `x_ref`
/// typically an FBP reconstruction.
pub fn default_lambda(y: &Sinogram, reference: &Image) -> f64 {
    let mean_y = y.data.iter().map(|v| v.abs()).sum::<f64>() / y.data.len() as f64;
    let mag = grad(reference).magnitude();
    let mean_g = mag.iter().sum::<f64>() / mag.len() as f64;
    let lam = if mean_g > 0.0 { 1e-2 * mean_y / mean_g } else { 1e-2 * mean_y };
    if lam > 0.0 && lam.is_finite() {
        lam
    } else {
        1e-3
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_grid(ImageGrid::new(w, h, 1.0), (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn grad_of_constant_is_zero() {
        let img = Image::from_grid(ImageGrid::new(5, 4, 1.0), vec![3.5; 20]);
        let g = grad(&img);
        assert!(g.h.iter().chain(&g.v).all(|v| *v == 0.0));
        assert!(div(&g).data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grad_of_column_ramp() {
        let (w, h) = (6, 3);
        let img = Image::from_grid(ImageGrid::new(w, h, 1.0), (0..w * h).map(|i| (i % w) as f64).collect());
        let g = grad(&img);
        for row in 0..h {
            for col in 0..w {
                let want = if col + 1 < w { 1.0 } else { 0.0 };
                assert_eq!(g.h[row * w + col], want);
                assert_eq!(g.v[row * w + col], 0.0);
            }
        }
    }

    #[test]
    fn div_of_zero_is_zero() {
        assert!(div(&VectorField::zeros(4, 7)).data.iter().all(|v| *v == 0.0));
    }

    proptest! {
        #[test]
        fn div_is_negative_adjoint(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let x = random_image(w, h, seed);
            let a = random_image(w, h, seed ^ 1);
            let b = random_image(w, h, seed ^ 2);
            let v = VectorField { width: w, height: h, h: a.data, v: b.data };
            let gx = grad(&x);
            let lhs = gx.dot(&v);
            let rhs = crate::tomo::dot(&x.data, &div(&v).data);
            prop_assert!((lhs + rhs).abs() <= 1e-10 * (gx.norm() * v.norm()).max(1e-300));
        }
    }

    #[test]
    fn dual_p_examples() {
        let z = Sinogram::zeros(2, 3);
        let y = Sinogram { data: vec![0.3; 6], ..z.clone() };
        let out = dual_update_p(&z, &y, &y, 0.7).unwrap();
        assert!(out.data.iter().all(|v| *v == 0.0));

        let ones = Sinogram { data: vec![1.0; 6], ..z.clone() };
        let two = Sinogram { data: vec![2.0; 6], ..z.clone() };
        let out = dual_update_p(&ones, &two, &ones, 1.0).unwrap();
        assert!(out.data.iter().all(|v| *v == 1.0));

        assert!(dual_update_p(&z, &Sinogram::zeros(3, 2), &z, 1.0).is_err());
    }

    #[test]
    fn dual_p_matches_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mk = |rng: &mut ChaCha8Rng| Sinogram {
            n_angles: 4,
            n_det: 5,
            data: (0..20).map(|_| rng.random_range(-2.0..2.0)).collect(),
            geometry_id: None,
        };
        let (p, a, y) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let sigma = 0.37;
        let out = dual_update_p(&p, &a, &y, sigma).unwrap();
        for i in 0..20 {
            let want = (p.data[i] + sigma * (a.data[i] - y.data[i])) / (1.0 + sigma);
            assert!((out.data[i] - want).abs() <= 1e-15);
        }
    }

    #[test]
    fn dual_q_clamp() {
        let lambda = 0.5;
        // inactive clamp
        let q = VectorField { width: 2, height: 1, h: vec![0.1, -0.2], v: vec![0.2, 0.1] };
        let zero = VectorField::zeros(2, 1);
        assert_eq!(dual_update_q(&q, &zero, 1.0, lambda).unwrap(), q);
        // m = 2λ -> magnitude λ, same direction
        let q = VectorField { width: 1, height: 1, h: vec![0.6], v: vec![0.8] };
        let out = dual_update_q(&q, &VectorField::zeros(1, 1), 1.0, lambda).unwrap();
        assert!((out.h[0].hypot(out.v[0]) - lambda).abs() < 1e-15);
        assert!((out.h[0] - 0.3).abs() < 1e-15 && (out.v[0] - 0.4).abs() < 1e-15);
        // zeros stay zero
        let out = dual_update_q(&zero, &zero, 1.0, lambda).unwrap();
        assert_eq!(out, zero);
        assert!(dual_update_q(&zero, &VectorField::zeros(1, 2), 1.0, lambda).is_err());
    }

    #[test]
    fn zero_data_is_fixed_point() {
        let grid = ImageGrid::square(8, 1.0);
        let y = Sinogram::zeros(8, 8);
        let params = PdhgParams::from_norm(3.0, 0.1, 25);
        let (x, diag) = pdhg_tv(&y, ForwardOp::Identity, grid, params, None).unwrap();
        assert!(x.data.iter().all(|v| *v == 0.0));
        assert_eq!(diag.records.len(), 25);
    }

    #[test]
    fn params_validation() {
        let mut p = PdhgParams::from_norm(2.0, 0.1, 10);
        assert!(p.validate().is_ok());
        assert!(p.satisfies_step_condition(2.0));
        assert!(!p.satisfies_step_condition(2.1));
        p.theta = 1.5;
        assert!(p.validate().is_err());
        let y = Sinogram::zeros(4, 4);
        let bad = PdhgParams { lambda: -1.0, ..PdhgParams::from_norm(2.0, 0.1, 1) };
        assert!(PdhgSolver::new(ForwardOp::Identity, &y, ImageGrid::square(4, 1.0), bad).is_err());
        let good = PdhgParams::from_norm(2.0, 0.1, 1);
        assert!(matches!(
            PdhgSolver::new(ForwardOp::Identity, &y, ImageGrid::square(5, 1.0), good),
            Err(VariationalError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn non_finite_aborts_with_iteration() {
        let grid = ImageGrid::square(4, 1.0);
        let y = Sinogram { data: vec![1e300; 16], ..Sinogram::zeros(4, 4) };
        // step sizes far beyond 1/L blow up quickly
        let params = PdhgParams { tau: 1e10, sigma: 1e10, theta: 1.0, lambda: 1.0, n_iters: 200 };
        match pdhg_tv(&y, ForwardOp::Identity, grid, params, None) {
            Err(VariationalError::NonFinite { iteration }) => assert!(iteration >= 1),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn diagnostics_csv() {
        let diag = PdhgDiagnostics {
            records: vec![IterRecord { iteration: 1, objective: 2.0, primal_change: 0.5, residual: 0.25 }],
        };
        let mut buf = Vec::new();
        diag.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("iteration,objective,primal_change,residual"));
        assert_eq!(text.lines().count(), 2);
    }
}

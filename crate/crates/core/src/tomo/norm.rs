use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{l2, ForwardOp, Image, ImageGrid, TomoError};
use crate::variational::{div, grad};

/// Which linear map to estimate the spectral norm of.
#[derive(Debug, Clone, Copy)]
pub enum NormTarget<'a> {
    /// The data operator alone.
    Data(ForwardOp<'a>),
    /// The forward-difference gradient alone.
    Gradient,
    /// The stacked operator `K = (A, ∇)`.
    Combined(ForwardOp<'a>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    /// False when `max_iter` was reached before the relative change fell below `tol`.
    pub converged: bool,
}

impl NormEstimate {
    pub fn require_converged(self) -> Result<f64, TomoError> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(TomoError::NoConvergence { estimate: self.value, iterations: self.iterations })
        }
    }
}

impl NormTarget<'_> {
    /// `KᵀK v`
    fn normal(&self, v: &Image) -> Result<Image, TomoError> {
        let grid = v.grid();
        let data_part = |op: &ForwardOp| op.adjoint(&op.forward(v)?, grid);
        let grad_part = || {
            let mut d = div(&grad(v));
            d.data.iter_mut().for_each(|x| *x = -*x);
            d
        };
        match self {
            NormTarget::Data(op) => data_part(op),
            NormTarget::Gradient => Ok(grad_part()),
            NormTarget::Combined(op) => {
                let mut a = data_part(op)?;
                for (x, g) in a.data.iter_mut().zip(grad_part().data) {
                    *x += g;
                }
                Ok(a)
            }
        }
    }
}

/// Power-iteration estimate of the largest singular value of `target` acting
/// on images of `grid`. Stops once successive estimates differ by less than
/// `tol` relatively; otherwise returns the last estimate with
/// `converged = false` (and logs a warning).
pub fn operator_norm(
    target: NormTarget,
    grid: ImageGrid,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<NormEstimate, TomoError> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(TomoError::InvalidGeometry("operator_norm needs tol > 0 and max_iter >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Image::zeros(grid);
    for x in v.data.iter_mut() {
        *x = StandardNormal.sample(&mut rng);
    }
    normalize(&mut v.data);
    let mut prev = 0.0;
    for it in 1..=max_iter {
        let w = target.normal(&v)?;
        let lambda = l2(&w.data);
        if lambda == 0.0 {
            return Ok(NormEstimate { value: 0.0, iterations: it, converged: true });
        }
        let est = lambda.sqrt();
        v = w;
        v.data.iter_mut().for_each(|x| *x /= lambda);
        if it > 1 && (est - prev).abs() <= tol * est {
            return Ok(NormEstimate { value: est, iterations: it, converged: true });
        }
        prev = est;
    }
    log::warn!("operator_norm: no convergence after {max_iter} iterations (estimate {prev})");
    Ok(NormEstimate { value: prev, iterations: max_iter, converged: false })
}

fn normalize(v: &mut [f64]) {
    let n = l2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tomo::ScanGeometry;
    use std::f64::consts::PI;

    #[test]
    fn identity_norm_is_one() {
        let est = operator_norm(NormTarget::Data(ForwardOp::Identity), ImageGrid::square(8, 1.0), 1e-9, 100, 3).unwrap();
        assert!((est.value - 1.0).abs() < 1e-9);
        assert!(est.converged);
    }

    #[test]
    fn gradient_norm_below_sqrt8() {
        let est = operator_norm(NormTarget::Gradient, ImageGrid::square(16, 1.0), 1e-10, 20000, 1).unwrap();
        assert!(est.value <= 8f64.sqrt() + 1e-12);
        assert!(est.value > 2.7);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let g = ScanGeometry::parallel_for_size(16, 1.0, 0.0, PI, 12).unwrap();
        let est = operator_norm(NormTarget::Combined(ForwardOp::Tomography(&g)), ImageGrid::square(16, 1.0), 1e-15, 2, 0).unwrap();
        assert!(!est.converged);
        assert!(matches!(est.require_converged(), Err(TomoError::NoConvergence { .. })));
    }

    #[test]
    fn rejects_bad_parameters() {
        let grid = ImageGrid::square(4, 1.0);
        assert!(operator_norm(NormTarget::Gradient, grid, 0.0, 10, 0).is_err());
        assert!(operator_norm(NormTarget::Gradient, grid, 1e-6, 0, 0).is_err());
    }
}

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DiffusionError, NoiseSchedule};

/// `∇ₓ log p_t(x)` or an approximation of it. Implementations must be safe
/// to evaluate concurrently.
pub trait ScoreFunction: Send + Sync {
    fn evaluate(&self, x: &[f64], t: f64) -> Result<Vec<f64>, DiffusionError>;
}

impl<S: ScoreFunction + ?Sized> ScoreFunction for &S {
    fn evaluate(&self, x: &[f64], t: f64) -> Result<Vec<f64>, DiffusionError> {
        (**self).evaluate(x, t)
    }
}

impl<S: ScoreFunction + ?Sized> ScoreFunction for Box<S> {
    fn evaluate(&self, x: &[f64], t: f64) -> Result<Vec<f64>, DiffusionError> {
        (**self).evaluate(x, t)
    }
}

impl<S: ScoreFunction + ?Sized> ScoreFunction for std::sync::Arc<S> {
    fn evaluate(&self, x: &[f64], t: f64) -> Result<Vec<f64>, DiffusionError> {
        (**self).evaluate(x, t)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroScore;

impl ScoreFunction for ZeroScore {
    fn evaluate(&self, x: &[f64], _t: f64) -> Result<Vec<f64>, DiffusionError> {
        Ok(vec![0.0; x.len()])
    }
}

/// Wraps a closure as a score function.
pub struct FnScore<F>(pub F);

impl<F> ScoreFunction for FnScore<F>
where
    F: Fn(&[f64], f64) -> Vec<f64> + Send + Sync,
{
    fn evaluate(&self, x: &[f64], t: f64) -> Result<Vec<f64>, DiffusionError> {
        Ok((self.0)(x, t))
    }
}

fn check_len(a: usize, b: usize) -> Result<(), DiffusionError> {
    if a != b {
        return Err(DiffusionError::ShapeMismatch(format!("grid has {a} entries, expected {b}")));
    }
    Ok(())
}

/// Score of a point mass at `x_true` diffused by the VE kernel:
/// `(x_true − x) / σ(t)²`.
pub fn oracle_score(x: &[f64], x_true: &[f64], sched: &NoiseSchedule, t: f64) -> Result<Vec<f64>, DiffusionError> {
    check_len(x.len(), x_true.len())?;
    let inv = 1.0 / sched.sigma(t).powi(2);
    Ok(x.iter().zip(x_true).map(|(x, m)| (m - x) * inv).collect())
}

#[derive(Debug, Clone)]
pub struct OracleScore {
    pub x_true: Vec<f64>,
    pub sched: NoiseSchedule,
}

impl ScoreFunction for OracleScore {
    fn evaluate(&self, x: &[f64], t: f64) -> Result<Vec<f64>, DiffusionError> {
        oracle_score(x, &self.x_true, &self.sched, t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub base_std: f64,
}

/// Isotropic Gaussian mixture prior on grids of `width × height` values.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    pub width: usize,
    pub height: usize,
    pub components: Vec<GmmComponent>,
}

impl GmmPrior {
    /// Validates the components and renormalizes the weights to sum to one.
    pub fn new(width: usize, height: usize, mut components: Vec<GmmComponent>) -> Result<Self, DiffusionError> {
        if components.is_empty() {
            return Err(DiffusionError::InvalidPrior("no components".into()));
        }
        let d = width * height;
        let mut total = 0.0;
        for c in &components {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(DiffusionError::InvalidPrior(format!("weight {} must be positive", c.weight)));
            }
            if !(c.base_std > 0.0 && c.base_std.is_finite()) {
                return Err(DiffusionError::InvalidPrior(format!("std {} must be positive", c.base_std)));
            }
            if c.mean.len() != d {
                return Err(DiffusionError::InvalidPrior(format!("mean has {} entries, expected {d}", c.mean.len())));
            }
            total += c.weight;
        }
        for c in components.iter_mut() {
            c.weight /= total;
        }
        Ok(Self { width, height, components })
    }

    /// Single Gaussian `N(mean, std² I)` on a `d × 1` grid.
    pub fn gaussian(mean: Vec<f64>, std: f64) -> Result<Self, DiffusionError> {
        let d = mean.len();
        Self::new(d, 1, vec![GmmComponent { weight: 1.0, mean, base_std: std }])
    }

    pub fn dim(&self) -> usize {
        self.width * self.height
    }

    /// Log of `w_k N(x; μ_k, (s_k² + σ²) I)` per component.
    fn log_terms(&self, x: &[f64], sigma: f64) -> Vec<f64> {
        let d = x.len() as f64;
        self.components
            .iter()
            .map(|c| {
                let var = c.base_std * c.base_std + sigma * sigma;
                let r2: f64 = x.iter().zip(&c.mean).map(|(a, m)| (a - m).powi(2)).sum();
                c.weight.ln() - 0.5 * r2 / var - 0.5 * d * (2.0 * std::f64::consts::PI * var).ln()
            })
            .collect()
    }
}

/// `log p_t(x)` of the diffused mixture.
pub fn gmm_log_density(x: &[f64], prior: &GmmPrior, sched: &NoiseSchedule, t: f64) -> Result<f64, DiffusionError> {
    check_len(x.len(), prior.dim())?;
    let terms = prior.log_terms(x, sched.sigma(t));
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(m + terms.iter().map(|v| (v - m).exp()).sum::<f64>().ln())
}

/// `Σ_k γ_k(x) (μ_k − x) / (s_k² + σ(t)²)` with responsibilities from a
/// log-space softmax.
pub fn gmm_score(x: &[f64], prior: &GmmPrior, sched: &NoiseSchedule, t: f64) -> Result<Vec<f64>, DiffusionError> {
    check_len(x.len(), prior.dim())?;
    let sigma = sched.sigma(t);
    let terms = prior.log_terms(x, sigma);
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = terms.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = w.iter().sum();
    let mut out = vec![0.0; x.len()];
    for (c, wk) in prior.components.iter().zip(&w) {
        let g = wk / z / (c.base_std * c.base_std + sigma * sigma);
        for ((o, xi), mi) in out.iter_mut().zip(x).zip(&c.mean) {
            *o += g * (mi - xi);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GmmScore {
    pub prior: GmmPrior,
    pub sched: NoiseSchedule,
}

impl ScoreFunction for GmmScore {
    fn evaluate(&self, x: &[f64], t: f64) -> Result<Vec<f64>, DiffusionError> {
        gmm_score(x, &self.prior, &self.sched, t)
    }
}

/// `factor · inner`
pub struct ScaledScore<S> {
    pub inner: S,
    pub factor: f64,
}

impl<S: ScoreFunction> ScoreFunction for ScaledScore<S> {
    fn evaluate(&self, x: &[f64], t: f64) -> Result<Vec<f64>, DiffusionError> {
        let mut s = self.inner.evaluate(x, t)?;
        s.iter_mut().for_each(|v| *v *= self.factor);
        Ok(s)
    }
}

/// Adds `noise_std · z / σ(t)` to the inner score, with `z` a standard normal
/// field that is a deterministic function of `(seed, t)`. Emulates the error
/// of a learned score model.
pub struct NoisyScore<S> {
    pub inner: S,
    pub sched: NoiseSchedule,
    pub noise_std: f64,
    pub seed: u64,
}

impl<S: ScoreFunction> ScoreFunction for NoisyScore<S> {
    fn evaluate(&self, x: &[f64], t: f64) -> Result<Vec<f64>, DiffusionError> {
        let mut s = self.inner.evaluate(x, t)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ t.to_bits().rotate_left(17));
        let amp = self.noise_std / self.sched.sigma(t);
        for v in s.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += amp * z;
        }
        Ok(s)
    }
}

/// Counts evaluations of the wrapped score.
pub struct CountingScore<S> {
    pub inner: S,
    count: AtomicUsize,
}

impl<S> CountingScore<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, count: AtomicUsize::new(0) }
    }
    pub fn count(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }
}

impl<S: ScoreFunction> ScoreFunction for CountingScore<S> {
    fn evaluate(&self, x: &[f64], t: f64) -> Result<Vec<f64>, DiffusionError> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(x, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sched() -> NoiseSchedule {
        NoiseSchedule::new(0.01, 1.0, 100).unwrap()
    }

    /// Log density of N(x_true, σ² I).
    fn log_gauss(x: &[f64], mean: &[f64], var: f64) -> f64 {
        let r2: f64 = x.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum();
        -0.5 * r2 / var - 0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI * var).ln()
    }

    fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }

    #[test]
    fn oracle_examples() {
        let s = sched();
        let x_true = vec![0.2, 0.7, 0.4];
        assert!(oracle_score(&x_true, &x_true, &s, 0.3).unwrap().iter().all(|v| *v == 0.0));
        // σ(t) = 2 on a schedule from 0.5 to 8: t = 0.5
        let s2 = NoiseSchedule::new(0.5, 8.0, 10).unwrap();
        let x: Vec<f64> = x_true.iter().map(|v| v - 1.0).collect();
        for v in oracle_score(&x, &x_true, &s2, 0.5).unwrap() {
            assert!((v - 0.25).abs() < 1e-12);
        }
        assert!(oracle_score(&x[..2], &x_true, &s, 0.1).is_err());
    }

    #[test]
    fn analytic_scores_match_finite_differences() {
        let s = sched();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x_true: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
        let prior = GmmPrior::new(
            2,
            1,
            vec![
                GmmComponent { weight: 0.3, mean: vec![0.1, 0.8], base_std: 0.2 },
                GmmComponent { weight: 0.7, mean: vec![0.6, 0.3], base_std: 0.1 },
            ],
        )
        .unwrap();
        for _ in 0..10 {
            let t: f64 = rng.random_range(0.05..1.0);
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-0.5..1.5)).collect();
            let var = s.sigma(t).powi(2);
            let fd = central_diff(|z| log_gauss(z, &x_true, var), &x, 1e-5);
            assert!(rel_err(&oracle_score(&x, &x_true, &s, t).unwrap(), &fd) < 1e-5);
            let fd = central_diff(|z| gmm_log_density(z, &prior, &s, t).unwrap(), &x, 1e-5);
            assert!(rel_err(&gmm_score(&x, &prior, &s, t).unwrap(), &fd) < 1e-5);
        }
    }

    #[test]
    fn gmm_reductions() {
        let s = sched();
        let single = GmmPrior::gaussian(vec![0.5, -0.25], 0.3).unwrap();
        let x = [0.1, 0.4];
        let t = 0.6;
        let var = 0.09 + s.sigma(t).powi(2);
        let got = gmm_score(&x, &single, &s, t).unwrap();
        assert!((got[0] - (0.5 - 0.1) / var).abs() < 1e-12);
        assert!((got[1] - (-0.25 - 0.4) / var).abs() < 1e-12);

        let sym = GmmPrior::new(
            1,
            1,
            vec![
                GmmComponent { weight: 1.0, mean: vec![-0.4], base_std: 0.1 },
                GmmComponent { weight: 1.0, mean: vec![0.4], base_std: 0.1 },
            ],
        )
        .unwrap();
        assert!(gmm_score(&[0.0], &sym, &s, 0.2).unwrap()[0].abs() < 1e-14);
        assert!((sym.components[0].weight - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gmm_far_from_modes_is_finite() {
        let s = sched();
        let prior = GmmPrior::new(
            1,
            1,
            vec![
                GmmComponent { weight: 0.5, mean: vec![-1.0], base_std: 0.001 },
                GmmComponent { weight: 0.5, mean: vec![1.0], base_std: 0.001 },
            ],
        )
        .unwrap();
        let v = gmm_score(&[50.0], &prior, &s, 0.0).unwrap();
        assert!(v[0].is_finite() && v[0] < 0.0);
    }

    #[test]
    fn invalid_priors() {
        assert!(GmmPrior::new(1, 1, vec![]).is_err());
        assert!(GmmPrior::new(1, 1, vec![GmmComponent { weight: 0.0, mean: vec![0.0], base_std: 1.0 }]).is_err());
        assert!(GmmPrior::new(1, 1, vec![GmmComponent { weight: 1.0, mean: vec![0.0], base_std: 0.0 }]).is_err());
        assert!(GmmPrior::new(2, 1, vec![GmmComponent { weight: 1.0, mean: vec![0.0], base_std: 1.0 }]).is_err());
    }

    #[test]
    fn noisy_score_is_deterministic_in_t() {
        let s = sched();
        let n = NoisyScore { inner: ZeroScore, sched: s, noise_std: 0.1, seed: 9 };
        let x = [0.0; 16];
        assert_eq!(n.evaluate(&x, 0.3).unwrap(), n.evaluate(&x, 0.3).unwrap());
        assert_ne!(n.evaluate(&x, 0.3).unwrap(), n.evaluate(&x, 0.4).unwrap());
    }

    #[test]
    fn counting_wrapper() {
        let c = CountingScore::new(ZeroScore);
        for _ in 0..3 {
            c.evaluate(&[1.0], 0.0).unwrap();
        }
        assert_eq!(c.count(), 3);
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DiffusionError, NoiseSchedule, ScoreFunction};

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsmEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Denoising score-matching loss with weighting `λ(t) = σ(t)²`:
///
/// `E_{t, x₀, z} ‖σ(t) s(x₀ + σ(t) z, t) + z‖²`,
///
/// `t ~ U[0, 1]`, `x₀` uniform over `clean`, `z ~ N(0, I)`. The same `seed`
/// reproduces the same `(t, x₀, z)` draws, so losses of different score
/// functions can be compared pairwise.
pub fn dsm_loss<S: ScoreFunction + ?Sized>(
    score: &S,
    clean: &[Vec<f64>],
    sched: &NoiseSchedule,
    n_draws: usize,
    seed: u64,
) -> Result<DsmEstimate, DiffusionError> {
    if n_draws == 0 || clean.is_empty() {
        return Err(DiffusionError::ShapeMismatch("dsm_loss needs at least one draw and one sample".into()));
    }
    let d = clean[0].len();
    if clean.iter().any(|c| c.len() != d) {
        return Err(DiffusionError::ShapeMismatch("clean samples differ in size".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut z = vec![0.0; d];
    let mut x = vec![0.0; d];
    for _ in 0..n_draws {
        let t: f64 = rng.random_range(0.0..=1.0);
        let x0 = &clean[rng.random_range(0..clean.len())];
        let sigma = sched.sigma(t);
        for ((zi, xi), x0i) in z.iter_mut().zip(x.iter_mut()).zip(x0) {
            *zi = StandardNormal.sample(&mut rng);
            *xi = x0i + sigma * *zi;
        }
        let s = score.evaluate(&x, t)?;
        let l: f64 = s.iter().zip(&z).map(|(si, zi)| (sigma * si + zi).powi(2)).sum();
        sum += l;
        sum2 += l * l;
    }
    let n = n_draws as f64;
    let mean = sum / n;
    let var = if n_draws > 1 { ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(DsmEstimate { mean, std_err: (var / n).sqrt() })
}

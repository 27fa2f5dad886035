use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DiffusionError, NoiseSchedule, ScoreFunction};

fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Reverse-diffusion step from noise level `i` to `i − 1`:
/// `x + (σ_i² − σ_{i−1}²) s(x, t_i) [+ √(σ_i² − σ_{i−1}²) z]`.
pub fn predictor_step<S: ScoreFunction + ?Sized, R: Rng + ?Sized>(
    x: &[f64],
    score: &S,
    i: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
    stochastic: bool,
) -> Result<Vec<f64>, DiffusionError> {
    if i == 0 || i >= sched.n_steps {
        return Err(DiffusionError::IndexOutOfRange { index: i, lo: 1, hi: sched.n_steps.saturating_sub(1) });
    }
    let dvar = sched.sigma_i(i).powi(2) - sched.sigma_i(i - 1).powi(2);
    let s = score.evaluate(x, sched.time(i))?;
    let mut out: Vec<f64> = x.iter().zip(&s).map(|(x, s)| x + dvar * s).collect();
    if stochastic {
        let amp = dvar.sqrt();
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *o += amp * z;
        }
    }
    Ok(out)
}

/// Langevin correction at noise level `i` with step
/// `ε = 2 (snr ‖z‖ / ‖s‖)²`: `x + ε s + √(2ε) z`. A zero score disables the
/// step entirely.
pub fn corrector_step<S: ScoreFunction + ?Sized, R: Rng + ?Sized>(
    x: &[f64],
    score: &S,
    i: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
    snr: f64,
) -> Result<Vec<f64>, DiffusionError> {
    if i >= sched.n_steps {
        return Err(DiffusionError::IndexOutOfRange { index: i, lo: 0, hi: sched.n_steps - 1 });
    }
    let z = normal_vec(rng, x.len());
    let s = score.evaluate(x, sched.time(i))?;
    let s_norm = norm(&s);
    let eps = if s_norm > 0.0 { 2.0 * (snr * norm(&z) / s_norm).powi(2) } else { 0.0 };
    let amp = (2.0 * eps).sqrt();
    Ok(x.iter().zip(&s).zip(&z).map(|((x, s), z)| x + eps * s + amp * z).collect())
}

/// Predictor-corrector sampling from `x ~ N(0, σ_max² I)`: for
/// `i = I−1 … 1` a predictor step from level `i` to `i − 1` followed by a
/// corrector step at level `i − 1`. Uses exactly `2(I − 1)` score
/// evaluations.
pub fn pc_sample<S: ScoreFunction + ?Sized, R: Rng + ?Sized>(
    score: &S,
    dim: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
    snr: f64,
    stochastic: bool,
) -> Result<Vec<f64>, DiffusionError> {
    sched.validate()?;
    let mut x: Vec<f64> = normal_vec(rng, dim).into_iter().map(|z| sched.sigma_max * z).collect();
    for i in (1..sched.n_steps).rev() {
        x = predictor_step(&x, score, i, sched, rng, stochastic)?;
        x = corrector_step(&x, score, i - 1, sched, rng, snr)?;
    }
    Ok(x)
}

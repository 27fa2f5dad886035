use super::DiffusionError;

/// Geometric VE schedule `σ(t) = σ_min (σ_max/σ_min)^t` discretized on
/// `n_steps` points `t_i = i / (n_steps - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub n_steps: usize,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self { sigma_min: 0.01, sigma_max: 1.0, n_steps: 1000 }
    }
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, n_steps: usize) -> Result<Self, DiffusionError> {
        let s = Self { sigma_min, sigma_max, n_steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DiffusionError> {
        if !(self.sigma_min > 0.0 && self.sigma_max > self.sigma_min && self.sigma_max.is_finite()) {
            return Err(DiffusionError::InvalidSchedule(format!(
                "need 0 < sigma_min < sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if self.n_steps == 0 {
            return Err(DiffusionError::InvalidSchedule("n_steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Unchecked `σ(t)`.
    #[inline]
    pub fn sigma(&self, t: f64) -> f64 {
        self.sigma_min * (self.sigma_max / self.sigma_min).powf(t)
    }

    /// Diffusion time of grid point `i`.
    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        if self.n_steps <= 1 {
            0.0
        } else {
            i as f64 / (self.n_steps - 1) as f64
        }
    }

    #[inline]
    pub fn sigma_i(&self, i: usize) -> f64 {
        self.sigma(self.time(i))
    }
}

pub fn sigma_at(sched: &NoiseSchedule, t: f64) -> Result<f64, DiffusionError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(DiffusionError::OutOfRange(t));
    }
    Ok(sched.sigma(t))
}

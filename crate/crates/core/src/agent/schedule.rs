use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noise levels of the reverse chain: `beta_n`, `alpha_n = 1 - beta_n`, and
/// `alpha_bar_n = prod_{m <= n} alpha_m`, for `n = 1..=N` (stored 0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    /// `steps` betas evenly spaced from `beta_start` to `beta_end`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("denoising steps must be >= 1"));
        }
        let betas = if steps == 1 {
            vec![beta_start]
        } else {
            let span = (beta_end - beta_start) / (steps - 1) as f64;
            (0..steps).map(|i| beta_start + span * i as f64).collect()
        };
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::invalid(format!("betas must lie in (0, 1): {betas:?}")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_n` for `n` in `1..=N`.
    pub fn beta(&self, n: usize) -> f64 {
        self.betas[n - 1]
    }

    pub fn alpha(&self, n: usize) -> f64 {
        self.alphas[n - 1]
    }

    pub fn alpha_bar(&self, n: usize) -> f64 {
        self.alpha_bars[n - 1]
    }

    /// Coefficient on `s_n` in the reverse step: `1 / sqrt(alpha_n)`.
    pub fn state_coef(&self, n: usize) -> f64 {
        1.0 / self.alpha(n).sqrt()
    }

    /// Coefficient on the predicted noise: `beta_n / sqrt(alpha_n (1 - alpha_bar_n))`.
    pub fn noise_pred_coef(&self, n: usize) -> f64 {
        self.beta(n) / (self.alpha(n) * (1.0 - self.alpha_bar(n))).sqrt()
    }

    /// Standard deviation of the injected noise; zero on the last step.
    pub fn injected_std(&self, n: usize) -> f64 {
        if n == 1 {
            0.0
        } else {
            self.beta(n).sqrt()
        }
    }
}

//! Learning-rate schedule: linear warmup followed by staged decay.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub base_rate: f64,
    pub warmup_rounds: u32,
    pub warmup_start: f64,
    /// `(round, factor)` pairs; each factor multiplies the rate once its
    /// round has passed.
    pub decay_points: Vec<(u32, f64)>,
}

impl LrSchedule {
    pub fn constant(rate: f64) -> Self {
        Self {
            base_rate: rate,
            warmup_rounds: 0,
            warmup_start: rate,
            decay_points: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_rate <= 0.0 {
            return Err(Error::invalid("base_rate must be positive"));
        }
        if self.warmup_start > self.base_rate {
            return Err(Error::invalid("warmup_start must not exceed base_rate"));
        }
        for &(_, f) in &self.decay_points {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::invalid("decay factors must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, round: u32) -> f64 {
        let base = if round < self.warmup_rounds {
            let frac = round as f64 / self.warmup_rounds as f64;
            self.warmup_start + (self.base_rate - self.warmup_start) * frac
        } else {
            self.base_rate
        };
        self.decay_points
            .iter()
            .filter(|&&(r, _)| round >= r)
            .fold(base, |lr, &(_, f)| lr * f)
    }
}

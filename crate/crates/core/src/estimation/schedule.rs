use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constant step `gamma0` up to `hold_until`, then `gamma0 (n - hold_until)^-decay`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub gamma0: f64,
    #[serde(default = "default_hold")]
    pub hold_until: usize,
    #[serde(default = "default_decay")]
    pub decay_exponent: f64,
}

fn default_hold() -> usize {
    1000
}

fn default_decay() -> f64 {
    0.8
}

impl StepSchedule {
    pub fn new(gamma0: f64, hold_until: usize, decay_exponent: f64) -> Result<Self> {
        let s = StepSchedule {
            gamma0,
            hold_until,
            decay_exponent,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 >= 0.0 && self.gamma0.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma0 must be finite and >= 0, got {}", self.gamma0)));
        }
        if !(self.decay_exponent > 0.5 && self.decay_exponent <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "decay exponent must lie in (0.5, 1], got {}",
                self.decay_exponent
            )));
        }
        Ok(())
    }

    /// Default gradient-ascent schedule.
    pub fn rml() -> Self {
        StepSchedule {
            gamma0: 4e-3,
            hold_until: 1000,
            decay_exponent: 0.8,
        }
    }

    /// Default running-average schedule.
    pub fn em() -> Self {
        StepSchedule {
            gamma0: 0.025,
            hold_until: 1000,
            decay_exponent: 0.8,
        }
    }

    pub fn constant(gamma0: f64) -> Self {
        StepSchedule {
            gamma0,
            hold_until: usize::MAX,
            decay_exponent: 1.0,
        }
    }

    /// Step size at step `n` (counted from one).
    pub fn step_size(&self, n: usize) -> f64 {
        if n <= self.hold_until {
            self.gamma0
        } else {
            self.gamma0 * ((n - self.hold_until) as f64).powf(-self.decay_exponent)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_values() {
        assert_eq!(StepSchedule::rml().step_size(500), 4e-3);
        assert_eq!(StepSchedule::em().step_size(1000), 0.025);
        assert_eq!(StepSchedule::em().step_size(1001), 0.025);
        let s = StepSchedule::rml();
        assert!((s.step_size(1000 + 32) - 4e-3 * 32f64.powf(-0.8)).abs() < 1e-18);
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(StepSchedule::new(0.1, 10, 0.5).is_err());
        assert!(StepSchedule::new(0.1, 10, 1.2).is_err());
        assert!(StepSchedule::new(-0.1, 10, 0.8).is_err());
        assert!(StepSchedule::new(0.1, 10, 1.0).is_ok());
    }

    #[test]
    fn non_increasing() {
        let s = StepSchedule::new(0.05, 3, 0.6).unwrap();
        let seq: Vec<f64> = (1..200).map(|n| s.step_size(n)).collect();
        assert!(seq.windows(2).all(|w| w[1] <= w[0]));
    }
}

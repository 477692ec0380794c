//! Patience-based early stopping on a monitored loss.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Halt once the best loss has failed to improve by more than `delta` for
/// `eta` consecutive epochs. The reference best only moves on an
/// improvement larger than `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub eta: usize,
    pub delta: f64,
}

impl EarlyStop {
    pub fn new(eta: usize, delta: f64) -> Result<Self> {
        let s = EarlyStop { eta, delta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta < 1 {
            return invalid("early stopping needs eta >= 1");
        }
        if !(self.delta > 0.0) {
            return invalid(format!("early stopping needs delta > 0, got {}", self.delta));
        }
        Ok(())
    }

    /// Effectively disabled.
    pub fn never() -> Self {
        EarlyStop {
            eta: usize::MAX,
            delta: f64::MIN_POSITIVE,
        }
    }

    pub fn monitor(&self) -> StopMonitor {
        StopMonitor {
            rule: *self,
            best: None,
            stale: 0,
        }
    }

    /// Number of epochs a run over `losses` would execute before halting.
    pub fn halt_epoch(&self, losses: &[f64]) -> usize {
        let mut m = self.monitor();
        for (i, &l) in losses.iter().enumerate() {
            if m.observe(l) {
                return i + 1;
            }
        }
        losses.len()
    }
}

#[derive(Debug, Clone)]
pub struct StopMonitor {
    rule: EarlyStop,
    best: Option<f64>,
    stale: usize,
}

impl StopMonitor {
    /// Records one epoch's loss; returns true when training should halt.
    pub fn observe(&mut self, loss: f64) -> bool {
        match self.best {
            None => {
                self.best = Some(loss);
                self.stale = 0;
            }
            Some(b) if loss < b - self.rule.delta => {
                self.best = Some(loss);
                self.stale = 0;
            }
            Some(_) => self.stale += 1,
        }
        self.stale >= self.rule.eta
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_delta_stops_one_epoch_after_first() {
        let s = EarlyStop::new(1, f64::INFINITY).unwrap();
        assert_eq!(s.halt_epoch(&[5.0, 1.0, 0.5, 0.1]), 2);
    }

    #[test]
    fn small_improvements_do_not_reset_patience() {
        let s = EarlyStop::new(2, 0.1).unwrap();
        // 1.0 best; 0.95 and 0.91 are within delta
        assert_eq!(s.halt_epoch(&[1.0, 0.95, 0.91, 0.5]), 3);
        assert_eq!(s.halt_epoch(&[1.0, 0.8, 0.6, 0.4]), 4);
    }

    #[test]
    fn invalid_rules_rejected() {
        assert!(EarlyStop::new(0, 0.1).is_err());
        assert!(EarlyStop::new(1, 0.0).is_err());
        assert!(EarlyStop::new(1, f64::NAN).is_err());
    }
}

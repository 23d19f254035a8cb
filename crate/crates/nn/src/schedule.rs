//! Learning-rate schedule and early stopping.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            warmup_epochs: 5,
            max_epochs: 200,
            patience: 10,
            batch_size: 128,
        }
    }
}

/// Final learning rate as a fraction of the base rate.
pub const FINAL_LR_FRACTION: f64 = 0.01;

impl TrainSchedule {
    pub fn validate(&self) -> Result<(), String> {
        if self.warmup_epochs >= self.max_epochs {
            return Err(format!(
                "warmup_epochs ({}) must be below max_epochs ({})",
                self.warmup_epochs, self.max_epochs
            ));
        }
        if self.patience == 0 {
            return Err("patience must be at least 1".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        Ok(())
    }

    /// Linear warmup from 0 to `base_lr`, then cosine decay to
    /// `base_lr / 100` at `max_epochs`. `epoch` may be fractional so the
    /// rate can change within an epoch.
    pub fn lr_at(&self, epoch: f64) -> f64 {
        let warm = self.warmup_epochs as f64;
        if epoch < warm {
            return self.base_lr * epoch.max(0.0) / warm;
        }
        let span = (self.max_epochs as f64 - warm).max(f64::MIN_POSITIVE);
        let progress = ((epoch - warm) / span).clamp(0.0, 1.0);
        let floor = self.base_lr * FINAL_LR_FRACTION;
        floor + (self.base_lr - floor) * 0.5 * (1.0 + (PI * progress).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub stop: bool,
    pub improved: bool,
}

/// Stops after `patience` consecutive epochs without a strict new minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    since_best: usize,
    epochs_seen: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            since_best: 0,
            epochs_seen: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> StopDecision {
        let epoch = self.epochs_seen;
        self.epochs_seen += 1;
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = Some(epoch);
            self.since_best = 0;
            StopDecision {
                stop: false,
                improved: true,
            }
        } else {
            self.since_best += 1;
            StopDecision {
                stop: self.since_best >= self.patience,
                improved: false,
            }
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(warmup: usize) -> TrainSchedule {
        TrainSchedule {
            base_lr: 1e-3,
            warmup_epochs: warmup,
            max_epochs: 50,
            ..TrainSchedule::default()
        }
    }

    #[test]
    fn warmup_endpoints() {
        let s = sched(5);
        assert_eq!(s.lr_at(0.0), 0.0);
        assert_eq!(s.lr_at(5.0), 1e-3);
        assert!((s.lr_at(2.5) - 5e-4).abs() < 1e-15);
        assert!((s.lr_at(50.0) - 1e-5).abs() < 1e-15);
        assert_eq!(sched(0).lr_at(0.0), 1e-3);
    }

    #[test]
    fn non_increasing_after_warmup() {
        let s = sched(5);
        let mut prev = s.lr_at(5.0);
        for i in 1..=450 {
            let lr = s.lr_at(5.0 + i as f64 * 0.1);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn validate_rejects_bad_config() {
        assert!(sched(50).validate().is_err());
        assert!(TrainSchedule {
            patience: 0,
            ..sched(1)
        }
        .validate()
        .is_err());
        assert!(sched(5).validate().is_ok());
    }

    #[test]
    fn stops_after_patience() {
        let mut es = EarlyStopper::new(2);
        let losses = [3.0, 2.0, 1.0, 1.0, 1.0, 1.0];
        let stop_at = losses.iter().position(|&l| es.observe(l).stop);
        assert_eq!(stop_at, Some(4));
        assert_eq!(es.best_epoch(), Some(2));
    }

    #[test]
    fn decreasing_never_stops() {
        let mut es = EarlyStopper::new(1);
        for i in 0..200 {
            assert!(!es.observe(1.0 / (i + 1) as f64).stop);
        }
        assert_eq!(es.best_epoch(), Some(199));
    }

    #[test]
    fn not_yet_stopped() {
        let mut es = EarlyStopper::new(3);
        assert!(![1.0, 2.0, 3.0].iter().any(|&l| es.observe(l).stop));
        assert_eq!(es.best_epoch(), Some(0));
    }
}

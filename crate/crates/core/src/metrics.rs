//! Forecast accuracy metrics: SMAPE, MASE and three-class sign accuracy,
//! plus mean/std aggregation across tasks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("actual has length {actual} but forecast has length {forecast}")]
    LengthMismatch { actual: usize, forecast: usize },
    #[error("in-sample naive error is zero; MASE is undefined")]
    DegenerateDenominator,
    #[error("MASE needs at least 2 context points, got {0}")]
    ShortContext(usize),
}

/// One task's in-sample history, realized horizon and forecast, all in
/// original units.
#[derive(Debug, Clone, Copy)]
pub struct MetricInput<'a> {
    pub context: &'a [f64],
    pub actual: &'a [f64],
    pub forecast: &'a [f64],
}

impl<'a> MetricInput<'a> {
    pub fn new(context: &'a [f64], actual: &'a [f64], forecast: &'a [f64]) -> Self {
        Self {
            context,
            actual,
            forecast,
        }
    }

    fn check(&self) -> Result<(), MetricError> {
        if self.actual.len() != self.forecast.len() {
            return Err(MetricError::LengthMismatch {
                actual: self.actual.len(),
                forecast: self.forecast.len(),
            });
        }
        Ok(())
    }
}

/// Mean over the horizon of `|x - f| / ((|x| + |f|) / 2)`; a step where both
/// are zero contributes 0.
pub fn smape(input: &MetricInput<'_>) -> Result<f64, MetricError> {
    input.check()?;
    if input.actual.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = input
        .actual
        .iter()
        .zip(input.forecast)
        .map(|(&x, &f)| {
            let denom = (x.abs() + f.abs()) / 2.0;
            if denom == 0.0 {
                0.0
            } else {
                (x - f).abs() / denom
            }
        })
        .sum();
    Ok(total / input.actual.len() as f64)
}

/// Horizon MAE over the in-sample MAE of the one-step naive forecast.
pub fn mase(input: &MetricInput<'_>) -> Result<f64, MetricError> {
    input.check()?;
    if input.context.len() < 2 {
        return Err(MetricError::ShortContext(input.context.len()));
    }
    let scale = input
        .context
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .sum::<f64>()
        / (input.context.len() - 1) as f64;
    if scale == 0.0 {
        return Err(MetricError::DegenerateDenominator);
    }
    if input.actual.is_empty() {
        return Ok(0.0);
    }
    let mae = input
        .actual
        .iter()
        .zip(input.forecast)
        .map(|(x, f)| (x - f).abs())
        .sum::<f64>()
        / input.actual.len() as f64;
    Ok(mae / scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Flat,
    Down,
}

pub fn sign_class(last_observed: f64, value: f64, threshold: f64) -> Direction {
    debug_assert!(threshold >= 0.0);
    let diff = value - last_observed;
    if diff > threshold {
        Direction::Up
    } else if diff < -threshold {
        Direction::Down
    } else {
        Direction::Flat
    }
}

/// Flat band half-width as a fraction of the context's population std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignConfig {
    pub threshold_fraction: f64,
}

impl SignConfig {
    pub const STRICT: SignConfig = SignConfig {
        threshold_fraction: 0.0,
    };

    pub fn threshold(&self, context: &[f64]) -> f64 {
        if self.threshold_fraction == 0.0 {
            0.0
        } else {
            self.threshold_fraction * population_std(context)
        }
    }
}

pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Count of (task, step) pairs whose forecast and actual fall in the same
/// direction class relative to the task's last observed value.
pub fn sign_hits(input: &MetricInput<'_>, cfg: &SignConfig) -> Result<(usize, usize), MetricError> {
    input.check()?;
    let Some(&last) = input.context.last() else {
        return Ok((0, 0));
    };
    let threshold = cfg.threshold(input.context);
    let hits = input
        .actual
        .iter()
        .zip(input.forecast)
        .filter(|(&x, &f)| sign_class(last, x, threshold) == sign_class(last, f, threshold))
        .count();
    Ok((hits, input.actual.len()))
}

/// Fraction of agreeing (task, step) pairs pooled over all tasks.
pub fn sign_accuracy(inputs: &[MetricInput<'_>], cfg: &SignConfig) -> Result<f64, MetricError> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for input in inputs {
        let (h, t) = sign_hits(input, cfg)?;
        hits += h;
        total += t;
    }
    Ok(if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    })
}

/// Mean and population std over the tasks whose metric was defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
    pub excluded: usize,
}

/// `None` entries are tasks where the metric was undefined; they are
/// counted and left out.
pub fn aggregate(values: &[Option<f64>]) -> Summary {
    let defined: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    let excluded = values.len() - defined.len();
    if defined.is_empty() {
        return Summary {
            mean: None,
            std: None,
            count: 0,
            excluded,
        };
    }
    let n = defined.len() as f64;
    let mean = defined.iter().sum::<f64>() / n;
    let var = defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Summary {
        mean: Some(mean),
        std: Some(var.sqrt()),
        count: defined.len(),
        excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mi<'a>(c: &'a [f64], a: &'a [f64], f: &'a [f64]) -> MetricInput<'a> {
        MetricInput::new(c, a, f)
    }

    #[test]
    fn smape_examples() {
        assert_eq!(smape(&mi(&[1.0], &[3.0, 4.0], &[3.0, 4.0])).unwrap(), 0.0);
        let v = smape(&mi(&[1.0], &[100.0, 200.0], &[110.0, 180.0])).unwrap();
        assert!((v - (10.0 / 105.0 + 20.0 / 190.0) / 2.0).abs() < 1e-12);
        assert!((v - 0.100_250_626_566_416).abs() < 1e-9);
        assert_eq!(smape(&mi(&[1.0], &[1.0], &[-1.0])).unwrap(), 2.0);
        assert_eq!(smape(&mi(&[1.0], &[0.0], &[0.0])).unwrap(), 0.0);
        assert_eq!(
            smape(&mi(&[1.0], &[1.0, 2.0], &[1.0])),
            Err(MetricError::LengthMismatch { actual: 2, forecast: 1 })
        );
    }

    #[test]
    fn mase_examples() {
        let v = mase(&mi(&[1.0, 2.0, 4.0], &[5.0], &[4.0])).unwrap();
        assert!((v - 1.0 / 1.5).abs() < 1e-12);
        assert_eq!(mase(&mi(&[1.0, 2.0], &[5.0], &[5.0])).unwrap(), 0.0);
        assert_eq!(
            mase(&mi(&[3.0, 3.0, 3.0], &[5.0], &[4.0])),
            Err(MetricError::DegenerateDenominator)
        );
    }

    #[test]
    fn sign_class_examples() {
        assert_eq!(sign_class(10.0, 12.0, 0.0), Direction::Up);
        assert_eq!(sign_class(10.0, 10.0, 0.0), Direction::Flat);
        assert_eq!(sign_class(10.0, 10.0, 3.0), Direction::Flat);
        assert_eq!(sign_class(10.0, 9.9, 0.5), Direction::Flat);
        assert_eq!(sign_class(10.0, 9.9, 0.0), Direction::Down);
    }

    #[test]
    fn sign_accuracy_examples() {
        let ctx = [1.0, 2.0, 3.0];
        let act = [4.0, 2.0, 3.5];
        let perfect = [mi(&ctx, &act, &act), mi(&ctx, &act, &act)];
        assert_eq!(sign_accuracy(&perfect, &SignConfig::STRICT).unwrap(), 1.0);

        let wrong = [mi(&ctx, &[2.0], &[4.0])];
        assert_eq!(sign_accuracy(&wrong, &SignConfig::STRICT).unwrap(), 0.0);
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[Some(1.0), Some(1.0), Some(1.0)]);
        assert_eq!((s.mean, s.std, s.count), (Some(1.0), Some(0.0), 3));
        let s = aggregate(&[Some(0.0), Some(2.0), None]);
        assert_eq!((s.mean, s.std, s.count, s.excluded), (Some(1.0), Some(1.0), 2, 1));
        let s = aggregate(&[None, None]);
        assert_eq!((s.mean, s.std, s.count, s.excluded), (None, None, 0, 2));
    }

    fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(-1e3f64..1e3, n),
                prop::collection::vec(-1e3f64..1e3, n),
            )
        })
    }

    proptest! {
        #[test]
        fn sign_class_antisymmetric(last in -10f64..10.0, diff in -5f64..5.0, th in 0f64..2.0) {
            let up = sign_class(last, last + diff, th);
            let down = sign_class(last, last - diff, th);
            let flipped = match up {
                Direction::Up => Direction::Down,
                Direction::Down => Direction::Up,
                Direction::Flat => Direction::Flat,
            };
            prop_assert_eq!(down, flipped);
        }

        #[test]
        fn smape_bounded((a, f) in vec_pair()) {
            let v = smape(&mi(&[0.0], &a, &f)).unwrap();
            prop_assert!((0.0..=2.0).contains(&v));
        }
    }
}

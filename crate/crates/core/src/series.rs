//! Univariate series containers, forward filling and min-max scaling.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("series `{0}` has no observed values")]
    AllMissing(String),
    #[error("series `{id}`: values has length {values} but missing mask has length {mask}")]
    MaskLength { id: String, values: usize, mask: usize },
    #[error("series `{0}` is empty")]
    Empty(String),
    #[error("series `{id}`: {timestamps} timestamps for {values} values")]
    TimestampLength {
        id: String,
        values: usize,
        timestamps: usize,
    },
}

/// Position of an observation in time: either an integer index or an
/// ISO-8601 date string. Dates compare lexicographically, which matches
/// chronological order for the `YYYY-MM-DD` form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimeStamp {
    Index(i64),
    Date(String),
}

impl TimeStamp {
    pub fn parse(raw: &str) -> Self {
        let raw = raw.trim();
        match raw.parse::<i64>() {
            Ok(i) => TimeStamp::Index(i),
            Err(_) => TimeStamp::Date(raw.to_string()),
        }
    }
}

impl Ord for TimeStamp {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (TimeStamp::Index(a), TimeStamp::Index(b)) => a.cmp(b),
            (TimeStamp::Date(a), TimeStamp::Date(b)) => a.cmp(b),
            (TimeStamp::Index(_), TimeStamp::Date(_)) => Ordering::Less,
            (TimeStamp::Date(_), TimeStamp::Index(_)) => Ordering::Greater,
        }
    }
}

impl PartialOrd for TimeStamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for TimeStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeStamp::Index(i) => write!(f, "{i}"),
            TimeStamp::Date(d) => f.write_str(d),
        }
    }
}

/// A univariate sequence with a per-value missing marker.
///
/// Missing positions carry an arbitrary placeholder in `values` (ingestion
/// writes NaN) and must be resolved with [`forward_fill`] before use.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    id: String,
    values: Vec<f64>,
    missing: Vec<bool>,
    timestamps: Option<Vec<TimeStamp>>,
}

impl TimeSeries {
    /// Fully observed series.
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self, SeriesError> {
        let missing = vec![false; values.len()];
        Self::with_missing(id, values, missing)
    }

    pub fn with_missing(
        id: impl Into<String>,
        values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self, SeriesError> {
        let id = id.into();
        if values.is_empty() {
            return Err(SeriesError::Empty(id));
        }
        if values.len() != missing.len() {
            return Err(SeriesError::MaskLength {
                id,
                values: values.len(),
                mask: missing.len(),
            });
        }
        Ok(Self {
            id,
            values,
            missing,
            timestamps: None,
        })
    }

    pub fn with_timestamps(mut self, timestamps: Vec<TimeStamp>) -> Result<Self, SeriesError> {
        if timestamps.len() != self.values.len() {
            return Err(SeriesError::TimestampLength {
                id: self.id,
                values: self.values.len(),
                timestamps: timestamps.len(),
            });
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn timestamps(&self) -> Option<&[TimeStamp]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }
}

/// Replaces every missing value with the most recent observed one. A leading
/// gap takes the first observed value so the length never changes.
pub fn forward_fill(series: &TimeSeries) -> Result<TimeSeries, SeriesError> {
    let first = series
        .values
        .iter()
        .zip(&series.missing)
        .find(|(_, &m)| !m)
        .map(|(&v, _)| v)
        .ok_or_else(|| SeriesError::AllMissing(series.id.clone()))?;

    let mut last = first;
    let values = series
        .values
        .iter()
        .zip(&series.missing)
        .map(|(&v, &m)| {
            if !m {
                last = v;
            }
            last
        })
        .collect::<Vec<_>>();

    Ok(TimeSeries {
        id: series.id.clone(),
        missing: vec![false; values.len()],
        values,
        timestamps: series.timestamps.clone(),
    })
}

/// Extremes of the window a scaled sequence was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub min: f64,
    pub max: f64,
}

impl ScalingRecord {
    /// Smallest and largest value of a nonempty slice.
    pub fn from_values(values: &[f64]) -> Self {
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        Self { min, max }
    }

    /// True for a constant window, where every value scales to 0.5.
    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn scale(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            0.5
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn invert(&self, scaled: f64) -> f64 {
        scaled * (self.max - self.min) + self.min
    }
}

/// Maps `values` linearly onto `[0, 1]`. A constant input maps to 0.5.
///
/// # Panics
///
/// Panics on an empty slice.
pub fn minmax_scale(values: &[f64]) -> (Vec<f64>, ScalingRecord) {
    assert!(!values.is_empty(), "minmax_scale needs at least one value");
    let record = ScalingRecord::from_values(values);
    let scaled = if record.is_degenerate() {
        vec![0.5; values.len()]
    } else {
        let range = record.range();
        values
            .iter()
            .map(|&v| {
                if v == record.min {
                    0.0
                } else if v == record.max {
                    1.0
                } else {
                    (v - record.min) / range
                }
            })
            .collect()
    };
    (scaled, record)
}

pub fn inverse_scale(scaled: &[f64], record: &ScalingRecord) -> Vec<f64> {
    scaled.iter().map(|&s| record.invert(s)).collect()
}

/// A (context, target) pair cut from one series, with the scaling record of
/// the context window.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastTask {
    pub id: String,
    context: Vec<f64>,
    target: Vec<f64>,
    scaling: ScalingRecord,
}

impl ForecastTask {
    /// The scaling record is computed from `context` alone.
    ///
    /// # Panics
    ///
    /// Panics if `context` is empty.
    pub fn new(id: impl Into<String>, context: Vec<f64>, target: Vec<f64>) -> Self {
        assert!(!context.is_empty(), "forecast task needs a nonempty context");
        let scaling = ScalingRecord::from_values(&context);
        Self {
            id: id.into(),
            context,
            target,
            scaling,
        }
    }

    pub fn context(&self) -> &[f64] {
        &self.context
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn target_mut(&mut self) -> &mut [f64] {
        &mut self.target
    }

    pub fn scaling(&self) -> &ScalingRecord {
        &self.scaling
    }

    pub fn input_len(&self) -> usize {
        self.context.len()
    }

    pub fn horizon(&self) -> usize {
        self.target.len()
    }

    pub fn scaled_context(&self) -> Vec<f64> {
        minmax_scale(&self.context).0
    }

    /// Target expressed in the context's scaled units (values may leave
    /// `[0, 1]`).
    pub fn scaled_target(&self) -> Vec<f64> {
        self.target.iter().map(|&v| self.scaling.scale(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn with_gaps(values: &[Option<f64>]) -> TimeSeries {
        let mask = values.iter().map(|v| v.is_none()).collect();
        let vals = values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        TimeSeries::with_missing("s", vals, mask).unwrap()
    }

    #[test]
    fn forward_fill_examples() {
        let filled = forward_fill(&with_gaps(&[Some(1.0), None, Some(3.0)])).unwrap();
        assert_eq!(filled.values(), &[1.0, 1.0, 3.0]);
        assert!(!filled.has_missing());

        let filled = forward_fill(&with_gaps(&[None, Some(2.0), None])).unwrap();
        assert_eq!(filled.values(), &[2.0, 2.0, 2.0]);

        let filled = forward_fill(&with_gaps(&[Some(5.0), Some(6.0), Some(7.0)])).unwrap();
        assert_eq!(filled.values(), &[5.0, 6.0, 7.0]);
    }

    #[test]
    fn forward_fill_all_missing() {
        let err = forward_fill(&with_gaps(&[None, None])).unwrap_err();
        assert_eq!(err, SeriesError::AllMissing("s".into()));
    }

    #[test]
    fn constructor_checks_lengths() {
        assert!(matches!(
            TimeSeries::with_missing("x", vec![1.0], vec![false, true]),
            Err(SeriesError::MaskLength { .. })
        ));
        assert!(matches!(
            TimeSeries::new("x", vec![]),
            Err(SeriesError::Empty(_))
        ));
    }

    #[test]
    fn scale_examples() {
        let (s, r) = minmax_scale(&[2.0, 4.0, 6.0]);
        assert_eq!(s, vec![0.0, 0.5, 1.0]);
        assert_eq!(r, ScalingRecord { min: 2.0, max: 6.0 });

        let (s, r) = minmax_scale(&[7.0, 7.0, 7.0]);
        assert_eq!(s, vec![0.5, 0.5, 0.5]);
        assert!(r.is_degenerate());

        let (s, _) = minmax_scale(&[0.0, 10.0]);
        assert_eq!(s, vec![0.0, 1.0]);
    }

    #[test]
    fn inverse_examples() {
        let r = ScalingRecord { min: 2.0, max: 6.0 };
        assert_eq!(inverse_scale(&[0.0, 0.5, 1.0], &r), vec![2.0, 4.0, 6.0]);
        let r = ScalingRecord { min: 7.0, max: 7.0 };
        assert_eq!(inverse_scale(&[0.5], &r), vec![7.0]);
    }

    #[test]
    fn task_scaling_ignores_target() {
        let a = ForecastTask::new("a", vec![1.0, 5.0, 3.0], vec![2.0, 2.0]);
        let mut b = a.clone();
        b.target_mut()[0] = 1e6;
        b.target_mut()[1] = -1e6;
        assert_eq!(a.scaling(), b.scaling());
        let c = ForecastTask::new("c", vec![1.0, 5.0, 3.0], vec![-40.0, 99.0]);
        assert_eq!(a.scaling(), c.scaling());
    }

    fn gappy_series() -> impl Strategy<Value = Vec<Option<f64>>> {
        prop::collection::vec(prop::option::weighted(0.7, -1e3f64..1e3), 1..40)
            .prop_filter("needs an observation", |v| v.iter().any(Option::is_some))
    }

    proptest! {
        #[test]
        fn roundtrip_is_identity(values in prop::collection::vec(-1e6f64..1e6, 2..64)) {
            let (scaled, rec) = minmax_scale(&values);
            prop_assume!(!rec.is_degenerate());
            let back = inverse_scale(&scaled, &rec);
            for (v, b) in values.iter().zip(&back) {
                let tol = 1e-9 * v.abs().max(rec.range());
                prop_assert!((v - b).abs() <= tol, "{v} vs {b}");
            }
        }

        #[test]
        fn extremes_hit_exactly(values in prop::collection::vec(-1e6f64..1e6, 2..64)) {
            let (scaled, rec) = minmax_scale(&values);
            prop_assume!(!rec.is_degenerate());
            let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(lo, 0.0);
            prop_assert_eq!(hi, 1.0);
            for (v, s) in values.iter().zip(&scaled) {
                if *v == rec.min { prop_assert_eq!(*s, 0.0); }
                if *v == rec.max { prop_assert_eq!(*s, 1.0); }
                prop_assert!((0.0..=1.0).contains(s));
            }
        }

        #[test]
        fn forward_fill_idempotent(values in gappy_series()) {
            let once = forward_fill(&with_gaps(&values)).unwrap();
            let twice = forward_fill(&once).unwrap();
            prop_assert_eq!(once.values(), twice.values());
            prop_assert!(!once.has_missing());
        }
    }
}

//! Foundational pieces of the spectrogram forecasting toolkit: series
//! containers and preprocessing, synthetic and CSV-backed dataset
//! construction, statistical baseline forecasters, and evaluation metrics.

pub mod baselines;
pub mod datagen;
pub mod metrics;
pub mod rng;
pub mod series;

pub use series::{
    forward_fill, inverse_scale, minmax_scale, ForecastTask, ScalingRecord, SeriesError,
    TimeSeries,
};

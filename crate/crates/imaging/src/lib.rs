//! Turns scaled time-series windows into model inputs: a Morlet wavelet
//! spectrogram stacked under an intensity strip, a plain lineplot, or the
//! strip alone.

pub mod canvas;
pub mod compose;
pub mod lineplot;
pub mod raster;
pub mod wavelet;

pub use compose::{
    compose_multimodal, intensity_strip, render_multimodal, strip_raster, IMAGE_SIZE, SPEC_ROWS,
    STRIP_ROWS,
};
pub use lineplot::render_lineplot;
pub use raster::GrayImage;
pub use wavelet::{cwt, morlet, CwtPlan, MorletConfig, Spectrogram};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("value {value} at index {index} lies outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("strip has length {strip} but spectrogram has {spec} columns")]
    LengthMismatch { strip: usize, spec: usize },
    #[error("series of length {0} is too short")]
    TooShort(usize),
    #[error("invalid wavelet config: {0}")]
    InvalidConfig(String),
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ImagingError>;

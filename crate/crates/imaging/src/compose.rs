use crate::raster::{resample_bilinear, resample_linear, GrayImage};
use crate::wavelet::{CwtPlan, Spectrogram};
use crate::{ImagingError, Result};

pub const IMAGE_SIZE: usize = 128;
pub const STRIP_ROWS: usize = 16;
pub const SPEC_ROWS: usize = IMAGE_SIZE - STRIP_ROWS;

const RANGE_SLACK: f64 = 1e-9;

/// `round(255 v)` per value; values must lie in `[0, 1]`.
pub fn intensity_strip(scaled: &[f64]) -> Result<Vec<u8>> {
    scaled
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if !(value >= -RANGE_SLACK && value <= 1.0 + RANGE_SLACK) {
                return Err(ImagingError::OutOfRange { index, value });
            }
            Ok((255.0 * value.clamp(0.0, 1.0)).round() as u8)
        })
        .collect()
}

fn widen_strip(strip: &[u8]) -> Vec<u8> {
    let src: Vec<f64> = strip.iter().map(|&p| p as f64).collect();
    resample_linear(&src, IMAGE_SIZE)
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// The strip alone, widened to 128 columns and repeated over 16 rows.
pub fn strip_raster(strip: &[u8]) -> GrayImage {
    let row = widen_strip(strip);
    GrayImage {
        width: IMAGE_SIZE,
        height: STRIP_ROWS,
        pixels: row.repeat(STRIP_ROWS),
    }
}

/// Strip over spectrogram in a 128x128 raster. The spectrogram is resampled
/// to 112x128 and then scaled so its largest pixel is 255.
pub fn compose_multimodal(strip: &[u8], spec: &Spectrogram) -> Result<GrayImage> {
    if strip.len() != spec.len() {
        return Err(ImagingError::LengthMismatch {
            strip: strip.len(),
            spec: spec.len(),
        });
    }
    let mut img = strip_raster(strip);
    img.height = IMAGE_SIZE;
    let resized = resample_bilinear(spec.magnitudes(), spec.n_scales(), spec.len(), SPEC_ROWS, IMAGE_SIZE);
    let peak = resized.iter().copied().fold(0.0, f64::max);
    let gain = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    img.pixels
        .extend(resized.iter().map(|v| (v * gain).round().clamp(0.0, 255.0) as u8));
    Ok(img)
}

/// Full multimodal rendering of a scaled window. The wavelet sees the window
/// with its mean removed so the zero padding does not register as a step.
pub fn render_multimodal(scaled: &[f64], plan: &CwtPlan) -> Result<GrayImage> {
    let strip = intensity_strip(scaled)?;
    let mean = scaled.iter().sum::<f64>() / scaled.len().max(1) as f64;
    let centered: Vec<f64> = scaled.iter().map(|v| v - mean).collect();
    let spec = plan.transform(&centered)?;
    compose_multimodal(&strip, &spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_examples() {
        assert_eq!(intensity_strip(&[0.0, 0.5, 1.0]).unwrap(), vec![0, 128, 255]);
        assert!(intensity_strip(&[0.0, 1.1]).is_err());
        assert!(intensity_strip(&[-1e-10, 1.0 + 1e-10]).is_ok());
        assert!(intensity_strip(&[f64::NAN]).is_err());
    }

    #[test]
    fn strip_raster_shape() {
        let r = strip_raster(&[0, 255]);
        assert_eq!((r.width, r.height), (128, 16));
        assert_eq!(r.row(0), r.row(15));
        assert_eq!(r.get(0, 0), 0);
        assert_eq!(r.get(0, 127), 255);
    }
}

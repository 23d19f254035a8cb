use crate::{ImagingError, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Kernel support in units of the scale; the Gaussian envelope is below
/// 1e-7 of its peak beyond this.
const SUPPORT: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorletConfig {
    pub w: f64,
    pub n_scales: usize,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl MorletConfig {
    pub const DEFAULT_W: f64 = 5.0;
    pub const DEFAULT_SCALES: usize = 112;

    /// Scales covering periods from 2 samples up to the window length.
    pub fn for_length(len: usize) -> Self {
        Self::for_periods(Self::DEFAULT_W, Self::DEFAULT_SCALES, 2.0, (len as f64).max(3.0))
    }

    pub fn for_periods(w: f64, n_scales: usize, p_min: f64, p_max: f64) -> Self {
        Self {
            w,
            n_scales,
            scale_min: scale_for_period(w, p_min),
            scale_max: scale_for_period(w, p_max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0) {
            return Err(ImagingError::InvalidConfig(format!("w = {} must be positive", self.w)));
        }
        if self.n_scales < 2 {
            return Err(ImagingError::InvalidConfig("need at least two scales".into()));
        }
        if !(self.scale_min > 0.0 && self.scale_min < self.scale_max) {
            return Err(ImagingError::InvalidConfig(format!(
                "scale range [{}, {}] is empty or non-positive",
                self.scale_min, self.scale_max
            )));
        }
        Ok(())
    }

    /// Geometric scale grid, smallest first.
    pub fn scales(&self) -> Vec<f64> {
        let ratio = (self.scale_max / self.scale_min).ln() / (self.n_scales - 1) as f64;
        (0..self.n_scales)
            .map(|i| self.scale_min * (ratio * i as f64).exp())
            .collect()
    }
}

/// Scale whose Morlet center frequency matches a period of `period` samples.
pub fn scale_for_period(w: f64, period: f64) -> f64 {
    w * period / (2.0 * PI)
}

pub fn morlet(x: f64, s: f64, w: f64) -> Complex64 {
    let u = x / s;
    let amp = s.powf(-0.5) * PI.powf(-0.25) * (-0.5 * u * u).exp();
    Complex64::from_polar(amp, w * u)
}

/// Magnitudes of the transform, `n_scales` rows (smallest scale first) by
/// `len` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    magnitudes: Vec<f64>,
    n_scales: usize,
    len: usize,
}

impl Spectrogram {
    pub fn new(magnitudes: Vec<f64>, n_scales: usize, len: usize) -> Self {
        assert_eq!(magnitudes.len(), n_scales * len);
        Self {
            magnitudes,
            n_scales,
            len,
        }
    }

    pub fn n_scales(&self) -> usize {
        self.n_scales
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn row(&self, scale: usize) -> &[f64] {
        &self.magnitudes[scale * self.len..(scale + 1) * self.len]
    }

    pub fn at(&self, scale: usize, t: usize) -> f64 {
        self.magnitudes[scale * self.len + t]
    }

    pub fn max(&self) -> f64 {
        self.magnitudes.iter().copied().fold(0.0, f64::max)
    }
}

/// Precomputed conjugated wavelet kernels for one config and window length,
/// reused across every window of a dataset.
#[derive(Debug, Clone)]
pub struct CwtPlan {
    config: MorletConfig,
    len: usize,
    /// Per scale: half width `k` and taps for lags `-k..=k`.
    kernels: Vec<(usize, Vec<Complex64>)>,
}

impl CwtPlan {
    pub fn new(config: MorletConfig, len: usize) -> Result<Self> {
        config.validate()?;
        if len < 2 {
            return Err(ImagingError::TooShort(len));
        }
        let kernels = config
            .scales()
            .into_iter()
            .map(|s| {
                let half = ((SUPPORT * s).ceil() as usize).min(len - 1);
                let taps = (-(half as i64)..=half as i64)
                    .map(|d| morlet(d as f64, s, config.w).conj())
                    .collect();
                (half, taps)
            })
            .collect();
        Ok(Self {
            config,
            len,
            kernels,
        })
    }

    pub fn config(&self) -> &MorletConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `W(s, t) = sum_tau v[tau] * conj(psi_s(tau - t))` with zeros outside
    /// the window.
    pub fn transform(&self, values: &[f64]) -> Result<Spectrogram> {
        let n = self.len;
        if values.len() != n {
            return Err(ImagingError::LengthMismatch {
                strip: values.len(),
                spec: n,
            });
        }
        let mut out = Vec::with_capacity(self.kernels.len() * n);
        for (half, taps) in &self.kernels {
            let half = *half as i64;
            for t in 0..n as i64 {
                let lo = (t - half).max(0);
                let hi = (t + half).min(n as i64 - 1);
                let mut acc = Complex64::new(0.0, 0.0);
                for tau in lo..=hi {
                    acc += taps[(tau - t + half) as usize] * values[tau as usize];
                }
                out.push(acc.norm());
            }
        }
        Ok(Spectrogram::new(out, self.kernels.len(), n))
    }
}

pub fn cwt(values: &[f64], config: &MorletConfig) -> Result<Spectrogram> {
    CwtPlan::new(*config, values.len())?.transform(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavelet_at_origin() {
        let c = morlet(0.0, 1.0, 5.0);
        assert!((c.re - PI.powf(-0.25)).abs() < 1e-15 && c.im == 0.0);
        assert!((c.re - 0.75113).abs() < 1e-5);
        let c4 = morlet(0.0, 4.0, 5.0);
        assert!((c4.re - 0.5 * PI.powf(-0.25)).abs() < 1e-15);
    }

    #[test]
    fn wavelet_decays() {
        for s in [0.5, 1.0, 7.0] {
            assert!(morlet(5.0 * s, s, 5.0).norm() < 1e-5 * morlet(0.0, s, 5.0).norm());
        }
    }

    #[test]
    fn scale_grid_endpoints() {
        let cfg = MorletConfig::for_length(80);
        let s = cfg.scales();
        assert_eq!(s.len(), 112);
        assert!((s[0] - cfg.scale_min).abs() < 1e-12);
        assert!((s[111] - cfg.scale_max).abs() < 1e-9);
        assert!(s.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = MorletConfig::for_length(64);
        cfg.n_scales = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = MorletConfig::for_length(64);
        cfg.scale_min = cfg.scale_max;
        assert!(cfg.validate().is_err());
        assert!(cwt(&[1.0], &MorletConfig::for_length(64)).is_err());
    }
}

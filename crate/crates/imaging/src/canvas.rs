//! RGB canvas for qualitative forecast plots.

use crate::lineplot::bresenham;
use crate::raster::write_png;
use crate::Result;
use std::path::Path;

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbCanvas {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbCanvas {
    pub fn new(width: usize, height: usize, background: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: background.repeat(width * height),
        }
    }

    pub fn put(&mut self, x: i64, y: i64, color: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = 3 * (y as usize * self.width + x as usize);
            self.pixels[i..i + 3].copy_from_slice(&color);
        }
    }

    pub fn line(&mut self, from: (i64, i64), to: (i64, i64), color: Rgb, thick: bool) {
        bresenham(from.0, from.1, to.0, to.1, |x, y| {
            self.put(x, y, color);
            if thick {
                self.put(x, y + 1, color);
                self.put(x + 1, y, color);
            }
        });
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_png(file, self.width, self.height, png::ColorType::Rgb, &self.pixels)
    }
}

/// Draws several series on shared axes. Each series is `(start index,
/// values, color)`; the x axis spans all indices, the y axis all values.
pub fn plot_series(series: &[(usize, &[f64], Rgb)], width: usize, height: usize) -> RgbCanvas {
    let mut canvas = RgbCanvas::new(width, height, [255, 255, 255]);
    let margin = 8.0;
    let x_end = series
        .iter()
        .map(|(s, v, _)| s + v.len())
        .max()
        .unwrap_or(1)
        .max(2);
    let finite = series.iter().flat_map(|(_, v, _)| v.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
    let px = |i: usize| (margin + i as f64 * (width as f64 - 2.0 * margin) / (x_end - 1) as f64).round() as i64;
    let py = |v: f64| {
        (height as f64 - margin - (v - lo) / (hi - lo) * (height as f64 - 2.0 * margin)).round() as i64
    };
    // Axis frame.
    let grey = [200, 200, 200];
    let (w, h, m) = (width as i64 - 1, height as i64 - 1, margin as i64);
    canvas.line((m, h - m), (w - m, h - m), grey, false);
    canvas.line((m, m), (m, h - m), grey, false);
    for (start, values, color) in series {
        let pts: Vec<(i64, i64)> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| (px(start + i), py(v)))
            .collect();
        for seg in pts.windows(2) {
            canvas.line(seg[0], seg[1], *color, true);
        }
        if pts.len() == 1 {
            canvas.put(pts[0].0, pts[0].1, *color);
        }
    }
    canvas
}

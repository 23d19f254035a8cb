use crate::Result;
use std::io::Write;
use std::path::Path;

/// 8-bit single-channel raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    pub fn write_png<W: Write>(&self, w: W) -> Result<()> {
        write_png(w, self.width, self.height, png::ColorType::Grayscale, &self.pixels)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_png(file)
    }
}

pub(crate) fn write_png<W: Write>(
    w: W,
    width: usize,
    height: usize,
    color: png::ColorType,
    data: &[u8],
) -> Result<()> {
    let mut enc = png::Encoder::new(w, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(data)?;
    writer.finish()?;
    Ok(())
}

/// Linear resampling with aligned end points.
pub fn resample_linear(src: &[f64], out_len: usize) -> Vec<f64> {
    match (src.len(), out_len) {
        (_, 0) => Vec::new(),
        (0, n) => vec![0.0; n],
        (1, n) => vec![src[0]; n],
        (_, 1) => vec![src[0]],
        (m, n) => (0..n)
            .map(|j| {
                let pos = j as f64 * (m - 1) as f64 / (n - 1) as f64;
                let i = (pos.floor() as usize).min(m - 2);
                let f = pos - i as f64;
                src[i] * (1.0 - f) + src[i + 1] * f
            })
            .collect(),
    }
}

/// Bilinear resampling of a `rows x cols` grid to `out_rows x out_cols`.
pub fn resample_bilinear(
    src: &[f64],
    rows: usize,
    cols: usize,
    out_rows: usize,
    out_cols: usize,
) -> Vec<f64> {
    let widened: Vec<Vec<f64>> = src
        .chunks(cols.max(1))
        .map(|r| resample_linear(r, out_cols))
        .collect();
    let mut out = vec![0.0; out_rows * out_cols];
    for c in 0..out_cols {
        let column: Vec<f64> = (0..rows).map(|r| widened[r][c]).collect();
        for (r, v) in resample_linear(&column, out_rows).into_iter().enumerate() {
            out[r * out_cols + c] = v;
        }
    }
    out
}

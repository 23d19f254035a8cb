use crate::compose::IMAGE_SIZE;
use crate::raster::GrayImage;

const TOP_ROW: f64 = 4.0;
const BOTTOM_ROW: f64 = 123.0;

/// Integer line rasterization between two points, inclusive.
pub fn bresenham(x0: i64, y0: i64, x1: i64, y1: i64, mut plot: impl FnMut(i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        plot(x, y);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Black 2-pixel polyline on white; value 0 sits on row 123 and value 1 on
/// row 4, samples spread evenly over the columns.
pub fn render_lineplot(scaled: &[f64]) -> GrayImage {
    let mut img = GrayImage::filled(IMAGE_SIZE, IMAGE_SIZE, 255);
    let last = (IMAGE_SIZE - 1) as f64;
    let row_of = |v: f64| (BOTTOM_ROW - v.clamp(0.0, 1.0) * (BOTTOM_ROW - TOP_ROW)).round() as i64;
    let points: Vec<(i64, i64)> = match scaled.len() {
        0 => return img,
        1 => vec![(0, row_of(scaled[0])), (last as i64, row_of(scaled[0]))],
        n => scaled
            .iter()
            .enumerate()
            .map(|(i, &v)| ((i as f64 * last / (n - 1) as f64).round() as i64, row_of(v)))
            .collect(),
    };
    let size = IMAGE_SIZE as i64;
    let mut stamp = |x: i64, y: i64| {
        for (px, py) in [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)] {
            if (0..size).contains(&px) && (0..size).contains(&py) {
                img.set(py as usize, px as usize, 0);
            }
        }
    };
    for seg in points.windows(2) {
        bresenham(seg[0].0, seg[0].1, seg[1].0, seg[1].1, &mut stamp);
    }
    img
}

//! Minimal raster line charts written as binary PPM.

const W: usize = 480;
const H: usize = 320;
const MARGIN: usize = 30;

const PALETTE: [[u8; 3]; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
];

struct Canvas {
    px: Vec<[u8; 3]>,
}

impl Canvas {
    fn new() -> Self {
        Self { px: vec![[255; 3]; W * H] }
    }

    fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if (0..W as i64).contains(&x) && (0..H as i64).contains(&y) {
            self.px[y as usize * W + x as usize] = c;
        }
    }

    fn line(&mut self, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.set(x0, y0, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    fn marker(&mut self, (x, y): (i64, i64), c: [u8; 3]) {
        for dx in -2..=2 {
            for dy in -2..=2 {
                self.set(x + dx, y + dy, c);
            }
        }
    }

    fn ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{W} {H}\n255\n").into_bytes();
        out.extend(self.px.iter().flatten());
        out
    }
}

/// Line chart of `series` (points `(x, y)`), one palette colour per series
/// in order, with the legend as coloured squares along the top edge.
pub(crate) fn line_chart(series: &[Vec<(f64, f64)>]) -> Vec<u8> {
    let mut c = Canvas::new();
    let pts = series.iter().flatten();
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    let black = [0, 0, 0];
    let (left, bottom) = (MARGIN as i64, (H - MARGIN) as i64);
    let (right, top) = ((W - MARGIN / 2) as i64, MARGIN as i64);
    c.line((left, bottom), (right, bottom), black);
    c.line((left, bottom), (left, top), black);
    if !x_lo.is_finite() {
        return c.ppm();
    }
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let to_px = |(x, y): (f64, f64)| {
        let u = (x - x_lo) / (x_hi - x_lo);
        let v = (y - y_lo) / (y_hi - y_lo);
        (
            left + (u * (right - left) as f64).round() as i64,
            bottom - (v * (bottom - top) as f64).round() as i64,
        )
    };
    for (i, s) in series.iter().enumerate() {
        let col = PALETTE[i % PALETTE.len()];
        c.marker((left + 8 + 14 * i as i64, 8), col);
        for w in s.windows(2) {
            c.line(to_px(w[0]), to_px(w[1]), col);
        }
        for &p in s {
            c.marker(to_px(p), col);
        }
    }
    c.ppm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_size() {
        let img = line_chart(&[vec![(0.0, 1.0), (1.0, 2.0)]]);
        let head = format!("P6\n{W} {H}\n255\n");
        assert!(img.starts_with(head.as_bytes()));
        assert_eq!(img.len(), head.len() + W * H * 3);
        assert_eq!(line_chart(&[]).len(), img.len());
    }
}

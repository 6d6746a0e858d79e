//! Minimal RGB drawing for overlays.

use orbit_sot_core::{BoundingBox, Frame, Point};

pub type Rgb = [u8; 3];

pub const PRED: Rgb = [255, 255, 0];
pub const GT: Rgb = [0, 255, 255];
pub const POINTS: Rgb = [255, 0, 255];

/// Red at `t = 0` to green at `t = 1`.
pub fn gradient(t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0);
    [(255.0 * (1.0 - t)).round() as u8, (255.0 * t).round() as u8, 0]
}

pub struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Canvas {
    pub fn from_frame(frame: &Frame) -> Self {
        let pixels = if frame.channels() == 3 {
            frame.pixels().to_vec()
        } else {
            frame.pixels().iter().flat_map(|&v| [v, v, v]).collect()
        };
        Self {
            width: frame.width(),
            height: frame.height(),
            pixels,
        }
    }

    pub fn into_frame(self, index: usize) -> Frame {
        Frame::new(index, self.width, self.height, 3, self.pixels).expect("canvas buffer is RGB")
    }

    #[cfg(test)]
    pub fn get(&self, col: usize, row: usize) -> Rgb {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put(&mut self, col: i64, row: i64, c: Rgb) {
        if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
            return;
        }
        let i = (row as usize * self.width + col as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    /// Bresenham line between the pixels containing `a` and `b`.
    pub fn line(&mut self, a: Point, b: Point, c: Rgb) {
        let (mut x0, mut y0) = (a.x.floor() as i64, a.y.floor() as i64);
        let (x1, y1) = (b.x.floor() as i64, b.y.floor() as i64);
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, c);
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

    /// Filled square of side `2 * radius + 1` around the pixel containing `p`.
    pub fn dot(&mut self, p: Point, radius: i64, c: Rgb) {
        let (x, y) = (p.x.floor() as i64, p.y.floor() as i64);
        for row in y - radius..=y + radius {
            for col in x - radius..=x + radius {
                self.put(col, row, c);
            }
        }
    }

    /// One-pixel outline of the pixels the box covers; `dash` is (on, off) lengths.
    pub fn rect(&mut self, b: &BoundingBox, c: Rgb, dash: Option<(usize, usize)>) {
        let (c0, r0) = (b.x().floor() as i64, b.y().floor() as i64);
        let (c1, r1) = ((b.right().ceil() as i64 - 1).max(c0), (b.bottom().ceil() as i64 - 1).max(r0));
        let mut perimeter = Vec::new();
        perimeter.extend((c0..=c1).map(|x| (x, r0)));
        perimeter.extend((r0 + 1..=r1).map(|y| (c1, y)));
        if r1 > r0 {
            perimeter.extend((c0..c1).rev().map(|x| (x, r1)));
        }
        if c1 > c0 {
            perimeter.extend((r0 + 1..r1).rev().map(|y| (c0, y)));
        }
        for (k, (x, y)) in perimeter.into_iter().enumerate() {
            let on = match dash {
                Some((on, off)) => k % (on + off) < on,
                None => true,
            };
            if on {
                self.put(x, y, c);
            }
        }
    }
}

//! Point sets and seeded sampling of points from masks.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::raster::{Mask, RasterError};

/// Points on one frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointSet {
    pub frame_index: usize,
    pub points: Vec<Point>,
}

impl PointSet {
    pub fn new(frame_index: usize, points: Vec<Point>) -> Self {
        Self {
            frame_index,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Draws `n` pixel centers from the set pixels of `mask`.
///
/// Without replacement when the mask has at least `n` pixels; otherwise every pixel is
/// taken once and the remainder is drawn with replacement.
pub fn sample_points(mask: &Mask, n: usize, seed: u64) -> Result<Vec<Point>, RasterError> {
    let centers: Vec<Point> = mask.set_pixels().map(|p| p.center()).collect();
    if centers.is_empty() {
        return Err(RasterError::EmptyMask);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if centers.len() >= n {
        return Ok(index::sample(&mut rng, centers.len(), n)
            .into_iter()
            .map(|i| centers[i])
            .collect());
    }
    let mut out = centers.clone();
    while out.len() < n {
        out.push(centers[rng.random_range(0..centers.len())]);
    }
    Ok(out)
}

/// Independent random streams, one per purpose, all derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Refresh = 2,
    Fallback = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

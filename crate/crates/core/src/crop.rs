//! Crop-and-upsample around small objects so the segmenter sees them at a usable size.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::geometry::{BoundingBox, Point};
use crate::raster::{Frame, Mask};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CropError {
    #[error("crop window around {0:?} lies outside the {1}x{2} frame")]
    OutsideFrame([f64; 4], usize, usize),
}

/// Maps between a resampled crop and the frame it was cut from.
///
/// `source_box` is the crop window in source coordinates (always pixel-aligned);
/// a crop coordinate `q` corresponds to `source_box.origin + q / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropTransform {
    pub source_box: BoundingBox,
    pub scale: f64,
}

impl CropTransform {
    pub fn identity(width: usize, height: usize) -> Self {
        Self {
            source_box: BoundingBox::new(0.0, 0.0, width as f64, height as f64)
                .expect("frame extent is positive"),
            scale: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.source_box.x() == 0.0 && self.source_box.y() == 0.0
    }

    /// Source coordinates to crop coordinates.
    pub fn map_in(&self, p: Point) -> Point {
        Point::new(
            (p.x - self.source_box.x()) * self.scale,
            (p.y - self.source_box.y()) * self.scale,
        )
    }

    /// Crop coordinates to source coordinates.
    pub fn map_out(&self, q: Point) -> Point {
        Point::new(
            self.source_box.x() + q.x / self.scale,
            self.source_box.y() + q.y / self.scale,
        )
    }

    pub fn map_box_in(&self, b: &BoundingBox) -> BoundingBox {
        let o = self.map_in(Point::new(b.x(), b.y()));
        BoundingBox::new(o.x, o.y, b.w() * self.scale, b.h() * self.scale)
            .expect("scaling keeps extent positive")
    }

    pub fn map_box_out(&self, b: &BoundingBox) -> BoundingBox {
        let o = self.map_out(Point::new(b.x(), b.y()));
        BoundingBox::new(o.x, o.y, b.w() / self.scale, b.h() / self.scale)
            .expect("scaling keeps extent positive")
    }

    /// Crop raster size for this window.
    pub fn crop_dims(&self) -> (usize, usize) {
        (
            ((self.source_box.w() * self.scale).round() as usize).max(1),
            ((self.source_box.h() * self.scale).round() as usize).max(1),
        )
    }

    /// Resamples a crop-space mask onto the source raster: a source pixel is set when its
    /// center falls on a set crop pixel.
    pub fn mask_to_source(&self, crop_mask: &Mask, width: usize, height: usize) -> Mask {
        Mask::from_fn(width, height, |col, row| {
            let q = self.map_in(Point::pixel_center(col, row));
            crop_mask.contains_point(q)
        })
    }

    /// Resamples a source mask into crop space: a crop pixel is set when its center maps
    /// onto a set source pixel.
    pub fn mask_from_source(&self, source: &Mask) -> Mask {
        let (w, h) = self.crop_dims();
        Mask::from_fn(w, h, |col, row| {
            source.contains_point(self.map_out(Point::pixel_center(col, row)))
        })
    }
}

/// Crop window and scale that [`crop_resample`] would use for `object` on a
/// `width` x `height` frame.
pub fn crop_transform_for(
    width: usize,
    height: usize,
    object: &BoundingBox,
    cfg: &PipelineConfig,
) -> Result<CropTransform, CropError> {
    let outside = || CropError::OutsideFrame(object.as_array(), width, height);
    let bounds = BoundingBox::new(0.0, 0.0, width as f64, height as f64).map_err(|_| outside())?;
    if bounds.intersection_area(object) <= 0.0 {
        return Err(outside());
    }
    if object.min_dim() >= cfg.small_object_max_dim {
        return Ok(CropTransform::identity(width, height));
    }
    let window = object
        .scaled_about_center(cfg.crop_context_factor)
        .map_err(|_| outside())?;
    let x0 = window.x().floor().max(0.0);
    let y0 = window.y().floor().max(0.0);
    let x1 = window.right().ceil().min(width as f64);
    let y1 = window.bottom().ceil().min(height as f64);
    if x1 <= x0 || y1 <= y0 {
        return Err(outside());
    }
    Ok(CropTransform {
        source_box: BoundingBox::new(x0, y0, x1 - x0, y1 - y0).map_err(|_| outside())?,
        scale: (cfg.target_min_dim_after_resample / object.min_dim()).max(1.0),
    })
}

/// Cuts a context window around `object` and upsamples it bilinearly so the object's
/// smaller side reaches `cfg.target_min_dim_after_resample`.
///
/// Objects whose smaller side is at least `cfg.small_object_max_dim` pass through with an
/// identity transform.
pub fn crop_resample(
    frame: &Frame,
    object: &BoundingBox,
    cfg: &PipelineConfig,
) -> Result<(Frame, CropTransform), CropError> {
    let (fw, fh) = frame.dims();
    let t = crop_transform_for(fw, fh, object, cfg)?;
    if t.is_identity() {
        return Ok((frame.clone().with_crop(t), t));
    }
    let (x0, y0, scale) = (t.source_box.x(), t.source_box.y(), t.scale);
    let (cw, ch) = t.crop_dims();
    let channels = frame.channels();
    let mut pixels = Vec::with_capacity(cw * ch * channels);
    for row in 0..ch {
        // continuous pixel-index coordinate of this sample in the source frame
        let v = (y0 + (row as f64 + 0.5) / scale - 0.5).clamp(0.0, (fh - 1) as f64);
        let r0 = v.floor() as usize;
        let r1 = (r0 + 1).min(fh - 1);
        let fy = v - r0 as f64;
        for col in 0..cw {
            let u = (x0 + (col as f64 + 0.5) / scale - 0.5).clamp(0.0, (fw - 1) as f64);
            let c0 = u.floor() as usize;
            let c1 = (c0 + 1).min(fw - 1);
            let fx = u - c0 as f64;
            for c in 0..channels {
                let top = frame.sample(c0, r0, c) as f64 * (1.0 - fx) + frame.sample(c1, r0, c) as f64 * fx;
                let bottom = frame.sample(c0, r1, c) as f64 * (1.0 - fx) + frame.sample(c1, r1, c) as f64 * fx;
                pixels.push((top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    let sub = Frame::new(frame.index(), cw, ch, channels, pixels)
        .expect("crop buffer matches its dimensions")
        .with_crop(t);
    Ok((sub, t))
}

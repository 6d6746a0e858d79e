//! Ground-truth driven stand-ins for the segmentation and point-tracking models.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BackendError, PointTracker, Prompt, SegmentRequest, Segmenter, TrackRequest, Trajectory};
use crate::geometry::Point;
use crate::raster::{Frame, Mask};
use crate::simulator::GroundTruth;

/// Seeded corruption applied by the oracle. All zero means exact answers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleNoise {
    /// Per-point, per-frame Gaussian position noise (pixels).
    pub jitter_sigma: f64,
    /// Per-point, per-frame probability of reporting a point as occluded.
    pub dropout: f64,
    /// Mask erosion radius, in request-frame pixels.
    pub erosion_radius: usize,
    /// Mask dilation radius, in request-frame pixels.
    pub dilation_radius: usize,
    pub seed: u64,
}

impl OracleNoise {
    pub fn is_noiseless(&self) -> bool {
        self.jitter_sigma == 0.0 && self.dropout == 0.0 && self.erosion_radius == 0 && self.dilation_radius == 0
    }
}

/// Answers segment and track requests for the scene's target object.
///
/// Segmentation returns the target mask when the prompt touches the target and an empty
/// mask otherwise; distractors are never returned. Tracking moves points that start on
/// the target with its exact motion and leaves all other points in place.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    truth: Arc<GroundTruth>,
    noise: OracleNoise,
}

impl OracleBackend {
    pub fn new(truth: Arc<GroundTruth>, noise: OracleNoise) -> Self {
        Self { truth, noise }
    }

    pub fn noise(&self) -> &OracleNoise {
        &self.noise
    }

    fn frame_index(&self, frame: &Frame) -> Result<usize, BackendError> {
        let t = frame.index();
        if t >= self.truth.target.masks.len() {
            return Err(BackendError::InvalidRequest(format!(
                "frame {t} is beyond the scene's {} frames",
                self.truth.target.masks.len()
            )));
        }
        Ok(t)
    }

    /// Target mask expressed on the request frame's raster.
    pub fn target_mask_on(&self, frame: &Frame) -> Result<Mask, BackendError> {
        let gt = &self.truth.target.masks[self.frame_index(frame)?];
        let m = match frame.crop() {
            Some(t) => t.mask_from_source(gt),
            None => gt.clone(),
        };
        if m.dims() != frame.dims() {
            return Err(BackendError::InvalidRequest(format!(
                "frame raster {:?} does not match the scene raster {:?}",
                frame.dims(),
                m.dims()
            )));
        }
        Ok(m)
    }

    pub fn segment(&self, req: &SegmentRequest<'_>) -> Result<Mask, BackendError> {
        let target = self.target_mask_on(req.frame)?;
        let hit = match &req.prompt {
            Prompt::Box(b) => target.set_pixels().any(|p| b.contains(p.center())),
            Prompt::Point(p) => target.contains_point(*p),
            Prompt::Points(ps) => ps.iter().any(|p| target.contains_point(*p)),
        };
        if !hit {
            return Ok(Mask::new(req.frame.width(), req.frame.height()));
        }
        Ok(target
            .eroded(self.noise.erosion_radius)
            .dilated(self.noise.dilation_radius))
    }

    fn request_rng(&self, req: &TrackRequest<'_>) -> ChaCha8Rng {
        // one stream per (seed, chunk start, chunk length, point count)
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise.seed);
        let key = (req.frames[0].index() as u64) << 32
            ^ (req.frames.len() as u64) << 16
            ^ req.query_points.len() as u64;
        rng.set_stream(key);
        rng
    }

    pub fn track(&self, req: &TrackRequest<'_>) -> Result<Trajectory, BackendError> {
        req.validate()?;
        let first = &req.frames[0];
        let t0 = self.frame_index(first)?;
        let target = &self.truth.target;
        let to_source = |f: &Frame, p: Point| f.crop().map_or(p, |t| t.map_out(p));
        let from_source = |f: &Frame, p: Point| f.crop().map_or(p, |t| t.map_in(p));

        let starts: Vec<(Point, bool)> = req
            .query_points
            .points
            .iter()
            .map(|&q| {
                let s = to_source(first, q);
                (s, target.masks[t0].contains_point(s))
            })
            .collect();

        let mut rng = self.request_rng(req);
        let jitter = Normal::new(0.0, self.noise.jitter_sigma.max(0.0))
            .map_err(|e| BackendError::InvalidRequest(format!("jitter: {e}")))?;
        let mut positions = Vec::with_capacity(req.frames.len());
        let mut visible = Vec::with_capacity(req.frames.len());
        positions.push(req.query_points.points.clone());
        visible.push(vec![true; starts.len()]);
        for frame in &req.frames[1..] {
            let t = self.frame_index(frame)?;
            let c0 = target.center(t0);
            let ct = target.center(t);
            let (dx, dy) = (ct.x - c0.x, ct.y - c0.y);
            let mut row = Vec::with_capacity(starts.len());
            let mut vis = Vec::with_capacity(starts.len());
            for &(s, on_target) in &starts {
                let mut p = if on_target { Point::new(s.x + dx, s.y + dy) } else { s };
                if self.noise.jitter_sigma > 0.0 {
                    p.x += jitter.sample(&mut rng);
                    p.y += jitter.sample(&mut rng);
                }
                let p = from_source(frame, p).clamped(frame.width(), frame.height());
                row.push(p);
                vis.push(!(self.noise.dropout > 0.0 && rng.random_bool(self.noise.dropout.min(1.0))));
            }
            positions.push(row);
            visible.push(vis);
        }
        Ok(Trajectory { positions, visible })
    }
}

impl Segmenter for OracleBackend {
    fn segment(&mut self, req: &SegmentRequest<'_>) -> Result<Mask, BackendError> {
        OracleBackend::segment(self, req)
    }
}

impl PointTracker for OracleBackend {
    fn track(&mut self, req: &TrackRequest<'_>) -> Result<Trajectory, BackendError> {
        OracleBackend::track(self, req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use crate::crop::crop_resample;
    use crate::geometry::BoundingBox;
    use crate::sampling::PointSet;
    use crate::simulator::{generate, BackgroundSpec, MotionSpec, ObjectSpec, Scene, SceneConfig, Shape};

    fn scene(velocity: [f64; 2]) -> Scene {
        generate(&SceneConfig {
            name: "oracle".into(),
            width: 80,
            height: 60,
            frame_count: 8,
            object: ObjectSpec {
                shape: Shape::Rectangle,
                width: 6.0,
                height: 5.0,
                contrast: 60.0,
            },
            motion: MotionSpec {
                start: [20.0, 20.0],
                velocity,
                sway_amplitude: 0.0,
                sway_period: 0.0,
            },
            background: BackgroundSpec::default(),
            distractors: 0,
            seed: 1,
        })
        .unwrap()
    }

    fn oracle(s: &Scene, noise: OracleNoise) -> OracleBackend {
        OracleBackend::new(Arc::new(s.truth.clone()), noise)
    }

    #[test]
    fn box_prompt_returns_exact_mask() {
        let s = scene([2.0, 1.0]);
        let o = oracle(&s, OracleNoise::default());
        let f = &s.video.frames[3];
        let b = s.truth.target.boxes[3].scaled_about_center(1.5).unwrap();
        let m = o.segment(&SegmentRequest { frame: f, prompt: Prompt::Box(b) }).unwrap();
        assert_eq!(m, s.truth.target.masks[3]);
    }

    #[test]
    fn point_prompt_on_background_is_empty() {
        let s = scene([2.0, 1.0]);
        let o = oracle(&s, OracleNoise::default());
        let f = &s.video.frames[0];
        let m = o
            .segment(&SegmentRequest { frame: f, prompt: Prompt::Point(Point::new(2.0, 2.0)) })
            .unwrap();
        assert!(m.is_blank());
        assert_eq!(m.dims(), f.dims());
        let on = o
            .segment(&SegmentRequest { frame: f, prompt: Prompt::Point(Point::new(22.5, 21.5)) })
            .unwrap();
        assert_eq!(on, s.truth.target.masks[0]);
    }

    /// Erosion written as "every pixel within Chebyshev distance r is set".
    fn brute_erode(m: &Mask, r: isize) -> Mask {
        Mask::from_fn(m.width(), m.height(), |c, row| {
            (-r..=r).all(|dy| {
                (-r..=r).all(|dx| {
                    let (x, y) = (c as isize + dx, row as isize + dy);
                    x >= 0 && y >= 0 && (x as usize) < m.width() && (y as usize) < m.height()
                        && m.get(x as usize, y as usize)
                })
            })
        })
    }

    #[test]
    fn erosion_noise() {
        let s = scene([0.0, 0.0]);
        let o = oracle(&s, OracleNoise { erosion_radius: 1, ..Default::default() });
        let f = &s.video.frames[0];
        let m = o
            .segment(&SegmentRequest { frame: f, prompt: Prompt::Box(s.truth.target.boxes[0]) })
            .unwrap();
        assert_eq!(m, brute_erode(&s.truth.target.masks[0], 1));
        assert_eq!(m.area(), 4 * 3);
    }

    #[test]
    fn segmentation_in_crop_space_maps_back_exactly() {
        let s = scene([1.0, 1.0]);
        let o = oracle(&s, OracleNoise::default());
        let f = &s.video.frames[2];
        let gt_box = s.truth.target.boxes[2];
        let (sub, t) = crop_resample(f, &gt_box, &PipelineConfig::default()).unwrap();
        let m = o
            .segment(&SegmentRequest { frame: &sub, prompt: Prompt::Box(t.map_box_in(&gt_box)) })
            .unwrap();
        assert_eq!(m.dims(), sub.dims());
        assert_eq!(t.mask_to_source(&m, 80, 60), s.truth.target.masks[2]);
    }

    #[test]
    fn translation_is_replayed() {
        let s = scene([2.0, 1.0]);
        let o = oracle(&s, OracleNoise::default());
        let q = PointSet::new(0, vec![Point::new(21.5, 20.5), Point::new(25.5, 23.5)]);
        let traj = o.track(&TrackRequest { frames: &s.video.frames[0..5], query_points: &q }).unwrap();
        for (i, row) in traj.positions.iter().enumerate() {
            for (p, q) in row.iter().zip(&q.points) {
                assert_eq!(*p, Point::new(q.x + 2.0 * i as f64, q.y + i as f64));
            }
        }
        assert!(traj.visible.iter().flatten().all(|&v| v));
    }

    #[test]
    fn background_points_stay_put() {
        let s = scene([2.0, 1.0]);
        let o = oracle(&s, OracleNoise::default());
        let q = PointSet::new(0, vec![Point::new(5.0, 5.0)]);
        let traj = o.track(&TrackRequest { frames: &s.video.frames[0..4], query_points: &q }).unwrap();
        assert!(traj.positions.iter().all(|r| r[0] == Point::new(5.0, 5.0)));
    }

    #[test]
    fn jitter_is_seeded() {
        let s = scene([2.0, 1.0]);
        let noise = OracleNoise { jitter_sigma: 1.0, seed: 5, ..Default::default() };
        let o = oracle(&s, noise.clone());
        let q = PointSet::new(0, vec![Point::new(21.5, 20.5); 6]);
        let req = TrackRequest { frames: &s.video.frames[0..6], query_points: &q };
        let a = o.track(&req).unwrap();
        assert_eq!(a, o.track(&req).unwrap());
        assert_eq!(a.positions[0], q.points);

        // replay the reference generator: same seed, same stream key, same draw order
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        rng.set_stream(6 << 16 ^ 6);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for i in 1..6 {
            for p in &a.positions[i] {
                let ex = 21.5 + 2.0 * i as f64 + normal.sample(&mut rng);
                let ey = 20.5 + i as f64 + normal.sample(&mut rng);
                assert_eq!(*p, Point::new(ex, ey));
            }
        }
        let other = oracle(&s, OracleNoise { seed: 6, ..noise });
        assert_ne!(a, other.track(&req).unwrap());
    }

    #[test]
    fn full_dropout() {
        let s = scene([2.0, 1.0]);
        let o = oracle(&s, OracleNoise { dropout: 1.0, ..Default::default() });
        let q = PointSet::new(0, vec![Point::new(21.5, 20.5); 3]);
        let traj = o.track(&TrackRequest { frames: &s.video.frames[0..4], query_points: &q }).unwrap();
        assert!(traj.visible[0].iter().all(|&v| v));
        assert!(traj.visible[1..].iter().flatten().all(|&v| !v));
    }

    #[test]
    fn single_frame_track_rejected() {
        let s = scene([2.0, 1.0]);
        let o = oracle(&s, OracleNoise::default());
        let q = PointSet::new(0, vec![Point::new(21.5, 20.5)]);
        let err = o.track(&TrackRequest { frames: &s.video.frames[0..1], query_points: &q });
        assert!(matches!(err, Err(BackendError::InvalidRequest(_))));
    }

    #[test]
    fn never_leaks_outside_target() {
        let s = scene([1.0, 2.0]);
        let o = oracle(&s, OracleNoise::default());
        for (t, f) in s.video.frames.iter().enumerate() {
            for prompt in [
                Prompt::Box(BoundingBox::new(0.0, 0.0, 80.0, 60.0).unwrap()),
                Prompt::Point(s.truth.target.boxes[t].center()),
                Prompt::Points(vec![Point::new(1.0, 1.0), s.truth.target.boxes[t].center()]),
            ] {
                let m = o.segment(&SegmentRequest { frame: f, prompt }).unwrap();
                assert!(m.set_pixels().all(|p| s.truth.target.masks[t].contains_pixel(p)));
            }
        }
    }
}

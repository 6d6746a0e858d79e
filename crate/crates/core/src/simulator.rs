//! Synthetic satellite-like scenes: small bright objects moving over a textured, noisy
//! background, with exact per-frame ground truth.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, Point};
use crate::raster::{bbox_from_mask, Frame, Mask, VideoSequence};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("scene {scene}: {reason}")]
    Invalid { scene: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rectangle,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub width: f64,
    pub height: f64,
    /// Intensity added on top of the local background.
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    /// Top-left corner at frame 0.
    pub start: [f64; 2],
    /// Pixels per frame.
    pub velocity: [f64; 2],
    /// Sinusoidal offset perpendicular to the velocity.
    #[serde(default)]
    pub sway_amplitude: f64,
    #[serde(default)]
    pub sway_period: f64,
}

impl MotionSpec {
    /// Analytic top-left corner at frame `t`.
    pub fn origin_at(&self, t: usize) -> Point {
        let t = t as f64;
        let [vx, vy] = self.velocity;
        let mut x = self.start[0] + vx * t;
        let mut y = self.start[1] + vy * t;
        if self.sway_amplitude != 0.0 && self.sway_period > 0.0 {
            let speed = vx.hypot(vy);
            let (px, py) = if speed > 0.0 { (-vy / speed, vx / speed) } else { (1.0, 0.0) };
            let s = self.sway_amplitude * (std::f64::consts::TAU * t / self.sway_period).sin();
            x += px * s;
            y += py * s;
        }
        Point::new(x, y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub mean: f64,
    /// Standard deviation of per-frame pixel noise.
    pub noise_level: f64,
    /// Peak-to-peak amplitude of the static texture.
    pub texture_amplitude: f64,
    pub texture_seed: u64,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self {
            mean: 90.0,
            noise_level: 4.0,
            texture_amplitude: 30.0,
            texture_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub object: ObjectSpec,
    pub motion: MotionSpec,
    #[serde(default)]
    pub background: BackgroundSpec,
    #[serde(default)]
    pub distractors: usize,
    pub seed: u64,
}

/// Ground truth for one object over the whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrack {
    pub spec: ObjectSpec,
    pub origins: Vec<Point>,
    pub masks: Vec<Mask>,
    pub boxes: Vec<BoundingBox>,
}

impl ObjectTrack {
    /// Analytic center at frame `t`.
    pub fn center(&self, t: usize) -> Point {
        let o = self.origins[t];
        Point::new(o.x + self.spec.width / 2.0, o.y + self.spec.height / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub target: ObjectTrack,
    pub distractors: Vec<ObjectTrack>,
}

/// A generated scene: frames plus ground truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SceneConfig,
    pub video: VideoSequence,
    pub truth: GroundTruth,
}

impl Scene {
    pub fn init_box(&self) -> BoundingBox {
        self.truth.target.boxes[0]
    }
}

fn rasterize(spec: &ObjectSpec, origin: Point, width: usize, height: usize) -> Mask {
    match spec.shape {
        Shape::Rectangle => {
            let b = BoundingBox::new(origin.x, origin.y, spec.width, spec.height)
                .expect("object size validated");
            Mask::from_box(width, height, &b)
        }
        Shape::Ellipse => {
            let (rx, ry) = (spec.width / 2.0, spec.height / 2.0);
            let (cx, cy) = (origin.x + rx, origin.y + ry);
            Mask::from_fn(width, height, |col, row| {
                let p = Point::pixel_center(col, row);
                let (dx, dy) = ((p.x - cx) / rx, (p.y - cy) / ry);
                dx * dx + dy * dy < 1.0
            })
        }
    }
}

fn fits(spec: &ObjectSpec, origin: Point, width: usize, height: usize) -> bool {
    origin.x >= 0.0
        && origin.y >= 0.0
        && origin.x + spec.width <= width as f64
        && origin.y + spec.height <= height as f64
}

fn build_track(cfg: &SceneConfig, spec: &ObjectSpec, motion: &MotionSpec) -> ObjectTrack {
    let origins: Vec<Point> = (0..cfg.frame_count).map(|t| motion.origin_at(t)).collect();
    let masks: Vec<Mask> = origins
        .iter()
        .map(|&o| rasterize(spec, o, cfg.width, cfg.height))
        .collect();
    let boxes = masks
        .iter()
        .map(|m| bbox_from_mask(m).expect("in-frame object of size >= 2 covers a pixel"))
        .collect();
    ObjectTrack {
        spec: spec.clone(),
        origins,
        masks,
        boxes,
    }
}

/// Separation between two boxes along the more distant axis.
fn box_gap(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let gx = (b.x() - a.right()).max(a.x() - b.right());
    let gy = (b.y() - a.bottom()).max(a.y() - b.bottom());
    gx.max(gy)
}

const MIN_DISTRACTOR_GAP: f64 = 2.0;

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let fail = |reason: String| {
            Err(SceneError::Invalid {
                scene: self.name.clone(),
                reason,
            })
        };
        if self.width == 0 || self.height == 0 || self.frame_count == 0 {
            return fail("width, height and frame_count must be positive".into());
        }
        let o = &self.object;
        if !(o.width >= 2.0 && o.height >= 2.0) {
            return fail(format!("object {}x{} is smaller than 2x2", o.width, o.height));
        }
        for t in 0..self.frame_count {
            let origin = self.motion.origin_at(t);
            if !fits(o, origin, self.width, self.height) {
                return fail(format!(
                    "trajectory leaves the {}x{} frame at frame {t} (top-left {:.2},{:.2})",
                    self.width, self.height, origin.x, origin.y
                ));
            }
        }
        Ok(())
    }
}

fn sample_distractor(
    cfg: &SceneConfig,
    target: &ObjectTrack,
    rng: &mut ChaCha8Rng,
) -> Option<(ObjectSpec, MotionSpec)> {
    let spec = cfg.object.clone();
    let speed = cfg.motion.velocity[0].hypot(cfg.motion.velocity[1]);
    for _ in 0..2000 {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let velocity = [
            (speed * angle.cos()).round(),
            (speed * angle.sin()).round(),
        ];
        let start = [
            rng.random_range(0..cfg.width.saturating_sub(spec.width as usize).max(1)) as f64,
            rng.random_range(0..cfg.height.saturating_sub(spec.height as usize).max(1)) as f64,
        ];
        let motion = MotionSpec {
            start,
            velocity,
            sway_amplitude: 0.0,
            sway_period: 0.0,
        };
        let ok = (0..cfg.frame_count).all(|t| {
            let o = motion.origin_at(t);
            if !fits(&spec, o, cfg.width, cfg.height) {
                return false;
            }
            let b = BoundingBox::new(o.x, o.y, spec.width, spec.height).expect("validated size");
            box_gap(&b, &target.boxes[t]) >= MIN_DISTRACTOR_GAP
        });
        if ok {
            return Some((spec, motion));
        }
    }
    None
}

/// Smooth static texture: random lattice values every `CELL` pixels, bilinearly interpolated.
fn texture(cfg: &SceneConfig) -> Vec<f64> {
    const CELL: usize = 8;
    let bg = &cfg.background;
    let gw = cfg.width / CELL + 2;
    let gh = cfg.height / CELL + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(bg.texture_seed);
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut out = Vec::with_capacity(cfg.width * cfg.height);
    for row in 0..cfg.height {
        let gy = row as f64 / CELL as f64;
        let (r0, fy) = (gy.floor() as usize, gy.fract());
        for col in 0..cfg.width {
            let gx = col as f64 / CELL as f64;
            let (c0, fx) = (gx.floor() as usize, gx.fract());
            let at = |c: usize, r: usize| lattice[r * gw + c];
            let top = at(c0, r0) * (1.0 - fx) + at(c0 + 1, r0) * fx;
            let bottom = at(c0, r0 + 1) * (1.0 - fx) + at(c0 + 1, r0 + 1) * fx;
            out.push(bg.mean + bg.texture_amplitude * (top * (1.0 - fy) + bottom * fy));
        }
    }
    out
}

/// Renders a scene and its ground truth. Deterministic in the config.
pub fn generate(cfg: &SceneConfig) -> Result<Scene, SceneError> {
    cfg.validate()?;
    let target = build_track(cfg, &cfg.object, &cfg.motion);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut distractors = Vec::with_capacity(cfg.distractors);
    for k in 0..cfg.distractors {
        let (spec, motion) = sample_distractor(cfg, &target, &mut rng).ok_or_else(|| SceneError::Invalid {
            scene: cfg.name.clone(),
            reason: format!("could not place distractor {k} at least {MIN_DISTRACTOR_GAP} px from the target"),
        })?;
        distractors.push(build_track(cfg, &spec, &motion));
    }

    let base = texture(cfg);
    let noise_seed = rng.next_u64();
    let noise = Normal::new(0.0, cfg.background.noise_level.max(0.0)).map_err(|e| SceneError::Invalid {
        scene: cfg.name.clone(),
        reason: format!("noise level: {e}"),
    })?;
    let frames = (0..cfg.frame_count)
        .map(|t| {
            let mut frame_rng = ChaCha8Rng::seed_from_u64(noise_seed);
            frame_rng.set_stream(t as u64);
            let pixels = base
                .iter()
                .enumerate()
                .map(|(i, &b)| {
                    let (col, row) = (i % cfg.width, i / cfg.width);
                    let mut v = b + noise.sample(&mut frame_rng);
                    for obj in std::iter::once(&target).chain(&distractors) {
                        if obj.masks[t].get(col, row) {
                            v += obj.spec.contrast;
                        }
                    }
                    v.round().clamp(0.0, 255.0) as u8
                })
                .collect();
            Frame::gray(t, cfg.width, cfg.height, pixels).expect("buffer sized from config")
        })
        .collect();

    Ok(Scene {
        config: cfg.clone(),
        video: VideoSequence::new(cfg.name.clone(), frames),
        truth: GroundTruth {
            target,
            distractors,
        },
    })
}

/// Size/speed classes of the standard suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneClass {
    TinyFast,
    SmallMedium,
    MediumSlow,
    SmallDistractors,
}

impl SceneClass {
    pub const ALL: [SceneClass; 4] = [
        SceneClass::TinyFast,
        SceneClass::SmallMedium,
        SceneClass::MediumSlow,
        SceneClass::SmallDistractors,
    ];

    fn object(self) -> ObjectSpec {
        let (shape, width, height) = match self {
            SceneClass::TinyFast => (Shape::Rectangle, 4.0, 3.0),
            SceneClass::SmallMedium | SceneClass::SmallDistractors => (Shape::Rectangle, 8.0, 6.0),
            SceneClass::MediumSlow => (Shape::Ellipse, 16.0, 12.0),
        };
        ObjectSpec {
            shape,
            width,
            height,
            contrast: 70.0,
        }
    }

    fn speed(self) -> [f64; 2] {
        match self {
            SceneClass::TinyFast => [3.0, 2.0],
            SceneClass::SmallMedium | SceneClass::SmallDistractors => [2.0, 1.0],
            SceneClass::MediumSlow => [1.0, 1.0],
        }
    }

    fn distractors(self) -> usize {
        match self {
            SceneClass::SmallDistractors => 3,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SceneClass::TinyFast => "tiny_fast",
            SceneClass::SmallMedium => "small_medium",
            SceneClass::MediumSlow => "medium_slow",
            SceneClass::SmallDistractors => "small_distractors",
        }
    }
}

pub const SUITE_WIDTH: usize = 320;
pub const SUITE_HEIGHT: usize = 240;
pub const SUITE_FRAMES: usize = 60;
pub const SUITE_SCENES_PER_CLASS: usize = 5;

/// The fixed 20-scene acceptance suite: five scenes for each [`SceneClass`], 60 frames each.
///
/// Objects start on integer positions and move with integer velocities, so every frame's
/// ground truth is an exact translate of the first.
pub fn standard_suite(seed: u64) -> Vec<SceneConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(SceneClass::ALL.len() * SUITE_SCENES_PER_CLASS);
    for class in SceneClass::ALL {
        for k in 0..SUITE_SCENES_PER_CLASS {
            let object = class.object();
            let [sx, sy] = class.speed();
            let vx = if rng.random_bool(0.5) { sx } else { -sx };
            let vy = if rng.random_bool(0.5) { sy } else { -sy };
            let travel = (SUITE_FRAMES - 1) as f64;
            // keep a margin so the crop window and distractors have room
            let margin = 12.0;
            let span = |extent: usize, size: f64, v: f64| {
                let lo = margin + if v < 0.0 { -v * travel } else { 0.0 };
                let hi = extent as f64 - size - margin - if v > 0.0 { v * travel } else { 0.0 };
                (lo, hi)
            };
            let (x_lo, x_hi) = span(SUITE_WIDTH, object.width, vx);
            let (y_lo, y_hi) = span(SUITE_HEIGHT, object.height, vy);
            let start = [
                rng.random_range(x_lo as i64..=x_hi as i64) as f64,
                rng.random_range(y_lo as i64..=y_hi as i64) as f64,
            ];
            out.push(SceneConfig {
                name: format!("{}_{:02}", class.name(), k + 1),
                width: SUITE_WIDTH,
                height: SUITE_HEIGHT,
                frame_count: SUITE_FRAMES,
                object,
                motion: MotionSpec {
                    start,
                    velocity: [vx, vy],
                    sway_amplitude: 0.0,
                    sway_period: 0.0,
                },
                background: BackgroundSpec {
                    texture_seed: rng.next_u64(),
                    ..BackgroundSpec::default()
                },
                distractors: class.distractors(),
                seed: rng.next_u64(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(velocity: [f64; 2]) -> SceneConfig {
        SceneConfig {
            name: "t".into(),
            width: 64,
            height: 48,
            frame_count: 6,
            object: ObjectSpec {
                shape: Shape::Rectangle,
                width: 6.0,
                height: 4.0,
                contrast: 60.0,
            },
            motion: MotionSpec {
                start: [10.0, 10.0],
                velocity,
                sway_amplitude: 0.0,
                sway_period: 0.0,
            },
            background: BackgroundSpec::default(),
            distractors: 0,
            seed: 3,
        }
    }

    #[test]
    fn static_object_has_identical_masks() {
        let s = generate(&scene([0.0, 0.0])).unwrap();
        let m0 = &s.truth.target.masks[0];
        assert!(s.truth.target.masks.iter().all(|m| m == m0));
    }

    #[test]
    fn analytic_position() {
        let s = generate(&scene([2.0, 1.0])).unwrap();
        assert_eq!(s.truth.target.boxes[3].as_array(), [16.0, 13.0, 6.0, 4.0]);
    }

    #[test]
    fn deterministic() {
        let a = generate(&scene([2.0, 1.0])).unwrap();
        let b = generate(&scene([2.0, 1.0])).unwrap();
        assert_eq!(a.video, b.video);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn leaving_frame_rejected() {
        let err = generate(&scene([20.0, 0.0])).unwrap_err();
        assert!(err.to_string().contains("leaves"), "{err}");
    }

    #[test]
    fn tiny_object_rejected() {
        let mut cfg = scene([0.0, 0.0]);
        cfg.object.width = 1.0;
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn object_brighter_than_surroundings() {
        let mut cfg = scene([1.0, 0.0]);
        cfg.background.noise_level = 0.0;
        cfg.background.texture_amplitude = 0.0;
        let s = generate(&cfg).unwrap();
        let f = &s.video.frames[2];
        let m = &s.truth.target.masks[2];
        for row in 0..f.height() {
            for col in 0..f.width() {
                let want = if m.get(col, row) { 150 } else { 90 };
                assert_eq!(f.sample(col, row, 0), want);
            }
        }
    }

    #[test]
    fn suite_shape() {
        let suite = standard_suite(7);
        assert_eq!(suite.len(), 20);
        assert_eq!(suite, standard_suite(7));
        assert_ne!(suite, standard_suite(8));
        for class in SceneClass::ALL {
            assert_eq!(suite.iter().filter(|c| c.name.starts_with(class.name())).count(), 5);
        }
        for cfg in &suite {
            cfg.validate().unwrap();
            assert_eq!(cfg.frame_count, 60);
        }
        let tiny = &suite[0];
        assert!(tiny.object.width.min(tiny.object.height) < 32.0);
        assert_eq!(tiny.object.height, 3.0);
    }

    #[test]
    fn suite_scenes_generate_with_consistent_truth() {
        for cfg in standard_suite(7) {
            let s = generate(&cfg).unwrap();
            assert_eq!(s.video.len(), 60);
            assert_eq!(s.truth.distractors.len(), cfg.distractors);
            for obj in std::iter::once(&s.truth.target).chain(&s.truth.distractors) {
                for (m, b) in obj.masks.iter().zip(&obj.boxes) {
                    assert_eq!(bbox_from_mask(m).unwrap(), *b);
                }
            }
            for d in &s.truth.distractors {
                for t in 0..cfg.frame_count {
                    assert!(box_gap(&d.boxes[t], &s.truth.target.boxes[t]) >= 2.0);
                    assert!(!d.masks[t].intersects(&s.truth.target.masks[t]));
                }
            }
        }
    }

    fn centroid(m: &Mask) -> Point {
        let n = m.area() as f64;
        let (sx, sy) = m
            .set_pixels()
            .map(|p| p.center())
            .fold((0.0, 0.0), |(ax, ay), p| (ax + p.x, ay + p.y));
        Point::new(sx / n, sy / n)
    }

    #[test]
    fn centroid_within_half_pixel_per_axis() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..500 {
            let shape = if rng.random_bool(0.5) { Shape::Rectangle } else { Shape::Ellipse };
            let spec = ObjectSpec {
                shape,
                width: rng.random_range(2.0..20.0),
                height: rng.random_range(2.0..20.0),
                contrast: 50.0,
            };
            let origin = Point::new(rng.random_range(1.0..30.0), rng.random_range(1.0..30.0));
            let c = centroid(&rasterize(&spec, origin, 64, 64));
            let (ex, ey) = ((c.x - origin.x - spec.width / 2.0).abs(), (c.y - origin.y - spec.height / 2.0).abs());
            assert!(ex <= 0.5 + 1e-9 && ey <= 0.5 + 1e-9, "{spec:?} at {origin:?}: error ({ex}, {ey})");
        }
    }

    #[test]
    fn suite_centroids_within_bound() {
        for cfg in standard_suite(7).into_iter().step_by(3) {
            let s = generate(&cfg).unwrap();
            for t in 0..cfg.frame_count {
                let err = centroid(&s.truth.target.masks[t]).distance(&s.truth.target.center(t));
                assert!(err <= 0.6, "{} frame {t}: {err}", cfg.name);
            }
        }
    }
}

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// How keyframe inliers are selected from the per-point masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InlierRule {
    /// A point is an inlier when its mask covers the heatmap peak pixel.
    #[default]
    PeakPixel,
    /// A point is an inlier when its mask intersects the consensus region.
    Region,
}

/// How a box is emitted for frames between keyframes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalBox {
    /// Last keyframe box moved by the median displacement of the visible points.
    #[default]
    KeyframeShift,
    /// Tight box over the visible points, grown to at least 2 px.
    PointExtent,
}

/// Tracker settings. Defaults are K = 20, N = 20, A = 5 px, B = 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Frames between keyframes (K).
    pub keyframe_interval: usize,
    /// Points sampled per keyframe (N).
    pub num_points: usize,
    /// Center-error threshold in pixels for DPR (A).
    pub dpr_threshold: f64,
    /// IoU threshold for OSR (B).
    pub osr_threshold: f64,
    /// Objects whose smaller side is below this go through crop-and-resample.
    pub small_object_max_dim: f64,
    /// Crop window size relative to the object box.
    pub crop_context_factor: f64,
    /// Smaller object side after upsampling.
    pub target_min_dim_after_resample: f64,
    pub rng_seed: u64,
    pub inlier_rule: InlierRule,
    pub interval_box: IntervalBox,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            keyframe_interval: 20,
            num_points: 20,
            dpr_threshold: 5.0,
            osr_threshold: 0.5,
            small_object_max_dim: 32.0,
            crop_context_factor: 4.0,
            target_min_dim_after_resample: 32.0,
            rng_seed: 0,
            inlier_rule: InlierRule::PeakPixel,
            interval_box: IntervalBox::KeyframeShift,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.keyframe_interval < 1 {
            return fail("keyframe interval K must be >= 1".into());
        }
        if self.num_points < 1 {
            return fail("number of points N must be >= 1".into());
        }
        if !(self.dpr_threshold > 0.0) {
            return fail(format!("DPR threshold must be > 0, got {}", self.dpr_threshold));
        }
        if !(self.osr_threshold > 0.0 && self.osr_threshold < 1.0) {
            return fail(format!("OSR threshold must be in (0, 1), got {}", self.osr_threshold));
        }
        if !(self.crop_context_factor >= 1.0) {
            return fail(format!("crop context factor must be >= 1, got {}", self.crop_context_factor));
        }
        if !(self.target_min_dim_after_resample > 0.0 && self.small_object_max_dim >= 0.0) {
            return fail("crop dimensions must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!((cfg.keyframe_interval, cfg.num_points), (20, 20));
        assert_eq!((cfg.dpr_threshold, cfg.osr_threshold), (5.0, 0.5));
    }

    #[test]
    fn rejects_out_of_range() {
        for cfg in [
            PipelineConfig { keyframe_interval: 0, ..Default::default() },
            PipelineConfig { num_points: 0, ..Default::default() },
            PipelineConfig { dpr_threshold: 0.0, ..Default::default() },
            PipelineConfig { osr_threshold: 1.0, ..Default::default() },
            PipelineConfig { osr_threshold: 0.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"keyframe_interval": 10}"#).unwrap();
        assert_eq!(cfg.keyframe_interval, 10);
        assert_eq!(cfg.num_points, 20);
    }
}

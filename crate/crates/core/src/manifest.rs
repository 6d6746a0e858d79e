//! Run manifests: everything needed to replay a tracking run.
//!
//! Manifests hold no timestamps or durations so that identical runs produce identical
//! bytes; wall-clock timing goes to a separate [`RunTiming`] sidecar.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendSpec, Endpoint, OracleNoise};
use crate::config::PipelineConfig;
use crate::geometry::BoundingBox;
use crate::pipeline::{RefreshPath, RunReport};
use crate::simulator::{generate, Scene, SceneConfig, SceneError};

pub const TOOL_NAME: &str = "orbit-sot";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Serializable description of the backend a run used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendRecord {
    /// Ground truth comes from regenerating `scene`.
    Oracle { scene: SceneConfig, noise: OracleNoise },
    External { endpoint: Endpoint, session_dir: PathBuf },
}

impl BackendRecord {
    pub fn oracle(scene: &Scene, noise: &OracleNoise) -> Self {
        BackendRecord::Oracle {
            scene: scene.config.clone(),
            noise: noise.clone(),
        }
    }

    /// Rebuilds the backend. Oracle records regenerate their scene.
    pub fn to_spec(&self) -> Result<(BackendSpec, Option<Scene>), SceneError> {
        match self {
            BackendRecord::Oracle { scene, noise } => {
                let scene = generate(scene)?;
                let spec = BackendSpec::Oracle {
                    truth: Arc::new(scene.truth.clone()),
                    noise: noise.clone(),
                };
                Ok((spec, Some(scene)))
            }
            BackendRecord::External { endpoint, session_dir } => Ok((
                BackendSpec::External {
                    endpoint: endpoint.clone(),
                    session_dir: session_dir.clone(),
                },
                None,
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInputs {
    /// Frame directory, when frames were read from disk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
    /// Scene description file, when one was given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_file: Option<PathBuf>,
    pub init_box: Option<BoundingBox>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefreshSummary {
    pub total: usize,
    pub consensus: usize,
    pub box_prompt: usize,
    pub kept_points: usize,
}

impl RefreshSummary {
    pub fn from_report(report: &RunReport) -> Self {
        let count = |p: RefreshPath| report.refreshes.iter().filter(|r| r.path == p).count();
        Self {
            total: report.refreshes.len(),
            consensus: count(RefreshPath::Consensus),
            box_prompt: count(RefreshPath::BoxPrompt),
            kept_points: count(RefreshPath::KeptPoints),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Completed,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub sequence: String,
    pub config: PipelineConfig,
    pub seed: u64,
    pub backend: BackendRecord,
    pub inputs: RunInputs,
    pub frames: usize,
    /// Whether any segmentation ran on a crop-and-resampled window.
    pub crop_path: bool,
    pub init_crop_scale: f64,
    pub refreshes: RefreshSummary,
    pub outcome: RunOutcome,
}

impl RunManifest {
    pub fn new(
        sequence: &str,
        config: &PipelineConfig,
        backend: BackendRecord,
        inputs: RunInputs,
        frames: usize,
        report: &RunReport,
        outcome: RunOutcome,
    ) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            sequence: sequence.to_owned(),
            config: config.clone(),
            seed: config.rng_seed,
            backend,
            inputs,
            frames,
            crop_path: report.crop_path,
            init_crop_scale: report.init_crop_scale,
            refreshes: RefreshSummary::from_report(report),
            outcome,
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Wall-clock timing of a run, kept out of the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub sequence: String,
    pub wall_clock_seconds: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::standard_suite;

    #[test]
    fn round_trip_and_replay_spec() {
        let cfg = standard_suite(7).remove(0);
        let scene = generate(&cfg).unwrap();
        let m = RunManifest::new(
            "tiny_fast_01",
            &PipelineConfig::default(),
            BackendRecord::oracle(&scene, &OracleNoise::default()),
            RunInputs {
                init_box: Some(scene.init_box()),
                ..Default::default()
            },
            60,
            &RunReport::default(),
            RunOutcome::Completed,
        );
        let text = m.to_json();
        assert!(text.ends_with("}\n"));
        assert_eq!(RunManifest::from_json(&text).unwrap(), m);
        assert!(!text.contains("wall_clock"));
        let (_, regenerated) = m.backend.to_spec().unwrap();
        assert_eq!(regenerated.unwrap().video.frames, scene.video.frames);
    }
}

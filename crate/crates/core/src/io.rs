//! Frame directories: zero-padded, 1-based numbered PNGs (`000001.png`, `000002.png`, ...).

use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, ImageFormat};
use thiserror::Error;

use crate::evaluation::{gt_records, records_to_csv};
use crate::raster::{Frame, VideoSequence};
use crate::simulator::{Scene, SceneConfig};

pub const GT_FILE: &str = "gt.csv";
pub const SCENE_FILE: &str = "scene.json";

/// Tracklet id of the target in exported ground truth; distractors follow from 2.
pub const TARGET_ID: u32 = 1;

#[derive(Debug, Error)]
pub enum FrameIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("{0}: no numbered PNG frames found")]
    NoFrames(PathBuf),
    #[error("{dir}: frame {missing:06}.png is missing (found {found} frames)")]
    MissingFrame {
        dir: PathBuf,
        missing: usize,
        found: usize,
    },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

/// File name for the frame at zero-based `index`.
pub fn frame_file_name(index: usize) -> String {
    format!("{:06}.png", index + 1)
}

pub fn save_frame_png(frame: &Frame, path: &Path) -> Result<(), FrameIoError> {
    let color = if frame.channels() == 1 { ColorType::L8 } else { ColorType::Rgb8 };
    image::save_buffer_with_format(
        path,
        frame.pixels(),
        frame.width() as u32,
        frame.height() as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|source| FrameIoError::Image {
        path: path.to_owned(),
        source,
    })
}

/// Loads a PNG as a gray or RGB frame; alpha is dropped.
pub fn load_frame_png(path: &Path, index: usize) -> Result<Frame, FrameIoError> {
    let img = image::open(path).map_err(|source| FrameIoError::Image {
        path: path.to_owned(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(img, DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_));
    let result = if gray {
        Frame::new(index, w, h, 1, img.into_luma8().into_raw())
    } else {
        Frame::new(index, w, h, 3, img.into_rgb8().into_raw())
    };
    result.map_err(|e| FrameIoError::Invalid {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

/// Loads `000001.png ..` from `dir`. Frames must be contiguous from 1.
pub fn load_frames_dir(dir: &Path) -> Result<VideoSequence, FrameIoError> {
    let entries = std::fs::read_dir(dir).map_err(|source| FrameIoError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let mut numbers = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| FrameIoError::Io {
            path: dir.to_owned(),
            source,
        })?;
        let name = entry.file_name();
        let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".png")) else {
            continue;
        };
        if let Ok(n) = stem.parse::<usize>() {
            numbers.push((n, entry.path()));
        }
    }
    if numbers.is_empty() {
        return Err(FrameIoError::NoFrames(dir.to_owned()));
    }
    numbers.sort();
    let found = numbers.len();
    let mut frames = Vec::with_capacity(found);
    for (i, (n, path)) in numbers.into_iter().enumerate() {
        if n != i + 1 {
            return Err(FrameIoError::MissingFrame {
                dir: dir.to_owned(),
                missing: i + 1,
                found,
            });
        }
        frames.push(load_frame_png(&path, i)?);
    }
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(VideoSequence::new(id, frames))
}

pub fn save_frames_dir(video: &VideoSequence, dir: &Path) -> Result<(), FrameIoError> {
    std::fs::create_dir_all(dir).map_err(|source| FrameIoError::Io {
        path: dir.to_owned(),
        source,
    })?;
    for f in &video.frames {
        save_frame_png(f, &dir.join(frame_file_name(f.index())))?;
    }
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FrameIoError + '_ {
    move |source| FrameIoError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Ground truth of a scene in annotation CSV form.
pub fn scene_gt_csv(scene: &Scene) -> String {
    let mut records = gt_records(&scene.truth.target.boxes, TARGET_ID);
    for (k, d) in scene.truth.distractors.iter().enumerate() {
        records.extend(gt_records(&d.boxes, TARGET_ID + 1 + k as u32));
    }
    records_to_csv(&records)
}

/// Writes numbered frames, `gt.csv` and `scene.json` into `dir`.
pub fn export_scene(scene: &Scene, dir: &Path) -> Result<(), FrameIoError> {
    save_frames_dir(&scene.video, dir)?;
    let gt = dir.join(GT_FILE);
    std::fs::write(&gt, scene_gt_csv(scene)).map_err(io_err(&gt))?;
    let sc = dir.join(SCENE_FILE);
    let mut json = serde_json::to_string_pretty(&scene.config).expect("scene config serializes");
    json.push('\n');
    std::fs::write(&sc, json).map_err(io_err(&sc))
}

pub fn load_scene_config(path: &Path) -> Result<SceneConfig, FrameIoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| FrameIoError::Invalid {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frames = (0..3)
            .map(|i| Frame::gray(i, 5, 4, (0..20).map(|v| (v * 10 + i) as u8).collect()).unwrap())
            .collect();
        let video = VideoSequence::new("v", frames);
        save_frames_dir(&video, dir.path()).unwrap();
        assert!(dir.path().join("000001.png").exists());
        let back = load_frames_dir(dir.path()).unwrap();
        assert_eq!(back.frames, video.frames);

        let rgb = Frame::new(0, 2, 2, 3, (0..12).collect()).unwrap();
        let p = dir.path().join("rgb.png");
        save_frame_png(&rgb, &p).unwrap();
        assert_eq!(load_frame_png(&p, 0).unwrap(), rgb);
    }

    #[test]
    fn gap_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let f = Frame::gray(0, 2, 2, vec![0; 4]).unwrap();
        save_frame_png(&f, &dir.path().join("000001.png")).unwrap();
        save_frame_png(&f, &dir.path().join("000003.png")).unwrap();
        let err = load_frames_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains("000002.png is missing"), "{err}");
    }

    #[test]
    fn empty_dir_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_frames_dir(dir.path()), Err(FrameIoError::NoFrames(_))));
    }

    #[test]
    fn scene_export_layout() {
        use crate::evaluation::load_annotations;
        use crate::simulator::{generate, standard_suite};
        let dir = tempfile::tempdir().unwrap();
        let cfg = standard_suite(3).into_iter().find(|c| c.distractors > 0).unwrap();
        let scene = generate(&cfg).unwrap();
        let out = dir.path().join(&cfg.name);
        export_scene(&scene, &out).unwrap();
        let video = load_frames_dir(&out).unwrap();
        assert_eq!(video.id, cfg.name);
        assert_eq!(video.frames, scene.video.frames);
        let gt = load_annotations(&out.join(GT_FILE)).unwrap();
        assert_eq!(gt.len(), 1 + cfg.distractors);
        assert!(gt.values().all(|r| r.len() == cfg.frame_count));
        assert_eq!(gt[&TARGET_ID][0].bbox, scene.init_box());
        assert_eq!(load_scene_config(&out.join(SCENE_FILE)).unwrap(), cfg);
    }
}

//! Detector training-set construction: keyframe labels propagated by
//! correlation tracking, near-duplicate removal, augmentation, background
//! negatives, dataset export, and a template-matching baseline detector.

pub mod augment;
pub mod dataset;
pub mod dedupe;
pub mod detector;
pub mod ncc;
pub mod negatives;
pub mod project;

pub use augment::{augment, AugmentOp, Sample};
pub use dataset::{export_dataset, import_dataset, Dataset, ExportOptions};
pub use dedupe::dedupe_frames;
pub use detector::{train_baseline, Detector, PluginDetector, TemplateDetectorModel};
pub use negatives::{mine_negatives, NegativeCrops};
pub use project::{propagate_labels, LabelProject, PropagationParams};

use thiserror::Error;

use crate::geometry::BoundingBox;

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("label {0:?} is not in the project's class list")]
    UnknownClass(String),
    #[error("invalid box: {0}")]
    InvalidBox(#[from] crate::geometry::BoxError),
    #[error("box without a label")]
    Unlabeled,
    #[error("frame {frame} is outside the video ({frame_count} frames)")]
    FrameOutOfRange { frame: u32, frame_count: u32 },
    #[error("frame {0} is not a keyframe")]
    NotKeyframe(u32),
    #[error("until_frame {until} must come after keyframe {from}")]
    BadRange { from: u32, until: u32 },
    #[error("no pixels available for frame {0}")]
    MissingFrame(u32),
    #[error("box {0:?} does not fit the {1}x{2} image")]
    OutOfImage(BoundingBox, u32, u32),
    #[error("unsupported augmentation op {0:?}")]
    UnsupportedOp(String),
    #[error("crop size {crop_w}x{crop_h} exceeds image size {width}x{height}")]
    CropTooLarge {
        crop_w: u32,
        crop_h: u32,
        width: u32,
        height: u32,
    },
    #[error("class {0:?} has no labeled boxes")]
    EmptyClass(String),
    #[error("dataset is malformed: {0}")]
    Malformed(String),
    #[error("detector plugin failed: {0}")]
    Plugin(String),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

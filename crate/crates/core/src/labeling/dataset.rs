//! Dataset directory layout:
//!
//! ```text
//! <out>/manifest.json      classes, split, counts, file names
//! <out>/annotations.json   one record per image: image_ref, boxes
//! <out>/negatives.json     one record per background crop
//! <out>/images/frame_NNNNNN.png
//! <out>/negatives/neg_NNNNNN.png
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dedupe::dedupe_frames;
use super::negatives::mine_negatives;
use super::project::LabelProject;
use super::LabelingError;
use crate::frames::{FrameDir, FrameSource};
use crate::geometry::BoundingBox;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_ref: String,
    pub frame_index: u32,
    /// `keyframe` for manual labels, `propagated` for tracked ones.
    pub provenance: String,
    pub boxes: Vec<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeRecord {
    pub image_ref: String,
    pub source_ref: String,
    #[serde(rename = "box")]
    pub region: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train_fraction: f64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub video_ref: String,
    pub classes: Vec<String>,
    pub image_count: usize,
    pub negative_count: usize,
    pub annotations: String,
    pub negatives: String,
    pub split: Split,
}

/// In-memory view of an exported dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub images: Vec<AnnotationRecord>,
    pub negatives: Vec<NegativeRecord>,
    pub split: Split,
}

impl Dataset {
    pub fn validate(&self) -> Result<(), LabelingError> {
        for rec in &self.images {
            for b in &rec.boxes {
                let label = b.label.as_ref().ok_or(LabelingError::Unlabeled)?;
                if !self.classes.contains(label) {
                    return Err(LabelingError::UnknownClass(label.clone()));
                }
            }
        }
        for n in &self.negatives {
            let Some(src) = self.images.iter().find(|r| r.image_ref == n.source_ref) else {
                continue;
            };
            if src.boxes.iter().any(|b| b.overlaps(&n.region)) {
                return Err(LabelingError::Malformed(format!(
                    "negative {} overlaps a positive box",
                    n.image_ref
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportOptions {
    /// Drop near-duplicate labeled frames first, at this threshold.
    pub dedupe_threshold: Option<f64>,
    pub negatives_per_image: usize,
    pub negative_size: (u32, u32),
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            dedupe_threshold: None,
            negatives_per_image: 2,
            negative_size: (32, 32),
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Writes the labeled frames of `project` as a dataset directory.
pub fn export_dataset(
    project: &LabelProject,
    frames: &dyn FrameSource,
    out_dir: &Path,
    options: &ExportOptions,
) -> Result<Dataset, LabelingError> {
    let labeled = project.labeled_frames();
    for class in &project.classes {
        let has = labeled
            .values()
            .any(|(_, boxes)| boxes.iter().any(|b| b.label.as_ref() == Some(class)));
        if !has {
            return Err(LabelingError::EmptyClass(class.clone()));
        }
    }

    let mut entries = Vec::new();
    for (frame, (provenance, boxes)) in &labeled {
        let img = frames.frame(*frame).ok_or(LabelingError::MissingFrame(*frame))?;
        entries.push((*frame, *provenance, (*boxes).clone(), img));
    }
    if let Some(threshold) = options.dedupe_threshold {
        let images: Vec<_> = entries.iter().map(|e| e.3.clone()).collect();
        let kept: BTreeSet<usize> = dedupe_frames(&images, threshold).into_iter().collect();
        entries = entries
            .into_iter()
            .enumerate()
            .filter(|(i, _)| kept.contains(i))
            .map(|(_, e)| e)
            .collect();
    }

    fs::create_dir_all(out_dir.join("images"))?;
    fs::create_dir_all(out_dir.join("negatives"))?;
    let mut records = Vec::new();
    let mut negatives = Vec::new();
    for (frame, provenance, boxes, img) in &entries {
        let image_ref = format!("images/{}", FrameDir::file_name(*frame));
        img.save(out_dir.join(&image_ref))?;
        if options.negatives_per_image > 0 {
            let (cw, ch) = options.negative_size;
            if cw <= img.width() && ch <= img.height() {
                let mined = mine_negatives(
                    img,
                    boxes,
                    options.negatives_per_image,
                    options.negative_size,
                    options.seed ^ u64::from(*frame),
                )?;
                for (region, crop) in mined.boxes.into_iter().zip(mined.crops) {
                    let neg_ref = format!("negatives/neg_{:06}.png", negatives.len());
                    crop.save(out_dir.join(&neg_ref))?;
                    negatives.push(NegativeRecord {
                        image_ref: neg_ref,
                        source_ref: image_ref.clone(),
                        region,
                    });
                }
            }
        }
        records.push(AnnotationRecord {
            image_ref,
            frame_index: *frame,
            provenance: provenance.to_string(),
            boxes: boxes.iter().map(|b| BoundingBox { feature: None, ..b.clone() }).collect(),
        });
    }

    let mut refs: Vec<String> = records.iter().map(|r| r.image_ref.clone()).collect();
    refs.shuffle(&mut ChaCha8Rng::seed_from_u64(options.seed));
    let n_train = ((refs.len() as f64) * options.train_fraction).round() as usize;
    let validation = refs.split_off(n_train.min(refs.len()));
    let split = Split {
        train_fraction: options.train_fraction,
        train: refs,
        validation,
    };

    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION,
        video_ref: project.video_ref.clone(),
        classes: project.classes.clone(),
        image_count: records.len(),
        negative_count: negatives.len(),
        annotations: "annotations.json".into(),
        negatives: "negatives.json".into(),
        split: split.clone(),
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    fs::write(out_dir.join("annotations.json"), serde_json::to_vec_pretty(&records)?)?;
    fs::write(out_dir.join("negatives.json"), serde_json::to_vec_pretty(&negatives)?)?;

    let dataset = Dataset {
        classes: project.classes.clone(),
        images: records,
        negatives,
        split,
    };
    dataset.validate()?;
    Ok(dataset)
}

pub fn import_dataset(dir: &Path) -> Result<Dataset, LabelingError> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(LabelingError::Malformed(format!(
            "unsupported dataset format_version {}",
            manifest.format_version
        )));
    }
    let images: Vec<AnnotationRecord> = serde_json::from_slice(&fs::read(dir.join(&manifest.annotations))?)?;
    let negatives: Vec<NegativeRecord> = serde_json::from_slice(&fs::read(dir.join(&manifest.negatives))?)?;
    if images.len() != manifest.image_count {
        return Err(LabelingError::Malformed("image_count does not match annotations".into()));
    }
    let dataset = Dataset {
        classes: manifest.classes,
        images,
        negatives,
        split: manifest.split,
    };
    dataset.validate()?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::two_class_video;
    use crate::frames::MemoryFrames;

    fn project_with_labels(n: u32) -> (LabelProject, MemoryFrames) {
        let (frames, boxes) = two_class_video(n as usize, 5);
        let mut p = LabelProject::new("p", "two.mp4", n, &["red", "blue"]);
        for f in 0..n {
            p = p.relabel_keyframe(f, boxes[f as usize].clone()).unwrap();
        }
        (p, MemoryFrames::from_vec(frames))
    }

    #[test]
    fn export_counts_and_round_trip() {
        let (p, frames) = project_with_labels(10);
        let dir = tempfile::tempdir().unwrap();
        let ds = export_dataset(&p, &frames, dir.path(), &ExportOptions::default()).unwrap();
        assert_eq!(ds.images.len(), 10);
        assert_eq!(ds.classes, vec!["red", "blue"]);
        assert_eq!(ds.split.train.len() + ds.split.validation.len(), 10);
        assert!(dir.path().join("images/frame_000003.png").exists());
        let back = import_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        for (rec, f) in back.images.iter().zip(0u32..) {
            assert_eq!(rec.boxes, p.keyframes[&f]);
        }
    }

    #[test]
    fn dedupe_before_export() {
        let (p, frames) = project_with_labels(10);
        let mut all: Vec<_> = (0..10).map(|i| frames.frame(i).unwrap()).collect();
        let kept = dedupe_frames(&all, 0.02);
        all.clear();
        let dir = tempfile::tempdir().unwrap();
        let opts = ExportOptions {
            dedupe_threshold: Some(0.02),
            ..Default::default()
        };
        let ds = export_dataset(&p, &frames, dir.path(), &opts).unwrap();
        assert_eq!(ds.images.len(), kept.len());
        assert!(ds.images.len() < 10);
    }

    #[test]
    fn empty_class_refused() {
        let (frames, boxes) = two_class_video(3, 5);
        let mut p = LabelProject::new("p", "v", 3, &["red", "blue", "green"]);
        p = p.relabel_keyframe(0, boxes[0].clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = export_dataset(&p, &MemoryFrames::from_vec(frames), dir.path(), &ExportOptions::default());
        assert!(matches!(err, Err(LabelingError::EmptyClass(c)) if c == "green"));
    }

    #[test]
    fn negatives_avoid_positives() {
        let (p, frames) = project_with_labels(4);
        let dir = tempfile::tempdir().unwrap();
        let ds = export_dataset(&p, &frames, dir.path(), &ExportOptions::default()).unwrap();
        assert!(!ds.negatives.is_empty());
        for n in &ds.negatives {
            let src = ds.images.iter().find(|r| r.image_ref == n.source_ref).unwrap();
            assert!(src.boxes.iter().all(|b| b.intersection_area(&n.region) == 0));
        }
    }
}

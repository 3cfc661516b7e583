//! Detector interface, the template-matching baseline, and the stdio plugin
//! protocol for out-of-process detectors.
//!
//! Plugin protocol: one JSON object per line in each direction. The host
//! writes `{"op":"detect","image_ref":"<path>"}` and the plugin answers
//! `{"boxes":[...]}` or `{"boxes":[],"error":"..."}`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use base64::Engine;
use image::{DynamicImage, GrayImage};
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::ncc::{GrayF, Template};
use super::LabelingError;
use crate::geometry::BoundingBox;

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const NMS_IOU: f64 = 0.5;
pub const MAX_TEMPLATES_PER_CLASS: usize = 8;

/// Anything that finds labeled boxes in an image. Implementations must be
/// safe to call from several threads once constructed.
pub trait Detector: Send + Sync {
    fn detect(&self, image: &DynamicImage) -> Result<Vec<BoundingBox>, LabelingError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplatePatch {
    pub width: u32,
    pub height: u32,
    /// Base64 of the row-major 8-bit grayscale pixels.
    pub pixels: String,
}

impl TemplatePatch {
    fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            pixels: base64::engine::general_purpose::STANDARD.encode(img.as_raw()),
        }
    }

    fn to_gray(&self) -> Result<GrayImage, LabelingError> {
        let raw = base64::engine::general_purpose::STANDARD
            .decode(&self.pixels)
            .map_err(|e| LabelingError::Malformed(e.to_string()))?;
        GrayImage::from_raw(self.width, self.height, raw)
            .ok_or_else(|| LabelingError::Malformed("template size mismatch".into()))
    }
}

/// Per-class template gallery with a correlation threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateDetectorModel {
    pub format_version: u32,
    pub threshold: f64,
    pub classes: BTreeMap<String, Vec<TemplatePatch>>,
    #[serde(skip)]
    compiled: Vec<(String, Template)>,
}

impl TemplateDetectorModel {
    pub fn new(threshold: f64, classes: BTreeMap<String, Vec<TemplatePatch>>) -> Result<Self, LabelingError> {
        let mut model = Self {
            format_version: MODEL_FORMAT_VERSION,
            threshold,
            classes,
            compiled: Vec::new(),
        };
        model.prepare()?;
        Ok(model)
    }

    fn prepare(&mut self) -> Result<(), LabelingError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(LabelingError::Malformed(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        let mut compiled = Vec::new();
        for (class, patches) in &self.classes {
            if patches.is_empty() {
                return Err(LabelingError::EmptyClass(class.clone()));
            }
            for p in patches {
                compiled.push((class.clone(), Template::from_gray(&p.to_gray()?)));
            }
        }
        self.compiled = compiled;
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, LabelingError> {
        let mut model: Self = serde_json::from_slice(bytes)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(LabelingError::Malformed(format!(
                "unsupported model format_version {}",
                model.format_version
            )));
        }
        model.prepare()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, LabelingError> {
        Self::from_json(&fs::read(path)?)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("model serializes")
    }
}

/// Greedy non-maximum suppression, highest score first.
pub fn non_max_suppression(mut boxes: Vec<BoundingBox>, iou: f64) -> Vec<BoundingBox> {
    boxes.sort_by(|a, b| {
        b.score
            .unwrap_or(0.0)
            .total_cmp(&a.score.unwrap_or(0.0))
            .then(a.y_min.cmp(&b.y_min))
            .then(a.x_min.cmp(&b.x_min))
    });
    let mut kept: Vec<BoundingBox> = Vec::new();
    for b in boxes {
        if kept.iter().all(|k| k.iou(&b) < iou) {
            kept.push(b);
        }
    }
    kept
}

impl Detector for TemplateDetectorModel {
    /// Slides every template over the image; local correlation maxima at or
    /// above the threshold become candidates, then NMS at IoU 0.5.
    fn detect(&self, image: &DynamicImage) -> Result<Vec<BoundingBox>, LabelingError> {
        let img = GrayF::from_image(image);
        let mut candidates = Vec::new();
        for (class, t) in &self.compiled {
            let (cols, rows, map) = t.score_map(&img);
            let at = |x: i64, y: i64| -> f64 {
                if x < 0 || y < 0 || x >= cols as i64 || y >= rows as i64 {
                    f64::MIN
                } else {
                    map[(y * cols as i64 + x) as usize]
                }
            };
            for y in 0..rows as i64 {
                for x in 0..cols as i64 {
                    let s = at(x, y);
                    if s < self.threshold {
                        continue;
                    }
                    let is_peak = (-1..=1).all(|dy| (-1..=1).all(|dx| (dx, dy) == (0, 0) || at(x + dx, y + dy) <= s));
                    if is_peak {
                        candidates.push(
                            BoundingBox::new(x as i32, y as i32, x as i32 + t.width as i32, y as i32 + t.height as i32)
                                .with_label(class)
                                .with_score(s.clamp(0.0, 1.0)),
                        );
                    }
                }
            }
        }
        Ok(non_max_suppression(candidates, NMS_IOU))
    }
}

/// Builds a template gallery from the dataset's keyframe crops: one template
/// per distinct crop, at most [`MAX_TEMPLATES_PER_CLASS`] per class taken
/// evenly across the video. Classes without keyframe crops fall back to
/// propagated ones.
pub fn train_baseline(dataset: &Dataset, root: &Path, threshold: f64) -> Result<TemplateDetectorModel, LabelingError> {
    let mut by_class: BTreeMap<String, (Vec<GrayImage>, Vec<GrayImage>)> = dataset
        .classes
        .iter()
        .map(|c| (c.clone(), (Vec::new(), Vec::new())))
        .collect();
    for rec in &dataset.images {
        let img = image::open(root.join(&rec.image_ref))?.to_luma8();
        for b in &rec.boxes {
            let Some(label) = &b.label else { continue };
            if !b.fits_within(img.width(), img.height()) {
                return Err(LabelingError::OutOfImage(b.clone(), img.width(), img.height()));
            }
            let crop = image::imageops::crop_imm(&img, b.x_min as u32, b.y_min as u32, b.width() as u32, b.height() as u32)
                .to_image();
            let Some((manual, auto)) = by_class.get_mut(label) else {
                return Err(LabelingError::UnknownClass(label.clone()));
            };
            let bucket = if rec.provenance == "keyframe" { manual } else { auto };
            if !bucket.contains(&crop) {
                bucket.push(crop);
            }
        }
    }
    let mut classes = BTreeMap::new();
    for (class, (manual, auto)) in by_class {
        let pool = if manual.is_empty() { auto } else { manual };
        if pool.is_empty() {
            return Err(LabelingError::EmptyClass(class));
        }
        let step = pool.len().div_ceil(MAX_TEMPLATES_PER_CLASS);
        let patches = pool.iter().step_by(step).map(TemplatePatch::from_gray).collect();
        classes.insert(class, patches);
    }
    TemplateDetectorModel::new(threshold, classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginRequest {
    pub op: String,
    pub image_ref: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PluginResponse {
    pub boxes: Vec<BoundingBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Plugin side of the stdio protocol: answers requests until end of input.
pub fn serve_plugin<R: BufRead, W: Write>(detector: &dyn Detector, input: R, mut output: W) -> Result<(), LabelingError> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<PluginRequest>(&line) {
            Ok(req) if req.op == "detect" => match image::open(&req.image_ref)
                .map_err(LabelingError::from)
                .and_then(|img| detector.detect(&img))
            {
                Ok(boxes) => PluginResponse { boxes, error: None },
                Err(e) => PluginResponse {
                    boxes: vec![],
                    error: Some(e.to_string()),
                },
            },
            Ok(req) => PluginResponse {
                boxes: vec![],
                error: Some(format!("unsupported op {:?}", req.op)),
            },
            Err(e) => PluginResponse {
                boxes: vec![],
                error: Some(e.to_string()),
            },
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

struct PluginPipes {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Host side of the stdio protocol: a long-running detector subprocess.
/// Images are handed over as PNG files in a scratch directory.
pub struct PluginDetector {
    child: Mutex<Child>,
    pipes: Mutex<PluginPipes>,
    scratch: PathBuf,
    counter: AtomicU64,
}

impl PluginDetector {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, LabelingError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().ok_or_else(|| LabelingError::Plugin("no stdin".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| LabelingError::Plugin("no stdout".into()))?;
        let scratch = std::env::temp_dir().join(format!("stepwise-plugin-{}-{}", std::process::id(), child.id()));
        fs::create_dir_all(&scratch)?;
        Ok(Self {
            child: Mutex::new(child),
            pipes: Mutex::new(PluginPipes {
                stdin,
                stdout: BufReader::new(stdout),
            }),
            scratch,
            counter: AtomicU64::new(0),
        })
    }

    /// Sends one request for an image already on disk.
    pub fn detect_file(&self, image_ref: &str) -> Result<Vec<BoundingBox>, LabelingError> {
        let req = PluginRequest {
            op: "detect".into(),
            image_ref: image_ref.to_string(),
        };
        let mut pipes = self.pipes.lock().expect("plugin pipe lock");
        serde_json::to_writer(&mut pipes.stdin, &req)?;
        pipes.stdin.write_all(b"\n")?;
        pipes.stdin.flush()?;
        let mut line = String::new();
        if pipes.stdout.read_line(&mut line)? == 0 {
            return Err(LabelingError::Plugin("plugin closed its output".into()));
        }
        let resp: PluginResponse = serde_json::from_str(&line)?;
        match resp.error {
            Some(e) => Err(LabelingError::Plugin(e)),
            None => Ok(resp.boxes),
        }
    }
}

impl Detector for PluginDetector {
    fn detect(&self, image: &DynamicImage) -> Result<Vec<BoundingBox>, LabelingError> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let path = self.scratch.join(format!("request_{n}.png"));
        image.save(&path)?;
        let result = self.detect_file(&path.to_string_lossy());
        let _ = fs::remove_file(&path);
        result
    }
}

impl Drop for PluginDetector {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            let _ = child.kill();
            let _ = child.wait();
        }
        let _ = fs::remove_dir_all(&self.scratch);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{noise_image, textured_patch};
    use image::imageops;

    fn model_from(patch: &GrayImage, class: &str) -> TemplateDetectorModel {
        let mut classes = BTreeMap::new();
        classes.insert(class.to_string(), vec![TemplatePatch::from_gray(patch)]);
        TemplateDetectorModel::new(0.8, classes).unwrap()
    }

    #[test]
    fn finds_exact_copy() {
        let patch = textured_patch(16, 3);
        let mut scene = noise_image(120, 90, 40, 9);
        imageops::replace(&mut scene, &patch, 37, 22);
        let found = model_from(&patch, "ham").detect(&DynamicImage::ImageLuma8(scene)).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].geometry(), BoundingBox::new(37, 22, 53, 38));
        assert!(found[0].score.unwrap() > 0.999);
        assert_eq!(found[0].label.as_deref(), Some("ham"));
    }

    #[test]
    fn noise_yields_nothing() {
        let patch = textured_patch(16, 3);
        let scene = noise_image(120, 90, 255, 21);
        let found = model_from(&patch, "ham").detect(&DynamicImage::ImageLuma8(scene)).unwrap();
        assert!(found.is_empty());
    }

    #[test]
    fn two_copies_two_boxes() {
        let patch = textured_patch(16, 4);
        let mut scene = noise_image(140, 90, 40, 2);
        imageops::replace(&mut scene, &patch, 10, 10);
        imageops::replace(&mut scene, &patch, 90, 50);
        let mut found = model_from(&patch, "egg").detect(&DynamicImage::ImageLuma8(scene)).unwrap();
        found.sort_by_key(|b| b.x_min);
        assert_eq!(found.len(), 2);
        assert_eq!((found[0].x_min, found[0].y_min), (10, 10));
        assert_eq!((found[1].x_min, found[1].y_min), (90, 50));
    }

    #[test]
    fn nms_keeps_best() {
        let a = BoundingBox::new(0, 0, 10, 10).with_score(0.9);
        let b = BoundingBox::new(1, 0, 11, 10).with_score(0.95);
        let c = BoundingBox::new(50, 0, 60, 10).with_score(0.85);
        let kept = non_max_suppression(vec![a, b.clone(), c.clone()], 0.5);
        assert_eq!(kept, vec![b, c]);
    }

    #[test]
    fn model_json_round_trip() {
        let m = model_from(&textured_patch(8, 1), "a");
        let back = TemplateDetectorModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back.classes, m.classes);
        assert!(TemplateDetectorModel::new(0.8, BTreeMap::from([("a".to_string(), vec![])])).is_err());
    }

    #[test]
    fn plugin_loop_answers_requests() {
        let patch = textured_patch(12, 5);
        let dir = tempfile::tempdir().unwrap();
        let mut scene = noise_image(60, 40, 30, 3);
        imageops::replace(&mut scene, &patch, 20, 10);
        let path = dir.path().join("scene.png");
        scene.save(&path).unwrap();
        let input = format!(
            "{}\n{}\n",
            serde_json::json!({"op":"detect","image_ref": path.to_string_lossy()}),
            serde_json::json!({"op":"train","image_ref":"x"})
        );
        let mut out = Vec::new();
        serve_plugin(&model_from(&patch, "a"), input.as_bytes(), &mut out).unwrap();
        let lines: Vec<PluginResponse> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines[0].boxes.len(), 1);
        assert!(lines[1].error.is_some());
    }
}

//! Working-step boundary detection from hand/RoI detections.
//!
//! Frames where a hand box overlaps an RoI box form a binary interaction
//! signal. The signal is smoothed with a unit-sum Hanning kernel, thresholded,
//! and the surviving runs of interaction long enough to be an action become
//! working steps.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundingBox;
use crate::trace::{check_contiguous, DetectionFrame, TraceError};

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("window size {window} exceeds signal length {len}")]
    WindowTooLong { window: usize, len: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("mask data length {len} does not match {width}x{height}")]
    MaskShape { width: u32, height: u32, len: usize },
    #[error("mask value {0} is not binary")]
    MaskValue(u8),
    #[error("cannot read mask image: {0}")]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub window_size: usize,
    pub threshold: f64,
    pub min_step_frames: usize,
    pub min_roi_area: i64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            window_size: 19,
            threshold: 0.5,
            min_step_frames: 12,
            min_roi_area: 25,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        if self.window_size < 3 || self.window_size.is_multiple_of(2) {
            return Err(SegmentationError::Config(format!(
                "window_size must be odd and >= 3, got {}",
                self.window_size
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(SegmentationError::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.min_step_frames < 1 {
            return Err(SegmentationError::Config(
                "min_step_frames must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Binary saliency grid, row-major, 1 = salient.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl SaliencyMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, SegmentationError> {
        if data.len() != width as usize * height as usize {
            return Err(SegmentationError::MaskShape {
                width,
                height,
                len: data.len(),
            });
        }
        if let Some(&v) = data.iter().find(|&&v| v > 1) {
            return Err(SegmentationError::MaskValue(v));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    /// Reads a grayscale image (PGM P5 or anything the `image` crate decodes);
    /// nonzero pixels are salient.
    pub fn from_image_file(path: &Path) -> Result<Self, SegmentationError> {
        let img = image::open(path)?.to_luma8();
        let (width, height) = img.dimensions();
        let data = img.into_raw().into_iter().map(|v| u8::from(v != 0)).collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize] != 0
    }

    pub fn set(&mut self, x: u32, y: u32, salient: bool) {
        self.data[(y * self.width + x) as usize] = u8::from(salient);
    }

    pub fn fill_rect(&mut self, x0: u32, y0: u32, x1: u32, y1: u32) {
        for y in y0..y1.min(self.height) {
            for x in x0..x1.min(self.width) {
                self.set(x, y, true);
            }
        }
    }
}

/// Per-frame interaction series. Raw signals are binary; smoothed ones are
/// real-valued in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InteractionSignal(pub Vec<f64>);

impl InteractionSignal {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn from_binary(bits: &[u8]) -> Self {
        Self(bits.iter().map(|&b| f64::from(b)).collect())
    }
}

/// Inclusive frame range of one working step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSegment {
    pub step_id: usize,
    pub start_frame: u32,
    pub end_frame: u32,
}

impl StepSegment {
    pub fn new(step_id: usize, start_frame: u32, end_frame: u32) -> Self {
        Self {
            step_id,
            start_frame,
            end_frame,
        }
    }

    pub fn len(&self) -> u32 {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: u32) -> bool {
        (self.start_frame..=self.end_frame).contains(&frame)
    }

    pub fn intersection(&self, other: &StepSegment) -> u32 {
        let lo = self.start_frame.max(other.start_frame);
        let hi = self.end_frame.min(other.end_frame);
        if lo > hi {
            0
        } else {
            hi - lo + 1
        }
    }
}

/// One tight box per 4-connected component of salient pixels whose pixel
/// count is at least `min_roi_area`. Boxes come out in raster order of each
/// component's first pixel.
pub fn rois_from_saliency(mask: &SaliencyMask, min_roi_area: i64) -> Vec<BoundingBox> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut seen = vec![false; w * h];
    let mut boxes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || mask.data[start] == 0 {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut count = 0i64;
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % w, p / w);
            count += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut visit = |q: usize| {
                if !seen[q] && mask.data[q] != 0 {
                    seen[q] = true;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        if count >= min_roi_area {
            boxes.push(BoundingBox::new(
                x0 as i32,
                y0 as i32,
                x1 as i32 + 1,
                y1 as i32 + 1,
            ));
        }
    }
    boxes
}

/// 1 for frames where some hand box and some RoI box share positive area.
pub fn interaction_signal(frames: &[DetectionFrame]) -> Result<InteractionSignal, SegmentationError> {
    check_contiguous(frames)?;
    Ok(InteractionSignal(
        frames
            .iter()
            .map(|f| {
                let hit = f
                    .hands
                    .iter()
                    .any(|h| f.rois.iter().any(|r| h.overlaps(r)));
                f64::from(u8::from(hit))
            })
            .collect(),
    ))
}

/// Hanning taper `0.5 (1 - cos(2 pi n / (N - 1)))`, scaled to unit sum.
pub fn hanning_kernel(window_size: usize) -> Vec<f64> {
    let n = window_size as f64;
    let raw: Vec<f64> = (0..window_size)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1.0)).cos()))
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

fn reflect_index(i: isize, len: usize) -> usize {
    let len = len as isize;
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let mut j = i.rem_euclid(period);
    if j >= len {
        j = period - j;
    }
    j as usize
}

/// Convolves with the unit-sum Hanning kernel, reflecting the signal at both
/// ends (`d c b | a b c d | c b a`). Output has the input's length.
pub fn smooth_signal(
    signal: &InteractionSignal,
    window_size: usize,
) -> Result<InteractionSignal, SegmentationError> {
    let len = signal.len();
    if window_size > len {
        return Err(SegmentationError::WindowTooLong {
            window: window_size,
            len,
        });
    }
    if window_size.is_multiple_of(2) || window_size < 3 {
        return Err(SegmentationError::Config(format!(
            "window_size must be odd and >= 3, got {window_size}"
        )));
    }
    let kernel = hanning_kernel(window_size);
    let half = (window_size / 2) as isize;
    let x = signal.values();
    let out = (0..len as isize)
        .map(|i| {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * x[reflect_index(i + k as isize - half, len)])
                .sum();
            v.clamp(0.0, 1.0)
        })
        .collect();
    Ok(InteractionSignal(out))
}

/// 1 where the value reaches `threshold` (inclusive).
pub fn threshold_signal(signal: &InteractionSignal, threshold: f64) -> InteractionSignal {
    InteractionSignal(
        signal
            .values()
            .iter()
            .map(|&v| f64::from(u8::from(v >= threshold)))
            .collect(),
    )
}

/// Maximal runs of 1s of at least `min_step_frames` frames, numbered in order.
pub fn segment_steps(binary: &InteractionSignal, min_step_frames: usize) -> Vec<StepSegment> {
    let mut segments = Vec::new();
    let mut run_start: Option<usize> = None;
    let values = binary.values();
    for i in 0..=values.len() {
        let on = values.get(i).is_some_and(|&v| v >= 0.5);
        match (on, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_step_frames {
                    segments.push(StepSegment::new(segments.len(), s as u32, i as u32 - 1));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    segments
}

/// Intermediate signals of a full segmentation run, kept for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentationRun {
    pub raw: InteractionSignal,
    pub smoothed: InteractionSignal,
    pub binary: InteractionSignal,
    pub segments: Vec<StepSegment>,
}

/// Raw signal → smooth → threshold → segment.
pub fn segment_signal(
    raw: InteractionSignal,
    config: &SegmentationConfig,
) -> Result<SegmentationRun, SegmentationError> {
    config.validate()?;
    let smoothed = smooth_signal(&raw, config.window_size)?;
    let binary = threshold_signal(&smoothed, config.threshold);
    let segments = segment_steps(&binary, config.min_step_frames);
    Ok(SegmentationRun {
        raw,
        smoothed,
        binary,
        segments,
    })
}

/// Full segmentation of a detection trace. RoIs smaller than
/// `min_roi_area` are ignored when computing overlap.
pub fn segment_trace(
    frames: &[DetectionFrame],
    config: &SegmentationConfig,
) -> Result<SegmentationRun, SegmentationError> {
    config.validate()?;
    let filtered: Vec<DetectionFrame> = frames
        .iter()
        .map(|f| DetectionFrame {
            rois: f
                .rois
                .iter()
                .filter(|r| r.area() >= config.min_roi_area)
                .cloned()
                .collect(),
            ..f.clone()
        })
        .collect();
    segment_signal(interaction_signal(&filtered)?, config)
}

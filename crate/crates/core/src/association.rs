//! Per-step interacted-object extraction.
//!
//! Objects are identified by appearance features matched against a running
//! dictionary, and followed between frames by constant-velocity box trackers.
//! A tracked or matched object box that overlaps a hand box in a frame is an
//! interacted box; the union of interacted objects over a step's frames is
//! the step's association list.

use std::collections::{BTreeMap, BTreeSet};

use image::{DynamicImage, Rgb};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::FrameSource;
use crate::geometry::BoundingBox;
use crate::segmentation::StepSegment;
use crate::trace::{check_contiguous, DetectionFrame, TraceError};

pub type ObjectId = u32;

pub const HUE_BINS: usize = 8;
pub const SAT_BINS: usize = 8;
pub const VAL_BINS: usize = 8;
pub const HISTOGRAM_DIM: usize = HUE_BINS + SAT_BINS + VAL_BINS;

#[derive(Debug, Error)]
pub enum AssociationError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("box {0:?} lies outside the {1}x{2} frame")]
    OutOfBounds(BoundingBox, u32, u32),
    #[error("box has no embedded feature and no frame pixels are available")]
    MissingFeature,
    #[error("feature has zero norm")]
    ZeroFeature,
    #[error("feature dimension {found} does not match dictionary dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("frame 0 has no usable object boxes to seed the dictionary")]
    NoSeedObjects,
    #[error("trace is empty")]
    EmptyTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    pub min_roi_area: i64,
    pub min_score: f64,
    pub sim_threshold: f64,
    pub iou_threshold: f64,
    pub spawn_iou: f64,
    pub max_misses: u32,
    pub ema_alpha: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            min_roi_area: 25,
            min_score: 0.3,
            sim_threshold: 0.8,
            iou_threshold: 0.3,
            spawn_iou: 0.3,
            max_misses: 5,
            ema_alpha: 0.3,
        }
    }
}

pub fn normalize(v: &[f64]) -> Result<Vec<f64>, AssociationError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(AssociationError::ZeroFeature);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

fn hsv(px: &Rgb<u8>) -> (f64, f64, f64) {
    let [r, g, b] = px.0.map(|c| f64::from(c) / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    (hue, sat, max)
}

fn bin(value: f64, range: f64, bins: usize) -> usize {
    ((value / range * bins as f64) as usize).min(bins - 1)
}

/// Concatenated hue/saturation/value histograms (8 bins each) of the crop,
/// as raw counts.
pub fn hsv_histogram(image: &DynamicImage, bbox: &BoundingBox) -> Result<Vec<f64>, AssociationError> {
    let rgb = image.to_rgb8();
    let (w, h) = rgb.dimensions();
    if !bbox.fits_within(w, h) || bbox.validate().is_err() {
        return Err(AssociationError::OutOfBounds(bbox.geometry(), w, h));
    }
    let mut hist = vec![0.0; HISTOGRAM_DIM];
    for y in bbox.y_min..bbox.y_max {
        for x in bbox.x_min..bbox.x_max {
            let (hu, s, v) = hsv(rgb.get_pixel(x as u32, y as u32));
            hist[bin(hu, 360.0, HUE_BINS)] += 1.0;
            hist[HUE_BINS + bin(s, 1.0, SAT_BINS)] += 1.0;
            hist[HUE_BINS + SAT_BINS + bin(v, 1.0, VAL_BINS)] += 1.0;
        }
    }
    Ok(hist)
}

/// Unit-length appearance feature: the HSV histogram of the crop when pixels
/// are available, otherwise the feature embedded in the box.
pub fn feature_of(bbox: &BoundingBox, frame: Option<&DynamicImage>) -> Result<Vec<f64>, AssociationError> {
    match frame {
        Some(img) => normalize(&hsv_histogram(img, bbox)?),
        None => normalize(bbox.feature.as_deref().ok_or(AssociationError::MissingFeature)?),
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub object_id: ObjectId,
    pub label: Option<String>,
    pub feature: Vec<f64>,
    pub last_box: BoundingBox,
    pub last_seen_frame: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectDictionary {
    pub entries: BTreeMap<ObjectId, ObjectEntry>,
    pub feature_dim: Option<usize>,
}

impl ObjectDictionary {
    pub fn with_dim(feature_dim: usize) -> Self {
        Self {
            entries: BTreeMap::new(),
            feature_dim: Some(feature_dim),
        }
    }

    fn check_dim(&self, len: usize) -> Result<(), AssociationError> {
        match self.feature_dim {
            Some(d) if d != len => Err(AssociationError::Dimension {
                expected: d,
                found: len,
            }),
            _ => Ok(()),
        }
    }

    /// Adds an entry under the next free id. `feature` must be unit length.
    pub fn insert(
        &mut self,
        feature: Vec<f64>,
        label: Option<String>,
        bbox: BoundingBox,
        frame: u32,
    ) -> Result<ObjectId, AssociationError> {
        self.check_dim(feature.len())?;
        self.feature_dim = Some(feature.len());
        let object_id = self.entries.keys().next_back().map_or(0, |k| k + 1);
        self.entries.insert(
            object_id,
            ObjectEntry {
                object_id,
                label,
                feature,
                last_box: bbox.geometry(),
                last_seen_frame: frame,
            },
        );
        Ok(object_id)
    }

    /// Blends the observed feature into the entry (`(1 - alpha) old + alpha
    /// new`, renormalized) and records the latest box.
    pub fn observe(
        &mut self,
        id: ObjectId,
        feature: &[f64],
        bbox: &BoundingBox,
        frame: u32,
        alpha: f64,
    ) -> Result<(), AssociationError> {
        self.check_dim(feature.len())?;
        let Some(entry) = self.entries.get_mut(&id) else {
            return Ok(());
        };
        let blended: Vec<f64> = entry
            .feature
            .iter()
            .zip(feature)
            .map(|(old, new)| (1.0 - alpha) * old + alpha * new)
            .collect();
        // opposite vectors can cancel; keep the old feature then
        if let Ok(f) = normalize(&blended) {
            entry.feature = f;
        }
        entry.last_box = bbox.geometry();
        entry.last_seen_frame = frame;
        if entry.label.is_none() {
            entry.label = bbox.label.clone();
        }
        Ok(())
    }

    /// Display name: the label, or `object-<id>` when unlabeled.
    pub fn name(&self, id: ObjectId) -> String {
        self.entries
            .get(&id)
            .and_then(|e| e.label.clone())
            .unwrap_or_else(|| format!("object-{id}"))
    }
}

/// Entry with the highest cosine similarity, when it reaches `sim_threshold`.
/// Equal similarities resolve to the lowest id.
pub fn match_feature(
    feature: &[f64],
    dict: &ObjectDictionary,
    sim_threshold: f64,
) -> Result<Option<ObjectId>, AssociationError> {
    dict.check_dim(feature.len())?;
    let mut best: Option<(ObjectId, f64)> = None;
    for (id, entry) in &dict.entries {
        let sim = cosine(feature, &entry.feature);
        if best.is_none_or(|(_, s)| sim > s) {
            best = Some((*id, sim));
        }
    }
    Ok(best.filter(|&(_, s)| s >= sim_threshold).map(|(id, _)| id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub object_id: ObjectId,
    pub current_box: BoundingBox,
    pub velocity: (i32, i32),
    pub misses: u32,
}

impl TrackerState {
    pub fn new(object_id: ObjectId, bbox: &BoundingBox) -> Self {
        Self {
            object_id,
            current_box: bbox.geometry(),
            velocity: (0, 0),
            misses: 0,
        }
    }
}

pub fn tracker_predict(state: &TrackerState) -> BoundingBox {
    state.current_box.translated(state.velocity.0, state.velocity.1)
}

/// Greedy IoU association of the predicted box with `candidates`. Returns the
/// new state and the index of the matched candidate.
pub fn tracker_update(
    state: &TrackerState,
    candidates: &[BoundingBox],
    iou_threshold: f64,
) -> (TrackerState, Option<usize>) {
    let predicted = tracker_predict(state);
    let best = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (i, predicted.iou(c)))
        .fold(None::<(usize, f64)>, |acc, (i, iou)| match acc {
            Some((_, b)) if b >= iou => acc,
            _ => Some((i, iou)),
        });
    match best {
        Some((i, iou)) if iou >= iou_threshold && iou > 0.0 => {
            let matched = candidates[i].geometry();
            let (ox, oy) = state.current_box.center2();
            let (nx, ny) = matched.center2();
            let half = |d: i32| (f64::from(d) / 2.0).round() as i32;
            (
                TrackerState {
                    object_id: state.object_id,
                    current_box: matched,
                    velocity: (half(nx - ox), half(ny - oy)),
                    misses: 0,
                },
                Some(i),
            )
        }
        _ => (
            TrackerState {
                current_box: predicted.geometry(),
                misses: state.misses + 1,
                ..state.clone()
            },
            None,
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult {
    /// Interacted object boxes per frame.
    pub per_frame_o_boxes: BTreeMap<u32, Vec<(ObjectId, BoundingBox)>>,
    pub step_associations: BTreeMap<usize, BTreeSet<ObjectId>>,
    pub dictionary: ObjectDictionary,
}

impl AssociationResult {
    /// Number of frames of `segment` in which each object was interacted with.
    pub fn interaction_frames(&self, segment: &StepSegment) -> BTreeMap<ObjectId, u32> {
        let mut counts = BTreeMap::new();
        for (_, boxes) in self
            .per_frame_o_boxes
            .range(segment.start_frame..=segment.end_frame)
        {
            for (id, _) in boxes {
                *counts.entry(*id).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// Step associations as the union of per-frame interacted ids inside each segment.
pub fn associations_from_boxes(
    per_frame: &BTreeMap<u32, Vec<(ObjectId, BoundingBox)>>,
    segments: &[StepSegment],
) -> BTreeMap<usize, BTreeSet<ObjectId>> {
    segments
        .iter()
        .map(|s| {
            let ids = per_frame
                .range(s.start_frame..=s.end_frame)
                .flat_map(|(_, v)| v.iter().map(|(id, _)| *id))
                .collect();
            (s.step_id, ids)
        })
        .collect()
}

/// Runs the frame loop over the whole trace: filter object boxes, track,
/// match features, spawn trackers for untracked detections, update the
/// dictionary, and keep boxes touched by a hand.
pub fn extract_associations(
    trace: &[DetectionFrame],
    segments: &[StepSegment],
    config: &AssociationConfig,
    pixels: Option<&dyn FrameSource>,
) -> Result<AssociationResult, AssociationError> {
    check_contiguous(trace)?;
    if trace.is_empty() {
        return Err(AssociationError::EmptyTrace);
    }
    let mut dict = ObjectDictionary::default();
    let mut trackers: BTreeMap<ObjectId, TrackerState> = BTreeMap::new();
    let mut per_frame = BTreeMap::new();

    for frame in trace {
        let candidates: Vec<BoundingBox> = frame
            .objects
            .iter()
            .filter(|b| b.area() >= config.min_roi_area)
            .filter(|b| b.score.is_none_or(|s| s >= config.min_score))
            .cloned()
            .collect();
        if frame.frame_index == 0 && candidates.is_empty() {
            return Err(AssociationError::NoSeedObjects);
        }
        let image = match pixels {
            Some(src) => Some(src.frame(frame.frame_index).ok_or(AssociationError::MissingFeature)?),
            None => None,
        };
        let features = candidates
            .iter()
            .map(|b| feature_of(b, image.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;

        // tracking: each candidate is claimed by at most one tracker
        let mut claimed: Vec<Option<ObjectId>> = vec![None; candidates.len()];
        let mut t_boxes: Vec<(ObjectId, BoundingBox)> = Vec::new();
        for (id, state) in trackers.iter_mut() {
            let free: Vec<usize> = (0..candidates.len()).filter(|&i| claimed[i].is_none()).collect();
            let boxes: Vec<BoundingBox> = free.iter().map(|&i| candidates[i].clone()).collect();
            let (next, matched) = tracker_update(state, &boxes, config.iou_threshold);
            *state = next;
            if let Some(k) = matched {
                claimed[free[k]] = Some(*id);
                t_boxes.push((*id, candidates[free[k]].geometry()));
            }
        }
        trackers.retain(|_, t| t.misses <= config.max_misses);

        // feature matching; unknown and untracked boxes become new objects
        let mut d_boxes: Vec<(ObjectId, BoundingBox)> = Vec::new();
        let mut resolved = Vec::with_capacity(candidates.len());
        for (i, cand) in candidates.iter().enumerate() {
            let matched = match_feature(&features[i], &dict, config.sim_threshold)?;
            let id = match (claimed[i], matched) {
                (Some(t), _) => t,
                (None, Some(d)) => d,
                (None, None) => dict.insert(
                    features[i].clone(),
                    cand.label.clone(),
                    cand.clone(),
                    frame.frame_index,
                )?,
            };
            if claimed[i].is_none() {
                d_boxes.push((id, cand.geometry()));
            } else if let Some(d) = matched {
                d_boxes.push((d, cand.geometry()));
            }
            resolved.push(id);
        }

        let tracked_now: BTreeSet<ObjectId> = t_boxes.iter().map(|(id, _)| *id).collect();
        for (id, b) in &d_boxes {
            let novel = t_boxes.iter().all(|(_, t)| t.iou(b) < config.spawn_iou);
            if novel && !tracked_now.contains(id) {
                trackers.insert(*id, TrackerState::new(*id, b));
            }
        }

        for (i, cand) in candidates.iter().enumerate() {
            dict.observe(resolved[i], &features[i], cand, frame.frame_index, config.ema_alpha)?;
        }

        let mut o_boxes: Vec<(ObjectId, BoundingBox)> = Vec::new();
        for (i, cand) in candidates.iter().enumerate() {
            let touched = frame.hands.iter().any(|h| h.overlaps(cand));
            if touched && !o_boxes.iter().any(|(id, _)| *id == resolved[i]) {
                o_boxes.push((resolved[i], cand.geometry()));
            }
        }
        per_frame.insert(frame.frame_index, o_boxes);
    }

    let step_associations = associations_from_boxes(&per_frame, segments);
    Ok(AssociationResult {
        per_frame_o_boxes: per_frame,
        step_associations,
        dictionary: dict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::RgbImage;

    fn unit(i: usize, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn embedded_feature_is_normalized() {
        let b = BoundingBox::new(0, 0, 5, 5).with_feature(vec![3.0, 4.0]);
        let f = feature_of(&b, None).unwrap();
        assert!((f[0] - 0.6).abs() < 1e-12 && (f[1] - 0.8).abs() < 1e-12);
        assert!(matches!(
            feature_of(&BoundingBox::new(0, 0, 5, 5), None),
            Err(AssociationError::MissingFeature)
        ));
    }

    #[test]
    fn uniform_red_crop_fills_one_hue_bin() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(20, 20, Rgb([255, 0, 0])));
        let f = feature_of(&BoundingBox::new(2, 2, 12, 12), Some(&img)).unwrap();
        let hue_nonzero: Vec<usize> = (0..HUE_BINS).filter(|&i| f[i] > 0.0).collect();
        assert_eq!(hue_nonzero, vec![0]);
        assert_eq!(f.len(), HISTOGRAM_DIM);
    }

    #[test]
    fn half_red_half_blue_crop() {
        let mut img = RgbImage::from_pixel(20, 10, Rgb([255, 0, 0]));
        for y in 0..10 {
            for x in 10..20 {
                img.put_pixel(x, y, Rgb([0, 0, 255]));
            }
        }
        let img = DynamicImage::ImageRgb8(img);
        let f = feature_of(&BoundingBox::new(0, 0, 20, 10), Some(&img)).unwrap();
        // oracle: 100 red px (hue 0°), 100 blue px (hue 240° → bin 5); all fully
        // saturated and bright, so s and v mass sit in their top bins
        let mut expected = vec![0.0; HISTOGRAM_DIM];
        expected[0] = 100.0;
        expected[5] = 100.0;
        expected[HUE_BINS + 7] = 200.0;
        expected[HUE_BINS + SAT_BINS + 7] = 200.0;
        let expected = normalize(&expected).unwrap();
        for (a, b) in f.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(f[0], f[5]);
    }

    #[test]
    fn out_of_bounds_crop() {
        let img = DynamicImage::ImageRgb8(RgbImage::new(10, 10));
        assert!(matches!(
            feature_of(&BoundingBox::new(5, 5, 11, 9), Some(&img)),
            Err(AssociationError::OutOfBounds(..))
        ));
    }

    #[test]
    fn matching_rules() {
        let mut dict = ObjectDictionary::default();
        let b = BoundingBox::new(0, 0, 5, 5);
        let a_id = dict.insert(unit(0, 3), None, b.clone(), 0).unwrap();
        assert_eq!(match_feature(&unit(0, 3), &dict, 0.8).unwrap(), Some(a_id));
        assert_eq!(match_feature(&unit(1, 3), &dict, 0.8).unwrap(), None);
        assert!(matches!(
            match_feature(&[1.0, 0.0], &dict, 0.8),
            Err(AssociationError::Dimension { .. })
        ));
    }

    #[test]
    fn tie_breaks_to_lowest_id() {
        let mut dict = ObjectDictionary::default();
        let b = BoundingBox::new(0, 0, 5, 5);
        let r = 0.19f64.sqrt();
        dict.insert(unit(2, 3), None, b.clone(), 0).unwrap();
        let first = dict.insert(normalize(&[0.9, r, 0.0]).unwrap(), None, b.clone(), 0).unwrap();
        let second = dict.insert(normalize(&[0.9, 0.0, r]).unwrap(), None, b.clone(), 0).unwrap();
        let q = unit(0, 3);
        let s1 = cosine(&q, &dict.entries[&first].feature);
        let s2 = cosine(&q, &dict.entries[&second].feature);
        assert_eq!(s1, s2);
        assert!((s1 - 0.9).abs() < 1e-9);
        assert_eq!(match_feature(&q, &dict, 0.8).unwrap(), Some(first));
    }

    #[test]
    fn predict_translates() {
        let mut s = TrackerState::new(0, &BoundingBox::new(0, 0, 10, 10));
        assert_eq!(tracker_predict(&s), BoundingBox::new(0, 0, 10, 10));
        s.velocity = (5, 0);
        assert_eq!(tracker_predict(&s), BoundingBox::new(5, 0, 15, 10));
        s.current_box = BoundingBox::new(20, 20, 30, 40);
        s.velocity = (-2, 3);
        assert_eq!(tracker_predict(&s), BoundingBox::new(18, 23, 28, 43));
    }

    #[test]
    fn update_rules() {
        let s = TrackerState::new(7, &BoundingBox::new(0, 0, 10, 10));
        let (same, m) = tracker_update(&s, &[BoundingBox::new(0, 0, 10, 10)], 0.3);
        assert_eq!(m, Some(0));
        assert_eq!(same.misses, 0);

        let (lost, m) = tracker_update(&s, &[], 0.3);
        assert_eq!(m, None);
        assert_eq!(lost.misses, 1);
        assert_eq!(lost.current_box, tracker_predict(&s));

        let (moved, m) = tracker_update(&s, &[BoundingBox::new(5, 0, 15, 10)], 0.3);
        assert_eq!(m, Some(0));
        assert_eq!(moved.velocity, (5, 0));
        assert_eq!(moved.current_box, BoundingBox::new(5, 0, 15, 10));
    }

    #[test]
    fn dictionary_features_stay_unit() {
        let mut dict = ObjectDictionary::default();
        let b = BoundingBox::new(0, 0, 5, 5);
        let id = dict.insert(unit(0, 2), None, b.clone(), 0).unwrap();
        dict.observe(id, &normalize(&[1.0, 1.0]).unwrap(), &b, 1, 0.3).unwrap();
        let f = &dict.entries[&id].feature;
        assert!((f.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
    }

    fn obj(x: i32, y: i32, label: &str, f: Vec<f64>) -> BoundingBox {
        BoundingBox::labeled(x, y, x + 20, y + 20, label).with_feature(f)
    }

    #[test]
    fn static_objects_hand_touches_one() {
        let trace: Vec<DetectionFrame> = (0..60)
            .map(|i| DetectionFrame {
                frame_index: i,
                hands: if (20..=40).contains(&i) {
                    vec![BoundingBox::new(10, 10, 30, 30)]
                } else {
                    vec![BoundingBox::new(200, 200, 220, 220)]
                },
                rois: vec![],
                objects: vec![obj(0, 0, "A", unit(0, 4)), obj(100, 0, "B", unit(1, 4))],
            })
            .collect();
        let segs = vec![StepSegment::new(0, 20, 40)];
        let r = extract_associations(&trace, &segs, &AssociationConfig::default(), None).unwrap();
        let names: Vec<String> = r.step_associations[&0].iter().map(|&id| r.dictionary.name(id)).collect();
        assert_eq!(names, vec!["A"]);
        assert_eq!(r.dictionary.entries.len(), 2);
        assert_eq!(r.step_associations, associations_from_boxes(&r.per_frame_o_boxes, &segs));
    }

    #[test]
    fn no_hands_no_associations() {
        let trace: Vec<DetectionFrame> = (0..10)
            .map(|i| DetectionFrame {
                frame_index: i,
                objects: vec![obj(0, 0, "A", unit(0, 2))],
                ..Default::default()
            })
            .collect();
        let segs = vec![StepSegment::new(0, 0, 9)];
        let r = extract_associations(&trace, &segs, &AssociationConfig::default(), None).unwrap();
        assert!(r.per_frame_o_boxes.values().all(Vec::is_empty));
        assert!(r.step_associations[&0].is_empty());
    }

    #[test]
    fn moving_object_keeps_one_identity() {
        // feature drifts each frame so only the tracker can hold the identity
        let trace: Vec<DetectionFrame> = (0..40)
            .map(|i| {
                let x = 2 * i as i32;
                let angle = i as f64 * 0.05;
                DetectionFrame {
                    frame_index: i,
                    hands: if (10..=30).contains(&i) {
                        vec![BoundingBox::new(x + 5, 5, x + 25, 25)]
                    } else {
                        vec![]
                    },
                    rois: vec![],
                    objects: vec![obj(x, 0, "A", vec![angle.cos(), angle.sin()])],
                }
            })
            .collect();
        let segs = vec![StepSegment::new(0, 10, 30)];
        let r = extract_associations(&trace, &segs, &AssociationConfig::default(), None).unwrap();
        assert_eq!(r.dictionary.entries.len(), 1);
        assert_eq!(r.step_associations[&0].len(), 1);
        let ids: BTreeSet<ObjectId> = r.per_frame_o_boxes.values().flatten().map(|(id, _)| *id).collect();
        assert_eq!(ids.len(), 1);
    }

    #[test]
    fn empty_seed_frame_is_an_error() {
        let trace = vec![DetectionFrame::new(0)];
        assert!(matches!(
            extract_associations(&trace, &[], &AssociationConfig::default(), None),
            Err(AssociationError::NoSeedObjects)
        ));
    }

    #[test]
    fn low_score_and_tiny_boxes_are_filtered() {
        let trace = vec![DetectionFrame {
            frame_index: 0,
            hands: vec![BoundingBox::new(0, 0, 100, 100)],
            rois: vec![],
            objects: vec![
                obj(0, 0, "A", unit(0, 2)),
                obj(40, 0, "weak", unit(1, 2)).with_score(0.1),
                BoundingBox::labeled(60, 60, 63, 63, "speck").with_feature(unit(1, 2)),
            ],
        }];
        let r = extract_associations(&trace, &[StepSegment::new(0, 0, 0)], &AssociationConfig::default(), None).unwrap();
        assert_eq!(r.dictionary.entries.len(), 1);
    }
}

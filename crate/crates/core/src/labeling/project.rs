use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ncc::{GrayF, Template};
use super::LabelingError;
use crate::frames::FrameSource;
use crate::geometry::BoundingBox;

/// Labels for one video: manual keyframes and automatically propagated frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelProject {
    pub project_id: String,
    pub video_ref: String,
    pub frame_count: u32,
    pub classes: Vec<String>,
    #[serde(default)]
    pub keyframes: BTreeMap<u32, Vec<BoundingBox>>,
    #[serde(default)]
    pub propagated: BTreeMap<u32, Vec<BoundingBox>>,
    #[serde(default)]
    pub revision: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    pub search_radius: i32,
    pub stop_threshold: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            search_radius: 16,
            stop_threshold: 0.6,
        }
    }
}

impl LabelProject {
    pub fn new(project_id: &str, video_ref: &str, frame_count: u32, classes: &[&str]) -> Self {
        Self {
            project_id: project_id.to_string(),
            video_ref: video_ref.to_string(),
            frame_count,
            classes: classes.iter().map(|c| c.to_string()).collect(),
            keyframes: BTreeMap::new(),
            propagated: BTreeMap::new(),
            revision: 0,
        }
    }

    fn check_boxes(&self, boxes: &[BoundingBox]) -> Result<(), LabelingError> {
        for b in boxes {
            let label = b.label.as_ref().ok_or(LabelingError::Unlabeled)?;
            if !self.classes.contains(label) {
                return Err(LabelingError::UnknownClass(label.clone()));
            }
            b.validate()?;
        }
        Ok(())
    }

    fn next_keyframe_after(&self, frame: u32) -> Option<u32> {
        self.keyframes.range(frame + 1..).next().map(|(k, _)| *k)
    }

    /// Makes `frame` a keyframe with `boxes`, dropping propagated labels from
    /// that frame up to the next keyframe so they can be re-propagated.
    pub fn relabel_keyframe(&self, frame: u32, boxes: Vec<BoundingBox>) -> Result<LabelProject, LabelingError> {
        if frame >= self.frame_count {
            return Err(LabelingError::FrameOutOfRange {
                frame,
                frame_count: self.frame_count,
            });
        }
        self.check_boxes(&boxes)?;
        let mut next = self.clone();
        let stop = self.next_keyframe_after(frame).unwrap_or(self.frame_count);
        let stale: Vec<u32> = next.propagated.range(frame..stop).map(|(k, _)| *k).collect();
        for k in stale {
            next.propagated.remove(&k);
        }
        next.keyframes.insert(frame, boxes);
        next.revision += 1;
        Ok(next)
    }

    /// Boxes for every labeled frame, keyframes and propagated alike.
    pub fn labeled_frames(&self) -> BTreeMap<u32, (&'static str, &Vec<BoundingBox>)> {
        let mut all = BTreeMap::new();
        for (k, v) in &self.keyframes {
            all.insert(*k, ("keyframe", v));
        }
        for (k, v) in &self.propagated {
            all.entry(*k).or_insert(("propagated", v));
        }
        all
    }
}

fn best_offset(template: &Template, img: &GrayF, prev: &BoundingBox, radius: i32) -> Option<(BoundingBox, f64)> {
    let (w, h) = (prev.width(), prev.height());
    let max_x = img.width as i32 - w;
    let max_y = img.height as i32 - h;
    if max_x < 0 || max_y < 0 {
        return None;
    }
    let mut best: Option<(i32, i32, f64)> = None;
    // staying put is tried first so that flat responses keep the old position
    let mut offsets = vec![(0, 0)];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if (dx, dy) != (0, 0) {
                offsets.push((dx, dy));
            }
        }
    }
    for (dx, dy) in offsets {
        let x = prev.x_min + dx;
        let y = prev.y_min + dy;
        if x < 0 || y < 0 || x > max_x || y > max_y {
            continue;
        }
        let s = template.ncc_at(img, x as u32, y as u32);
        if best.is_none_or(|(_, _, b)| s > b) {
            best = Some((x, y, s));
        }
    }
    best.map(|(x, y, s)| {
        (
            BoundingBox {
                x_min: x,
                y_min: y,
                x_max: x + w,
                y_max: y + h,
                ..prev.clone()
            },
            s,
        )
    })
}

/// Tracks every box of keyframe `from_keyframe` forward through `until_frame`
/// (or the frame before the next keyframe, whichever is first). Each box is
/// searched within `search_radius` pixels of its previous position by
/// correlating against its keyframe crop; a box stops propagating once the
/// best correlation drops below `stop_threshold`.
///
/// Returns the updated project and the boxes written per frame.
pub fn propagate_labels(
    project: &LabelProject,
    from_keyframe: u32,
    until_frame: u32,
    frames: &dyn FrameSource,
    params: &PropagationParams,
) -> Result<(LabelProject, BTreeMap<u32, Vec<BoundingBox>>), LabelingError> {
    let seeds = project
        .keyframes
        .get(&from_keyframe)
        .ok_or(LabelingError::NotKeyframe(from_keyframe))?;
    if until_frame <= from_keyframe {
        return Err(LabelingError::BadRange {
            from: from_keyframe,
            until: until_frame,
        });
    }
    let mut last = until_frame.min(project.frame_count.saturating_sub(1));
    if let Some(k) = project.next_keyframe_after(from_keyframe) {
        last = last.min(k - 1);
    }

    let key_img = GrayF::from_image(
        &frames
            .frame(from_keyframe)
            .ok_or(LabelingError::MissingFrame(from_keyframe))?,
    );
    let mut tracks: Vec<Option<(Template, BoundingBox)>> = seeds
        .iter()
        .map(|b| {
            if b.fits_within(key_img.width, key_img.height) {
                Ok(Some((Template::crop(&key_img, b), b.clone())))
            } else {
                Err(LabelingError::OutOfImage(b.clone(), key_img.width, key_img.height))
            }
        })
        .collect::<Result<_, _>>()?;

    let mut written: BTreeMap<u32, Vec<BoundingBox>> = BTreeMap::new();
    for f in from_keyframe + 1..=last {
        if tracks.iter().all(Option::is_none) {
            break;
        }
        let img = GrayF::from_image(&frames.frame(f).ok_or(LabelingError::MissingFrame(f))?);
        let mut boxes = Vec::new();
        for slot in tracks.iter_mut() {
            let Some((template, prev)) = slot else { continue };
            match best_offset(template, &img, prev, params.search_radius) {
                Some((b, score)) if score >= params.stop_threshold => {
                    *prev = b.clone();
                    boxes.push(b.with_score(score.clamp(0.0, 1.0)));
                }
                _ => *slot = None,
            }
        }
        if !boxes.is_empty() {
            written.insert(f, boxes);
        }
    }

    let mut next = project.clone();
    let stale: Vec<u32> = next
        .propagated
        .range(from_keyframe + 1..=last)
        .map(|(k, _)| *k)
        .collect();
    for k in stale {
        next.propagated.remove(&k);
    }
    next.propagated.extend(written.clone());
    next.revision += 1;
    Ok((next, written))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::translating_square_video;
    use crate::frames::MemoryFrames;

    #[test]
    fn static_video_keeps_box() {
        let (frames, truth) = translating_square_video(10, 0, 7);
        let src = MemoryFrames::from_vec(frames);
        let mut p = LabelProject::new("p", "v", 10, &["square"]);
        p = p.relabel_keyframe(0, vec![truth[0].clone().with_label("square")]).unwrap();
        let (p, written) = propagate_labels(&p, 0, 9, &src, &PropagationParams::default()).unwrap();
        assert_eq!(written.len(), 9);
        for boxes in p.propagated.values() {
            assert_eq!(boxes[0].geometry(), truth[0].geometry());
        }
    }

    #[test]
    fn translating_square_tracks() {
        let (frames, truth) = translating_square_video(16, 2, 11);
        let src = MemoryFrames::from_vec(frames);
        let p = LabelProject::new("p", "v", 16, &["square"])
            .relabel_keyframe(0, vec![truth[0].clone().with_label("square")])
            .unwrap();
        let (_, written) = propagate_labels(&p, 0, 15, &src, &PropagationParams::default()).unwrap();
        assert_eq!(written.len(), 15);
        for (f, boxes) in &written {
            assert!(boxes[0].iou(&truth[*f as usize]) >= 0.7);
        }
    }

    #[test]
    fn missing_frame_is_error() {
        let (frames, truth) = translating_square_video(3, 0, 1);
        let src = MemoryFrames::from_vec(frames);
        let p = LabelProject::new("p", "v", 10, &["square"])
            .relabel_keyframe(0, vec![truth[0].clone().with_label("square")])
            .unwrap();
        assert!(matches!(
            propagate_labels(&p, 0, 8, &src, &PropagationParams::default()),
            Err(LabelingError::MissingFrame(3))
        ));
        assert!(matches!(
            propagate_labels(&p, 0, 0, &src, &PropagationParams::default()),
            Err(LabelingError::BadRange { .. })
        ));
    }

    #[test]
    fn relabel_invalidates_until_next_keyframe() {
        let b = BoundingBox::labeled(0, 0, 4, 4, "a");
        let mut p = LabelProject::new("p", "v", 30, &["a"]);
        p.keyframes.insert(0, vec![b.clone()]);
        p.keyframes.insert(20, vec![b.clone()]);
        for f in (1..20).chain(21..30) {
            p.propagated.insert(f, vec![b.clone()]);
        }
        let q = p.relabel_keyframe(10, vec![]).unwrap();
        let kept: Vec<u32> = q.propagated.keys().copied().collect();
        let expected: Vec<u32> = (1..10).chain(21..30).collect();
        assert_eq!(kept, expected);
        assert_eq!(q.revision, p.revision + 1);
        assert!(q.keyframes[&10].is_empty());
        // relabeling an existing keyframe replaces it
        let r = q.relabel_keyframe(10, vec![b.clone()]).unwrap();
        assert_eq!(r.keyframes[&10], vec![b]);
        assert_eq!(r.revision, q.revision + 1);
    }

    #[test]
    fn relabel_rejects_unknown_class() {
        let p = LabelProject::new("p", "v", 5, &["a"]);
        assert!(matches!(
            p.relabel_keyframe(0, vec![BoundingBox::labeled(0, 0, 2, 2, "zzz")]),
            Err(LabelingError::UnknownClass(_))
        ));
        assert!(matches!(
            p.relabel_keyframe(9, vec![]),
            Err(LabelingError::FrameOutOfRange { .. })
        ));
    }

    #[test]
    fn propagation_never_writes_keyframes() {
        let (frames, truth) = translating_square_video(12, 1, 3);
        let src = MemoryFrames::from_vec(frames);
        let p = LabelProject::new("p", "v", 12, &["square"])
            .relabel_keyframe(0, vec![truth[0].clone().with_label("square")])
            .unwrap()
            .relabel_keyframe(6, vec![truth[6].clone().with_label("square")])
            .unwrap();
        let (p, written) = propagate_labels(&p, 0, 11, &src, &PropagationParams::default()).unwrap();
        assert_eq!(written.keys().copied().collect::<Vec<_>>(), (1..6).collect::<Vec<_>>());
        assert!(p.keyframes.keys().all(|k| !p.propagated.contains_key(k)));
    }
}

//! Editable workflow: ordered working steps with their object lists, plus the
//! JSON document format.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::association::AssociationResult;
use crate::segmentation::StepSegment;

#[derive(Debug, Error, PartialEq)]
pub enum EditError {
    #[error("frame {0} is not strictly inside any step")]
    NotInsideStep(u32),
    #[error("no step with id {0}")]
    UnknownStep(usize),
    #[error("step {0} is the last step and has nothing to merge with")]
    LastStep(usize),
    #[error("object {object:?} is not in step {step}")]
    AbsentObject { step: usize, object: String },
    #[error("object {object:?} is already in step {step}")]
    DuplicateObject { step: usize, object: String },
    #[error("workflow invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("malformed workflow document: {0}")]
    Schema(#[from] serde_json::Error),
    #[error(transparent)]
    Invariant(#[from] EditError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingStep {
    pub step_id: usize,
    pub start_frame: u32,
    pub end_frame: u32,
    #[serde(default)]
    pub objects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_object: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl WorkingStep {
    pub fn new(step_id: usize, start_frame: u32, end_frame: u32) -> Self {
        Self {
            step_id,
            start_frame,
            end_frame,
            objects: Vec::new(),
            completion_object: None,
            note: String::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn segment(&self) -> StepSegment {
        StepSegment::new(self.step_id, self.start_frame, self.end_frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workflow {
    pub workflow_id: String,
    pub video_ref: String,
    pub fps: f64,
    pub revision: u64,
    pub steps: Vec<WorkingStep>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Workflow {
    pub fn new(workflow_id: &str, video_ref: &str, fps: f64) -> Self {
        Self {
            workflow_id: workflow_id.to_string(),
            video_ref: video_ref.to_string(),
            fps,
            revision: 0,
            steps: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn from_segments(workflow_id: &str, video_ref: &str, fps: f64, segments: &[StepSegment]) -> Self {
        let mut w = Self::new(workflow_id, video_ref, fps);
        w.steps = segments
            .iter()
            .enumerate()
            .map(|(i, s)| WorkingStep::new(i, s.start_frame, s.end_frame))
            .collect();
        w
    }

    pub fn segments(&self) -> Vec<StepSegment> {
        self.steps.iter().map(WorkingStep::segment).collect()
    }

    pub fn step_at(&self, frame: u32) -> Option<&WorkingStep> {
        self.steps
            .iter()
            .find(|s| (s.start_frame..=s.end_frame).contains(&frame))
    }

    pub fn validate(&self) -> Result<(), EditError> {
        for (i, s) in self.steps.iter().enumerate() {
            if s.step_id != i {
                return Err(EditError::Invariant(format!(
                    "step ids must be contiguous from 0; position {i} has id {}",
                    s.step_id
                )));
            }
            if s.start_frame > s.end_frame {
                return Err(EditError::Invariant(format!("step {i} ends before it starts")));
            }
            if i > 0 && self.steps[i - 1].end_frame >= s.start_frame {
                return Err(EditError::Invariant(format!(
                    "steps {} and {i} overlap or are out of order",
                    i - 1
                )));
            }
            for (k, o) in s.objects.iter().enumerate() {
                if s.objects[..k].contains(o) {
                    return Err(EditError::Invariant(format!("step {i} lists {o:?} twice")));
                }
            }
            if let Some(c) = &s.completion_object {
                if !s.objects.contains(c) {
                    return Err(EditError::Invariant(format!(
                        "step {i} completion object {c:?} is not in its object list"
                    )));
                }
            }
        }
        Ok(())
    }

    fn committed(mut self) -> Self {
        for (i, s) in self.steps.iter_mut().enumerate() {
            s.step_id = i;
        }
        self.revision += 1;
        self
    }

    /// Splits the step containing `frame` so that `frame` starts a new step.
    /// Both halves keep the original object list.
    pub fn split_step(&self, frame: u32) -> Result<Workflow, EditError> {
        let idx = self
            .steps
            .iter()
            .position(|s| s.start_frame < frame && frame <= s.end_frame)
            .ok_or(EditError::NotInsideStep(frame))?;
        let mut next = self.clone();
        let mut right = next.steps[idx].clone();
        next.steps[idx].end_frame = frame - 1;
        right.start_frame = frame;
        next.steps.insert(idx + 1, right);
        Ok(next.committed())
    }

    /// Merges `step_id` with the step after it. Objects keep first-step order
    /// followed by new objects from the second step.
    pub fn merge_steps(&self, step_id: usize) -> Result<Workflow, EditError> {
        if step_id >= self.steps.len() {
            return Err(EditError::UnknownStep(step_id));
        }
        if step_id + 1 == self.steps.len() {
            return Err(EditError::LastStep(step_id));
        }
        let mut next = self.clone();
        let second = next.steps.remove(step_id + 1);
        let first = &mut next.steps[step_id];
        first.end_frame = second.end_frame;
        for o in second.objects {
            if !first.objects.contains(&o) {
                first.objects.push(o);
            }
        }
        if first.completion_object.is_none() {
            first.completion_object = second.completion_object;
        }
        if first.note.is_empty() {
            first.note = second.note;
        }
        for (k, v) in second.extra {
            first.extra.entry(k).or_insert(v);
        }
        Ok(next.committed())
    }

    pub fn edit_objects(&self, step_id: usize, add: &[String], remove: &[String]) -> Result<Workflow, EditError> {
        let step = self.steps.get(step_id).ok_or(EditError::UnknownStep(step_id))?;
        for r in remove {
            if !step.objects.contains(r) {
                return Err(EditError::AbsentObject {
                    step: step_id,
                    object: r.clone(),
                });
            }
        }
        let mut next = self.clone();
        let step = &mut next.steps[step_id];
        step.objects.retain(|o| !remove.contains(o));
        for a in add {
            if step.objects.contains(a) {
                return Err(EditError::DuplicateObject {
                    step: step_id,
                    object: a.clone(),
                });
            }
            step.objects.push(a.clone());
        }
        if step
            .completion_object
            .as_ref()
            .is_some_and(|c| !step.objects.contains(c))
        {
            step.completion_object = None;
        }
        Ok(next.committed())
    }

    pub fn set_completion_object(&self, step_id: usize, object: Option<String>) -> Result<Workflow, EditError> {
        let step = self.steps.get(step_id).ok_or(EditError::UnknownStep(step_id))?;
        if let Some(o) = &object {
            if !step.objects.contains(o) {
                return Err(EditError::AbsentObject {
                    step: step_id,
                    object: o.clone(),
                });
            }
        }
        let mut next = self.clone();
        next.steps[step_id].completion_object = object;
        Ok(next.committed())
    }

    /// Fills each step's object list from an association run. Objects are
    /// ordered by how many frames of the step they were interacted with (most
    /// first, ties by id); the most-handled object becomes the completion object.
    pub fn with_associations(&self, result: &AssociationResult) -> Workflow {
        let mut next = self.clone();
        for step in &mut next.steps {
            let counts = result.interaction_frames(&step.segment());
            let mut ranked: Vec<(u32, u32)> = counts.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            step.objects.clear();
            for (id, _) in ranked {
                let name = result.dictionary.name(id);
                if !step.objects.contains(&name) {
                    step.objects.push(name);
                }
            }
            step.completion_object = step.objects.first().cloned();
        }
        next.committed()
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn save_workflow(workflow: &Workflow) -> Result<Vec<u8>, EditError> {
    workflow.validate()?;
    let mut bytes = serde_json::to_vec_pretty(workflow).expect("workflow serializes");
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn load_workflow(bytes: &[u8]) -> Result<Workflow, LoadError> {
    let w: Workflow = serde_json::from_slice(bytes)?;
    w.validate()?;
    Ok(w)
}

//! Task state machines: authoring model, validation, compilation to a
//! checksummed package, and the guidance engine that runs a package against
//! per-frame detections.
//!
//! A state is entered when its appearance predicate holds; transitions out of
//! the current state are tried in priority order and fire after `debounce`
//! consecutive matching frames. Entering a state emits its guidance.

mod compile;
mod engine;
mod predicate;
mod validate;

pub use compile::{compile, lower_predicate, run_program, CompiledTransition, Instr, TaskPackage, PACKAGE_FILE};
pub use engine::{engine_step, simulate, EngineError, EngineStatus, GuidanceMessage, Timeline};
pub use predicate::{Atom, FrameSummary, Predicate};
pub use validate::{has_errors, validate, Diagnostic, Severity};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workflow::Workflow;

pub const FSM_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_DEBOUNCE: u32 = 3;
pub const START_STATE: &str = "start";
pub const DONE_STATE: &str = "done";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Start,
    Normal,
    Error,
    Done,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Guidance {
    pub speech: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_ref: Option<String>,
}

impl Guidance {
    pub fn speech(text: &str) -> Self {
        Self {
            speech: text.to_string(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub state_id: String,
    pub kind: StateKind,
    /// Entry condition.
    pub predicate: Predicate,
    #[serde(default)]
    pub guidance: Guidance,
}

fn default_debounce() -> u32 {
    DEFAULT_DEBOUNCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from_state: String,
    pub to_state: String,
    /// Lower fires first.
    pub priority: i32,
    #[serde(default = "default_debounce")]
    pub debounce: u32,
}

/// Authoring document for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFsm {
    pub format_version: u32,
    pub name: String,
    pub version: String,
    /// Classes the task's detector can report.
    pub detector_classes: Vec<String>,
    pub states: Vec<TaskState>,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Error)]
pub enum FsmError {
    #[error("step {step_id} has no completion object")]
    MissingCompletionObject { step_id: usize },
    #[error("state machine has {} validation error(s)", .0.iter().filter(|d| d.severity == Severity::Error).count())]
    Invalid(Vec<Diagnostic>),
    #[error("package checksum mismatch: recorded {recorded}, computed {computed}")]
    Checksum { recorded: String, computed: String },
    #[error("unsupported format_version {0}")]
    Version(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TaskFsm {
    pub fn state(&self, id: &str) -> Option<&TaskState> {
        self.states.iter().find(|s| s.state_id == id)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, FsmError> {
        let fsm: TaskFsm = serde_json::from_slice(bytes)?;
        if fsm.format_version != FSM_FORMAT_VERSION {
            return Err(FsmError::Version(fsm.format_version));
        }
        Ok(fsm)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("fsm serializes");
        v.push(b'\n');
        v
    }
}

/// Linear machine `start → step-1 → … → step-n → done`, one state per
/// workflow step entered when the step's completion object is seen.
pub fn scaffold_from_workflow(workflow: &Workflow) -> Result<TaskFsm, FsmError> {
    let n = workflow.steps.len();
    let mut states = vec![TaskState {
        state_id: START_STATE.into(),
        kind: StateKind::Start,
        predicate: Predicate::Always,
        guidance: Guidance::speech(if n == 0 { "Nothing to do" } else { "Proceed to step 1" }),
    }];
    let mut classes: Vec<String> = Vec::new();
    for (i, step) in workflow.steps.iter().enumerate() {
        let object = step
            .completion_object
            .clone()
            .ok_or(FsmError::MissingCompletionObject { step_id: step.step_id })?;
        if !classes.contains(&object) {
            classes.push(object.clone());
        }
        let speech = if i + 1 < n {
            format!("Proceed to step {}", i + 2)
        } else {
            "Proceed to finish".to_string()
        };
        states.push(TaskState {
            state_id: format!("step-{}", i + 1),
            kind: StateKind::Normal,
            predicate: Predicate::Atom(Atom::new(&object, 1, 0.5)),
            guidance: Guidance::speech(&speech),
        });
    }
    states.push(TaskState {
        state_id: DONE_STATE.into(),
        kind: StateKind::Done,
        predicate: Predicate::Always,
        guidance: Guidance::speech("Task complete"),
    });
    let transitions = states
        .windows(2)
        .map(|w| Transition {
            from_state: w[0].state_id.clone(),
            to_state: w[1].state_id.clone(),
            priority: 0,
            debounce: DEFAULT_DEBOUNCE,
        })
        .collect();
    Ok(TaskFsm {
        format_version: FSM_FORMAT_VERSION,
        name: workflow.workflow_id.clone(),
        version: workflow.revision.to_string(),
        detector_classes: classes,
        states,
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::WorkingStep;

    pub(crate) fn workflow_with(objects: &[&str]) -> Workflow {
        let mut w = Workflow::new("toy", "toy.mp4", 30.0);
        for (i, o) in objects.iter().enumerate() {
            let mut s = WorkingStep::new(i, i as u32 * 100, i as u32 * 100 + 50);
            s.objects = vec![o.to_string()];
            s.completion_object = Some(o.to_string());
            w.steps.push(s);
        }
        w
    }

    #[test]
    fn scaffold_shape() {
        let fsm = scaffold_from_workflow(&workflow_with(&["a", "b", "c"])).unwrap();
        assert_eq!(fsm.states.len(), 5);
        assert_eq!(fsm.transitions.len(), 4);
        assert_eq!(fsm.states[1].guidance.speech, "Proceed to step 2");
        let empty = scaffold_from_workflow(&workflow_with(&[])).unwrap();
        let ids: Vec<_> = empty.states.iter().map(|s| s.state_id.as_str()).collect();
        assert_eq!(ids, vec!["start", "done"]);
        assert_eq!(empty.transitions.len(), 1);
    }

    #[test]
    fn scaffold_uses_composite_classes() {
        let fsm = scaffold_from_workflow(&workflow_with(&["bread", "ham-on-top-of-bread", "full-sandwich"])).unwrap();
        assert_eq!(
            fsm.states[2].predicate,
            Predicate::Atom(Atom::new("ham-on-top-of-bread", 1, 0.5))
        );
        assert_eq!(fsm.detector_classes, vec!["bread", "ham-on-top-of-bread", "full-sandwich"]);
    }

    #[test]
    fn scaffold_requires_completion_objects() {
        let mut w = workflow_with(&["a", "b"]);
        w.steps[1].completion_object = None;
        assert!(matches!(
            scaffold_from_workflow(&w),
            Err(FsmError::MissingCompletionObject { step_id: 1 })
        ));
    }

    #[test]
    fn document_round_trip() {
        let fsm = scaffold_from_workflow(&workflow_with(&["a"])).unwrap();
        assert_eq!(TaskFsm::from_json(&fsm.to_json()).unwrap(), fsm);
    }
}

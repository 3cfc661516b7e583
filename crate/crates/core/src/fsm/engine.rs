use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::compile::{run_program, TaskPackage};
use super::predicate::FrameSummary;
use super::{Guidance, StateKind};
use crate::geometry::BoundingBox;
use crate::trace::DetectionFrame;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("current state {0:?} does not exist in the package")]
    UnknownState(String),
    #[error("frame {frame} is not after the last processed frame {last}")]
    OutOfOrder { frame: u32, last: u32 },
    #[error("predicate program for transition to {0:?} is malformed")]
    BadProgram(String),
}

/// Per-session progress through a package.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineStatus {
    pub current_state: String,
    /// Consecutive-match counters for the current state's outgoing
    /// transitions, keyed by target state.
    pub counters: BTreeMap<String, u32>,
    /// `(frame_index, state_id)` for every state entered.
    pub history: Vec<(u32, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_frame: Option<u32>,
}

impl EngineStatus {
    pub fn new(package: &TaskPackage) -> Self {
        Self {
            current_state: package.start_state().to_string(),
            counters: BTreeMap::new(),
            history: Vec::new(),
            last_frame: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceMessage {
    pub frame_index: u32,
    pub from_state: String,
    pub state_id: String,
    pub kind: StateKind,
    pub guidance: Guidance,
    /// The entered state is a done state.
    pub terminal: bool,
}

/// Advances `status` by one frame of detections.
pub fn engine_step(
    package: &TaskPackage,
    mut status: EngineStatus,
    detections: &[BoundingBox],
    frame_index: u32,
) -> Result<(EngineStatus, Option<GuidanceMessage>), EngineError> {
    if let Some(last) = status.last_frame {
        if frame_index <= last {
            return Err(EngineError::OutOfOrder { frame: frame_index, last });
        }
    }
    let Some(row) = package.table.get(&status.current_state) else {
        return match package.fsm.state(&status.current_state) {
            Some(s) if s.kind == StateKind::Done => {
                status.last_frame = Some(frame_index);
                Ok((status, None))
            }
            _ => Err(EngineError::UnknownState(status.current_state)),
        };
    };
    status.last_frame = Some(frame_index);
    let summary = FrameSummary::from_boxes(detections);
    let mut winner = None;
    for t in row {
        match run_program(&t.program, &summary) {
            Some(true) => {
                winner = Some(t);
                break;
            }
            Some(false) => {}
            None => return Err(EngineError::BadProgram(t.to_state.clone())),
        }
    }
    let Some(t) = winner else {
        status.counters.clear();
        return Ok((status, None));
    };
    let count = status.counters.get(&t.to_state).copied().unwrap_or(0) + 1;
    status.counters.clear();
    if count < t.debounce {
        status.counters.insert(t.to_state.clone(), count);
        return Ok((status, None));
    }
    let target = package
        .fsm
        .state(&t.to_state)
        .ok_or_else(|| EngineError::UnknownState(t.to_state.clone()))?;
    let from = std::mem::replace(&mut status.current_state, target.state_id.clone());
    status.history.push((frame_index, target.state_id.clone()));
    let msg = GuidanceMessage {
        frame_index,
        from_state: from,
        state_id: target.state_id.clone(),
        kind: target.kind,
        guidance: target.guidance.clone(),
        terminal: target.kind == StateKind::Done,
    };
    Ok((status, Some(msg)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub entries: Vec<GuidanceMessage>,
    pub terminal: bool,
    pub final_state: String,
}

impl Timeline {
    pub fn visited(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.state_id.as_str()).collect()
    }
}

/// Replays a detection trace (object boxes of each frame) through a fresh
/// engine.
pub fn simulate(package: &TaskPackage, trace: &[DetectionFrame]) -> Result<Timeline, EngineError> {
    let mut status = EngineStatus::new(package);
    let mut entries = Vec::new();
    for frame in trace {
        let (next, msg) = engine_step(package, status, &frame.objects, frame.frame_index)?;
        status = next;
        entries.extend(msg);
    }
    let terminal = entries.last().is_some_and(|m| m.terminal);
    Ok(Timeline {
        entries,
        terminal,
        final_state: status.current_state,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::workflow_with;
    use super::super::*;
    use super::*;
    use proptest::prelude::*;

    fn frames(seq: &[&[&str]]) -> Vec<DetectionFrame> {
        seq.iter()
            .enumerate()
            .map(|(i, classes)| DetectionFrame {
                frame_index: i as u32,
                objects: classes.iter().map(|c| BoundingBox::labeled(0, 0, 10, 10, c).with_score(0.9)).collect(),
                ..Default::default()
            })
            .collect()
    }

    fn linear(objects: &[&str], debounce: u32) -> TaskPackage {
        let mut fsm = scaffold_from_workflow(&workflow_with(objects)).unwrap();
        fsm.transitions.iter_mut().for_each(|t| t.debounce = debounce);
        compile(&fsm).unwrap()
    }

    #[test]
    fn debounce_fires_on_third_frame() {
        let pkg = linear(&["a"], 3);
        let mut status = EngineStatus::new(&pkg);
        // start → step-1 requires "a"; leaving start is always possible
        let tl = simulate(&pkg, &frames(&[&["a"], &["a"], &["a"]])).unwrap();
        assert_eq!(tl.entries.len(), 1);
        assert_eq!(tl.entries[0].frame_index, 2);
        for f in 0..2 {
            let (s, msg) = engine_step(&pkg, status, &[BoundingBox::labeled(0, 0, 1, 1, "a")], f).unwrap();
            assert!(msg.is_none());
            assert_eq!(s.counters["step-1"], f + 1);
            status = s;
        }
    }

    #[test]
    fn unknown_classes_change_nothing() {
        let pkg = linear(&["a"], 1);
        let status = EngineStatus::new(&pkg);
        let (s, msg) = engine_step(&pkg, status.clone(), &[BoundingBox::labeled(0, 0, 1, 1, "zzz")], 0).unwrap();
        assert!(msg.is_none());
        assert_eq!(s.current_state, status.current_state);
        assert!(s.history.is_empty());
    }

    #[test]
    fn interruption_resets_counter() {
        let pkg = linear(&["a"], 3);
        let tl = simulate(&pkg, &frames(&[&["a"], &["a"], &[], &["a"], &["a"], &["a"]])).unwrap();
        assert_eq!(tl.entries[0].frame_index, 5);
    }

    #[test]
    fn errors() {
        let pkg = linear(&["a"], 1);
        let (s, _) = engine_step(&pkg, EngineStatus::new(&pkg), &[], 4).unwrap();
        assert_eq!(
            engine_step(&pkg, s, &[], 4).unwrap_err(),
            EngineError::OutOfOrder { frame: 4, last: 4 }
        );
        let mut bad = EngineStatus::new(&pkg);
        bad.current_state = "nowhere".into();
        assert!(matches!(engine_step(&pkg, bad, &[], 0), Err(EngineError::UnknownState(_))));
    }

    #[test]
    fn empty_trace() {
        let pkg = linear(&["a", "b"], 3);
        let tl = simulate(&pkg, &[]).unwrap();
        assert!(tl.entries.is_empty());
        assert!(!tl.terminal);
        assert_eq!(tl.final_state, "start");
    }

    #[test]
    fn linear_reaches_done() {
        let pkg = linear(&["a", "b"], 2);
        let tl = simulate(&pkg, &frames(&[&["a"], &["a"], &["b"], &["b"], &[], &[]])).unwrap();
        assert_eq!(tl.visited(), vec!["step-1", "step-2", "done"]);
        assert!(tl.terminal);
        assert_eq!(tl.entries[2].guidance.speech, "Task complete");
    }

    fn class_seq() -> impl Strategy<Value = Vec<Vec<String>>> {
        proptest::collection::vec(proptest::collection::vec("[abcd]", 0..3), 0..60)
    }

    fn owned(seq: &[Vec<String>]) -> Vec<DetectionFrame> {
        let refs: Vec<Vec<&str>> = seq.iter().map(|v| v.iter().map(String::as_str).collect()).collect();
        let slices: Vec<&[&str]> = refs.iter().map(Vec::as_slice).collect();
        frames(&slices)
    }

    proptest! {
        #[test]
        fn deterministic_and_monotone(seq in class_seq(), d in 1u32..5) {
            let trace = owned(&seq);
            let pkg = linear(&["a", "b", "c"], d);
            let a = simulate(&pkg, &trace).unwrap();
            prop_assert_eq!(&a, &simulate(&pkg, &trace).unwrap());
            let frames_fired: Vec<u32> = a.entries.iter().map(|e| e.frame_index).collect();
            prop_assert!(frames_fired.windows(2).all(|w| w[0] < w[1]));
            // raising debounce must not make any transition fire earlier
            let slower = simulate(&linear(&["a", "b", "c"], d + 1), &trace).unwrap();
            prop_assert!(slower.entries.len() <= a.entries.len());
            for (s, f) in slower.entries.iter().zip(&a.entries) {
                prop_assert_eq!(&s.state_id, &f.state_id);
                prop_assert!(s.frame_index >= f.frame_index);
            }
        }

        #[test]
        fn in_order_presentation_visits_workflow_order(n in 1usize..=6, d in 1u32..4, hold in 0u32..3) {
            let names: Vec<String> = (0..n).map(|i| format!("obj{i}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let pkg = linear(&refs, d);
            let mut seq = Vec::new();
            for name in &names {
                for _ in 0..(d + hold) {
                    seq.push(vec![name.clone()]);
                }
            }
            seq.extend(std::iter::repeat_n(vec![], d as usize));
            let tl = simulate(&pkg, &owned(&seq)).unwrap();
            let mut expected: Vec<String> = (1..=n).map(|k| format!("step-{k}")).collect();
            expected.push("done".into());
            prop_assert_eq!(tl.visited(), expected.iter().map(String::as_str).collect::<Vec<_>>());
            prop_assert!(tl.terminal);
        }
    }
}

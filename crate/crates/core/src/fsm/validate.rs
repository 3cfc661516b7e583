use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{StateKind, TaskFsm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_id: Option<String>,
}

impl Diagnostic {
    fn error(code: &str, message: String, state: Option<&str>) -> Self {
        Self {
            severity: Severity::Error,
            code: code.into(),
            message,
            state_id: state.map(str::to_string),
        }
    }

    fn warning(code: &str, message: String, state: Option<&str>) -> Self {
        Self {
            severity: Severity::Warning,
            code: code.into(),
            message,
            state_id: state.map(str::to_string),
        }
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

/// Structural checks on an authored machine. An empty list (or warnings
/// only) means it can be compiled.
pub fn validate(fsm: &TaskFsm) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for s in &fsm.states {
        if !ids.insert(s.state_id.as_str()) {
            out.push(Diagnostic::error(
                "duplicate_state",
                format!("state {:?} is declared more than once", s.state_id),
                Some(&s.state_id),
            ));
        }
    }

    let starts: Vec<_> = fsm.states.iter().filter(|s| s.kind == StateKind::Start).collect();
    match starts.len() {
        0 => out.push(Diagnostic::error("no_start", "no start state".into(), None)),
        1 => {}
        n => out.push(Diagnostic::error("multiple_start", format!("{n} start states; exactly one is allowed"), None)),
    }
    if !fsm.states.iter().any(|s| s.kind == StateKind::Done) {
        out.push(Diagnostic::error("no_done", "no done state".into(), None));
    }

    let mut outgoing: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in fsm.transitions.iter().enumerate() {
        for end in [&t.from_state, &t.to_state] {
            if !ids.contains(end.as_str()) {
                out.push(Diagnostic::error(
                    "unknown_state",
                    format!("transition {} → {} references undeclared state {end:?}", t.from_state, t.to_state),
                    Some(end),
                ));
            }
        }
        if t.debounce < 1 {
            out.push(Diagnostic::error(
                "bad_debounce",
                format!("transition {} → {} has debounce 0", t.from_state, t.to_state),
                Some(&t.from_state),
            ));
        }
        outgoing.entry(t.from_state.as_str()).or_default().push(i);
    }
    for (from, idxs) in &outgoing {
        let mut seen = BTreeMap::new();
        for &i in idxs {
            let t = &fsm.transitions[i];
            if let Some(prev) = seen.insert(t.priority, &t.to_state) {
                out.push(Diagnostic::error(
                    "duplicate_priority",
                    format!(
                        "transitions from {from:?} to {prev:?} and {:?} share priority {}",
                        t.to_state, t.priority
                    ),
                    Some(from),
                ));
            }
        }
    }

    let mut reachable = BTreeSet::new();
    if let Some(start) = starts.first() {
        let mut queue = VecDeque::from([start.state_id.as_str()]);
        reachable.insert(start.state_id.as_str());
        while let Some(s) = queue.pop_front() {
            for &i in outgoing.get(s).into_iter().flatten() {
                let to = fsm.transitions[i].to_state.as_str();
                if reachable.insert(to) {
                    queue.push_back(to);
                }
            }
        }
    }

    let classes: BTreeSet<&str> = fsm.detector_classes.iter().map(String::as_str).collect();
    for s in &fsm.states {
        let id = s.state_id.as_str();
        if !starts.is_empty() && !reachable.contains(id) {
            out.push(Diagnostic::error("unreachable_state", format!("state {id:?} cannot be reached from start"), Some(id)));
        }
        let has_out = outgoing.contains_key(id);
        match s.kind {
            StateKind::Done if has_out => out.push(Diagnostic::warning(
                "done_has_transitions",
                format!("done state {id:?} has outgoing transitions that never fire"),
                Some(id),
            )),
            StateKind::Start | StateKind::Normal if !has_out => out.push(Diagnostic::error(
                "dead_end",
                format!("state {id:?} has no outgoing transition"),
                Some(id),
            )),
            StateKind::Error => {
                let returns = outgoing
                    .get(id)
                    .into_iter()
                    .flatten()
                    .any(|&i| fsm.state(&fsm.transitions[i].to_state).is_some_and(|t| t.kind != StateKind::Error));
                if !returns {
                    out.push(Diagnostic::warning(
                        "error_without_return",
                        format!("error state {id:?} has no edge back to a correct state"),
                        Some(id),
                    ));
                }
                if s.guidance.speech.trim().is_empty() {
                    out.push(Diagnostic::warning(
                        "error_without_guidance",
                        format!("error state {id:?} carries no recovery guidance"),
                        Some(id),
                    ));
                }
            }
            _ => {}
        }
        for atom in s.predicate.atoms() {
            if !classes.contains(atom.class.as_str()) {
                out.push(Diagnostic::error(
                    "unknown_class",
                    format!("state {id:?} tests class {:?}, which the detector does not report", atom.class),
                    Some(id),
                ));
            }
            if atom.min_count < 1 || !(0.0..=1.0).contains(&atom.min_score) {
                out.push(Diagnostic::error(
                    "bad_atom",
                    format!("state {id:?} has atom on {:?} with min_count {} and min_score {}", atom.class, atom.min_count, atom.min_score),
                    Some(id),
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::tests::workflow_with;
    use super::super::*;
    use super::*;

    fn codes(d: &[Diagnostic]) -> Vec<&str> {
        d.iter().map(|x| x.code.as_str()).collect()
    }

    #[test]
    fn scaffold_is_clean() {
        let fsm = scaffold_from_workflow(&workflow_with(&["a", "b", "c"])).unwrap();
        assert!(validate(&fsm).is_empty());
    }

    #[test]
    fn orphan_state() {
        let mut fsm = scaffold_from_workflow(&workflow_with(&["a"])).unwrap();
        fsm.states.push(TaskState {
            state_id: "orphan".into(),
            kind: StateKind::Error,
            predicate: Predicate::atom("a"),
            guidance: Guidance::speech("undo"),
        });
        fsm.transitions.push(Transition {
            from_state: "orphan".into(),
            to_state: "step-1".into(),
            priority: 0,
            debounce: 1,
        });
        let d = validate(&fsm);
        assert_eq!(codes(&d), vec!["unreachable_state"]);
    }

    #[test]
    fn duplicate_priority() {
        let mut fsm = scaffold_from_workflow(&workflow_with(&["a", "b"])).unwrap();
        fsm.transitions.push(Transition {
            from_state: "step-1".into(),
            to_state: "done".into(),
            priority: 0,
            debounce: 3,
        });
        assert!(codes(&validate(&fsm)).contains(&"duplicate_priority"));
    }

    #[test]
    fn structural_errors() {
        let mut fsm = scaffold_from_workflow(&workflow_with(&["a"])).unwrap();
        fsm.detector_classes.clear();
        fsm.states.retain(|s| s.kind != StateKind::Done);
        fsm.transitions.retain(|t| t.to_state != "done");
        let d = validate(&fsm);
        let c = codes(&d);
        assert!(c.contains(&"no_done"));
        assert!(c.contains(&"dead_end"));
        assert!(c.contains(&"unknown_class"));
    }

    #[test]
    fn error_state_without_return_warns() {
        let mut fsm = scaffold_from_workflow(&workflow_with(&["a", "b"])).unwrap();
        fsm.states.push(TaskState {
            state_id: "oops".into(),
            kind: StateKind::Error,
            predicate: Predicate::atom("b"),
            guidance: Guidance::speech("take it off"),
        });
        fsm.transitions.push(Transition {
            from_state: "step-1".into(),
            to_state: "oops".into(),
            priority: 1,
            debounce: 3,
        });
        let d = validate(&fsm);
        assert_eq!(codes(&d), vec!["error_without_return"]);
        assert!(!has_errors(&d));
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;

/// At least `min_count` boxes of `class` with score ≥ `min_score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub class: String,
    #[serde(default = "one")]
    pub min_count: u32,
    #[serde(default)]
    pub min_score: f64,
}

fn one() -> u32 {
    1
}

impl Atom {
    pub fn new(class: &str, min_count: u32, min_score: f64) -> Self {
        Self {
            class: class.to_string(),
            min_count,
            min_score,
        }
    }
}

/// Appearance condition over detected classes. Negation applies to atoms only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Always,
    Atom(Atom),
    Not(Atom),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
}

impl Predicate {
    pub fn atom(class: &str) -> Self {
        Predicate::Atom(Atom::new(class, 1, 0.0))
    }

    pub fn not(class: &str) -> Self {
        Predicate::Not(Atom::new(class, 1, 0.0))
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        match self {
            Predicate::Always => vec![],
            Predicate::Atom(a) | Predicate::Not(a) => vec![a],
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().flat_map(Predicate::atoms).collect(),
        }
    }

    /// Tree-walking evaluation, used as the reference for compiled programs.
    pub fn holds(&self, frame: &FrameSummary) -> bool {
        match self {
            Predicate::Always => true,
            Predicate::Atom(a) => frame.satisfies(a),
            Predicate::Not(a) => !frame.satisfies(a),
            Predicate::And(ps) => ps.iter().all(|p| p.holds(frame)),
            Predicate::Or(ps) => ps.iter().any(|p| p.holds(frame)),
        }
    }
}

/// Scores of the detections in one frame, grouped by class. Boxes without a
/// score count as fully confident; unlabeled boxes are ignored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameSummary {
    scores: BTreeMap<String, Vec<f64>>,
}

impl FrameSummary {
    pub fn from_boxes(boxes: &[BoundingBox]) -> Self {
        let mut scores: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for b in boxes {
            if let Some(label) = &b.label {
                scores.entry(label.clone()).or_default().push(b.score.unwrap_or(1.0));
            }
        }
        Self { scores }
    }

    pub fn count(&self, class: &str, min_score: f64) -> u32 {
        self.scores
            .get(class)
            .map_or(0, |s| s.iter().filter(|&&v| v >= min_score).count() as u32)
    }

    pub fn satisfies(&self, atom: &Atom) -> bool {
        self.count(&atom.class, atom.min_score) >= atom.min_count
    }
}

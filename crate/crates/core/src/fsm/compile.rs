use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::predicate::{Atom, FrameSummary, Predicate};
use super::validate::{has_errors, validate};
use super::{FsmError, StateKind, TaskFsm, FSM_FORMAT_VERSION};

pub const PACKAGE_FILE: &str = "package.json";

/// One step of a postfix predicate program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Instr {
    /// Push true.
    Always,
    /// Push whether the frame has `min_count` boxes of `class` scoring ≥ `min_score`.
    Count { class: String, min_count: u32, min_score: f64 },
    /// Pop one, push its negation.
    Not,
    /// Pop `n`, push their conjunction.
    And { n: usize },
    /// Pop `n`, push their disjunction.
    Or { n: usize },
}

fn lower(p: &Predicate, out: &mut Vec<Instr>) {
    let count = |a: &Atom| Instr::Count {
        class: a.class.clone(),
        min_count: a.min_count,
        min_score: a.min_score,
    };
    match p {
        Predicate::Always => out.push(Instr::Always),
        Predicate::Atom(a) => out.push(count(a)),
        Predicate::Not(a) => {
            out.push(count(a));
            out.push(Instr::Not);
        }
        Predicate::And(ps) => {
            ps.iter().for_each(|q| lower(q, out));
            out.push(Instr::And { n: ps.len() });
        }
        Predicate::Or(ps) => {
            ps.iter().for_each(|q| lower(q, out));
            out.push(Instr::Or { n: ps.len() });
        }
    }
}

pub fn lower_predicate(p: &Predicate) -> Vec<Instr> {
    let mut out = Vec::new();
    lower(p, &mut out);
    out
}

/// Runs a program; `None` if it is malformed (stack underflow or leftovers).
pub fn run_program(program: &[Instr], frame: &FrameSummary) -> Option<bool> {
    let mut stack: Vec<bool> = Vec::with_capacity(8);
    for ins in program {
        match ins {
            Instr::Always => stack.push(true),
            Instr::Count { class, min_count, min_score } => stack.push(frame.count(class, *min_score) >= *min_count),
            Instr::Not => {
                let v = stack.pop()?;
                stack.push(!v);
            }
            Instr::And { n } | Instr::Or { n } => {
                if stack.len() < *n {
                    return None;
                }
                let args = stack.split_off(stack.len() - n);
                stack.push(if matches!(ins, Instr::And { .. }) {
                    args.iter().all(|&b| b)
                } else {
                    args.iter().any(|&b| b)
                });
            }
        }
    }
    match stack.as_slice() {
        [v] => Some(*v),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledTransition {
    pub to_state: String,
    pub priority: i32,
    pub debounce: u32,
    /// Entry predicate of `to_state`.
    pub program: Vec<Instr>,
}

#[derive(Serialize)]
struct PackageBody<'a> {
    format_version: u32,
    name: &'a str,
    version: &'a str,
    fsm: &'a TaskFsm,
    table: &'a BTreeMap<String, Vec<CompiledTransition>>,
}

/// Executable form of a task: the source machine plus, for every non-done
/// state, its outgoing transitions in firing order with lowered predicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPackage {
    pub format_version: u32,
    pub name: String,
    pub version: String,
    pub fsm: TaskFsm,
    pub table: BTreeMap<String, Vec<CompiledTransition>>,
    /// SHA-256 (hex) of the compact JSON of every other field.
    pub checksum: String,
}

impl TaskPackage {
    pub fn compute_checksum(&self) -> String {
        let body = PackageBody {
            format_version: self.format_version,
            name: &self.name,
            version: &self.version,
            fsm: &self.fsm,
            table: &self.table,
        };
        let bytes = serde_json::to_vec(&body).expect("package serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn start_state(&self) -> &str {
        self.fsm
            .states
            .iter()
            .find(|s| s.kind == StateKind::Start)
            .map(|s| s.state_id.as_str())
            .expect("compiled packages have a start state")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("package serializes");
        v.push(b'\n');
        v
    }

    /// Parses and verifies the checksum.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FsmError> {
        let pkg: TaskPackage = serde_json::from_slice(bytes)?;
        if pkg.format_version != FSM_FORMAT_VERSION {
            return Err(FsmError::Version(pkg.format_version));
        }
        let computed = pkg.compute_checksum();
        if computed != pkg.checksum {
            return Err(FsmError::Checksum {
                recorded: pkg.checksum,
                computed,
            });
        }
        Ok(pkg)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), FsmError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(PACKAGE_FILE), self.to_bytes())?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, FsmError> {
        Self::from_bytes(&fs::read(dir.join(PACKAGE_FILE))?)
    }
}

/// Validates and lowers a machine. Refuses when validation reports errors.
pub fn compile(fsm: &TaskFsm) -> Result<TaskPackage, FsmError> {
    let diags = validate(fsm);
    if has_errors(&diags) {
        return Err(FsmError::Invalid(diags));
    }
    let mut table = BTreeMap::new();
    for s in fsm.states.iter().filter(|s| s.kind != StateKind::Done) {
        let mut row: Vec<CompiledTransition> = fsm
            .transitions
            .iter()
            .filter(|t| t.from_state == s.state_id)
            .map(|t| CompiledTransition {
                to_state: t.to_state.clone(),
                priority: t.priority,
                debounce: t.debounce,
                program: lower_predicate(&fsm.state(&t.to_state).expect("validated").predicate),
            })
            .collect();
        row.sort_by_key(|c| c.priority);
        table.insert(s.state_id.clone(), row);
    }
    let mut pkg = TaskPackage {
        format_version: FSM_FORMAT_VERSION,
        name: fsm.name.clone(),
        version: fsm.version.clone(),
        fsm: fsm.clone(),
        table,
        checksum: String::new(),
    };
    pkg.checksum = pkg.compute_checksum();
    Ok(pkg)
}

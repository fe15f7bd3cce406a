use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{JumpTarget, Step, StepLabel, Workflow};

pub const DEFAULT_MAX_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    DanglingJumpTarget,
    DuplicateLabel,
    NonContiguousLabels,
    EmptyName,
    SelfJump,
    DepthExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

impl ViolationCode {
    pub fn severity(self) -> Severity {
        match self {
            ViolationCode::SelfJump => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub location: Option<StepLabel>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.location {
            Some(label) => write!(f, "{:?} at STEP {}: {}", self.code, label, self.message),
            None => write!(f, "{:?}: {}", self.code, self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationConfig {
    pub max_depth: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

pub fn validate_workflow(w: &Workflow) -> Vec<Violation> {
    validate_with(w, &ValidationConfig::default())
}

pub fn validate_with(w: &Workflow, cfg: &ValidationConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if w.is_empty() {
        out.push(Violation {
            code: ViolationCode::NonContiguousLabels,
            location: None,
            message: "workflow has no steps".to_string(),
        });
        return out;
    }

    check_siblings(w.steps(), None, &mut out);
    for step in w.preorder() {
        check_siblings(&step.children, Some(step), &mut out);
    }

    let mut labels = HashSet::new();
    let mut uids = HashSet::new();
    for step in w.preorder() {
        if !labels.insert(&step.label) {
            out.push(Violation {
                code: ViolationCode::DuplicateLabel,
                location: Some(step.label.clone()),
                message: format!("label {} is used by more than one step", step.label),
            });
        }
        if !uids.insert(step.uid) {
            out.push(Violation {
                code: ViolationCode::DuplicateLabel,
                location: Some(step.label.clone()),
                message: format!("uid {} is used by more than one step", step.uid),
            });
        }
        if step.name.is_empty() {
            out.push(Violation {
                code: ViolationCode::EmptyName,
                location: Some(step.label.clone()),
                message: "step name is empty".to_string(),
            });
        }
        for rule in &step.jumps {
            match &rule.target {
                JumpTarget::Step(uid) if *uid == step.uid => out.push(Violation {
                    code: ViolationCode::SelfJump,
                    location: Some(step.label.clone()),
                    message: format!("jump `{}` targets its own step", rule.condition),
                }),
                JumpTarget::Step(uid) if w.contains(*uid) => {}
                JumpTarget::Step(uid) => out.push(Violation {
                    code: ViolationCode::DanglingJumpTarget,
                    location: Some(step.label.clone()),
                    message: format!("jump `{}` targets missing step {uid}", rule.condition),
                }),
                JumpTarget::Label(label) => out.push(Violation {
                    code: ViolationCode::DanglingJumpTarget,
                    location: Some(step.label.clone()),
                    message: format!("jump `{}` targets unknown STEP {label}", rule.condition),
                }),
            }
        }
    }

    fn depth_walk(steps: &[Step], depth: usize, cfg: &ValidationConfig, out: &mut Vec<Violation>) {
        for step in steps {
            if depth > cfg.max_depth {
                out.push(Violation {
                    code: ViolationCode::DepthExceeded,
                    location: Some(step.label.clone()),
                    message: format!("nesting depth {depth} exceeds the limit of {}", cfg.max_depth),
                });
            }
            depth_walk(&step.children, depth + 1, cfg, out);
        }
    }
    depth_walk(w.steps(), 1, cfg, &mut out);
    out
}

/// One violation per sibling list whose labels are not `parent.1..parent.k`.
fn check_siblings(siblings: &[Step], parent: Option<&Step>, out: &mut Vec<Violation>) {
    let bad = siblings.iter().enumerate().find(|(i, s)| {
        let ordinal = *i as u32 + 1;
        let expected = match parent {
            Some(p) => p.label.child(ordinal),
            None => StepLabel::top(ordinal),
        };
        s.label != expected
    });
    if let Some((i, step)) = bad {
        let (location, scope) = match parent {
            Some(p) => (p.label.clone(), format!("children of STEP {}", p.label)),
            None => (step.label.clone(), "top-level steps".to_string()),
        };
        out.push(Violation {
            code: ViolationCode::NonContiguousLabels,
            location: Some(location),
            message: format!(
                "{scope} must be numbered contiguously; position {} is labelled {}",
                i + 1,
                step.label
            ),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::parse_workflow;

    fn codes(text: &str) -> Vec<(ViolationCode, Option<String>)> {
        validate_workflow(&parse_workflow(text).unwrap())
            .into_iter()
            .map(|v| (v.code, v.location.map(|l| l.to_string())))
            .collect()
    }

    #[test]
    fn valid_workflow_has_no_violations() {
        assert!(codes("STEP 1: [A][a][]\nSTEP 2: [B][b][[[x][Jump to STEP 1]]]").is_empty());
    }

    #[test]
    fn dangling_jump_reported_at_owner() {
        assert_eq!(
            codes("STEP 1: [A][a][]\nSTEP 2: [B][b][[[x][Jump to STEP 9]]]"),
            [(ViolationCode::DanglingJumpTarget, Some("2".into()))]
        );
    }

    #[test]
    fn child_gap_reported_at_parent() {
        assert_eq!(
            codes("STEP 1: [A][a][]\nSTEP 2: [B][b][]\nSTEP 3: [C][c][]\nSTEP 3.1: [D][d][]\nSTEP 3.3: [E][e][]"),
            [(ViolationCode::NonContiguousLabels, Some("3".into()))]
        );
        assert_eq!(
            codes("STEP 1: [A][a][]\nSTEP 3: [C][c][]"),
            [(ViolationCode::NonContiguousLabels, Some("3".into()))]
        );
    }

    #[test]
    fn empty_name_self_jump_and_depth() {
        assert_eq!(codes("STEP 1: [][a][]"), [(ViolationCode::EmptyName, Some("1".into()))]);
        let self_jump = validate_workflow(
            &parse_workflow("STEP 1: [A][a][[[x][Jump to STEP 1]]]").unwrap(),
        );
        assert_eq!(self_jump.len(), 1);
        assert_eq!(self_jump[0].code, ViolationCode::SelfJump);
        assert_eq!(self_jump[0].code.severity(), Severity::Warning);

        let deep = "STEP 1: [A][a][]\nSTEP 1.1: [B][b][]\nSTEP 1.1.1: [C][c][]\nSTEP 1.1.1.1: [D][d][]";
        assert_eq!(codes(deep), [(ViolationCode::DepthExceeded, Some("1.1.1.1".into()))]);
        let relaxed = validate_with(&parse_workflow(deep).unwrap(), &ValidationConfig { max_depth: 4 });
        assert!(relaxed.is_empty());
    }

    #[test]
    fn empty_workflow_is_invalid() {
        let v = validate_workflow(&Workflow::new("t"));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].location, None);
    }
}

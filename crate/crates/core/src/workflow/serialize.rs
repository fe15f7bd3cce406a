use std::fmt::Write as _;

use thiserror::Error;

use super::{validate_workflow, Violation, Workflow};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SerializeError {
    #[error("workflow has {} violation(s): {}", .0.len(), summarize(.0))]
    InvalidWorkflow(Vec<Violation>),
}

pub(crate) fn summarize(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Canonical text form: one `STEP <label>: [name][description][jumps]` line
/// per step in pre-order, joined by `\n`, no trailing newline.
pub fn serialize_workflow(w: &Workflow) -> Result<String, SerializeError> {
    let violations = validate_workflow(w);
    if !violations.is_empty() {
        return Err(SerializeError::InvalidWorkflow(violations));
    }
    Ok(render(w))
}

fn render(w: &Workflow) -> String {
    let mut out = String::new();
    for (i, step) in w.preorder().into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(
            out,
            "STEP {}: [{}][{}][",
            step.label, step.name, step.description
        );
        for (j, rule) in step.jumps.iter().enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            let target = w
                .target_label(&rule.target)
                .map(|l| l.to_string())
                .unwrap_or_default();
            let _ = write!(out, "[[if {}][Jump to STEP {}]]", rule.condition, target);
        }
        out.push(']');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::{parse_workflow, Condition, StepText};

    #[test]
    fn minimal_workflow() {
        let mut w = Workflow::new("t");
        w.add_step(None, StepText::new("A").unwrap(), StepText::new("B").unwrap())
            .unwrap();
        assert_eq!(serialize_workflow(&w).unwrap(), "STEP 1: [A][B][]");
    }

    #[test]
    fn jump_rules_render_canonically() {
        let mut w = Workflow::new("t");
        let one = w
            .add_step(None, StepText::new("A").unwrap(), StepText::new("a").unwrap())
            .unwrap();
        let two = w
            .add_step(None, StepText::new("B").unwrap(), StepText::new("b").unwrap())
            .unwrap();
        w.add_jump(two, Condition::new("lack of ideas").unwrap(), one).unwrap();
        let text = serialize_workflow(&w).unwrap();
        assert!(text.ends_with("[[[if lack of ideas][Jump to STEP 1]]]"), "{text}");
        w.add_jump(one, Condition::new("'done'").unwrap(), two).unwrap();
        w.add_jump(one, Condition::new("again").unwrap(), two).unwrap();
        let text = serialize_workflow(&w).unwrap();
        assert!(text.starts_with(
            "STEP 1: [A][a][[[if done][Jump to STEP 2]], [[if again][Jump to STEP 2]]]"
        ));
    }

    #[test]
    fn invalid_workflows_do_not_serialize() {
        let w = parse_workflow("STEP 1: [A][a][[[x][Jump to STEP 5]]]").unwrap();
        assert!(matches!(
            serialize_workflow(&w),
            Err(SerializeError::InvalidWorkflow(v)) if v.len() == 1
        ));
        assert!(serialize_workflow(&Workflow::new("empty")).is_err());
    }
}

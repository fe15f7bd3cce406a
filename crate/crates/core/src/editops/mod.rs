//! The low-code edit operations: validated, atomic transformations of a
//! [`Workflow`].
//!
//! Every operation works on a copy. Labels are renumbered afterwards and the
//! result must validate cleanly, otherwise the edit is rejected and the caller
//! keeps the original.

mod diff;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::workflow::{
    validate_with, Condition, JumpRule, JumpTarget, StepDraft, StepId, StepLabel, StepText,
    ValidationConfig, Violation, Workflow,
};

pub use diff::diff_workflows;

/// Insertion anchor for [`EditOp::AddStep`]: the front of the top-level list,
/// or directly after an existing step among its siblings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertAfter {
    Front,
    Step(StepId),
}

impl Serialize for InsertAfter {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            InsertAfter::Front => serializer.serialize_str("front"),
            InsertAfter::Step(uid) => serializer.collect_str(uid),
        }
    }
}

impl<'de> Deserialize<'de> for InsertAfter {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        InsertAfter::from_str(&raw).map_err(serde::de::Error::custom)
    }
}

impl FromStr for InsertAfter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "front" {
            Ok(InsertAfter::Front)
        } else {
            s.parse().map(InsertAfter::Step)
        }
    }
}

impl fmt::Display for InsertAfter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InsertAfter::Front => f.write_str("front"),
            InsertAfter::Step(uid) => write!(f, "{uid}"),
        }
    }
}

/// One low-code edit. JSON form is internally tagged by `op`, e.g.
/// `{"op":"Reorder","uid":"s2","new_position":0}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum EditOp {
    AddStep {
        after: InsertAfter,
        name: StepText,
        description: StepText,
    },
    RemoveStep {
        uid: StepId,
        #[serde(default)]
        cascade: bool,
    },
    ModifyStep {
        uid: StepId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        new_name: Option<StepText>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        new_description: Option<StepText>,
    },
    AddJump {
        uid: StepId,
        condition: Condition,
        target_uid: StepId,
    },
    RemoveJump {
        uid: StepId,
        index: usize,
    },
    Reorder {
        uid: StepId,
        new_position: usize,
    },
    SpliceExtension {
        parent_uid: StepId,
        substeps: Vec<StepDraft>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EditError {
    #[error("unknown step uid {0}")]
    UnknownUid(StepId),
    #[error("removing {uid} would orphan jumps from STEP {}", labels(.referrers))]
    WouldOrphanJump {
        uid: StepId,
        referrers: Vec<StepLabel>,
    },
    #[error("index {index} is out of range (length {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("a step cannot jump to itself ({0})")]
    SelfJumpRejected(StepId),
    #[error("extension would reach depth {depth}, limit is {max}")]
    DepthExceeded { depth: usize, max: usize },
    #[error("extension label mismatch: expected {expected}, found {found}")]
    LabelMismatch { expected: String, found: String },
    #[error("step {0} already has sub-steps")]
    AlreadyExtended(StepId),
    #[error("edit would leave the workflow invalid: {}", crate::workflow::serialize_summary(.0))]
    Invalid(Vec<Violation>),
}

fn labels(list: &[StepLabel]) -> String {
    list.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Applies `op` with the default validation settings.
pub fn apply_edit(w: &Workflow, op: &EditOp) -> Result<Workflow, EditError> {
    apply_edit_with(w, op, &ValidationConfig::default())
}

pub fn apply_edit_with(
    w: &Workflow,
    op: &EditOp,
    cfg: &ValidationConfig,
) -> Result<Workflow, EditError> {
    let mut next = w.clone();
    match op {
        EditOp::AddStep {
            after,
            name,
            description,
        } => add_step(&mut next, *after, name, description)?,
        EditOp::RemoveStep { uid, cascade } => remove_step(&mut next, *uid, *cascade)?,
        EditOp::ModifyStep {
            uid,
            new_name,
            new_description,
        } => {
            let step = next.find_mut(*uid).ok_or(EditError::UnknownUid(*uid))?;
            if let Some(name) = new_name {
                step.name = name.clone();
            }
            if let Some(description) = new_description {
                step.description = description.clone();
            }
        }
        EditOp::AddJump {
            uid,
            condition,
            target_uid,
        } => {
            if uid == target_uid {
                return Err(EditError::SelfJumpRejected(*uid));
            }
            if !next.contains(*target_uid) {
                return Err(EditError::UnknownUid(*target_uid));
            }
            next.find_mut(*uid)
                .ok_or(EditError::UnknownUid(*uid))?
                .jumps
                .push(JumpRule {
                    condition: condition.clone(),
                    target: JumpTarget::Step(*target_uid),
                });
        }
        EditOp::RemoveJump { uid, index } => {
            let step = next.find_mut(*uid).ok_or(EditError::UnknownUid(*uid))?;
            if *index >= step.jumps.len() {
                return Err(EditError::IndexOutOfRange {
                    index: *index,
                    len: step.jumps.len(),
                });
            }
            step.jumps.remove(*index);
        }
        EditOp::Reorder { uid, new_position } => {
            let siblings = next.siblings_mut(*uid).ok_or(EditError::UnknownUid(*uid))?;
            if *new_position >= siblings.len() {
                return Err(EditError::IndexOutOfRange {
                    index: *new_position,
                    len: siblings.len(),
                });
            }
            let from = siblings.iter().position(|s| s.uid == *uid).expect("uid is a sibling");
            let moved = siblings.remove(from);
            siblings.insert(*new_position, moved);
        }
        EditOp::SpliceExtension {
            parent_uid,
            substeps,
        } => splice(&mut next, *parent_uid, substeps, cfg)?,
    }
    next.renumber();
    let violations = validate_with(&next, cfg);
    if violations.is_empty() {
        Ok(next)
    } else {
        Err(EditError::Invalid(violations))
    }
}

fn add_step(
    w: &mut Workflow,
    after: InsertAfter,
    name: &StepText,
    description: &StepText,
) -> Result<(), EditError> {
    let index = match after {
        InsertAfter::Front => None,
        InsertAfter::Step(anchor) => {
            if !w.contains(anchor) {
                return Err(EditError::UnknownUid(anchor));
            }
            Some(anchor)
        }
    };
    let uid = w.allocate_uid();
    let step = crate::workflow::Step {
        uid,
        label: StepLabel::top(1),
        name: name.clone(),
        description: description.clone(),
        jumps: Vec::new(),
        children: Vec::new(),
    };
    match index {
        None => w.steps_mut().insert(0, step),
        Some(anchor) => {
            let siblings = w.siblings_mut(anchor).expect("anchor exists");
            let at = siblings.iter().position(|s| s.uid == anchor).expect("anchor is a sibling");
            siblings.insert(at + 1, step);
        }
    }
    Ok(())
}

fn remove_step(w: &mut Workflow, uid: StepId, cascade: bool) -> Result<(), EditError> {
    let doomed: HashSet<StepId> = w
        .find(uid)
        .ok_or(EditError::UnknownUid(uid))?
        .preorder()
        .into_iter()
        .map(|s| s.uid)
        .collect();
    let targets_doomed = |rule: &JumpRule| matches!(rule.target, JumpTarget::Step(t) if doomed.contains(&t));
    let referrers: Vec<StepLabel> = w
        .preorder()
        .into_iter()
        .filter(|s| !doomed.contains(&s.uid) && s.jumps.iter().any(targets_doomed))
        .map(|s| s.label.clone())
        .collect();
    if !referrers.is_empty() {
        if !cascade {
            return Err(EditError::WouldOrphanJump { uid, referrers });
        }
        let owners: Vec<StepId> = w.preorder().into_iter().map(|s| s.uid).collect();
        for owner in owners {
            if let Some(step) = w.find_mut(owner) {
                step.jumps.retain(|r| !targets_doomed(r));
            }
        }
    }
    let siblings = w.siblings_mut(uid).expect("uid exists");
    siblings.retain(|s| s.uid != uid);
    Ok(())
}

fn check_draft_labels(drafts: &[StepDraft], parent: &StepLabel) -> Result<usize, EditError> {
    let mut depth = 0;
    for (i, draft) in drafts.iter().enumerate() {
        let expected = parent.child(i as u32 + 1);
        if draft.label != expected {
            return Err(EditError::LabelMismatch {
                expected: expected.to_string(),
                found: draft.label.to_string(),
            });
        }
        depth = depth.max(1 + check_draft_labels(&draft.children, &draft.label)?);
    }
    Ok(depth)
}

fn splice(
    w: &mut Workflow,
    parent_uid: StepId,
    substeps: &[StepDraft],
    cfg: &ValidationConfig,
) -> Result<(), EditError> {
    let parent = w.find(parent_uid).ok_or(EditError::UnknownUid(parent_uid))?;
    if !parent.is_leaf() {
        return Err(EditError::AlreadyExtended(parent_uid));
    }
    let parent_label = parent.label.clone();
    if substeps.is_empty() {
        return Err(EditError::LabelMismatch {
            expected: parent_label.child(1).to_string(),
            found: "no sub-steps".to_string(),
        });
    }
    let added_depth = check_draft_labels(substeps, &parent_label)?;
    let depth = parent_label.depth() + added_depth;
    if depth > cfg.max_depth {
        return Err(EditError::DepthExceeded {
            depth,
            max: cfg.max_depth,
        });
    }
    let children: Vec<_> = substeps.iter().map(|d| w.materialize(d)).collect();
    w.find_mut(parent_uid).expect("parent exists").children = children;
    w.resolve_label_targets();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::{parse_extension, parse_workflow, serialize_workflow, ViolationCode};

    const ESSAY: &str = "STEP 1: [Brainstorming][Choose a topic or prompt, and generate ideas and organize them into an outline][]\n\
STEP 2: [Research][Gather information from credible sources, and take notes and organize them into the outline][[[if lack of ideas][Jump to STEP 1]]]\n\
STEP 3: [Write][write the text][]";

    fn essay() -> Workflow {
        parse_workflow(ESSAY).unwrap()
    }

    fn uid_at(w: &Workflow, label: &str) -> StepId {
        w.find_by_label(&label.parse().unwrap()).unwrap().uid()
    }

    #[test]
    fn add_step_front_and_after() {
        let w = essay();
        let front = apply_edit(
            &w,
            &EditOp::AddStep {
                after: InsertAfter::Front,
                name: StepText::new("Plan").unwrap(),
                description: StepText::new("p").unwrap(),
            },
        )
        .unwrap();
        assert_eq!(front.steps()[0].name().as_str(), "Plan");
        assert_eq!(front.steps().len(), 4);
        // the jump of old step 2 (now 3) still leads to old step 1 (now 2)
        let text = serialize_workflow(&front).unwrap();
        assert!(text.contains("STEP 3: [Research]"), "{text}");
        assert!(text.contains("[[[if lack of ideas][Jump to STEP 2]]]"), "{text}");

        let after = apply_edit(
            &w,
            &EditOp::AddStep {
                after: InsertAfter::Step(uid_at(&w, "1")),
                name: StepText::new("Mid").unwrap(),
                description: StepText::new("m").unwrap(),
            },
        )
        .unwrap();
        assert_eq!(after.steps()[1].name().as_str(), "Mid");
    }

    #[test]
    fn add_step_rejects_empty_name() {
        let err = apply_edit(
            &essay(),
            &EditOp::AddStep {
                after: InsertAfter::Front,
                name: StepText::default(),
                description: StepText::new("d").unwrap(),
            },
        )
        .unwrap_err();
        assert!(matches!(err, EditError::Invalid(v) if v[0].code == ViolationCode::EmptyName));
    }

    #[test]
    fn remove_step_cascade_semantics() {
        let w = essay();
        let err = apply_edit(&w, &EditOp::RemoveStep { uid: uid_at(&w, "1"), cascade: false });
        assert!(matches!(err, Err(EditError::WouldOrphanJump { .. })));

        let cascaded =
            apply_edit(&w, &EditOp::RemoveStep { uid: uid_at(&w, "1"), cascade: true }).unwrap();
        assert_eq!(cascaded.steps().len(), 2);
        assert!(cascaded.steps()[0].jumps().is_empty());
    }

    #[test]
    fn removing_last_step_is_rejected() {
        let w = parse_workflow("STEP 1: [A][a][]").unwrap();
        let err = apply_edit(&w, &EditOp::RemoveStep { uid: uid_at(&w, "1"), cascade: true });
        assert!(matches!(err, Err(EditError::Invalid(_))));
    }

    #[test]
    fn jump_edits() {
        let w = essay();
        let (one, three) = (uid_at(&w, "1"), uid_at(&w, "3"));
        assert_eq!(
            apply_edit(&w, &EditOp::AddJump { uid: one, condition: Condition::new("x").unwrap(), target_uid: one }),
            Err(EditError::SelfJumpRejected(one))
        );
        let added = apply_edit(
            &w,
            &EditOp::AddJump { uid: three, condition: Condition::new("needs more").unwrap(), target_uid: one },
        )
        .unwrap();
        assert_eq!(added.find(three).unwrap().jumps().len(), 1);
        assert_eq!(
            apply_edit(&added, &EditOp::RemoveJump { uid: three, index: 1 }),
            Err(EditError::IndexOutOfRange { index: 1, len: 1 })
        );
        let removed = apply_edit(&added, &EditOp::RemoveJump { uid: three, index: 0 }).unwrap();
        assert_eq!(removed, w);
        assert_eq!(
            apply_edit(&w, &EditOp::RemoveJump { uid: StepId::new(77), index: 0 }),
            Err(EditError::UnknownUid(StepId::new(77)))
        );
    }

    #[test]
    fn reorder_keeps_jump_on_uid() {
        let w = essay();
        let two = uid_at(&w, "2");
        let moved = apply_edit(&w, &EditOp::Reorder { uid: two, new_position: 0 }).unwrap();
        let text = serialize_workflow(&moved).unwrap();
        assert!(text.starts_with("STEP 1: [Research]"), "{text}");
        assert!(text.contains("STEP 1: [Research][Gather information from credible sources, and take notes and organize them into the outline][[[if lack of ideas][Jump to STEP 2]]]"));
        assert!(matches!(
            apply_edit(&w, &EditOp::Reorder { uid: two, new_position: 3 }),
            Err(EditError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn splice_extension_from_prompt_example() {
        let w = essay();
        let drafts = parse_extension(
            "STEP 3.1: [Write the title][write the title of the essay][]\n\
STEP 3.2: [Write the body][write the body of the essay][[[if lack of materials][Jump to STEP 2]]]\n\
STEP 3.3: [Write the conclusion][write the conclusion of the essay][]",
            &"3".parse().unwrap(),
        )
        .unwrap();
        let three = uid_at(&w, "3");
        let op = EditOp::SpliceExtension { parent_uid: three, substeps: drafts.clone() };
        let extended = apply_edit(&w, &op).unwrap();
        let parent = extended.find(three).unwrap();
        assert_eq!(parent.children().len(), 3);
        let body = &parent.children()[1];
        assert_eq!(body.jumps()[0].target, JumpTarget::Step(uid_at(&w, "2")));

        assert_eq!(apply_edit(&extended, &op), Err(EditError::AlreadyExtended(three)));

        let mut shifted = drafts.clone();
        shifted[0].label = "3.2".parse().unwrap();
        assert!(matches!(
            apply_edit(&w, &EditOp::SpliceExtension { parent_uid: three, substeps: shifted }),
            Err(EditError::LabelMismatch { .. })
        ));
    }

    #[test]
    fn splice_depth_limit() {
        let w = parse_workflow("STEP 1: [A][a][]\nSTEP 1.1: [B][b][]\nSTEP 1.1.1: [C][c][]").unwrap();
        let drafts = parse_extension("STEP 1.1.1.1: [D][d][]", &"1.1.1".parse().unwrap()).unwrap();
        let err = apply_edit(
            &w,
            &EditOp::SpliceExtension { parent_uid: uid_at(&w, "1.1.1"), substeps: drafts },
        );
        assert_eq!(err, Err(EditError::DepthExceeded { depth: 4, max: 3 }));
    }

    #[test]
    fn wire_format() {
        let op: EditOp =
            serde_json::from_str(r#"{"op":"Reorder","uid":"s2","new_position":0}"#).unwrap();
        assert_eq!(op, EditOp::Reorder { uid: StepId::new(2), new_position: 0 });
        let add: EditOp = serde_json::from_str(
            r#"{"op":"AddStep","after":"front","name":"N","description":"D"}"#,
        )
        .unwrap();
        assert!(matches!(add, EditOp::AddStep { after: InsertAfter::Front, .. }));
        let bad = serde_json::from_str::<EditOp>(
            r#"{"op":"ModifyStep","uid":"s1","new_name":"has [brackets]"}"#,
        );
        assert!(bad.is_err());
        let remove: EditOp = serde_json::from_str(r#"{"op":"RemoveStep","uid":"s4"}"#).unwrap();
        assert_eq!(remove, EditOp::RemoveStep { uid: StepId::new(4), cascade: false });
    }
}

use std::collections::{HashMap, HashSet};

use super::{apply_edit_with, EditOp, InsertAfter};
use crate::workflow::{JumpTarget, StepDraft, StepId, ValidationConfig, Workflow};

/// Derives edit operations that turn `before` into a workflow structurally
/// equal to `after`.
///
/// Steps are matched by uid. A uid present in both under the same parent is
/// kept; everything else is removed from `before` and re-created from
/// `after` (so re-parented steps get fresh uids). Both inputs must be valid.
pub fn diff_workflows(before: &Workflow, after: &Workflow) -> Vec<EditOp> {
    let mut diff = Differ {
        work: before.clone(),
        ops: Vec::new(),
        cfg: ValidationConfig {
            max_depth: usize::MAX,
        },
    };

    let mut kept: HashSet<StepId> = HashSet::new();
    for step in after.preorder() {
        let parent = after.parent_of(step.uid());
        let parent_kept = parent.is_none_or(|p| kept.contains(&p));
        if parent_kept && before.contains(step.uid()) && before.parent_of(step.uid()) == parent {
            kept.insert(step.uid());
        }
    }
    let mut mapped: HashMap<StepId, StepId> = kept.iter().map(|&uid| (uid, uid)).collect();

    // New steps first, so removals can never empty the workflow.
    for step in after.preorder() {
        if kept.contains(&step.uid()) {
            continue;
        }
        let parent = after.parent_of(step.uid()).map(|p| mapped[&p]);
        let op = match parent {
            Some(parent) => {
                let holder = diff.work.find(parent).expect("parent already placed");
                match holder.children().last() {
                    Some(last) => EditOp::AddStep {
                        after: InsertAfter::Step(last.uid()),
                        name: step.name().clone(),
                        description: step.description().clone(),
                    },
                    None => EditOp::SpliceExtension {
                        parent_uid: parent,
                        substeps: vec![StepDraft {
                            label: holder.label().child(1),
                            name: step.name().clone(),
                            description: step.description().clone(),
                            jumps: Vec::new(),
                            children: Vec::new(),
                        }],
                    },
                }
            }
            None => EditOp::AddStep {
                after: InsertAfter::Step(diff.work.steps().last().expect("non-empty").uid()),
                name: step.name().clone(),
                description: step.description().clone(),
            },
        };
        let uid = diff.work.peek_next_uid();
        diff.apply(op);
        mapped.insert(step.uid(), uid);
    }

    let live: HashSet<StepId> = mapped.values().copied().collect();
    let doomed: Vec<StepId> = diff
        .work
        .preorder()
        .into_iter()
        .filter(|s| !live.contains(&s.uid()))
        .filter(|s| diff.work.parent_of(s.uid()).is_none_or(|p| live.contains(&p)))
        .map(|s| s.uid())
        .collect();
    for uid in doomed {
        diff.apply(EditOp::RemoveStep { uid, cascade: true });
    }

    let mut parents: Vec<Option<StepId>> = vec![None];
    parents.extend(after.preorder().into_iter().filter(|s| !s.is_leaf()).map(|s| Some(s.uid())));
    for parent in parents {
        let wanted: Vec<StepId> = match parent {
            None => after.steps().iter().map(|s| mapped[&s.uid()]).collect(),
            Some(p) => after.find(p).expect("exists").children().iter().map(|s| mapped[&s.uid()]).collect(),
        };
        diff.reorder(parent.map(|p| mapped[&p]), &wanted);
    }

    for step in after.preorder() {
        let uid = mapped[&step.uid()];
        if !kept.contains(&step.uid()) {
            continue;
        }
        let current = diff.work.find(uid).expect("kept step exists");
        let new_name = (current.name() != step.name()).then(|| step.name().clone());
        let new_description =
            (current.description() != step.description()).then(|| step.description().clone());
        if new_name.is_some() || new_description.is_some() {
            diff.apply(EditOp::ModifyStep {
                uid,
                new_name,
                new_description,
            });
        }
    }

    for step in after.preorder() {
        let uid = mapped[&step.uid()];
        let wanted: Vec<(_, StepId)> = step
            .jumps()
            .iter()
            .filter_map(|rule| match rule.target {
                JumpTarget::Step(t) => Some((rule.condition.clone(), mapped[&t])),
                JumpTarget::Label(_) => None,
            })
            .collect();
        let current: Vec<(_, StepId)> = diff
            .work
            .find(uid)
            .expect("step exists")
            .jumps()
            .iter()
            .filter_map(|rule| match rule.target {
                JumpTarget::Step(t) => Some((rule.condition.clone(), t)),
                JumpTarget::Label(_) => None,
            })
            .collect();
        let shared = current.iter().zip(&wanted).take_while(|(a, b)| a == b).count();
        for index in (shared..current.len()).rev() {
            diff.apply(EditOp::RemoveJump { uid, index });
        }
        for (condition, target_uid) in &wanted[shared..] {
            diff.apply(EditOp::AddJump {
                uid,
                condition: condition.clone(),
                target_uid: *target_uid,
            });
        }
    }

    diff.ops
}

struct Differ {
    work: Workflow,
    ops: Vec<EditOp>,
    cfg: ValidationConfig,
}

impl Differ {
    fn apply(&mut self, op: EditOp) {
        self.work = apply_edit_with(&self.work, &op, &self.cfg)
            .unwrap_or_else(|e| panic!("diff produced an inapplicable edit {op:?}: {e}"));
        self.ops.push(op);
    }

    fn children(&self, parent: Option<StepId>) -> Vec<StepId> {
        match parent {
            None => self.work.steps().iter().map(|s| s.uid()).collect(),
            Some(p) => self
                .work
                .find(p)
                .expect("parent exists")
                .children()
                .iter()
                .map(|s| s.uid())
                .collect(),
        }
    }

    /// Brings the children of `parent` into `wanted` order: a single move when
    /// one suffices, otherwise fixing positions front to back.
    fn reorder(&mut self, parent: Option<StepId>, wanted: &[StepId]) {
        let current = self.children(parent);
        if current == wanted {
            return;
        }
        for &candidate in &current {
            let without = |list: &[StepId]| -> Vec<StepId> {
                list.iter().copied().filter(|&u| u != candidate).collect()
            };
            if without(&current) == without(wanted) {
                let new_position = wanted.iter().position(|&u| u == candidate).expect("same set");
                self.apply(EditOp::Reorder {
                    uid: candidate,
                    new_position,
                });
                return;
            }
        }
        for (position, &uid) in wanted.iter().enumerate() {
            if self.children(parent)[position] != uid {
                self.apply(EditOp::Reorder {
                    uid,
                    new_position: position,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::editops::apply_edit;
    use crate::workflow::{parse_workflow, StepText};

    fn sample() -> Workflow {
        parse_workflow(
            "STEP 1: [A][a][]\nSTEP 2: [B][b][[[x][Jump to STEP 1]]]\nSTEP 3: [C][c][]\nSTEP 3.1: [D][d][]\nSTEP 3.2: [E][e][]",
        )
        .unwrap()
    }

    fn fold(before: &Workflow, ops: &[EditOp]) -> Workflow {
        ops.iter().fold(before.clone(), |w, op| apply_edit(&w, op).unwrap())
    }

    #[test]
    fn identical_inputs_yield_no_ops() {
        let w = sample();
        assert!(diff_workflows(&w, &w).is_empty());
    }

    #[test]
    fn rename_is_one_modify() {
        let w = sample();
        let uid = w.steps()[1].uid();
        let after = apply_edit(
            &w,
            &EditOp::ModifyStep { uid, new_name: Some(StepText::new("Renamed").unwrap()), new_description: None },
        )
        .unwrap();
        let ops = diff_workflows(&w, &after);
        assert_eq!(ops.len(), 1);
        assert!(matches!(ops[0], EditOp::ModifyStep { .. }));
        assert!(fold(&w, &ops).same_structure(&after));
    }

    #[test]
    fn move_is_one_reorder() {
        let w = sample();
        for (uid, pos) in [(w.steps()[0].uid(), 2), (w.steps()[2].uid(), 0)] {
            let after = apply_edit(&w, &EditOp::Reorder { uid, new_position: pos }).unwrap();
            let ops = diff_workflows(&w, &after);
            assert_eq!(ops, vec![EditOp::Reorder { uid, new_position: pos }]);
            assert_eq!(fold(&w, &ops), after);
        }
    }

    #[test]
    fn unrelated_workflows_converge() {
        let a = sample();
        let b = parse_workflow(
            "STEP 1: [Z][z][]\nSTEP 1.1: [Y][y][[[back][Jump to STEP 2]]]\nSTEP 1.2: [X][x][]\nSTEP 2: [W][w][[[again][Jump to STEP 1.2]]]",
        )
        .unwrap();
        let ops = diff_workflows(&a, &b);
        assert!(fold(&a, &ops).same_structure(&b));
        let back = diff_workflows(&b, &a);
        assert!(fold(&b, &back).same_structure(&a));
    }
}

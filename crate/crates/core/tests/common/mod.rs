#![allow(dead_code)]

use lowcode_llm::editops::{EditOp, InsertAfter};
use lowcode_llm::workflow::{
    Condition, DraftJump, StepDraft, StepId, StepLabel, StepText, Workflow,
};
use rand::seq::SliceRandom;
use rand::Rng;

const WORDS: &[&str] = &[
    "research", "outline", "Write", "the", "essay", "guest", "room", "check", "a", "of",
    "STEP", "if", "Jump", "to", "3.1", "don't", "\"quoted\"", "'single'", "`tick`", "colon:",
    "comma,", "semi;", "(paren)", "{brace}", "50%", "naïve", "café", "→", "-", "x", "if,",
];

pub fn phrase<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn name<R: Rng>(rng: &mut R) -> StepText {
    StepText::new(phrase(rng, 1, 4)).unwrap()
}

pub fn description<R: Rng>(rng: &mut R) -> StepText {
    StepText::new(phrase(rng, 0, 8)).unwrap()
}

/// A condition whose stored form is non-empty.
pub fn condition<R: Rng>(rng: &mut R) -> Condition {
    loop {
        if let Ok(c) = Condition::new(phrase(rng, 1, 5)) {
            return c;
        }
    }
}

/// Random valid workflow: up to `max_steps` steps, depth at most `max_depth`,
/// at most three jumps per step, no self jumps.
pub fn workflow<R: Rng>(rng: &mut R, max_steps: usize, max_depth: usize) -> Workflow {
    let mut w = Workflow::new(phrase(rng, 1, 6));
    let count = rng.gen_range(1..=max_steps);
    let mut ids: Vec<(StepId, usize)> = Vec::new();
    for _ in 0..count {
        let parents: Vec<&(StepId, usize)> = ids.iter().filter(|(_, d)| *d < max_depth).collect();
        let parent = if parents.is_empty() || rng.gen_bool(0.5) {
            None
        } else {
            Some(**parents.choose(rng).unwrap())
        };
        let depth = parent.map_or(1, |(_, d)| d + 1);
        let uid = w
            .add_step(parent.map(|(p, _)| p), name(rng), description(rng))
            .unwrap();
        ids.push((uid, depth));
    }
    if ids.len() > 1 {
        for &(from, _) in &ids {
            for _ in 0..rng.gen_range(0..=3) {
                let (to, _) = *ids.choose(rng).unwrap();
                if to != from {
                    w.add_jump(from, condition(rng), to).unwrap();
                }
            }
        }
    }
    w
}

pub fn uids(w: &Workflow) -> Vec<StepId> {
    w.preorder().into_iter().map(|s| s.uid()).collect()
}

/// A uid that may or may not exist in `w`.
pub fn some_uid<R: Rng>(rng: &mut R, w: &Workflow) -> StepId {
    let ids = uids(w);
    if ids.is_empty() || rng.gen_bool(0.08) {
        StepId::new(rng.gen_range(1..200))
    } else {
        *ids.choose(rng).unwrap()
    }
}

fn drafts<R: Rng>(rng: &mut R, parent: &StepLabel, depth_left: usize, w: &Workflow) -> Vec<StepDraft> {
    let n = rng.gen_range(1..=3);
    (1..=n)
        .map(|i| {
            let mut label = parent.child(i);
            if rng.gen_bool(0.03) {
                label = parent.child(i + 1);
            }
            let children = if depth_left > 1 && rng.gen_bool(0.2) {
                drafts(rng, &label, depth_left - 1, w)
            } else {
                Vec::new()
            };
            let mut jumps = Vec::new();
            if rng.gen_bool(0.3) {
                if let Some(target) = w.preorder().choose(rng) {
                    jumps.push(DraftJump {
                        condition: condition(rng),
                        target: target.label().clone(),
                    });
                }
            }
            StepDraft {
                label,
                name: name(rng),
                description: description(rng),
                jumps,
                children,
            }
        })
        .collect()
}

/// A random edit against `w`, valid or not.
pub fn edit<R: Rng>(rng: &mut R, w: &Workflow) -> EditOp {
    let len = w.len().max(1);
    match rng.gen_range(0..100) {
        0..=17 => EditOp::AddStep {
            after: if rng.gen_bool(0.15) {
                InsertAfter::Front
            } else {
                InsertAfter::Step(some_uid(rng, w))
            },
            name: if rng.gen_bool(0.05) {
                StepText::new("").unwrap()
            } else {
                name(rng)
            },
            description: description(rng),
        },
        18..=31 => EditOp::RemoveStep {
            uid: some_uid(rng, w),
            cascade: rng.gen_bool(0.5),
        },
        32..=45 => EditOp::ModifyStep {
            uid: some_uid(rng, w),
            new_name: rng.gen_bool(0.6).then(|| name(rng)),
            new_description: rng.gen_bool(0.6).then(|| description(rng)),
        },
        46..=61 => EditOp::AddJump {
            uid: some_uid(rng, w),
            condition: condition(rng),
            target_uid: some_uid(rng, w),
        },
        62..=71 => EditOp::RemoveJump {
            uid: some_uid(rng, w),
            index: rng.gen_range(0..3),
        },
        72..=87 => EditOp::Reorder {
            uid: some_uid(rng, w),
            new_position: rng.gen_range(0..len.min(6) + 1),
        },
        _ => {
            let parent_uid = some_uid(rng, w);
            let parent = w
                .find(parent_uid)
                .map(|s| s.label().clone())
                .unwrap_or_else(|| StepLabel::top(1));
            EditOp::SpliceExtension {
                parent_uid,
                substeps: drafts(rng, &parent, 2, w),
            }
        }
    }
}

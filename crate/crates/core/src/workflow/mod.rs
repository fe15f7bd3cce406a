//! Workflow data model and the line-oriented SOP grammar.
//!
//! A [`Workflow`] is an ordered tree of [`Step`]s. Each step carries a stable
//! [`StepId`] and a display [`StepLabel`]; the label is recomputed whenever the
//! tree changes, while jump rules point at ids so they follow the step they
//! were attached to.

mod label;
mod parse;
mod repair;
mod serialize;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use label::{LabelError, StepLabel};
pub use parse::{parse_extension, parse_workflow, ParseError};
pub use repair::repair_raw_output;
pub use serialize::{serialize_workflow, SerializeError};
pub(crate) use serialize::summarize as serialize_summary;
pub use validate::{
    validate_with, validate_workflow, Severity, ValidationConfig, Violation, ViolationCode,
    DEFAULT_MAX_DEPTH,
};

/// Opaque step identifier. Assigned once and never reused within a workflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StepId(u64);

impl StepId {
    pub fn new(raw: u64) -> Self {
        Self(raw)
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl FromStr for StepId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('s')
            .and_then(|n| n.parse::<u64>().ok())
            .map(StepId)
            .ok_or_else(|| format!("invalid step uid `{s}`"))
    }
}

impl Serialize for StepId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StepId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("text must not contain square brackets: `{0}`")]
    Brackets(String),
    #[error("text must fit on one line: `{0}`")]
    Newline(String),
    #[error("condition must not be empty")]
    EmptyCondition,
}

fn check_text(raw: &str) -> Result<String, TextError> {
    let trimmed = raw.trim();
    if trimmed.contains(['[', ']']) {
        return Err(TextError::Brackets(trimmed.to_string()));
    }
    if trimmed.contains(['\n', '\r']) {
        return Err(TextError::Newline(trimmed.to_string()));
    }
    Ok(trimmed.to_string())
}

/// Step name or description. Single line, trimmed, bracket-free. May be empty;
/// an empty name is reported by validation rather than rejected here.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct StepText(String);

impl StepText {
    pub fn new(raw: impl AsRef<str>) -> Result<Self, TextError> {
        check_text(raw.as_ref()).map(Self)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for StepText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for StepText {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        StepText::new(String::deserialize(deserializer)?).map_err(serde::de::Error::custom)
    }
}

/// Free-text jump condition in normal form: leading `if ` and surrounding
/// quotes removed, non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Condition(String);

impl Condition {
    pub fn new(raw: impl AsRef<str>) -> Result<Self, TextError> {
        let checked = check_text(raw.as_ref())?;
        let normal = normalize_condition(&checked);
        if normal.is_empty() {
            return Err(TextError::EmptyCondition);
        }
        Ok(Self(normal))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Strips `if ` prefixes and matching quotes until nothing changes.
fn normalize_condition(raw: &str) -> String {
    let mut current = raw.trim();
    loop {
        let before = current;
        if current.get(..3).is_some_and(|p| p.eq_ignore_ascii_case("if ")) {
            current = current[3..].trim_start();
        }
        for quote in ['\'', '"', '`'] {
            if current.len() >= 2 && current.starts_with(quote) && current.ends_with(quote) {
                current = current[1..current.len() - 1].trim();
            }
        }
        if current.len() >= 2 && current.starts_with('`') && current.ends_with('\'') {
            current = current[1..current.len() - 1].trim();
        }
        if current == before {
            return current.to_string();
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Condition::new(String::deserialize(deserializer)?).map_err(serde::de::Error::custom)
    }
}

/// Where a jump rule leads. Rules parsed from text start out as labels and are
/// bound to ids once the whole workflow is known; a label that never resolves
/// stays `Label` and is reported as a dangling target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JumpTarget {
    #[serde(rename = "uid")]
    Step(StepId),
    #[serde(rename = "label")]
    Label(StepLabel),
}

/// Label, name, description and (condition, target label) per jump.
type OutlineRow<'a> = (StepLabel, &'a str, &'a str, Vec<(&'a str, Option<StepLabel>)>);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JumpRule {
    pub condition: Condition,
    pub target: JumpTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub(crate) uid: StepId,
    pub(crate) label: StepLabel,
    pub(crate) name: StepText,
    pub(crate) description: StepText,
    #[serde(default)]
    pub(crate) jumps: Vec<JumpRule>,
    #[serde(default)]
    pub(crate) children: Vec<Step>,
}

impl Step {
    pub fn uid(&self) -> StepId {
        self.uid
    }

    pub fn label(&self) -> &StepLabel {
        &self.label
    }

    pub fn name(&self) -> &StepText {
        &self.name
    }

    pub fn description(&self) -> &StepText {
        &self.description
    }

    pub fn jumps(&self) -> &[JumpRule] {
        &self.jumps
    }

    pub fn children(&self) -> &[Step] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// This step followed by all descendants, depth-first pre-order.
    pub fn preorder(&self) -> Vec<&Step> {
        let mut out = Vec::new();
        push_preorder(self, &mut out);
        out
    }

    fn first_leaf(&self) -> &Step {
        match self.children.first() {
            Some(child) => child.first_leaf(),
            None => self,
        }
    }

    fn last_leaf(&self) -> &Step {
        match self.children.last() {
            Some(child) => child.last_leaf(),
            None => self,
        }
    }
}

fn push_preorder<'a>(step: &'a Step, out: &mut Vec<&'a Step>) {
    out.push(step);
    for child in &step.children {
        push_preorder(child, out);
    }
}

/// Step in label-addressed form, as produced by the planner for an extension
/// and carried by splice edits. Jump targets are labels in the enclosing
/// workflow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDraft {
    pub label: StepLabel,
    pub name: StepText,
    pub description: StepText,
    #[serde(default)]
    pub jumps: Vec<DraftJump>,
    #[serde(default)]
    pub children: Vec<StepDraft>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftJump {
    pub condition: Condition,
    pub target: StepLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown step uid {0}")]
pub struct UnknownStep(pub StepId);

/// The structured plan: a task plus an ordered tree of steps.
#[derive(Debug, Clone, Eq, Serialize, Deserialize)]
pub struct Workflow {
    task: String,
    steps: Vec<Step>,
    next_uid: u64,
}

/// Equality covers the task and the step tree. The uid allocation counter is
/// bookkeeping and does not participate.
impl PartialEq for Workflow {
    fn eq(&self, other: &Self) -> bool {
        self.task == other.task && self.steps == other.steps
    }
}

impl Default for Workflow {
    fn default() -> Self {
        Self::new("")
    }
}

impl Workflow {
    pub fn new(task: impl Into<String>) -> Self {
        Self {
            task: task.into(),
            steps: Vec::new(),
            next_uid: 1,
        }
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn set_task(&mut self, task: impl Into<String>) {
        self.task = task.into();
    }

    pub fn with_task(mut self, task: impl Into<String>) -> Self {
        self.task = task.into();
        self
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Every step, depth-first pre-order.
    pub fn preorder(&self) -> Vec<&Step> {
        let mut out = Vec::new();
        for step in &self.steps {
            push_preorder(step, &mut out);
        }
        out
    }

    /// Leaf steps in execution order.
    pub fn leaves(&self) -> Vec<&Step> {
        self.preorder().into_iter().filter(|s| s.is_leaf()).collect()
    }

    pub fn len(&self) -> usize {
        self.preorder().len()
    }

    pub fn find(&self, uid: StepId) -> Option<&Step> {
        self.preorder().into_iter().find(|s| s.uid == uid)
    }

    pub fn find_by_label(&self, label: &StepLabel) -> Option<&Step> {
        self.preorder().into_iter().find(|s| &s.label == label)
    }

    pub fn contains(&self, uid: StepId) -> bool {
        self.find(uid).is_some()
    }

    /// Display label a jump target currently renders as.
    pub fn target_label(&self, target: &JumpTarget) -> Option<StepLabel> {
        match target {
            JumpTarget::Step(uid) => self.find(*uid).map(|s| s.label.clone()),
            JumpTarget::Label(label) => Some(label.clone()),
        }
    }

    /// Parent of `uid`, `None` for top-level steps.
    pub fn parent_of(&self, uid: StepId) -> Option<StepId> {
        self.preorder()
            .into_iter()
            .find(|s| s.children.iter().any(|c| c.uid == uid))
            .map(|s| s.uid)
    }

    /// First leaf of the subtree rooted at `uid`.
    pub fn first_leaf(&self, uid: StepId) -> Option<&Step> {
        self.find(uid).map(Step::first_leaf)
    }

    /// Last leaf of the subtree rooted at `uid`.
    pub fn last_leaf(&self, uid: StepId) -> Option<&Step> {
        self.find(uid).map(Step::last_leaf)
    }

    /// Appends a step under `parent` (or at top level) and returns its uid.
    pub fn add_step(
        &mut self,
        parent: Option<StepId>,
        name: StepText,
        description: StepText,
    ) -> Result<StepId, UnknownStep> {
        let uid = self.allocate_uid();
        let step = Step {
            uid,
            label: StepLabel::top(1),
            name,
            description,
            jumps: Vec::new(),
            children: Vec::new(),
        };
        match parent {
            None => self.steps.push(step),
            Some(parent) => self
                .find_mut(parent)
                .ok_or(UnknownStep(parent))?
                .children
                .push(step),
        }
        self.renumber();
        Ok(uid)
    }

    /// Appends a jump rule on `from` leading to `to`. No validity checks
    /// beyond uid existence; use the edit operations for checked changes.
    pub fn add_jump(
        &mut self,
        from: StepId,
        condition: Condition,
        to: StepId,
    ) -> Result<(), UnknownStep> {
        if !self.contains(to) {
            return Err(UnknownStep(to));
        }
        self.find_mut(from).ok_or(UnknownStep(from))?.jumps.push(JumpRule {
            condition,
            target: JumpTarget::Step(to),
        });
        Ok(())
    }

    /// Compares everything except uids: labels, texts, and jump targets by
    /// the label they render as.
    pub fn same_structure(&self, other: &Workflow) -> bool {
        self.task == other.task && self.outline() == other.outline()
    }

    fn outline(&self) -> Vec<OutlineRow<'_>> {
        self.preorder()
            .into_iter()
            .map(|s| {
                let jumps = s
                    .jumps
                    .iter()
                    .map(|j| (j.condition.as_str(), self.target_label(&j.target)))
                    .collect();
                (s.label.clone(), s.name.as_str(), s.description.as_str(), jumps)
            })
            .collect()
    }

    pub(crate) fn peek_next_uid(&self) -> StepId {
        StepId(self.next_uid)
    }

    pub(crate) fn allocate_uid(&mut self) -> StepId {
        let uid = StepId(self.next_uid);
        self.next_uid += 1;
        uid
    }

    pub(crate) fn steps_mut(&mut self) -> &mut Vec<Step> {
        &mut self.steps
    }

    pub(crate) fn find_mut(&mut self, uid: StepId) -> Option<&mut Step> {
        fn walk(steps: &mut [Step], uid: StepId) -> Option<&mut Step> {
            for step in steps {
                if step.uid == uid {
                    return Some(step);
                }
                if let Some(found) = walk(&mut step.children, uid) {
                    return Some(found);
                }
            }
            None
        }
        walk(&mut self.steps, uid)
    }

    /// Sibling list that holds `uid`.
    pub(crate) fn siblings_mut(&mut self, uid: StepId) -> Option<&mut Vec<Step>> {
        match self.parent_of(uid) {
            Some(parent) => self.find_mut(parent).map(|p| &mut p.children),
            None if self.steps.iter().any(|s| s.uid == uid) => Some(&mut self.steps),
            None => None,
        }
    }

    /// Builds a workflow from already-formed steps, keeping their labels.
    pub(crate) fn from_parts(task: String, steps: Vec<Step>) -> Self {
        let next_uid = {
            let mut max = 0;
            for step in &steps {
                for s in step.preorder() {
                    max = max.max(s.uid.0);
                }
            }
            max + 1
        };
        Self {
            task,
            steps,
            next_uid,
        }
    }

    /// Rewrites display labels as contiguous `1..n` at every level.
    pub(crate) fn renumber(&mut self) {
        fn walk(steps: &mut [Step], parent: Option<&StepLabel>) {
            for (i, step) in steps.iter_mut().enumerate() {
                let ordinal = i as u32 + 1;
                step.label = match parent {
                    Some(p) => p.child(ordinal),
                    None => StepLabel::top(ordinal),
                };
                let label = step.label.clone();
                walk(&mut step.children, Some(&label));
            }
        }
        walk(&mut self.steps, None);
    }

    /// Binds label-addressed jump targets to the uid of the step currently
    /// carrying that label. Unknown labels are left in place.
    pub(crate) fn resolve_label_targets(&mut self) {
        let index: Vec<(StepLabel, StepId)> = self
            .preorder()
            .into_iter()
            .map(|s| (s.label.clone(), s.uid))
            .collect();
        fn walk(steps: &mut [Step], index: &[(StepLabel, StepId)]) {
            for step in steps {
                for rule in &mut step.jumps {
                    if let JumpTarget::Label(label) = &rule.target {
                        if let Some((_, uid)) = index.iter().find(|(l, _)| l == label) {
                            rule.target = JumpTarget::Step(*uid);
                        }
                    }
                }
                walk(&mut step.children, index);
            }
        }
        walk(&mut self.steps, &index);
    }

    /// Converts a draft subtree into steps with fresh uids. Jump targets stay
    /// label-addressed until [`Self::resolve_label_targets`] runs.
    pub(crate) fn materialize(&mut self, draft: &StepDraft) -> Step {
        let uid = self.allocate_uid();
        let children = draft.children.iter().map(|c| self.materialize(c)).collect();
        Step {
            uid,
            label: draft.label.clone(),
            name: draft.name.clone(),
            description: draft.description.clone(),
            jumps: draft
                .jumps
                .iter()
                .map(|j| JumpRule {
                    condition: j.condition.clone(),
                    target: JumpTarget::Label(j.target.clone()),
                })
                .collect(),
            children,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(s: &str) -> StepText {
        StepText::new(s).unwrap()
    }

    #[test]
    fn step_text_rejects_brackets_and_newlines() {
        assert!(StepText::new("a [b]").is_err());
        assert!(StepText::new("a\nb").is_err());
        assert_eq!(StepText::new("  padded ").unwrap().as_str(), "padded");
    }

    #[test]
    fn condition_normal_form() {
        assert_eq!(Condition::new("if 'condition1'").unwrap().as_str(), "condition1");
        assert_eq!(Condition::new("If lack of ideas").unwrap().as_str(), "lack of ideas");
        assert_eq!(Condition::new("lack of ideas").unwrap().as_str(), "lack of ideas");
        assert_eq!(Condition::new("if if x").unwrap().as_str(), "x");
        assert_eq!(Condition::new("`condition1'").unwrap().as_str(), "condition1");
        assert_eq!(Condition::new("iffy weather").unwrap().as_str(), "iffy weather");
        assert!(Condition::new("if ''").is_err());
        assert_eq!(Condition::new("if ").unwrap().as_str(), "if");
        assert!(Condition::new("''").is_err());
    }

    #[test]
    fn condition_normalization_is_idempotent() {
        for raw in ["if 'a'", "\"if b\"", "if if 'c'", "d's thing", "'e"] {
            let once = Condition::new(raw).unwrap();
            let twice = Condition::new(once.as_str()).unwrap();
            assert_eq!(once, twice, "{raw}");
        }
    }

    #[test]
    fn builder_assigns_labels_and_unique_uids() {
        let mut w = Workflow::new("t");
        let a = w.add_step(None, text("A"), text("a")).unwrap();
        let b = w.add_step(None, text("B"), text("b")).unwrap();
        let b1 = w.add_step(Some(b), text("B1"), text("b1")).unwrap();
        assert_ne!(a, b);
        assert_eq!(w.find(b1).unwrap().label().to_string(), "2.1");
        assert_eq!(w.parent_of(b1), Some(b));
        assert_eq!(w.parent_of(a), None);
        assert_eq!(w.leaves().len(), 2);
        w.add_jump(b1, Condition::new("x").unwrap(), a).unwrap();
        assert_eq!(
            w.target_label(&w.find(b1).unwrap().jumps()[0].target),
            Some(StepLabel::top(1))
        );
    }

    #[test]
    fn step_id_round_trips_through_text() {
        let id = StepId::new(42);
        assert_eq!(id.to_string(), "s42");
        assert_eq!("s42".parse::<StepId>().unwrap(), id);
        assert!("42".parse::<StepId>().is_err());
    }
}

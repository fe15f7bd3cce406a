use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use super::{
    build_executing_messages, build_extend_messages, build_planning_messages, ChatClient,
    ChatMessage, ConfirmedSop, LlmClientConfig, LlmError, PromptBundle, PromptError,
};
use crate::editops::{apply_edit_with, EditError, EditOp};
use crate::workflow::{
    parse_extension, parse_workflow, repair_raw_output, serialize_workflow, validate_with,
    ParseError, StepLabel, ValidationConfig, Workflow,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanningError {
    #[error("task must not be empty")]
    EmptyTask,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("planning failed: {}", .problems.join("; "))]
    Failed { raw: String, problems: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtendError {
    #[error("task must not be empty")]
    EmptyTask,
    #[error("STEP {0} does not exist in the workflow")]
    UnknownTarget(StepLabel),
    #[error("STEP {0} already has sub-steps")]
    AlreadyExtended(StepLabel),
    #[error("sub-steps of STEP {target} would exceed the depth limit of {max}")]
    DepthLimit { target: StepLabel, max: usize },
    #[error("extension label mismatch: expected sub-steps of STEP {target}, found STEP {found}")]
    LabelMismatch { target: StepLabel, found: String },
    #[error("workflow is not valid: {0}")]
    InvalidWorkflow(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("extension failed: {}", .problems.join("; "))]
    PlanningFailed { raw: String, problems: Vec<String> },
}

/// Planning, extension and execution against one chat backend.
#[derive(Clone)]
pub struct LlmGateway {
    client: Arc<dyn ChatClient>,
    bundle: PromptBundle,
    planning_temperature: f64,
    executing_temperature: f64,
    validation: ValidationConfig,
}

impl LlmGateway {
    pub fn new(client: Arc<dyn ChatClient>) -> Self {
        let defaults = LlmClientConfig::default();
        Self {
            client,
            bundle: PromptBundle::default(),
            planning_temperature: defaults.temperature,
            executing_temperature: defaults.executing_temperature,
            validation: ValidationConfig::default(),
        }
    }

    pub fn with_bundle(mut self, bundle: PromptBundle) -> Self {
        self.bundle = bundle;
        self
    }

    /// Takes both temperatures from `cfg`.
    pub fn with_temperatures(mut self, cfg: &LlmClientConfig) -> Self {
        self.planning_temperature = cfg.temperature;
        self.executing_temperature = cfg.executing_temperature;
        self
    }

    pub fn with_validation(mut self, validation: ValidationConfig) -> Self {
        self.validation = validation;
        self
    }

    pub fn bundle(&self) -> &PromptBundle {
        &self.bundle
    }

    pub fn validation(&self) -> &ValidationConfig {
        &self.validation
    }

    /// Asks for a workflow for `task`. A reply that fails to parse or
    /// validate gets one corrective follow-up listing the problems.
    pub fn plan_workflow(&self, task: &str) -> Result<Workflow, PlanningError> {
        let mut messages =
            build_planning_messages(&self.bundle, task).map_err(|_| PlanningError::EmptyTask)?;
        let raw = self.client.complete(&messages, self.planning_temperature)?;
        let problems = match self.interpret_plan(&raw) {
            Ok(w) => return Ok(w.with_task(task)),
            Err(problems) => problems,
        };
        tracing::warn!(?problems, "planning reply rejected, retrying once");
        messages.push(ChatMessage::assistant(raw));
        messages.push(ChatMessage::user(corrective_message(&problems)));
        let raw = self.client.complete(&messages, self.planning_temperature)?;
        match self.interpret_plan(&raw) {
            Ok(w) => Ok(w.with_task(task)),
            Err(problems) => Err(PlanningError::Failed { raw, problems }),
        }
    }

    fn interpret_plan(&self, raw: &str) -> Result<Workflow, Vec<String>> {
        let repaired = repair_raw_output(raw);
        let w = parse_workflow(&repaired).map_err(|e| vec![e.to_string()])?;
        let violations = validate_with(&w, &self.validation);
        if violations.is_empty() {
            Ok(w)
        } else {
            Err(violations.iter().map(ToString::to_string).collect())
        }
    }

    /// Asks for sub-steps of the leaf labelled `target` and returns the
    /// splice that would attach them, already checked against `w`.
    pub fn propose_extension(&self, w: &Workflow, target: &StepLabel) -> Result<EditOp, ExtendError> {
        let step = w
            .find_by_label(target)
            .ok_or_else(|| ExtendError::UnknownTarget(target.clone()))?;
        if !step.is_leaf() {
            return Err(ExtendError::AlreadyExtended(target.clone()));
        }
        if target.depth() >= self.validation.max_depth {
            return Err(ExtendError::DepthLimit {
                target: target.clone(),
                max: self.validation.max_depth,
            });
        }
        let parent_uid = step.uid();
        let prior = serialize_workflow(w).map_err(|e| ExtendError::InvalidWorkflow(e.to_string()))?;
        let messages = build_extend_messages(&self.bundle, w.task(), &prior, target).map_err(
            |e| match e {
                PromptError::EmptyTask => ExtendError::EmptyTask,
                PromptError::UnknownTarget(l) => ExtendError::UnknownTarget(l),
                other => ExtendError::InvalidWorkflow(other.to_string()),
            },
        )?;
        let raw = self.client.complete(&messages, self.planning_temperature)?;
        let substeps = match parse_extension(&repair_raw_output(&raw), target) {
            Ok(drafts) => drafts,
            Err(ParseError::OutsideTarget { label, .. }) => {
                return Err(ExtendError::LabelMismatch {
                    target: target.clone(),
                    found: label.to_string(),
                })
            }
            Err(e) => {
                return Err(ExtendError::PlanningFailed {
                    raw,
                    problems: vec![e.to_string()],
                })
            }
        };
        let op = EditOp::SpliceExtension {
            parent_uid,
            substeps,
        };
        match apply_edit_with(w, &op, &self.validation) {
            Ok(_) => Ok(op),
            Err(EditError::LabelMismatch { found, .. }) => Err(ExtendError::LabelMismatch {
                target: target.clone(),
                found,
            }),
            Err(EditError::AlreadyExtended(_)) => Err(ExtendError::AlreadyExtended(target.clone())),
            Err(EditError::Invalid(violations)) => Err(ExtendError::PlanningFailed {
                raw,
                problems: violations.iter().map(ToString::to_string).collect(),
            }),
            Err(other) => Err(ExtendError::PlanningFailed {
                raw,
                problems: vec![other.to_string()],
            }),
        }
    }

    pub fn extend_step(&self, w: &Workflow, target: &StepLabel) -> Result<Workflow, ExtendError> {
        let op = self.propose_extension(w, target)?;
        Ok(apply_edit_with(w, &op, &self.validation).expect("proposal was checked"))
    }

    /// One executing-model reply. `history` ends with the user's latest turn.
    pub fn respond(
        &self,
        task: &str,
        sop: &ConfirmedSop,
        history: &[ChatMessage],
    ) -> Result<String, LlmError> {
        let messages = build_executing_messages(&self.bundle, task, sop, history);
        self.client.complete(&messages, self.executing_temperature)
    }
}

fn corrective_message(problems: &[String]) -> String {
    let mut out = String::from("The SOP above does not follow the required format:\n");
    for p in problems {
        let _ = writeln!(out, "- {p}");
    }
    out.push_str("Reply again with the complete corrected SOP only, starting with STEP 1.");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockChatClient, Role};

    const TWO_STEPS: &str = "STEP 1: [Brainstorming][Choose a topic][]\nSTEP 2: [Research][Gather information][[[if lack of ideas][Jump to STEP 1]]]";

    fn gateway(mock: &Arc<MockChatClient>) -> LlmGateway {
        LlmGateway::new(mock.clone())
    }

    #[test]
    fn plan_sets_task_and_uses_planning_temperature() {
        let mock = Arc::new(MockChatClient::scripted([TWO_STEPS]));
        let w = gateway(&mock).plan_workflow("essay").unwrap();
        assert_eq!(w.task(), "essay");
        assert_eq!(w.steps().len(), 2);
        assert_eq!(mock.requests()[0].temperature, 0.0);
    }

    #[test]
    fn corrective_retry_then_success() {
        let mock = Arc::new(MockChatClient::scripted([
            "STEP 1: [A][a][[[x][Jump to STEP 9]]]",
            TWO_STEPS,
        ]));
        let w = gateway(&mock).plan_workflow("t").unwrap();
        assert_eq!(w.len(), 2);
        let second = &mock.requests()[1].messages;
        assert_eq!(second.len(), 4);
        assert_eq!(second[2].role, Role::Assistant);
        assert!(second[3].content.contains("STEP 9"), "{}", second[3].content);
    }

    #[test]
    fn two_bad_replies_fail() {
        let mock = Arc::new(MockChatClient::scripted(["no steps here", "still nothing"]));
        match gateway(&mock).plan_workflow("t") {
            Err(PlanningError::Failed { raw, problems }) => {
                assert_eq!(raw, "still nothing");
                assert!(!problems.is_empty());
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(mock.request_count(), 2);
    }

    #[test]
    fn transport_failure_is_not_retried_here() {
        let mock = Arc::new(MockChatClient::new());
        mock.push_failure(LlmError::transport("down"));
        assert_eq!(
            gateway(&mock).plan_workflow("t"),
            Err(PlanningError::Llm(LlmError::transport("down")))
        );
    }

    #[test]
    fn extension_errors() {
        let w = parse_workflow("STEP 1: [A][a][]\nSTEP 2: [B][b][]\nSTEP 2.1: [C][c][]")
            .unwrap()
            .with_task("t");
        let mock = Arc::new(MockChatClient::scripted(["STEP 2.1: [X][x][]"]));
        let gw = gateway(&mock);
        assert_eq!(
            gw.extend_step(&w, &StepLabel::top(2)),
            Err(ExtendError::AlreadyExtended(StepLabel::top(2)))
        );
        assert_eq!(
            gw.extend_step(&w, &StepLabel::top(5)),
            Err(ExtendError::UnknownTarget(StepLabel::top(5)))
        );
        assert!(matches!(
            gw.extend_step(&w, &StepLabel::top(1)),
            Err(ExtendError::LabelMismatch { .. })
        ));
        assert_eq!(mock.request_count(), 1);
        let deep = parse_workflow("STEP 1: [A][a][]\nSTEP 1.1: [B][b][]\nSTEP 1.1.1: [C][c][]").unwrap();
        assert!(matches!(
            gw.extend_step(&deep.with_task("t"), &"1.1.1".parse().unwrap()),
            Err(ExtendError::DepthLimit { max: 3, .. })
        ));
        assert_eq!(mock.request_count(), 1);
    }
}

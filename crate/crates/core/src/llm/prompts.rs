use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ChatMessage;
use crate::workflow::{parse_workflow, serialize_workflow, SerializeError, StepLabel, Workflow};

pub const PLANNING_PREFIX: &str = include_str!("prompts/planning_prefix.txt");
pub const EXTEND_PREFIX: &str = include_str!("prompts/extend_prefix.txt");
pub const PLANNING_SUFFIX: &str = include_str!("prompts/planning_suffix.txt");
pub const EXECUTING_PREFIX: &str = include_str!("prompts/executing_prefix.txt");
pub const EXECUTING_SUFFIX: &str = include_str!("prompts/executing_suffix.txt");

/// The five education prompts. Defaults are the stock texts; any of them can
/// be replaced from a directory of `<name>.txt` files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub planning_prefix: String,
    pub extend_prefix: String,
    pub planning_suffix: String,
    pub executing_prefix: String,
    pub executing_suffix: String,
}

impl Default for PromptBundle {
    fn default() -> Self {
        Self {
            planning_prefix: PLANNING_PREFIX.to_string(),
            extend_prefix: EXTEND_PREFIX.to_string(),
            planning_suffix: PLANNING_SUFFIX.to_string(),
            executing_prefix: EXECUTING_PREFIX.to_string(),
            executing_suffix: EXECUTING_SUFFIX.to_string(),
        }
    }
}

impl PromptBundle {
    /// Reads overrides from `dir`; files that are absent keep the default.
    pub fn load_dir(dir: &Path) -> io::Result<Self> {
        let mut bundle = Self::default();
        let slots: [(&str, &mut String); 5] = [
            ("planning_prefix", &mut bundle.planning_prefix),
            ("extend_prefix", &mut bundle.extend_prefix),
            ("planning_suffix", &mut bundle.planning_suffix),
            ("executing_prefix", &mut bundle.executing_prefix),
            ("executing_suffix", &mut bundle.executing_suffix),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            match std::fs::read_to_string(&path) {
                Ok(text) => *slot = text,
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(e),
            }
        }
        Ok(bundle)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("task must not be empty")]
    EmptyTask,
    #[error("STEP {0} does not exist in the workflow")]
    UnknownTarget(StepLabel),
    #[error("prior workflow text does not parse: {0}")]
    InvalidPrior(String),
    #[error("workflow text is not a confirmed canonical workflow: {0}")]
    UnconfirmedWorkflow(String),
}

/// Canonical text of a workflow the user confirmed. Only constructible from a
/// valid workflow, or from text that already is such a serialization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ConfirmedSop(String);

impl ConfirmedSop {
    pub fn confirm(w: &Workflow) -> Result<Self, SerializeError> {
        serialize_workflow(w).map(Self)
    }

    pub fn from_text(text: &str) -> Result<Self, PromptError> {
        let parsed =
            parse_workflow(text).map_err(|e| PromptError::UnconfirmedWorkflow(e.to_string()))?;
        let canonical = serialize_workflow(&parsed)
            .map_err(|e| PromptError::UnconfirmedWorkflow(e.to_string()))?;
        if canonical != text {
            return Err(PromptError::UnconfirmedWorkflow(
                "text is not in canonical form".to_string(),
            ));
        }
        Ok(Self(canonical))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ConfirmedSop {
    type Error = PromptError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::from_text(&value)
    }
}

impl From<ConfirmedSop> for String {
    fn from(value: ConfirmedSop) -> Self {
        value.0
    }
}

fn require_task(task: &str) -> Result<(), PromptError> {
    if task.trim().is_empty() {
        Err(PromptError::EmptyTask)
    } else {
        Ok(())
    }
}

pub fn build_planning_messages(
    bundle: &PromptBundle,
    task: &str,
) -> Result<Vec<ChatMessage>, PromptError> {
    require_task(task)?;
    Ok(vec![
        ChatMessage::system(format!("{}\n{}", bundle.planning_prefix, bundle.planning_suffix)),
        ChatMessage::user(task),
    ])
}

/// The extension request replays the earlier planning exchange (task, then
/// the workflow as the assistant's answer) and asks for one step's sub-SOP.
pub fn build_extend_messages(
    bundle: &PromptBundle,
    task: &str,
    prior_workflow_text: &str,
    target: &StepLabel,
) -> Result<Vec<ChatMessage>, PromptError> {
    require_task(task)?;
    let prior =
        parse_workflow(prior_workflow_text).map_err(|e| PromptError::InvalidPrior(e.to_string()))?;
    if prior.find_by_label(target).is_none() {
        return Err(PromptError::UnknownTarget(target.clone()));
    }
    Ok(vec![
        ChatMessage::system(format!(
            "{}\n{}\n{}",
            bundle.planning_prefix, bundle.extend_prefix, bundle.planning_suffix
        )),
        ChatMessage::user(task),
        ChatMessage::assistant(prior_workflow_text),
        ChatMessage::user(format!("Extend STEP {target}.")),
    ])
}

pub fn build_executing_messages(
    bundle: &PromptBundle,
    task: &str,
    sop: &ConfirmedSop,
    history: &[ChatMessage],
) -> Vec<ChatMessage> {
    let system = format!(
        "{}\nOverall task: {}\nSOP:\n{}\n{}",
        bundle.executing_prefix,
        task,
        sop.as_str(),
        bundle.executing_suffix
    );
    std::iter::once(ChatMessage::system(system))
        .chain(history.iter().cloned())
        .collect()
}

//! Talking to the planning and executing models.

mod client;
mod mock;
mod planner;
mod prompts;

use serde::{Deserialize, Serialize};

pub use client::{complete_chat, ChatClient, ConfigError, HttpChatClient, LlmClientConfig, LlmError};
pub use mock::{request_key, MockChatClient, MockReply, MockScript};
pub use planner::{ExtendError, LlmGateway, PlanningError};
pub use prompts::{
    build_executing_messages, build_extend_messages, build_planning_messages, ConfirmedSop,
    PromptBundle, PromptError, EXECUTING_PREFIX, EXECUTING_SUFFIX, EXTEND_PREFIX, PLANNING_PREFIX,
    PLANNING_SUFFIX,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

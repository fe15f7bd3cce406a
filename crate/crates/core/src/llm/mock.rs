//! Deterministic stand-in for a chat endpoint.
//!
//! Replies come from two sources: a keyed table (request hash to reply,
//! reusable) and a scripted queue consumed in order. Every request is
//! recorded so tests can inspect exactly what the model was shown.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatClient, ChatMessage, LlmError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    Fail { error: LlmError },
}

/// On-disk script: either a bare array of replies or an object with a
/// `script` queue and a `keyed` table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub script: Vec<MockReply>,
    #[serde(default)]
    pub keyed: HashMap<String, String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Replies(Vec<MockReply>),
    Full(MockScript),
}

impl MockScript {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(match serde_json::from_str(text)? {
            ScriptFile::Replies(script) => MockScript {
                script,
                keyed: HashMap::new(),
            },
            ScriptFile::Full(full) => full,
        })
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// SHA-256 over the JSON encoding of the message list, hex encoded.
pub fn request_key(messages: &[ChatMessage]) -> String {
    let encoded = serde_json::to_vec(messages).expect("messages serialize");
    hex::encode(Sha256::digest(&encoded))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapturedRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Default)]
struct State {
    script: VecDeque<MockReply>,
    keyed: HashMap<String, String>,
    requests: Vec<CapturedRequest>,
}

#[derive(Default)]
pub struct MockChatClient {
    state: Mutex<State>,
}

impl MockChatClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scripted<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mock = Self::new();
        for reply in replies {
            mock.push_reply(reply);
        }
        mock
    }

    pub fn from_script(script: MockScript) -> Self {
        let mock = Self::new();
        {
            let mut state = mock.state.lock().unwrap();
            state.script = script.script.into();
            state.keyed = script.keyed;
        }
        mock
    }

    pub fn push_reply(&self, reply: impl Into<String>) {
        self.state.lock().unwrap().script.push_back(MockReply::Text(reply.into()));
    }

    pub fn push_failure(&self, error: LlmError) {
        self.state.lock().unwrap().script.push_back(MockReply::Fail { error });
    }

    pub fn insert_keyed(&self, messages: &[ChatMessage], reply: impl Into<String>) {
        self.state
            .lock()
            .unwrap()
            .keyed
            .insert(request_key(messages), reply.into());
    }

    /// Drops any unconsumed scripted replies.
    pub fn clear_script(&self) {
        self.state.lock().unwrap().script.clear();
    }

    pub fn remaining(&self) -> usize {
        self.state.lock().unwrap().script.len()
    }

    pub fn requests(&self) -> Vec<CapturedRequest> {
        self.state.lock().unwrap().requests.clone()
    }

    pub fn request_count(&self) -> usize {
        self.state.lock().unwrap().requests.len()
    }
}

impl ChatClient for MockChatClient {
    fn complete(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, LlmError> {
        let mut state = self.state.lock().unwrap();
        state.requests.push(CapturedRequest {
            messages: messages.to_vec(),
            temperature,
        });
        if let Some(reply) = state.keyed.get(&request_key(messages)) {
            return Ok(reply.clone());
        }
        match state.script.pop_front() {
            Some(MockReply::Text(text)) => Ok(text),
            Some(MockReply::Fail { error }) => Err(error),
            None => Err(LlmError::Endpoint {
                status: None,
                body: "mock script exhausted".to_string(),
            }),
        }
    }
}

//! Sessions: the plan, edit, confirm, chat loop as an event-sourced state
//! machine.
//!
//! A [`Session`] is never mutated directly. Every change is a
//! [`SessionEvent`] and [`Session::apply`] is the only transition function,
//! used both by the live service and by replay from the log.

mod http;
mod service;
mod store;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::editops::{apply_edit_with, EditOp};
use crate::llm::{ChatMessage, ConfirmedSop, Role};
use crate::workflow::{serialize_workflow, StepLabel, ValidationConfig, Workflow};

pub use http::router;
pub use service::{load_session, CreateOutcome, ServiceConfig, ServiceError, SessionService};
pub use store::{EventStore, FileStore, MemoryStore, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionState {
    Drafting,
    Planned,
    Confirmed,
    Executing,
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl SessionState {
    /// The declared transition graph.
    pub fn can_become(self, next: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, next),
            (Drafting, Planned)
                | (Planned, Planned)
                | (Planned, Confirmed)
                | (Confirmed, Executing)
                | (Executing, Executing)
                | (Executing, Planned)
                | (Confirmed, Planned)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventKind {
    Created { id: String, task: String },
    PlanGenerated { workflow: Workflow },
    Regenerated { workflow: Workflow },
    EditApplied { op: EditOp },
    ExtensionApplied { target: StepLabel, op: EditOp },
    Confirmed { text: ConfirmedSop },
    ChatMessageAdded { message: ChatMessage },
    Reopened,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Created { .. } => "Created",
            EventKind::PlanGenerated { .. } => "PlanGenerated",
            EventKind::Regenerated { .. } => "Regenerated",
            EventKind::EditApplied { .. } => "EditApplied",
            EventKind::ExtensionApplied { .. } => "ExtensionApplied",
            EventKind::Confirmed { .. } => "Confirmed",
            EventKind::ChatMessageAdded { .. } => "ChatMessageAdded",
            EventKind::Reopened => "Reopened",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("event log is empty")]
    Empty,
    #[error("event {seq} is out of order (expected {expected})")]
    OutOfOrder { seq: u64, expected: u64 },
    #[error("event {seq} ({kind}) does not apply in state {state}")]
    Illegal {
        seq: u64,
        kind: &'static str,
        state: String,
    },
    #[error("event {seq} does not apply: {message}")]
    Inconsistent { seq: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub task: String,
    pub state: SessionState,
    pub workflow: Option<Workflow>,
    /// Frozen text fed to the executing model; present in Confirmed and
    /// Executing.
    pub confirmed: Option<ConfirmedSop>,
    pub chat: Vec<ChatMessage>,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
    pub last_seq: u64,
}

impl Session {
    /// Folds a complete log into a session.
    pub fn replay(events: &[SessionEvent], cfg: &ValidationConfig) -> Result<Session, ReplayError> {
        let (first, rest) = events.split_first().ok_or(ReplayError::Empty)?;
        let mut session = Session::start(first)?;
        for event in rest {
            session = session.apply(event, cfg)?;
        }
        Ok(session)
    }

    pub fn start(event: &SessionEvent) -> Result<Session, ReplayError> {
        match &event.kind {
            EventKind::Created { id, task } if event.seq == 1 => Ok(Session {
                id: id.clone(),
                task: task.clone(),
                state: SessionState::Drafting,
                workflow: None,
                confirmed: None,
                chat: Vec::new(),
                created: event.timestamp,
                updated: event.timestamp,
                last_seq: 1,
            }),
            EventKind::Created { .. } => Err(ReplayError::OutOfOrder {
                seq: event.seq,
                expected: 1,
            }),
            other => Err(ReplayError::Illegal {
                seq: event.seq,
                kind: other.name(),
                state: "none".to_string(),
            }),
        }
    }

    /// The transition function. Returns the successor session or explains why
    /// `event` cannot follow this one.
    pub fn apply(&self, event: &SessionEvent, cfg: &ValidationConfig) -> Result<Session, ReplayError> {
        use SessionState::*;
        let expected = self.last_seq + 1;
        if event.seq != expected {
            return Err(ReplayError::OutOfOrder {
                seq: event.seq,
                expected,
            });
        }
        let illegal = || ReplayError::Illegal {
            seq: event.seq,
            kind: event.kind.name(),
            state: self.state.to_string(),
        };
        let inconsistent = |message: String| ReplayError::Inconsistent {
            seq: event.seq,
            message,
        };
        let mut next = self.clone();
        next.last_seq = event.seq;
        next.updated = event.timestamp;
        match &event.kind {
            EventKind::Created { .. } => return Err(illegal()),
            EventKind::PlanGenerated { workflow } | EventKind::Regenerated { workflow } => {
                let regenerate = matches!(event.kind, EventKind::Regenerated { .. });
                match (self.state, regenerate) {
                    (Drafting, false) | (Planned, true) => {}
                    _ => return Err(illegal()),
                }
                next.workflow = Some(workflow.clone());
                next.state = Planned;
            }
            EventKind::EditApplied { op } | EventKind::ExtensionApplied { op, .. } => {
                if self.state != Planned {
                    return Err(illegal());
                }
                let current = self.workflow.as_ref().ok_or_else(illegal)?;
                let edited = apply_edit_with(current, op, cfg).map_err(|e| inconsistent(e.to_string()))?;
                next.workflow = Some(edited);
            }
            EventKind::Confirmed { text } => {
                if self.state != Planned {
                    return Err(illegal());
                }
                let current = self.workflow.as_ref().ok_or_else(illegal)?;
                let canonical = serialize_workflow(current).map_err(|e| inconsistent(e.to_string()))?;
                if canonical != text.as_str() {
                    return Err(inconsistent(
                        "confirmed text differs from the workflow".to_string(),
                    ));
                }
                next.confirmed = Some(text.clone());
                next.state = Confirmed;
            }
            EventKind::ChatMessageAdded { message } => {
                let ok = match message.role {
                    Role::User => matches!(self.state, Confirmed | Executing),
                    Role::Assistant => {
                        self.state == Executing
                            && self.chat.last().is_some_and(|m| m.role == Role::User)
                    }
                    Role::System => false,
                };
                if !ok {
                    return Err(illegal());
                }
                next.chat.push(message.clone());
                next.state = Executing;
            }
            EventKind::Reopened => {
                if !matches!(self.state, Confirmed | Executing) {
                    return Err(illegal());
                }
                next.chat.clear();
                next.confirmed = None;
                next.state = Planned;
            }
        }
        debug_assert!(self.state.can_become(next.state) || self.state == next.state);
        Ok(next)
    }

    /// Indices of user messages that never got a reply.
    pub fn unanswered(&self) -> Vec<usize> {
        (0..self.chat.len())
            .filter(|&i| {
                self.chat[i].role == Role::User
                    && self.chat.get(i + 1).is_none_or(|m| m.role != Role::Assistant)
            })
            .collect()
    }

    /// Conversation as shown to the executing model: answered exchanges plus
    /// the latest user turn. Earlier unanswered messages are left out.
    pub fn executing_history(&self) -> Vec<ChatMessage> {
        let unanswered = self.unanswered();
        let last = self.chat.len().checked_sub(1);
        self.chat
            .iter()
            .enumerate()
            .filter(|(i, _)| !unanswered.contains(i) || Some(*i) == last)
            .map(|(_, m)| m.clone())
            .collect()
    }

    /// Canonical text of the current workflow, when it is valid.
    pub fn workflow_text(&self) -> Option<String> {
        self.workflow.as_ref().and_then(|w| serialize_workflow(w).ok())
    }
}

/// JSON shape returned by the HTTP API.
#[derive(Debug, Clone, Serialize)]
pub struct SessionView<'a> {
    #[serde(flatten)]
    pub session: &'a Session,
    pub workflow_text: Option<String>,
    pub unanswered: Vec<usize>,
}

impl<'a> From<&'a Session> for SessionView<'a> {
    fn from(session: &'a Session) -> Self {
        Self {
            workflow_text: session.workflow_text(),
            unanswered: session.unanswered(),
            session,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::parse_workflow;

    fn event(seq: u64, kind: EventKind) -> SessionEvent {
        SessionEvent {
            seq,
            timestamp: DateTime::from_timestamp(1_700_000_000 + seq as i64, 0).unwrap(),
            kind,
        }
    }

    fn planned_log() -> Vec<SessionEvent> {
        let w = parse_workflow("STEP 1: [A][a][]\nSTEP 2: [B][b][]").unwrap().with_task("t");
        vec![
            event(1, EventKind::Created { id: "x".into(), task: "t".into() }),
            event(2, EventKind::PlanGenerated { workflow: w }),
        ]
    }

    #[test]
    fn replay_reaches_planned() {
        let s = Session::replay(&planned_log(), &ValidationConfig::default()).unwrap();
        assert_eq!(s.state, SessionState::Planned);
        assert_eq!(s.last_seq, 2);
        assert_eq!(s.workflow.as_ref().unwrap().len(), 2);
        assert_eq!(s.updated.timestamp(), 1_700_000_002);
    }

    #[test]
    fn out_of_order_and_illegal_events_are_rejected() {
        let cfg = ValidationConfig::default();
        let mut log = planned_log();
        log[1].seq = 3;
        assert!(matches!(Session::replay(&log, &cfg), Err(ReplayError::OutOfOrder { .. })));
        let mut log = planned_log();
        log.push(event(3, EventKind::ChatMessageAdded { message: ChatMessage::user("hi") }));
        assert!(matches!(Session::replay(&log, &cfg), Err(ReplayError::Illegal { .. })));
        assert_eq!(Session::replay(&[], &cfg), Err(ReplayError::Empty));
    }

    #[test]
    fn confirmed_text_must_match() {
        let mut log = planned_log();
        log.push(event(3, EventKind::Confirmed { text: ConfirmedSop::from_text("STEP 1: [A][a][]").unwrap() }));
        assert!(matches!(
            Session::replay(&log, &ValidationConfig::default()),
            Err(ReplayError::Inconsistent { .. })
        ));
    }

    #[test]
    fn unanswered_messages_are_left_out_of_history() {
        let mut s = Session::replay(&planned_log(), &ValidationConfig::default()).unwrap();
        s.chat = vec![
            ChatMessage::user("lost"),
            ChatMessage::user("hello"),
            ChatMessage::assistant("hi"),
            ChatMessage::user("next"),
        ];
        assert_eq!(s.unanswered(), [0, 3]);
        let history = s.executing_history();
        assert_eq!(history.len(), 3);
        assert_eq!(history[0].content, "hello");
        assert_eq!(history[2].content, "next");
    }

    #[test]
    fn event_json_shape() {
        let e = event(4, EventKind::Reopened);
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(json["kind"], "Reopened");
        assert_eq!(json["seq"], 4);
        let back: SessionEvent = serde_json::from_value(json).unwrap();
        assert_eq!(back, e);
        let created = serde_json::to_value(&planned_log()[0]).unwrap();
        assert_eq!(created["payload"]["task"], "t");
    }

    #[test]
    fn transition_graph() {
        use SessionState::*;
        assert!(Drafting.can_become(Planned));
        assert!(!Drafting.can_become(Confirmed));
        assert!(!Planned.can_become(Executing));
        assert!(Executing.can_become(Planned));
    }
}

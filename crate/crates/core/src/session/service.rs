use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use chrono::Utc;
use serde::Serialize;
use thiserror::Error;

use super::{EventKind, EventStore, ReplayError, Session, SessionEvent, SessionState, StoreError};
use crate::editops::{apply_edit_with, EditError, EditOp};
use crate::llm::{ChatMessage, ConfirmedSop, ExtendError, LlmError, LlmGateway, PlanningError};
use crate::workflow::{serialize_workflow, validate_with, SerializeError, StepLabel, Violation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("`{op}` is not allowed in state {state}")]
    WrongState { op: &'static str, state: SessionState },
    #[error("task must not be empty")]
    EmptyTask,
    #[error("chat message must not be empty")]
    EmptyMessage,
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error("workflow is invalid: {}", crate::workflow::serialize_summary(.0))]
    InvalidWorkflow(Vec<Violation>),
    #[error("STEP {0} does not exist in the workflow")]
    UnknownTarget(StepLabel),
    #[error("STEP {0} already has sub-steps")]
    AlreadyExtended(StepLabel),
    #[error("planning failed: {}", .problems.join("; "))]
    PlanningFailed { raw: String, problems: Vec<String> },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("event log of `{id}` is corrupt at line {line}: {message}")]
    CorruptLog {
        id: String,
        line: usize,
        message: String,
    },
    #[error("event log of `{id}` does not replay: {source}")]
    Replay { id: String, source: ReplayError },
    #[error("storage failure: {0}")]
    Storage(String),
}

impl ServiceError {
    /// Stable machine-readable name used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "UnknownSession",
            ServiceError::WrongState { .. } => "WrongState",
            ServiceError::EmptyTask => "EmptyTask",
            ServiceError::EmptyMessage => "EmptyMessage",
            ServiceError::Edit(e) => match e {
                EditError::UnknownUid(_) => "UnknownUid",
                EditError::WouldOrphanJump { .. } => "WouldOrphanJump",
                EditError::IndexOutOfRange { .. } => "IndexOutOfRange",
                EditError::SelfJumpRejected(_) => "SelfJumpRejected",
                EditError::DepthExceeded { .. } => "DepthExceeded",
                EditError::LabelMismatch { .. } => "LabelMismatch",
                EditError::AlreadyExtended(_) => "AlreadyExtended",
                EditError::Invalid(_) => "InvalidEdit",
            },
            ServiceError::InvalidWorkflow(_) => "InvalidWorkflow",
            ServiceError::UnknownTarget(_) => "UnknownTarget",
            ServiceError::AlreadyExtended(_) => "AlreadyExtended",
            ServiceError::PlanningFailed { .. } => "PlanningFailed",
            ServiceError::Llm(LlmError::Transport { .. }) => "TransportError",
            ServiceError::Llm(LlmError::Auth { .. }) => "AuthError",
            ServiceError::Llm(LlmError::Endpoint { .. }) => "EndpointError",
            ServiceError::CorruptLog { .. } => "CorruptLog",
            ServiceError::Replay { .. } => "CorruptLog",
            ServiceError::Storage(_) => "StorageError",
        }
    }

    pub fn violations(&self) -> Option<&[Violation]> {
        match self {
            ServiceError::InvalidWorkflow(v) | ServiceError::Edit(EditError::Invalid(v)) => Some(v),
            _ => None,
        }
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownSession(id) => ServiceError::UnknownSession(id),
            StoreError::CorruptLog { id, line, message } => {
                ServiceError::CorruptLog { id, line, message }
            }
            StoreError::Io(message) => ServiceError::Storage(message),
        }
    }
}

impl From<PlanningError> for ServiceError {
    fn from(e: PlanningError) -> Self {
        match e {
            PlanningError::EmptyTask => ServiceError::EmptyTask,
            PlanningError::Llm(e) => ServiceError::Llm(e),
            PlanningError::Failed { raw, problems } => ServiceError::PlanningFailed { raw, problems },
        }
    }
}

impl From<ExtendError> for ServiceError {
    fn from(e: ExtendError) -> Self {
        match e {
            ExtendError::EmptyTask => ServiceError::EmptyTask,
            ExtendError::UnknownTarget(l) => ServiceError::UnknownTarget(l),
            ExtendError::AlreadyExtended(l) => ServiceError::AlreadyExtended(l),
            ExtendError::DepthLimit { target, max } => ServiceError::Edit(EditError::DepthExceeded {
                depth: target.depth() + 1,
                max,
            }),
            ExtendError::LabelMismatch { target, found } => ServiceError::PlanningFailed {
                raw: String::new(),
                problems: vec![format!("reply contains STEP {found}, outside STEP {target}")],
            },
            ExtendError::InvalidWorkflow(message) => ServiceError::PlanningFailed {
                raw: String::new(),
                problems: vec![message],
            },
            ExtendError::Llm(e) => ServiceError::Llm(e),
            ExtendError::PlanningFailed { raw, problems } => {
                ServiceError::PlanningFailed { raw, problems }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ServiceConfig {
    /// Skip the automatic first plan when a session is created.
    pub defer_plan: bool,
}

/// Result of creating a session. The session exists even when the immediate
/// planning attempt failed; that failure is reported alongside.
#[derive(Debug, Clone, Serialize)]
pub struct CreateOutcome {
    pub session: Session,
    pub plan_error: Option<ServiceError>,
}

impl Serialize for ServiceError {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("error", self.code())?;
        map.serialize_entry("message", &self.to_string())?;
        if let Some(v) = self.violations() {
            map.serialize_entry("violations", v)?;
        }
        if let ServiceError::PlanningFailed { raw, problems } = self {
            map.serialize_entry("raw", raw)?;
            map.serialize_entry("problems", problems)?;
        }
        map.end()
    }
}

struct Slot {
    /// Held for the whole of a mutating request, LLM call included.
    write: Mutex<()>,
    current: RwLock<Arc<Session>>,
}

/// Drives sessions through the plan, edit, confirm, chat loop.
///
/// Each session has its own write lock, so mutations of one session are
/// serialized while different sessions proceed in parallel. Reads return the
/// latest committed snapshot without waiting for writers.
pub struct SessionService {
    store: Arc<dyn EventStore>,
    gateway: LlmGateway,
    config: ServiceConfig,
    slots: RwLock<HashMap<String, Arc<Slot>>>,
}

impl SessionService {
    pub fn new(store: Arc<dyn EventStore>, gateway: LlmGateway) -> Self {
        Self::with_config(store, gateway, ServiceConfig::default())
    }

    pub fn with_config(store: Arc<dyn EventStore>, gateway: LlmGateway, config: ServiceConfig) -> Self {
        Self {
            store,
            gateway,
            config,
            slots: RwLock::new(HashMap::new()),
        }
    }

    pub fn gateway(&self) -> &LlmGateway {
        &self.gateway
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ServiceError> {
        if let Some(slot) = self.slots.read().unwrap().get(id) {
            return Ok(slot.clone());
        }
        let events = self.store.load(id)?;
        let session = Session::replay(&events, self.gateway.validation()).map_err(|source| {
            ServiceError::Replay {
                id: id.to_string(),
                source,
            }
        })?;
        let mut slots = self.slots.write().unwrap();
        let slot = slots.entry(id.to_string()).or_insert_with(|| {
            Arc::new(Slot {
                write: Mutex::new(()),
                current: RwLock::new(Arc::new(session)),
            })
        });
        Ok(slot.clone())
    }

    /// Appends `kind` as the next event, first checking it applies.
    fn commit(&self, slot: &Slot, current: &Session, kind: EventKind) -> Result<Arc<Session>, ServiceError> {
        let event = SessionEvent {
            seq: current.last_seq + 1,
            timestamp: Utc::now(),
            kind,
        };
        let next = current
            .apply(&event, self.gateway.validation())
            .map_err(|source| ServiceError::Replay {
                id: current.id.clone(),
                source,
            })?;
        self.store.append(&current.id, &event)?;
        let next = Arc::new(next);
        *slot.current.write().unwrap() = next.clone();
        Ok(next)
    }

    /// Runs `f` under the session's write lock with the current snapshot.
    fn mutate<T>(
        &self,
        id: &str,
        f: impl FnOnce(&Slot, Arc<Session>) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let slot = self.slot(id)?;
        let _guard = slot.write.lock().unwrap_or_else(|p| p.into_inner());
        let current = slot.current.read().unwrap().clone();
        f(&slot, current)
    }

    pub fn create_session(&self, task: &str) -> Result<CreateOutcome, ServiceError> {
        self.create_session_with(task, self.config.defer_plan)
    }

    pub fn create_session_with(&self, task: &str, defer_plan: bool) -> Result<CreateOutcome, ServiceError> {
        if task.trim().is_empty() {
            return Err(ServiceError::EmptyTask);
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let event = SessionEvent {
            seq: 1,
            timestamp: Utc::now(),
            kind: EventKind::Created {
                id: id.clone(),
                task: task.to_string(),
            },
        };
        let session = Session::start(&event).expect("creation event is well formed");
        self.store.append(&id, &event)?;
        self.slots.write().unwrap().insert(
            id.clone(),
            Arc::new(Slot {
                write: Mutex::new(()),
                current: RwLock::new(Arc::new(session.clone())),
            }),
        );
        if defer_plan {
            return Ok(CreateOutcome {
                session,
                plan_error: None,
            });
        }
        match self.generate_plan(&id) {
            Ok(session) => Ok(CreateOutcome {
                session,
                plan_error: None,
            }),
            Err(e) => Ok(CreateOutcome {
                session,
                plan_error: Some(e),
            }),
        }
    }

    pub fn get_session(&self, id: &str) -> Result<Session, ServiceError> {
        let slot = self.slot(id)?;
        let snapshot = slot.current.read().unwrap().clone();
        Ok((*snapshot).clone())
    }

    pub fn events(&self, id: &str, since: u64) -> Result<Vec<SessionEvent>, ServiceError> {
        self.slot(id)?;
        Ok(self
            .store
            .load(id)?
            .into_iter()
            .filter(|e| e.seq > since)
            .collect())
    }

    /// First plan from Drafting, or a regeneration from Planned. A failed
    /// attempt changes nothing.
    pub fn generate_plan(&self, id: &str) -> Result<Session, ServiceError> {
        self.mutate(id, |slot, current| {
            let regenerate = match current.state {
                SessionState::Drafting => false,
                SessionState::Planned => true,
                state => return Err(ServiceError::WrongState { op: "plan", state }),
            };
            let workflow = self.gateway.plan_workflow(&current.task).inspect_err(|e| {
                tracing::warn!(session = id, error = %e, "planning failed");
            })?;
            let kind = if regenerate {
                EventKind::Regenerated { workflow }
            } else {
                EventKind::PlanGenerated { workflow }
            };
            Ok((*self.commit(slot, &current, kind)?).clone())
        })
    }

    pub fn apply_edit(&self, id: &str, op: EditOp) -> Result<Session, ServiceError> {
        self.mutate(id, |slot, current| {
            let workflow = planned_workflow(&current, "edit")?;
            apply_edit_with(workflow, &op, self.gateway.validation())?;
            Ok((*self.commit(slot, &current, EventKind::EditApplied { op })?).clone())
        })
    }

    pub fn request_extension(&self, id: &str, target: &StepLabel) -> Result<Session, ServiceError> {
        self.mutate(id, |slot, current| {
            let workflow = planned_workflow(&current, "extend")?;
            let op = self.gateway.propose_extension(workflow, target).inspect_err(|e| {
                tracing::warn!(session = id, error = %e, "extension failed");
            })?;
            let kind = EventKind::ExtensionApplied {
                target: target.clone(),
                op,
            };
            Ok((*self.commit(slot, &current, kind)?).clone())
        })
    }

    pub fn confirm(&self, id: &str) -> Result<Session, ServiceError> {
        self.mutate(id, |slot, current| {
            let workflow = planned_workflow(&current, "confirm")?;
            let violations = validate_with(workflow, self.gateway.validation());
            if !violations.is_empty() {
                return Err(ServiceError::InvalidWorkflow(violations));
            }
            let text = ConfirmedSop::confirm(workflow).map_err(|e| match e {
                SerializeError::InvalidWorkflow(v) => ServiceError::InvalidWorkflow(v),
            })?;
            debug_assert_eq!(Some(text.as_str()), serialize_workflow(workflow).ok().as_deref());
            Ok((*self.commit(slot, &current, EventKind::Confirmed { text })?).clone())
        })
    }

    /// Records the user's message, asks the executing model, records the
    /// reply. If the model call fails the user message stays in the log,
    /// unanswered.
    pub fn chat_turn(&self, id: &str, message: &str) -> Result<Session, ServiceError> {
        self.mutate(id, |slot, current| {
            if !matches!(current.state, SessionState::Confirmed | SessionState::Executing) {
                return Err(ServiceError::WrongState {
                    op: "chat",
                    state: current.state,
                });
            }
            if message.trim().is_empty() {
                return Err(ServiceError::EmptyMessage);
            }
            let sop = current.confirmed.clone().expect("confirmed state carries text");
            let after_user = self.commit(
                slot,
                &current,
                EventKind::ChatMessageAdded {
                    message: ChatMessage::user(message),
                },
            )?;
            let reply = self
                .gateway
                .respond(&after_user.task, &sop, &after_user.executing_history())
                .and_then(|reply| {
                    if reply.trim().is_empty() {
                        Err(LlmError::Endpoint {
                            status: None,
                            body: "empty completion".to_string(),
                        })
                    } else {
                        Ok(reply)
                    }
                })
                .inspect_err(|e| tracing::warn!(session = id, error = %e, "chat turn failed"))?;
            let kind = EventKind::ChatMessageAdded {
                message: ChatMessage::assistant(reply),
            };
            Ok((*self.commit(slot, &after_user, kind)?).clone())
        })
    }

    pub fn reopen(&self, id: &str) -> Result<Session, ServiceError> {
        self.mutate(id, |slot, current| {
            if !matches!(current.state, SessionState::Confirmed | SessionState::Executing) {
                return Err(ServiceError::WrongState {
                    op: "reopen",
                    state: current.state,
                });
            }
            Ok((*self.commit(slot, &current, EventKind::Reopened)?).clone())
        })
    }
}

fn planned_workflow<'a>(
    session: &'a Session,
    op: &'static str,
) -> Result<&'a crate::workflow::Workflow, ServiceError> {
    match (&session.state, &session.workflow) {
        (SessionState::Planned, Some(w)) => Ok(w),
        (state, _) => Err(ServiceError::WrongState { op, state: *state }),
    }
}

/// Rebuilds a session from its stored log.
pub fn load_session(
    store: &dyn EventStore,
    id: &str,
    cfg: &crate::workflow::ValidationConfig,
) -> Result<Session, ServiceError> {
    let events = store.load(id)?;
    Session::replay(&events, cfg).map_err(|source| ServiceError::Replay {
        id: id.to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockChatClient;
    use crate::session::MemoryStore;

    const PLAN: &str = "STEP 1: [Greet][Welcome the guest][]\nSTEP 2: [Serve][Handle the request][[[if unclear][Jump to STEP 1]]]";

    fn service(replies: &[&str]) -> (SessionService, Arc<MockChatClient>, Arc<MemoryStore>) {
        let mock = Arc::new(MockChatClient::scripted(replies.iter().copied()));
        let store = Arc::new(MemoryStore::new());
        let svc = SessionService::new(store.clone(), LlmGateway::new(mock.clone()));
        (svc, mock, store)
    }

    #[test]
    fn create_plans_immediately_unless_deferred() {
        let (svc, _, _) = service(&[PLAN]);
        let out = svc.create_session("hotel").unwrap();
        assert_eq!(out.session.state, SessionState::Planned);
        assert!(out.plan_error.is_none());
        let deferred = svc.create_session_with("hotel", true).unwrap();
        assert_eq!(deferred.session.state, SessionState::Drafting);
        assert_ne!(deferred.session.id, out.session.id);
        assert_eq!(svc.create_session("  ").unwrap_err(), ServiceError::EmptyTask);
    }

    #[test]
    fn failed_plan_is_reported_and_leaves_session_drafting() {
        let (svc, _, store) = service(&["prose", "more prose"]);
        let out = svc.create_session("t").unwrap();
        assert_eq!(out.session.state, SessionState::Drafting);
        assert!(matches!(out.plan_error, Some(ServiceError::PlanningFailed { .. })));
        assert_eq!(store.load(&out.session.id).unwrap().len(), 1);
    }

    #[test]
    fn wrong_state_and_rejected_edits_append_nothing() {
        let (svc, _, store) = service(&[PLAN]);
        let id = svc.create_session("t").unwrap().session.id;
        let before = store.load(&id).unwrap().len();
        let bad = EditOp::RemoveStep {
            uid: "s1".parse().unwrap(),
            cascade: false,
        };
        assert!(matches!(
            svc.apply_edit(&id, bad),
            Err(ServiceError::Edit(EditError::WouldOrphanJump { .. }))
        ));
        assert!(matches!(svc.chat_turn(&id, "hi"), Err(ServiceError::WrongState { .. })));
        assert!(matches!(svc.reopen(&id), Err(ServiceError::WrongState { .. })));
        assert_eq!(store.load(&id).unwrap().len(), before);
    }

    #[test]
    fn chat_failure_keeps_user_message_unanswered() {
        let (svc, mock, _) = service(&[PLAN]);
        let id = svc.create_session("t").unwrap().session.id;
        svc.confirm(&id).unwrap();
        mock.push_failure(LlmError::transport("down"));
        assert!(matches!(svc.chat_turn(&id, "hello"), Err(ServiceError::Llm(_))));
        let s = svc.get_session(&id).unwrap();
        assert_eq!(s.state, SessionState::Executing);
        assert_eq!(s.unanswered(), [0]);
        mock.push_reply("Welcome!");
        let s = svc.chat_turn(&id, "hello again").unwrap();
        assert_eq!(s.chat.len(), 3);
        let last = mock.requests().pop().unwrap();
        assert_eq!(last.messages.len(), 2);
        assert_eq!(last.messages[1].content, "hello again");
        assert_eq!(last.temperature, 0.7);
    }

    #[test]
    fn unknown_session() {
        let (svc, _, _) = service(&[]);
        assert_eq!(svc.get_session("nope").unwrap_err(), ServiceError::UnknownSession("nope".into()));
    }
}

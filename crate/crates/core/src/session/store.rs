use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

use super::SessionEvent;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("event log of `{id}` is corrupt at line {line}: {message}")]
    CorruptLog {
        id: String,
        line: usize,
        message: String,
    },
    #[error("session store I/O error: {0}")]
    Io(String),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

/// Append-only event persistence, one log per session.
pub trait EventStore: Send + Sync {
    fn append(&self, id: &str, event: &SessionEvent) -> Result<(), StoreError>;

    /// Every event of the session in order. A missing or empty log is
    /// `UnknownSession`.
    fn load(&self, id: &str) -> Result<Vec<SessionEvent>, StoreError>;
}

#[derive(Default)]
pub struct MemoryStore {
    logs: Mutex<HashMap<String, Vec<SessionEvent>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl EventStore for MemoryStore {
    fn append(&self, id: &str, event: &SessionEvent) -> Result<(), StoreError> {
        self.logs
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_default()
            .push(event.clone());
        Ok(())
    }

    fn load(&self, id: &str) -> Result<Vec<SessionEvent>, StoreError> {
        match self.logs.lock().unwrap().get(id) {
            Some(events) if !events.is_empty() => Ok(events.clone()),
            _ => Err(StoreError::UnknownSession(id.to_string())),
        }
    }
}

/// JSON-lines logs under a directory, `<dir>/<id>.jsonl`.
///
/// A final line that does not decode is taken to be an interrupted write: it
/// is logged, cut from the file and ignored. Bad lines anywhere else make the
/// log unreadable.
pub struct FileStore {
    dir: PathBuf,
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Result<PathBuf, StoreError> {
        let safe = !id.is_empty()
            && id.len() <= 64
            && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if safe {
            Ok(self.dir.join(format!("{id}.jsonl")))
        } else {
            Err(StoreError::UnknownSession(id.to_string()))
        }
    }
}

impl EventStore for FileStore {
    fn append(&self, id: &str, event: &SessionEvent) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(event).map_err(|e| StoreError::Io(e.to_string()))?;
        line.push('\n');
        let mut file = OpenOptions::new().create(true).append(true).open(self.path(id)?)?;
        file.write_all(line.as_bytes())?;
        file.flush()?;
        Ok(())
    }

    fn load(&self, id: &str) -> Result<Vec<SessionEvent>, StoreError> {
        let path = self.path(id)?;
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownSession(id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let mut events = Vec::new();
        let mut valid_len = 0;
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        for (index, raw) in lines.iter().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                valid_len += raw.len();
                continue;
            }
            match serde_json::from_str::<SessionEvent>(line) {
                Ok(event) => {
                    events.push(event);
                    valid_len += raw.len();
                }
                Err(e) => {
                    let trailing = lines[index + 1..].iter().all(|l| l.trim().is_empty());
                    if !trailing {
                        return Err(StoreError::CorruptLog {
                            id: id.to_string(),
                            line: index + 1,
                            message: e.to_string(),
                        });
                    }
                    tracing::warn!(session = id, line = index + 1, error = %e, "dropping torn final log line");
                    File::options().write(true).open(&path)?.set_len(valid_len as u64)?;
                    break;
                }
            }
        }
        if events.is_empty() {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        Ok(events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::EventKind;
    use chrono::Utc;

    fn event(seq: u64) -> SessionEvent {
        SessionEvent {
            seq,
            timestamp: Utc::now(),
            kind: if seq == 1 {
                EventKind::Created {
                    id: "a".into(),
                    task: "t".into(),
                }
            } else {
                EventKind::Reopened
            },
        }
    }

    #[test]
    fn file_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        let written = vec![event(1), event(2)];
        for e in &written {
            store.append("a", e).unwrap();
        }
        assert_eq!(store.load("a").unwrap(), written);
        assert_eq!(store.load("b"), Err(StoreError::UnknownSession("b".into())));
        assert_eq!(store.load("../etc"), Err(StoreError::UnknownSession("../etc".into())));
    }

    #[test]
    fn torn_final_line_is_dropped_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        store.append("a", &event(1)).unwrap();
        let path = dir.path().join("a.jsonl");
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"seq\":2,\"timest").unwrap();
        drop(f);
        assert_eq!(store.load("a").unwrap().len(), 1);
        store.append("a", &event(2)).unwrap();
        let events = store.load("a").unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[1].seq, 2);
    }

    #[test]
    fn corruption_in_the_middle_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        store.append("a", &event(1)).unwrap();
        let path = dir.path().join("a.jsonl");
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"garbage\n").unwrap();
        drop(f);
        store.append("a", &event(2)).unwrap();
        assert!(matches!(store.load("a"), Err(StoreError::CorruptLog { line: 2, .. })));
    }

    #[test]
    fn empty_log_is_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        fs::write(dir.path().join("a.jsonl"), "").unwrap();
        assert!(matches!(store.load("a"), Err(StoreError::UnknownSession(_))));
        assert!(matches!(MemoryStore::new().load("a"), Err(StoreError::UnknownSession(_))));
    }
}

//! Sessions and their append-only logs.
//!
//! Each session owns `<data_dir>/<session_id>.jsonl`. The first line records
//! the artifact, every later line one accepted tag batch. A batch is on disk
//! and synced before the new revision becomes visible, so replaying the logs
//! after a restart gives back exactly what clients were told.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use riskclust::validate::UNTAGGED;
use riskclust::{RunArtifact, TagSet};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// One tag change. `None`, or the `UNTAGGED` literal, clears the tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagEdit {
    pub doc_id: String,
    pub tag: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogEvent {
    Created { session_id: String, artifact_path: PathBuf },
    Tagged { revision: u64, edits: Vec<TagEdit> },
}

/// Immutable view of a session at one revision.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub revision: u64,
    pub tags: TagSet,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub artifact_path: PathBuf,
    pub artifact: RunArtifact,
    doc_index: HashMap<String, usize>,
    current: RwLock<Arc<Snapshot>>,
    // held for the whole check-write-publish sequence of a mutation
    log: Mutex<File>,
    log_path: PathBuf,
}

impl Session {
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn doc_position(&self, doc_id: &str) -> Option<usize> {
        self.doc_index.get(doc_id).copied()
    }

    pub fn n_docs(&self) -> usize {
        self.artifact.documents.len()
    }

    /// Applies a batch atomically if `expected_revision` is current.
    pub fn apply_tags(&self, expected_revision: u64, edits: &[TagEdit]) -> Result<Arc<Snapshot>, ServiceError> {
        let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
        let snap = self.snapshot();
        if expected_revision != snap.revision {
            return Err(ServiceError::Conflict {
                expected: expected_revision,
                current: snap.revision,
            });
        }
        if edits.is_empty() {
            return Err(ServiceError::BadRequest("no edits".into()));
        }
        let edits = normalize(edits);
        let tags = self.apply(&snap.tags, &edits)?;
        let revision = snap.revision + 1;
        append(&mut log, &self.log_path, &LogEvent::Tagged { revision, edits })?;
        let next = Arc::new(Snapshot { revision, tags });
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = next.clone();
        Ok(next)
    }

    fn apply(&self, tags: &TagSet, edits: &[TagEdit]) -> Result<TagSet, ServiceError> {
        let mut tags = tags.clone();
        for e in edits {
            let i = self.doc_position(&e.doc_id).ok_or_else(|| ServiceError::NotFound {
                what: "document",
                id: e.doc_id.clone(),
            })?;
            tags.set(i, e.tag.clone())?;
        }
        Ok(tags)
    }
}

fn normalize(edits: &[TagEdit]) -> Vec<TagEdit> {
    edits
        .iter()
        .map(|e| TagEdit {
            doc_id: e.doc_id.clone(),
            tag: e.tag.clone().filter(|t| t != UNTAGGED),
        })
        .collect()
}

fn log_err(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Log {
        path: path.display().to_string(),
        source,
    }
}

fn append(file: &mut File, path: &Path, event: &LogEvent) -> Result<(), ServiceError> {
    let mut line = serde_json::to_vec(event).expect("log events always serialize");
    line.push(b'\n');
    let before = file.metadata().map_err(log_err(path))?.len();
    let written = file.write_all(&line).and_then(|()| file.sync_data());
    if let Err(e) = written {
        // drop whatever part of the line made it, so the log stays line-aligned
        let _ = file.set_len(before);
        return Err(log_err(path)(e));
    }
    Ok(())
}

/// Accepts either a `run.json` file or the directory holding it.
fn artifact_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("run.json")
    } else {
        path.to_path_buf()
    }
}

#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<BTreeMap<String, Arc<Session>>>,
}

impl SessionStore {
    /// Opens `dir`, creating it if needed, and replays every session log.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(log_err(&dir))?;
        let mut sessions = BTreeMap::new();
        for entry in fs::read_dir(&dir).map_err(log_err(&dir))? {
            let path = entry.map_err(log_err(&dir))?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                let s = replay(&path)?;
                sessions.insert(s.id.clone(), Arc::new(s));
            }
        }
        Ok(Self {
            dir,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn create(&self, artifact_path: &Path) -> Result<Arc<Session>, ServiceError> {
        let file = artifact_file(artifact_path);
        let artifact = RunArtifact::load(&file)?;
        let artifact_path = fs::canonicalize(&file).unwrap_or(file);
        let id = uuid::Uuid::new_v4().simple().to_string();
        let log_path = self.dir.join(format!("{id}.jsonl"));
        let mut log = OpenOptions::new()
            .append(true)
            .create_new(true)
            .open(&log_path)
            .map_err(log_err(&log_path))?;
        append(
            &mut log,
            &log_path,
            &LogEvent::Created {
                session_id: id.clone(),
                artifact_path: artifact_path.clone(),
            },
        )?;
        let session = Arc::new(new_session(id.clone(), artifact_path, artifact, log, log_path));
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, session.clone());
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, ServiceError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound {
                what: "session",
                id: id.to_string(),
            })
    }

    pub fn list(&self) -> Vec<Arc<Session>> {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).values().cloned().collect()
    }
}

fn new_session(id: String, artifact_path: PathBuf, artifact: RunArtifact, log: File, log_path: PathBuf) -> Session {
    let doc_index = artifact
        .documents
        .iter()
        .enumerate()
        .map(|(i, d)| (d.doc_id.clone(), i))
        .collect();
    let tags = TagSet::untagged(artifact.documents.len());
    Session {
        id,
        artifact_path,
        artifact,
        doc_index,
        current: RwLock::new(Arc::new(Snapshot { revision: 0, tags })),
        log: Mutex::new(log),
        log_path,
    }
}

fn replay(path: &Path) -> Result<Session, ServiceError> {
    let corrupt = |line: usize, message: String| ServiceError::CorruptLog {
        path: path.display().to_string(),
        line,
        message,
    };
    let text = fs::read_to_string(path).map_err(log_err(path))?;
    // a line without its newline is a write that never completed, and was
    // never acknowledged; cut it off so the next append starts clean
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    if complete < text.len() {
        let f = OpenOptions::new().write(true).open(path).map_err(log_err(path))?;
        f.set_len(complete as u64).map_err(log_err(path))?;
        f.sync_data().map_err(log_err(path))?;
    }
    let mut session: Option<Session> = None;
    for (n, line) in text[..complete].lines().enumerate() {
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let event: LogEvent = serde_json::from_str(&line).map_err(|e| corrupt(lineno, e.to_string()))?;
        match (event, &session) {
            (LogEvent::Created { session_id, artifact_path }, None) => {
                let artifact = RunArtifact::load(&artifact_path).map_err(|e| corrupt(lineno, e.to_string()))?;
                let log = OpenOptions::new().append(true).open(path).map_err(log_err(path))?;
                session = Some(new_session(session_id, artifact_path, artifact, log, path.to_path_buf()));
            }
            (LogEvent::Tagged { revision, edits }, Some(s)) => {
                let snap = s.snapshot();
                if revision != snap.revision + 1 {
                    return Err(corrupt(lineno, format!("revision {revision} follows {}", snap.revision)));
                }
                let tags = s.apply(&snap.tags, &edits).map_err(|e| corrupt(lineno, e.to_string()))?;
                *s.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(Snapshot { revision, tags });
            }
            (LogEvent::Created { .. }, Some(_)) => return Err(corrupt(lineno, "second creation record".into())),
            (LogEvent::Tagged { .. }, None) => return Err(corrupt(lineno, "tags before creation record".into())),
        }
    }
    session.ok_or_else(|| corrupt(0, "empty log".into()))
}

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::plan::{allocate, Assignment, Candidate, StudyPlan};
use super::{Outcome, StudyError, StudyMethod, StudyResult};
use crate::error::Error;

/// Source of event timestamps.
pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// One line of the session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        session: String,
        seed: u64,
        threshold: f64,
        assignments: Vec<Assignment>,
        at: DateTime<Utc>,
    },
    Phase1 {
        session: String,
        case_id: String,
        present: bool,
        at: DateTime<Utc>,
    },
    Phase2 {
        session: String,
        case_id: String,
        present: bool,
        usefulness: u8,
        at: DateTime<Utc>,
    },
}

impl Event {
    fn session(&self) -> &str {
        match self {
            Event::SessionCreated { session, .. }
            | Event::Phase1 { session, .. }
            | Event::Phase2 { session, .. } => session,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub present: bool,
    pub at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase2Answer {
    pub present: bool,
    pub usefulness: u8,
    pub at: DateTime<Utc>,
}

/// Answers for one case. Phase-2 fields stay absent until phase 1 is in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadRecord {
    pub session: String,
    pub case_id: String,
    pub method: StudyMethod,
    pub outcome: Outcome,
    pub label: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase1: Option<Decision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase2: Option<Phase2Answer>,
}

impl ReadRecord {
    pub fn is_complete(&self) -> bool {
        self.phase2.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub seed: u64,
    pub threshold: f64,
    pub created_at: DateTime<Utc>,
    pub assignments: Vec<Assignment>,
    /// One record per assignment, in presentation order.
    pub records: Vec<ReadRecord>,
}

impl Session {
    /// Index of the first case without a phase-2 answer.
    pub fn cursor(&self) -> Option<usize> {
        self.records.iter().position(|r| !r.is_complete())
    }

    pub fn is_complete(&self) -> bool {
        self.cursor().is_none()
    }

    pub fn total(&self) -> usize {
        self.assignments.len()
    }
}

/// Where the session stands.
#[derive(Clone, Debug, PartialEq)]
pub enum NextCase {
    /// Case `index` awaits its phase-1 decision.
    Phase1 {
        index: usize,
        assignment: Assignment,
    },
    /// Case `index` has a persisted phase-1 decision and awaits phase 2.
    Phase2 {
        index: usize,
        assignment: Assignment,
    },
    Complete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub session: String,
    pub case_id: String,
    pub remaining: usize,
    pub complete: bool,
}

/// Sessions rebuilt from an append-only JSONL event log.
///
/// Every mutation is validated, appended and flushed to the log before it is
/// applied in memory, so a replay of the log reproduces the exact state.
pub struct StudyStore {
    sessions: BTreeMap<String, Session>,
    log: Option<(PathBuf, File)>,
    clock: Clock,
}

impl std::fmt::Debug for StudyStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StudyStore")
            .field("sessions", &self.sessions.len())
            .field("log", &self.log.as_ref().map(|(p, _)| p))
            .finish()
    }
}

impl StudyStore {
    pub fn system_clock() -> Clock {
        Arc::new(Utc::now)
    }

    /// Store without persistence.
    pub fn in_memory(clock: Clock) -> Self {
        Self {
            sessions: BTreeMap::new(),
            log: None,
            clock,
        }
    }

    /// Open (creating if needed) the log at `path` and replay it.
    pub fn open(path: &Path, clock: Clock) -> StudyResult<Self> {
        let mut store = Self::in_memory(clock);
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let parse = |message: String| Error::Parse {
                    line: i + 1,
                    message,
                };
                let event: Event = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
                store.validate(&event).map_err(|e| parse(e.to_string()))?;
                store.apply(event);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        store.log = Some((path.to_path_buf(), file));
        Ok(store)
    }

    pub fn session(&self, id: &str) -> StudyResult<&Session> {
        self.sessions
            .get(id)
            .ok_or_else(|| StudyError::NotFound(id.to_string()))
    }

    pub fn session_ids(&self) -> impl Iterator<Item = &str> {
        self.sessions.keys().map(String::as_str)
    }

    /// Allocate a new session. `id` defaults to a random UUID.
    pub fn create_session(
        &mut self,
        plan: &StudyPlan,
        candidates: &[Candidate],
        threshold: f64,
        seed: u64,
        id: Option<String>,
    ) -> StudyResult<String> {
        let assignments = allocate(plan, candidates, threshold, seed)?;
        let session = id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        self.commit(Event::SessionCreated {
            session: session.clone(),
            seed,
            threshold,
            assignments,
            at: (self.clock)(),
        })?;
        Ok(session)
    }

    pub fn next_case(&self, id: &str) -> StudyResult<NextCase> {
        let s = self.session(id)?;
        Ok(match s.cursor() {
            None => NextCase::Complete,
            Some(index) => {
                let assignment = s.assignments[index].clone();
                if s.records[index].phase1.is_some() {
                    NextCase::Phase2 { index, assignment }
                } else {
                    NextCase::Phase1 { index, assignment }
                }
            }
        })
    }

    /// Record the phase-1 decision; returns the case index.
    pub fn submit_phase1(&mut self, id: &str, case_id: &str, present: bool) -> StudyResult<usize> {
        self.commit(Event::Phase1 {
            session: id.to_string(),
            case_id: case_id.to_string(),
            present,
            at: (self.clock)(),
        })?;
        Ok(self.index_of(id, case_id))
    }

    pub fn submit_phase2(
        &mut self,
        id: &str,
        case_id: &str,
        present: bool,
        usefulness: u8,
    ) -> StudyResult<Ack> {
        self.commit(Event::Phase2 {
            session: id.to_string(),
            case_id: case_id.to_string(),
            present,
            usefulness,
            at: (self.clock)(),
        })?;
        let s = &self.sessions[id];
        Ok(Ack {
            session: id.to_string(),
            case_id: case_id.to_string(),
            remaining: s.records.iter().filter(|r| !r.is_complete()).count(),
            complete: s.is_complete(),
        })
    }

    fn index_of(&self, id: &str, case_id: &str) -> usize {
        self.sessions[id]
            .assignments
            .iter()
            .position(|a| a.case_id == case_id)
            .expect("validated case")
    }

    fn commit(&mut self, event: Event) -> StudyResult<()> {
        self.validate(&event)?;
        if let Some((path, file)) = &mut self.log {
            let mut line = serde_json::to_string(&event).map_err(Error::from)?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|()| file.sync_data())
                .map_err(|e| Error::io(path.as_path(), e))?;
        }
        self.apply(event);
        Ok(())
    }

    /// Check that `event` is legal in the current state.
    fn validate(&self, event: &Event) -> StudyResult<()> {
        let (case_id, phase2) = match event {
            Event::SessionCreated {
                session,
                assignments,
                ..
            } => {
                if self.sessions.contains_key(session) {
                    return Err(StudyError::Conflict(format!(
                        "session {session} already exists"
                    )));
                }
                let mut seen = std::collections::HashSet::new();
                if let Some(a) = assignments
                    .iter()
                    .find(|a| !seen.insert(a.case_id.as_str()))
                {
                    return Err(StudyError::Validation(format!(
                        "case {} assigned twice",
                        a.case_id
                    )));
                }
                return Ok(());
            }
            Event::Phase1 { case_id, .. } => (case_id, None),
            Event::Phase2 {
                case_id,
                usefulness,
                ..
            } => (case_id, Some(*usefulness)),
        };
        if let Some(u) = phase2 {
            if !(1..=5).contains(&u) {
                return Err(StudyError::Validation(format!(
                    "usefulness must be 1..5, got {u}"
                )));
            }
        }
        let s = self.session(event.session())?;
        let index = s
            .assignments
            .iter()
            .position(|a| &a.case_id == case_id)
            .ok_or_else(|| {
                StudyError::Validation(format!("case {case_id} is not part of session {}", s.id))
            })?;
        let record = &s.records[index];
        let phase = if phase2.is_some() { 2 } else { 1 };
        let answered = if phase2.is_some() {
            record.phase2.is_some()
        } else {
            record.phase1.is_some()
        };
        if answered {
            return Err(StudyError::Conflict(format!(
                "phase {phase} of case {case_id} already answered"
            )));
        }
        let cursor = s.cursor().ok_or(StudyError::EndOfSession)?;
        if index != cursor {
            return Err(StudyError::Order(format!(
                "case {case_id} is not current; expected {}",
                s.assignments[cursor].case_id
            )));
        }
        if phase2.is_some() && record.phase1.is_none() {
            return Err(StudyError::Order(format!(
                "phase 1 of case {case_id} not answered yet"
            )));
        }
        Ok(())
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::SessionCreated {
                session,
                seed,
                threshold,
                assignments,
                at,
            } => {
                let records = assignments
                    .iter()
                    .map(|a| ReadRecord {
                        session: session.clone(),
                        case_id: a.case_id.clone(),
                        method: a.method,
                        outcome: a.outcome,
                        label: a.label,
                        phase1: None,
                        phase2: None,
                    })
                    .collect();
                self.sessions.insert(
                    session.clone(),
                    Session {
                        id: session,
                        seed,
                        threshold,
                        created_at: at,
                        assignments,
                        records,
                    },
                );
            }
            Event::Phase1 {
                session,
                case_id,
                present,
                at,
            } => {
                let index = self.index_of(&session, &case_id);
                let s = self.sessions.get_mut(&session).expect("validated session");
                s.records[index].phase1 = Some(Decision { present, at });
            }
            Event::Phase2 {
                session,
                case_id,
                present,
                usefulness,
                at,
            } => {
                let index = self.index_of(&session, &case_id);
                let s = self.sessions.get_mut(&session).expect("validated session");
                s.records[index].phase2 = Some(Phase2Answer {
                    present,
                    usefulness,
                    at,
                });
            }
        }
    }
}

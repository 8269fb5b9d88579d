use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::content::{CaseContent, GrayPayload, Phase1Payload, Phase2Payload};
use super::plan::{Assignment, Candidate, StudyPlan};
use super::report::SessionReport;
use super::store::{Ack, NextCase, StudyStore};
use super::{StudyError, StudyResult};

/// What the client should show next.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CasePayload {
    Phase1(Phase1Payload),
    Phase2(Phase2Payload),
}

/// Store plus content: the only producer of client payloads. An overlay is
/// rendered only for a case whose phase-1 decision is already persisted.
pub struct StudyService {
    pub store: StudyStore,
    content: Arc<dyn CaseContent>,
}

impl std::fmt::Debug for StudyService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StudyService")
            .field("store", &self.store)
            .finish_non_exhaustive()
    }
}

impl StudyService {
    pub fn new(store: StudyStore, content: Arc<dyn CaseContent>) -> Self {
        Self { store, content }
    }

    pub fn create_session(
        &mut self,
        plan: &StudyPlan,
        candidates: &[Candidate],
        threshold: f64,
        seed: u64,
        id: Option<String>,
    ) -> StudyResult<String> {
        self.store
            .create_session(plan, candidates, threshold, seed, id)
    }

    pub fn next_case(&self, session: &str) -> StudyResult<CasePayload> {
        match self.store.next_case(session)? {
            NextCase::Complete => Err(StudyError::EndOfSession),
            NextCase::Phase1 { index, assignment } => Ok(CasePayload::Phase1(
                self.phase1_payload(session, index, &assignment)?,
            )),
            NextCase::Phase2 { index, assignment } => Ok(CasePayload::Phase2(
                self.phase2_payload(session, index, &assignment)?,
            )),
        }
    }

    pub fn submit_phase1(
        &mut self,
        session: &str,
        case_id: &str,
        present: bool,
    ) -> StudyResult<Phase2Payload> {
        let index = self.store.submit_phase1(session, case_id, present)?;
        let assignment = self.store.session(session)?.assignments[index].clone();
        self.phase2_payload(session, index, &assignment)
    }

    pub fn submit_phase2(
        &mut self,
        session: &str,
        case_id: &str,
        present: bool,
        usefulness: u8,
    ) -> StudyResult<Ack> {
        self.store
            .submit_phase2(session, case_id, present, usefulness)
    }

    pub fn report(&self, session: &str) -> StudyResult<SessionReport> {
        Ok(SessionReport::from_session(self.store.session(session)?))
    }

    fn phase1_payload(
        &self,
        session: &str,
        index: usize,
        a: &Assignment,
    ) -> StudyResult<Phase1Payload> {
        Ok(Phase1Payload {
            session: session.to_string(),
            case_id: a.case_id.clone(),
            index,
            total: self.store.session(session)?.total(),
            phase: "one".into(),
            image: GrayPayload::from_tensor(&self.content.image(&a.case_id)?)?,
            confidence: a.calibrated,
        })
    }

    fn phase2_payload(
        &self,
        session: &str,
        index: usize,
        a: &Assignment,
    ) -> StudyResult<Phase2Payload> {
        let s = self.store.session(session)?;
        let record = &s.records[index];
        if record.phase1.is_none() {
            return Err(StudyError::Order(format!(
                "phase 1 of case {} not answered yet",
                a.case_id
            )));
        }
        let map = self.content.overlay(a, s.seed, index)?;
        Ok(Phase2Payload {
            session: session.to_string(),
            case_id: a.case_id.clone(),
            index,
            total: s.total(),
            phase: "two".into(),
            image: GrayPayload::from_tensor(&self.content.image(&a.case_id)?)?,
            confidence: a.calibrated,
            method: a.method,
            overlay: GrayPayload::from_tensor(&map.image)?,
        })
    }
}

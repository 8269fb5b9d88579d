//! Two-phase blinded reader study: case allocation, phase-gated session
//! state persisted as an append-only event log, and per-session reports.

mod content;
mod plan;
mod report;
mod service;
mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::saliency::{HeadMerge, MapMethod};

pub use content::{CaseContent, GrayPayload, ManifestContent, Phase1Payload, Phase2Payload};
pub use plan::{
    allocate, candidates_from_manifest, study_threshold, Assignment, Candidate, Stratum, StudyPlan,
};
pub use report::{Estimate, PhaseStats, SessionReport, UsefulnessRow};
pub use service::{CasePayload, StudyService};
pub use store::{
    Ack, Clock, Decision, Event, NextCase, Phase2Answer, ReadRecord, Session, StudyStore,
};

/// Saliency shown to the reader in phase 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyMethod {
    GradCam,
    Tmme,
    Artificial,
    Random,
}

impl StudyMethod {
    pub const ALL: [StudyMethod; 4] = [
        StudyMethod::GradCam,
        StudyMethod::Tmme,
        StudyMethod::Artificial,
        StudyMethod::Random,
    ];

    pub fn map_method(self) -> MapMethod {
        match self {
            StudyMethod::GradCam => MapMethod::GradCam,
            StudyMethod::Tmme => MapMethod::Tmme(HeadMerge::Mean),
            StudyMethod::Artificial => MapMethod::Artificial,
            StudyMethod::Random => MapMethod::Random,
        }
    }
}

/// Model prediction at the study threshold versus the label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Tp,
    Fn,
    Tn,
    Fp,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::Tp, Outcome::Fn, Outcome::Tn, Outcome::Fp];

    pub fn of(label: bool, predicted: bool) -> Self {
        match (label, predicted) {
            (true, true) => Outcome::Tp,
            (true, false) => Outcome::Fn,
            (false, false) => Outcome::Tn,
            (false, true) => Outcome::Fp,
        }
    }

    pub fn label(self) -> bool {
        matches!(self, Outcome::Tp | Outcome::Fn)
    }
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("session {0} not found")]
    NotFound(String),

    /// The answer was already recorded; records are immutable.
    #[error("conflict: {0}")]
    Conflict(String),

    /// The request targets a case other than the session's current one.
    #[error("out of order: {0}")]
    Order(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("session complete")]
    EndOfSession,

    #[error("planning failed: {0}")]
    Planning(String),

    #[error(transparent)]
    Core(#[from] Error),
}

pub type StudyResult<T> = std::result::Result<T, StudyError>;

use serde::{Deserialize, Serialize};

use super::store::{ReadRecord, Session};
use super::{Outcome, StudyMethod};
use crate::stats::{bootstrap_ci, DEFAULT_RESAMPLES};

/// Proportion with its bootstrap CI and the raw counts behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub numerator: usize,
    pub denominator: usize,
}

/// Reader accuracy over the cases answered in one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub answered: usize,
    pub positives: usize,
    pub negatives: usize,
    pub true_positives: usize,
    pub true_negatives: usize,
    pub sensitivity: Option<Estimate>,
    pub specificity: Option<Estimate>,
}

/// Usefulness votes for one (method, outcome) stratum: ratings 1-2 count as
/// not useful, 3 as neither, 4-5 as useful.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsefulnessRow {
    pub method: StudyMethod,
    pub outcome: Outcome,
    pub not_useful: usize,
    pub neither: usize,
    pub useful: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session: String,
    pub seed: u64,
    pub threshold: f64,
    pub total: usize,
    pub completed: usize,
    pub complete: bool,
    /// Some cases are still unanswered; statistics cover answered cases only.
    pub partial: bool,
    pub phase1: PhaseStats,
    pub phase2: PhaseStats,
    pub usefulness: Vec<UsefulnessRow>,
    pub records: Vec<ReadRecord>,
}

impl SessionReport {
    pub fn from_session(s: &Session) -> Self {
        let phase1: Vec<(bool, bool)> = s
            .records
            .iter()
            .filter_map(|r| r.phase1.as_ref().map(|d| (r.label, d.present)))
            .collect();
        let phase2: Vec<(bool, bool)> = s
            .records
            .iter()
            .filter_map(|r| r.phase2.as_ref().map(|d| (r.label, d.present)))
            .collect();
        let mut usefulness = Vec::new();
        for method in StudyMethod::ALL {
            for outcome in Outcome::ALL {
                let stratum: Vec<&ReadRecord> = s
                    .records
                    .iter()
                    .filter(|r| r.method == method && r.outcome == outcome)
                    .collect();
                if stratum.is_empty() {
                    continue;
                }
                let ratings: Vec<u8> = stratum
                    .iter()
                    .filter_map(|r| r.phase2.as_ref().map(|a| a.usefulness))
                    .collect();
                usefulness.push(UsefulnessRow {
                    method,
                    outcome,
                    not_useful: ratings.iter().filter(|&&u| u <= 2).count(),
                    neither: ratings.iter().filter(|&&u| u == 3).count(),
                    useful: ratings.iter().filter(|&&u| u >= 4).count(),
                });
            }
        }
        let completed = phase2.len();
        let total = s.total();
        Self {
            session: s.id.clone(),
            seed: s.seed,
            threshold: s.threshold,
            total,
            completed,
            complete: completed == total,
            partial: completed < total,
            phase1: phase_stats(&phase1, s.seed),
            phase2: phase_stats(&phase2, s.seed.wrapping_add(1)),
            usefulness,
            records: s.records.clone(),
        }
    }
}

fn phase_stats(reads: &[(bool, bool)], seed: u64) -> PhaseStats {
    let positives = reads.iter().filter(|r| r.0).count();
    let true_positives = reads.iter().filter(|r| r.0 && r.1).count();
    let true_negatives = reads.iter().filter(|r| !r.0 && !r.1).count();
    PhaseStats {
        answered: reads.len(),
        positives,
        negatives: reads.len() - positives,
        true_positives,
        true_negatives,
        sensitivity: proportion(reads, true, seed),
        specificity: proportion(reads, false, seed.wrapping_add(2)),
    }
}

/// Share of reads with label `class` that the reader called correctly,
/// bootstrapped over all answered reads.
fn proportion(reads: &[(bool, bool)], class: bool, seed: u64) -> Option<Estimate> {
    let rate = |idx: &mut dyn Iterator<Item = usize>| {
        let (mut hit, mut n) = (0usize, 0usize);
        for i in idx {
            let (label, called) = reads[i];
            if label == class {
                n += 1;
                hit += usize::from(called == class);
            }
        }
        (n > 0).then_some((hit, n))
    };
    let (numerator, denominator) = rate(&mut (0..reads.len()))?;
    let ci = bootstrap_ci(
        reads.len(),
        |idx| rate(&mut idx.iter().copied()).map(|(h, n)| h as f64 / n as f64),
        DEFAULT_RESAMPLES,
        seed,
        true,
    )
    .ok()?;
    Some(Estimate {
        estimate: numerator as f64 / denominator as f64,
        ci_lo: ci.lo,
        ci_hi: ci.hi,
        numerator,
        denominator,
    })
}

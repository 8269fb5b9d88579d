use serde::{Deserialize, Serialize};

use super::{Outcome, StudyError, StudyMethod, StudyResult};
use crate::dataio::Manifest;
use crate::rng::Rng;
use crate::stats::{max_f1_operating_point, LabeledScores};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub method: StudyMethod,
    pub outcome: Outcome,
    pub count: usize,
}

/// Number of cases per (method, outcome) stratum.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub strata: Vec<Stratum>,
}

impl StudyPlan {
    /// The 160-case reader study: GradCAM and TMME 30/15/10/15 (TP/FN/TN/FP)
    /// each, and a 10/10 TP/FN segmentation-based row split evenly between
    /// artificial and random control maps.
    pub fn standard() -> Self {
        use Outcome::*;
        use StudyMethod::*;
        let mut strata = Vec::new();
        for method in [GradCam, Tmme] {
            for (outcome, count) in [(Tp, 30), (Fn, 15), (Tn, 10), (Fp, 15)] {
                strata.push(Stratum {
                    method,
                    outcome,
                    count,
                });
            }
        }
        for method in [Artificial, Random] {
            for (outcome, count) in [(Tp, 5), (Fn, 5)] {
                strata.push(Stratum {
                    method,
                    outcome,
                    count,
                });
            }
        }
        Self { strata }
    }

    pub fn empty() -> Self {
        Self { strata: Vec::new() }
    }

    pub fn count(&self, method: StudyMethod, outcome: Outcome) -> usize {
        self.strata
            .iter()
            .filter(|s| s.method == method && s.outcome == outcome)
            .map(|s| s.count)
            .sum()
    }

    pub fn total(&self) -> usize {
        self.strata.iter().map(|s| s.count).sum()
    }

    pub fn positives(&self) -> usize {
        self.strata
            .iter()
            .filter(|s| s.outcome.label())
            .map(|s| s.count)
            .sum()
    }

    pub fn negatives(&self) -> usize {
        self.total() - self.positives()
    }
}

/// A case available for allocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub label: bool,
    pub calibrated: f64,
    /// Segmentation or boxes available, as artificial maps require.
    pub has_mask: bool,
}

/// One allocated case in presentation order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub case_id: String,
    pub method: StudyMethod,
    pub outcome: Outcome,
    pub label: bool,
    pub calibrated: f64,
}

/// Max-F1 threshold of the calibrated pneumothorax scores in `manifest`.
pub fn study_threshold(manifest: &Manifest) -> StudyResult<f64> {
    let cases: Vec<_> = manifest.cases.iter().collect();
    let mut scores = Vec::with_capacity(cases.len());
    for c in &cases {
        scores.push(c.calibrated.ok_or_else(|| {
            StudyError::Planning(format!("case {:?} has no calibrated confidence", c.id))
        })?);
    }
    let labels = cases.iter().map(|c| c.labels[0]).collect();
    let data = LabeledScores::new(scores, labels)?;
    Ok(max_f1_operating_point(&data)?.threshold)
}

pub fn candidates_from_manifest(manifest: &Manifest) -> StudyResult<Vec<Candidate>> {
    manifest
        .cases
        .iter()
        .map(|c| {
            Ok(Candidate {
                id: c.id.clone(),
                label: c.labels[0],
                calibrated: c.calibrated.ok_or_else(|| {
                    StudyError::Planning(format!("case {:?} has no calibrated confidence", c.id))
                })?,
                has_mask: c.mask.is_some() || !c.boxes.is_empty(),
            })
        })
        .collect()
}

/// Draw cases for every stratum and shuffle them into presentation order.
///
/// Candidates are grouped by outcome (`calibrated >= threshold` versus the
/// label) and each group is shuffled. Artificial strata are served first, from
/// cases with a mask; the other methods follow in plan order. The result is a
/// pure function of `(plan, candidates, threshold, seed)`.
pub fn allocate(
    plan: &StudyPlan,
    candidates: &[Candidate],
    threshold: f64,
    seed: u64,
) -> StudyResult<Vec<Assignment>> {
    let mut rng = Rng::new(seed);
    let mut pools: Vec<(Outcome, Vec<&Candidate>)> = Outcome::ALL
        .iter()
        .map(|&o| {
            let mut pool: Vec<&Candidate> = candidates
                .iter()
                .filter(|c| Outcome::of(c.label, c.calibrated >= threshold) == o)
                .collect();
            rng.shuffle(&mut pool);
            (o, pool)
        })
        .collect();
    let mut order: Vec<&super::Stratum> = plan
        .strata
        .iter()
        .filter(|s| s.method == StudyMethod::Artificial)
        .collect();
    order.extend(
        plan.strata
            .iter()
            .filter(|s| s.method != StudyMethod::Artificial),
    );

    let mut out = Vec::with_capacity(plan.total());
    for s in order {
        let pool = &mut pools
            .iter_mut()
            .find(|(o, _)| *o == s.outcome)
            .expect("all outcomes pooled")
            .1;
        let needs_mask = s.method == StudyMethod::Artificial;
        let eligible = pool.iter().filter(|c| !needs_mask || c.has_mask).count();
        if eligible < s.count {
            return Err(StudyError::Planning(format!(
                "stratum {:?}/{:?} needs {} cases{}, only {eligible} available",
                s.method,
                s.outcome,
                s.count,
                if needs_mask { " with a mask" } else { "" }
            )));
        }
        let mut taken = 0;
        pool.retain(|c| {
            if taken < s.count && (!needs_mask || c.has_mask) {
                taken += 1;
                out.push(Assignment {
                    case_id: c.id.clone(),
                    method: s.method,
                    outcome: s.outcome,
                    label: c.label,
                    calibrated: c.calibrated,
                });
                false
            } else {
                true
            }
        });
    }
    rng.shuffle(&mut out);
    Ok(out)
}

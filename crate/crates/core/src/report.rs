//! Run summaries shared by the command line and the session service.

use serde::{Deserialize, Serialize};

use crate::elicitation::{ElicitationFailure, ElicitationOutcome, PatternQueries, RecoveredModels};
use crate::error::Error;
use crate::model::{Grid, UtaModel};
use crate::scenario::ModelSlopes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeKind {
    TwoModels,
    Identical,
    /// No assignment of answers to DMs could be decided.
    Degenerate,
    /// Any other failure (inconsistent answers, exhausted probe budget, ...).
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "exact match")]
    ExactMatch,
    #[serde(rename = "mismatch")]
    Mismatch,
    #[serde(rename = "not recovered")]
    NotRecovered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureReport {
    pub code: String,
    pub message: String,
}

impl From<&Error> for FailureReport {
    fn from(e: &Error) -> Self {
        FailureReport { code: e.code().to_string(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub outcome: OutcomeKind,
    pub grid: Grid,
    /// Recovered slope tables, anchored at slope 1 on the initialization
    /// interval. Two entries, one, or none on failure.
    pub models: Vec<ModelSlopes>,
    pub query_count: usize,
    pub exploited_rectangles: usize,
    pub pattern_queries: PatternQueries,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

pub type RunResult = std::result::Result<ElicitationOutcome, Box<ElicitationFailure>>;

/// True when `recovered` equals `truth` up to positive scaling, as an
/// unordered pair.
pub fn matches_truth(recovered: &RecoveredModels, truth: &[UtaModel; 2]) -> bool {
    let eq = |a: &UtaModel, b: &UtaModel| a.equivalent(b).unwrap_or(false);
    match recovered {
        RecoveredModels::TwoModels(a, b) => {
            (eq(a, &truth[0]) && eq(b, &truth[1])) || (eq(a, &truth[1]) && eq(b, &truth[0]))
        }
        RecoveredModels::IdenticalModels(m) => eq(m, &truth[0]) && eq(m, &truth[1]),
    }
}

impl RunReport {
    pub fn new(grid: &Grid, result: &RunResult, truth: Option<&[UtaModel; 2]>) -> Self {
        match result {
            Ok(out) => {
                let (outcome, models) = match &out.models {
                    RecoveredModels::TwoModels(a, b) => (OutcomeKind::TwoModels, vec![a.into(), b.into()]),
                    RecoveredModels::IdenticalModels(m) => (OutcomeKind::Identical, vec![m.into()]),
                };
                RunReport {
                    outcome,
                    grid: grid.clone(),
                    models,
                    query_count: out.query_count(),
                    exploited_rectangles: out.exploited_rectangles.len(),
                    pattern_queries: out.pattern_queries,
                    failure: None,
                    verdict: truth.map(|t| {
                        if matches_truth(&out.models, t) {
                            Verdict::ExactMatch
                        } else {
                            Verdict::Mismatch
                        }
                    }),
                }
            }
            Err(f) => {
                let degenerate = matches!(
                    f.error.root(),
                    Error::Degenerate { .. } | Error::NoValidReferencePair { .. } | Error::PhiZero
                );
                RunReport {
                    outcome: if degenerate { OutcomeKind::Degenerate } else { OutcomeKind::Failed },
                    grid: grid.clone(),
                    models: Vec::new(),
                    query_count: f.transcript.len(),
                    exploited_rectangles: 0,
                    pattern_queries: f.pattern_queries,
                    failure: Some(FailureReport::from(&f.error)),
                    verdict: truth.map(|_| Verdict::NotRecovered),
                }
            }
        }
    }

    pub fn is_exact_match(&self) -> bool {
        self.verdict == Some(Verdict::ExactMatch)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Recovered models rebuilt on the report's grid.
    pub fn recovered_models(&self) -> crate::error::Result<Vec<UtaModel>> {
        let grid = std::sync::Arc::new(self.grid.clone());
        self.models.iter().map(|m| UtaModel::new(grid.clone(), m.slopes.clone())).collect()
    }
}

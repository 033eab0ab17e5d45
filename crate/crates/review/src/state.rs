//! In-memory review state rebuilt from the journals on start.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::Utc;
use neuroaudit::eval::{content_terms, AlternativeTable, EvalError, RecodeApprovals, StandardKind};
use neuroaudit::pipeline::{ClassificationResult, Pipeline, Versions};
use neuroaudit::record::{AdmissionRecord, AuditCategory};
use neuroaudit::results::ResultRecord;
use thiserror::Error;

use crate::decision::{
    current_index, decision_metrics, status_of, Action, DecidedRecord, DecisionMetrics, Journal, JournalError,
    ReviewDecision, Status,
};
use crate::refinement::{Proposal, Staging, StagedRefinement};

pub const DECISIONS_FILE: &str = "decisions.jsonl";
pub const REFINEMENTS_FILE: &str = "refinements.jsonl";

#[derive(Debug, Error)]
pub enum StateError {
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("cannot create state directory {path}: {source}")]
    Dir {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("journal names unknown admission id {0:?}")]
    UnknownRecord(String),
    #[error("journal entry {seq} no longer validates: {message}")]
    Replay { seq: usize, message: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("unknown admission id {0:?}")]
    NotFound(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Storage(String),
}

#[derive(Debug, Clone)]
pub struct Entry {
    pub record: AdmissionRecord,
    pub result: ClassificationResult,
    pub summary: ResultRecord,
    pub terms: BTreeSet<String>,
}

pub struct ReviewState {
    pipeline: Pipeline,
    entries: BTreeMap<String, Entry>,
    alternatives: AlternativeTable,
    approvals: RecodeApprovals,
    decisions: Journal,
    refinements: Journal,
    history: Vec<ReviewDecision>,
    current: BTreeMap<String, usize>,
    staged: Vec<StagedRefinement>,
    staging: Staging,
}

impl ReviewState {
    /// Classifies `records` and replays the journals found in `dir`.
    pub fn open(
        dir: &Path,
        pipeline: Pipeline,
        records: Vec<AdmissionRecord>,
        alternatives: AlternativeTable,
        approvals: RecodeApprovals,
    ) -> Result<ReviewState, StateError> {
        std::fs::create_dir_all(dir).map_err(|source| StateError::Dir {
            path: dir.display().to_string(),
            source,
        })?;
        let (results, _) = pipeline.classify_corpus(&records);
        let entries: BTreeMap<String, Entry> = records
            .into_iter()
            .zip(results)
            .map(|(record, result)| {
                let terms = content_terms(&record.note, &pipeline);
                let summary = result.to_record();
                (
                    record.admission_id.clone(),
                    Entry {
                        record,
                        result,
                        summary,
                        terms,
                    },
                )
            })
            .collect();
        let decisions = Journal::new(dir.join(DECISIONS_FILE));
        let refinements = Journal::new(dir.join(REFINEMENTS_FILE));
        let history: Vec<ReviewDecision> = decisions.read()?;
        if let Some(d) = history.iter().find(|d| !entries.contains_key(&d.admission_id)) {
            return Err(StateError::UnknownRecord(d.admission_id.clone()));
        }
        let staged: Vec<StagedRefinement> = refinements.read()?;
        let mut staging = Staging::new(pipeline.store.clone(), pipeline.rules.clone());
        for s in &staged {
            staging
                .stage(&s.proposal)
                .map_err(|message| StateError::Replay { seq: s.seq, message })?;
        }
        Ok(ReviewState {
            current: current_index(&history),
            pipeline,
            entries,
            alternatives,
            approvals,
            decisions,
            refinements,
            history,
            staged,
            staging,
        })
    }

    pub fn versions(&self) -> Versions {
        self.pipeline.versions()
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn entries(&self) -> impl Iterator<Item = &Entry> {
        self.entries.values()
    }

    pub fn entry(&self, id: &str) -> Option<&Entry> {
        self.entries.get(id)
    }

    pub fn latest(&self, id: &str) -> Option<&ReviewDecision> {
        self.current.get(id).map(|&i| &self.history[i])
    }

    pub fn status(&self, id: &str) -> Status {
        status_of(self.latest(id))
    }

    pub fn history_of(&self, id: &str) -> Vec<&ReviewDecision> {
        self.history.iter().filter(|d| d.admission_id == id).collect()
    }

    pub fn history(&self) -> &[ReviewDecision] {
        &self.history
    }

    /// Current decision index keyed by admission id.
    pub fn current(&self) -> &BTreeMap<String, usize> {
        &self.current
    }

    /// Journals the decision, then makes it current.
    pub fn decide(&mut self, decision: ReviewDecision) -> Result<&ReviewDecision, RequestError> {
        if !self.entries.contains_key(&decision.admission_id) {
            return Err(RequestError::NotFound(decision.admission_id));
        }
        decision.check().map_err(RequestError::Invalid)?;
        self.decisions
            .append(&decision)
            .map_err(|e| RequestError::Storage(e.to_string()))?;
        self.current.insert(decision.admission_id.clone(), self.history.len());
        self.history.push(decision);
        Ok(self.history.last().expect("just pushed"))
    }

    pub fn staged(&self) -> &[StagedRefinement] {
        &self.staged
    }

    pub fn staging(&self) -> &Staging {
        &self.staging
    }

    pub fn propose(&mut self, proposal: Proposal, reviewer: String) -> Result<&StagedRefinement, RequestError> {
        if reviewer.trim().is_empty() {
            return Err(RequestError::Invalid("reviewer id is empty".into()));
        }
        let mut next = self.staging.clone();
        let outcome = next.stage(&proposal).map_err(RequestError::Invalid)?;
        let staged = StagedRefinement {
            seq: self.staged.len() + 1,
            proposal,
            reviewer,
            timestamp: Utc::now(),
            outcome: outcome.into(),
        };
        self.refinements
            .append(&staged)
            .map_err(|e| RequestError::Storage(e.to_string()))?;
        self.staging = next;
        self.staged.push(staged);
        Ok(self.staged.last().expect("just pushed"))
    }

    fn decided(&self) -> Vec<DecidedRecord<'_>> {
        self.current
            .iter()
            .map(|(id, &i)| (&self.entries[id], &self.history[i]))
            .filter(|(_, d)| d.action != Action::Defer)
            .map(|(e, decision)| DecidedRecord {
                result: &e.summary,
                decision,
                diagnosis: e.record.raw_diagnosis.clone(),
                terms: e.terms.clone(),
            })
            .collect()
    }

    pub fn metrics(&self, kind: StandardKind) -> Result<DecisionMetrics, EvalError> {
        decision_metrics(kind, &self.decided(), &self.alternatives, &self.approvals)
    }

    /// Suggested categories that are flagged UNCERTAIN.
    pub fn uncertain(&self, id: &str) -> Vec<AuditCategory> {
        self.entries[id]
            .summary
            .categories
            .iter()
            .filter(|c| self.entries[id].summary.is_uncertain(c))
            .cloned()
            .collect()
    }
}

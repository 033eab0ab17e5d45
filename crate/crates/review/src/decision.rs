//! Review decisions, their journal, and scoring against them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use neuroaudit::eval::{
    content_terms, qualifying_groups, score, tier_match, AlternativeTable, EvalError, EvaluationReport, RecodeApprovals,
    ReferenceStandard, StandardKind, StandardRecord,
};
use neuroaudit::pipeline::Pipeline;
use neuroaudit::record::{AdmissionRecord, AuditCategory};
use neuroaudit::results::ResultRecord;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Accept,
    Override,
    Defer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub admission_id: String,
    pub action: Action,
    /// Final categories. Empty for ACCEPT and DEFER.
    #[serde(default)]
    pub categories: Vec<AuditCategory>,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

impl ReviewDecision {
    pub fn check(&self) -> Result<(), String> {
        match self.action {
            Action::Override if self.categories.is_empty() => Err("OVERRIDE needs at least one category".into()),
            Action::Accept | Action::Defer if !self.categories.is_empty() => {
                Err(format!("{:?} takes no categories", self.action).to_uppercase())
            }
            _ if self.reviewer.trim().is_empty() => Err("reviewer id is empty".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Decided,
    Deferred,
}

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Append-only JSONL file.
#[derive(Debug, Clone)]
pub struct Journal {
    path: PathBuf,
}

impl Journal {
    pub fn new(path: impl Into<PathBuf>) -> Journal {
        Journal { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self, source: std::io::Error) -> JournalError {
        JournalError::Io {
            path: self.path.display().to_string(),
            source,
        }
    }

    /// All entries; a missing file reads as empty.
    pub fn read<T: for<'de> Deserialize<'de>>(&self) -> Result<Vec<T>, JournalError> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(self.io(e)),
        };
        read_jsonl(BufReader::new(file), &self.path.display().to_string())
    }

    pub fn append<T: Serialize>(&self, entry: &T) -> Result<(), JournalError> {
        let mut line = serde_json::to_vec(entry).expect("journal entries serialize");
        line.push(b'\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| self.io(e))?;
        file.write_all(&line).and_then(|_| file.sync_data()).map_err(|e| self.io(e))
    }
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(reader: impl BufRead, origin: &str) -> Result<Vec<T>, JournalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| JournalError::Io {
            path: origin.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| JournalError::Json {
            path: origin.to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

/// Latest decision per record, by position in `history`.
pub fn current_index(history: &[ReviewDecision]) -> BTreeMap<String, usize> {
    let mut index = BTreeMap::new();
    for (i, d) in history.iter().enumerate() {
        index.insert(d.admission_id.clone(), i);
    }
    index
}

pub fn status_of(latest: Option<&ReviewDecision>) -> Status {
    match latest.map(|d| d.action) {
        None => Status::Pending,
        Some(Action::Defer) => Status::Deferred,
        Some(_) => Status::Decided,
    }
}

/// Categories the reviewer settled on: the suggestion for ACCEPT.
pub fn final_categories(decision: &ReviewDecision, suggested: &[AuditCategory]) -> Vec<AuditCategory> {
    match decision.action {
        Action::Accept => suggested.to_vec(),
        Action::Override => decision.categories.clone(),
        Action::Defer => Vec::new(),
    }
}

/// A decided record and what is needed to score it.
pub struct DecidedRecord<'a> {
    pub result: &'a ResultRecord,
    pub decision: &'a ReviewDecision,
    /// Diagnosis group for the Type B test.
    pub diagnosis: String,
    pub terms: BTreeSet<String>,
}

/// Builds a reference standard with expert-final categories as ground truth.
/// Each record's truth is its final category that best matches the
/// suggestion; records decided with no final category form the true-negative
/// pool.
pub fn decision_standard(kind: StandardKind, decided: &[DecidedRecord<'_>], alts: &AlternativeTable) -> ReferenceStandard {
    let mut standard = ReferenceStandard {
        kind,
        records: Vec::new(),
        excluded: Vec::new(),
    };
    let mut rows = Vec::new();
    for d in decided {
        let finals = final_categories(d.decision, &d.result.categories);
        let best = finals
            .iter()
            .min_by_key(|c| tier_match(&d.result.categories, c, alts))
            .cloned();
        match best {
            Some(mapped) => rows.push((d, mapped)),
            None => standard.excluded.push(d.result.admission_id.clone()),
        }
    }
    if kind == StandardKind::B {
        let keep = qualifying_groups(rows.iter().map(|(d, _)| (d.diagnosis.as_str(), &d.terms)));
        rows.retain(|(d, _)| keep.contains(&d.diagnosis));
    }
    standard.records = rows
        .into_iter()
        .map(|(d, mapped)| StandardRecord {
            admission_id: d.result.admission_id.clone(),
            diagnosis: d.diagnosis.clone(),
            mapped,
        })
        .collect();
    standard
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMetrics {
    pub decided: usize,
    pub report: EvaluationReport,
}

pub fn decision_metrics(
    kind: StandardKind,
    decided: &[DecidedRecord<'_>],
    alts: &AlternativeTable,
    approvals: &RecodeApprovals,
) -> Result<DecisionMetrics, EvalError> {
    let standard = decision_standard(kind, decided, alts);
    let results: Vec<ResultRecord> = decided.iter().map(|d| d.result.clone()).collect();
    Ok(DecisionMetrics {
        decided: decided.len(),
        report: score(&standard, &results, alts, approvals)?,
    })
}

/// Scores `results` against a decision history, as the service does for
/// its live journal. Decisions naming ids absent from `records` are ignored.
pub fn metrics_from_history(
    kind: StandardKind,
    history: &[ReviewDecision],
    records: &[AdmissionRecord],
    results: &[ResultRecord],
    pipeline: &Pipeline,
    alts: &AlternativeTable,
    approvals: &RecodeApprovals,
) -> Result<DecisionMetrics, EvalError> {
    let by_record: HashMap<&str, &AdmissionRecord> = records.iter().map(|r| (r.admission_id.as_str(), r)).collect();
    let by_result: HashMap<&str, &ResultRecord> = results.iter().map(|r| (r.admission_id.as_str(), r)).collect();
    let mut decided = Vec::new();
    let mut missing = Vec::new();
    for (id, &i) in &current_index(history) {
        let Some(record) = by_record.get(id.as_str()) else { continue };
        if history[i].action == Action::Defer {
            continue;
        }
        match by_result.get(id.as_str()) {
            Some(result) => decided.push(DecidedRecord {
                result,
                decision: &history[i],
                diagnosis: record.raw_diagnosis.clone(),
                terms: content_terms(&record.note, pipeline),
            }),
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingResults(missing));
    }
    decision_metrics(kind, &decided, alts, approvals)
}

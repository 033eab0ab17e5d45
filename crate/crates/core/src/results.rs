//! Results file: one JSON object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::Versions;
use crate::record::AuditCategory;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    /// Byte offsets into the prepared note text.
    pub start: usize,
    pub end: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultFlag {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<AuditCategory>,
    pub flag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub admission_id: String,
    pub categories: Vec<AuditCategory>,
    pub flags: Vec<ResultFlag>,
    pub cause_spans: Vec<SpanRecord>,
    pub domain_tags: Vec<SpanRecord>,
    pub unresolved: Vec<SpanRecord>,
    pub versions: Versions,
}

impl ResultRecord {
    pub fn is_uncertain(&self, category: &AuditCategory) -> bool {
        self.flags
            .iter()
            .any(|f| f.flag == "UNCERTAIN" && f.category.as_ref() == Some(category))
    }

    /// True when any category equals `query` or descends from it.
    pub fn has_category_under(&self, query: &AuditCategory) -> bool {
        self.categories.iter().any(|c| query.is_prefix_of(c))
    }
}

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("cannot read {path}: {source}")]
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

pub fn write_results<W: Write>(mut out: W, records: &[ResultRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads a results file; blank lines are skipped.
pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>, ResultsError> {
    let io = |source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ResultsError::Json {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_field_names() {
        let r = ResultRecord {
            admission_id: "7".into(),
            categories: vec!["CRANIAL:TRAUMA:SAH".parse().unwrap()],
            flags: vec![ResultFlag {
                category: Some("CRANIAL:TRAUMA:SAH".parse().unwrap()),
                flag: "UNCERTAIN".into(),
            }],
            cause_spans: vec![],
            domain_tags: vec![],
            unresolved: vec![SpanRecord {
                start: 0,
                end: 4,
                text: "zzqx".into(),
                label: None,
            }],
            versions: Versions {
                lexicon: "lex-0".into(),
                rules: "rules-0".into(),
                tunables: String::new(),
            },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        write_results(File::create(&path).unwrap(), std::slice::from_ref(&r)).unwrap();
        assert_eq!(read_results(&path).unwrap(), std::slice::from_ref(&r));
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in ["admission_id", "categories", "flags", "cause_spans", "domain_tags", "unresolved", "versions"] {
            assert!(keys.contains(&k), "{k}");
        }
        assert!(r.is_uncertain(&"CRANIAL:TRAUMA:SAH".parse().unwrap()));
        assert!(r.has_category_under(&"CRANIAL".parse().unwrap()));
    }
}

//! Admission records, diagnosis codes and audit categories.
//!
//! Diagnosis codes are dash-separated numeric paths (`218-224-309-310-315`)
//! with an optional `>`-separated label path alongside. Audit categories are
//! colon-separated uppercase labels (`CRANIAL:TRAUMA:SKULL FRACTURE`). The
//! [`CodeTable`] maps every code to exactly one category and falls back to the
//! nearest mapped ancestor for codes it does not list.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Maximum depth of the diagnosis hierarchy.
pub const MAX_CODE_DEPTH: usize = 6;

/// The initial audit categories. Rules may reference categories outside this
/// list; validation reports those as warnings only.
pub const INITIAL_AUDIT_CATEGORIES: &[&str] = &[
    "ANEURYSM",
    "AVM",
    "CSF:LEAK",
    "CRANIAL:TRAUMA",
    "CRANIAL:TRAUMA:SKULL FRACTURE",
    "CRANIAL:TRAUMA:CONTUSIONS",
    "CRANIAL:TRAUMA:EDH",
    "CRANIAL:TRAUMA:ICH",
    "CRANIAL:TRAUMA:IVH",
    "CRANIAL:TRAUMA:SAH",
    "CRANIAL:TRAUMA:SDH",
    "CRANIAL:TRAUMA:TBI",
    "HYDROCEPHALUS",
    "SPINE:TRAUMA",
    "SPINE:TRAUMA:FRACTURE",
    "SPINE:TRAUMA:CORD",
    "SPINE:TRAUMA:DISCO-LIGAMENTOUS",
    "SPINE:CANAL STENOSIS",
    "SPINE:CAVERNOMA",
    "SPINE:DEGENERATIVE",
    "SPINE:OTHER",
    "OTHER:FRACTURE",
    "OTHER",
    "CRANIAL:NEOPLASIA",
    "CRANIAL:NEOPLASIA:CYST",
    "CRANIAL:NEOPLASIA:GLIOMA",
    "CRANIAL:NEOPLASIA:MENINGIOMA",
    "CRANIAL:NEOPLASIA:METASTASIS",
    "CRANIAL:NEOPLASIA:PITUITARY",
    "CRANIAL:NEOPLASIA:SCHWANNOMA",
    "CRANIAL:CAVERNOMA",
    "SPINE:NEOPLASIA",
    "FISTULA",
    "LESION",
    "COMPLICATION:INFECTION",
];

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed diagnosis code: segment {segment} ({text:?}) is not a positive integer")]
    DiagnosisSegment { segment: usize, text: String },
    #[error("diagnosis code has {depth} levels, at most {MAX_CODE_DEPTH} allowed")]
    CodeTooDeep { depth: usize },
    #[error("diagnosis code has {segments} segments but {labels} labels")]
    LabelCount { segments: usize, labels: usize },
    #[error("malformed audit category {text:?}: {reason}")]
    Category { text: String, reason: &'static str },
    #[error("no audit category mapped for {0} or any of its ancestors")]
    UnmappedCode(String),
    #[error("{path}: missing mandatory column(s): {}", missing.join(", "))]
    MissingColumns { path: String, missing: Vec<String> },
    #[error("{path}:{line}: {message}")]
    Row {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: duplicate {what} {key:?} (lines {first} and {second})")]
    Duplicate {
        path: String,
        what: &'static str,
        key: String,
        first: u64,
        second: u64,
    },
    #[error("{path}: code {code} has no parent entry {parent}")]
    HierarchyGap {
        path: String,
        code: String,
        parent: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A hierarchical diagnosis code. Identity is the numeric segment path; the
/// labels are carried for display only.
#[derive(Debug, Clone)]
pub struct DiagnosisCode {
    segments: Vec<u32>,
    labels: Vec<String>,
}

impl DiagnosisCode {
    pub fn new(segments: Vec<u32>, labels: Vec<String>) -> Result<Self, RecordError> {
        if segments.is_empty() {
            return Err(RecordError::DiagnosisSegment {
                segment: 1,
                text: String::new(),
            });
        }
        if segments.len() > MAX_CODE_DEPTH {
            return Err(RecordError::CodeTooDeep {
                depth: segments.len(),
            });
        }
        if !labels.is_empty() && labels.len() != segments.len() {
            return Err(RecordError::LabelCount {
                segments: segments.len(),
                labels: labels.len(),
            });
        }
        Ok(Self { segments, labels })
    }

    pub fn segments(&self) -> &[u32] {
        &self.segments
    }

    /// Level names, empty when the code was parsed without a label path.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    /// The `>`-joined label path, if labels are present.
    pub fn label_path(&self) -> Option<String> {
        (!self.labels.is_empty()).then(|| self.labels.join(">"))
    }

    /// The code one level up, or `None` at a root.
    pub fn parent(&self) -> Option<DiagnosisCode> {
        if self.segments.len() <= 1 {
            return None;
        }
        let n = self.segments.len() - 1;
        Some(DiagnosisCode {
            segments: self.segments[..n].to_vec(),
            labels: if self.labels.is_empty() {
                Vec::new()
            } else {
                self.labels[..n].to_vec()
            },
        })
    }
}

impl PartialEq for DiagnosisCode {
    fn eq(&self, other: &Self) -> bool {
        self.segments == other.segments
    }
}

impl Eq for DiagnosisCode {}

impl Hash for DiagnosisCode {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.segments.hash(state);
    }
}

impl fmt::Display for DiagnosisCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Parses a dash-separated code and an optional `>`-separated label path.
///
/// ```
/// use neuroaudit::record::parse_diagnosis_code;
///
/// let code = parse_diagnosis_code(
///     "218-224-309-310-315",
///     Some("Cranial>Trauma>Osseous Injury>Skull>Depressed"),
/// )
/// .unwrap();
/// assert_eq!(code.segments(), &[218, 224, 309, 310, 315]);
/// assert_eq!(code.labels()[4], "Depressed");
/// ```
pub fn parse_diagnosis_code(text: &str, labels: Option<&str>) -> Result<DiagnosisCode, RecordError> {
    let mut segments = Vec::new();
    for (i, part) in text.trim().split('-').enumerate() {
        let part = part.trim();
        match part.parse::<u32>() {
            Ok(n) if n > 0 && part.bytes().all(|b| b.is_ascii_digit()) => segments.push(n),
            _ => {
                return Err(RecordError::DiagnosisSegment {
                    segment: i + 1,
                    text: part.to_string(),
                })
            }
        }
    }
    let labels = match labels.map(str::trim) {
        Some(l) if !l.is_empty() => l.split('>').map(|s| s.trim().to_string()).collect(),
        _ => Vec::new(),
    };
    DiagnosisCode::new(segments, labels)
}

/// A colon-separated hierarchical audit label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AuditCategory {
    parts: Vec<String>,
}

impl AuditCategory {
    pub fn parts(&self) -> &[String] {
        &self.parts
    }

    pub fn depth(&self) -> usize {
        self.parts.len()
    }

    /// The first `min(depth, len)` parts. A depth of zero is treated as one.
    pub fn root(&self, depth: usize) -> AuditCategory {
        let n = depth.max(1).min(self.parts.len());
        AuditCategory {
            parts: self.parts[..n].to_vec(),
        }
    }

    /// True when `self` is a prefix of `other` (including equality).
    pub fn is_prefix_of(&self, other: &AuditCategory) -> bool {
        self.parts.len() <= other.parts.len() && other.parts[..self.parts.len()] == self.parts[..]
    }

    /// True when `self` is a prefix of `other` and shorter than it.
    pub fn is_strict_prefix_of(&self, other: &AuditCategory) -> bool {
        self.parts.len() < other.parts.len() && self.is_prefix_of(other)
    }

    /// True when either category is a prefix of the other.
    pub fn is_comparable(&self, other: &AuditCategory) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }

    /// The catch-all category `OTHER` itself.
    pub fn is_other(&self) -> bool {
        self.parts.len() == 1 && self.parts[0] == "OTHER"
    }

    /// Anything other than an `OTHER`-rooted category.
    pub fn is_specific(&self) -> bool {
        self.parts[0] != "OTHER"
    }

    pub fn is_initial(&self) -> bool {
        let text = self.to_string();
        INITIAL_AUDIT_CATEGORIES.contains(&text.as_str())
    }
}

/// Depth-clamped root of a category.
pub fn audit_root(category: &AuditCategory, depth: usize) -> AuditCategory {
    category.root(depth)
}

impl FromStr for AuditCategory {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason| RecordError::Category {
            text: s.to_string(),
            reason,
        };
        let text = s.trim();
        if text.is_empty() {
            return Err(err("empty category"));
        }
        let mut parts = Vec::new();
        for part in text.split(':') {
            let trimmed = part.trim();
            if trimmed.is_empty() {
                return Err(err("empty part"));
            }
            if trimmed.chars().any(|c| c.is_lowercase()) {
                return Err(err("parts must be uppercase"));
            }
            if !trimmed.chars().any(|c| c.is_alphanumeric()) {
                return Err(err("part has no letters or digits"));
            }
            parts.push(trimmed.split_whitespace().collect::<Vec<_>>().join(" "));
        }
        Ok(AuditCategory { parts })
    }
}

impl fmt::Display for AuditCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.parts.join(":"))
    }
}

impl Serialize for AuditCategory {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AuditCategory {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone)]
struct CodeEntry {
    labels: Vec<String>,
    category: AuditCategory,
}

/// Diagnosis code → audit category mapping, closed under parents.
#[derive(Debug, Clone, Default)]
pub struct CodeTable {
    entries: BTreeMap<Vec<u32>, CodeEntry>,
}

impl CodeTable {
    /// Builds a table from `(code, category)` rows. Rejects duplicates and
    /// missing parents.
    pub fn from_rows(rows: Vec<(DiagnosisCode, AuditCategory)>) -> Result<Self, RecordError> {
        let mut entries = BTreeMap::new();
        for (i, (code, category)) in rows.into_iter().enumerate() {
            let line = i as u64 + 1;
            if entries.contains_key(code.segments()) {
                return Err(RecordError::Duplicate {
                    path: "<rows>".into(),
                    what: "code",
                    key: code.to_string(),
                    first: line,
                    second: line,
                });
            }
            entries.insert(
                code.segments.clone(),
                CodeEntry {
                    labels: code.labels.clone(),
                    category,
                },
            );
        }
        let table = CodeTable { entries };
        table.check_closure("<rows>")?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, RecordError> {
        let text = read_file(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses the delimited `code,labels,audit_category` format.
    pub fn parse(text: &str, origin: &str) -> Result<Self, RecordError> {
        let (headers, rows) = read_delimited(text, origin)?;
        let col = |name: &str| headers.iter().position(|h| h == name);
        let missing: Vec<String> = ["code", "labels", "audit_category"]
            .iter()
            .filter(|n| col(n).is_none())
            .map(|n| n.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(RecordError::MissingColumns {
                path: origin.to_string(),
                missing,
            });
        }
        let (ci, li, ai) = (col("code").unwrap(), col("labels").unwrap(), col("audit_category").unwrap());
        let mut entries: BTreeMap<Vec<u32>, CodeEntry> = BTreeMap::new();
        let mut lines: HashMap<Vec<u32>, u64> = HashMap::new();
        for (line, row) in rows {
            let get = |i: usize| row.get(i).map(String::as_str).unwrap_or("");
            let row_err = |e: RecordError| RecordError::Row {
                path: origin.to_string(),
                line,
                message: e.to_string(),
            };
            let code = parse_diagnosis_code(get(ci), Some(get(li))).map_err(row_err)?;
            let category: AuditCategory = get(ai).parse().map_err(row_err)?;
            if let Some(&first) = lines.get(code.segments()) {
                return Err(RecordError::Duplicate {
                    path: origin.to_string(),
                    what: "code",
                    key: code.to_string(),
                    first,
                    second: line,
                });
            }
            lines.insert(code.segments.clone(), line);
            entries.insert(
                code.segments.clone(),
                CodeEntry {
                    labels: code.labels,
                    category,
                },
            );
        }
        let table = CodeTable { entries };
        table.check_closure(origin)?;
        Ok(table)
    }

    fn check_closure(&self, origin: &str) -> Result<(), RecordError> {
        for segments in self.entries.keys() {
            if segments.len() > 1 {
                let parent = &segments[..segments.len() - 1];
                if !self.entries.contains_key(parent) {
                    let fmt = |s: &[u32]| s.iter().map(u32::to_string).collect::<Vec<_>>().join("-");
                    return Err(RecordError::HierarchyGap {
                        path: origin.to_string(),
                        code: fmt(segments),
                        parent: fmt(parent),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The exact entry for a code, without ancestor fallback.
    pub fn get(&self, code: &DiagnosisCode) -> Option<&AuditCategory> {
        self.entries.get(code.segments()).map(|e| &e.category)
    }

    /// Maps a code to its audit category, falling back to the nearest mapped
    /// ancestor when the exact code is not listed.
    pub fn map_to_audit(&self, code: &DiagnosisCode) -> Result<AuditCategory, RecordError> {
        let segs = code.segments();
        (1..=segs.len())
            .rev()
            .find_map(|n| self.entries.get(&segs[..n]))
            .map(|e| e.category.clone())
            .ok_or_else(|| RecordError::UnmappedCode(code.to_string()))
    }

    /// All codes in segment order with their labels and category.
    pub fn iter(&self) -> impl Iterator<Item = (DiagnosisCode, &AuditCategory)> + '_ {
        self.entries.iter().map(|(segs, e)| {
            (
                DiagnosisCode {
                    segments: segs.clone(),
                    labels: e.labels.clone(),
                },
                &e.category,
            )
        })
    }

    /// Codes whose own entry maps exactly to `category`.
    pub fn codes_for(&self, category: &AuditCategory) -> Vec<DiagnosisCode> {
        self.iter()
            .filter(|(_, c)| *c == category)
            .map(|(code, _)| code)
            .collect()
    }
}

pub fn map_to_audit(code: &DiagnosisCode, table: &CodeTable) -> Result<AuditCategory, RecordError> {
    table.map_to_audit(code)
}

/// Problems found on an ingested row that did not stop ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "flag", content = "detail", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IngestFlag {
    MalformedDiagnosis(String),
    MalformedDate(String),
}

/// One admission row.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionRecord {
    pub admission_id: String,
    pub date: Option<NaiveDate>,
    pub diagnosis: Option<DiagnosisCode>,
    /// The diagnosis cell exactly as read, kept for flagged rows.
    pub raw_diagnosis: String,
    pub note: String,
    pub flags: Vec<IngestFlag>,
}

impl AdmissionRecord {
    /// A record with a note and nothing else, for ad-hoc classification.
    pub fn from_note(admission_id: impl Into<String>, note: impl Into<String>) -> Self {
        AdmissionRecord {
            admission_id: admission_id.into(),
            date: None,
            diagnosis: None,
            raw_diagnosis: String::new(),
            note: note.into(),
            flags: Vec::new(),
        }
    }

    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

const ADMISSION_COLUMNS: [&str; 4] = ["admission_id", "date", "diagnosis_code", "note"];

/// Reads an admissions file (comma- or tab-delimited, detected from the header).
pub fn ingest_admissions(path: &Path) -> Result<Vec<AdmissionRecord>, RecordError> {
    let text = read_file(path)?;
    parse_admissions(&text, &path.display().to_string())
}

/// Parses admissions from text. Rows with a malformed diagnosis code or date
/// are flagged and kept; duplicate admission ids are an error.
pub fn parse_admissions(text: &str, origin: &str) -> Result<Vec<AdmissionRecord>, RecordError> {
    let (headers, rows) = read_delimited(text, origin)?;
    let col = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<String> = ADMISSION_COLUMNS
        .iter()
        .filter(|n| col(n).is_none())
        .map(|n| n.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(RecordError::MissingColumns {
            path: origin.to_string(),
            missing,
        });
    }
    let id_i = col("admission_id").unwrap();
    let date_i = col("date").unwrap();
    let code_i = col("diagnosis_code").unwrap();
    let note_i = col("note").unwrap();
    let label_i = col("diagnosis_labels");

    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut records = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let get = |i: usize| row.get(i).map(String::as_str).unwrap_or("");
        let admission_id = get(id_i).trim().to_string();
        if admission_id.is_empty() {
            return Err(RecordError::Row {
                path: origin.to_string(),
                line,
                message: "empty admission_id".into(),
            });
        }
        if let Some(&first) = seen.get(&admission_id) {
            return Err(RecordError::Duplicate {
                path: origin.to_string(),
                what: "admission_id",
                key: admission_id,
                first,
                second: line,
            });
        }
        seen.insert(admission_id.clone(), line);

        let mut flags = Vec::new();
        let date_text = get(date_i).trim();
        let date = if date_text.is_empty() {
            None
        } else {
            match NaiveDate::parse_from_str(date_text, "%Y-%m-%d") {
                Ok(d) => Some(d),
                Err(_) => {
                    flags.push(IngestFlag::MalformedDate(date_text.to_string()));
                    None
                }
            }
        };
        let raw_diagnosis = get(code_i).trim().to_string();
        let labels = label_i.map(get);
        let diagnosis = if raw_diagnosis.is_empty() {
            None
        } else {
            match parse_diagnosis_code(&raw_diagnosis, labels) {
                Ok(code) => Some(code),
                Err(e) => {
                    flags.push(IngestFlag::MalformedDiagnosis(e.to_string()));
                    None
                }
            }
        };
        records.push(AdmissionRecord {
            admission_id,
            date,
            diagnosis,
            raw_diagnosis,
            note: get(note_i).to_string(),
            flags,
        });
    }
    Ok(records)
}

/// Writes records in the comma-delimited admissions format.
pub fn write_admissions<W: std::io::Write>(out: W, records: &[AdmissionRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["admission_id", "date", "diagnosis_code", "diagnosis_labels", "note"])?;
    for r in records {
        let date = r.date.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default();
        let (code, labels) = match &r.diagnosis {
            Some(c) => (c.to_string(), c.label_path().unwrap_or_default()),
            None => (r.raw_diagnosis.clone(), String::new()),
        };
        w.write_record([r.admission_id.as_str(), &date, &code, &labels, &r.note])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<String, RecordError> {
    fs::read_to_string(path).map_err(|source| RecordError::Io {
        path: path.display().to_string(),
        source,
    })
}

type Rows = Vec<(u64, Vec<String>)>;

/// Reads a header + rows, skipping `#` comment lines. The delimiter is a tab
/// when the header line contains one, otherwise a comma.
fn read_delimited(text: &str, origin: &str) -> Result<(Vec<String>, Rows), RecordError> {
    let header_line = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .unwrap_or("");
    let delimiter = if header_line.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .comment(Some(b'#'))
        .flexible(true)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| RecordError::Row {
            path: origin.to_string(),
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| RecordError::Row {
            path: origin.to_string(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok((headers, rows))
}

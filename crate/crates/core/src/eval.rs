//! Reference standards, tiered matching and precision/recall scoring.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concepts::is_function_word;
use crate::pipeline::Pipeline;
use crate::prepare::prepare;
use crate::preprocess::tokenize;
use crate::record::{AdmissionRecord, AuditCategory, CodeTable};
use crate::results::ResultRecord;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{origin}:{line}: {message}")]
    Parse { origin: String, line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no classification result for {} record(s): {}", .0.len(), .0.join(", "))]
    MissingResults(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StandardKind {
    A,
    B,
    C,
}

impl FromStr for StandardKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(StandardKind::A),
            "B" => Ok(StandardKind::B),
            "C" => Ok(StandardKind::C),
            other => Err(format!("unknown reference standard {other:?} (expected A, B or C)")),
        }
    }
}

impl fmt::Display for StandardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardRecord {
    pub admission_id: String,
    /// Diagnosis code text; the diagnosis group for the Type B test.
    pub diagnosis: String,
    pub mapped: AuditCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceStandard {
    pub kind: StandardKind,
    pub records: Vec<StandardRecord>,
    /// Records with no mapped category: the true-negative pool.
    pub excluded: Vec<String>,
}

impl ReferenceStandard {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.admission_id.as_str()).collect()
    }
}

/// Lowercased content terms of a note after preparation: no delimiters,
/// markers, function words or tokens without a letter.
pub fn content_terms(text: &str, pipeline: &Pipeline) -> BTreeSet<String> {
    let prepared = prepare(text, &pipeline.store, &pipeline.spell);
    tokenize(&prepared)
        .into_iter()
        .filter(|t| !t.is_delimiter() && !t.shape.is_uncertainty_marker && !t.shape.is_fracture_symbol)
        .filter(|t| t.text.chars().any(char::is_alphabetic) && !is_function_word(&t.text))
        .map(|t| t.text.to_lowercase())
        .collect()
}

/// Diagnosis groups where some term occurs in at least half of the notes.
pub fn qualifying_groups<'a>(groups: impl IntoIterator<Item = (&'a str, &'a BTreeSet<String>)>) -> BTreeSet<String> {
    let mut notes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut counts: BTreeMap<&str, HashMap<&str, usize>> = BTreeMap::new();
    for (group, terms) in groups {
        *notes.entry(group).or_default() += 1;
        let c = counts.entry(group).or_default();
        for t in terms {
            *c.entry(t.as_str()).or_default() += 1;
        }
    }
    notes
        .into_iter()
        .filter(|(g, n)| counts[g].values().any(|&k| 2 * k >= *n))
        .map(|(g, _)| g.to_string())
        .collect()
}

/// Builds a reference standard.
///
/// Type A holds every record whose diagnosis maps to an audit category.
/// Type B keeps the Type A records whose diagnosis group passes the shared
/// term test. Type C has Type A membership; its recode credits are applied
/// when scoring.
pub fn build_standard<F>(records: &[AdmissionRecord], table: &CodeTable, kind: StandardKind, terms_of: F) -> ReferenceStandard
where
    F: Fn(&AdmissionRecord) -> BTreeSet<String>,
{
    let mut standard = ReferenceStandard {
        kind,
        records: Vec::new(),
        excluded: Vec::new(),
    };
    let mut mapped = Vec::new();
    for r in records {
        match r.diagnosis.as_ref().and_then(|d| table.map_to_audit(d).ok().map(|c| (d, c))) {
            Some((d, c)) => mapped.push((r, d.to_string(), c)),
            None => standard.excluded.push(r.admission_id.clone()),
        }
    }
    if kind == StandardKind::B {
        let terms: Vec<BTreeSet<String>> = mapped.iter().map(|(r, _, _)| terms_of(r)).collect();
        let keep = qualifying_groups(mapped.iter().zip(&terms).map(|((_, d, _), t)| (d.as_str(), t)));
        mapped.retain(|(_, d, _)| keep.contains(d));
    }
    standard.records = mapped
        .into_iter()
        .map(|(r, diagnosis, mapped)| StandardRecord {
            admission_id: r.admission_id.clone(),
            diagnosis,
            mapped,
        })
        .collect();
    standard
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MatchTier {
    Exact,
    RootGeneralized,
    ValidAlternative,
    Different,
    NoMatch,
}

impl MatchTier {
    pub const ALL: [MatchTier; 5] = [
        MatchTier::Exact,
        MatchTier::RootGeneralized,
        MatchTier::ValidAlternative,
        MatchTier::Different,
        MatchTier::NoMatch,
    ];

    pub fn is_match(self) -> bool {
        matches!(self, MatchTier::Exact | MatchTier::RootGeneralized | MatchTier::ValidAlternative)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MatchTier::Exact => "EXACT",
            MatchTier::RootGeneralized => "ROOT_GENERALIZED",
            MatchTier::ValidAlternative => "VALID_ALTERNATIVE",
            MatchTier::Different => "DIFFERENT",
            MatchTier::NoMatch => "NO_MATCH",
        }
    }
}

/// Unordered pairs of categories accepted as alternatives for each other.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlternativeTable {
    pairs: BTreeSet<(AuditCategory, AuditCategory)>,
}

impl AlternativeTable {
    /// Fails when one category is a prefix of the other.
    pub fn insert(&mut self, a: AuditCategory, b: AuditCategory) -> Result<(), String> {
        if a.is_comparable(&b) {
            return Err(format!("{a} and {b} are prefix-related, not alternatives"));
        }
        let pair = if a <= b { (a, b) } else { (b, a) };
        self.pairs.insert(pair);
        Ok(())
    }

    pub fn contains(&self, a: &AuditCategory, b: &AuditCategory) -> bool {
        let pair = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        self.pairs.contains(&pair)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// One `A <-> B` pair per line; `#` starts a comment line.
    pub fn parse(text: &str, origin: &str) -> Result<AlternativeTable, EvalError> {
        let mut table = AlternativeTable::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| EvalError::Parse {
                origin: origin.to_string(),
                line: i + 1,
                message,
            };
            let (a, b) = line.split_once("<->").ok_or_else(|| err(format!("expected `A <-> B`, got {line:?}")))?;
            let a: AuditCategory = a.parse().map_err(|e| err(format!("{e}")))?;
            let b: AuditCategory = b.parse().map_err(|e| err(format!("{e}")))?;
            table.insert(a, b).map_err(err)?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<AlternativeTable, EvalError> {
        Self::parse(&read(path)?, &path.display().to_string())
    }
}

/// Categories approved as recodes for OTHER-mapped records, globally or for
/// single admissions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecodeApprovals {
    pub categories: BTreeSet<AuditCategory>,
    pub records: BTreeSet<(AuditCategory, String)>,
}

impl RecodeApprovals {
    pub fn approves(&self, category: &AuditCategory, admission_id: &str) -> bool {
        self.categories.contains(category) || self.records.contains(&(category.clone(), admission_id.to_string()))
    }

    /// One `CATEGORY` or `CATEGORY @ admission_id` per line.
    pub fn parse(text: &str, origin: &str) -> Result<RecodeApprovals, EvalError> {
        let mut out = RecodeApprovals::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| EvalError::Parse {
                origin: origin.to_string(),
                line: i + 1,
                message,
            };
            let (cat, id) = match line.split_once('@') {
                Some((c, id)) if !id.trim().is_empty() => (c, Some(id.trim())),
                Some(_) => return Err(err("missing admission id after @".into())),
                None => (line, None),
            };
            let cat: AuditCategory = cat.parse().map_err(|e| err(format!("{e}")))?;
            if !cat.is_specific() {
                return Err(err(format!("{cat} is not a specific category")));
            }
            match id {
                Some(id) => out.records.insert((cat, id.to_string())),
                None => out.categories.insert(cat),
            };
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<RecodeApprovals, EvalError> {
        Self::parse(&read(path)?, &path.display().to_string())
    }
}

fn read(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// First tier satisfied, in protocol order.
pub fn tier_match(calculated: &[AuditCategory], mapped: &AuditCategory, alts: &AlternativeTable) -> MatchTier {
    if calculated.iter().any(|c| c == mapped) {
        MatchTier::Exact
    } else if calculated.iter().any(|c| mapped.is_strict_prefix_of(c)) {
        MatchTier::RootGeneralized
    } else if calculated.iter().any(|c| alts.contains(c, mapped)) {
        MatchTier::ValidAlternative
    } else if !calculated.is_empty() {
        MatchTier::Different
    } else {
        MatchTier::NoMatch
    }
}

/// A ratio as a percentage in tenths, rounded half up: 848 means 84.8%.
pub fn percent_tenths(num: u64, den: u64) -> Option<u64> {
    (den > 0).then(|| (2000 * num + den) / (2 * den))
}

/// F-score in tenths of a percent from precision and recall in tenths.
pub fn f_tenths(p: u64, r: u64) -> Option<u64> {
    (p + r > 0).then(|| (4 * p * r + p + r) / (2 * (p + r)))
}

pub fn format_tenths(t: Option<u64>) -> String {
    match t {
        Some(t) => format!("{}.{}%", t / 10, t % 10),
        None => "n/a".into(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierCounts {
    pub exact: u64,
    pub root_generalized: u64,
    pub valid_alternative: u64,
    pub different: u64,
    pub no_match: u64,
}

impl TierCounts {
    pub fn add(&mut self, tier: MatchTier) {
        *self.get_mut(tier) += 1;
    }

    fn get_mut(&mut self, tier: MatchTier) -> &mut u64 {
        match tier {
            MatchTier::Exact => &mut self.exact,
            MatchTier::RootGeneralized => &mut self.root_generalized,
            MatchTier::ValidAlternative => &mut self.valid_alternative,
            MatchTier::Different => &mut self.different,
            MatchTier::NoMatch => &mut self.no_match,
        }
    }

    pub fn get(&self, tier: MatchTier) -> u64 {
        match tier {
            MatchTier::Exact => self.exact,
            MatchTier::RootGeneralized => self.root_generalized,
            MatchTier::ValidAlternative => self.valid_alternative,
            MatchTier::Different => self.different,
            MatchTier::NoMatch => self.no_match,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub kind: StandardKind,
    pub records: u64,
    pub tiers: TierCounts,
    pub recode_credits: u64,
    pub tp: u64,
    pub fp: u64,
    /// Standard records not matched: `records - tp`.
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_score: Option<f64>,
}

impl EvaluationReport {
    /// Derives ratios from raw counts. `fn_` plus `tp` is the standard size.
    pub fn from_counts(kind: StandardKind, tp: u64, fp: u64, fn_: u64) -> EvaluationReport {
        let ratio = |n: u64, d: u64| (d > 0).then(|| n as f64 / d as f64);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f_score = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        EvaluationReport {
            kind,
            records: tp + fn_,
            tiers: TierCounts::default(),
            recode_credits: 0,
            tp,
            fp,
            fn_,
            tn: 0,
            precision,
            recall,
            f_score,
        }
    }

    pub fn precision_tenths(&self) -> Option<u64> {
        percent_tenths(self.tp, self.tp + self.fp)
    }

    pub fn recall_tenths(&self) -> Option<u64> {
        percent_tenths(self.tp, self.tp + self.fn_)
    }

    /// F as printed: computed from the one-decimal precision and recall.
    pub fn f_tenths(&self) -> Option<u64> {
        f_tenths(self.precision_tenths()?, self.recall_tenths()?)
    }

    /// Table row: standard, precision fraction, precision, recall fraction,
    /// recall, F-score; tab separated.
    pub fn table_row(&self) -> String {
        format!(
            "Type {}\t{} / {}\t{}\t{} / {}\t{}\t{}",
            self.kind,
            self.tp,
            self.tp + self.fp,
            format_tenths(self.precision_tenths()),
            self.tp,
            self.tp + self.fn_,
            format_tenths(self.recall_tenths()),
            format_tenths(self.f_tenths())
        )
    }

    pub const TABLE_HEADER: &'static str =
        "Reference Standard\tPrecision TP / (TP + FP)\t\tRecall (TP / TP + FN)\t\tF-Score";

    /// Header, row and the per-tier breakdown.
    pub fn render(&self) -> String {
        let mut out = format!("{}\n{}\n\nTier\tRecords\n", Self::TABLE_HEADER, self.table_row());
        for tier in MatchTier::ALL {
            out.push_str(&format!("{}\t{}\n", tier.as_str(), self.tiers.get(tier)));
        }
        if self.kind == StandardKind::C {
            out.push_str(&format!("RECODE_CREDIT\t{}\n", self.recode_credits));
        }
        out.push_str(&format!("TN\t{}\n", self.tn));
        out
    }
}

fn index(results: &[ResultRecord]) -> HashMap<&str, &ResultRecord> {
    results.iter().map(|r| (r.admission_id.as_str(), r)).collect()
}

fn lookup<'a>(standard: &ReferenceStandard, results: &'a [ResultRecord]) -> Result<HashMap<&'a str, &'a ResultRecord>, EvalError> {
    let by_id = index(results);
    let missing: Vec<String> = standard
        .records
        .iter()
        .filter(|r| !by_id.contains_key(r.admission_id.as_str()))
        .map(|r| r.admission_id.clone())
        .collect();
    if missing.is_empty() {
        Ok(by_id)
    } else {
        Err(EvalError::MissingResults(missing))
    }
}

fn recode_credit(record: &StandardRecord, calculated: &[AuditCategory], approvals: &RecodeApprovals) -> bool {
    record.mapped.is_other()
        && calculated
            .iter()
            .any(|c| c.is_specific() && approvals.approves(c, &record.admission_id))
}

/// Scores classifications against a standard. Approvals only count under
/// Type C, where each credited DIFFERENT record moves from FP to TP.
pub fn score(
    standard: &ReferenceStandard,
    results: &[ResultRecord],
    alts: &AlternativeTable,
    approvals: &RecodeApprovals,
) -> Result<EvaluationReport, EvalError> {
    let by_id = lookup(standard, results)?;
    let mut tiers = TierCounts::default();
    let mut credits = 0;
    for record in &standard.records {
        let calculated = &by_id[record.admission_id.as_str()].categories;
        let tier = tier_match(calculated, &record.mapped, alts);
        tiers.add(tier);
        if standard.kind == StandardKind::C && tier == MatchTier::Different && recode_credit(record, calculated, approvals) {
            credits += 1;
        }
    }
    let tp = tiers.exact + tiers.root_generalized + tiers.valid_alternative + credits;
    let fp = tiers.different - credits;
    let fn_ = standard.len() as u64 - tp;
    let tn = standard
        .excluded
        .iter()
        .filter(|id| by_id.get(id.as_str()).is_none_or(|r| r.categories.is_empty()))
        .count() as u64;
    let mut report = EvaluationReport::from_counts(standard.kind, tp, fp, fn_);
    report.tiers = tiers;
    report.recode_credits = credits;
    report.tn = tn;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OtherRecodeEntry {
    pub admission_id: String,
    /// Specific categories calculated for the record.
    pub calculated: Vec<AuditCategory>,
    pub approved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OtherRecodeReport {
    pub other_total: u64,
    pub with_specific: u64,
    pub approved: u64,
    pub entries: Vec<OtherRecodeEntry>,
}

/// OTHER-mapped records, those given specific categories, and those whose
/// specific category is approved for recoding.
pub fn other_recode_report(
    standard: &ReferenceStandard,
    results: &[ResultRecord],
    approvals: &RecodeApprovals,
) -> Result<OtherRecodeReport, EvalError> {
    let by_id = lookup(standard, results)?;
    let mut report = OtherRecodeReport::default();
    for record in standard.records.iter().filter(|r| r.mapped.is_other()) {
        report.other_total += 1;
        let calculated = &by_id[record.admission_id.as_str()].categories;
        let specific: Vec<AuditCategory> = calculated.iter().filter(|c| c.is_specific()).cloned().collect();
        if specific.is_empty() {
            continue;
        }
        report.with_specific += 1;
        let approved = recode_credit(record, calculated, approvals);
        report.approved += u64::from(approved);
        report.entries.push(OtherRecodeEntry {
            admission_id: record.admission_id.clone(),
            calculated: specific,
            approved,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Versions;

    fn cat(s: &str) -> AuditCategory {
        s.parse().unwrap()
    }

    fn contusion_alts() -> AlternativeTable {
        AlternativeTable::parse("CRANIAL:TRAUMA:CONTUSIONS <-> CRANIAL:TRAUMA:TBI", "t").unwrap()
    }

    #[test]
    fn tier_examples() {
        let alts = contusion_alts();
        let contusions = [cat("CRANIAL:TRAUMA:CONTUSIONS")];
        assert_eq!(tier_match(&contusions, &cat("CRANIAL:TRAUMA"), &alts), MatchTier::RootGeneralized);
        assert_eq!(tier_match(&contusions, &cat("CRANIAL:TRAUMA:TBI"), &alts), MatchTier::ValidAlternative);
        assert_eq!(tier_match(&[], &cat("CRANIAL:NEOPLASIA"), &alts), MatchTier::NoMatch);
        assert_eq!(tier_match(&[cat("AVM")], &cat("CRANIAL:NEOPLASIA"), &alts), MatchTier::Different);
        let both = [cat("CRANIAL:TRAUMA:TBI"), cat("CRANIAL:TRAUMA:CONTUSIONS")];
        assert_eq!(tier_match(&both, &cat("CRANIAL:TRAUMA:TBI"), &alts), MatchTier::Exact);
    }

    #[test]
    fn table_four_rows() {
        let rows = [
            (StandardKind::A, 6705, 1205, 2856, "Type A\t6705 / 7910\t84.8%\t6705 / 9561\t70.1%\t76.8%"),
            (StandardKind::B, 6472, 727, 2072, "Type B\t6472 / 7199\t89.9%\t6472 / 8544\t75.7%\t82.2%"),
            (StandardKind::C, 6906, 1004, 2655, "Type C\t6906 / 7910\t87.3%\t6906 / 9561\t72.2%\t79.0%"),
        ];
        for (kind, tp, fp, fn_, row) in rows {
            assert_eq!(EvaluationReport::from_counts(kind, tp, fp, fn_).table_row(), row);
        }
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(percent_tenths(1, 8), Some(125));
        assert_eq!(percent_tenths(1, 16), Some(63));
        assert_eq!(percent_tenths(0, 0), None);
        assert_eq!(f_tenths(1000, 1000), Some(1000));
        assert_eq!(f_tenths(0, 0), None);
    }

    #[test]
    fn alternative_and_approval_files() {
        assert!(AlternativeTable::parse("CRANIAL <-> CRANIAL:TRAUMA", "t").is_err());
        assert!(AlternativeTable::parse("junk", "t").is_err());
        let alts = contusion_alts();
        assert!(alts.contains(&cat("CRANIAL:TRAUMA:TBI"), &cat("CRANIAL:TRAUMA:CONTUSIONS")));
        let a = RecodeApprovals::parse("# c\nCRANIAL:TRAUMA:SDH\nSPINE:TRAUMA @ 17\n", "t").unwrap();
        assert!(a.approves(&cat("CRANIAL:TRAUMA:SDH"), "1"));
        assert!(a.approves(&cat("SPINE:TRAUMA"), "17"));
        assert!(!a.approves(&cat("SPINE:TRAUMA"), "18"));
        assert!(RecodeApprovals::parse("OTHER:FRACTURE", "t").is_err());
    }

    fn result(id: &str, cats: &[&str]) -> ResultRecord {
        ResultRecord {
            admission_id: id.into(),
            categories: cats.iter().map(|c| cat(c)).collect(),
            flags: vec![],
            cause_spans: vec![],
            domain_tags: vec![],
            unresolved: vec![],
            versions: Versions {
                lexicon: String::new(),
                rules: String::new(),
                tunables: String::new(),
            },
        }
    }

    fn standard(kind: StandardKind, rows: &[(&str, &str)]) -> ReferenceStandard {
        ReferenceStandard {
            kind,
            records: rows
                .iter()
                .map(|(id, c)| StandardRecord {
                    admission_id: id.to_string(),
                    diagnosis: "218".into(),
                    mapped: cat(c),
                })
                .collect(),
            excluded: vec!["tn".into()],
        }
    }

    #[test]
    fn score_counts_and_recode_credit() {
        let rows = [("1", "CRANIAL:TRAUMA"), ("2", "OTHER"), ("3", "OTHER"), ("4", "AVM")];
        let results = vec![
            result("1", &["CRANIAL:TRAUMA:SDH"]),
            result("2", &["CRANIAL:TRAUMA:SDH"]),
            result("3", &["SPINE:DEGENERATIVE"]),
            result("4", &[]),
            result("tn", &[]),
        ];
        let approvals = RecodeApprovals::parse("CRANIAL:TRAUMA:SDH", "t").unwrap();
        let a = score(&standard(StandardKind::A, &rows), &results, &contusion_alts(), &approvals).unwrap();
        assert_eq!((a.tp, a.fp, a.fn_, a.tn), (1, 2, 3, 1));
        let c = score(&standard(StandardKind::C, &rows), &results, &contusion_alts(), &approvals).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.recode_credits), (2, 1, 2, 1));
        let o = other_recode_report(&standard(StandardKind::C, &rows), &results, &approvals).unwrap();
        assert_eq!((o.other_total, o.with_specific, o.approved), (2, 2, 1));
        let missing = score(&standard(StandardKind::A, &rows), &results[..2], &contusion_alts(), &approvals);
        assert!(matches!(missing, Err(EvalError::MissingResults(ids)) if ids == ["3", "4"]));
    }

    #[test]
    fn group_threshold() {
        let t = |w: &[&str]| w.iter().map(|s| s.to_string()).collect::<BTreeSet<String>>();
        let notes = [t(&["fracture", "skull"]), t(&["fracture"]), t(&["fall"])];
        let q = qualifying_groups(notes.iter().map(|n| ("g", n)));
        assert!(q.contains("g"));
        let notes = [t(&["a"]), t(&["b"]), t(&["c"])];
        assert!(qualifying_groups(notes.iter().map(|n| ("g", n))).is_empty());
    }
}

//! End-to-end classification of admission records.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concepts::{identify_admission_cause, identify_audit_categories, identify_domain_concepts, ConceptTag, TagKind};
use crate::config::Tunables;
use crate::lexicon::{LexiconError, LexiconStore};
use crate::prepare::{prepare, PreparedText, SpellSettings};
use crate::preprocess::{preprocess, AnnotatedNote, PreprocessSettings};
use crate::record::{AdmissionRecord, AuditCategory, IngestFlag};
use crate::results::{ResultFlag, ResultRecord, SpanRecord};
use crate::rules::{CategoryMatch, RuleSet};
use crate::starter;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub lexicon: String,
    pub rules: String,
    /// Spell, modifier and uncertainty settings in force.
    pub tunables: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub admission_id: String,
    pub categories: Vec<CategoryMatch>,
    pub note: AnnotatedNote,
    pub versions: Versions,
    pub record_flags: Vec<IngestFlag>,
    /// Set when classification of this record panicked.
    pub failed: bool,
    pub diagnostics: Vec<String>,
}

impl ClassificationResult {
    pub fn category_set(&self) -> Vec<AuditCategory> {
        self.categories.iter().map(|m| m.category.clone()).collect()
    }

    pub fn tags_of(&self, kind: TagKind) -> impl Iterator<Item = &ConceptTag> {
        self.note.tags.iter().filter(move |t| t.kind == kind)
    }

    pub fn cause_spans(&self) -> Vec<&ConceptTag> {
        self.tags_of(TagKind::AdmissionCause).collect()
    }

    pub fn domain_tags(&self) -> Vec<&ConceptTag> {
        self.tags_of(TagKind::DomainConcept).collect()
    }

    pub fn unresolved(&self) -> Vec<&ConceptTag> {
        self.tags_of(TagKind::Unresolved).collect()
    }

    /// Number of tokens that are not delimiters.
    pub fn content_tokens(&self) -> usize {
        self.note.tokens.iter().filter(|t| !t.is_delimiter()).count()
    }

    /// The serialized form written to results files.
    pub fn to_record(&self) -> ResultRecord {
        let span = |t: &ConceptTag| {
            let bytes = self.note.byte_span(&t.tokens);
            SpanRecord {
                start: bytes.start,
                end: bytes.end,
                text: self.note.span_text(&t.tokens).to_string(),
                label: t.payload.clone(),
            }
        };
        let mut flags: Vec<ResultFlag> = self
            .categories
            .iter()
            .filter(|m| m.is_uncertain())
            .map(|m| ResultFlag {
                category: Some(m.category.clone()),
                flag: "UNCERTAIN".into(),
            })
            .collect();
        for f in &self.record_flags {
            let flag = match f {
                IngestFlag::MalformedDiagnosis(_) => "MALFORMED_DIAGNOSIS",
                IngestFlag::MalformedDate(_) => "MALFORMED_DATE",
            };
            flags.push(ResultFlag {
                category: None,
                flag: flag.into(),
            });
        }
        if self.failed {
            flags.push(ResultFlag {
                category: None,
                flag: "CLASSIFICATION_FAILED".into(),
            });
        }
        ResultRecord {
            admission_id: self.admission_id.clone(),
            categories: self.category_set(),
            flags,
            cause_spans: self.tags_of(TagKind::AdmissionCause).map(span).collect(),
            domain_tags: self.tags_of(TagKind::DomainConcept).map(span).collect(),
            unresolved: self.tags_of(TagKind::Unresolved).map(span).collect(),
            versions: self.versions.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub records: usize,
    pub failed: usize,
    pub by_category: BTreeMap<String, usize>,
    pub uncategorized: usize,
    pub content_tokens: usize,
    pub unresolved_tokens: usize,
    /// (admission id, message) for every record diagnostic.
    pub diagnostics: Vec<(String, String)>,
}

impl CorpusSummary {
    pub fn unresolved_rate(&self) -> f64 {
        if self.content_tokens == 0 {
            0.0
        } else {
            self.unresolved_tokens as f64 / self.content_tokens as f64
        }
    }

    pub fn from_results(results: &[ClassificationResult]) -> CorpusSummary {
        let mut s = CorpusSummary {
            records: results.len(),
            ..Default::default()
        };
        for r in results {
            s.failed += usize::from(r.failed);
            if r.categories.is_empty() {
                s.uncategorized += 1;
            }
            for c in r.category_set() {
                *s.by_category.entry(c.to_string()).or_default() += 1;
            }
            s.content_tokens += r.content_tokens();
            s.unresolved_tokens += r.unresolved().iter().map(|t| t.tokens.len()).sum::<usize>();
            s.diagnostics
                .extend(r.diagnostics.iter().map(|d| (r.admission_id.clone(), d.clone())));
        }
        s
    }
}

/// Lexicon, rules and tunables for classification. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub store: LexiconStore,
    pub rules: RuleSet,
    pub spell: SpellSettings,
    pub preprocess: PreprocessSettings,
    pub tunables_label: String,
}

impl Pipeline {
    pub fn new(store: LexiconStore, rules: RuleSet) -> Pipeline {
        Pipeline {
            store,
            rules,
            spell: SpellSettings::default(),
            preprocess: PreprocessSettings::default(),
            tunables_label: Tunables::default().label(),
        }
    }

    /// The bundled seed lexicon and rules with default tunables.
    pub fn starter() -> Result<Pipeline, LexiconError> {
        Ok(Pipeline::new(starter::lexicon()?, starter::rules()))
    }

    pub fn versions(&self) -> Versions {
        Versions {
            lexicon: self.store.version().to_string(),
            rules: self.rules.version().to_string(),
            tunables: self.tunables_label.clone(),
        }
    }

    /// Runs every stage over raw note text.
    pub fn annotate(&self, text: &str) -> (AnnotatedNote, Vec<CategoryMatch>) {
        let prepared = prepare(text, &self.store, &self.spell);
        let mut note = preprocess(prepared, &self.store, &self.preprocess);
        let causes = identify_admission_cause(&note, &self.store);
        note.tags.extend(causes);
        let (matches, evidence) = identify_audit_categories(&note, &self.rules);
        note.tags.extend(evidence);
        let rest = identify_domain_concepts(&note, &self.store);
        note.tags.extend(rest);
        note.tags.sort_by_key(|t| t.tokens.start);
        (note, matches)
    }

    pub fn classify_note(&self, record: &AdmissionRecord) -> ClassificationResult {
        let (note, categories) = self.annotate(&record.note);
        ClassificationResult {
            admission_id: record.admission_id.clone(),
            categories,
            diagnostics: note.diagnostics.clone(),
            note,
            versions: self.versions(),
            record_flags: record.flags.clone(),
            failed: false,
        }
    }

    fn classify_isolated(&self, record: &AdmissionRecord) -> ClassificationResult {
        match panic::catch_unwind(AssertUnwindSafe(|| self.classify_note(record))) {
            Ok(r) => r,
            Err(cause) => {
                let message = cause
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| cause.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "unknown panic".into());
                ClassificationResult {
                    admission_id: record.admission_id.clone(),
                    categories: Vec::new(),
                    note: preprocess(PreparedText::unchanged(""), &self.store, &self.preprocess),
                    versions: self.versions(),
                    record_flags: record.flags.clone(),
                    failed: true,
                    diagnostics: vec![format!("classification failed: {message}")],
                }
            }
        }
    }

    /// Classifies records in parallel. Results keep input order, and a
    /// record that fails is reported in place without stopping the batch.
    pub fn classify_corpus(&self, records: &[AdmissionRecord]) -> (Vec<ClassificationResult>, CorpusSummary) {
        let results: Vec<ClassificationResult> = records.par_iter().map(|r| self.classify_isolated(r)).collect();
        let summary = CorpusSummary::from_results(&results);
        (results, summary)
    }
}

/// Classifies one record with default tunables.
pub fn classify_note(record: &AdmissionRecord, store: &LexiconStore, rules: &RuleSet) -> ClassificationResult {
    Pipeline::new(store.clone(), rules.clone()).classify_note(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::coverage_violations;
    use crate::preprocess::MeasurementValue;

    const TABLE_TWO: &str = "Ped v car left frontal depressed fracture, GCS 3, ETOH";

    fn pipeline() -> Pipeline {
        Pipeline::starter().unwrap()
    }

    #[test]
    fn table_two_record() {
        let r = pipeline().classify_note(&AdmissionRecord::from_note("1", TABLE_TWO));
        let cats: Vec<String> = r.category_set().iter().map(|c| c.to_string()).collect();
        assert_eq!(cats, ["CRANIAL:TRAUMA:SKULL FRACTURE"]);
        let causes = r.cause_spans();
        assert_eq!(causes.len(), 1);
        assert_eq!(r.note.span_text(&causes[0].tokens), "Ped v car");
        assert!(r
            .note
            .measurements
            .iter()
            .any(|m| m.value == MeasurementValue::Gcs { score: 3 }));
        assert!(r
            .domain_tags()
            .iter()
            .any(|t| r.note.span_text(&t.tokens) == "ETOH" && t.payload.as_deref() == Some("substance")));
        assert!(coverage_violations(&r.note).is_empty());
    }

    #[test]
    fn facet_variants_agree() {
        let p = pipeline();
        let a = p.classify_note(&AdmissionRecord::from_note("a", "C7 right superior articular facet #"));
        let b = p.classify_note(&AdmissionRecord::from_note("b", "#R C7 sup art facet"));
        assert_eq!(a.category_set(), b.category_set());
        assert_eq!(a.category_set()[0].to_string(), "SPINE:TRAUMA:FRACTURE");
    }

    #[test]
    fn empty_note_and_order() {
        let p = pipeline();
        let records = vec![
            AdmissionRecord::from_note("x", "small SDH"),
            AdmissionRecord::from_note("y", ""),
            AdmissionRecord::from_note("z", "? SAH"),
        ];
        let (results, summary) = p.classify_corpus(&records);
        let ids: Vec<&str> = results.iter().map(|r| r.admission_id.as_str()).collect();
        assert_eq!(ids, ["x", "y", "z"]);
        assert!(results[1].categories.is_empty() && results[1].note.tags.is_empty());
        assert_eq!(summary.records, 3);
        assert_eq!(summary.uncategorized, 1);
        assert_eq!(results[2].to_record().flags[0].flag, "UNCERTAIN");
    }
}

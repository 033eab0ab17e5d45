//! Stage 3 tagging: admission causes, audit evidence, domain concepts.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::lexicon::{LexiconKind, LexiconStore, Payload};
use crate::preprocess::AnnotatedNote;
use crate::rules::{apply_rules, CategoryMatch, RuleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TagKind {
    AdmissionCause,
    AuditEvidence,
    DomainConcept,
    Modifier,
    Measurement,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptTag {
    pub tokens: Range<usize>,
    pub kind: TagKind,
    /// Cause id, category, domain label, polarity or measurement kind.
    pub payload: Option<String>,
}

impl ConceptTag {
    fn new(tokens: Range<usize>, kind: TagKind, payload: Option<String>) -> ConceptTag {
        ConceptTag { tokens, kind, payload }
    }
}

pub const FUNCTION_WORD_DOMAIN: &str = "function-word";

const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "of", "in", "on", "at", "to", "from", "with", "by", "for", "as", "is", "was", "were",
    "be", "been", "has", "had", "have", "this", "that", "these", "those", "it", "its", "into", "onto", "over", "under",
    "after", "before", "then", "than", "but", "also", "v", "vs", "x", "pt", "patient", "he", "she", "they", "his",
    "her", "their", "at", "per", "via", "some", "any", "both",
];

pub fn is_function_word(word: &str) -> bool {
    STOP_WORDS.contains(&word.to_lowercase().as_str())
}

fn tagged(note: &AnnotatedNote) -> Vec<bool> {
    let mut mask = vec![false; note.tokens.len()];
    for t in &note.tags {
        for i in t.tokens.clone() {
            mask[i] = true;
        }
    }
    mask
}

/// Longest lexicon match of `kind` starting at `i`, not crossing `end` or a
/// token already marked in `taken`.
fn longest(
    note: &AnnotatedNote,
    store: &LexiconStore,
    kind: LexiconKind,
    i: usize,
    end: usize,
    taken: &[bool],
) -> Option<(usize, Payload)> {
    let mut limit = 0;
    while limit < store.max_phrase_tokens() && i + limit < end && !taken[i + limit] {
        limit += 1;
    }
    (1..=limit).rev().find_map(|len| {
        let phrase: Vec<&str> = note.tokens[i..i + len].iter().map(|t| t.text.as_str()).collect();
        store
            .lookup(&phrase.join(" "), Some(kind))
            .first()
            .map(|e| (len, e.payload.clone()))
    })
}

/// Admission-cause spans: phrase dictionary first, then keywords over the
/// tokens the phrases left uncovered. Spans never cross a clause boundary.
pub fn identify_admission_cause(note: &AnnotatedNote, store: &LexiconStore) -> Vec<ConceptTag> {
    let mut taken = tagged(note);
    let mut spans: Vec<(Range<usize>, String)> = Vec::new();
    for kind in [LexiconKind::AdmissionCausePhrase, LexiconKind::AdmissionCauseKeyword] {
        for clause in note.sentences.iter().flat_map(|s| s.clauses.iter()) {
            let mut i = clause.start;
            while i < clause.end {
                if taken[i] {
                    i += 1;
                    continue;
                }
                match longest(note, store, kind, i, clause.end, &taken) {
                    Some((len, Payload::Cause { id })) => {
                        taken[i..i + len].iter_mut().for_each(|t| *t = true);
                        spans.push((i..i + len, id));
                        i += len;
                    }
                    _ => i += 1,
                }
            }
        }
    }
    spans.sort_by_key(|s| s.0.start);
    spans
        .into_iter()
        .map(|(r, id)| ConceptTag::new(r, TagKind::AdmissionCause, Some(id)))
        .collect()
}

/// Runs the rules and tags trigger tokens as audit evidence. Admission-cause
/// tags must already be on the note.
pub fn identify_audit_categories(note: &AnnotatedNote, rules: &RuleSet) -> (Vec<CategoryMatch>, Vec<ConceptTag>) {
    let matches = apply_rules(note, rules);
    let mut taken = tagged(note);
    let mut tags = Vec::new();
    for m in &matches {
        let free: Vec<usize> = m.trigger.clone().filter(|&i| !taken[i]).collect();
        if free.len() == m.trigger.len() {
            tags.push(ConceptTag::new(m.trigger.clone(), TagKind::AuditEvidence, Some(m.category.to_string())));
        } else {
            for i in free {
                tags.push(ConceptTag::new(i..i + 1, TagKind::AuditEvidence, Some(m.category.to_string())));
            }
        }
        m.trigger.clone().for_each(|i| taken[i] = true);
    }
    (matches, tags)
}

/// Tags every content token not yet tagged: modifier triggers, measurements,
/// domain lexicon matches (longest first), resolved abbreviations and
/// function words. Anything left becomes UNRESOLVED.
pub fn identify_domain_concepts(note: &AnnotatedNote, store: &LexiconStore) -> Vec<ConceptTag> {
    let mut taken = tagged(note);
    let mut tags = Vec::new();
    let claim = |tags: &mut Vec<ConceptTag>, taken: &mut Vec<bool>, r: Range<usize>, kind, payload: String| {
        if r.clone().all(|i| !taken[i]) {
            r.clone().for_each(|i| taken[i] = true);
            tags.push(ConceptTag::new(r, kind, Some(payload)));
        }
    };
    for m in &note.modifiers {
        claim(&mut tags, &mut taken, m.tokens.clone(), TagKind::Modifier, m.polarity.to_string());
    }
    for m in &note.measurements {
        let kind = serde_json::to_value(m.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        claim(&mut tags, &mut taken, m.tokens.clone(), TagKind::Measurement, kind);
    }
    for clause in note.sentences.iter().flat_map(|s| s.clauses.iter()) {
        let mut i = clause.start;
        while i < clause.end {
            if taken[i] {
                i += 1;
                continue;
            }
            if let Some((len, Payload::Domain { tag })) = longest(note, store, LexiconKind::DomainConcept, i, clause.end, &taken) {
                claim(&mut tags, &mut taken, i..i + len, TagKind::DomainConcept, tag);
                i += len;
                continue;
            }
            if note.sense_resolutions.contains_key(&i) {
                claim(&mut tags, &mut taken, i..i + 1, TagKind::DomainConcept, "abbreviation".into());
            } else if is_function_word(&note.tokens[i].text) {
                claim(&mut tags, &mut taken, i..i + 1, TagKind::DomainConcept, FUNCTION_WORD_DOMAIN.into());
            } else {
                taken[i] = true;
                tags.push(ConceptTag::new(i..i + 1, TagKind::Unresolved, None));
            }
            i += 1;
        }
    }
    tags.sort_by_key(|t| t.tokens.start);
    tags
}

/// Content tokens carrying no tag, or more than one.
pub fn coverage_violations(note: &AnnotatedNote) -> Vec<usize> {
    let mut count = vec![0usize; note.tokens.len()];
    for t in &note.tags {
        t.tokens.clone().for_each(|i| count[i] += 1);
    }
    (0..note.tokens.len())
        .filter(|&i| !note.tokens[i].is_delimiter() && count[i] != 1)
        .collect()
}

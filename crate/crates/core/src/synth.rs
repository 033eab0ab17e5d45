//! Seeded synthetic corpus generator with ground truth.
//!
//! Notes are assembled from the rule set's own triggers and the first-choice
//! members of their `requires` groups, plus distractors that cannot fire a
//! rule: laterality, GCS, ETOH, an admission-cause phrase and a negated
//! trigger in its own clause.

use std::io::{self, Write};

use chrono::{Duration, NaiveDate};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lexicon::{LexiconKind, LexiconStore};
use crate::prepare::{prepare, SpellSettings};
use crate::record::{AdmissionRecord, AuditCategory, CodeTable, DiagnosisCode};
use crate::rules::{Rule, RuleSet, Special, Term};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub size: usize,
    /// Probability that a record carries exactly one perturbation.
    pub noise: f64,
    /// Records coded to OTHER whose note describes a specific category.
    pub mislabeled_other: usize,
}

impl GeneratorSpec {
    pub fn new(seed: u64, size: usize, noise: f64) -> GeneratorSpec {
        GeneratorSpec {
            seed,
            size,
            noise,
            mislabeled_other: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PerturbationKind {
    Misspelling,
    Reorder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    /// `original -> perturbed` fragment.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub admission_id: String,
    pub diagnosis: String,
    /// Category the diagnosis code maps to.
    pub mapped: AuditCategory,
    /// Category the note was built to express.
    pub intended: AuditCategory,
    pub rule_id: String,
    /// Note before any perturbation.
    pub clean_note: String,
    pub perturbation: Option<Perturbation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub records: Vec<AdmissionRecord>,
    pub truth: Vec<TruthRecord>,
}

impl SyntheticCorpus {
    pub fn write_corpus<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        crate::record::write_admissions(out, &self.records)
    }

    pub fn write_truth<W: Write>(&self, mut out: W) -> io::Result<()> {
        for t in &self.truth {
            serde_json::to_writer(&mut out, t)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

fn render_term(term: &Term, rng: &mut ChaCha8Rng) -> String {
    match term {
        Term::Phrase(words) => words.join(" "),
        Term::Special(Special::VertebralLevel) => {
            let (region, max) = *[("C", 7), ("T", 12), ("L", 5)].choose(rng).expect("non-empty");
            format!("{region}{}", rng.random_range(1..=max))
        }
        Term::Special(Special::Gcs) => format!("GCS {}", rng.random_range(3..=15)),
        Term::Special(Special::Dose) => format!("{}mg", rng.random_range(1..=20)),
        Term::Special(Special::Size) => format!("{}mm", rng.random_range(2..=40)),
        Term::Special(Special::Cause) => "fall".into(),
    }
}

/// Core clause for a rule: one trigger plus one member of each requires
/// group, in shuffled order.
fn core_clause(rule: &Rule, rng: &mut ChaCha8Rng) -> String {
    let mut parts = vec![render_term(rule.triggers.choose(rng).expect("rules have triggers"), rng)];
    for group in &rule.requires {
        parts.push(render_term(group.choose(rng).expect("groups are non-empty"), rng));
    }
    let trigger = parts.remove(0);
    let at = rng.random_range(0..=parts.len());
    parts.insert(at, trigger);
    parts.join(" ")
}

const LATERALITY: &[&str] = &["left", "right", "bilateral", "L", "R"];

fn misspell(word: &str, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let i = rng.random_range(1..chars.len() - 1);
    match rng.random_range(0..3) {
        0 => chars.swap(i, i + 1),
        1 => {
            chars.remove(i);
        }
        _ => {
            let c = chars[i];
            chars.insert(i, c);
        }
    }
    chars.into_iter().collect()
}

fn perturb(clauses: &mut [String], rng: &mut ChaCha8Rng) -> Perturbation {
    let words: Vec<(usize, usize, String)> = clauses
        .iter()
        .enumerate()
        .flat_map(|(c, clause)| {
            clause
                .split(' ')
                .enumerate()
                .filter(|(_, w)| w.len() >= 5 && w.chars().all(|ch| ch.is_ascii_lowercase()))
                .map(move |(i, w)| (c, i, w.to_string()))
                .collect::<Vec<_>>()
        })
        .collect();
    let reorder = clauses.len() >= 2 && (words.is_empty() || rng.random_bool(0.5));
    if reorder || words.is_empty() {
        if clauses.len() >= 2 {
            let i = rng.random_range(0..clauses.len() - 1);
            let detail = format!("{} | {} -> {} | {}", clauses[i], clauses[i + 1], clauses[i + 1], clauses[i]);
            clauses.swap(i, i + 1);
            return Perturbation {
                kind: PerturbationKind::Reorder,
                detail,
            };
        }
        let mut tokens: Vec<String> = clauses[0].split(' ').map(String::from).collect();
        let before = clauses[0].clone();
        if tokens.len() >= 2 {
            tokens.swap(0, 1);
        }
        clauses[0] = tokens.join(" ");
        return Perturbation {
            kind: PerturbationKind::Reorder,
            detail: format!("{before} -> {}", clauses[0]),
        };
    }
    let (c, i, word) = words.choose(rng).expect("non-empty").clone();
    let bad = misspell(&word, rng);
    let mut tokens: Vec<String> = clauses[c].split(' ').map(String::from).collect();
    tokens[i] = bad.clone();
    clauses[c] = tokens.join(" ");
    Perturbation {
        kind: PerturbationKind::Misspelling,
        detail: format!("{word} -> {bad}"),
    }
}

/// Per record: whether its note is recoverable. A clean note always is; a
/// perturbed one only when preparation maps it back to the prepared clean
/// note.
pub fn recoverable(corpus: &SyntheticCorpus, store: &LexiconStore, spell: &SpellSettings) -> Vec<bool> {
    corpus
        .records
        .iter()
        .zip(&corpus.truth)
        .map(|(r, t)| t.perturbation.is_none() || prepare(&r.note, store, spell).text == prepare(&t.clean_note, store, spell).text)
        .collect()
}

/// Lower bound on recall: recoverable records over all records, in tenths
/// of a percent rounded down.
pub fn reachable_bound_tenths(corpus: &SyntheticCorpus, store: &LexiconStore, spell: &SpellSettings) -> u64 {
    let flags = recoverable(corpus, store, spell);
    if flags.is_empty() {
        return 1000;
    }
    flags.iter().filter(|&&f| f).count() as u64 * 1000 / flags.len() as u64
}

/// Builds a corpus deterministically from `spec.seed`. Rules whose category
/// has no diagnosis code in `table` are not used.
pub fn generate(spec: &GeneratorSpec, rules: &RuleSet, store: &LexiconStore, table: &CodeTable) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let usable: Vec<(&Rule, Vec<DiagnosisCode>)> = rules
        .rules()
        .iter()
        .map(|r| (r, table.codes_for(&r.category)))
        .filter(|(_, codes)| !codes.is_empty())
        .collect();
    let specific: Vec<&(&Rule, Vec<DiagnosisCode>)> = usable.iter().filter(|(r, _)| r.category.is_specific()).collect();
    let other_codes = table.codes_for(&"OTHER".parse().expect("valid category"));
    let causes: Vec<&str> = store
        .of_kind(LexiconKind::AdmissionCausePhrase)
        .map(|e| e.surface.as_str())
        .collect();
    let negatable: Vec<String> = usable
        .iter()
        .filter(|(r, _)| r.requires.is_empty())
        .flat_map(|(r, _)| r.triggers.iter())
        .filter_map(|t| match t {
            Term::Phrase(w) if w.iter().all(|w| w.chars().all(char::is_alphabetic)) => Some(w.join(" ")),
            _ => None,
        })
        .collect();
    let start = NaiveDate::from_ymd_opt(2013, 1, 1).expect("valid date");

    let mut corpus = SyntheticCorpus {
        records: Vec::with_capacity(spec.size),
        truth: Vec::with_capacity(spec.size),
    };
    if usable.is_empty() {
        return corpus;
    }
    for n in 0..spec.size {
        let mislabel = n < spec.mislabeled_other && !other_codes.is_empty() && !specific.is_empty();
        let (rule, codes) = if mislabel {
            *specific.choose(&mut rng).expect("non-empty")
        } else {
            usable.choose(&mut rng).expect("non-empty")
        };
        let code = if mislabel {
            other_codes.choose(&mut rng).expect("non-empty").clone()
        } else {
            codes.choose(&mut rng).expect("non-empty").clone()
        };

        let mut core = core_clause(rule, &mut rng);
        if rng.random_bool(0.4) {
            core = format!("{} {core}", LATERALITY.choose(&mut rng).expect("non-empty"));
        }
        if !causes.is_empty() && rng.random_bool(0.5) {
            core = format!("{} {core}", causes.choose(&mut rng).expect("non-empty"));
        }
        let mut clauses = vec![core];
        if rng.random_bool(0.5) {
            clauses.push(format!("GCS {}", rng.random_range(3..=15)));
        }
        if rng.random_bool(0.3) {
            clauses.push("ETOH".into());
        }
        if !negatable.is_empty() && rng.random_bool(0.3) {
            clauses.push(format!("no {}", negatable.choose(&mut rng).expect("non-empty")));
        }
        let clean_note = clauses.join(", ");
        let mut perturbation = None;
        if spec.noise > 0.0 && rng.random_bool(spec.noise.min(1.0)) {
            // an edit can be a no-op (swapping equal letters or clauses)
            for _ in 0..8 {
                let mut trial = clauses.clone();
                let p = perturb(&mut trial, &mut rng);
                if trial.join(", ") != clean_note {
                    clauses = trial;
                    perturbation = Some(p);
                    break;
                }
            }
        }
        let note = clauses.join(", ");

        let admission_id = format!("S{:06}", n + 1);
        let mapped = table.map_to_audit(&code).expect("code comes from the table");
        corpus.records.push(AdmissionRecord {
            admission_id: admission_id.clone(),
            date: Some(start + Duration::days(rng.random_range(0..1460))),
            diagnosis: Some(code.clone()),
            raw_diagnosis: code.to_string(),
            note,
            flags: Vec::new(),
        });
        corpus.truth.push(TruthRecord {
            admission_id,
            diagnosis: code.to_string(),
            mapped,
            intended: rule.category.clone(),
            rule_id: rule.id.clone(),
            clean_note,
            perturbation,
        });
    }
    corpus
}

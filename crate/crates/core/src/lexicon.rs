//! Static dictionaries and the expert-refined ontology.
//!
//! A [`LexiconStore`] is an immutable, versioned set of [`LexiconEntry`]s
//! indexed by normalized surface and variant. Refinements produce a new store
//! and are written to an append-only journal.
//!
//! Lexicon files hold one entry per line:
//!
//! ```text
//! surface | variant1, variant2 | KIND | payload
//! ```
//!
//! Lines starting with `#` in column 1 are comments.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LexiconKind {
    Abbreviation,
    DomainConcept,
    AdmissionCausePhrase,
    AdmissionCauseKeyword,
    Modifier,
    SpellTarget,
}

impl LexiconKind {
    pub const ALL: [LexiconKind; 6] = [
        LexiconKind::Abbreviation,
        LexiconKind::DomainConcept,
        LexiconKind::AdmissionCausePhrase,
        LexiconKind::AdmissionCauseKeyword,
        LexiconKind::Modifier,
        LexiconKind::SpellTarget,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LexiconKind::Abbreviation => "ABBREVIATION",
            LexiconKind::DomainConcept => "DOMAIN_CONCEPT",
            LexiconKind::AdmissionCausePhrase => "ADMISSION_CAUSE_PHRASE",
            LexiconKind::AdmissionCauseKeyword => "ADMISSION_CAUSE_KEYWORD",
            LexiconKind::Modifier => "MODIFIER",
            LexiconKind::SpellTarget => "SPELL_TARGET",
        }
    }
}

impl fmt::Display for LexiconKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LexiconKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        LexiconKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown lexicon kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Polarity {
    Negation,
    Uncertainty,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Negation => "NEGATION",
            Polarity::Uncertainty => "UNCERTAINTY",
        })
    }
}

/// One expansion of an abbreviation, with the cue terms that select it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sense {
    pub expansion: String,
    pub cues: Vec<String>,
    /// Frequency rank; 1 is the most frequent sense.
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Abbreviation { senses: Vec<Sense> },
    Domain { tag: String },
    Cause { id: String },
    Modifier { polarity: Polarity, retrospective: bool },
    Spell { rank: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub surface: String,
    pub variants: Vec<String>,
    pub kind: LexiconKind,
    pub payload: Payload,
}

impl LexiconEntry {
    pub fn senses(&self) -> &[Sense] {
        match &self.payload {
            Payload::Abbreviation { senses } => senses,
            _ => &[],
        }
    }

    pub fn domain_tag(&self) -> Option<&str> {
        match &self.payload {
            Payload::Domain { tag } => Some(tag),
            _ => None,
        }
    }

    pub fn modifier(&self) -> Option<(Polarity, bool)> {
        match self.payload {
            Payload::Modifier {
                polarity,
                retrospective,
            } => Some((polarity, retrospective)),
            _ => None,
        }
    }

    /// Surface followed by variants.
    pub fn forms(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.surface.as_str()).chain(self.variants.iter().map(String::as_str))
    }

    /// Renders the entry in the lexicon file format.
    pub fn to_line(&self) -> String {
        let payload = match &self.payload {
            Payload::Abbreviation { senses } => senses
                .iter()
                .map(|s| format!("{} @ {} @ {}", s.expansion, s.cues.join(" "), s.rank))
                .collect::<Vec<_>>()
                .join(" ; "),
            Payload::Domain { tag } => tag.clone(),
            Payload::Cause { id } => id.clone(),
            Payload::Modifier {
                polarity,
                retrospective,
            } => {
                if *retrospective {
                    format!("{polarity} retrospective")
                } else {
                    polarity.to_string()
                }
            }
            Payload::Spell { rank } => rank.to_string(),
        };
        format!("{} | {} | {} | {}", self.surface, self.variants.join(", "), self.kind, payload)
    }

    fn validate(&self) -> Result<(), String> {
        if self.surface.trim().is_empty() {
            return Err("empty surface".into());
        }
        if self.variants.iter().any(|v| v.trim().is_empty()) {
            return Err("empty variant".into());
        }
        let expected = match &self.payload {
            Payload::Abbreviation { .. } => LexiconKind::Abbreviation,
            Payload::Domain { .. } => LexiconKind::DomainConcept,
            Payload::Cause { .. } => {
                if self.kind == LexiconKind::AdmissionCauseKeyword {
                    LexiconKind::AdmissionCauseKeyword
                } else {
                    LexiconKind::AdmissionCausePhrase
                }
            }
            Payload::Modifier { .. } => LexiconKind::Modifier,
            Payload::Spell { .. } => LexiconKind::SpellTarget,
        };
        if expected != self.kind {
            return Err(format!("payload does not match kind {}", self.kind));
        }
        if let Payload::Abbreviation { senses } = &self.payload {
            if senses.is_empty() {
                return Err("abbreviation without senses".into());
            }
            let mut ranks = HashSet::new();
            for s in senses {
                if s.expansion.trim().is_empty() {
                    return Err("empty sense expansion".into());
                }
                if !ranks.insert(s.rank) {
                    return Err(format!("duplicate sense rank {}", s.rank));
                }
            }
        }
        Ok(())
    }
}

/// Lowercases and collapses internal whitespace.
pub fn normalize(term: &str) -> String {
    term.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{at}: {message}")]
    Parse { at: Location, message: String },
    #[error("duplicate {kind} entry {surface:?} at {first} and {second}")]
    Duplicate {
        kind: LexiconKind,
        surface: String,
        first: Location,
        second: Location,
    },
    #[error("{kind} form {form:?} belongs to both {a:?} and {b:?}")]
    FormClash {
        kind: LexiconKind,
        form: String,
        a: String,
        b: String,
    },
    #[error("invalid entry {surface:?}: {message}")]
    Invalid { surface: String, message: String },
    #[error("refinement of {surface:?} conflicts with the existing entry: {message}")]
    Conflict { surface: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parses one lexicon line. `expected` rejects lines declaring another kind.
pub fn parse_line(line: &str, expected: Option<LexiconKind>) -> Result<LexiconEntry, String> {
    let fields: Vec<&str> = line.split('|').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 '|'-separated fields, found {}", fields.len()));
    }
    let surface = fields[0].split_whitespace().collect::<Vec<_>>().join(" ");
    let variants: Vec<String> = if fields[1].is_empty() {
        Vec::new()
    } else {
        fields[1]
            .split(',')
            .map(|v| v.split_whitespace().collect::<Vec<_>>().join(" "))
            .collect()
    };
    let kind: LexiconKind = fields[2].parse()?;
    if let Some(e) = expected {
        if e != kind {
            return Err(format!("entry declares {kind}, file holds {e}"));
        }
    }
    let raw = fields[3];
    let payload = match kind {
        LexiconKind::Abbreviation => Payload::Abbreviation {
            senses: parse_senses(raw)?,
        },
        LexiconKind::DomainConcept => {
            if raw.is_empty() {
                return Err("domain concept needs a domain tag".into());
            }
            Payload::Domain { tag: raw.to_string() }
        }
        LexiconKind::AdmissionCausePhrase | LexiconKind::AdmissionCauseKeyword => Payload::Cause {
            id: if raw.is_empty() {
                normalize(&surface)
            } else {
                raw.to_string()
            },
        },
        LexiconKind::Modifier => {
            let mut words = raw.split_whitespace();
            let polarity = match words.next().map(str::to_ascii_uppercase).as_deref() {
                Some("NEGATION") => Polarity::Negation,
                Some("UNCERTAINTY") => Polarity::Uncertainty,
                _ => return Err(format!("modifier payload must start with NEGATION or UNCERTAINTY, got {raw:?}")),
            };
            let retrospective = match words.next() {
                None => false,
                Some(w) if w.eq_ignore_ascii_case("retrospective") => true,
                Some(w) => return Err(format!("unknown modifier option {w:?}")),
            };
            Payload::Modifier {
                polarity,
                retrospective,
            }
        }
        LexiconKind::SpellTarget => Payload::Spell {
            rank: raw
                .parse()
                .map_err(|_| format!("spell target rank must be a positive integer, got {raw:?}"))?,
        },
    };
    let entry = LexiconEntry {
        surface,
        variants,
        kind,
        payload,
    };
    entry.validate()?;
    Ok(entry)
}

fn parse_senses(raw: &str) -> Result<Vec<Sense>, String> {
    let mut senses = Vec::new();
    for (i, block) in raw.split(';').enumerate() {
        let parts: Vec<&str> = block.split('@').map(str::trim).collect();
        if parts.len() > 3 || parts[0].is_empty() {
            return Err(format!("malformed sense block {:?}", block.trim()));
        }
        let cues = parts
            .get(1)
            .map(|c| c.split_whitespace().map(str::to_string).collect())
            .unwrap_or_default();
        let rank = match parts.get(2) {
            Some(r) if !r.is_empty() => r
                .parse()
                .map_err(|_| format!("sense rank must be an integer, got {r:?}"))?,
            _ => i as u32 + 1,
        };
        senses.push(Sense {
            expansion: parts[0].split_whitespace().collect::<Vec<_>>().join(" "),
            cues,
            rank,
        });
    }
    Ok(senses)
}

/// Reviewer id and time attached to a refinement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RefinementOutcome {
    Added,
    Merged,
    NoOp,
}

/// One line of the refinement journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementRecord {
    pub version_before: String,
    pub version_after: String,
    pub outcome: RefinementOutcome,
    pub entry: LexiconEntry,
    pub provenance: Provenance,
}

pub trait RefinementJournal {
    fn append(&mut self, record: &RefinementRecord) -> std::io::Result<()>;
}

impl RefinementJournal for Vec<RefinementRecord> {
    fn append(&mut self, record: &RefinementRecord) -> std::io::Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Newline-delimited JSON journal file, opened in append mode per write.
#[derive(Debug, Clone)]
pub struct JsonlJournal {
    path: PathBuf,
}

impl JsonlJournal {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        JsonlJournal { path: path.into() }
    }

    pub fn read(&self) -> std::io::Result<Vec<RefinementRecord>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
            .collect()
    }
}

impl RefinementJournal for JsonlJournal {
    fn append(&mut self, record: &RefinementRecord) -> std::io::Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        let mut line = serde_json::to_string(record).map_err(std::io::Error::other)?;
        line.push('\n');
        f.write_all(line.as_bytes())?;
        f.sync_data()
    }
}

/// Immutable, versioned lexicon.
#[derive(Debug, Clone, Default)]
pub struct LexiconStore {
    entries: Arc<Vec<LexiconEntry>>,
    sources: Arc<Vec<Option<Location>>>,
    /// normalized form -> entry indices (any kind)
    index: Arc<HashMap<String, Vec<usize>>>,
    vocabulary: Arc<HashSet<String>>,
    max_phrase_tokens: usize,
    label: String,
}

impl LexiconStore {
    pub fn empty() -> Self {
        Self::build(Vec::new()).expect("empty store is valid")
    }

    /// Builds and validates a store from entries with optional source lines.
    pub fn build(items: Vec<(LexiconEntry, Option<Location>)>) -> Result<Self, LexiconError> {
        let mut by_surface: HashMap<(LexiconKind, String), usize> = HashMap::new();
        let mut forms: HashMap<(LexiconKind, String), usize> = HashMap::new();
        let mut index: HashMap<String, Vec<usize>> = HashMap::new();
        let mut entries = Vec::with_capacity(items.len());
        let mut sources = Vec::with_capacity(items.len());
        let unknown = || Location {
            file: "<refinement>".into(),
            line: 0,
        };

        for (i, (entry, loc)) in items.into_iter().enumerate() {
            entry.validate().map_err(|message| LexiconError::Invalid {
                surface: entry.surface.clone(),
                message,
            })?;
            let key = (entry.kind, normalize(&entry.surface));
            if let Some(&j) = by_surface.get(&key) {
                let first: &Option<Location> = &sources[j];
                return Err(LexiconError::Duplicate {
                    kind: entry.kind,
                    surface: entry.surface.clone(),
                    first: first.clone().unwrap_or_else(unknown),
                    second: loc.unwrap_or_else(unknown),
                });
            }
            by_surface.insert(key, i);
            let mut own = HashSet::new();
            for form in entry.forms() {
                let norm = normalize(form);
                if !own.insert(norm.clone()) {
                    continue;
                }
                if let Some(&j) = forms.get(&(entry.kind, norm.clone())) {
                    let other: &LexiconEntry = &entries[j];
                    return Err(LexiconError::FormClash {
                        kind: entry.kind,
                        form: form.to_string(),
                        a: other.surface.clone(),
                        b: entry.surface.clone(),
                    });
                }
                forms.insert((entry.kind, norm.clone()), i);
                index.entry(norm).or_default().push(i);
            }
            entries.push(entry);
            sources.push(loc);
        }

        let mut vocabulary = HashSet::new();
        let mut max_phrase_tokens = 1;
        for e in &entries {
            for form in e.forms() {
                let n = form.split_whitespace().count();
                max_phrase_tokens = max_phrase_tokens.max(n);
                vocabulary.extend(form.split_whitespace().map(str::to_lowercase));
            }
            for s in e.senses() {
                vocabulary.extend(s.expansion.split_whitespace().map(str::to_lowercase));
                vocabulary.extend(s.cues.iter().map(|c| c.to_lowercase()));
            }
        }

        let mut lines: Vec<String> = entries.iter().map(LexiconEntry::to_line).collect();
        lines.sort();
        let digest = Sha256::digest(lines.join("\n").as_bytes());
        let label = format!("lex-{}", hex_prefix(&digest, 6));

        Ok(LexiconStore {
            entries: Arc::new(entries),
            sources: Arc::new(sources),
            index: Arc::new(index),
            vocabulary: Arc::new(vocabulary),
            max_phrase_tokens,
            label,
        })
    }

    /// Parses lexicon text. `origin` names the source in diagnostics.
    pub fn parse(text: &str, origin: &str, kind: Option<LexiconKind>) -> Result<Self, LexiconError> {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let at = Location {
                file: origin.to_string(),
                line: i + 1,
            };
            let entry = parse_line(line, kind).map_err(|message| LexiconError::Parse {
                at: at.clone(),
                message,
            })?;
            items.push((entry, Some(at)));
        }
        Self::build(items)
    }

    /// Concatenates partial stores, re-running duplicate checks across them.
    pub fn merge(parts: impl IntoIterator<Item = LexiconStore>) -> Result<Self, LexiconError> {
        let mut items = Vec::new();
        for part in parts {
            items.extend(part.entries.iter().cloned().zip(part.sources.iter().cloned()));
        }
        Self::build(items)
    }

    /// Loads every `*.lex` file in a directory, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self, LexiconError> {
        let io = |source| LexiconError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "lex"))
            .collect();
        files.sort();
        let parts = files
            .iter()
            .map(|p| load_lexicon(p, None))
            .collect::<Result<Vec<_>, _>>()?;
        Self::merge(parts)
    }

    /// Content-derived version label.
    pub fn version(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn source_of(&self, i: usize) -> Option<&Location> {
        self.sources.get(i).and_then(Option::as_ref)
    }

    /// Longest form length in whitespace tokens.
    pub fn max_phrase_tokens(&self) -> usize {
        self.max_phrase_tokens
    }

    /// Case-insensitive lookup on surface or any variant.
    pub fn lookup(&self, term: &str, kind: Option<LexiconKind>) -> Vec<&LexiconEntry> {
        self.lookup_indices(term, kind)
            .into_iter()
            .map(|i| &self.entries[i])
            .collect()
    }

    pub(crate) fn lookup_indices(&self, term: &str, kind: Option<LexiconKind>) -> Vec<usize> {
        self.index
            .get(&normalize(term))
            .map(|ix| {
                ix.iter()
                    .copied()
                    .filter(|&i| kind.is_none_or(|k| self.entries[i].kind == k))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// True when the lowercased word occurs in any form, expansion or cue.
    pub fn contains_word(&self, word: &str) -> bool {
        self.vocabulary.contains(&word.to_lowercase())
    }

    pub fn of_kind(&self, kind: LexiconKind) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    /// Applies a refinement, returning the new store and what happened.
    /// The receiver is untouched.
    pub fn refine(&self, entry: LexiconEntry) -> Result<(LexiconStore, RefinementOutcome), LexiconError> {
        entry.validate().map_err(|message| LexiconError::Invalid {
            surface: entry.surface.clone(),
            message,
        })?;
        let key = normalize(&entry.surface);
        let existing = self
            .entries
            .iter()
            .position(|e| e.kind == entry.kind && normalize(&e.surface) == key);
        let mut items: Vec<(LexiconEntry, Option<Location>)> = self
            .entries
            .iter()
            .cloned()
            .zip(self.sources.iter().cloned())
            .collect();
        let outcome = match existing {
            None => {
                items.push((entry, None));
                RefinementOutcome::Added
            }
            Some(i) => {
                let merged = merge_entry(&self.entries[i], &entry)?;
                if merged == self.entries[i] {
                    return Ok((self.clone(), RefinementOutcome::NoOp));
                }
                items[i].0 = merged;
                RefinementOutcome::Merged
            }
        };
        let store = Self::build(items).map_err(|e| LexiconError::Conflict {
            surface: key,
            message: e.to_string(),
        })?;
        Ok((store, outcome))
    }

    /// Validates and applies a refinement, journaling it (no-ops included).
    pub fn append_refinement(
        &self,
        entry: LexiconEntry,
        provenance: Provenance,
        journal: &mut dyn RefinementJournal,
    ) -> Result<LexiconStore, LexiconError> {
        let (store, outcome) = self.refine(entry.clone())?;
        let record = RefinementRecord {
            version_before: self.label.clone(),
            version_after: store.label.clone(),
            outcome,
            entry,
            provenance,
        };
        journal.append(&record).map_err(|source| LexiconError::Io {
            path: "refinement journal".into(),
            source,
        })?;
        Ok(store)
    }
}

fn merge_entry(old: &LexiconEntry, new: &LexiconEntry) -> Result<LexiconEntry, LexiconError> {
    let conflict = |message: String| LexiconError::Conflict {
        surface: old.surface.clone(),
        message,
    };
    let mut merged = old.clone();
    let known: BTreeSet<String> = old.forms().map(normalize).collect();
    for v in &new.variants {
        if !known.contains(&normalize(v)) && !merged.variants.iter().any(|m| normalize(m) == normalize(v)) {
            merged.variants.push(v.clone());
        }
    }
    merged.payload = match (&old.payload, &new.payload) {
        (Payload::Abbreviation { senses: a }, Payload::Abbreviation { senses: b }) => {
            let mut senses = a.clone();
            for s in b {
                match senses
                    .iter_mut()
                    .find(|x| normalize(&x.expansion) == normalize(&s.expansion))
                {
                    Some(x) => {
                        if x.rank != s.rank {
                            return Err(conflict(format!(
                                "sense {:?} has rank {}, proposed {}",
                                x.expansion, x.rank, s.rank
                            )));
                        }
                        for c in &s.cues {
                            if !x.cues.iter().any(|y| y.eq_ignore_ascii_case(c)) {
                                x.cues.push(c.clone());
                            }
                        }
                    }
                    None => {
                        if let Some(x) = senses.iter().find(|x| x.rank == s.rank) {
                            return Err(conflict(format!(
                                "rank {} already used by sense {:?}",
                                s.rank, x.expansion
                            )));
                        }
                        senses.push(s.clone());
                    }
                }
            }
            Payload::Abbreviation { senses }
        }
        (a, b) if a == b => a.clone(),
        (a, b) => {
            return Err(conflict(format!("payload {a:?} differs from proposed {b:?}")));
        }
    };
    Ok(merged)
}

pub(crate) fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes.iter().take(n).map(|b| format!("{b:02x}")).collect()
}

/// Loads one lexicon file as a partial store.
pub fn load_lexicon(path: &Path, kind: Option<LexiconKind>) -> Result<LexiconStore, LexiconError> {
    let text = fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })?;
    LexiconStore::parse(&text, &path.display().to_string(), kind)
}

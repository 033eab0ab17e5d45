//! Audit-category rules: file format, compiler and engine.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::concepts::TagKind;
use crate::lexicon::{hex_prefix, normalize, Polarity};
use crate::preprocess::{AnnotatedNote, MeasurementKind};
use crate::record::AuditCategory;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("{origin}:{line}: {message}")]
    Parse { origin: String, line: usize, message: String },
    #[error("{origin}:{second}: duplicate rule id {id:?} (first defined on line {first})")]
    Duplicate {
        origin: String,
        id: String,
        first: usize,
        second: usize,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RuleScope {
    Word,
    Sentence,
    Note,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UncertaintyPolicy {
    Fire,
    FireFlagged,
    Suppress,
}

impl FromStr for RuleScope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "WORD" => Ok(RuleScope::Word),
            "SENTENCE" => Ok(RuleScope::Sentence),
            "NOTE" => Ok(RuleScope::Note),
            other => Err(format!("unknown scope {other:?} (expected WORD, SENTENCE or NOTE)")),
        }
    }
}

impl FromStr for UncertaintyPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FIRE" => Ok(UncertaintyPolicy::Fire),
            "FIRE_FLAGGED" => Ok(UncertaintyPolicy::FireFlagged),
            "SUPPRESS" => Ok(UncertaintyPolicy::Suppress),
            other => Err(format!("unknown uncertainty policy {other:?}")),
        }
    }
}

impl fmt::Display for RuleScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleScope::Word => "WORD",
            RuleScope::Sentence => "SENTENCE",
            RuleScope::Note => "NOTE",
        })
    }
}

impl fmt::Display for UncertaintyPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UncertaintyPolicy::Fire => "FIRE",
            UncertaintyPolicy::FireFlagged => "FIRE_FLAGGED",
            UncertaintyPolicy::Suppress => "SUPPRESS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Special {
    VertebralLevel,
    Gcs,
    Dose,
    Size,
    Cause,
}

/// A condition or trigger term: a lowercased phrase or a special class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Phrase(Vec<String>),
    Special(Special),
}

impl FromStr for Term {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(name) = s.strip_prefix('@') {
            let special = match name.to_ascii_uppercase().as_str() {
                "VERTEBRAL_LEVEL" => Special::VertebralLevel,
                "GCS" => Special::Gcs,
                "DOSE" => Special::Dose,
                "SIZE" => Special::Size,
                "CAUSE" => Special::Cause,
                _ => return Err(format!("unknown special term {s:?}")),
            };
            return Ok(Term::Special(special));
        }
        let words: Vec<String> = normalize(s).split(' ').filter(|w| !w.is_empty()).map(String::from).collect();
        if words.is_empty() {
            return Err("empty term".into());
        }
        Ok(Term::Phrase(words))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Phrase(words) if words.len() == 1 => f.write_str(&words[0]),
            Term::Phrase(words) => write!(f, "\"{}\"", words.join(" ")),
            Term::Special(s) => {
                let name = match s {
                    Special::VertebralLevel => "VERTEBRAL_LEVEL",
                    Special::Gcs => "GCS",
                    Special::Dose => "DOSE",
                    Special::Size => "SIZE",
                    Special::Cause => "CAUSE",
                };
                write!(f, "@{name}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub category: AuditCategory,
    pub triggers: Vec<Term>,
    pub scope: RuleScope,
    /// All groups must hold; a group holds when any member is present.
    pub requires: Vec<Vec<Term>>,
    pub excludes: Vec<Term>,
    pub negation_guard: bool,
    /// `None` defers to the rule set default.
    pub uncertainty: Option<UncertaintyPolicy>,
    pub priority: i32,
}

impl Rule {
    pub fn new(id: impl Into<String>, category: AuditCategory, triggers: Vec<Term>) -> Rule {
        Rule {
            id: id.into(),
            category,
            triggers,
            scope: RuleScope::Word,
            requires: Vec::new(),
            excludes: Vec::new(),
            negation_guard: true,
            uncertainty: None,
            priority: 0,
        }
    }

    /// Renders the rule in the rule file format.
    pub fn to_block(&self) -> String {
        let list = |terms: &[Term]| terms.iter().map(Term::to_string).collect::<Vec<_>>().join(", ");
        let mut out = format!(
            "[rule {}]\ncategory={}\ntriggers={}\nscope={}\n",
            self.id,
            self.category,
            list(&self.triggers),
            self.scope
        );
        if !self.requires.is_empty() {
            let groups: Vec<String> = self.requires.iter().map(|g| list(g)).collect();
            out.push_str(&format!("requires={}\n", groups.join("; ")));
        }
        if !self.excludes.is_empty() {
            out.push_str(&format!("excludes={}\n", list(&self.excludes)));
        }
        if !self.negation_guard {
            out.push_str("negation_guard=false\n");
        }
        if let Some(p) = self.uncertainty {
            out.push_str(&format!("uncertainty={p}\n"));
        }
        out.push_str(&format!("priority={}\n", self.priority));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    /// Sorted by priority descending, then id.
    rules: Vec<Rule>,
    version: String,
    default_uncertainty: UncertaintyPolicy,
}

impl RuleSet {
    /// Orders rules for evaluation and computes the version label.
    /// Fails on duplicate ids, returning the id.
    pub fn new(mut rules: Vec<Rule>) -> Result<RuleSet, String> {
        rules.sort_by(|a, b| b.priority.cmp(&a.priority).then_with(|| a.id.cmp(&b.id)));
        let mut ids = std::collections::HashSet::new();
        if let Some(r) = rules.iter().find(|r| !ids.insert(r.id.as_str())) {
            return Err(r.id.clone());
        }
        let mut blocks: Vec<String> = rules.iter().map(Rule::to_block).collect();
        blocks.sort();
        let digest = Sha256::digest(blocks.join("\n").as_bytes());
        Ok(RuleSet {
            rules,
            version: format!("rules-{}", hex_prefix(&digest, 6)),
            default_uncertainty: UncertaintyPolicy::FireFlagged,
        })
    }

    pub fn parse(text: &str, origin: &str) -> Result<RuleSet, RuleError> {
        parse_rules(text, origin)
    }

    pub fn with_default_uncertainty(mut self, policy: UncertaintyPolicy) -> RuleSet {
        self.default_uncertainty = policy;
        self
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn default_uncertainty(&self) -> UncertaintyPolicy {
        self.default_uncertainty
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Reads and compiles a rule file.
pub fn compile_rules(path: &Path) -> Result<RuleSet, RuleError> {
    let text = fs::read_to_string(path).map_err(|source| RuleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_rules(&text, &path.display().to_string())
}

/// Splits on `sep` outside double quotes, trimming and unquoting items.
fn split_items(value: &str, sep: char) -> Result<Vec<String>, String> {
    let mut items = Vec::new();
    let mut current = String::new();
    let mut quoted = false;
    for c in value.chars() {
        match c {
            '"' => quoted = !quoted,
            c if c == sep && !quoted => items.push(std::mem::take(&mut current)),
            c => current.push(c),
        }
    }
    if quoted {
        return Err("unterminated quote".into());
    }
    items.push(current);
    let items: Vec<String> = items.into_iter().map(|s| s.trim().to_string()).collect();
    if items.len() > 1 && items.iter().any(String::is_empty) {
        return Err("empty list item".into());
    }
    Ok(items.into_iter().filter(|s| !s.is_empty()).collect())
}

fn term_list(value: &str) -> Result<Vec<Term>, String> {
    split_items(value, ',')?.iter().map(|s| s.parse()).collect()
}

/// Groups split on `;` before quote handling of the members.
fn group_list(value: &str) -> Result<Vec<Vec<Term>>, String> {
    let mut groups = Vec::new();
    let mut current = String::new();
    let mut quoted = false;
    for c in value.chars() {
        match c {
            '"' => {
                quoted = !quoted;
                current.push(c);
            }
            ';' if !quoted => groups.push(std::mem::take(&mut current)),
            c => current.push(c),
        }
    }
    groups.push(current);
    groups
        .iter()
        .filter(|g| !g.trim().is_empty())
        .map(|g| term_list(g))
        .collect()
}

struct Block {
    id: String,
    line: usize,
    fields: HashMap<String, (String, usize)>,
}

fn compile_block(block: Block, origin: &str) -> Result<Rule, RuleError> {
    let err = |line: usize, message: String| RuleError::Parse {
        origin: origin.to_string(),
        line,
        message,
    };
    let field = |key: &str| block.fields.get(key).map(|(v, l)| (v.as_str(), *l));

    let (category, line) = field("category").ok_or_else(|| err(block.line, format!("rule {} has no category", block.id)))?;
    let category: AuditCategory = category.parse().map_err(|e| err(line, format!("{e}")))?;
    let triggers = match field("triggers") {
        None => Vec::new(),
        Some((v, l)) => term_list(v).map_err(|m| err(l, m))?,
    };
    if triggers.is_empty() {
        return Err(err(block.line, format!("rule {} has no triggers", block.id)));
    }
    if triggers.iter().any(|t| matches!(t, Term::Special(_))) {
        let l = field("triggers").map_or(block.line, |f| f.1);
        return Err(err(l, "special terms cannot be triggers".into()));
    }
    let mut rule = Rule::new(block.id.clone(), category, triggers);
    if let Some((v, l)) = field("scope") {
        rule.scope = v.parse().map_err(|m| err(l, m))?;
    }
    if let Some((v, l)) = field("requires") {
        rule.requires = group_list(v).map_err(|m| err(l, m))?;
    }
    if let Some((v, l)) = field("excludes") {
        rule.excludes = term_list(v).map_err(|m| err(l, m))?;
    }
    if let Some((v, l)) = field("negation_guard") {
        rule.negation_guard = match v.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" => true,
            "false" | "no" => false,
            other => return Err(err(l, format!("negation_guard must be true or false, got {other:?}"))),
        };
    }
    if let Some((v, l)) = field("uncertainty") {
        rule.uncertainty = Some(v.parse().map_err(|m| err(l, m))?);
    }
    if let Some((v, l)) = field("priority") {
        rule.priority = v.trim().parse().map_err(|_| err(l, format!("priority must be an integer, got {v:?}")))?;
    }
    Ok(rule)
}

const KEYS: &[&str] = &[
    "category",
    "triggers",
    "scope",
    "requires",
    "excludes",
    "negation_guard",
    "uncertainty",
    "priority",
];

fn parse_rules(text: &str, origin: &str) -> Result<RuleSet, RuleError> {
    let err = |line: usize, message: String| RuleError::Parse {
        origin: origin.to_string(),
        line,
        message,
    };
    let mut blocks: Vec<Block> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(header) = line.strip_prefix('[') {
            let inner = header.strip_suffix(']').ok_or_else(|| err(n, "unclosed section header".into()))?;
            let id = inner
                .trim()
                .strip_prefix("rule")
                .map(str::trim)
                .filter(|id| !id.is_empty())
                .ok_or_else(|| err(n, format!("expected [rule <id>], got [{inner}]")))?;
            if !id.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
                return Err(err(n, format!("invalid rule id {id:?}")));
            }
            blocks.push(Block {
                id: id.to_string(),
                line: n,
                fields: HashMap::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| err(n, format!("expected key=value, got {line:?}")))?;
        let key = key.trim().to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(err(n, format!("unknown field {key:?}")));
        }
        let block = blocks.last_mut().ok_or_else(|| err(n, "field outside a [rule] section".into()))?;
        if block.fields.insert(key.clone(), (value.to_string(), n)).is_some() {
            return Err(err(n, format!("field {key:?} given twice")));
        }
    }

    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut rules = Vec::with_capacity(blocks.len());
    for block in blocks {
        if let Some(&first) = seen.get(&block.id) {
            return Err(RuleError::Duplicate {
                origin: origin.to_string(),
                id: block.id,
                first,
                second: block.line,
            });
        }
        seen.insert(block.id.clone(), block.line);
        rules.push(compile_block(block, origin)?);
    }
    Ok(RuleSet::new(rules).expect("ids checked above"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MatchFlag {
    Uncertain,
}

/// Where a `requires` group was satisfied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionHit {
    pub term: String,
    pub tokens: Range<usize>,
    pub sentence: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryMatch {
    pub category: AuditCategory,
    pub rule_id: String,
    pub trigger: Range<usize>,
    pub conditions: Vec<ConditionHit>,
    pub flags: Vec<MatchFlag>,
    /// Trigger tokens of the uncertainty modifier behind the flag.
    pub uncertain_via: Option<Range<usize>>,
}

impl CategoryMatch {
    pub fn is_uncertain(&self) -> bool {
        self.flags.contains(&MatchFlag::Uncertain)
    }
}

fn masked(note: &AnnotatedNote) -> Vec<bool> {
    let mut mask = vec![false; note.tokens.len()];
    for tag in note.tags.iter().filter(|t| t.kind == TagKind::AdmissionCause) {
        for i in tag.tokens.clone() {
            mask[i] = true;
        }
    }
    mask
}

/// Occurrences of `term` starting inside `scope`.
fn occurrences(note: &AnnotatedNote, term: &Term, scope: &Range<usize>) -> Vec<Range<usize>> {
    match term {
        Term::Phrase(words) => {
            let joined = words.join(" ");
            let mut out = Vec::new();
            for i in scope.clone() {
                let end = i + words.len();
                if end <= scope.end
                    && words
                        .iter()
                        .zip(&note.tokens[i..end])
                        .all(|(w, t)| t.text.eq_ignore_ascii_case(w) || t.text.to_lowercase() == *w)
                {
                    out.push(i..end);
                } else if note.sense_resolutions.get(&i).is_some_and(|r| normalize(&r.expansion) == joined) {
                    out.push(i..i + 1);
                }
            }
            out
        }
        Term::Special(Special::Cause) => note
            .tags
            .iter()
            .filter(|t| t.kind == TagKind::AdmissionCause && scope.contains(&t.tokens.start))
            .map(|t| t.tokens.clone())
            .collect(),
        Term::Special(s) => {
            let kind = match s {
                Special::VertebralLevel => MeasurementKind::VertebralLevel,
                Special::Gcs => MeasurementKind::GcsScore,
                Special::Dose => MeasurementKind::Dose,
                _ => MeasurementKind::Size,
            };
            note.measurements
                .iter()
                .filter(|m| m.kind == kind && scope.contains(&m.tokens.start))
                .map(|m| m.tokens.clone())
                .collect()
        }
    }
}

fn under(note: &AnnotatedNote, range: &Range<usize>, polarity: Polarity) -> Option<Range<usize>> {
    note.modifiers
        .iter()
        .find(|m| m.polarity == polarity && range.clone().any(|i| m.covers(i)))
        .map(|m| m.tokens.clone())
}

fn scope_of(note: &AnnotatedNote, scope: RuleScope, trigger: &Range<usize>) -> Range<usize> {
    match scope {
        RuleScope::Word => trigger.clone(),
        RuleScope::Sentence => note
            .sentence_of(trigger.start)
            .map_or(trigger.clone(), |s| note.sentences[s].tokens.clone()),
        RuleScope::Note => 0..note.tokens.len(),
    }
}

/// First non-negated occurrence of a condition term within scope.
fn present(note: &AnnotatedNote, term: &Term, scope: &Range<usize>) -> Option<Range<usize>> {
    occurrences(note, term, scope)
        .into_iter()
        .find(|r| under(note, r, Polarity::Negation).is_none())
}

fn try_fire(note: &AnnotatedNote, rule: &Rule, policy: UncertaintyPolicy, trigger: Range<usize>) -> Option<CategoryMatch> {
    if rule.negation_guard && under(note, &trigger, Polarity::Negation).is_some() {
        return None;
    }
    let uncertain = under(note, &trigger, Polarity::Uncertainty);
    if uncertain.is_some() && policy == UncertaintyPolicy::Suppress {
        return None;
    }
    let scope = scope_of(note, rule.scope, &trigger);
    if rule.excludes.iter().any(|t| present(note, t, &scope).is_some()) {
        return None;
    }
    let mut conditions = Vec::with_capacity(rule.requires.len());
    for group in &rule.requires {
        let hit = group
            .iter()
            .find_map(|t| present(note, t, &scope).map(|r| (t, r)))?;
        conditions.push(ConditionHit {
            term: hit.0.to_string(),
            sentence: note.sentence_of(hit.1.start),
            tokens: hit.1,
        });
    }
    let flagged = uncertain.is_some() && policy == UncertaintyPolicy::FireFlagged;
    Some(CategoryMatch {
        category: rule.category.clone(),
        rule_id: rule.id.clone(),
        trigger,
        conditions,
        flags: if flagged { vec![MatchFlag::Uncertain] } else { Vec::new() },
        uncertain_via: if flagged { uncertain } else { None },
    })
}

/// Applies every rule to the note. Admission-cause tokens never take part in
/// a trigger. The result holds one match per category, drops any category
/// that is a strict prefix of another match, and prefers unflagged evidence.
pub fn apply_rules(note: &AnnotatedNote, rules: &RuleSet) -> Vec<CategoryMatch> {
    let mask = masked(note);
    let everywhere = 0..note.tokens.len();
    let mut fired: Vec<CategoryMatch> = Vec::new();
    for rule in rules.rules() {
        let policy = rule.uncertainty.unwrap_or(rules.default_uncertainty);
        let mut candidates: Vec<Range<usize>> = rule
            .triggers
            .iter()
            .flat_map(|t| occurrences(note, t, &everywhere))
            .filter(|r| !r.clone().any(|i| mask[i] || note.tokens[i].is_delimiter()))
            .collect();
        candidates.sort_by_key(|r| (r.start, std::cmp::Reverse(r.end)));
        candidates.dedup();
        let hits: Vec<CategoryMatch> = candidates
            .into_iter()
            .filter_map(|r| try_fire(note, rule, policy, r))
            .collect();
        if let Some(best) = hits.iter().find(|m| !m.is_uncertain()).or(hits.first()) {
            fired.push(best.clone());
        }
    }

    let mut kept: Vec<CategoryMatch> = Vec::new();
    for m in fired {
        match kept.iter_mut().find(|k| k.category == m.category) {
            Some(k) if k.is_uncertain() && !m.is_uncertain() => *k = m,
            Some(_) => {}
            None => kept.push(m),
        }
    }
    let categories: Vec<AuditCategory> = kept.iter().map(|m| m.category.clone()).collect();
    kept.retain(|m| !categories.iter().any(|c| m.category.is_strict_prefix_of(c)));
    kept
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("match for rule {rule_id} does not fit this note: {message}")]
pub struct TraceError {
    pub rule_id: String,
    pub message: String,
}

/// Human-readable evidence trace for a match produced on `note`.
pub fn explain(m: &CategoryMatch, note: &AnnotatedNote) -> Result<String, TraceError> {
    let stale = |message: String| TraceError {
        rule_id: m.rule_id.clone(),
        message,
    };
    let check = |r: &Range<usize>| {
        if r.is_empty() || r.end > note.tokens.len() {
            Err(stale(format!("token range {}..{} outside 0..{}", r.start, r.end, note.tokens.len())))
        } else {
            Ok(())
        }
    };
    check(&m.trigger)?;
    let mut lines = vec![format!("rule {} -> {}", m.rule_id, m.category)];
    let span = note.byte_span(&m.trigger);
    lines.push(format!(
        "trigger '{}' at {}..{}",
        note.span_text(&m.trigger),
        span.start,
        span.end
    ));
    for c in &m.conditions {
        check(&c.tokens)?;
        let span = note.byte_span(&c.tokens);
        let sentence = c.sentence.map_or(String::new(), |s| format!(" in sentence {s}"));
        lines.push(format!(
            "requires {} satisfied by '{}' at {}..{}{sentence}",
            c.term,
            note.span_text(&c.tokens),
            span.start,
            span.end
        ));
    }
    if let Some(via) = &m.uncertain_via {
        check(via)?;
        lines.push(format!(
            "UNCERTAIN via '{}' at offset {}",
            note.span_text(via),
            note.tokens[via.start].start
        ));
    }
    Ok(lines.join("\n"))
}

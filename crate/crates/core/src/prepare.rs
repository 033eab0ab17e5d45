//! Stage 1: make raw note text ready for tokenization.
//!
//! Three passes run in order: boundary fixing, keyword regularization
//! (including single-sense abbreviation expansion) and spelling correction.
//! Every change is logged as an [`Edit`]; replaying the log over the raw text
//! reproduces the prepared text byte for byte.

use serde::{Deserialize, Serialize};

use crate::lexicon::{normalize, LexiconKind, LexiconStore, Payload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EditKind {
    Boundary,
    Spell,
    Regularize,
    Expand,
}

/// One replacement. Offsets are byte offsets into the input of pass `pass`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub pass: u16,
    pub start: usize,
    pub end: usize,
    pub replacement: String,
    pub kind: EditKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedText {
    pub raw: String,
    pub text: String,
    /// Ordered by `(pass, start)`; spans within a pass never overlap.
    pub edits: Vec<Edit>,
}

impl PreparedText {
    /// Wraps text that needs no preparation.
    pub fn unchanged(raw: &str) -> Self {
        PreparedText {
            raw: raw.to_string(),
            text: raw.to_string(),
            edits: Vec::new(),
        }
    }

    fn next_pass(&self) -> u16 {
        self.edits.last().map_or(1, |e| e.pass + 1)
    }

    /// Re-applies the edit log to the raw text.
    pub fn replay(&self) -> String {
        replay_edits(&self.raw, &self.edits)
    }

    fn with_pass(mut self, pass: u16, edits: Vec<Edit>) -> Self {
        if edits.is_empty() {
            return self;
        }
        self.text = apply_pass(&self.text, &edits);
        debug_assert!(edits.iter().all(|e| e.pass == pass));
        self.edits.extend(edits);
        self
    }
}

/// Applies edits pass by pass.
pub fn replay_edits(raw: &str, edits: &[Edit]) -> String {
    let mut text = raw.to_string();
    let mut i = 0;
    while i < edits.len() {
        let pass = edits[i].pass;
        let j = edits[i..].iter().position(|e| e.pass != pass).map_or(edits.len(), |n| i + n);
        text = apply_pass(&text, &edits[i..j]);
        i = j;
    }
    text
}

fn apply_pass(text: &str, edits: &[Edit]) -> String {
    let mut out = String::with_capacity(text.len() + edits.len() * 4);
    let mut cursor = 0;
    for e in edits {
        out.push_str(&text[cursor..e.start]);
        out.push_str(&e.replacement);
        cursor = e.end;
    }
    out.push_str(&text[cursor..]);
    out
}

/// Spelling-correction thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpellSettings {
    /// Tokens shorter than this are never corrected.
    pub min_len: usize,
    /// Maximum edit distance for tokens of at least `min_len` characters.
    pub max_distance: usize,
    /// Tokens at least this long may use `long_max_distance`.
    pub long_len: usize,
    pub long_max_distance: usize,
}

impl Default for SpellSettings {
    fn default() -> Self {
        SpellSettings {
            min_len: 5,
            max_distance: 1,
            long_len: 8,
            long_max_distance: 2,
        }
    }
}

/// Whitespace-delimited spans of `text` (newlines included as separators).
pub(crate) fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                spans.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

const ALWAYS_SPLIT: &[char] = &[',', ';', '(', ')', '[', ']', '{', '}', '"', '!', '?', '#'];

fn isolated(prev: Option<char>, c: char, next: Option<char>) -> bool {
    let alnum = |x: Option<char>| x.is_some_and(char::is_alphanumeric);
    let digit = |x: Option<char>| x.is_some_and(|x| x.is_ascii_digit());
    let alpha = |x: Option<char>| x.is_some_and(char::is_alphabetic);
    match c {
        _ if ALWAYS_SPLIT.contains(&c) => true,
        '.' => !(alnum(prev) && alnum(next)),
        ':' => !(digit(prev) && digit(next)),
        '/' => !(alnum(prev) && alnum(next) && (digit(prev) || digit(next))),
        '-' => !(alnum(prev) && alnum(next)),
        '\'' => !(alpha(prev) && alpha(next)),
        _ => false,
    }
}

/// Separates punctuation glued to words.
///
/// Vertebral levels (`C7`, `L4-5`, `C5/6`), decimals and times stay intact.
/// A leading `?` becomes its own uncertainty token and `#` is always split off.
///
/// ```
/// use neuroaudit::prepare::fix_boundaries;
///
/// let p = fix_boundaries("?SAH");
/// assert_eq!(p.text, "? SAH");
/// assert_eq!(p.edits.len(), 1);
/// assert_eq!(fix_boundaries("#R C7 sup art facet").text, "# R C7 sup art facet");
/// ```
pub fn fix_boundaries(raw: &str) -> PreparedText {
    let mut edits = Vec::new();
    for (s, e) in word_spans(raw) {
        let chars: Vec<(usize, char)> = raw[s..e].char_indices().map(|(i, c)| (s + i, c)).collect();
        let iso: Vec<bool> = (0..chars.len())
            .map(|k| {
                let prev = k.checked_sub(1).map(|p| chars[p].1);
                let next = chars.get(k + 1).map(|n| n.1);
                isolated(prev, chars[k].1, next)
            })
            .collect();
        for k in 1..chars.len() {
            if iso[k] || iso[k - 1] {
                edits.push(Edit {
                    pass: 0,
                    start: chars[k].0,
                    end: chars[k].0,
                    replacement: " ".into(),
                    kind: EditKind::Boundary,
                });
            }
        }
    }
    PreparedText {
        raw: raw.to_string(),
        text: raw.to_string(),
        edits: Vec::new(),
    }
    .with_pass(0, edits)
}

enum Rewrite {
    Keep,
    To(String, EditKind),
}

fn rewrite_for(store: &LexiconStore, form: &str) -> Option<Rewrite> {
    let hits = store.lookup(form, None);
    let mut keep = false;
    let mut targets: Vec<(String, EditKind)> = Vec::new();
    let mut matched = false;
    for e in hits {
        match e.kind {
            LexiconKind::SpellTarget => continue,
            LexiconKind::Abbreviation => {
                matched = true;
                match &e.payload {
                    Payload::Abbreviation { senses } if senses.len() == 1 => {
                        targets.push((senses[0].expansion.clone(), EditKind::Expand))
                    }
                    _ => keep = true,
                }
            }
            _ => {
                matched = true;
                if normalize(&e.surface) == form {
                    keep = true;
                } else {
                    targets.push((e.surface.clone(), EditKind::Regularize));
                }
            }
        }
    }
    if !matched {
        return None;
    }
    targets.sort_by_key(|t| normalize(&t.0));
    targets.dedup_by_key(|t| normalize(&t.0));
    if keep || targets.len() != 1 {
        return Some(Rewrite::Keep);
    }
    let (to, kind) = targets.pop().unwrap();
    Some(Rewrite::To(to, kind))
}

/// Rewrites unambiguous variants to canonical surfaces and expands
/// single-sense abbreviations. Multi-sense abbreviations and forms that are
/// also some entry's own surface are left alone.
pub fn regularize_keywords(text: PreparedText, store: &LexiconStore) -> PreparedText {
    let pass = text.next_pass();
    let spans = word_spans(&text.text);
    let max = store.max_phrase_tokens();
    let mut edits = Vec::new();
    let mut i = 0;
    while i < spans.len() {
        let mut advanced = false;
        for len in (1..=max.min(spans.len() - i)).rev() {
            let (start, end) = (spans[i].0, spans[i + len - 1].1);
            let form = normalize(&text.text[start..end]);
            match rewrite_for(store, &form) {
                None => continue,
                Some(Rewrite::Keep) => {}
                Some(Rewrite::To(to, kind)) => {
                    if text.text[start..end] != to {
                        edits.push(Edit {
                            pass,
                            start,
                            end,
                            replacement: to,
                            kind,
                        });
                    }
                }
            }
            i += len;
            advanced = true;
            break;
        }
        if !advanced {
            i += 1;
        }
    }
    text.with_pass(pass, edits)
}

fn spell_candidate(token: &str) -> bool {
    let mut chars = token.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    first.is_alphabetic() && chars.all(|c| c.is_alphabetic() && c.is_lowercase())
}

/// Picks the correction for one token, if any.
pub fn spelling_correction(token: &str, store: &LexiconStore, settings: &SpellSettings) -> Option<String> {
    let len = token.chars().count();
    if len < settings.min_len || !spell_candidate(token) || store.contains_word(token) {
        return None;
    }
    let limit = if len >= settings.long_len {
        settings.long_max_distance
    } else {
        settings.max_distance
    };
    let lower = token.to_lowercase();
    let mut best: Option<(usize, u32)> = None;
    let mut chosen: Vec<&str> = Vec::new();
    for e in store.of_kind(LexiconKind::SpellTarget) {
        let rank = match e.payload {
            Payload::Spell { rank } => rank,
            _ => continue,
        };
        let target = e.surface.as_str();
        let d = strsim::osa_distance(&lower, &target.to_lowercase());
        if d == 0 || d > limit {
            continue;
        }
        match best {
            Some((bd, br)) if (d, rank) > (bd, br) => {}
            Some((bd, br)) if (d, rank) == (bd, br) => chosen.push(target),
            _ => {
                best = Some((d, rank));
                chosen = vec![target];
            }
        }
    }
    if chosen.len() != 1 {
        return None;
    }
    let target = chosen[0].to_lowercase();
    if token.chars().next().is_some_and(char::is_uppercase) {
        let mut c = target.chars();
        let first = c.next().map(|f| f.to_uppercase().collect::<String>()).unwrap_or_default();
        Some(first + c.as_str())
    } else {
        Some(target)
    }
}

/// Corrects misspelled lowercase alphabetic tokens against SPELL_TARGET
/// entries. Tokens found in any lexicon, tokens with digits or inner capitals,
/// and short tokens are never touched.
pub fn correct_spelling(text: PreparedText, store: &LexiconStore, settings: &SpellSettings) -> PreparedText {
    let pass = text.next_pass();
    let edits: Vec<Edit> = word_spans(&text.text)
        .into_iter()
        .filter_map(|(s, e)| {
            spelling_correction(&text.text[s..e], store, settings).map(|replacement| Edit {
                pass,
                start: s,
                end: e,
                replacement,
                kind: EditKind::Spell,
            })
        })
        .collect();
    text.with_pass(pass, edits)
}

const MAX_ROUNDS: usize = 4;

/// Full preparation: boundaries, then regularize/spell rounds until stable.
pub fn prepare(raw: &str, store: &LexiconStore, settings: &SpellSettings) -> PreparedText {
    let mut text = fix_boundaries(raw);
    for _ in 0..MAX_ROUNDS {
        let before = text.edits.len();
        text = regularize_keywords(text, store);
        text = correct_spelling(text, store, settings);
        if text.edits.len() == before {
            break;
        }
    }
    text
}

//! Stage 2: tokens, sentence and clause structure, modifiers, measurements
//! and abbreviation sense resolution.

mod measurements;
mod modifiers;
mod senses;

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::concepts::ConceptTag;
use crate::lexicon::{LexiconKind, LexiconStore};
use crate::prepare::PreparedText;

pub use measurements::{identify_measurements, MeasurementKind, MeasurementSpan, MeasurementValue, Region, VertebralLevel};
pub use modifiers::{identify_modifiers, ModifierSpan, DEFAULT_MODIFIER_WINDOW};
pub use senses::{disambiguate_abbreviations, ResolutionBasis, SenseResolution};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub has_digit: bool,
    pub all_caps: bool,
    pub is_punct: bool,
    pub is_uncertainty_marker: bool,
    pub is_fracture_symbol: bool,
    pub is_newline: bool,
}

/// A token with byte offsets into the prepared text (`end` exclusive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub shape: Shape,
}

impl Token {
    fn new(text: &str, start: usize) -> Token {
        let is_newline = text == "\n";
        let is_punct = !is_newline && text.chars().all(|c| c.is_ascii_punctuation());
        let letters: Vec<char> = text.chars().filter(|c| c.is_alphabetic()).collect();
        Token {
            text: text.to_string(),
            start,
            end: start + text.len(),
            shape: Shape {
                has_digit: text.chars().any(|c| c.is_ascii_digit()),
                all_caps: !letters.is_empty() && letters.iter().all(|c| c.is_uppercase()),
                is_punct,
                is_uncertainty_marker: text == "?",
                is_fracture_symbol: text == "#",
                is_newline,
            },
        }
    }

    /// Structural tokens that carry no content: newlines and punctuation
    /// other than the `?` and `#` markers.
    pub fn is_delimiter(&self) -> bool {
        self.shape.is_newline
            || (self.shape.is_punct && !self.shape.is_uncertainty_marker && !self.shape.is_fracture_symbol)
    }

    pub fn lower(&self) -> String {
        self.text.to_lowercase()
    }
}

/// Splits prepared text on whitespace. Each `\n` becomes its own token.
pub fn tokenize(prepared: &PreparedText) -> Vec<Token> {
    let text = &prepared.text;
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token::new(&text[s..i], s));
            }
            if c == '\n' {
                tokens.push(Token::new("\n", i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token::new(&text[s..], s));
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// First to last content token; may contain inner delimiters.
    pub tokens: Range<usize>,
    /// Runs of non-delimiter tokens, in order.
    pub clauses: Vec<Range<usize>>,
}

const NON_TERMINAL_ABBREVIATIONS: &[&str] = &["dr", "pt", "approx", "e.g", "i.e", "vs", "etc", "mr", "mrs", "ms", "st"];

fn is_sentence_break(tokens: &[Token], i: usize, store: &LexiconStore) -> bool {
    let t = &tokens[i];
    if t.shape.is_newline || t.text == ";" {
        return true;
    }
    if t.text != "." {
        return false;
    }
    match i.checked_sub(1).map(|p| &tokens[p]) {
        None => true,
        Some(prev) => {
            let lower = prev.lower();
            let single_letter = prev.text.chars().count() == 1 && prev.text.chars().all(char::is_alphabetic);
            let known = NON_TERMINAL_ABBREVIATIONS.contains(&lower.as_str())
                || !store.lookup(&prev.text, Some(LexiconKind::Abbreviation)).is_empty();
            !(single_letter || known)
        }
    }
}

/// Groups tokens into sentences and comma-delimited clauses.
///
/// Sentences end at newlines, semicolons and periods that do not follow a
/// known abbreviation or a single letter. A `?` never ends a sentence.
pub fn segment_sentences(tokens: &[Token], store: &LexiconStore) -> Vec<Sentence> {
    let mut sentences = Vec::new();
    let mut seg_start = 0;
    for i in 0..=tokens.len() {
        if i < tokens.len() && !is_sentence_break(tokens, i, store) {
            continue;
        }
        let segment = seg_start..i;
        seg_start = i + 1;
        let mut clauses = Vec::new();
        let mut run: Option<usize> = None;
        for j in segment.clone() {
            if tokens[j].is_delimiter() {
                if let Some(s) = run.take() {
                    clauses.push(s..j);
                }
            } else if run.is_none() {
                run = Some(j);
            }
        }
        if let Some(s) = run {
            clauses.push(s..segment.end);
        }
        if let (Some(first), Some(last)) = (clauses.first(), clauses.last()) {
            sentences.push(Sentence {
                tokens: first.start..last.end,
                clauses,
            });
        }
    }
    sentences
}

/// Tunables for the preprocessing stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessSettings {
    pub modifier_window: usize,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        PreprocessSettings {
            modifier_window: DEFAULT_MODIFIER_WINDOW,
        }
    }
}

/// A prepared note with all annotation layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedNote {
    pub prepared: PreparedText,
    pub tokens: Vec<Token>,
    pub sentences: Vec<Sentence>,
    pub modifiers: Vec<ModifierSpan>,
    pub measurements: Vec<MeasurementSpan>,
    pub sense_resolutions: BTreeMap<usize, SenseResolution>,
    /// Filled by concept identification.
    pub tags: Vec<ConceptTag>,
    pub diagnostics: Vec<String>,
}

impl AnnotatedNote {
    pub fn text(&self) -> &str {
        &self.prepared.text
    }

    /// Prepared text covered by a token range.
    pub fn span_text(&self, range: &Range<usize>) -> &str {
        if range.is_empty() {
            return "";
        }
        &self.prepared.text[self.tokens[range.start].start..self.tokens[range.end - 1].end]
    }

    /// Byte offsets of a token range.
    pub fn byte_span(&self, range: &Range<usize>) -> Range<usize> {
        if range.is_empty() {
            let at = self.tokens.get(range.start).map_or(self.prepared.text.len(), |t| t.start);
            return at..at;
        }
        self.tokens[range.start].start..self.tokens[range.end - 1].end
    }

    pub fn sentence_of(&self, token: usize) -> Option<usize> {
        self.sentences.iter().position(|s| s.tokens.contains(&token))
    }

    pub fn clause_of(&self, token: usize) -> Option<Range<usize>> {
        self.sentences
            .iter()
            .flat_map(|s| s.clauses.iter())
            .find(|c| c.contains(&token))
            .cloned()
    }

    /// Modifiers whose forward or retrospective scope covers `token`.
    pub fn modifiers_over(&self, token: usize) -> impl Iterator<Item = &ModifierSpan> {
        self.modifiers.iter().filter(move |m| m.covers(token))
    }

    pub fn measurement_at(&self, token: usize) -> Option<&MeasurementSpan> {
        self.measurements.iter().find(|m| m.tokens.contains(&token))
    }
}

/// Runs tokenization, segmentation, modifier and measurement identification
/// and abbreviation disambiguation over prepared text.
pub fn preprocess(prepared: PreparedText, store: &LexiconStore, settings: &PreprocessSettings) -> AnnotatedNote {
    let tokens = tokenize(&prepared);
    let sentences = segment_sentences(&tokens, store);
    let modifiers = identify_modifiers(&tokens, &sentences, store, settings.modifier_window);
    let (measurements, diagnostics) = identify_measurements(&tokens, &sentences);
    let sense_resolutions = disambiguate_abbreviations(&tokens, &sentences, store);
    AnnotatedNote {
        prepared,
        tokens,
        sentences,
        modifiers,
        measurements,
        sense_resolutions,
        tags: Vec::new(),
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prepare::fix_boundaries;

    fn toks(s: &str) -> Vec<Token> {
        tokenize(&fix_boundaries(s))
    }

    #[test]
    fn tokenize_examples() {
        let t = toks("?SAH");
        assert_eq!(t.len(), 2);
        assert!(t[0].shape.is_uncertainty_marker);
        assert_eq!(t[1].text, "SAH");
        assert!(toks("").is_empty());
        let t = tokenize(&PreparedText::unchanged("# R C7 superior articular facet"));
        assert_eq!(t.len(), 6);
        assert!(t[0].shape.is_fracture_symbol);
        assert!(t[2].shape.has_digit && t[2].shape.all_caps);
    }

    #[test]
    fn offsets_slice_back_to_text() {
        let p = fix_boundaries("line one,\n  line two; ?x");
        for t in tokenize(&p) {
            assert_eq!(&p.text[t.start..t.end], t.text);
        }
    }

    #[test]
    fn table_two_note_has_three_clauses() {
        let t = toks("Ped v car left frontal depressed fracture, GCS 3, ETOH");
        let s = segment_sentences(&t, &LexiconStore::empty());
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].clauses.len(), 3);
        let text = |r: &Range<usize>| t[r.clone()].iter().map(|x| x.text.as_str()).collect::<Vec<_>>().join(" ");
        assert_eq!(text(&s[0].clauses[0]), "Ped v car left frontal depressed fracture");
        assert_eq!(text(&s[0].clauses[1]), "GCS 3");
        assert_eq!(text(&s[0].clauses[2]), "ETOH");
    }

    #[test]
    fn sentence_breaks() {
        let store = LexiconStore::empty();
        assert_eq!(segment_sentences(&toks("no EDH; small SDH"), &store).len(), 2);
        assert_eq!(segment_sentences(&toks("? SAH"), &store).len(), 1);
        assert_eq!(segment_sentences(&toks("fall. GCS 15"), &store).len(), 2);
        assert_eq!(segment_sentences(&toks("seen by Dr. Smith"), &store).len(), 1);
        assert_eq!(segment_sentences(&toks("L. frontal"), &store).len(), 1);
        assert_eq!(segment_sentences(&toks("a\nb\n\nc"), &store).len(), 3);
        assert!(segment_sentences(&toks(", ; ."), &store).is_empty());
    }
}

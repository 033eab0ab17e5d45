use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{Sentence, Token};
use crate::lexicon::{normalize, LexiconKind, LexiconStore, Polarity};

pub const DEFAULT_MODIFIER_WINDOW: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModifierSpan {
    /// Tokens forming the trigger.
    pub tokens: Range<usize>,
    pub polarity: Polarity,
    /// Forward scope; empty for retrospective modifiers.
    pub scope: Range<usize>,
    /// Backward scope of a retrospective modifier.
    pub retrospective: Option<Range<usize>>,
    /// Lexicon surface that matched, or `?`.
    pub trigger: String,
}

impl ModifierSpan {
    pub fn covers(&self, token: usize) -> bool {
        self.scope.contains(&token) || self.retrospective.as_ref().is_some_and(|r| r.contains(&token))
    }
}

/// Longest MODIFIER match starting at `i` and ending before `end`, checking
/// the lexicon forms first and then single-sense abbreviation expansions.
fn match_at(tokens: &[Token], i: usize, end: usize, store: &LexiconStore) -> Option<(usize, Polarity, bool, String)> {
    let longest = store.max_phrase_tokens().min(end - i);
    for len in (1..=longest).rev() {
        let phrase = tokens[i..i + len].iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
        if let Some(e) = store.lookup(&phrase, Some(LexiconKind::Modifier)).first() {
            let (polarity, retro) = e.modifier().expect("modifier payload");
            return Some((len, polarity, retro, e.surface.clone()));
        }
    }
    for abbr in store.lookup(&tokens[i].text, Some(LexiconKind::Abbreviation)) {
        if let [sense] = abbr.senses() {
            if let Some(e) = store.lookup(&normalize(&sense.expansion), Some(LexiconKind::Modifier)).first() {
                let (polarity, retro) = e.modifier().expect("modifier payload");
                return Some((1, polarity, retro, e.surface.clone()));
            }
        }
    }
    None
}

/// Finds negation and uncertainty triggers.
///
/// A forward trigger governs up to `window` tokens after it, never past the
/// end of its clause. `?` governs the rest of its clause. A retrospective
/// trigger governs the tokens before it in its clause, or failing that the
/// previous clause, or failing that the previous sentence.
pub fn identify_modifiers(tokens: &[Token], sentences: &[Sentence], store: &LexiconStore, window: usize) -> Vec<ModifierSpan> {
    let mut spans = Vec::new();
    for (si, sentence) in sentences.iter().enumerate() {
        for (ci, clause) in sentence.clauses.iter().enumerate() {
            let mut i = clause.start;
            while i < clause.end {
                if tokens[i].shape.is_uncertainty_marker {
                    spans.push(ModifierSpan {
                        tokens: i..i + 1,
                        polarity: Polarity::Uncertainty,
                        scope: i + 1..clause.end,
                        retrospective: None,
                        trigger: "?".into(),
                    });
                    i += 1;
                    continue;
                }
                let Some((len, polarity, retro, trigger)) = match_at(tokens, i, clause.end, store) else {
                    i += 1;
                    continue;
                };
                let after = i + len;
                let span = if retro {
                    let back = if i > clause.start {
                        Some(clause.start..i)
                    } else if ci > 0 {
                        Some(sentence.clauses[ci - 1].clone())
                    } else if si > 0 {
                        Some(sentences[si - 1].tokens.clone())
                    } else {
                        None
                    };
                    ModifierSpan {
                        tokens: i..after,
                        polarity,
                        scope: after..after,
                        retrospective: back,
                        trigger,
                    }
                } else {
                    ModifierSpan {
                        tokens: i..after,
                        polarity,
                        scope: after..clause.end.min(after + window),
                        retrospective: None,
                        trigger,
                    }
                };
                spans.push(span);
                i = after;
            }
        }
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prepare::fix_boundaries;
    use crate::preprocess::{segment_sentences, tokenize};

    fn store() -> LexiconStore {
        LexiconStore::parse(
            "no | | MODIFIER | NEGATION\n\
             no abnormality detected | | MODIFIER | NEGATION retrospective\n\
             possible | | MODIFIER | UNCERTAINTY\n\
             NAD | | ABBREVIATION | no abnormality detected @ @ 1\n",
            "test",
            None,
        )
        .unwrap()
    }

    fn run(text: &str, window: usize) -> (Vec<Token>, Vec<ModifierSpan>) {
        let s = store();
        let t = tokenize(&fix_boundaries(text));
        let sents = segment_sentences(&t, &s);
        let m = identify_modifiers(&t, &sents, &s, window);
        (t, m)
    }

    fn words(t: &[Token], r: &Range<usize>) -> String {
        t[r.clone()].iter().map(|x| x.text.as_str()).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn negation_over_following_term() {
        let (t, m) = run("no EDH", 6);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].polarity, Polarity::Negation);
        assert_eq!(words(&t, &m[0].scope), "EDH");
    }

    #[test]
    fn question_mark_scopes_to_clause_end() {
        let (t, m) = run("?SAH and IVH, skull intact", 1);
        assert_eq!(m[0].polarity, Polarity::Uncertainty);
        assert_eq!(words(&t, &m[0].scope), "SAH and IVH");
    }

    #[test]
    fn window_and_clause_caps() {
        let (t, m) = run("no a b c d e f g h", 6);
        assert_eq!(words(&t, &m[0].scope), "a b c d e f");
        let (t, m) = run("no a b, SDH", 6);
        assert_eq!(words(&t, &m[0].scope), "a b");
    }

    #[test]
    fn expanded_and_abbreviated_nad_are_retrospective() {
        let (t, m) = run("chest clear, no abnormality detected", 6);
        assert_eq!(m.len(), 1);
        assert!(m[0].scope.is_empty());
        assert_eq!(words(&t, m[0].retrospective.as_ref().unwrap()), "chest clear");
        let (t, m) = run("abdo NAD", 6);
        assert_eq!(words(&t, m[0].retrospective.as_ref().unwrap()), "abdo");
        let (t, m) = run("CT head.\nNAD", 6);
        assert_eq!(words(&t, m[0].retrospective.as_ref().unwrap()), "CT head");
        let (_, m) = run("NAD", 6);
        assert_eq!(m[0].retrospective, None);
    }
}

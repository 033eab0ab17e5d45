use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{Sentence, Token};
use crate::lexicon::{LexiconKind, LexiconStore, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResolutionBasis {
    SentenceCue,
    NoteCue,
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenseResolution {
    pub abbreviation: String,
    pub expansion: String,
    pub rank: u32,
    pub basis: ResolutionBasis,
}

fn cue_counts(senses: &[Sense], tokens: &[Token], range: Range<usize>, skip: usize) -> Vec<usize> {
    senses
        .iter()
        .map(|s| {
            range
                .clone()
                .filter(|&j| j != skip)
                .filter(|&j| s.cues.iter().any(|c| c.eq_ignore_ascii_case(&tokens[j].text)))
                .count()
        })
        .collect()
}

/// Indices of the senses holding the maximum score.
fn leaders(scores: &[usize]) -> Vec<usize> {
    let max = scores.iter().copied().max().unwrap_or(0);
    (0..scores.len()).filter(|&i| scores[i] == max).collect()
}

/// Picks a sense for every abbreviation token: most cue terms in the
/// sentence, then in the note, then the lowest frequency rank.
pub fn disambiguate_abbreviations(tokens: &[Token], sentences: &[Sentence], store: &LexiconStore) -> BTreeMap<usize, SenseResolution> {
    let mut out = BTreeMap::new();
    for sentence in sentences {
        for i in sentence.tokens.clone() {
            let entries = store.lookup(&tokens[i].text, Some(LexiconKind::Abbreviation));
            let Some(entry) = entries.first() else { continue };
            let senses = entry.senses();
            if senses.is_empty() {
                continue;
            }
            let mut basis = ResolutionBasis::Frequency;
            let mut candidates: Vec<usize> = (0..senses.len()).collect();
            if senses.len() > 1 {
                let local = cue_counts(senses, tokens, sentence.tokens.clone(), i);
                let top = leaders(&local);
                if top.len() == 1 && local[top[0]] > 0 {
                    basis = ResolutionBasis::SentenceCue;
                    candidates = top;
                } else {
                    let global = cue_counts(senses, tokens, 0..tokens.len(), i);
                    let top = leaders(&global);
                    if top.len() == 1 && global[top[0]] > 0 {
                        basis = ResolutionBasis::NoteCue;
                    }
                    candidates = top;
                }
            }
            let chosen = candidates.into_iter().min_by_key(|&k| senses[k].rank).expect("non-empty");
            out.insert(
                i,
                SenseResolution {
                    abbreviation: entry.surface.clone(),
                    expansion: senses[chosen].expansion.clone(),
                    rank: senses[chosen].rank,
                    basis,
                },
            );
        }
    }
    out
}

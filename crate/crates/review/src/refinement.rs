//! Staged lexicon and rule proposals.

use chrono::{DateTime, Utc};
use neuroaudit::lexicon::{parse_line, LexiconEntry, LexiconStore, RefinementOutcome};
use neuroaudit::rules::{Rule, RuleSet};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Proposal {
    /// One line in lexicon file format.
    Lexicon { line: String },
    /// One or more rule blocks.
    Rule { text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagedRefinement {
    pub seq: usize,
    pub proposal: Proposal,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
    /// `added` or `merged` for lexicon proposals, `added` for rules.
    pub outcome: String,
}

/// Live lexicon and rules with every staged proposal applied on top.
#[derive(Debug, Clone)]
pub struct Staging {
    store: LexiconStore,
    rules: RuleSet,
    entries: Vec<LexiconEntry>,
    new_rules: Vec<Rule>,
}

impl Staging {
    pub fn new(store: LexiconStore, rules: RuleSet) -> Staging {
        Staging {
            store,
            rules,
            entries: Vec::new(),
            new_rules: Vec::new(),
        }
    }

    /// Checks a proposal against everything live or staged and, if it
    /// passes, stages it. Returns the outcome label.
    pub fn stage(&mut self, proposal: &Proposal) -> Result<&'static str, String> {
        match proposal {
            Proposal::Lexicon { line } => {
                let entry = parse_line(line, None)?;
                let (store, outcome) = self.store.refine(entry.clone()).map_err(|e| e.to_string())?;
                let label = match outcome {
                    RefinementOutcome::NoOp => return Err(format!("duplicate: {:?} is already present as proposed", entry.surface)),
                    RefinementOutcome::Added => "added",
                    RefinementOutcome::Merged => "merged",
                };
                self.store = store;
                self.entries.push(entry);
                Ok(label)
            }
            Proposal::Rule { text } => {
                let parsed = RuleSet::parse(text, "proposal").map_err(|e| e.to_string())?;
                if parsed.is_empty() {
                    return Err("no rule block found".into());
                }
                let mut all = self.rules.rules().to_vec();
                all.extend(parsed.rules().iter().cloned());
                self.rules = RuleSet::new(all)?;
                self.new_rules.extend(parsed.rules().iter().cloned());
                Ok("added")
            }
        }
    }

    /// Staged lexicon proposals as one lexicon file, with proposals for the
    /// same surface merged.
    pub fn lexicon_export(&self) -> String {
        let mut merged = LexiconStore::empty();
        for e in &self.entries {
            merged = merged.refine(e.clone()).expect("entries were accepted together").0;
        }
        merged.entries().iter().map(|e| e.to_line() + "\n").collect()
    }

    pub fn rules_export(&self) -> String {
        self.new_rules.iter().map(|r| r.to_block() + "\n").collect()
    }
}

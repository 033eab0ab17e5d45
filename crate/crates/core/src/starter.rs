//! The bundled seed lexicon, rule set and tables, compiled into the crate.

use crate::lexicon::{LexiconError, LexiconStore};
use crate::record::CodeTable;
use crate::rules::RuleSet;

pub const LEXICON_FILES: &[(&str, &str)] = &[
    ("abbreviations.lex", include_str!("../data/lexicon/abbreviations.lex")),
    ("causes_keyword.lex", include_str!("../data/lexicon/causes_keyword.lex")),
    ("causes_phrase.lex", include_str!("../data/lexicon/causes_phrase.lex")),
    ("domain.lex", include_str!("../data/lexicon/domain.lex")),
    ("modifiers.lex", include_str!("../data/lexicon/modifiers.lex")),
    ("spelling.lex", include_str!("../data/lexicon/spelling.lex")),
];

pub const RULES: &str = include_str!("../data/rules/starter.rules");
pub const CODE_TABLE: &str = include_str!("../data/tables/codes.csv");
pub const ALTERNATIVES: &str = include_str!("../data/tables/alternatives.txt");
pub const RECODE_APPROVALS: &str = include_str!("../data/tables/recode_approvals.txt");

/// Same result as loading `data/lexicon` from disk.
pub fn lexicon() -> Result<LexiconStore, LexiconError> {
    let parts = LEXICON_FILES
        .iter()
        .map(|(name, text)| LexiconStore::parse(text, name, None))
        .collect::<Result<Vec<_>, _>>()?;
    LexiconStore::merge(parts)
}

pub fn rules() -> RuleSet {
    RuleSet::parse(RULES, "starter.rules").expect("bundled rules compile")
}

pub fn code_table() -> CodeTable {
    CodeTable::parse(CODE_TABLE, "codes.csv").expect("bundled code table is closed")
}

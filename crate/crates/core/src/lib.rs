//! Suggests audit categories for free-text neurosurgical admission notes and
//! scores the suggestions against coded diagnoses.
//!
//! A note is prepared ([`prepare`]), split and annotated ([`preprocess`]),
//! then tagged with admission causes, rule-based audit categories and domain
//! concepts ([`concepts`], [`rules`]). [`pipeline::Pipeline`] runs all of it.
//!
//! ```
//! use neuroaudit::pipeline::Pipeline;
//! use neuroaudit::record::AdmissionRecord;
//!
//! let p = Pipeline::starter().unwrap();
//! let result = p.classify_note(&AdmissionRecord::from_note("1", "C5/6 disc prolapse, fall from ladder"));
//! assert!(!result.categories.is_empty());
//! ```

pub mod concepts;
pub mod config;
pub mod eval;
pub mod lexicon;
pub mod pipeline;
pub mod prepare;
pub mod preprocess;
pub mod record;
pub mod results;
pub mod rules;
pub mod starter;
pub mod synth;

// Book chapters run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/records.md")]
    mod records {}
    #[doc = include_str!("../../../book/src/lexicon.md")]
    mod lexicon {}
    #[doc = include_str!("../../../book/src/preparation.md")]
    mod preparation {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/rules.md")]
    mod rules {}
    #[doc = include_str!("../../../book/src/concepts.md")]
    mod concepts {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
}

//! Pipeline configuration file (TOML) and whole-configuration validation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{AlternativeTable, EvalError, RecodeApprovals};
use crate::lexicon::{load_lexicon, LexiconError, LexiconStore};
use crate::pipeline::Pipeline;
use crate::prepare::SpellSettings;
use crate::preprocess::PreprocessSettings;
use crate::record::{CodeTable, RecordError};
use crate::rules::{compile_rules, RuleError, UncertaintyPolicy};

pub const CONFIG_ENV: &str = "AUDIT_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Syntax { path: String, message: String },
    #[error("config {path}: {key} points to {target}, which does not exist")]
    MissingPath { path: String, key: &'static str, target: String },
    #[error("config {path}: {key} = {value} is outside {range}")]
    Range {
        path: String,
        key: &'static str,
        value: String,
        range: &'static str,
    },
    #[error("no config given and {CONFIG_ENV} is not set")]
    NoConfig,
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Table(#[from] RecordError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub lexicon_dir: PathBuf,
    pub rules: PathBuf,
    pub code_table: PathBuf,
    pub alternatives: PathBuf,
    pub recode_approvals: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tunables {
    pub spell_min_len: usize,
    pub spell_max_distance: usize,
    pub spell_long_len: usize,
    pub spell_long_max_distance: usize,
    pub modifier_window: usize,
    pub uncertainty_default: UncertaintyPolicy,
}

impl Default for Tunables {
    fn default() -> Self {
        let spell = SpellSettings::default();
        Tunables {
            spell_min_len: spell.min_len,
            spell_max_distance: spell.max_distance,
            spell_long_len: spell.long_len,
            spell_long_max_distance: spell.long_max_distance,
            modifier_window: PreprocessSettings::default().modifier_window,
            uncertainty_default: UncertaintyPolicy::FireFlagged,
        }
    }
}

impl Tunables {
    pub fn spell(&self) -> SpellSettings {
        SpellSettings {
            min_len: self.spell_min_len,
            max_distance: self.spell_max_distance,
            long_len: self.spell_long_len,
            long_max_distance: self.spell_long_max_distance,
        }
    }

    /// Compact label, e.g. `s5d1l8d2-w6-FIRE_FLAGGED`.
    pub fn label(&self) -> String {
        format!(
            "s{}d{}l{}d{}-w{}-{}",
            self.spell_min_len,
            self.spell_max_distance,
            self.spell_long_len,
            self.spell_long_max_distance,
            self.modifier_window,
            self.uncertainty_default
        )
    }

    fn check(&self, path: &str) -> Result<(), ConfigError> {
        let range = |key, value: usize, lo: usize, hi: usize, text| {
            if (lo..=hi).contains(&value) {
                Ok(())
            } else {
                Err(ConfigError::Range {
                    path: path.to_string(),
                    key,
                    value: value.to_string(),
                    range: text,
                })
            }
        };
        range("modifier_window", self.modifier_window, 1, 20, "1-20")?;
        range("spell_min_len", self.spell_min_len, 1, 30, "1-30")?;
        range("spell_max_distance", self.spell_max_distance, 0, 3, "0-3")?;
        range("spell_long_len", self.spell_long_len, self.spell_min_len, 40, "spell_min_len-40")?;
        range("spell_long_max_distance", self.spell_long_max_distance, self.spell_max_distance, 3, "spell_max_distance-3")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    paths: Paths,
    #[serde(default)]
    tunables: Tunables,
}

/// A loaded config; paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub source: PathBuf,
    pub paths: Paths,
    pub tunables: Tunables,
}

/// Everything a config refers to, loaded.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub pipeline: Pipeline,
    pub code_table: CodeTable,
    pub alternatives: AlternativeTable,
    pub approvals: RecodeApprovals,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Issue {
    Error(String),
    Warning(String),
}

impl PipelineConfig {
    /// Uses `explicit` when given, otherwise the `AUDIT_CONFIG` variable.
    pub fn resolve(explicit: Option<&Path>) -> Result<PathBuf, ConfigError> {
        match explicit {
            Some(p) => Ok(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV).map(PathBuf::from).ok_or(ConfigError::NoConfig),
        }
    }

    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let shown = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: shown.clone(),
            source,
        })?;
        let file: ConfigFile = toml::from_str(&text).map_err(|e| ConfigError::Syntax {
            path: shown.clone(),
            message: e.to_string(),
        })?;
        file.tunables.check(&shown)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = file.paths;
        let paths = Paths {
            lexicon_dir: base.join(p.lexicon_dir),
            rules: base.join(p.rules),
            code_table: base.join(p.code_table),
            alternatives: base.join(p.alternatives),
            recode_approvals: base.join(p.recode_approvals),
        };
        for (key, target) in [
            ("lexicon_dir", &paths.lexicon_dir),
            ("rules", &paths.rules),
            ("code_table", &paths.code_table),
            ("alternatives", &paths.alternatives),
            ("recode_approvals", &paths.recode_approvals),
        ] {
            if !target.exists() {
                return Err(ConfigError::MissingPath {
                    path: shown,
                    key,
                    target: target.display().to_string(),
                });
            }
        }
        Ok(PipelineConfig {
            source: path.to_path_buf(),
            paths,
            tunables: file.tunables,
        })
    }

    fn pipeline_from(&self, store: LexiconStore) -> Result<Pipeline, ConfigError> {
        let rules = compile_rules(&self.paths.rules)?.with_default_uncertainty(self.tunables.uncertainty_default);
        let mut pipeline = Pipeline::new(store, rules);
        pipeline.spell = self.tunables.spell();
        pipeline.preprocess = PreprocessSettings {
            modifier_window: self.tunables.modifier_window,
        };
        pipeline.tunables_label = self.tunables.label();
        Ok(pipeline)
    }

    pub fn pipeline(&self) -> Result<Pipeline, ConfigError> {
        self.pipeline_from(LexiconStore::load_dir(&self.paths.lexicon_dir)?)
    }

    /// Loads the pipeline and all evaluation tables, stopping at the first error.
    pub fn load_all(&self) -> Result<Loaded, ConfigError> {
        Ok(Loaded {
            pipeline: self.pipeline()?,
            code_table: CodeTable::load(&self.paths.code_table)?,
            alternatives: AlternativeTable::load(&self.paths.alternatives)?,
            approvals: RecodeApprovals::load(&self.paths.recode_approvals)?,
        })
    }

    /// Loads every file the config names and reports all problems found.
    /// Rule categories outside the initial audit list are warnings.
    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        let mut parts = Vec::new();
        match lexicon_files(&self.paths.lexicon_dir) {
            Ok(files) => {
                for file in files {
                    match load_lexicon(&file, None) {
                        Ok(s) => parts.push(s),
                        Err(e) => issues.push(Issue::Error(e.to_string())),
                    }
                }
            }
            Err(e) => issues.push(Issue::Error(e.to_string())),
        }
        if issues.is_empty() {
            if let Err(e) = LexiconStore::merge(parts) {
                issues.push(Issue::Error(e.to_string()));
            }
        }
        match compile_rules(&self.paths.rules) {
            Ok(rules) => {
                for r in rules.rules().iter().filter(|r| !r.category.is_initial()) {
                    issues.push(Issue::Warning(format!(
                        "rule {} uses category {} outside the initial audit categories",
                        r.id, r.category
                    )));
                }
            }
            Err(e) => issues.push(Issue::Error(e.to_string())),
        }
        if let Err(e) = CodeTable::load(&self.paths.code_table) {
            issues.push(Issue::Error(e.to_string()));
        }
        if let Err(e) = AlternativeTable::load(&self.paths.alternatives) {
            issues.push(Issue::Error(e.to_string()));
        }
        if let Err(e) = RecodeApprovals::load(&self.paths.recode_approvals) {
            issues.push(Issue::Error(e.to_string()));
        }
        issues
    }
}

fn lexicon_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "lex"))
        .collect();
    files.sort();
    Ok(files)
}

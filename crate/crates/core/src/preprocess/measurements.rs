use std::fmt;
use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Sentence, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MeasurementKind {
    GcsScore,
    VertebralLevel,
    Dose,
    Size,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    C,
    T,
    L,
    S,
}

impl Region {
    fn parse(c: char) -> Option<Region> {
        match c.to_ascii_uppercase() {
            'C' => Some(Region::C),
            'T' => Some(Region::T),
            'L' => Some(Region::L),
            'S' => Some(Region::S),
            _ => None,
        }
    }

    pub fn max_level(self) -> u8 {
        match self {
            Region::C => 7,
            Region::T => 12,
            Region::L | Region::S => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertebralLevel {
    pub region: Region,
    pub level: u8,
}

impl VertebralLevel {
    pub fn new(region: Region, level: u8) -> Option<VertebralLevel> {
        (1..=region.max_level()).contains(&level).then_some(VertebralLevel { region, level })
    }
}

impl fmt::Display for VertebralLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{}", self.region, self.level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeasurementValue {
    Gcs { score: u8 },
    Vertebral { from: VertebralLevel, to: Option<VertebralLevel> },
    Dose { amount: f64, unit: String },
    Size { amount: f64, unit: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpan {
    pub tokens: Range<usize>,
    pub kind: MeasurementKind,
    pub value: MeasurementValue,
}

static VERTEBRA: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([CTLS])(\d{1,2})(?:[-/]([CTLS])?(\d{1,2}))?$").unwrap());
static GCS_VALUE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d{1,2})(?:/15)?$").unwrap());
static AMOUNT_UNIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(\d+(?:\.\d+)?)(mg|mcg|g|ml|units|iu|mm|cm)?$").unwrap());
static UNIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^(mg|mcg|g|ml|units|iu|mm|cm)$").unwrap());

fn vertebral(text: &str) -> Option<Result<MeasurementValue, String>> {
    let c = VERTEBRA.captures(text)?;
    let region = Region::parse(c[1].chars().next()?)?;
    let level: u8 = c[2].parse().ok()?;
    let Some(from) = VertebralLevel::new(region, level) else {
        return Some(Err(format!("vertebral level {text} out of range for region {region:?}")));
    };
    let to = match c.get(4) {
        None => None,
        Some(end) => {
            let end_region = c.get(3).and_then(|r| r.as_str().chars().next()).and_then(Region::parse).unwrap_or(region);
            let end_level: u8 = end.as_str().parse().ok()?;
            match VertebralLevel::new(end_region, end_level) {
                Some(to) if to > from => Some(to),
                _ => return Some(Err(format!("vertebral range {text} is out of bounds"))),
            }
        }
    };
    Some(Ok(MeasurementValue::Vertebral { from, to }))
}

fn amount(token: &str, unit_token: Option<&Token>) -> Option<(f64, String, usize)> {
    let c = AMOUNT_UNIT.captures(token)?;
    let value: f64 = c[1].parse().ok()?;
    match c.get(2) {
        Some(u) => Some((value, u.as_str().to_lowercase(), 1)),
        None => {
            let u = unit_token.filter(|t| UNIT.is_match(&t.text))?;
            Some((value, u.text.to_lowercase(), 2))
        }
    }
}

/// Pattern-matches scores, vertebral levels, doses and sizes within each
/// clause. Out-of-range values produce a diagnostic instead of a span.
pub fn identify_measurements(tokens: &[Token], sentences: &[Sentence]) -> (Vec<MeasurementSpan>, Vec<String>) {
    let mut spans = Vec::new();
    let mut diagnostics = Vec::new();
    for clause in sentences.iter().flat_map(|s| s.clauses.iter()) {
        let mut i = clause.start;
        while i < clause.end {
            let text = tokens[i].text.as_str();
            if text.eq_ignore_ascii_case("gcs") {
                let mut j = i + 1;
                if j < clause.end && (tokens[j].text == "=" || tokens[j].text == ":") {
                    j += 1;
                }
                if let Some(c) = tokens.get(j).filter(|_| j < clause.end).and_then(|t| GCS_VALUE.captures(&t.text)) {
                    let score: u8 = c[1].parse().unwrap_or(0);
                    if (3..=15).contains(&score) {
                        spans.push(MeasurementSpan {
                            tokens: i..j + 1,
                            kind: MeasurementKind::GcsScore,
                            value: MeasurementValue::Gcs { score },
                        });
                    } else {
                        diagnostics.push(format!("GCS value {score} outside 3-15 at byte {}", tokens[j].start));
                    }
                    i = j + 1;
                    continue;
                }
            } else if let Some(v) = vertebral(text) {
                match v {
                    Ok(value) => spans.push(MeasurementSpan {
                        tokens: i..i + 1,
                        kind: MeasurementKind::VertebralLevel,
                        value,
                    }),
                    Err(d) => diagnostics.push(d),
                }
            } else if let Some((amount, unit, len)) = amount(text, tokens.get(i + 1).filter(|_| i + 1 < clause.end)) {
                let (kind, value) = if unit == "mm" || unit == "cm" {
                    (MeasurementKind::Size, MeasurementValue::Size { amount, unit })
                } else {
                    (MeasurementKind::Dose, MeasurementValue::Dose { amount, unit })
                };
                spans.push(MeasurementSpan {
                    tokens: i..i + len,
                    kind,
                    value,
                });
                i += len;
                continue;
            }
            i += 1;
        }
    }
    (spans, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::LexiconStore;
    use crate::prepare::fix_boundaries;
    use crate::preprocess::{segment_sentences, tokenize};

    fn run(text: &str) -> (Vec<MeasurementSpan>, Vec<String>) {
        let t = tokenize(&fix_boundaries(text));
        identify_measurements(&t, &segment_sentences(&t, &LexiconStore::empty()))
    }

    fn lvl(region: Region, level: u8) -> VertebralLevel {
        VertebralLevel::new(region, level).unwrap()
    }

    #[test]
    fn gcs() {
        let (m, d) = run("Ped v car, GCS 3, ETOH");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].value, MeasurementValue::Gcs { score: 3 });
        assert_eq!(m[0].tokens.len(), 2);
        assert!(d.is_empty());
        let (m, d) = run("GCS 20");
        assert!(m.is_empty());
        assert_eq!(d.len(), 1);
        assert_eq!(run("GCS 14/15").0[0].value, MeasurementValue::Gcs { score: 14 });
        assert!(run("GCS").0.is_empty());
    }

    #[test]
    fn vertebral_levels() {
        let (m, _) = run("# R C7 superior articular facet");
        assert_eq!(
            m[0].value,
            MeasurementValue::Vertebral {
                from: lvl(Region::C, 7),
                to: None
            }
        );
        for text in ["C5/6", "C5-6"] {
            let (m, _) = run(text);
            assert_eq!(m.len(), 1, "{text}");
            assert_eq!(
                m[0].value,
                MeasurementValue::Vertebral {
                    from: lvl(Region::C, 5),
                    to: Some(lvl(Region::C, 6))
                }
            );
        }
        let (m, _) = run("L5-S1");
        assert_eq!(
            m[0].value,
            MeasurementValue::Vertebral {
                from: lvl(Region::L, 5),
                to: Some(lvl(Region::S, 1))
            }
        );
        for bad in ["C8", "T13", "L6", "S6", "C0"] {
            let (m, d) = run(bad);
            assert!(m.is_empty(), "{bad}");
            assert_eq!(d.len(), 1, "{bad}");
        }
    }

    #[test]
    fn dose_and_size() {
        let (m, _) = run("dexamethasone 4mg, 12 mm SDH");
        assert_eq!(m[0].kind, MeasurementKind::Dose);
        assert_eq!(m[1].kind, MeasurementKind::Size);
        assert_eq!(m[1].tokens.len(), 2);
        assert!(run("3 lesions").0.is_empty());
    }
}

//! Turns a patient profile into five boolean data elements by keyword
//! matching over raw tokens, with negated mentions excluded.
//!
//! Matching runs on the tokenize output, not the preprocessed stream,
//! because short abbreviations like "hf" would not survive the length
//! filter and negation cues like "no" are stopwords.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::PatientProfile;
use crate::error::{Error, Result};
use crate::negation::{detect_negated_spans, is_mention_negated, TriggerLexicon, DEFAULT_WINDOW};
use crate::textprep::{tokenize, Token};

/// Default keyword lexicon, overridable at runtime.
pub const DEFAULT_KEYWORDS: &str = include_str!("../data/hf_keywords.txt");

/// The five data elements.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum DataElement {
    CardiologyConsulted,
    HeartFailure,
    AtGalter10,
    HeartTransplant,
    NonActiveIssue,
}

impl DataElement {
    pub const ALL: [DataElement; 5] = [
        DataElement::CardiologyConsulted,
        DataElement::HeartFailure,
        DataElement::AtGalter10,
        DataElement::HeartTransplant,
        DataElement::NonActiveIssue,
    ];

    fn from_section(name: &str) -> Option<DataElement> {
        match name {
            "cardiology_consulted" => Some(DataElement::CardiologyConsulted),
            "heart_failure" => Some(DataElement::HeartFailure),
            "at_galter_10" => Some(DataElement::AtGalter10),
            "heart_transplant" => Some(DataElement::HeartTransplant),
            "non_active_issue" => Some(DataElement::NonActiveIssue),
            _ => None,
        }
    }
}

impl fmt::Display for DataElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DataElement::CardiologyConsulted => "cardiology_consulted",
            DataElement::HeartFailure => "heart_failure",
            DataElement::AtGalter10 => "at_galter_10",
            DataElement::HeartTransplant => "heart_transplant",
            DataElement::NonActiveIssue => "non_active_issue",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct KeywordPhrase {
    tokens: Vec<String>,
    whole_token: bool,
}

/// Phrase lists per data element.
#[derive(Debug, Clone)]
pub struct KeywordLexicon {
    phrases: BTreeMap<DataElement, Vec<KeywordPhrase>>,
}

impl Default for KeywordLexicon {
    fn default() -> Self {
        KeywordLexicon::parse(DEFAULT_KEYWORDS, "<builtin>").expect("builtin keyword lexicon")
    }
}

impl KeywordLexicon {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        KeywordLexicon::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut phrases: BTreeMap<DataElement, Vec<KeywordPhrase>> = BTreeMap::new();
        let mut section: Option<DataElement> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::LexiconFormat {
                path: origin.to_string(),
                line: lineno + 1,
                reason,
            };
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = Some(
                    DataElement::from_section(name)
                        .ok_or_else(|| err(format!("unknown section [{name}]")))?,
                );
                continue;
            }
            let element = section.ok_or_else(|| err("phrase before any section header".into()))?;
            let (body, whole_token) = match line.strip_suffix('!') {
                Some(b) => (b.trim(), true),
                None => (line, false),
            };
            let tokens: Vec<String> = body.split_whitespace().map(|w| w.to_lowercase()).collect();
            if tokens.is_empty() {
                return Err(err("empty phrase".into()));
            }
            phrases
                .entry(element)
                .or_default()
                .push(KeywordPhrase { tokens, whole_token });
        }
        Ok(KeywordLexicon { phrases })
    }

    /// All phrases flattened, for synthesis guards and reporting.
    pub fn all_phrases(&self) -> Vec<(DataElement, Vec<String>)> {
        self.phrases
            .iter()
            .flat_map(|(el, ps)| ps.iter().map(move |p| (*el, p.tokens.clone())))
            .collect()
    }

    fn match_at(&self, surfaces: &[&str], pos: usize) -> Vec<(DataElement, usize, String)> {
        let mut out = Vec::new();
        for (element, list) in &self.phrases {
            for phrase in list {
                let n = phrase.tokens.len();
                if pos + n > surfaces.len() {
                    continue;
                }
                let ok = phrase.tokens.iter().enumerate().all(|(i, want)| {
                    let got = surfaces[pos + i];
                    if phrase.whole_token || i + 1 < n {
                        got == want
                    } else {
                        got.starts_with(want.as_str())
                    }
                });
                if ok {
                    out.push((*element, n, phrase.tokens.join(" ")));
                }
            }
        }
        out
    }
}

/// One keyword occurrence. `token_range` indexes into the tokens of the
/// mention's own sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub element: DataElement,
    pub note_id: String,
    pub sentence_index: usize,
    pub token_range: Range<usize>,
    pub phrase: String,
}

/// Location of one surviving (non-negated) keyword match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub note_id: String,
    pub sentence_index: usize,
    pub phrase: String,
}

/// The five booleans plus the mentions backing them. An element is true
/// iff its evidence list is non-empty; construct via [`DataElements::from_evidence`]
/// to keep that invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataElements {
    pub cardiology_consulted: bool,
    pub heart_failure: bool,
    pub at_galter_10: bool,
    pub heart_transplant: bool,
    pub non_active_issue: bool,
    pub evidence: BTreeMap<DataElement, Vec<Evidence>>,
}

impl DataElements {
    pub fn from_evidence(evidence: BTreeMap<DataElement, Vec<Evidence>>) -> Self {
        let has = |el: DataElement| evidence.get(&el).map_or(false, |v| !v.is_empty());
        DataElements {
            cardiology_consulted: has(DataElement::CardiologyConsulted),
            heart_failure: has(DataElement::HeartFailure),
            at_galter_10: has(DataElement::AtGalter10),
            heart_transplant: has(DataElement::HeartTransplant),
            non_active_issue: has(DataElement::NonActiveIssue),
            evidence,
        }
    }

    /// Flag constructor for tests and rule-table exploration; evidence left empty.
    pub fn from_flags(
        cardiology_consulted: bool,
        heart_failure: bool,
        at_galter_10: bool,
        heart_transplant: bool,
        non_active_issue: bool,
    ) -> Self {
        DataElements {
            cardiology_consulted,
            heart_failure,
            at_galter_10,
            heart_transplant,
            non_active_issue,
            evidence: BTreeMap::new(),
        }
    }

    pub fn get(&self, el: DataElement) -> bool {
        match el {
            DataElement::CardiologyConsulted => self.cardiology_consulted,
            DataElement::HeartFailure => self.heart_failure,
            DataElement::AtGalter10 => self.at_galter_10,
            DataElement::HeartTransplant => self.heart_transplant,
            DataElement::NonActiveIssue => self.non_active_issue,
        }
    }
}

/// Find every keyword occurrence across the profile's notes, negated or
/// not. Matching is case-insensitive and sentence-scoped; whole-token
/// entries never fire inside longer tokens.
pub fn find_keyword_mentions(profile: &PatientProfile, lexicon: &KeywordLexicon) -> Vec<Mention> {
    let mut mentions = Vec::new();
    for note in &profile.notes {
        let tokens = tokenize(&note.text);
        for sentence in group_sentences(&tokens) {
            let surfaces: Vec<&str> = sentence.iter().map(|t| t.surface.as_str()).collect();
            let sentence_index = sentence[0].sentence_index;
            for pos in 0..surfaces.len() {
                for (element, len, phrase) in lexicon.match_at(&surfaces, pos) {
                    mentions.push(Mention {
                        element,
                        note_id: note.note_id.clone(),
                        sentence_index,
                        token_range: pos..pos + len,
                        phrase,
                    });
                }
            }
        }
    }
    mentions
}

/// Extract the five data elements with negation exclusion at the default
/// scope window.
pub fn extract_data_elements(
    profile: &PatientProfile,
    lexicon: &KeywordLexicon,
    triggers: &TriggerLexicon,
) -> DataElements {
    extract_data_elements_with(profile, lexicon, Some(triggers), DEFAULT_WINDOW)
}

/// As [`extract_data_elements`], with negation optionally disabled
/// (`triggers: None`) and a configurable window.
pub fn extract_data_elements_with(
    profile: &PatientProfile,
    lexicon: &KeywordLexicon,
    triggers: Option<&TriggerLexicon>,
    window: usize,
) -> DataElements {
    let mut evidence: BTreeMap<DataElement, Vec<Evidence>> = BTreeMap::new();
    for note in &profile.notes {
        let tokens = tokenize(&note.text);
        for sentence in group_sentences(&tokens) {
            let surfaces: Vec<&str> = sentence.iter().map(|t| t.surface.as_str()).collect();
            let sentence_index = sentence[0].sentence_index;
            let mut spans = None;
            for pos in 0..surfaces.len() {
                for (element, len, phrase) in lexicon.match_at(&surfaces, pos) {
                    let range = pos..pos + len;
                    if let Some(trig) = triggers {
                        let spans = spans
                            .get_or_insert_with(|| detect_negated_spans(sentence, trig, window));
                        if is_mention_negated(&range, spans) {
                            continue;
                        }
                    }
                    evidence.entry(element).or_default().push(Evidence {
                        note_id: note.note_id.clone(),
                        sentence_index,
                        phrase,
                    });
                }
            }
        }
    }
    DataElements::from_evidence(evidence)
}

/// Split a note's token stream into per-sentence slices.
fn group_sentences(tokens: &[Token]) -> Vec<&[Token]> {
    let mut out = Vec::new();
    let mut start = 0usize;
    for i in 1..=tokens.len() {
        if i == tokens.len() || tokens[i].sentence_index != tokens[start].sentence_index {
            out.push(&tokens[start..i]);
            start = i;
        }
    }
    out
}

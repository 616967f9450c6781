//! NegEx-style negation detection: trigger phrases open token-window
//! scopes inside a sentence, and keyword mentions falling inside a scope
//! are treated as negated.
//!
//! Pre-negation triggers ("no", "denies") open a forward scope, post-
//! negation triggers ("unlikely", "ruled out") a backward one. Pseudo-
//! negation phrases ("no increase") consume their tokens without opening
//! a scope, and termination phrases ("but", "however") cut a scope short.
//! Scopes never cross sentence boundaries. Triggers are resolved
//! longest-match-first, so "no evidence of" wins over "no" at the same
//! position.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::Token;

/// Default trigger lexicon, overridable at runtime.
pub const DEFAULT_TRIGGERS: &str = include_str!("../data/negex_triggers.txt");

/// Default scope window, in tokens.
pub const DEFAULT_WINDOW: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeDirection {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TriggerKind {
    Pre,
    Post,
    Pseudo,
    Termination,
}

/// A negated token region within one sentence. `token_range` is half-open
/// and indexes into the sentence's own token slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegatedSpan {
    pub sentence_index: usize,
    pub token_range: Range<usize>,
    pub trigger: String,
    pub direction: ScopeDirection,
}

/// The four trigger phrase categories. Phrases are stored tokenized and
/// lowercased; sets are pairwise disjoint.
#[derive(Debug, Clone)]
pub struct TriggerLexicon {
    pre: Vec<Vec<String>>,
    post: Vec<Vec<String>>,
    pseudo: Vec<Vec<String>>,
    termination: Vec<Vec<String>>,
    /// All phrases of all categories, longest first, for scanning.
    scan_order: Vec<(Vec<String>, TriggerKind)>,
}

impl Default for TriggerLexicon {
    fn default() -> Self {
        TriggerLexicon::parse(DEFAULT_TRIGGERS, "<builtin>").expect("builtin trigger lexicon")
    }
}

impl TriggerLexicon {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        TriggerLexicon::parse(&text, &path.display().to_string())
    }

    /// Parse the sectioned plain-text format: `[pre]`, `[post]`, `[pseudo]`,
    /// `[termination]` headers, one phrase per line, `#` comments.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut pre = Vec::new();
        let mut post = Vec::new();
        let mut pseudo = Vec::new();
        let mut termination = Vec::new();
        let mut section: Option<TriggerKind> = None;
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
                section = Some(match name {
                    "pre" => TriggerKind::Pre,
                    "post" => TriggerKind::Post,
                    "pseudo" => TriggerKind::Pseudo,
                    "termination" => TriggerKind::Termination,
                    other => return Err(err(format!("unknown section [{other}]"))),
                });
                continue;
            }
            let kind = section.ok_or_else(|| err("phrase before any section header".into()))?;
            let phrase: Vec<String> = line.split_whitespace().map(|w| w.to_lowercase()).collect();
            if phrase.is_empty() || phrase.len() > 4 {
                return Err(err(format!("phrase must be 1-4 tokens: {line:?}")));
            }
            match kind {
                TriggerKind::Pre => pre.push(phrase),
                TriggerKind::Post => post.push(phrase),
                TriggerKind::Pseudo => pseudo.push(phrase),
                TriggerKind::Termination => termination.push(phrase),
            }
        }
        let lex = TriggerLexicon::build(pre, post, pseudo, termination)?;
        Ok(lex)
    }

    pub fn new(
        pre: Vec<Vec<String>>,
        post: Vec<Vec<String>>,
        pseudo: Vec<Vec<String>>,
        termination: Vec<Vec<String>>,
    ) -> Result<Self> {
        TriggerLexicon::build(pre, post, pseudo, termination)
    }

    /// An empty lexicon: no triggers, nothing ever negated. Used to disable
    /// negation handling.
    pub fn empty() -> Self {
        TriggerLexicon {
            pre: Vec::new(),
            post: Vec::new(),
            pseudo: Vec::new(),
            termination: Vec::new(),
            scan_order: Vec::new(),
        }
    }

    fn build(
        pre: Vec<Vec<String>>,
        post: Vec<Vec<String>>,
        pseudo: Vec<Vec<String>>,
        termination: Vec<Vec<String>>,
    ) -> Result<Self> {
        let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
        for phrase in pre.iter().chain(&post).chain(&pseudo).chain(&termination) {
            if phrase.is_empty() || phrase.len() > 4 {
                return Err(Error::InvalidConfig(format!(
                    "trigger phrase must be 1-4 tokens: {phrase:?}"
                )));
            }
            if !seen.insert(phrase.clone()) {
                return Err(Error::InvalidConfig(format!(
                    "trigger phrase {:?} appears in more than one category",
                    phrase.join(" ")
                )));
            }
        }
        let mut scan_order: Vec<(Vec<String>, TriggerKind)> = Vec::new();
        scan_order.extend(pre.iter().cloned().map(|p| (p, TriggerKind::Pre)));
        scan_order.extend(post.iter().cloned().map(|p| (p, TriggerKind::Post)));
        scan_order.extend(pseudo.iter().cloned().map(|p| (p, TriggerKind::Pseudo)));
        scan_order.extend(
            termination
                .iter()
                .cloned()
                .map(|p| (p, TriggerKind::Termination)),
        );
        // longest first so the scanner resolves overlaps by longest match;
        // ties broken lexicographically for determinism
        scan_order.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(TriggerLexicon {
            pre,
            post,
            pseudo,
            termination,
            scan_order,
        })
    }

    /// True if any phrase of any category starts at `pos` in `surfaces`.
    fn match_at(&self, surfaces: &[&str], pos: usize) -> Option<(usize, TriggerKind)> {
        for (phrase, kind) in &self.scan_order {
            if pos + phrase.len() <= surfaces.len()
                && phrase.iter().zip(&surfaces[pos..]).all(|(p, s)| p == s)
            {
                return Some((phrase.len(), *kind));
            }
        }
        None
    }

    /// True if the token sequence contains any trigger or termination
    /// phrase. Used by the corpus synthesizer to keep filler text clean.
    pub fn contains_any_phrase(&self, surfaces: &[&str]) -> bool {
        (0..surfaces.len()).any(|pos| self.match_at(surfaces, pos).is_some())
    }

    pub fn pre_phrases(&self) -> &[Vec<String>] {
        &self.pre
    }

    pub fn post_phrases(&self) -> &[Vec<String>] {
        &self.post
    }

    pub fn pseudo_phrases(&self) -> &[Vec<String>] {
        &self.pseudo
    }

    pub fn termination_phrases(&self) -> &[Vec<String>] {
        &self.termination
    }
}

struct TriggerHit {
    start: usize,
    end: usize,
    kind: TriggerKind,
    phrase: String,
}

/// Detect negated token spans within one sentence. `window` bounds the
/// scope length in tokens; scopes are cut short by termination phrases and
/// by the sentence ends. Returned spans are ordered by start.
pub fn detect_negated_spans(
    sentence_tokens: &[Token],
    lexicon: &TriggerLexicon,
    window: usize,
) -> Vec<NegatedSpan> {
    assert!(window >= 1, "negation window must be >= 1");
    if sentence_tokens.is_empty() {
        return Vec::new();
    }
    let sentence_index = sentence_tokens[0].sentence_index;
    let surfaces: Vec<&str> = sentence_tokens.iter().map(|t| t.surface.as_str()).collect();
    let len = surfaces.len();

    // single left-to-right scan with longest-match resolution; matched
    // phrases consume their tokens
    let mut hits: Vec<TriggerHit> = Vec::new();
    let mut pos = 0usize;
    while pos < len {
        match lexicon.match_at(&surfaces, pos) {
            Some((plen, kind)) => {
                hits.push(TriggerHit {
                    start: pos,
                    end: pos + plen,
                    kind,
                    phrase: surfaces[pos..pos + plen].join(" "),
                });
                pos += plen;
            }
            None => pos += 1,
        }
    }

    let terminations: Vec<&TriggerHit> = hits
        .iter()
        .filter(|h| h.kind == TriggerKind::Termination)
        .collect();

    let mut spans = Vec::new();
    for hit in &hits {
        match hit.kind {
            TriggerKind::Pre => {
                let mut end = (hit.end + window).min(len);
                for term in &terminations {
                    if term.start >= hit.end && term.start < end {
                        end = term.start;
                    }
                }
                if end > hit.end {
                    spans.push(NegatedSpan {
                        sentence_index,
                        token_range: hit.end..end,
                        trigger: hit.phrase.clone(),
                        direction: ScopeDirection::Forward,
                    });
                }
            }
            TriggerKind::Post => {
                let mut start = hit.start.saturating_sub(window);
                for term in &terminations {
                    if term.end <= hit.start && term.end > start {
                        start = term.end;
                    }
                }
                if start < hit.start {
                    spans.push(NegatedSpan {
                        sentence_index,
                        token_range: start..hit.start,
                        trigger: hit.phrase.clone(),
                        direction: ScopeDirection::Backward,
                    });
                }
            }
            TriggerKind::Pseudo | TriggerKind::Termination => {}
        }
    }
    spans.sort_by_key(|s| (s.token_range.start, s.token_range.end));
    spans
}

/// True iff the mention's token range intersects any negated span.
/// The caller passes spans detected in the mention's own sentence.
pub fn is_mention_negated(mention: &Range<usize>, spans: &[NegatedSpan]) -> bool {
    spans
        .iter()
        .any(|s| mention.start < s.token_range.end && s.token_range.start < mention.end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::tokenize;

    fn spans_for(sentence: &str) -> (Vec<Token>, Vec<NegatedSpan>) {
        let toks = tokenize(sentence);
        let lex = TriggerLexicon::default();
        let spans = detect_negated_spans(&toks, &lex, DEFAULT_WINDOW);
        (toks, spans)
    }

    fn mention_range(tokens: &[Token], phrase: &str) -> Range<usize> {
        let want: Vec<String> = phrase.split_whitespace().map(|w| w.to_lowercase()).collect();
        for start in 0..tokens.len() {
            if start + want.len() <= tokens.len()
                && want
                    .iter()
                    .zip(&tokens[start..])
                    .all(|(w, t)| *w == t.surface)
            {
                return start..start + want.len();
            }
        }
        panic!("mention {phrase:?} not found");
    }

    #[test]
    fn denies_opens_forward_scope() {
        let (toks, spans) = spans_for("he denies any symptomatic precipitants");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].trigger, "denies");
        assert_eq!(spans[0].direction, ScopeDirection::Forward);
        assert_eq!(spans[0].token_range, 2..5);
        let m = mention_range(&toks, "symptomatic precipitants");
        assert!(is_mention_negated(&m, &spans));
    }

    #[test]
    fn termination_cuts_scope() {
        let (toks, spans) = spans_for("no evidence of chf but has copd");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].trigger, "no evidence of");
        assert_eq!(spans[0].token_range, 3..4);
        assert!(is_mention_negated(&mention_range(&toks, "chf"), &spans));
        assert!(!is_mention_negated(&mention_range(&toks, "copd"), &spans));
    }

    #[test]
    fn no_triggers_no_spans() {
        let (_, spans) = spans_for("lungs clear to auscultation");
        assert!(spans.is_empty());
    }

    #[test]
    fn pseudo_negation_opens_no_scope() {
        let (toks, spans) = spans_for("no increase in peripheral edema");
        assert!(spans.is_empty());
        assert!(!is_mention_negated(&mention_range(&toks, "edema"), &spans));
    }

    #[test]
    fn longest_match_wins() {
        // "no evidence of" must be chosen over "no"
        let (_, spans) = spans_for("no evidence of failure");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].trigger, "no evidence of");
    }

    #[test]
    fn post_trigger_scopes_backward() {
        let (toks, spans) = spans_for("chf was ruled out");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].direction, ScopeDirection::Backward);
        assert!(is_mention_negated(&mention_range(&toks, "chf"), &spans));
    }

    #[test]
    fn window_is_half_open() {
        // trigger "no" at 0, window 6 -> scope covers token indices 1..7
        let (toks, spans) =
            spans_for("no fever cough rash chills fatigue edema dyspnea");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].token_range, 1..7);
        assert!(is_mention_negated(&mention_range(&toks, "edema"), &spans)); // index 6
        assert!(!is_mention_negated(&mention_range(&toks, "dyspnea"), &spans)); // index 7
    }

    #[test]
    fn mention_before_forward_trigger_is_not_negated() {
        let (toks, spans) = spans_for("edema present denies chest pain");
        assert!(!is_mention_negated(&mention_range(&toks, "edema"), &spans));
        assert!(is_mention_negated(&mention_range(&toks, "chest pain"), &spans));
    }

    #[test]
    fn scopes_do_not_cross_sentences() {
        let text = "no acute distress. patient reports chf symptoms";
        let toks = tokenize(text);
        let lex = TriggerLexicon::default();
        let first: Vec<Token> = toks.iter().filter(|t| t.sentence_index == 0).cloned().collect();
        let second: Vec<Token> = toks.iter().filter(|t| t.sentence_index == 1).cloned().collect();
        let spans0 = detect_negated_spans(&first, &lex, DEFAULT_WINDOW);
        let spans1 = detect_negated_spans(&second, &lex, DEFAULT_WINDOW);
        assert_eq!(spans0.len(), 1);
        assert!(spans1.is_empty());
        let m = mention_range(&second, "chf");
        assert!(!is_mention_negated(&m, &spans1));
    }

    #[test]
    fn rule_out_is_pseudo_but_ruled_out_negates() {
        let (toks, spans) = spans_for("plan to rule out chf");
        assert!(!is_mention_negated(&mention_range(&toks, "chf"), &spans));
        let (toks2, spans2) = spans_for("chf has been ruled out");
        assert!(is_mention_negated(&mention_range(&toks2, "chf"), &spans2));
    }

    #[test]
    fn duplicate_phrase_across_categories_rejected() {
        let err = TriggerLexicon::new(
            vec![vec!["no".into()]],
            vec![vec!["no".into()]],
            vec![],
            vec![],
        );
        assert!(err.is_err());
    }

    #[test]
    fn default_lexicon_sections_nonempty() {
        let lex = TriggerLexicon::default();
        assert!(!lex.pre_phrases().is_empty());
        assert!(!lex.post_phrases().is_empty());
        assert!(!lex.pseudo_phrases().is_empty());
        assert!(!lex.termination_phrases().is_empty());
    }

    #[test]
    fn empty_lexicon_never_negates() {
        let toks = tokenize("denies chf and edema");
        let spans = detect_negated_spans(&toks, &TriggerLexicon::empty(), DEFAULT_WINDOW);
        assert!(spans.is_empty());
    }
}

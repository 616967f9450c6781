//! Sentence splitting, tokenization, and the three preprocessing steps
//! (number placeholdering, stopword removal, short-token removal) shared
//! by the rule and machine-learning tracks.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default English stopword list, one token per line, overridable at runtime.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// One token of source text. `span` is a byte range into the original text
/// (always on character boundaries); `surface` is the token text after
/// case folding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub span: Range<usize>,
    pub sentence_index: usize,
}

/// Configuration for [`preprocess`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Tokens removed outright. Stored sorted for a stable fingerprint.
    pub stopwords: BTreeSet<String>,
    /// Tokens shorter than this are removed (placeholder exempt).
    pub min_token_len: usize,
    /// Replacement for purely numeric tokens.
    pub number_placeholder: String,
    pub lowercase: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            stopwords: parse_stopwords(DEFAULT_STOPWORDS),
            min_token_len: 4,
            number_placeholder: "NUM".to_string(),
            lowercase: true,
        }
    }
}

impl PreprocessConfig {
    pub fn with_stopwords_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(PreprocessConfig {
            stopwords: parse_stopwords(&text),
            ..PreprocessConfig::default()
        })
    }
}

/// Parse a stopword list: one token per line, `#` starts a comment.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|line| line.split('#').next().unwrap_or("").trim())
        .filter(|line| !line.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Split text into sentence spans (byte ranges). Boundaries are runs of
/// `.`, `!`, `?` and blank-line paragraph breaks. Whitespace around a
/// sentence is excluded from its span; empty segments are dropped.
pub fn split_sentences(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < text.len() {
        let c = text[i..].chars().next().unwrap();
        let len = c.len_utf8();
        let terminal = matches!(c, '.' | '!' | '?');
        let paragraph = c == '\n' && {
            // a newline followed (after horizontal space) by another newline
            let rest = &text[i + len..];
            rest.trim_start_matches([' ', '\t', '\r']).starts_with('\n')
        };
        if terminal || paragraph {
            push_trimmed(text, start..i, &mut spans);
            start = i + len;
        }
        i += len;
    }
    push_trimmed(text, start..text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, span: Range<usize>, out: &mut Vec<Range<usize>>) {
    let raw = &text[span.clone()];
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return;
    }
    let lead = raw.len() - raw.trim_start().len();
    let trail = raw.len() - raw.trim_end().len();
    out.push(span.start + lead..span.end - trail);
}

/// Tokenize with the default config (lowercasing on).
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_with(text, true)
}

/// Tokens are maximal runs of alphanumeric characters plus internal
/// apostrophes; sentence indices come from [`split_sentences`].
pub fn tokenize_with(text: &str, lowercase: bool) -> Vec<Token> {
    let mut tokens = Vec::new();
    for (sentence_index, sentence) in split_sentences(text).into_iter().enumerate() {
        let sent_text = &text[sentence.clone()];
        let mut chars = sent_text.char_indices().peekable();
        let mut run_start: Option<usize> = None;
        let mut prev_alnum = false;
        while let Some((off, c)) = chars.next() {
            let is_word = c.is_alphanumeric()
                || (c == '\'' && prev_alnum && chars.peek().map_or(false, |(_, n)| n.is_alphanumeric()));
            if is_word {
                if run_start.is_none() {
                    run_start = Some(off);
                }
            } else if let Some(s) = run_start.take() {
                push_token(text, sentence.start, s, off, sentence_index, lowercase, &mut tokens);
            }
            prev_alnum = c.is_alphanumeric();
        }
        if let Some(s) = run_start {
            push_token(
                text,
                sentence.start,
                s,
                sent_text.len(),
                sentence_index,
                lowercase,
                &mut tokens,
            );
        }
    }
    tokens
}

fn push_token(
    text: &str,
    base: usize,
    start: usize,
    end: usize,
    sentence_index: usize,
    lowercase: bool,
    out: &mut Vec<Token>,
) {
    let span = base + start..base + end;
    let raw = &text[span.clone()];
    // strip apostrophes that ended up at the run edge
    let trimmed = raw.trim_matches('\'');
    if trimmed.is_empty() {
        return;
    }
    let lead = raw.len() - raw.trim_start_matches('\'').len();
    let trail = raw.len() - raw.trim_end_matches('\'').len();
    let surface = if lowercase {
        trimmed.to_lowercase()
    } else {
        trimmed.to_string()
    };
    out.push(Token {
        surface,
        span: span.start + lead..span.end - trail,
        sentence_index,
    });
}

/// True for tokens made of digits with optional internal decimal points or
/// comma group separators ("37", "3.5", "1,000"); mixed alphanumerics are
/// not numbers.
pub fn is_numeric_token(surface: &str) -> bool {
    if surface.is_empty() {
        return false;
    }
    let chars: Vec<char> = surface.chars().collect();
    if !chars[0].is_ascii_digit() || !chars[chars.len() - 1].is_ascii_digit() {
        return false;
    }
    chars.iter().all(|c| c.is_ascii_digit() || *c == '.' || *c == ',')
}

/// Apply, in order: numeric tokens -> placeholder, stopword removal,
/// short-token removal (placeholder exempt). Number replacement runs first
/// so short numerals survive as the placeholder.
pub fn preprocess(tokens: &[Token], config: &PreprocessConfig) -> Vec<Token> {
    tokens
        .iter()
        .filter_map(|t| {
            let surface = if is_numeric_token(&t.surface) {
                config.number_placeholder.clone()
            } else {
                t.surface.clone()
            };
            if surface != config.number_placeholder {
                if config.stopwords.contains(&surface) {
                    return None;
                }
                if surface.chars().count() < config.min_token_len {
                    return None;
                }
            }
            Some(Token {
                surface,
                span: t.span.clone(),
                sentence_index: t.sentence_index,
            })
        })
        .collect()
}

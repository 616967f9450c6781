//! Bigram feature pipeline: document-frequency-banded vocabulary
//! construction and sparse per-patient count vectors.
//!
//! A "document" is one patient's preprocessed token stream, kept as one
//! segment per note so bigrams never span notes. Document frequency is
//! measured at the patient level and the band bounds are inclusive.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, PatientProfile};
use crate::error::{Error, Result};
use crate::textprep::{preprocess, tokenize, PreprocessConfig};

/// An ordered token pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bigram(pub String, pub String);

impl fmt::Display for Bigram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub min_df: f64,
    pub max_df: f64,
    pub preprocess: PreprocessConfig,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            min_df: 0.2,
            max_df: 0.8,
            preprocess: PreprocessConfig::default(),
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.min_df && self.min_df <= self.max_df && self.max_df <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "document frequency band ({}, {}) must satisfy 0 <= min <= max <= 1",
                self.min_df, self.max_df
            )));
        }
        Ok(())
    }

    /// Stable hash of the full config; guards against train/test skew.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..16])
    }
}

/// One patient's preprocessed token stream, one segment per note.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientDocument {
    pub segments: Vec<Vec<String>>,
}

impl PatientDocument {
    pub fn bigrams(&self) -> impl Iterator<Item = Bigram> + '_ {
        self.segments.iter().flat_map(|seg| {
            seg.windows(2)
                .map(|w| Bigram(w[0].clone(), w[1].clone()))
        })
    }
}

/// Build one patient's document.
pub fn patient_document(profile: &PatientProfile, config: &PreprocessConfig) -> PatientDocument {
    let segments = profile
        .notes
        .iter()
        .map(|note| {
            preprocess(&tokenize(&note.text), config)
                .into_iter()
                .map(|t| t.surface)
                .collect()
        })
        .collect();
    PatientDocument { segments }
}

/// Documents for every profile, aligned with corpus order.
pub fn build_documents(corpus: &Corpus, config: &PreprocessConfig) -> Vec<PatientDocument> {
    corpus
        .profiles
        .iter()
        .map(|p| patient_document(p, config))
        .collect()
}

/// The retained bigram vocabulary: lexicographically ordered bigrams,
/// their document fractions, and the fingerprint of the config that
/// produced them.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    bigrams: Vec<Bigram>,
    df: Vec<f64>,
    config: FeaturizerConfig,
    fingerprint: String,
    index: HashMap<Bigram, usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.bigrams == other.bigrams
            && self.df == other.df
            && self.fingerprint == other.fingerprint
    }
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    bigrams: Vec<Bigram>,
    df: Vec<f64>,
    config: FeaturizerConfig,
    config_fingerprint: String,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.bigrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bigrams.is_empty()
    }

    pub fn bigrams(&self) -> &[Bigram] {
        &self.bigrams
    }

    pub fn bigram(&self, column: usize) -> &Bigram {
        &self.bigrams[column]
    }

    pub fn df(&self, column: usize) -> f64 {
        self.df[column]
    }

    pub fn column(&self, bigram: &Bigram) -> Option<usize> {
        self.index.get(bigram).copied()
    }

    pub fn config(&self) -> &FeaturizerConfig {
        &self.config
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn to_json(&self) -> String {
        let repr = VocabularyRepr {
            bigrams: self.bigrams.clone(),
            df: self.df.clone(),
            config: self.config.clone(),
            config_fingerprint: self.fingerprint.clone(),
        };
        serde_json::to_string_pretty(&repr).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Vocabulary> {
        let repr: VocabularyRepr = serde_json::from_str(text)
            .map_err(|e| Error::ModelFormat(format!("vocabulary: {e}")))?;
        if repr.bigrams.len() != repr.df.len() {
            return Err(Error::ModelFormat(
                "vocabulary: bigram and df lengths differ".into(),
            ));
        }
        let expected = repr.config.fingerprint();
        if expected != repr.config_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected,
                found: repr.config_fingerprint,
            });
        }
        let index = repr
            .bigrams
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, b)| (b, i))
            .collect();
        Ok(Vocabulary {
            bigrams: repr.bigrams,
            df: repr.df,
            fingerprint: repr.config_fingerprint,
            config: repr.config,
            index,
        })
    }
}

/// Build the vocabulary over a whole corpus.
pub fn build_vocabulary(corpus: &Corpus, config: &FeaturizerConfig) -> Result<Vocabulary> {
    let documents = build_documents(corpus, &config.preprocess);
    build_vocabulary_from_documents(&documents, config)
}

/// Build the vocabulary from prebuilt documents (the cross-validation
/// path, where only training-fold documents participate).
pub fn build_vocabulary_from_documents<D: std::borrow::Borrow<PatientDocument>>(
    documents: &[D],
    config: &FeaturizerConfig,
) -> Result<Vocabulary> {
    config.validate()?;
    if documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n = documents.len() as f64;
    let mut doc_counts: BTreeMap<Bigram, usize> = BTreeMap::new();
    for doc in documents {
        let doc = doc.borrow();
        let uniq: BTreeSet<Bigram> = doc.bigrams().collect();
        for b in uniq {
            *doc_counts.entry(b).or_insert(0) += 1;
        }
    }
    let mut bigrams = Vec::new();
    let mut df = Vec::new();
    for (bigram, count) in doc_counts {
        let fraction = count as f64 / n;
        if fraction >= config.min_df && fraction <= config.max_df {
            bigrams.push(bigram);
            df.push(fraction);
        }
    }
    let index = bigrams
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, b)| (b, i))
        .collect();
    Ok(Vocabulary {
        bigrams,
        df,
        fingerprint: config.fingerprint(),
        config: config.clone(),
        index,
    })
}

/// Sparse count vector over a vocabulary's columns. Stored entries are
/// strictly positive and sorted by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub fingerprint: String,
    pub counts: Vec<(usize, u32)>,
}

impl FeatureVector {
    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|(_, c)| *c as u64).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Rows aligned with corpus profile order.
pub type FeatureMatrix = Vec<FeatureVector>;

/// Featurize one profile, verifying the caller's config matches the one
/// the vocabulary was built with.
pub fn featurize(
    profile: &PatientProfile,
    vocabulary: &Vocabulary,
    config: &FeaturizerConfig,
) -> Result<FeatureVector> {
    let found = config.fingerprint();
    if found != vocabulary.fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: vocabulary.fingerprint.clone(),
            found,
        });
    }
    Ok(featurize_document(
        &patient_document(profile, &config.preprocess),
        vocabulary,
    ))
}

/// Featurize a prebuilt document. Out-of-vocabulary bigrams are ignored;
/// empty or single-token documents produce the zero vector.
pub fn featurize_document(document: &PatientDocument, vocabulary: &Vocabulary) -> FeatureVector {
    let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
    for bigram in document.bigrams() {
        if let Some(col) = vocabulary.column(&bigram) {
            *counts.entry(col).or_insert(0) += 1;
        }
    }
    FeatureVector {
        fingerprint: vocabulary.fingerprint.clone(),
        counts: counts.into_iter().collect(),
    }
}

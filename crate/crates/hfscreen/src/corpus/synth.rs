//! Labeled synthetic corpus generation.
//!
//! Every synthesized profile's note text entails its gold label under the
//! extraction + rule pipeline: required keyword sentences establish the
//! class, filler carries no keywords or triggers, and (at a non-zero
//! negation rate) extra sentences wrap label-flipping keywords in negation
//! triggers that the default trigger lexicon catches at the default window.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClinicalNote, ColorLabel, Corpus, FineLabel, PatientProfile, Provenance};
use crate::error::{Error, Result};
use crate::extraction::DataElement;

/// Default sentence templates; see the file for format notes.
pub const DEFAULT_TEMPLATES: &str = include_str!("../../data/synth_templates.txt");

/// Parameters of one synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisSpec {
    pub n_patients: usize,
    /// Fraction of patients per fine color; must sum to 1.
    pub class_proportions: BTreeMap<FineLabel, f64>,
    /// Inclusive range of notes per patient.
    pub notes_per_patient: (usize, usize),
    /// Probability that an optional sentence slot carries a negated
    /// keyword mention instead of filler. Zero keeps the corpus free of
    /// negation triggers entirely.
    pub negation_rate: f64,
    /// Size of the random filler vocabulary sprinkled into notes.
    pub noise_vocab_size: usize,
    pub seed: u64,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        let mut class_proportions = BTreeMap::new();
        class_proportions.insert(FineLabel::Grey, 0.700);
        class_proportions.insert(FineLabel::Red, 0.080);
        class_proportions.insert(FineLabel::Purple, 0.043);
        class_proportions.insert(FineLabel::Orange, 0.116);
        class_proportions.insert(FineLabel::Green, 0.061);
        SynthesisSpec {
            n_patients: 1000,
            class_proportions,
            notes_per_patient: (2, 5),
            negation_rate: 0.0,
            noise_vocab_size: 200,
            seed: 7,
        }
    }
}

impl SynthesisSpec {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.class_proportions.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "class proportions sum to {sum}, expected 1"
            )));
        }
        if self.class_proportions.values().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig(
                "class proportions must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.negation_rate) {
            return Err(Error::InvalidConfig("negation_rate must lie in [0, 1]".into()));
        }
        let (lo, hi) = self.notes_per_patient;
        if lo < 1 || lo > hi {
            return Err(Error::InvalidConfig(format!(
                "notes_per_patient range ({lo}, {hi}) must satisfy 1 <= lo <= hi"
            )));
        }
        Ok(())
    }
}

/// Sentence templates backing the generator.
#[derive(Debug, Clone)]
pub struct SynthTemplates {
    pub filler: Vec<String>,
    positive: BTreeMap<DataElement, String>,
    negated: BTreeMap<DataElement, String>,
    keywords: BTreeMap<DataElement, Vec<String>>,
}

impl Default for SynthTemplates {
    fn default() -> Self {
        SynthTemplates::parse(DEFAULT_TEMPLATES).expect("builtin synth templates")
    }
}

impl SynthTemplates {
    pub fn parse(text: &str) -> Result<Self> {
        let mut filler = Vec::new();
        let mut positive = BTreeMap::new();
        let mut negated = BTreeMap::new();
        let mut keywords: BTreeMap<DataElement, Vec<String>> = BTreeMap::new();
        let mut section = String::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.to_string();
                continue;
            }
            let entry = line.to_string();
            let element = |stem: &str| match stem {
                "hf" => DataElement::HeartFailure,
                "cardiology" => DataElement::CardiologyConsulted,
                "galter" => DataElement::AtGalter10,
                "transplant" => DataElement::HeartTransplant,
                "euvolemic" => DataElement::NonActiveIssue,
                other => panic!("unknown template stem {other}"),
            };
            match section.as_str() {
                "filler" => filler.push(entry),
                s if s.ends_with("_positive") => {
                    positive.insert(element(s.trim_end_matches("_positive")), entry);
                }
                s if s.ends_with("_negated") => {
                    negated.insert(element(s.trim_end_matches("_negated")), entry);
                }
                s if s.ends_with("_keywords") => {
                    keywords
                        .entry(element(s.trim_end_matches("_keywords")))
                        .or_default()
                        .push(entry);
                }
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown template section [{other}]"
                    )))
                }
            }
        }
        for el in DataElement::ALL {
            let pos = positive
                .get(&el)
                .ok_or_else(|| Error::InvalidConfig(format!("missing positive template for {el}")))?;
            let neg = negated
                .get(&el)
                .ok_or_else(|| Error::InvalidConfig(format!("missing negated template for {el}")))?;
            for tpl in [pos, neg] {
                if tpl.contains("{kw}") && keywords.get(&el).map_or(true, |k| k.is_empty()) {
                    return Err(Error::InvalidConfig(format!(
                        "template for {el} uses {{kw}} but no keyword pool is defined"
                    )));
                }
            }
        }
        if filler.len() < 10 {
            return Err(Error::InvalidConfig("need at least 10 filler sentences".into()));
        }
        Ok(SynthTemplates {
            filler,
            positive,
            negated,
            keywords,
        })
    }

    fn render(&self, element: DataElement, negated: bool, rng: &mut ChaCha8Rng) -> String {
        let tpl = if negated {
            &self.negated[&element]
        } else {
            &self.positive[&element]
        };
        if tpl.contains("{kw}") {
            let pool = &self.keywords[&element];
            let kw = &pool[rng.gen_range(0..pool.len())];
            tpl.replace("{kw}", kw)
        } else {
            tpl.clone()
        }
    }
}

/// Required positive mentions per fine class, in emission order. The
/// probabilistic entries keep marker bigrams inside the default document-
/// frequency band.
fn required_elements(fine: FineLabel, rng: &mut ChaCha8Rng) -> Vec<DataElement> {
    match fine {
        FineLabel::Green => vec![DataElement::HeartFailure],
        FineLabel::Orange => {
            let mut v = vec![DataElement::HeartFailure, DataElement::CardiologyConsulted];
            if rng.gen_bool(0.5) {
                v.push(DataElement::AtGalter10);
            }
            v
        }
        FineLabel::Red => vec![
            DataElement::HeartFailure,
            DataElement::CardiologyConsulted,
            DataElement::NonActiveIssue,
        ],
        FineLabel::Purple => vec![
            DataElement::HeartTransplant,
            DataElement::CardiologyConsulted,
        ],
        FineLabel::Grey => {
            if rng.gen_bool(0.3) {
                vec![DataElement::NonActiveIssue]
            } else {
                Vec::new()
            }
        }
    }
}

/// Elements whose *negated* mention would flip the class if negation were
/// ignored; for classes that cannot flip, a plausible negated mention.
fn hazard_pool(fine: FineLabel) -> &'static [DataElement] {
    match fine {
        FineLabel::Grey => &[DataElement::HeartFailure],
        FineLabel::Green => &[
            DataElement::CardiologyConsulted,
            DataElement::AtGalter10,
            DataElement::HeartTransplant,
            DataElement::NonActiveIssue,
        ],
        FineLabel::Orange => &[DataElement::HeartTransplant, DataElement::NonActiveIssue],
        FineLabel::Red => &[DataElement::HeartTransplant],
        FineLabel::Purple => &[DataElement::HeartFailure],
    }
}

fn noise_word(i: usize) -> String {
    const SYLLABLES: [&str; 10] = [
        "zor", "vil", "kad", "mep", "tun", "raf", "sib", "lox", "que", "dri",
    ];
    let mut word = String::new();
    let mut rest = i;
    let mut parts = 0;
    loop {
        word.push_str(SYLLABLES[rest % 10]);
        rest /= 10;
        parts += 1;
        if rest == 0 && parts >= 2 {
            break;
        }
    }
    word
}

/// Largest-remainder allocation of `n` patients over the class proportions.
fn allocate_counts(spec: &SynthesisSpec) -> Vec<(FineLabel, usize)> {
    let mut counts: Vec<(FineLabel, usize, f64)> = FineLabel::ALL
        .iter()
        .filter_map(|fine| {
            spec.class_proportions.get(fine).map(|p| {
                let quota = p * spec.n_patients as f64;
                (*fine, quota.floor() as usize, quota - quota.floor())
            })
        })
        .collect();
    let assigned: usize = counts.iter().map(|(_, c, _)| *c).sum();
    let mut leftover = spec.n_patients - assigned;
    // hand the leftover seats to the largest fractional remainders
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        counts[b]
            .2
            .partial_cmp(&counts[a].2)
            .unwrap()
            .then(a.cmp(&b))
    });
    for idx in order {
        if leftover == 0 {
            break;
        }
        counts[idx].1 += 1;
        leftover -= 1;
    }
    counts.into_iter().map(|(f, c, _)| (f, c)).collect()
}

/// Generate a labeled corpus. Identical specs produce byte-identical
/// corpora.
pub fn generate_synthetic_corpus(spec: &SynthesisSpec) -> Result<Corpus> {
    spec.validate()?;
    let templates = SynthTemplates::default();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut labels: Vec<FineLabel> = Vec::with_capacity(spec.n_patients);
    for (fine, count) in allocate_counts(spec) {
        labels.extend(std::iter::repeat(fine).take(count));
    }
    // Fisher-Yates so class order is not positional
    for i in (1..labels.len()).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }

    let (lo, hi) = spec.notes_per_patient;
    let note_types = ["progress", "nursing", "discharge"];
    let mut profiles = Vec::with_capacity(spec.n_patients);
    for (idx, fine) in labels.iter().enumerate() {
        let patient_id = format!("P{:05}", idx + 1);
        let n_notes = rng.gen_range(lo..=hi);

        let mut planned: Vec<String> = Vec::new();
        for element in required_elements(*fine, &mut rng) {
            planned.push(templates.render(element, false, &mut rng));
        }
        let extras = rng.gen_range(1..=3);
        for _ in 0..extras {
            if spec.negation_rate > 0.0 && rng.gen::<f64>() < spec.negation_rate {
                let pool = hazard_pool(*fine);
                let element = pool[rng.gen_range(0..pool.len())];
                planned.push(templates.render(element, true, &mut rng));
            } else {
                planned.push(templates.filler[rng.gen_range(0..templates.filler.len())].clone());
            }
        }

        let mut note_sentences: Vec<Vec<String>> = (0..n_notes)
            .map(|_| {
                let k = rng.gen_range(2..=4);
                (0..k)
                    .map(|_| {
                        let mut s =
                            templates.filler[rng.gen_range(0..templates.filler.len())].clone();
                        if spec.noise_vocab_size > 0 && rng.gen_bool(0.3) {
                            let extra = rng.gen_range(1..=2);
                            for _ in 0..extra {
                                s.push(' ');
                                s.push_str(&noise_word(
                                    rng.gen_range(0..spec.noise_vocab_size),
                                ));
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        for sentence in planned {
            let note = rng.gen_range(0..n_notes);
            let pos = rng.gen_range(0..=note_sentences[note].len());
            note_sentences[note].insert(pos, sentence);
        }

        let notes = note_sentences
            .into_iter()
            .enumerate()
            .map(|(j, sentences)| ClinicalNote {
                note_id: format!("{patient_id}-n{j:02}"),
                patient_id: patient_id.clone(),
                note_type: Some(note_types[j % note_types.len()].to_string()),
                timestamp: Some(format!(
                    "2015-08-{:02}T{:02}:00:00Z",
                    1 + j / 12,
                    6 + j % 12
                )),
                text: format!("{}.", sentences.join(". ")),
            })
            .collect();

        profiles.push(PatientProfile {
            patient_id,
            notes,
            gold_label: Some(ColorLabel::from_fine(*fine)),
        });
    }

    Ok(Corpus {
        profiles,
        provenance: Provenance::Synthetic { seed: spec.seed },
    })
}

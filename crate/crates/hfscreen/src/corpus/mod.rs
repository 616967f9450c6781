//! Corpus handling: raw note ingestion, per-patient aggregation, gold
//! label sidecars, and labeled synthetic corpus generation.

mod synth;

pub use synth::{generate_synthetic_corpus, SynthTemplates, SynthesisSpec};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three-way class every classifier predicts.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum CoarseLabel {
    Green,
    Orange,
    Other,
}

impl CoarseLabel {
    /// In rarest-first order; prediction ties break toward the earlier entry.
    pub const ALL: [CoarseLabel; 3] = [CoarseLabel::Green, CoarseLabel::Orange, CoarseLabel::Other];
}

impl fmt::Display for CoarseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoarseLabel::Green => "green",
            CoarseLabel::Orange => "orange",
            CoarseLabel::Other => "other",
        })
    }
}

/// The five-color annotation schema; grey, red and purple collapse into
/// [`CoarseLabel::Other`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum FineLabel {
    Green,
    Orange,
    Grey,
    Red,
    Purple,
}

impl FineLabel {
    pub const ALL: [FineLabel; 5] = [
        FineLabel::Green,
        FineLabel::Orange,
        FineLabel::Grey,
        FineLabel::Red,
        FineLabel::Purple,
    ];

    pub fn coarse(self) -> CoarseLabel {
        match self {
            FineLabel::Green => CoarseLabel::Green,
            FineLabel::Orange => CoarseLabel::Orange,
            FineLabel::Grey | FineLabel::Red | FineLabel::Purple => CoarseLabel::Other,
        }
    }
}

impl fmt::Display for FineLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FineLabel::Green => "green",
            FineLabel::Orange => "orange",
            FineLabel::Grey => "grey",
            FineLabel::Red => "red",
            FineLabel::Purple => "purple",
        })
    }
}

/// A coarse label with optional fine-color provenance. The fine color,
/// when present, always agrees with the coarse class; construct through
/// [`ColorLabel::from_fine`] or [`ColorLabel::coarse_only`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ColorLabelRepr", into = "ColorLabelRepr")]
pub struct ColorLabel {
    coarse: CoarseLabel,
    fine: Option<FineLabel>,
}

#[derive(Serialize, Deserialize)]
struct ColorLabelRepr {
    coarse: CoarseLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fine: Option<FineLabel>,
}

impl From<ColorLabel> for ColorLabelRepr {
    fn from(l: ColorLabel) -> Self {
        ColorLabelRepr {
            coarse: l.coarse,
            fine: l.fine,
        }
    }
}

impl TryFrom<ColorLabelRepr> for ColorLabel {
    type Error = String;

    fn try_from(r: ColorLabelRepr) -> std::result::Result<Self, String> {
        if let Some(fine) = r.fine {
            if fine.coarse() != r.coarse {
                return Err(format!(
                    "fine color {fine} does not belong to coarse class {}",
                    r.coarse
                ));
            }
        }
        Ok(ColorLabel {
            coarse: r.coarse,
            fine: r.fine,
        })
    }
}

impl ColorLabel {
    pub fn from_fine(fine: FineLabel) -> Self {
        ColorLabel {
            coarse: fine.coarse(),
            fine: Some(fine),
        }
    }

    pub fn coarse_only(coarse: CoarseLabel) -> Self {
        ColorLabel { coarse, fine: None }
    }

    pub fn coarse(&self) -> CoarseLabel {
        self.coarse
    }

    pub fn fine(&self) -> Option<FineLabel> {
        self.fine
    }
}

/// One clinical note. `text` may be empty but is never absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub note_id: String,
    pub patient_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub text: String,
}

/// All of one patient's notes plus the optional gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub patient_id: String,
    pub notes: Vec<ClinicalNote>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<ColorLabel>,
}

/// Where a corpus came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum Provenance {
    Ingested { path: String },
    Synthetic { seed: u64 },
    InMemory,
}

/// An ordered collection of patient profiles with unique patient ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub profiles: Vec<PatientProfile>,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn new(profiles: Vec<PatientProfile>, provenance: Provenance) -> Self {
        Corpus {
            profiles,
            provenance,
        }
    }

    pub fn n_patients(&self) -> usize {
        self.profiles.len()
    }

    pub fn total_notes(&self) -> usize {
        self.profiles.iter().map(|p| p.notes.len()).sum()
    }

    /// Gold coarse labels aligned with profile order; errors on the first
    /// unlabeled patient.
    pub fn gold_coarse_labels(&self) -> Result<Vec<CoarseLabel>> {
        self.profiles
            .iter()
            .map(|p| {
                p.gold_label
                    .map(|l| l.coarse())
                    .ok_or_else(|| Error::MissingGoldLabel {
                        patient_id: p.patient_id.clone(),
                    })
            })
            .collect()
    }

    pub fn fine_histogram(&self) -> BTreeMap<FineLabel, usize> {
        let mut hist = BTreeMap::new();
        for p in &self.profiles {
            if let Some(fine) = p.gold_label.and_then(|l| l.fine()) {
                *hist.entry(fine).or_insert(0) += 1;
            }
        }
        hist
    }

    /// One note record per line, in profile order.
    pub fn to_notes_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.profiles {
            for n in &p.notes {
                out.push_str(&serde_json::to_string(n).expect("note serializes"));
                out.push('\n');
            }
        }
        out
    }

    /// One aggregated profile per line.
    pub fn to_profiles_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.profiles {
            out.push_str(&serde_json::to_string(p).expect("profile serializes"));
            out.push('\n');
        }
        out
    }

    /// Gold-label sidecar: `{"patient_id": ..., "fine": ...}` per labeled
    /// patient.
    pub fn to_labels_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.profiles {
            if let Some(fine) = p.gold_label.and_then(|l| l.fine()) {
                let rec = serde_json::json!({"patient_id": p.patient_id, "fine": fine});
                out.push_str(&rec.to_string());
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Deserialize)]
struct LabelRecord {
    patient_id: String,
    fine: FineLabel,
}

/// Read a gold-label sidecar file (JSONL of `{"patient_id", "fine"}`).
pub fn load_gold_labels(path: &Path) -> Result<BTreeMap<String, ColorLabel>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let location = path.display().to_string();
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord =
            serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                location: location.clone(),
                line: lineno + 1,
                reason: e.to_string(),
            })?;
        out.insert(rec.patient_id, ColorLabel::from_fine(rec.fine));
    }
    Ok(out)
}

/// Attach gold labels to matching profiles. A label for an unknown
/// patient is a data error.
pub fn apply_gold_labels(corpus: &mut Corpus, labels: &BTreeMap<String, ColorLabel>) -> Result<()> {
    let known: HashSet<&str> = corpus.profiles.iter().map(|p| p.patient_id.as_str()).collect();
    for pid in labels.keys() {
        if !known.contains(pid.as_str()) {
            return Err(Error::MalformedRecord {
                location: "gold labels".into(),
                line: 0,
                reason: format!("label for unknown patient_id {pid:?}"),
            });
        }
    }
    for p in &mut corpus.profiles {
        if let Some(l) = labels.get(&p.patient_id) {
            p.gold_label = Some(*l);
        }
    }
    Ok(())
}

/// Ingest raw notes from a JSONL file or a directory of `*.jsonl` files.
/// Each line is either a note record or a pre-aggregated profile record
/// (detected by a `"notes"` key). Notes are grouped per patient in first-
/// appearance order; within a profile, timestamped notes sort first by
/// timestamp and untimestamped notes keep ingestion order after them.
pub fn ingest_notes(path: &Path) -> Result<Corpus> {
    let mut files = Vec::new();
    if path.is_dir() {
        let entries = std::fs::read_dir(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        for entry in entries {
            let entry = entry.map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let p = entry.path();
            if p.extension().map_or(false, |e| e == "jsonl") {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_patient: HashMap<String, Vec<(usize, ClinicalNote)>> = HashMap::new();
    let mut gold: HashMap<String, ColorLabel> = HashMap::new();
    let mut seen_note_ids: HashSet<String> = HashSet::new();
    let mut arrival = 0usize;

    for file in &files {
        let text = std::fs::read_to_string(file).map_err(|source| Error::Io {
            path: file.clone(),
            source,
        })?;
        let location = file.display().to_string();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |reason: String| Error::MalformedRecord {
                location: location.clone(),
                line: lineno + 1,
                reason,
            };
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            let mut notes: Vec<ClinicalNote> = Vec::new();
            let mut profile_gold: Option<(String, ColorLabel)> = None;
            if value.get("notes").is_some() {
                let profile: PatientProfile =
                    serde_json::from_value(value).map_err(|e| err(e.to_string()))?;
                if profile.patient_id.is_empty() {
                    return Err(err("record missing patient_id".into()));
                }
                for mut n in profile.notes {
                    if n.patient_id.is_empty() {
                        n.patient_id = profile.patient_id.clone();
                    } else if n.patient_id != profile.patient_id {
                        return Err(err(format!(
                            "note {} carries patient_id {:?} inside profile {:?}",
                            n.note_id, n.patient_id, profile.patient_id
                        )));
                    }
                    notes.push(n);
                }
                if let Some(l) = profile.gold_label {
                    profile_gold = Some((profile.patient_id.clone(), l));
                }
                if notes.is_empty() {
                    // a profile may legitimately carry zero notes; register it
                    if !by_patient.contains_key(&profile.patient_id) {
                        order.push(profile.patient_id.clone());
                        by_patient.insert(profile.patient_id.clone(), Vec::new());
                    }
                }
            } else {
                let note: ClinicalNote =
                    serde_json::from_value(value).map_err(|e| err(e.to_string()))?;
                notes.push(note);
            }
            for note in notes {
                if note.patient_id.is_empty() {
                    return Err(err("record missing patient_id".into()));
                }
                if note.note_id.is_empty() {
                    return Err(err("record missing note_id".into()));
                }
                if let Some(ts) = &note.timestamp {
                    if parse_timestamp(ts).is_none() {
                        return Err(err(format!("unparseable timestamp {ts:?}")));
                    }
                }
                if !seen_note_ids.insert(note.note_id.clone()) {
                    return Err(Error::DuplicateNoteId {
                        note_id: note.note_id.clone(),
                    });
                }
                if !by_patient.contains_key(&note.patient_id) {
                    order.push(note.patient_id.clone());
                    by_patient.insert(note.patient_id.clone(), Vec::new());
                }
                by_patient
                    .get_mut(&note.patient_id)
                    .unwrap()
                    .push((arrival, note));
                arrival += 1;
            }
            if let Some((pid, label)) = profile_gold {
                gold.insert(pid, label);
            }
        }
    }

    let mut profiles = Vec::with_capacity(order.len());
    for pid in order {
        let mut entries = by_patient.remove(&pid).unwrap_or_default();
        entries.sort_by_key(|(arrival, note)| {
            let ts = note.timestamp.as_deref().and_then(parse_timestamp);
            (ts.is_none(), ts, *arrival)
        });
        profiles.push(PatientProfile {
            gold_label: gold.get(&pid).copied(),
            patient_id: pid,
            notes: entries.into_iter().map(|(_, n)| n).collect(),
        });
    }

    Ok(Corpus {
        profiles,
        provenance: Provenance::Ingested {
            path: path.display().to_string(),
        },
    })
}

/// Parse an ISO-8601-ish timestamp into a sortable key (microseconds).
/// Accepts RFC 3339, `YYYY-MM-DDTHH:MM:SS[.f]`, `YYYY-MM-DD HH:MM:SS` and
/// bare dates.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_micros());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp_micros());
        }
    }
    if let Ok(d) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp_micros());
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_jsonl(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".jsonl").tempfile().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f.flush().unwrap();
        f
    }

    #[test]
    fn aggregates_by_patient() {
        let f = write_jsonl(&[
            r#"{"note_id":"a","patient_id":"P1","text":"one"}"#,
            r#"{"note_id":"b","patient_id":"P1","text":"two"}"#,
            r#"{"note_id":"c","patient_id":"P2","text":"three"}"#,
            r#"{"note_id":"d","patient_id":"P1","text":"four"}"#,
        ]);
        let corpus = ingest_notes(f.path()).unwrap();
        assert_eq!(corpus.n_patients(), 2);
        assert_eq!(corpus.profiles[0].patient_id, "P1");
        assert_eq!(corpus.profiles[0].notes.len(), 3);
        assert_eq!(corpus.profiles[1].notes.len(), 1);
        assert_eq!(corpus.total_notes(), 4);
    }

    #[test]
    fn empty_file_gives_empty_corpus() {
        let f = write_jsonl(&[]);
        let corpus = ingest_notes(f.path()).unwrap();
        assert_eq!(corpus.n_patients(), 0);
    }

    #[test]
    fn missing_patient_id_is_an_error() {
        let f = write_jsonl(&[
            r#"{"note_id":"a","patient_id":"P1","text":"one"}"#,
            r#"{"note_id":"b","text":"two"}"#,
        ]);
        let err = ingest_notes(f.path()).unwrap_err();
        match err {
            Error::MalformedRecord { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_note_id_is_an_error() {
        let f = write_jsonl(&[
            r#"{"note_id":"a","patient_id":"P1","text":"one"}"#,
            r#"{"note_id":"a","patient_id":"P2","text":"two"}"#,
        ]);
        assert!(matches!(
            ingest_notes(f.path()).unwrap_err(),
            Error::DuplicateNoteId { .. }
        ));
    }

    #[test]
    fn malformed_json_names_the_line() {
        let f = write_jsonl(&[
            r#"{"note_id":"a","patient_id":"P1","text":"one"}"#,
            "not json",
        ]);
        match ingest_notes(f.path()).unwrap_err() {
            Error::MalformedRecord { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn timestamped_notes_sort_first_untimestamped_keep_arrival_order() {
        let f = write_jsonl(&[
            r#"{"note_id":"a","patient_id":"P1","text":"late","timestamp":"2015-09-02T10:00:00Z"}"#,
            r#"{"note_id":"b","patient_id":"P1","text":"untimed one"}"#,
            r#"{"note_id":"c","patient_id":"P1","text":"early","timestamp":"2015-08-01T08:00:00Z"}"#,
            r#"{"note_id":"d","patient_id":"P1","text":"untimed two"}"#,
        ]);
        let corpus = ingest_notes(f.path()).unwrap();
        let ids: Vec<&str> = corpus.profiles[0]
            .notes
            .iter()
            .map(|n| n.note_id.as_str())
            .collect();
        assert_eq!(ids, vec!["c", "a", "b", "d"]);
    }

    #[test]
    fn profile_per_line_format_accepted() {
        let f = write_jsonl(&[
            r#"{"patient_id":"P9","notes":[{"note_id":"x","patient_id":"","text":"hello"}],"gold_label":{"coarse":"green","fine":"green"}}"#,
        ]);
        let corpus = ingest_notes(f.path()).unwrap();
        assert_eq!(corpus.n_patients(), 1);
        assert_eq!(corpus.profiles[0].notes[0].patient_id, "P9");
        assert_eq!(
            corpus.profiles[0].gold_label.unwrap().coarse(),
            CoarseLabel::Green
        );
    }

    #[test]
    fn bad_timestamp_is_an_error() {
        let f = write_jsonl(&[
            r#"{"note_id":"a","patient_id":"P1","text":"x","timestamp":"next tuesday"}"#,
        ]);
        assert!(matches!(
            ingest_notes(f.path()).unwrap_err(),
            Error::MalformedRecord { .. }
        ));
    }

    #[test]
    fn color_label_invariants_enforced() {
        let ok: ColorLabel = serde_json::from_str(r#"{"coarse":"other","fine":"red"}"#).unwrap();
        assert_eq!(ok.fine(), Some(FineLabel::Red));
        let bad: std::result::Result<ColorLabel, _> =
            serde_json::from_str(r#"{"coarse":"green","fine":"red"}"#);
        assert!(bad.is_err());
        for fine in FineLabel::ALL {
            assert_eq!(ColorLabel::from_fine(fine).coarse(), fine.coarse());
        }
    }

    #[test]
    fn ingestion_is_lossless() {
        let f = write_jsonl(&[
            r#"{"note_id":"a","patient_id":"P1","text":""}"#,
            r#"{"note_id":"b","patient_id":"P2","text":"two"}"#,
            r#"{"note_id":"c","patient_id":"P3","text":"three"}"#,
        ]);
        let corpus = ingest_notes(f.path()).unwrap();
        assert_eq!(corpus.total_notes(), 3);
        // empty text retained
        assert_eq!(corpus.profiles[0].notes[0].text, "");
    }

    #[test]
    fn notes_jsonl_round_trips() {
        let f = write_jsonl(&[
            r#"{"note_id":"a","patient_id":"P1","text":"one"}"#,
            r#"{"note_id":"b","patient_id":"P2","text":"two"}"#,
        ]);
        let corpus = ingest_notes(f.path()).unwrap();
        let text = corpus.to_notes_jsonl();
        let f2 = write_jsonl(&text.lines().collect::<Vec<_>>());
        let corpus2 = ingest_notes(f2.path()).unwrap();
        assert_eq!(corpus.profiles, corpus2.profiles);
    }
}

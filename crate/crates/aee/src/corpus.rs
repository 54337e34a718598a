//! Corpus ingestion, split management, and diversity statistics.
//!
//! A corpus is a JSONL file with one annotated document per line. Records
//! are validated against the active codebook at load time; in lenient mode
//! invalid lines are collected into a rejection report, in strict mode the
//! first invalid line aborts the load.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::codebook::{validate_instance, Codebook, EventInstance};

/// Language codes of the twenty languages the reference corpus covers.
/// Other codes are accepted with a warning so foreign corpora still load.
pub const KNOWN_LANGUAGES: [&str; 20] = [
    "en", "es", "ar", "fr", "it", "ru", "de", "tr", "my", "id", "uk", "ko", "pt", "nl", "so",
    "ne", "zh", "fa", "he", "ja",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

/// One input document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    /// ISO 639-1 language code.
    pub language: String,
    /// Country hint for the event, used by linking prompts.
    pub country: String,
    pub text: String,
    pub split: Split,
}

/// A document paired with its gold event annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldRecord {
    pub document: Document,
    pub gold: EventInstance,
}

/// A line that failed ingestion, with enough context to fix the data.
#[derive(Debug, Clone)]
pub struct RejectedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("corpus is empty")]
    Empty,
    #[error("all event-type counts are zero")]
    AllZeroCounts,
}

/// Outcome of a lenient corpus load.
#[derive(Debug)]
pub struct LoadedCorpus {
    pub records: Vec<GoldRecord>,
    pub rejected: Vec<RejectedLine>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct CorpusLine {
    doc_id: String,
    language: String,
    #[serde(default)]
    country: String,
    text: String,
    split: Split,
    gold: Value,
}

/// Load and validate a corpus. With `strict`, the first bad line aborts;
/// otherwise bad lines are reported in [`LoadedCorpus::rejected`].
pub fn load_corpus(
    path: impl AsRef<Path>,
    cb: &Codebook,
    strict: bool,
) -> Result<LoadedCorpus, CorpusError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut records: Vec<GoldRecord> = Vec::new();
    let mut rejected = Vec::new();
    let mut warnings = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, cb, &records) {
            Ok(record) => {
                if !KNOWN_LANGUAGES.contains(&record.document.language.as_str()) {
                    warnings.push(format!(
                        "line {line_no}: language code {:?} is not one of the known corpus codes",
                        record.document.language
                    ));
                }
                records.push(record);
            }
            Err(reason) => {
                if strict {
                    return Err(CorpusError::BadLine { line: line_no, reason });
                }
                rejected.push(RejectedLine { line: line_no, reason });
            }
        }
    }
    Ok(LoadedCorpus { records, rejected, warnings })
}

fn parse_line(line: &str, cb: &Codebook, seen: &[GoldRecord]) -> Result<GoldRecord, String> {
    let parsed: CorpusLine = serde_json::from_str(line).map_err(|e| format!("malformed: {e}"))?;
    if parsed.text.trim().is_empty() {
        return Err("document text is empty".into());
    }
    if seen.iter().any(|r| r.document.doc_id == parsed.doc_id) {
        return Err(format!("duplicate doc_id {:?}", parsed.doc_id));
    }
    let gold = EventInstance::from_json(&parsed.gold, cb)?;
    let violations = validate_instance(cb, &gold);
    if !violations.is_empty() {
        let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(format!("gold event invalid: {}", msgs.join("; ")));
    }
    Ok(GoldRecord {
        document: Document {
            doc_id: parsed.doc_id,
            language: parsed.language,
            country: parsed.country,
            text: parsed.text,
            split: parsed.split,
        },
        gold,
    })
}

pub fn write_corpus_line(record: &GoldRecord) -> String {
    serde_json::json!({
        "doc_id": record.document.doc_id,
        "language": record.document.language,
        "country": record.document.country,
        "text": record.document.text,
        "split": record.document.split,
        "gold": record.gold.to_json(),
    })
    .to_string()
}

/// Effective number of categories: the exponential of the Shannon entropy
/// (natural logarithm) of the normalized counts. Zero counts are skipped.
pub fn hill_number(counts: &[u64]) -> Result<f64, CorpusError> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(CorpusError::AllZeroCounts);
    }
    let total = total as f64;
    let entropy: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    Ok(entropy.exp())
}

/// Counts and diversity for one slice of the corpus.
#[derive(Debug, Clone, Serialize)]
pub struct SliceStats {
    pub documents: usize,
    pub by_event_type: BTreeMap<String, u64>,
    pub hill_number: f64,
}

/// Corpus-wide statistics: per-language and per-split counts plus Hill
/// numbers, with an overall roll-up.
#[derive(Debug, Clone, Serialize)]
pub struct CorpusStats {
    pub overall: SliceStats,
    pub by_language: BTreeMap<String, SliceStats>,
    pub by_split: BTreeMap<String, SliceStats>,
}

fn slice_stats<'a>(records: impl Iterator<Item = &'a GoldRecord>) -> SliceStats {
    let mut by_event_type: BTreeMap<String, u64> = BTreeMap::new();
    let mut documents = 0;
    for record in records {
        documents += 1;
        *by_event_type.entry(record.gold.event_type.clone()).or_insert(0) += 1;
    }
    let counts: Vec<u64> = by_event_type.values().copied().collect();
    let hill = hill_number(&counts).unwrap_or(f64::NAN);
    SliceStats { documents, by_event_type, hill_number: hill }
}

pub fn corpus_stats(records: &[GoldRecord]) -> Result<CorpusStats, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut by_language: BTreeMap<String, SliceStats> = BTreeMap::new();
    let mut languages: Vec<&str> =
        records.iter().map(|r| r.document.language.as_str()).collect();
    languages.sort_unstable();
    languages.dedup();
    for lang in languages {
        let stats = slice_stats(records.iter().filter(|r| r.document.language == lang));
        by_language.insert(lang.to_string(), stats);
    }
    let mut by_split = BTreeMap::new();
    for split in [Split::Train, Split::Dev, Split::Test] {
        let slice: Vec<&GoldRecord> =
            records.iter().filter(|r| r.document.split == split).collect();
        if !slice.is_empty() {
            by_split.insert(split.to_string(), slice_stats(slice.into_iter()));
        }
    }
    Ok(CorpusStats { overall: slice_stats(records.iter()), by_language, by_split })
}

/// The majority-class baseline prediction for one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MajorityClass {
    pub type_name: String,
    /// Set when the language was absent from the train split and the
    /// overall train majority was used instead.
    pub fallback: bool,
}

/// Most frequent gold type among a language's train records. Ties break by
/// codebook order. A language absent from train falls back to the overall
/// train majority, flagged.
pub fn majority_class(
    records: &[GoldRecord],
    cb: &Codebook,
    language: &str,
) -> Result<MajorityClass, CorpusError> {
    let train: Vec<&GoldRecord> =
        records.iter().filter(|r| r.document.split == Split::Train).collect();
    if train.is_empty() {
        return Err(CorpusError::Empty);
    }
    let in_language: Vec<&&GoldRecord> =
        train.iter().filter(|r| r.document.language == language).collect();
    if in_language.is_empty() {
        let overall = top_type(train.iter().copied(), cb);
        return Ok(MajorityClass { type_name: overall, fallback: true });
    }
    let top = top_type(in_language.into_iter().copied(), cb);
    Ok(MajorityClass { type_name: top, fallback: false })
}

fn top_type<'a>(records: impl Iterator<Item = &'a GoldRecord>, cb: &Codebook) -> String {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for record in records {
        *counts.entry(record.gold.event_type.as_str()).or_insert(0) += 1;
    }
    counts
        .iter()
        .max_by_key(|(name, count)| {
            // Higher count wins; on ties the earlier codebook position wins.
            let rank = cb.type_rank(name).unwrap_or(usize::MAX);
            (**count, std::cmp::Reverse(rank))
        })
        .map(|(name, _)| name.to_string())
        .expect("non-empty record set")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{parse_codebook, ArgumentValue};
    use std::io::Write;

    fn cb() -> Codebook {
        parse_codebook(
            &serde_json::json!({
                "version": "t",
                "event_types": [
                    {"name": "Arrest", "description": "d", "fields": [
                        {"name": "location", "description": "w", "kind": "location"}
                    ]},
                    {"name": "Agreement", "description": "d", "fields": [
                        {"name": "location", "description": "w", "kind": "location"}
                    ]}
                ]
            })
            .to_string(),
        )
        .unwrap()
        .codebook
    }

    fn record(doc_id: &str, language: &str, split: Split, event_type: &str) -> GoldRecord {
        GoldRecord {
            document: Document {
                doc_id: doc_id.into(),
                language: language.into(),
                country: "Iraq".into(),
                text: "some text".into(),
                split,
            },
            gold: EventInstance::new(event_type).with(
                "location",
                ArgumentValue::Location { country: "Iraq".into(), address: "Iraq".into() },
            ),
        }
    }

    #[test]
    fn hill_number_matches_closed_forms() {
        assert!((hill_number(&[10, 10, 10, 10]).unwrap() - 4.0).abs() < 1e-9);
        assert!((hill_number(&[42]).unwrap() - 1.0).abs() < 1e-12);
        assert!((hill_number(&[1, 1, 0]).unwrap() - 2.0).abs() < 1e-9);
        assert!(matches!(hill_number(&[0, 0]), Err(CorpusError::AllZeroCounts)));
    }

    #[test]
    fn load_rejects_bad_lines_with_line_numbers() {
        let cb = cb();
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            file,
            r#"{{"doc_id":"a","language":"en","country":"Iraq","text":"t","split":"train","gold":{{"event_type":"Arrest","arguments":{{"location":{{"country":"Iraq","address":"Iraq"}}}}}}}}"#
        )
        .unwrap();
        writeln!(
            file,
            r#"{{"doc_id":"b","language":"en","country":"Iraq","text":"t","split":"train","gold":{{"event_type":"Sports","arguments":{{}}}}}}"#
        )
        .unwrap();

        let loaded = load_corpus(file.path(), &cb, false).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.rejected.len(), 1);
        assert_eq!(loaded.rejected[0].line, 2);
        assert!(loaded.rejected[0].reason.contains("unknown event type"));

        let err = load_corpus(file.path(), &cb, true).unwrap_err();
        assert!(matches!(err, CorpusError::BadLine { line: 2, .. }));
    }

    #[test]
    fn empty_file_loads_as_empty_corpus() {
        let file = tempfile::NamedTempFile::new().unwrap();
        let loaded = load_corpus(file.path(), &cb(), false).unwrap();
        assert!(loaded.records.is_empty());
        assert!(loaded.rejected.is_empty());
    }

    #[test]
    fn duplicate_doc_ids_are_rejected() {
        let cb = cb();
        let mut file = tempfile::NamedTempFile::new().unwrap();
        for _ in 0..2 {
            writeln!(
                file,
                r#"{{"doc_id":"a","language":"en","country":"Iraq","text":"t","split":"train","gold":{{"event_type":"Arrest","arguments":{{"location":{{"country":"Iraq","address":"Iraq"}}}}}}}}"#
            )
            .unwrap();
        }
        let loaded = load_corpus(file.path(), &cb, false).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert!(loaded.rejected[0].reason.contains("duplicate doc_id"));
    }

    #[test]
    fn stats_cover_languages_and_single_record_hill() {
        let records = vec![
            record("a", "en", Split::Train, "Arrest"),
            record("b", "en", Split::Train, "Agreement"),
            record("c", "es", Split::Dev, "Arrest"),
        ];
        let stats = corpus_stats(&records).unwrap();
        assert_eq!(stats.overall.documents, 3);
        assert_eq!(stats.by_language["en"].documents, 2);
        assert!((stats.by_language["en"].hill_number - 2.0).abs() < 1e-9);
        assert!((stats.by_language["es"].hill_number - 1.0).abs() < 1e-12);
        assert!(matches!(corpus_stats(&[]), Err(CorpusError::Empty)));
    }

    #[test]
    fn majority_class_breaks_ties_by_codebook_order() {
        let cb = cb();
        let records = vec![
            record("a", "en", Split::Train, "Agreement"),
            record("b", "en", Split::Train, "Agreement"),
            record("c", "en", Split::Train, "Arrest"),
            record("d", "en", Split::Train, "Arrest"),
            record("e", "es", Split::Train, "Agreement"),
        ];
        // 2-2 tie in English: Arrest is declared before Agreement.
        let m = majority_class(&records, &cb, "en").unwrap();
        assert_eq!(m.type_name, "Arrest");
        assert!(!m.fallback);

        // Language absent from train: overall majority (Agreement 3 vs Arrest 2).
        let m = majority_class(&records, &cb, "tr").unwrap();
        assert_eq!(m.type_name, "Agreement");
        assert!(m.fallback);
    }

    #[test]
    fn majority_class_prefers_frequency() {
        let cb = cb();
        let mut records: Vec<GoldRecord> = (0..9)
            .map(|i| record(&format!("p{i}"), "en", Split::Train, "Agreement"))
            .collect();
        records.push(record("x", "en", Split::Train, "Arrest"));
        let m = majority_class(&records, &cb, "en").unwrap();
        assert_eq!(m.type_name, "Agreement");
    }
}

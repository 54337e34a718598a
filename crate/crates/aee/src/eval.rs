//! Exact-match micro-averaged scoring for detection, argument extraction,
//! entity linking, and the end-to-end task.
//!
//! Every event is reduced to a set of (role, canonical value key) pairs;
//! precision, recall and F1 come from pooled true/false positive and false
//! negative counts over those pairs. Null arguments are omitted on both
//! sides (matching a null would award trivial credit), entity lists flatten
//! to one pair per entity id, and location values are keyed by their
//! canonical place so spelling variants of the same place compare equal.
//!
//! The end-to-end scorer applies the type penalty: when the predicted event
//! type differs from gold, every predicted pair counts as a false positive
//! and every gold pair as a false negative.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::codebook::{ArgumentValue, EventInstance};
use crate::corpus::{GoldRecord, Split};
use crate::entity_db::EntityCatalog;
use crate::geonorm::Geocoder;

/// Canonical key for one location argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocationKey {
    pub key: String,
    pub resolved: bool,
}

/// Strategy turning a raw (country, address) pair into a comparison key.
pub trait LocationKeyer: Sync {
    fn key(&self, country: &str, address: &str) -> LocationKey;
}

/// Case-insensitive raw-string keying; used when no geocoder is available
/// and by the independent test oracles.
pub struct RawLocationKeyer;

impl LocationKeyer for RawLocationKeyer {
    fn key(&self, country: &str, address: &str) -> LocationKey {
        LocationKey {
            key: format!("raw:{}|{}", country.trim().to_lowercase(), address.trim().to_lowercase()),
            resolved: false,
        }
    }
}

/// Geocoder-backed keying: resolved places compare by canonical place id,
/// unresolved ones degrade to raw string keys.
pub struct GeoLocationKeyer<'a> {
    pub geocoder: &'a Geocoder,
}

impl LocationKeyer for GeoLocationKeyer<'_> {
    fn key(&self, country: &str, address: &str) -> LocationKey {
        match self.geocoder.normalize_location(country, address) {
            Ok(normalized) if normalized.resolved => {
                LocationKey { key: normalized.place_id, resolved: true }
            }
            _ => RawLocationKeyer.key(country, address),
        }
    }
}

/// Which argument roles contribute pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairScope {
    NonEntity,
    Entity,
    All,
}

/// The canonical pair set of one event.
#[derive(Debug, Clone, Default)]
pub struct PairSet {
    pub pairs: BTreeSet<(String, String)>,
    pub warnings: Vec<String>,
    pub unresolved_locations: u64,
}

/// Reduce an event to canonical (role, value-key) pairs.
///
/// The entity catalog, when provided, resolves entity references (names or
/// ids) to ids; unresolvable references are kept verbatim so they still
/// compare by exact string.
pub fn canonical_pairs(
    ev: &EventInstance,
    scope: PairScope,
    keyer: &dyn LocationKeyer,
    catalog: Option<&EntityCatalog>,
) -> PairSet {
    let mut out = PairSet::default();
    for (role, value) in &ev.arguments {
        let is_entity = matches!(value, ArgumentValue::EntityRefs(_));
        match scope {
            PairScope::Entity if !is_entity => continue,
            PairScope::NonEntity if is_entity => continue,
            _ => {}
        }
        match value {
            ArgumentValue::Null => {}
            ArgumentValue::Bool(b) => {
                out.pairs.insert((role.clone(), b.to_string()));
            }
            ArgumentValue::Int(n) => {
                out.pairs.insert((role.clone(), n.to_string()));
            }
            ArgumentValue::Text(s) => {
                out.pairs.insert((role.clone(), collapse_whitespace(s)));
            }
            ArgumentValue::Category(label) => {
                out.pairs.insert((role.clone(), label.clone()));
            }
            ArgumentValue::CategorySet(labels) => {
                if !labels.is_empty() {
                    let mut sorted: Vec<&str> = labels.iter().map(String::as_str).collect();
                    sorted.sort_unstable();
                    out.pairs.insert((role.clone(), sorted.join("|")));
                }
            }
            ArgumentValue::EntityRefs(refs) => {
                let mut seen = BTreeSet::new();
                for r in refs {
                    let id = match catalog.and_then(|c| c.resolve(r)) {
                        Some(entity) => entity.entity_id.clone(),
                        None => r.clone(),
                    };
                    if !seen.insert(id.clone()) {
                        out.warnings
                            .push(format!("role {role:?}: duplicate entity {r:?} collapsed"));
                        continue;
                    }
                    out.pairs.insert((role.clone(), id));
                }
            }
            ArgumentValue::Location { country, address } => {
                let key = keyer.key(country, address);
                if !key.resolved {
                    out.unresolved_locations += 1;
                }
                out.pairs.insert((role.clone(), key.key));
            }
        }
    }
    out
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Pooled exact-match counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

// 0/0 is defined as 0, the usual micro-F1 convention for empty slices.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<Counts> for Metrics {
    fn from(c: Counts) -> Self {
        Metrics {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
        }
    }
}

/// Full scoring report for one task.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub task: String,
    pub overall: Metrics,
    pub by_language: BTreeMap<String, Metrics>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub by_subset: BTreeMap<String, Metrics>,
    pub unresolved_locations: u64,
    pub warnings: Vec<String>,
    pub meta: ReportMeta,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ReportMeta {
    pub codebook_version: String,
    pub geonorm_cache_version: Option<u32>,
    pub use_gold_type: Option<bool>,
    pub config_hash: Option<String>,
}

impl ScoreReport {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serializes")
    }

    /// Flat CSV of the breakdown tables.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slice,tp,fp,fn,precision,recall,f1\n");
        let mut push = |name: &str, m: &Metrics| {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6}\n",
                name, m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
            ));
        };
        push("overall", &self.overall);
        for (lang, m) in &self.by_language {
            push(&format!("language:{lang}"), m);
        }
        for (subset, m) in &self.by_subset {
            push(&format!("subset:{subset}"), m);
        }
        out
    }
}

/// One prediction to score: the document id plus the predicted event, when
/// the pipeline produced one.
#[derive(Debug, Clone)]
pub struct PredRecord {
    pub doc_id: String,
    pub event: Option<EventInstance>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("duplicate doc_id {0:?} in {1}")]
    DuplicateDocId(String, &'static str),
    #[error("prediction for unknown doc_id {0:?}")]
    UnknownPredDoc(String),
    #[error("doc {doc_id:?}: gold entity reference {reference:?} is not in the entity database")]
    UnknownGoldEntity { doc_id: String, reference: String },
}

/// Subset labels for entity-linking breakdowns.
#[derive(Debug, Clone, Default)]
pub struct SubsetLabels {
    /// Entity ids occurring in the train split's gold annotations.
    pub seen: BTreeSet<String>,
    /// Entity ids labeled generic; ids absent from the map had no label.
    pub generic: BTreeMap<String, bool>,
}

/// Derive subset labels from the entity database and the corpus: seen =
/// appears in a train-split gold entity argument (or has first_seen_split =
/// train), generic = the entity's own label.
pub fn subset_labels(catalog: &EntityCatalog, records: &[GoldRecord]) -> SubsetLabels {
    let mut labels = SubsetLabels::default();
    for entity in catalog.entities() {
        if let Some(generic) = entity.generic {
            labels.generic.insert(entity.entity_id.clone(), generic);
        }
        if entity.first_seen_split == Some(Split::Train) {
            labels.seen.insert(entity.entity_id.clone());
        }
    }
    for record in records.iter().filter(|r| r.document.split == Split::Train) {
        for value in record.gold.arguments.values() {
            if let ArgumentValue::EntityRefs(refs) = value {
                for r in refs {
                    if let Some(entity) = catalog.resolve(r) {
                        labels.seen.insert(entity.entity_id.clone());
                    }
                }
            }
        }
    }
    labels
}

fn index_predictions<'a>(
    golds: &[GoldRecord],
    preds: &'a [PredRecord],
) -> Result<BTreeMap<&'a str, &'a PredRecord>, EvalError> {
    let mut gold_ids = BTreeSet::new();
    for g in golds {
        if !gold_ids.insert(g.document.doc_id.as_str()) {
            return Err(EvalError::DuplicateDocId(g.document.doc_id.clone(), "gold"));
        }
    }
    let mut map: BTreeMap<&str, &PredRecord> = BTreeMap::new();
    for p in preds {
        if map.insert(p.doc_id.as_str(), p).is_some() {
            return Err(EvalError::DuplicateDocId(p.doc_id.clone(), "predictions"));
        }
        if !gold_ids.contains(p.doc_id.as_str()) {
            return Err(EvalError::UnknownPredDoc(p.doc_id.clone()));
        }
    }
    Ok(map)
}

struct Tally {
    overall: Counts,
    by_language: BTreeMap<String, Counts>,
    by_subset: BTreeMap<String, Counts>,
    unresolved: u64,
    warnings: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Tally {
            overall: Counts::default(),
            by_language: BTreeMap::new(),
            by_subset: BTreeMap::new(),
            unresolved: 0,
            warnings: Vec::new(),
        }
    }

    fn add(&mut self, language: &str, counts: Counts) {
        self.overall.add(counts);
        self.by_language.entry(language.to_string()).or_default().add(counts);
    }

    fn into_report(self, task: &str, meta: ReportMeta) -> ScoreReport {
        ScoreReport {
            task: task.to_string(),
            overall: self.overall.into(),
            by_language: self.by_language.into_iter().map(|(k, v)| (k, v.into())).collect(),
            by_subset: self.by_subset.into_iter().map(|(k, v)| (k, v.into())).collect(),
            unresolved_locations: self.unresolved,
            warnings: self.warnings,
            meta,
        }
    }
}

fn pair_counts(gold: &BTreeSet<(String, String)>, pred: &BTreeSet<(String, String)>) -> Counts {
    let tp = gold.intersection(pred).count() as u64;
    Counts { tp, fp: pred.len() as u64 - tp, fn_: gold.len() as u64 - tp }
}

/// Event detection score: one gold type and at most one predicted type per
/// document.
pub fn score_ed(
    golds: &[GoldRecord],
    preds: &[PredRecord],
    meta: ReportMeta,
) -> Result<ScoreReport, EvalError> {
    let by_doc = index_predictions(golds, preds)?;
    let mut tally = Tally::new();
    for gold in golds {
        let language = gold.document.language.as_str();
        let predicted = by_doc
            .get(gold.document.doc_id.as_str())
            .and_then(|p| p.event.as_ref())
            .map(|e| e.event_type.as_str());
        let counts = match predicted {
            Some(t) if t == gold.gold.event_type => Counts { tp: 1, fp: 0, fn_: 0 },
            Some(_) => Counts { tp: 0, fp: 1, fn_: 1 },
            None => Counts { tp: 0, fp: 0, fn_: 1 },
        };
        tally.add(language, counts);
    }
    Ok(tally.into_report("ed", meta))
}

/// Argument-extraction score over non-entity pairs.
pub fn score_aeae(
    golds: &[GoldRecord],
    preds: &[PredRecord],
    keyer: &dyn LocationKeyer,
    use_gold_type: bool,
    mut meta: ReportMeta,
) -> Result<ScoreReport, EvalError> {
    meta.use_gold_type = Some(use_gold_type);
    let by_doc = index_predictions(golds, preds)?;
    let mut tally = Tally::new();
    for gold in golds {
        let gold_pairs = canonical_pairs(&gold.gold, PairScope::NonEntity, keyer, None);
        let pred_pairs = by_doc
            .get(gold.document.doc_id.as_str())
            .and_then(|p| p.event.as_ref())
            .map(|e| canonical_pairs(e, PairScope::NonEntity, keyer, None))
            .unwrap_or_default();
        tally.unresolved += gold_pairs.unresolved_locations + pred_pairs.unresolved_locations;
        tally.warnings.extend(gold_pairs.warnings);
        tally.warnings.extend(pred_pairs.warnings);
        tally.add(&gold.document.language, pair_counts(&gold_pairs.pairs, &pred_pairs.pairs));
    }
    Ok(tally.into_report("aeae", meta))
}

/// Entity-linking score over entity pairs, with seen/unseen and
/// generic/specific breakdowns when labels are provided.
pub fn score_ael(
    golds: &[GoldRecord],
    preds: &[PredRecord],
    catalog: &EntityCatalog,
    subsets: Option<&SubsetLabels>,
    use_gold_type: bool,
    mut meta: ReportMeta,
) -> Result<ScoreReport, EvalError> {
    meta.use_gold_type = Some(use_gold_type);
    let by_doc = index_predictions(golds, preds)?;
    let keyer = RawLocationKeyer;
    let mut tally = Tally::new();
    for gold in golds {
        // Gold entity references must resolve; predictions may contain ids
        // the linker hallucinated, which simply never match.
        for value in gold.gold.arguments.values() {
            if let ArgumentValue::EntityRefs(refs) = value {
                for r in refs {
                    if catalog.resolve(r).is_none() {
                        return Err(EvalError::UnknownGoldEntity {
                            doc_id: gold.document.doc_id.clone(),
                            reference: r.clone(),
                        });
                    }
                }
            }
        }
        let gold_pairs = canonical_pairs(&gold.gold, PairScope::Entity, &keyer, Some(catalog));
        let pred_pairs = by_doc
            .get(gold.document.doc_id.as_str())
            .and_then(|p| p.event.as_ref())
            .map(|e| canonical_pairs(e, PairScope::Entity, &keyer, Some(catalog)))
            .unwrap_or_default();
        tally.warnings.extend(gold_pairs.warnings);
        tally.warnings.extend(pred_pairs.warnings);
        tally.add(&gold.document.language, pair_counts(&gold_pairs.pairs, &pred_pairs.pairs));

        if let Some(labels) = subsets {
            for (kind, pairs, other) in [
                ("pred", &pred_pairs.pairs, &gold_pairs.pairs),
                ("gold", &gold_pairs.pairs, &pred_pairs.pairs),
            ] {
                for pair in pairs.iter() {
                    let entity_id = &pair.1;
                    let matched = other.contains(pair);
                    let mut rows = Vec::new();
                    rows.push(if labels.seen.contains(entity_id) { "seen" } else { "unseen" });
                    match labels.generic.get(entity_id) {
                        Some(true) => rows.push("generic"),
                        Some(false) => rows.push("specific"),
                        None => {}
                    }
                    for row in rows {
                        let counts = tally.by_subset.entry(row.to_string()).or_default();
                        match (kind, matched) {
                            // Count each tp once (from the gold side).
                            ("gold", true) => counts.tp += 1,
                            ("gold", false) => counts.fn_ += 1,
                            ("pred", false) => counts.fp += 1,
                            _ => {}
                        }
                    }
                }
            }
        }
    }
    Ok(tally.into_report("ael", meta))
}

/// End-to-end score over all pairs, with the wrong-type penalty.
pub fn score_e2e(
    golds: &[GoldRecord],
    preds: &[PredRecord],
    keyer: &dyn LocationKeyer,
    catalog: Option<&EntityCatalog>,
    meta: ReportMeta,
) -> Result<ScoreReport, EvalError> {
    let by_doc = index_predictions(golds, preds)?;
    let mut tally = Tally::new();
    for gold in golds {
        let gold_pairs = canonical_pairs(&gold.gold, PairScope::All, keyer, catalog);
        let pred_event =
            by_doc.get(gold.document.doc_id.as_str()).and_then(|p| p.event.as_ref());
        let pred_pairs = pred_event
            .map(|e| canonical_pairs(e, PairScope::All, keyer, catalog))
            .unwrap_or_default();
        tally.unresolved += gold_pairs.unresolved_locations + pred_pairs.unresolved_locations;
        tally.warnings.extend(gold_pairs.warnings);
        tally.warnings.extend(pred_pairs.warnings);

        let type_correct = pred_event.map(|e| e.event_type == gold.gold.event_type);
        let counts = match type_correct {
            Some(true) => pair_counts(&gold_pairs.pairs, &pred_pairs.pairs),
            // Wrong type: every predicted pair is a false positive, every
            // gold pair a false negative.
            Some(false) => Counts {
                tp: 0,
                fp: pred_pairs.pairs.len() as u64,
                fn_: gold_pairs.pairs.len() as u64,
            },
            None => Counts { tp: 0, fp: 0, fn_: gold_pairs.pairs.len() as u64 },
        };
        tally.add(&gold.document.language, counts);
    }
    Ok(tally.into_report("e2e", meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::ArgumentValue as V;
    use crate::corpus::Document;
    use crate::entity_db::Entity;

    fn gold(doc_id: &str, language: &str, ev: EventInstance) -> GoldRecord {
        GoldRecord {
            document: Document {
                doc_id: doc_id.into(),
                language: language.into(),
                country: "Iraq".into(),
                text: "text".into(),
                split: Split::Test,
            },
            gold: ev,
        }
    }

    fn pred(doc_id: &str, ev: EventInstance) -> PredRecord {
        PredRecord { doc_id: doc_id.into(), event: Some(ev) }
    }

    fn simple(t: &str, pairs: &[(&str, i64)]) -> EventInstance {
        let mut ev = EventInstance::new(t);
        for (role, v) in pairs {
            ev.arguments.insert(role.to_string(), V::Int(*v));
        }
        ev
    }

    #[test]
    fn canonical_pairs_follow_the_value_rules() {
        let ev = EventInstance::new("T")
            .with("flag", V::Bool(false))
            .with("fatalities", V::Int(0))
            .with("crowd_size", V::Null)
            .with("note", V::Text("  a   few\nhundred ".into()))
            .with("cats", V::CategorySet(vec!["B".into(), "A".into()]))
            .with("none_cats", V::CategorySet(vec![]))
            .with("who", V::EntityRefs(vec!["x".into(), "x".into(), "y".into()]))
            .with("location", V::Location { country: "Iraq".into(), address: "Mosul".into() });
        let set = canonical_pairs(&ev, PairScope::All, &RawLocationKeyer, None);
        let pairs: Vec<(String, String)> = set.pairs.iter().cloned().collect();
        assert!(pairs.contains(&("flag".into(), "false".into())));
        assert!(pairs.contains(&("fatalities".into(), "0".into())));
        assert!(pairs.contains(&("note".into(), "a few hundred".into())));
        assert!(pairs.contains(&("cats".into(), "A|B".into())));
        assert!(pairs.contains(&("who".into(), "x".into())));
        assert!(pairs.contains(&("who".into(), "y".into())));
        assert!(pairs.contains(&("location".into(), "raw:iraq|mosul".into())));
        assert!(!pairs.iter().any(|(r, _)| r == "crowd_size" || r == "none_cats"));
        assert_eq!(set.warnings.len(), 1, "duplicate entity collapses with warning");
        assert_eq!(set.unresolved_locations, 1);

        let entity_only = canonical_pairs(&ev, PairScope::Entity, &RawLocationKeyer, None);
        assert!(entity_only.pairs.iter().all(|(r, _)| r == "who"));
        let non_entity = canonical_pairs(&ev, PairScope::NonEntity, &RawLocationKeyer, None);
        assert!(non_entity.pairs.iter().all(|(r, _)| r != "who"));
    }

    #[test]
    fn ed_two_of_three_documents_correct() {
        let golds = vec![
            gold("a", "en", EventInstance::new("X")),
            gold("b", "en", EventInstance::new("X")),
            gold("c", "es", EventInstance::new("Y")),
        ];
        let preds = vec![
            pred("a", EventInstance::new("X")),
            pred("b", EventInstance::new("Y")),
            pred("c", EventInstance::new("Y")),
        ];
        let report = score_ed(&golds, &preds, ReportMeta::default()).unwrap();
        assert_eq!((report.overall.tp, report.overall.fp, report.overall.fn_), (2, 1, 1));
        assert!((report.overall.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.overall.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.overall.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ed_all_predictions_missing_scores_zero() {
        let golds = vec![gold("a", "en", EventInstance::new("X"))];
        let report = score_ed(&golds, &[], ReportMeta::default()).unwrap();
        assert_eq!(report.overall.f1, 0.0);
        assert_eq!(report.overall.fn_, 1);
    }

    #[test]
    fn aeae_half_right() {
        let golds = vec![gold("a", "en", simple("T", &[("a", 1), ("b", 2)]))];
        let preds = vec![pred("a", simple("T", &[("a", 1), ("b", 3)]))];
        let report =
            score_aeae(&golds, &preds, &RawLocationKeyer, true, ReportMeta::default()).unwrap();
        assert_eq!((report.overall.tp, report.overall.fp, report.overall.fn_), (1, 1, 1));
        assert!((report.overall.precision - 0.5).abs() < 1e-12);
        assert!((report.overall.recall - 0.5).abs() < 1e-12);

        let perfect = score_aeae(
            &golds,
            &[pred("a", simple("T", &[("a", 1), ("b", 2)]))],
            &RawLocationKeyer,
            true,
            ReportMeta::default(),
        )
        .unwrap();
        assert_eq!(perfect.overall.f1, 1.0);
    }

    fn tiny_catalog() -> EntityCatalog {
        EntityCatalog::new(vec![
            Entity {
                entity_id: "e1".into(),
                name: "Women".into(),
                description: "d".into(),
                generic: Some(true),
                first_seen_split: Some(Split::Train),
            },
            Entity {
                entity_id: "e2".into(),
                name: "Rioters".into(),
                description: "d".into(),
                generic: Some(true),
                first_seen_split: None,
            },
            Entity {
                entity_id: "e3".into(),
                name: "Solidarity Party".into(),
                description: "d".into(),
                generic: Some(false),
                first_seen_split: None,
            },
        ])
    }

    #[test]
    fn ael_role_is_part_of_the_pair() {
        let catalog = tiny_catalog();
        let mut g = EventInstance::new("T");
        g.arguments.insert("victims".into(), V::EntityRefs(vec!["e1".into()]));
        let mut p = EventInstance::new("T");
        p.arguments.insert("attackers".into(), V::EntityRefs(vec!["e1".into()]));
        let golds = vec![gold("a", "en", g)];
        let report = score_ael(
            &golds,
            &[pred("a", p)],
            &catalog,
            None,
            true,
            ReportMeta::default(),
        )
        .unwrap();
        // Right entity, wrong role: one fp and one fn.
        assert_eq!((report.overall.tp, report.overall.fp, report.overall.fn_), (0, 1, 1));
    }

    #[test]
    fn ael_unknown_gold_entity_is_an_error() {
        let catalog = tiny_catalog();
        let mut g = EventInstance::new("T");
        g.arguments.insert("victims".into(), V::EntityRefs(vec!["Martians".into()]));
        let golds = vec![gold("a", "en", g)];
        let err =
            score_ael(&golds, &[], &catalog, None, true, ReportMeta::default()).unwrap_err();
        assert!(matches!(err, EvalError::UnknownGoldEntity { .. }));
    }

    #[test]
    fn ael_subset_rows_isolate_unseen_misses() {
        let catalog = tiny_catalog();
        let labels = SubsetLabels {
            seen: BTreeSet::from(["e1".to_string()]),
            generic: BTreeMap::from([
                ("e1".to_string(), true),
                ("e2".to_string(), true),
                ("e3".to_string(), false),
            ]),
        };
        // Gold: seen e1 + unseen e3; prediction finds only e1.
        let mut g = EventInstance::new("T");
        g.arguments.insert("victims".into(), V::EntityRefs(vec!["e1".into(), "e3".into()]));
        let mut p = EventInstance::new("T");
        p.arguments.insert("victims".into(), V::EntityRefs(vec!["e1".into()]));
        let golds = vec![gold("a", "en", g)];
        let report = score_ael(
            &golds,
            &[pred("a", p)],
            &catalog,
            Some(&labels),
            true,
            ReportMeta::default(),
        )
        .unwrap();
        assert_eq!(report.by_subset["seen"].f1, 1.0);
        assert_eq!(report.by_subset["unseen"].f1, 0.0);
        assert_eq!(report.by_subset["unseen"].fn_, 1);
        assert_eq!(report.by_subset["specific"].fn_, 1);
    }

    #[test]
    fn e2e_penalty_counts_all_pairs_on_type_mismatch() {
        let golds = vec![gold(
            "a",
            "en",
            simple("X", &[("p", 1), ("q", 2), ("r", 3), ("s", 4), ("t", 5)]),
        )];
        let preds =
            vec![pred("a", simple("Y", &[("p", 1), ("q", 2), ("r", 3), ("s", 4)]))];
        let report =
            score_e2e(&golds, &preds, &RawLocationKeyer, None, ReportMeta::default()).unwrap();
        assert_eq!((report.overall.tp, report.overall.fp, report.overall.fn_), (0, 4, 5));
    }

    #[test]
    fn e2e_correct_type_and_equal_pairs_contribute_nothing_wrong() {
        let ev = simple("X", &[("p", 1)]);
        let golds = vec![gold("a", "en", ev.clone())];
        let report = score_e2e(
            &golds,
            &[pred("a", ev)],
            &RawLocationKeyer,
            None,
            ReportMeta::default(),
        )
        .unwrap();
        assert_eq!((report.overall.tp, report.overall.fp, report.overall.fn_), (1, 0, 0));
        assert_eq!(report.overall.f1, 1.0);
    }

    #[test]
    fn duplicate_doc_ids_are_rejected() {
        let golds = vec![
            gold("a", "en", EventInstance::new("X")),
            gold("a", "en", EventInstance::new("X")),
        ];
        assert!(matches!(
            score_ed(&golds, &[], ReportMeta::default()),
            Err(EvalError::DuplicateDocId(_, "gold"))
        ));
        let golds = vec![gold("a", "en", EventInstance::new("X"))];
        let preds = vec![
            PredRecord { doc_id: "a".into(), event: None },
            PredRecord { doc_id: "a".into(), event: None },
        ];
        assert!(matches!(
            score_ed(&golds, &preds, ReportMeta::default()),
            Err(EvalError::DuplicateDocId(_, "predictions"))
        ));
        let stray = vec![PredRecord { doc_id: "zz".into(), event: None }];
        assert!(matches!(
            score_ed(&golds, &stray, ReportMeta::default()),
            Err(EvalError::UnknownPredDoc(_))
        ));
    }
}

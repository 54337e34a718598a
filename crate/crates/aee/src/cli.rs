//! Batch-run plumbing behind the `aee` binary.
//!
//! All run parameters live in one [`RunConfig`], loadable from a JSON config
//! file with flag overrides on top. Every output embeds the hash of the
//! resolved config, so results are traceable to the exact parameters that
//! produced them. Documents are processed by a bounded worker pool and
//! written chunk by chunk in corpus order: interrupted runs leave a valid
//! JSONL prefix behind, and completed runs are byte-identical given warm
//! caches.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codebook::{load_codebook, Codebook, EventInstance};
use crate::corpus::{corpus_stats, load_corpus, majority_class, GoldRecord};
use crate::entity_db::{build_index, load_entities, EntityCatalog, EntityIndex};
use crate::eval::{
    score_aeae, score_ael, score_e2e, score_ed, subset_labels, GeoLocationKeyer, PredRecord,
    ReportMeta, ScoreReport,
};
use crate::extract::{run_e2e, E2eOptions, Prediction};
use crate::geonorm::{Geocoder, GeocoderConfig};
use crate::llm::{
    Gateway, GatewayConfig, HashEmbedder, HttpChatBackend, HttpEmbedBackend, MockChatBackend,
    ENV_EMBED_API_KEY, ENV_EMBED_BASE_URL, ENV_LLM_API_KEY, ENV_LLM_BASE_URL,
};
use crate::prompts::PromptSet;
use crate::zest::ZestConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Codebook(#[from] crate::codebook::CodebookError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    EntityDb(#[from] crate::entity_db::EntityDbError),
    #[error(transparent)]
    Gateway(#[from] crate::llm::GatewayError),
    #[error(transparent)]
    Geo(#[from] crate::geonorm::GeoError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error("prediction file {path}: line {line}: {reason}")]
    BadPrediction { path: String, line: usize, reason: String },
}

/// Resolved parameters for one batch run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub codebook: PathBuf,
    pub corpus: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub out: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub workers: usize,
    pub gold_type: bool,
    pub no_cache: bool,
    pub strict: bool,
    /// Chat model name sent to the backend.
    pub model: String,
    /// `hash:<dim>` for the deterministic embedder, or `http` to use the
    /// configured embeddings endpoint.
    pub embedder: String,
    /// Model name for the HTTP embedder.
    pub embed_model: String,
    /// Scripted chat transcript; replaces the live chat backend.
    pub transcripts: Option<PathBuf>,
    /// Directory overriding the built-in prompt templates.
    pub prompts_dir: Option<PathBuf>,
    pub geocoder_url: Option<String>,
    pub geocoder_user_agent: String,
    pub geonorm_cache: Option<PathBuf>,
    pub q_max: usize,
    pub k_per_query: usize,
    pub c_max: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let zest = ZestConfig::default();
        RunConfig {
            codebook: PathBuf::from("lemonade_codebook.json"),
            corpus: None,
            entities: None,
            index: None,
            out: PathBuf::from("out"),
            cache_dir: None,
            workers: 4,
            gold_type: false,
            no_cache: false,
            strict: false,
            model: zest.model.clone(),
            embedder: "hash:256".into(),
            embed_model: "gte-multilingual-base".into(),
            transcripts: None,
            prompts_dir: None,
            geocoder_url: None,
            geocoder_user_agent: "aee-geonorm/0.1".into(),
            geonorm_cache: None,
            q_max: zest.q_max,
            k_per_query: zest.k_per_query,
            c_max: zest.c_max,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path.as_ref())?;
        serde_json::from_str(&raw).map_err(|e| CliError::Config(format!("bad config file: {e}")))
    }

    /// Hash of the resolved configuration, embedded into every output.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }

    fn zest_config(&self) -> ZestConfig {
        ZestConfig {
            model: self.model.clone(),
            q_max: self.q_max,
            k_per_query: self.k_per_query,
            c_max: self.c_max,
        }
    }

    fn require(&self, field: Option<&PathBuf>, name: &str) -> Result<PathBuf, CliError> {
        field
            .cloned()
            .ok_or_else(|| CliError::Config(format!("--{name} (or config field {name:?}) is required")))
    }
}

pub struct Runtime {
    pub config: RunConfig,
    pub codebook: Codebook,
    pub prompts: PromptSet,
    pub gateway: Gateway,
}

/// Construct the shared runtime: codebook, prompts, and gateway.
pub fn build_runtime(config: RunConfig) -> Result<Runtime, CliError> {
    let loaded = load_codebook(&config.codebook)?;
    for warning in &loaded.warnings {
        log::warn!("codebook: {warning}");
    }
    let prompts = match &config.prompts_dir {
        Some(dir) => PromptSet::from_dir(dir)
            .map_err(|e| CliError::Config(format!("failed to load prompts: {e}")))?,
        None => PromptSet::builtin(),
    };

    let chat: Box<dyn crate::llm::ChatBackend> = match &config.transcripts {
        Some(path) => Box::new(MockChatBackend::from_file(path)?),
        None => {
            let base = std::env::var(ENV_LLM_BASE_URL).ok();
            let key = std::env::var(ENV_LLM_API_KEY).unwrap_or_default();
            match base {
                Some(base) => Box::new(HttpChatBackend::new(base, key)),
                None => {
                    return Err(CliError::Config(format!(
                        "no chat backend: set {ENV_LLM_BASE_URL} or pass --transcripts"
                    )))
                }
            }
        }
    };

    let embed: Box<dyn crate::llm::EmbedBackend> = if config.embedder == "http" {
        let base = std::env::var(ENV_EMBED_BASE_URL).map_err(|_| {
            CliError::Config(format!("embedder \"http\" requires {ENV_EMBED_BASE_URL}"))
        })?;
        let key = std::env::var(ENV_EMBED_API_KEY).unwrap_or_default();
        Box::new(HttpEmbedBackend::new(base, key, config.embed_model.clone()))
    } else if let Some(dim) = config.embedder.strip_prefix("hash:") {
        let dim: usize = dim
            .parse()
            .map_err(|_| CliError::Config(format!("bad embedder spec {:?}", config.embedder)))?;
        Box::new(HashEmbedder::new(dim))
    } else {
        return Err(CliError::Config(format!(
            "unknown embedder {:?}; use \"hash:<dim>\" or \"http\"",
            config.embedder
        )));
    };

    let gateway_config = GatewayConfig {
        cache_dir: config.cache_dir.clone(),
        no_cache: config.no_cache,
        ..GatewayConfig::default()
    };
    let gateway = Gateway::new(chat, Some(embed), gateway_config);
    Ok(Runtime { codebook: loaded.codebook, prompts, gateway, config })
}

fn ensure_out_dir(config: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.out)?;
    Ok(())
}

fn load_records(rt: &Runtime) -> Result<Vec<GoldRecord>, CliError> {
    let path = rt.config.require(rt.config.corpus.as_ref(), "corpus")?;
    let loaded = load_corpus(&path, &rt.codebook, rt.config.strict)?;
    for warning in &loaded.warnings {
        log::warn!("corpus: {warning}");
    }
    for rejected in &loaded.rejected {
        eprintln!("corpus: rejected line {}: {}", rejected.line, rejected.reason);
    }
    Ok(loaded.records)
}

fn load_catalog(rt: &Runtime) -> Result<EntityCatalog, CliError> {
    let path = rt.config.require(rt.config.entities.as_ref(), "entities")?;
    Ok(EntityCatalog::new(load_entities(&path)?))
}

fn load_index(rt: &Runtime) -> Result<EntityIndex, CliError> {
    let path = rt.config.require(rt.config.index.as_ref(), "index")?;
    Ok(EntityIndex::load(&path)?)
}

fn geocoder(rt: &Runtime) -> Result<Geocoder, CliError> {
    Ok(Geocoder::new(GeocoderConfig {
        base_url: rt.config.geocoder_url.clone(),
        user_agent: rt.config.geocoder_user_agent.clone(),
        cache_path: rt.config.geonorm_cache.clone(),
        ..GeocoderConfig::default()
    })?)
}

/// Build (or refresh) the entity index and write it to the index path.
pub fn cmd_index(rt: &Runtime) -> Result<PathBuf, CliError> {
    let catalog = load_catalog(rt)?;
    let index = build_index(catalog.entities(), &rt.gateway)?;
    let path = match &rt.config.index {
        Some(path) => path.clone(),
        None => {
            ensure_out_dir(&rt.config)?;
            rt.config.out.join("entity_index.json")
        }
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    index.save(&path)?;
    eprintln!("indexed {} entities into {}", index.len(), path.display());
    Ok(path)
}

/// Which single-stage batch to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Event detection only.
    Detect,
    /// Argument extraction under gold types.
    Args,
    /// Entity linking under gold types.
    Link,
    /// Full pipeline under predicted (or gold, with the flag) types.
    E2e,
}

impl Stage {
    fn file_stem(self) -> &'static str {
        match self {
            Stage::Detect => "detect",
            Stage::Args => "args",
            Stage::Link => "link",
            Stage::E2e => "e2e",
        }
    }
}

/// Run a prediction batch and write `predictions_<stage>.jsonl` (and a trace
/// file for stages that link entities). Per-document failures become error
/// records; the batch always finishes.
pub fn cmd_run(rt: &Runtime, stage: Stage) -> Result<PathBuf, CliError> {
    let records = load_records(rt)?;
    ensure_out_dir(&rt.config)?;
    let needs_linking = matches!(stage, Stage::Link | Stage::E2e);
    let (index, catalog) = if needs_linking {
        (Some(load_index(rt)?), Some(load_catalog(rt)?))
    } else {
        (None, None)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(rt.config.workers.max(1))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let out_path = rt.config.out.join(format!("predictions_{}.jsonl", stage.file_stem()));
    let trace_path = rt.config.out.join(format!("trace_{}.jsonl", stage.file_stem()));
    let mut out = std::io::BufWriter::new(std::fs::File::create(&out_path)?);
    let mut trace_out = if needs_linking {
        Some(std::io::BufWriter::new(std::fs::File::create(&trace_path)?))
    } else {
        None
    };

    let config_hash = rt.config.hash();
    let chunk_size = (rt.config.workers.max(1)) * 4;
    let mut failures = 0usize;
    for chunk in records.chunks(chunk_size) {
        let predictions: Vec<Prediction> = pool.install(|| {
            chunk
                .par_iter()
                .map(|record| run_stage(rt, stage, record, index.as_ref(), catalog.as_ref()))
                .collect()
        });
        for prediction in predictions {
            for warning in &prediction.warnings {
                eprintln!("{}: warning: {warning}", prediction.doc_id);
            }
            for error in &prediction.errors {
                eprintln!("{}: error: {error}", prediction.doc_id);
                failures += 1;
            }
            let mut line = prediction.to_json();
            line["config_hash"] = json!(config_hash);
            writeln!(out, "{line}")?;
            if let (Some(trace_out), Some(trace)) = (trace_out.as_mut(), &prediction.trace) {
                writeln!(trace_out, "{}", serde_json::to_string(trace).expect("trace serializes"))?;
            }
        }
        out.flush()?;
        if let Some(t) = trace_out.as_mut() {
            t.flush()?;
        }
    }
    eprintln!(
        "{}: wrote {} predictions ({} with errors) to {}",
        stage.file_stem(),
        records.len(),
        failures,
        out_path.display()
    );
    Ok(out_path)
}

fn run_stage(
    rt: &Runtime,
    stage: Stage,
    record: &GoldRecord,
    index: Option<&EntityIndex>,
    catalog: Option<&EntityCatalog>,
) -> Prediction {
    let doc = &record.document;
    let gold_type = record.gold.event_type.clone();
    match stage {
        Stage::Detect => {
            match crate::extract::detect_event(
                doc,
                &rt.codebook,
                &rt.gateway,
                &rt.prompts,
                &rt.config.model,
            ) {
                Ok((result, warnings)) => Prediction {
                    doc_id: doc.doc_id.clone(),
                    event: Some(EventInstance::new(result.top())),
                    errors: Vec::new(),
                    warnings,
                    trace: None,
                },
                Err(e) => Prediction {
                    doc_id: doc.doc_id.clone(),
                    event: None,
                    errors: vec![format!("detection: {e}")],
                    warnings: Vec::new(),
                    trace: None,
                },
            }
        }
        Stage::Args => {
            match crate::extract::extract_arguments(
                doc,
                &gold_type,
                &rt.codebook,
                &rt.gateway,
                &rt.prompts,
                &rt.config.model,
            ) {
                Ok(args) => {
                    let mut event = EventInstance::new(gold_type);
                    event.arguments = args;
                    Prediction {
                        doc_id: doc.doc_id.clone(),
                        event: Some(event),
                        errors: Vec::new(),
                        warnings: Vec::new(),
                        trace: None,
                    }
                }
                Err(e) => Prediction {
                    doc_id: doc.doc_id.clone(),
                    event: None,
                    errors: vec![format!("argument extraction: {e}")],
                    warnings: Vec::new(),
                    trace: None,
                },
            }
        }
        Stage::Link => {
            let outcome = crate::zest::run_zest(
                doc,
                &gold_type,
                &rt.codebook,
                index.expect("link stage loads an index"),
                catalog.expect("link stage loads a catalog"),
                &rt.gateway,
                &rt.prompts,
                &rt.config.zest_config(),
                Some(&record.gold),
            );
            match outcome {
                Ok(outcome) => {
                    let mut event = EventInstance::new(gold_type);
                    for (role, ids) in outcome.assignment.roles {
                        event
                            .arguments
                            .insert(role, crate::codebook::ArgumentValue::EntityRefs(ids));
                    }
                    Prediction {
                        doc_id: doc.doc_id.clone(),
                        event: Some(event),
                        errors: Vec::new(),
                        warnings: outcome.warnings,
                        trace: Some(outcome.trace),
                    }
                }
                Err(e) => Prediction {
                    doc_id: doc.doc_id.clone(),
                    event: None,
                    errors: vec![format!("entity linking: {e}")],
                    warnings: Vec::new(),
                    trace: None,
                },
            }
        }
        Stage::E2e => {
            let opts = E2eOptions {
                model: rt.config.model.clone(),
                gold_type: rt.config.gold_type.then(|| gold_type.clone()),
                zest: rt.config.zest_config(),
            };
            run_e2e(
                doc,
                &rt.codebook,
                index.expect("e2e stage loads an index"),
                catalog.expect("e2e stage loads a catalog"),
                &rt.gateway,
                &rt.prompts,
                &opts,
            )
        }
    }
}

/// Load a predictions JSONL file into scoreable records. Events that fail to
/// parse against the codebook degrade to missing predictions with a warning.
pub fn load_predictions(
    path: impl AsRef<Path>,
    cb: &Codebook,
) -> Result<Vec<PredRecord>, CliError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| CliError::BadPrediction {
            path: path.display().to_string(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        let doc_id = value["doc_id"]
            .as_str()
            .ok_or_else(|| CliError::BadPrediction {
                path: path.display().to_string(),
                line: idx + 1,
                reason: "missing doc_id".into(),
            })?
            .to_string();
        let event = match &value["predicted"] {
            Value::Null => None,
            predicted => match EventInstance::from_json(predicted, cb) {
                Ok(ev) => Some(ev),
                Err(reason) => {
                    eprintln!("{}: line {}: unscoreable prediction: {reason}", path.display(), idx + 1);
                    None
                }
            },
        };
        out.push(PredRecord { doc_id, event });
    }
    Ok(out)
}

/// Score a predictions file against the corpus gold annotations.
pub fn cmd_score(rt: &Runtime, task: &str, pred_path: &Path) -> Result<ScoreReport, CliError> {
    let records = load_records(rt)?;
    let preds = load_predictions(pred_path, &rt.codebook)?;
    let geocoder = geocoder(rt)?;
    let keyer = GeoLocationKeyer { geocoder: &geocoder };
    let meta = ReportMeta {
        codebook_version: rt.codebook.version.clone(),
        geonorm_cache_version: Some(geocoder.cache_version()),
        use_gold_type: None,
        config_hash: Some(rt.config.hash()),
    };
    let report = match task {
        "ed" => score_ed(&records, &preds, meta)?,
        "aeae" => score_aeae(&records, &preds, &keyer, rt.config.gold_type, meta)?,
        "ael" => {
            let catalog = load_catalog(rt)?;
            let labels = subset_labels(&catalog, &records);
            score_ael(&records, &preds, &catalog, Some(&labels), rt.config.gold_type, meta)?
        }
        "e2e" => {
            let catalog = load_catalog(rt).ok();
            score_e2e(&records, &preds, &keyer, catalog.as_ref(), meta)?
        }
        other => return Err(CliError::Config(format!("unknown task {other:?}"))),
    };
    ensure_out_dir(&rt.config)?;
    let out_path = rt.config.out.join(format!("report_{task}.json"));
    std::fs::write(&out_path, serde_json::to_string_pretty(&report.to_json())?.as_bytes())
        .map_err(CliError::Io)?;
    eprintln!("wrote {}", out_path.display());
    Ok(report)
}

/// Corpus statistics (counts, Hill numbers, per-language majority classes).
pub fn cmd_stats(rt: &Runtime) -> Result<Value, CliError> {
    let records = load_records(rt)?;
    let stats = corpus_stats(&records)?;
    let mut majority = serde_json::Map::new();
    let mut languages: Vec<String> =
        records.iter().map(|r| r.document.language.clone()).collect();
    languages.sort();
    languages.dedup();
    let has_train = records.iter().any(|r| r.document.split == crate::corpus::Split::Train);
    if has_train {
        for language in languages {
            let m = majority_class(&records, &rt.codebook, &language)?;
            majority.insert(
                language,
                json!({ "type_name": m.type_name, "fallback": m.fallback }),
            );
        }
    }
    let value = json!({
        "stats": serde_json::to_value(&stats).expect("stats serialize"),
        "majority_class_by_language": majority,
        "config_hash": rt.config.hash(),
    });
    ensure_out_dir(&rt.config)?;
    let out_path = rt.config.out.join("stats.json");
    std::fs::write(&out_path, serde_json::to_string_pretty(&value)?.as_bytes())?;
    eprintln!("wrote {}", out_path.display());
    Ok(value)
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

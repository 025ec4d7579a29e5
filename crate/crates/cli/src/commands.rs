use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use tracing::{info, warn};

use descshelf::affinity::{candidate_lists, group_by_user, load_interactions, ContentIndex, ContentScorer};
use descshelf::catalog::{descriptor_records, load_catalog, load_items, write_jsonl, Catalog};
use descshelf::corpus;
use descshelf::eval::{baseline_page, compute_report, simulate_exposure};
use descshelf::extraction::{
    extract_batch, load_lexicon, ExtractionBackend, ExtractionBackendKind, GenreVocabulary, HttpLlmClient, Lexicon,
    PromptSpec, RetryPolicy,
};
use descshelf::shelfgen::{generate_pages, PageRecord};
use descshelf::templates::{default_templates, load_templates};
use descshelf::CandidateList;

use crate::config::{RunConfig, TreatmentVariant};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config = 1,
    Data = 2,
    PartialExtraction = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind: ExitKind::Config,
            error: error.into(),
        }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind: ExitKind::Data,
            error: error.into(),
        }
    }
}

type CmdResult<T = ()> = Result<T, CliError>;

trait Classify<T> {
    fn config_err(self) -> CmdResult<T>;
    fn data_err(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config_err(self) -> CmdResult<T> {
        self.map_err(CliError::config)
    }

    fn data_err(self) -> CmdResult<T> {
        self.map_err(CliError::data)
    }
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> CmdResult<&'a Path> {
    let path = path
        .as_deref()
        .ok_or_else(|| CliError::config(anyhow!("paths.{key} is not set")))?;
    if !path.exists() {
        return Err(CliError::data(anyhow!("paths.{key}: {} does not exist", path.display())));
    }
    Ok(path)
}

fn create_output(dir: &Path, name: &str) -> CmdResult<BufWriter<File>> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .data_err()?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .data_err()
}

fn write_records<T: serde::Serialize>(dir: &Path, name: &str, records: impl IntoIterator<Item = T>) -> CmdResult {
    let out = create_output(dir, name)?;
    write_jsonl(out, records)
        .with_context(|| format!("writing {name}"))
        .data_err()
}

fn write_text(dir: &Path, name: &str, text: &str) -> CmdResult {
    let mut out = create_output(dir, name)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .with_context(|| format!("writing {name}"))
        .data_err()
}

fn genre_map(cfg: &RunConfig) -> CmdResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    if let Some(path) = &cfg.paths.genre_map {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .data_err()?;
        let file_map: BTreeMap<String, String> = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .data_err()?;
        map.extend(file_map);
    }
    map.extend(cfg.extraction.genre_map.clone());
    Ok(map)
}

/// Writes a seeded synthetic corpus plus a matching lexicon, genre map, and
/// template set.
pub fn cmd_gen_corpus(cfg: &RunConfig) -> CmdResult {
    let corpus = corpus::generate(&cfg.corpus, cfg.seed).config_err()?;
    let dir = &cfg.paths.output_dir;
    write_records(dir, "items.jsonl", &corpus.items)?;
    write_records(dir, "descriptors.jsonl", descriptor_records(&corpus.descriptors))?;
    write_records(dir, "interactions.jsonl", &corpus.interactions)?;
    write_records(dir, "lexicon.jsonl", &corpus.lexicon)?;
    let genre_json = serde_json::to_string_pretty(&corpus.genre_code_map).expect("map serializes") + "\n";
    write_text(dir, "genre_map.json", &genre_json)?;
    let templates_json = serde_json::to_string_pretty(&default_templates()).expect("templates serialize") + "\n";
    write_text(dir, "templates.json", &templates_json)?;
    info!(
        items = corpus.items.len(),
        interactions = corpus.interactions.len(),
        dir = %dir.display(),
        "generated corpus"
    );
    Ok(())
}

fn build_backend(cfg: &RunConfig) -> CmdResult<ExtractionBackend> {
    let genres = genre_map(cfg)?;
    match cfg.extraction.backend {
        ExtractionBackendKind::RuleBased => {
            let lexicon = match &cfg.paths.lexicon {
                Some(_) => load_lexicon(required(&cfg.paths.lexicon, "lexicon")?, genres).data_err()?,
                None => Lexicon::new([], genres).config_err()?,
            };
            Ok(ExtractionBackend::RuleBased(lexicon))
        }
        ExtractionBackendKind::RemoteLlm => {
            let endpoint = cfg
                .extraction
                .endpoint
                .clone()
                .ok_or_else(|| CliError::config(anyhow!("extraction.endpoint is required for remote_llm")))?;
            let spec = match &cfg.paths.prompt {
                Some(_) => PromptSpec::load(required(&cfg.paths.prompt, "prompt")?).config_err()?,
                None => PromptSpec::default(),
            };
            let allowed: GenreVocabulary = if cfg.extraction.allowed_genres.is_empty() {
                genres.values().collect()
            } else {
                cfg.extraction.allowed_genres.iter().collect()
            };
            let token = std::env::var(&cfg.extraction.token_env).ok();
            Ok(ExtractionBackend::RemoteLlm {
                client: Box::new(HttpLlmClient::new(
                    endpoint,
                    token,
                    Duration::from_secs(cfg.extraction.timeout_secs),
                )),
                spec,
                retry: RetryPolicy {
                    retries: cfg.extraction.retries,
                    backoff: Duration::from_millis(cfg.extraction.retry_backoff_ms),
                },
                genres: allowed,
            })
        }
    }
}

/// Extracts descriptors for every catalog item. Per-item failures are
/// written to `failures.jsonl` and reported through the exit code.
pub fn cmd_extract(cfg: &RunConfig) -> CmdResult {
    let items = load_items(required(&cfg.paths.items, "items")?).data_err()?;
    // Validates id uniqueness.
    Catalog::new(items.clone(), std::iter::empty()).data_err()?;
    let backend = build_backend(cfg)?;
    let outcome = extract_batch(&items, &backend, cfg.extraction.max_in_flight);
    let dir = &cfg.paths.output_dir;
    write_records(dir, "descriptors.jsonl", descriptor_records(&outcome.descriptors))?;
    write_records(dir, "failures.jsonl", &outcome.failures)?;
    for report in &outcome.grounding {
        for v in &report.violations {
            warn!(item = %report.item_id, descriptor = %v.descriptor, reason = %v.reason, "dropped ungrounded descriptor");
        }
    }
    info!(
        extracted = outcome.descriptors.len(),
        failed = outcome.failures.len(),
        "extraction finished"
    );
    if !outcome.failures.is_empty() {
        return Err(CliError {
            kind: ExitKind::PartialExtraction,
            error: anyhow!(
                "{} of {} items failed extraction; see failures.jsonl",
                outcome.failures.len(),
                items.len()
            ),
        });
    }
    Ok(())
}

struct Prepared {
    catalog: Catalog,
    lists: Vec<CandidateList>,
    shelf: descshelf::shelfgen::ShelfConfig,
}

fn prepare(cfg: &RunConfig) -> CmdResult<Prepared> {
    let catalog = load_catalog(required(&cfg.paths.items, "items")?, required(&cfg.paths.descriptors, "descriptors")?)
        .data_err()?;
    let interactions = load_interactions(required(&cfg.paths.interactions, "interactions")?).data_err()?;
    for i in &interactions {
        if catalog.item(&i.item).is_none() {
            return Err(CliError::data(anyhow!(
                "interaction of user `{}` references unknown item `{}`",
                i.user,
                i.item
            )));
        }
    }
    let mut shelf = cfg.shelf.clone();
    if cfg.paths.templates.is_some() {
        shelf.enabled_templates = load_templates(required(&cfg.paths.templates, "templates")?).config_err()?;
    }
    let index = ContentIndex::new(&catalog, shelf.embedding_dim);
    let scorer = ContentScorer { index: &index };
    let lists = candidate_lists(&scorer, &group_by_user(interactions), cfg.recommender.k).data_err()?;
    Ok(Prepared { catalog, lists, shelf })
}

/// Writes one page per user, in ascending user order.
pub fn cmd_shelves(cfg: &RunConfig) -> CmdResult {
    let p = prepare(cfg)?;
    let pages = generate_pages(&p.lists, &p.catalog, &p.shelf);
    write_records(&cfg.paths.output_dir, "pages.jsonl", pages.iter().map(PageRecord::from))?;
    info!(users = pages.len(), "wrote pages");
    Ok(())
}

/// Runs treatment and baseline under the same budget and writes
/// `report.json` and `report.txt`.
pub fn cmd_eval(cfg: &RunConfig) -> CmdResult {
    let p = prepare(cfg)?;
    let baseline: Vec<_> = p.lists.iter().map(|cl| baseline_page(cl, &cfg.budget)).collect();
    let (treatment, name) = match cfg.eval.treatment {
        TreatmentVariant::Descriptive => (generate_pages(&p.lists, &p.catalog, &p.shelf), "descriptive_shelves"),
        TreatmentVariant::Baseline => (baseline.clone(), "baseline_self"),
    };
    let comparison = compute_report(
        &simulate_exposure(&treatment, &cfg.budget),
        &simulate_exposure(&baseline, &cfg.budget),
        &p.catalog,
        p.shelf.embedding_dim,
    )
    .data_err()?
    .with_variant_names(name, "baseline");
    let json = serde_json::to_string_pretty(&comparison).expect("report serializes") + "\n";
    write_text(&cfg.paths.output_dir, "report.json", &json)?;
    write_text(&cfg.paths.output_dir, "report.txt", &comparison.to_table())?;
    info!(
        treatment = comparison.treatment.distinct_items_impressed,
        baseline = comparison.baseline.distinct_items_impressed,
        "distinct items impressed"
    );
    Ok(())
}

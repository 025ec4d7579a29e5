//! Run configuration: one TOML document describing a whole batch run.
//!
//! Relative paths are resolved against the directory holding the config
//! file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use descshelf::corpus::CorpusConfig;
use descshelf::eval::SlotBudget;
use descshelf::extraction::ExtractionBackendKind;
use descshelf::shelfgen::ShelfConfig;

pub const TOKEN_ENV: &str = "DESCSHELF_LLM_TOKEN";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub items: Option<PathBuf>,
    pub descriptors: Option<PathBuf>,
    pub interactions: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    /// JSON object mapping genre codes to genre names.
    pub genre_map: Option<PathBuf>,
    pub prompt: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommenderConfig {
    /// Candidate list length.
    pub k: usize,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self { k: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub backend: ExtractionBackendKind,
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub retry_backoff_ms: u64,
    pub max_in_flight: usize,
    pub genre_map: BTreeMap<String, String>,
    /// Defaults to the genre map's names when empty.
    pub allowed_genres: Vec<String>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            backend: ExtractionBackendKind::RuleBased,
            endpoint: None,
            token_env: TOKEN_ENV.to_string(),
            timeout_secs: 30,
            retries: 2,
            retry_backoff_ms: 200,
            max_in_flight: 4,
            genre_map: BTreeMap::new(),
            allowed_genres: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentVariant {
    #[default]
    Descriptive,
    /// Compares the baseline against itself.
    Baseline,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub treatment: TreatmentVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub recommender: RecommenderConfig,
    pub shelf: ShelfConfig,
    pub budget: SlotBudget,
    pub extraction: ExtractionConfig,
    pub eval: EvalConfig,
    pub corpus: CorpusConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            paths: Paths {
                output_dir: PathBuf::from("out"),
                ..Paths::default()
            },
            recommender: RecommenderConfig::default(),
            shelf: ShelfConfig::default(),
            budget: SlotBudget::default(),
            extraction: ExtractionConfig::default(),
            eval: EvalConfig::default(),
            corpus: CorpusConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.items,
            &mut p.descriptors,
            &mut p.interactions,
            &mut p.templates,
            &mut p.lexicon,
            &mut p.genre_map,
            &mut p.prompt,
        ]
        .into_iter()
        .flatten()
        {
            if slot.is_relative() {
                *slot = base.join(&*slot);
            }
        }
        if p.output_dir.is_relative() {
            p.output_dir = base.join(&p.output_dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shelf.validate()?;
        self.budget.validate()?;
        self.corpus.validate()?;
        if self.recommender.k == 0 {
            bail!("recommender.k must be positive");
        }
        if self.extraction.max_in_flight == 0 {
            bail!("extraction.max_in_flight must be positive");
        }
        Ok(())
    }
}

//! Descriptor extraction from item metadata.
//!
//! Two backends produce a [`DescriptorSet`] per item: a lexicon matcher that
//! runs offline, and a remote LLM reached over HTTP. LLM output passes a
//! grounding check before it is accepted: named entities must appear in the
//! item's metadata and genres must belong to a known vocabulary. Ungrounded
//! descriptors are dropped and reported, never fatal.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tracing::{debug, warn};

use crate::catalog::{canonicalize, read_jsonl, CatalogError, Descriptor, DescriptorSet, DescriptorType, Item, ItemId};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("invalid lexicon: {0}")]
    Lexicon(String),
    #[error("invalid prompt spec: {0}")]
    PromptSpec(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("could not parse LLM response: {message}")]
    Parse { message: String, raw: String },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

impl ExtractionError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ExtractionError::Transport(_) | ExtractionError::Parse { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionBackendKind {
    #[default]
    RuleBased,
    RemoteLlm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub pattern: String,
    #[serde(rename = "type")]
    pub dtype: DescriptorType,
    pub display: String,
}

/// Substring patterns mapped to descriptors, plus genre-code mappings.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: Vec<(LexiconEntry, Descriptor)>,
    genre_code_map: BTreeMap<String, Descriptor>,
}

impl Lexicon {
    pub fn new(
        entries: impl IntoIterator<Item = LexiconEntry>,
        genre_code_map: BTreeMap<String, String>,
    ) -> Result<Self, ExtractionError> {
        let mut seen = HashSet::new();
        let mut checked = Vec::new();
        for mut entry in entries {
            entry.pattern = canonicalize(&entry.pattern);
            if entry.pattern.is_empty() {
                return Err(ExtractionError::Lexicon(format!("empty pattern for `{}`", entry.display)));
            }
            if !seen.insert((entry.pattern.clone(), entry.dtype)) {
                return Err(ExtractionError::Lexicon(format!(
                    "duplicate pattern `{}` for type {}",
                    entry.pattern, entry.dtype
                )));
            }
            let descriptor = Descriptor::new(entry.dtype, &entry.display)
                .map_err(|e| ExtractionError::Lexicon(format!("pattern `{}`: {e}", entry.pattern)))?;
            checked.push((entry, descriptor));
        }
        let genre_code_map = genre_code_map
            .into_iter()
            .map(|(code, display)| {
                Descriptor::new(DescriptorType::Genre, &display)
                    .map(|d| (code.trim().to_string(), d))
                    .map_err(|e| ExtractionError::Lexicon(format!("genre code `{code}`: {e}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            entries: checked,
            genre_code_map,
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.iter().map(|(e, _)| e)
    }

    /// Genre displays reachable through the code map.
    pub fn mapped_genres(&self) -> impl Iterator<Item = &Descriptor> {
        self.genre_code_map.values()
    }
}

/// Reads lexicon entries from newline-delimited JSON.
pub fn load_lexicon(path: &Path, genre_code_map: BTreeMap<String, String>) -> Result<Lexicon, ExtractionError> {
    let entries = read_jsonl::<LexiconEntry>(path)?.into_iter().map(|(_, e)| e);
    Lexicon::new(entries, genre_code_map)
}

fn grounding_text(parts: &[&str]) -> String {
    canonicalize(&parts.join(" "))
}

/// Lexicon matching over the canonicalized title and description, plus
/// genre-code lookup.
pub fn extract_rule_based(item: &Item, lexicon: &Lexicon) -> DescriptorSet {
    let haystack = grounding_text(&[&item.title, &item.description]);
    let mut set = DescriptorSet::new();
    for (entry, descriptor) in &lexicon.entries {
        if haystack.contains(&entry.pattern) {
            set.insert(descriptor.clone());
        }
    }
    for code in &item.genre_codes {
        if let Some(genre) = lexicon.genre_code_map.get(code.trim()) {
            set.insert(genre.clone());
        }
    }
    set
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptExample {
    pub item: Item,
    pub expected: Value,
}

/// Prompt content: one instruction per descriptor type, worked examples, and
/// a description of the expected response shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub taxonomy_instructions: BTreeMap<DescriptorType, String>,
    pub incontext_examples: Vec<PromptExample>,
    pub response_schema_hint: String,
}

const DEFAULT_PROMPT: &str = include_str!("../assets/default_prompt.json");

impl Default for PromptSpec {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_PROMPT).expect("bundled prompt spec is valid")
    }
}

impl PromptSpec {
    pub fn validate(&self) -> Result<(), ExtractionError> {
        for t in DescriptorType::ALL {
            if !self.taxonomy_instructions.contains_key(&t) {
                return Err(ExtractionError::PromptSpec(format!("missing instruction for {t}")));
            }
        }
        if self.incontext_examples.is_empty() {
            return Err(ExtractionError::PromptSpec("at least one in-context example is required".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ExtractionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExtractionError::PromptSpec(format!("{}: {e}", path.display())))?;
        let spec: PromptSpec = serde_json::from_str(&text)
            .map_err(|e| ExtractionError::PromptSpec(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn write_metadata(out: &mut String, item: &Item) {
    let _ = writeln!(out, "Title: {}", item.title);
    let _ = writeln!(out, "Authors: {}", item.authors.join(", "));
    let _ = writeln!(out, "Description: {}", item.description);
    let _ = writeln!(out, "Genre codes: {}", item.genre_codes.join(", "));
}

/// Renders the extraction prompt for one item.
pub fn build_prompt(item: &Item, spec: &PromptSpec) -> String {
    let mut out = String::new();
    out.push_str("Extract descriptors for the audiobook described by the metadata below.\n\n");
    out.push_str("Descriptor types:\n");
    for t in DescriptorType::ALL {
        let instruction = spec.taxonomy_instructions.get(&t).map(String::as_str).unwrap_or_default();
        let _ = writeln!(out, "- {instruction}");
    }
    out.push_str("\nIf a descriptor type is not supported by the metadata, return an empty list for it.\n");
    let _ = writeln!(out, "{}", spec.response_schema_hint);
    for (i, example) in spec.incontext_examples.iter().enumerate() {
        let _ = writeln!(out, "\nExample {}:", i + 1);
        write_metadata(&mut out, &example.item);
        let _ = writeln!(out, "Descriptors: {}", example.expected);
    }
    out.push_str("\nAudiobook:\n");
    write_metadata(&mut out, item);
    out.push_str("Descriptors:");
    out
}

/// Parses the descriptor JSON an LLM returns: one array of strings per type
/// name. Unknown keys are ignored, missing keys mean empty lists, and blank
/// strings are skipped.
pub fn parse_llm_response(text: &str) -> Result<DescriptorSet, ExtractionError> {
    let fail = |message: String| ExtractionError::Parse {
        message,
        raw: text.to_string(),
    };
    let value: Value = serde_json::from_str(text.trim()).map_err(|e| fail(e.to_string()))?;
    let Value::Object(fields) = value else {
        return Err(fail("expected a JSON object".into()));
    };
    let mut set = DescriptorSet::new();
    for t in DescriptorType::ALL {
        let Some(field) = fields.get(t.name()) else {
            continue;
        };
        let Value::Array(values) = field else {
            return Err(fail(format!("field `{t}` is not an array")));
        };
        for v in values {
            let Value::String(s) = v else {
                return Err(fail(format!("field `{t}` contains a non-string value")));
            };
            if let Ok(d) = Descriptor::new(t, s) {
                set.insert(d);
            }
        }
    }
    Ok(set)
}

/// Serializes a set in the response format `parse_llm_response` reads.
pub fn to_llm_json(set: &DescriptorSet) -> String {
    let mut map = serde_json::Map::new();
    for t in DescriptorType::ALL {
        let values = set.get(t).iter().map(|d| Value::String(d.display().to_string())).collect();
        map.insert(t.name().to_string(), Value::Array(values));
    }
    Value::Object(map).to_string()
}

/// Canonical genre labels that extracted Genre descriptors must come from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenreVocabulary(BTreeSet<String>);

impl GenreVocabulary {
    pub fn contains(&self, genre: &Descriptor) -> bool {
        self.0.contains(genre.canonical())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<S> for GenreVocabulary {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(|s| canonicalize(s.as_ref())).filter(|s| !s.is_empty()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingViolation {
    pub descriptor: Descriptor,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub item_id: ItemId,
    pub violations: Vec<GroundingViolation>,
}

impl GroundingReport {
    pub fn is_grounded(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks named entities against the item's text and genres against the
/// vocabulary. Other types are abstractive and always accepted.
pub fn validate_grounding(result: &DescriptorSet, item: &Item, genres: &GenreVocabulary) -> GroundingReport {
    let mut parts = vec![item.title.as_str()];
    parts.extend(item.authors.iter().map(String::as_str));
    parts.push(&item.description);
    let haystack = grounding_text(&parts);

    let mut violations = Vec::new();
    for d in result.get(DescriptorType::NamedEntity) {
        if !haystack.contains(d.canonical()) {
            violations.push(GroundingViolation {
                descriptor: d.clone(),
                reason: "named entity does not occur in title, authors, or description".into(),
            });
        }
    }
    for d in result.get(DescriptorType::Genre) {
        if !genres.contains(d) {
            violations.push(GroundingViolation {
                descriptor: d.clone(),
                reason: "genre is not in the allowed vocabulary".into(),
            });
        }
    }
    GroundingReport {
        item_id: item.id.clone(),
        violations,
    }
}

/// Sends a prompt and returns the completion text.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ExtractionError>;
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// Blocking HTTP client: POSTs `{"prompt": ...}` and reads `{"text": ...}`.
/// Any non-2xx status is a transport error.
pub struct HttpLlmClient {
    endpoint: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpLlmClient {
    pub fn new(endpoint: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            endpoint: endpoint.into(),
            token,
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, prompt: &str) -> Result<String, ExtractionError> {
        let body = serde_json::to_string(&CompletionRequest { prompt }).expect("request serializes");
        let mut request = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = request.send(body).map_err(|e| ExtractionError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ExtractionError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ExtractionError::Transport(format!("HTTP {status}")));
        }
        let parsed: CompletionResponse = serde_json::from_str(&text).map_err(|e| ExtractionError::Parse {
            message: format!("response envelope: {e}"),
            raw: text.clone(),
        })?;
        Ok(parsed.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Extra attempts after the first.
    pub retries: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            backoff: Duration::from_millis(200),
        }
    }
}

/// A grounded remote extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteExtraction {
    pub descriptors: DescriptorSet,
    /// Lists what was dropped.
    pub grounding: GroundingReport,
}

/// Prompt, call, parse (retrying transport and parse failures), then drop
/// every descriptor that fails grounding.
pub fn extract_remote(
    item: &Item,
    spec: &PromptSpec,
    client: &dyn LlmClient,
    retry: &RetryPolicy,
    genres: &GenreVocabulary,
) -> Result<RemoteExtraction, ExtractionError> {
    let prompt = build_prompt(item, spec);
    let mut attempt = 0;
    let mut descriptors = loop {
        let outcome = client.complete(&prompt).and_then(|text| parse_llm_response(&text));
        match outcome {
            Ok(set) => break set,
            Err(e) if e.is_retryable() && attempt < retry.retries => {
                attempt += 1;
                debug!(item = %item.id, attempt, error = %e, "retrying extraction");
                if !retry.backoff.is_zero() {
                    std::thread::sleep(retry.backoff * attempt);
                }
            }
            Err(e) => return Err(e),
        }
    };
    let grounding = validate_grounding(&descriptors, item, genres);
    for v in &grounding.violations {
        warn!(item = %item.id, descriptor = %v.descriptor, reason = %v.reason, "dropping ungrounded descriptor");
        let target = v.descriptor.clone();
        descriptors.remove_where(target.dtype(), |d| *d == target);
    }
    Ok(RemoteExtraction {
        descriptors,
        grounding,
    })
}

pub enum ExtractionBackend {
    RuleBased(Lexicon),
    RemoteLlm {
        client: Box<dyn LlmClient>,
        spec: PromptSpec,
        retry: RetryPolicy,
        genres: GenreVocabulary,
    },
}

impl ExtractionBackend {
    pub fn kind(&self) -> ExtractionBackendKind {
        match self {
            ExtractionBackend::RuleBased(_) => ExtractionBackendKind::RuleBased,
            ExtractionBackend::RemoteLlm { .. } => ExtractionBackendKind::RemoteLlm,
        }
    }

    pub fn extract(&self, item: &Item) -> Result<(DescriptorSet, Option<GroundingReport>), ExtractionError> {
        match self {
            ExtractionBackend::RuleBased(lexicon) => Ok((extract_rule_based(item, lexicon), None)),
            ExtractionBackend::RemoteLlm {
                client,
                spec,
                retry,
                genres,
            } => {
                let r = extract_remote(item, spec, client.as_ref(), retry, genres)?;
                Ok((r.descriptors, Some(r.grounding)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionFailure {
    pub item_id: ItemId,
    pub reason: String,
}

/// Outcome of a batch run, keyed by item id so it does not depend on
/// completion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchOutcome {
    pub descriptors: BTreeMap<ItemId, DescriptorSet>,
    pub failures: Vec<ExtractionFailure>,
    /// Reports with at least one dropped descriptor.
    pub grounding: Vec<GroundingReport>,
}

/// Extracts every item with at most `max_in_flight` concurrent calls.
/// Per-item failures are collected; the batch always completes.
pub fn extract_batch(items: &[Item], backend: &ExtractionBackend, max_in_flight: usize) -> BatchOutcome {
    let run = || {
        items
            .par_iter()
            .map(|item| (item.id.clone(), backend.extract(item)))
            .collect::<Vec<_>>()
    };
    let results = match rayon::ThreadPoolBuilder::new().num_threads(max_in_flight.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    let mut outcome = BatchOutcome::default();
    for (id, result) in results {
        match result {
            Ok((set, report)) => {
                if let Some(report) = report.filter(|r| !r.is_grounded()) {
                    outcome.grounding.push(report);
                }
                outcome.descriptors.insert(id, set);
            }
            Err(e) => outcome.failures.push(ExtractionFailure {
                item_id: id,
                reason: e.to_string(),
            }),
        }
    }
    outcome.failures.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    outcome.grounding.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    outcome
}

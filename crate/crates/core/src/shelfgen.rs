//! Shelf generation.
//!
//! From one user's candidate list:
//!
//! 1. expand every candidate item's descriptors into title candidates and
//!    merge them by canonical title, keeping each title's supporting items;
//! 2. rank titles by the recommender-score mass of their support times an
//!    IDF factor, so very broad descriptors are penalized;
//! 3. scan titles in rank order, keeping one only when its embedding is less
//!    than `tau`-similar to every title already kept;
//! 4. fill each kept title with the candidate items that carry all of its
//!    descriptors, in recommender order, and decorate it;
//! 5. stop after `n` accepted shelves.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::{Candidate, CandidateList, UserId};
use crate::catalog::{Catalog, Descriptor, ItemId};
use crate::embedding::{cosine_similarity, embed_text, Embedding, DEFAULT_DIM};
use crate::templates::{decorate, default_templates, DecorationConfig, TemplateError, TemplateSpec, TitleCandidate};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("tau must be within [0, 1], got {0}")]
    Tau(f64),
    #[error("min_items ({min}) must be positive and at most max_items ({max})")]
    ItemBounds { min: usize, max: usize },
    #[error("n must be positive")]
    ShelfCount,
    #[error("idf_smoothing must be finite and non-negative, got {0}")]
    Smoothing(f64),
    #[error("embedding_dim must be at least 2, got {0}")]
    Dim(usize),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShelfConfig {
    pub enabled_templates: Vec<TemplateSpec>,
    /// Shelves per page.
    pub n: usize,
    /// Kept titles must be less similar than this to each other.
    pub tau: f64,
    pub min_items: usize,
    pub max_items: usize,
    pub idf_smoothing: f64,
    pub decoration: DecorationConfig,
    /// Forbid an item from appearing on more than one shelf of a page.
    pub dedup_items: bool,
    /// Dimension of title embeddings.
    pub embedding_dim: usize,
}

impl Default for ShelfConfig {
    fn default() -> Self {
        Self {
            enabled_templates: default_templates(),
            n: 5,
            tau: 0.8,
            min_items: 3,
            max_items: 20,
            idf_smoothing: 1.0,
            decoration: DecorationConfig::default(),
            dedup_items: false,
            embedding_dim: DEFAULT_DIM,
        }
    }
}

impl ShelfConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(ConfigError::Tau(self.tau));
        }
        if self.min_items == 0 || self.min_items > self.max_items {
            return Err(ConfigError::ItemBounds {
                min: self.min_items,
                max: self.max_items,
            });
        }
        if self.n == 0 {
            return Err(ConfigError::ShelfCount);
        }
        if !(self.idf_smoothing.is_finite() && self.idf_smoothing >= 0.0) {
            return Err(ConfigError::Smoothing(self.idf_smoothing));
        }
        if self.embedding_dim < 2 {
            return Err(ConfigError::Dim(self.embedding_dim));
        }
        self.decoration.validate()?;
        Ok(())
    }
}

/// A title candidate with its support in one user's candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct TitleScored {
    pub title: TitleCandidate,
    /// Candidate items carrying every source descriptor, in candidate order.
    pub support: Vec<ItemId>,
    pub relevance: f64,
    pub title_embedding: Embedding,
}

/// Every (title, source) pair the templates can build from the descriptors
/// of a single item, without deduplication.
fn expand_sources(item_descriptors: &crate::catalog::DescriptorSet, templates: &[TemplateSpec]) -> Vec<TitleCandidate> {
    let mut out = Vec::new();
    for template in templates {
        let mut partials: Vec<Vec<Descriptor>> = vec![Vec::new()];
        for slot in &template.slots {
            let options = item_descriptors.get(*slot);
            let mut next = Vec::with_capacity(partials.len() * options.len());
            for prefix in &partials {
                for d in options {
                    let mut p = prefix.clone();
                    p.push(d.clone());
                    next.push(p);
                }
            }
            partials = next;
        }
        out.extend(partials.into_iter().filter_map(|source| TitleCandidate::assemble(template, source)));
    }
    out
}

/// Distinct titles over the candidate list with their supports.
///
/// Titles are merged by canonical display. When two different descriptor
/// sources render to the same title, the one with the larger support wins
/// (earliest seen on ties) so that support always means "carries every
/// source descriptor". Titles that fail decoration or have fewer than
/// `min_items` supporting items are dropped. Relevance is left at zero.
pub fn collect_title_candidates(cl: &CandidateList, catalog: &Catalog, cfg: &ShelfConfig) -> Vec<TitleScored> {
    struct Group {
        sources: Vec<(TitleCandidate, Vec<ItemId>)>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Group> = HashMap::new();
    for candidate in cl.entries() {
        let set = catalog.descriptors(&candidate.item_id);
        let mut seen_here = HashSet::new();
        for title in expand_sources(set, &cfg.enabled_templates) {
            if !seen_here.insert((title.canonical().to_string(), title.source().to_vec())) {
                continue;
            }
            let group = groups.entry(title.canonical().to_string()).or_insert_with(|| {
                order.push(title.canonical().to_string());
                Group { sources: Vec::new() }
            });
            match group.sources.iter_mut().find(|(t, _)| t.source() == title.source()) {
                Some((_, support)) => support.push(candidate.item_id.clone()),
                None => group.sources.push((title, vec![candidate.item_id.clone()])),
            }
        }
    }

    let mut out = Vec::new();
    for key in order {
        let group = groups.remove(&key).expect("every ordered key has a group");
        let mut best: Option<(TitleCandidate, Vec<ItemId>)> = None;
        for (title, support) in group.sources {
            if best.as_ref().is_none_or(|(_, s)| support.len() > s.len()) {
                best = Some((title, support));
            }
        }
        let (title, support) = best.expect("groups are never empty");
        if support.len() < cfg.min_items || decorate(&title, &cfg.decoration).is_none() {
            continue;
        }
        let title_embedding = embed_text(title.display(), cfg.embedding_dim);
        out.push(TitleScored {
            title,
            support,
            relevance: 0.0,
            title_embedding,
        });
    }
    out
}

/// `ln(|catalog| / (smoothing + max document frequency of the sources))`.
pub fn title_idf(title: &TitleCandidate, catalog: &Catalog, smoothing: f64) -> f64 {
    let max_df = title
        .source()
        .iter()
        .map(|d| catalog.document_frequency(d))
        .max()
        .unwrap_or(0);
    (catalog.len() as f64 / (smoothing + max_df as f64)).ln()
}

/// Scores titles by support-score mass times IDF and sorts them, best first,
/// ties by canonical title.
pub fn rank_titles(
    mut candidates: Vec<TitleScored>,
    cl: &CandidateList,
    catalog: &Catalog,
    cfg: &ShelfConfig,
) -> Vec<TitleScored> {
    let scores: HashMap<&ItemId, f64> = cl.entries().iter().map(|c| (&c.item_id, c.score)).collect();
    for t in &mut candidates {
        let mass: f64 = t.support.iter().map(|id| scores.get(id).copied().unwrap_or(0.0)).sum();
        t.relevance = mass * title_idf(&t.title, catalog, cfg.idf_smoothing);
    }
    candidates.sort_by(|a, b| {
        (b.relevance + 0.0)
            .total_cmp(&(a.relevance + 0.0))
            .then_with(|| a.title.canonical().cmp(b.title.canonical()))
    });
    candidates
}

fn too_similar(candidate: &Embedding, kept: &[&Embedding], tau: f64) -> bool {
    kept.iter()
        .any(|k| cosine_similarity(candidate, k).expect("title embeddings share a dimension") >= tau)
}

/// Greedy threshold scan: keeps a title iff its similarity to every kept
/// title is below `tau`, up to `n` titles, preserving rank order.
pub fn diversify_titles(ranked: &[TitleScored], tau: f64, n: usize) -> Vec<TitleScored> {
    let mut kept: Vec<&TitleScored> = Vec::new();
    for t in ranked {
        if kept.len() >= n {
            break;
        }
        let embeddings: Vec<&Embedding> = kept.iter().map(|k| &k.title_embedding).collect();
        if !too_similar(&t.title_embedding, &embeddings, tau) {
            kept.push(t);
        }
    }
    kept.into_iter().cloned().collect()
}

/// A populated, decorated shelf.
#[derive(Debug, Clone, PartialEq)]
pub struct Shelf {
    pub header: String,
    pub title: String,
    pub items: Vec<Candidate>,
    /// `None` for shelves not built from descriptors, such as the generic
    /// baseline shelf.
    pub source: Option<TitleCandidate>,
}

impl Shelf {
    pub fn descriptors(&self) -> &[Descriptor] {
        self.source.as_ref().map(TitleCandidate::source).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShelfPage {
    pub user: UserId,
    pub shelves: Vec<Shelf>,
}

fn fill_shelf(
    title: &TitleScored,
    cl: &CandidateList,
    catalog: &Catalog,
    cfg: &ShelfConfig,
    exclude: &HashSet<ItemId>,
) -> Option<Shelf> {
    let decorated = decorate(&title.title, &cfg.decoration)?;
    let items: Vec<Candidate> = cl
        .entries()
        .iter()
        .filter(|c| !exclude.contains(&c.item_id))
        .filter(|c| catalog.descriptors(&c.item_id).contains_all(title.title.source()))
        .take(cfg.max_items)
        .cloned()
        .collect();
    if items.len() < cfg.min_items {
        return None;
    }
    Some(Shelf {
        header: decorated.header,
        title: decorated.display,
        items,
        source: Some(title.title.clone()),
    })
}

/// Candidate items carrying every descriptor of the title, in candidate
/// order, truncated to `max_items`. `None` if fewer than `min_items` remain
/// or the title cannot be decorated.
pub fn populate_shelf(title: &TitleScored, cl: &CandidateList, catalog: &Catalog, cfg: &ShelfConfig) -> Option<Shelf> {
    fill_shelf(title, cl, catalog, cfg, &HashSet::new())
}

/// Builds one user's page. The diversification scan continues past rejected
/// titles until `n` shelves are accepted or titles run out; a rejected title
/// does not block later ones.
pub fn generate_page(user: &UserId, cl: &CandidateList, catalog: &Catalog, cfg: &ShelfConfig) -> ShelfPage {
    let mut page = ShelfPage {
        user: user.clone(),
        shelves: Vec::new(),
    };
    if cl.is_empty() {
        return page;
    }
    let ranked = rank_titles(collect_title_candidates(cl, catalog, cfg), cl, catalog, cfg);
    let mut kept: Vec<&Embedding> = Vec::new();
    let mut used = HashSet::new();
    for title in &ranked {
        if page.shelves.len() >= cfg.n {
            break;
        }
        if too_similar(&title.title_embedding, &kept, cfg.tau) {
            continue;
        }
        let Some(shelf) = fill_shelf(title, cl, catalog, cfg, &used) else {
            continue;
        };
        if cfg.dedup_items {
            used.extend(shelf.items.iter().map(|c| c.item_id.clone()));
        }
        kept.push(&title.title_embedding);
        page.shelves.push(shelf);
    }
    page
}

/// Pages for many users, computed in parallel; output follows input order.
pub fn generate_pages(lists: &[CandidateList], catalog: &Catalog, cfg: &ShelfConfig) -> Vec<ShelfPage> {
    lists
        .par_iter()
        .map(|cl| generate_page(&cl.user, cl, catalog, cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: ItemId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShelfRecord {
    pub header: String,
    pub title: String,
    pub items: Vec<ItemRecord>,
}

/// One line of the pages file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRecord {
    pub user_id: UserId,
    pub shelves: Vec<ShelfRecord>,
}

impl From<&ShelfPage> for PageRecord {
    fn from(page: &ShelfPage) -> Self {
        PageRecord {
            user_id: page.user.clone(),
            shelves: page
                .shelves
                .iter()
                .map(|s| ShelfRecord {
                    header: s.header.clone(),
                    title: s.title.clone(),
                    items: s
                        .items
                        .iter()
                        .map(|c| ItemRecord {
                            item_id: c.item_id.clone(),
                            score: c.score,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

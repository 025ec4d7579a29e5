//! Offline comparison of descriptive pages against one generic shelf.
//!
//! Both variants get the same slot budget. An item counts as impressed when
//! it lands in one of the first `slots_per_shelf` positions of one of the
//! first `shelves_visible` shelves. There is no click model, so engagement
//! rates are reported as unavailable rather than estimated.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::{CandidateList, UserId};
use crate::catalog::{canonicalize, Catalog, Descriptor, ItemId};
use crate::embedding::{cosine_similarity, embed_text};
use crate::shelfgen::{Shelf, ShelfPage};

pub const BASELINE_TITLE: &str = "Audiobooks for you";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("slot budget values must be at least 1")]
    Budget,
    #[error("treatment and baseline cover different users (first difference: `{0}`)")]
    UserMismatch(UserId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotBudget {
    pub shelves_visible: usize,
    pub slots_per_shelf: usize,
}

impl Default for SlotBudget {
    fn default() -> Self {
        Self {
            shelves_visible: 5,
            slots_per_shelf: 10,
        }
    }
}

impl SlotBudget {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.shelves_visible == 0 || self.slots_per_shelf == 0 {
            return Err(EvalError::Budget);
        }
        Ok(())
    }

    pub fn total_slots(&self) -> usize {
        self.shelves_visible * self.slots_per_shelf
    }
}

/// The control: one generic shelf holding the top `total_slots` candidates.
pub fn baseline_page(cl: &CandidateList, budget: &SlotBudget) -> ShelfPage {
    let mut page = ShelfPage {
        user: cl.user.clone(),
        shelves: Vec::new(),
    };
    if cl.is_empty() {
        return page;
    }
    page.shelves.push(Shelf {
        header: String::new(),
        title: BASELINE_TITLE.to_string(),
        items: cl.entries().iter().take(budget.total_slots()).cloned().collect(),
        source: None,
    });
    page
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposedShelf {
    pub title: String,
    /// Descriptors every item on the shelf should carry (empty for the
    /// baseline).
    pub descriptors: Vec<Descriptor>,
    pub items: Vec<ItemId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposureLog {
    pub users: BTreeMap<UserId, Vec<ExposedShelf>>,
}

/// Truncates each page to the visible shelves and slots.
pub fn simulate_exposure(pages: &[ShelfPage], budget: &SlotBudget) -> ExposureLog {
    let mut log = ExposureLog::default();
    for page in pages {
        let shelves = page
            .shelves
            .iter()
            .take(budget.shelves_visible)
            .map(|s| ExposedShelf {
                title: s.title.clone(),
                descriptors: s.descriptors().to_vec(),
                items: s.items.iter().take(budget.slots_per_shelf).map(|c| c.item_id.clone()).collect(),
            })
            .collect();
        log.users.insert(page.user.clone(), shelves);
    }
    log
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub users: usize,
    pub distinct_items_impressed: usize,
    pub distinct_titles_global: usize,
    pub mean_distinct_titles_per_user: f64,
    pub catalog_coverage: f64,
    /// `1 - mean pairwise cosine` of title embeddings within pages; 0 when
    /// no page has two shelves.
    pub mean_inter_shelf_title_distance: f64,
    /// Fraction of impressions whose item carries its shelf's descriptors.
    pub coherence: f64,
}

/// Treatment / baseline ratios. `None` when the baseline is zero and the
/// treatment is not; equal values (including both zero) give 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub distinct_items_impressed: Option<f64>,
    pub distinct_titles_global: Option<f64>,
    pub mean_distinct_titles_per_user: Option<f64>,
    pub catalog_coverage: Option<f64>,
    pub mean_inter_shelf_title_distance: Option<f64>,
    pub coherence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub treatment: EvalReport,
    pub baseline: EvalReport,
    pub deltas: Deltas,
    pub not_computed: Vec<String>,
}

fn ratio(treatment: f64, baseline: f64) -> Option<f64> {
    if treatment == baseline {
        Some(1.0)
    } else if baseline == 0.0 {
        None
    } else {
        Some(treatment / baseline)
    }
}

/// Metrics for one exposure log.
pub fn report(variant: &str, log: &ExposureLog, catalog: &Catalog, embedding_dim: usize) -> EvalReport {
    let mut items: HashSet<&ItemId> = HashSet::new();
    let mut titles: BTreeSet<String> = BTreeSet::new();
    let mut per_user_titles = 0usize;
    let mut similarity_sum = 0.0;
    let mut pairs = 0usize;
    let mut impressions = 0usize;
    let mut coherent = 0usize;

    for shelves in log.users.values() {
        let mut user_titles = BTreeSet::new();
        let embeddings: Vec<_> = shelves.iter().map(|s| embed_text(&s.title, embedding_dim)).collect();
        for (i, shelf) in shelves.iter().enumerate() {
            let key = canonicalize(&shelf.title);
            user_titles.insert(key.clone());
            titles.insert(key);
            for other in &embeddings[i + 1..] {
                similarity_sum += cosine_similarity(&embeddings[i], other).expect("same dimension");
                pairs += 1;
            }
            for id in &shelf.items {
                items.insert(id);
                impressions += 1;
                if catalog.descriptors(id).contains_all(&shelf.descriptors) {
                    coherent += 1;
                }
            }
        }
        per_user_titles += user_titles.len();
    }

    let users = log.users.len();
    EvalReport {
        variant: variant.to_string(),
        users,
        distinct_items_impressed: items.len(),
        distinct_titles_global: titles.len(),
        mean_distinct_titles_per_user: if users == 0 { 0.0 } else { per_user_titles as f64 / users as f64 },
        catalog_coverage: if catalog.is_empty() { 0.0 } else { items.len() as f64 / catalog.len() as f64 },
        mean_inter_shelf_title_distance: if pairs == 0 { 0.0 } else { 1.0 - similarity_sum / pairs as f64 },
        coherence: if impressions == 0 { 1.0 } else { coherent as f64 / impressions as f64 },
    }
}

/// Reports both variants over the same user set, with ratios.
pub fn compute_report(
    treatment: &ExposureLog,
    baseline: &ExposureLog,
    catalog: &Catalog,
    embedding_dim: usize,
) -> Result<Comparison, EvalError> {
    let t_users: BTreeSet<&UserId> = treatment.users.keys().collect();
    let b_users: BTreeSet<&UserId> = baseline.users.keys().collect();
    if let Some(u) = t_users.symmetric_difference(&b_users).next() {
        return Err(EvalError::UserMismatch((*u).clone()));
    }
    let t = report("descriptive_shelves", treatment, catalog, embedding_dim);
    let b = report("baseline", baseline, catalog, embedding_dim);
    let deltas = Deltas {
        distinct_items_impressed: ratio(t.distinct_items_impressed as f64, b.distinct_items_impressed as f64),
        distinct_titles_global: ratio(t.distinct_titles_global as f64, b.distinct_titles_global as f64),
        mean_distinct_titles_per_user: ratio(t.mean_distinct_titles_per_user, b.mean_distinct_titles_per_user),
        catalog_coverage: ratio(t.catalog_coverage, b.catalog_coverage),
        mean_inter_shelf_title_distance: ratio(t.mean_inter_shelf_title_distance, b.mean_inter_shelf_title_distance),
        coherence: ratio(t.coherence, b.coherence),
    };
    Ok(Comparison {
        treatment: t,
        baseline: b,
        deltas,
        not_computed: vec!["i2c".into(), "i2s".into(), "# interacted".into()],
    })
}

impl Comparison {
    pub fn with_variant_names(mut self, treatment: &str, baseline: &str) -> Self {
        self.treatment.variant = treatment.to_string();
        self.baseline.variant = baseline.to_string();
        self
    }

    /// Plain-text table. Engagement rows are listed but not computed.
    pub fn to_table(&self) -> String {
        let na = "n/a offline";
        let delta = |d: Option<f64>| d.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let mut rows: Vec<[String; 4]> = vec![
            ["metric".into(), self.treatment.variant.clone(), self.baseline.variant.clone(), "delta".into()],
            ["i2c".into(), na.into(), na.into(), na.into()],
            ["i2s".into(), na.into(), na.into(), na.into()],
            [
                "# impressed".into(),
                self.treatment.distinct_items_impressed.to_string(),
                self.baseline.distinct_items_impressed.to_string(),
                delta(self.deltas.distinct_items_impressed),
            ],
            ["# interacted".into(), na.into(), na.into(), na.into()],
        ];
        let mut push = |name: &str, t: String, b: String, d: Option<f64>| rows.push([name.into(), t, b, delta(d)]);
        push(
            "distinct titles (global)",
            self.treatment.distinct_titles_global.to_string(),
            self.baseline.distinct_titles_global.to_string(),
            self.deltas.distinct_titles_global,
        );
        push(
            "distinct titles per user",
            format!("{:.4}", self.treatment.mean_distinct_titles_per_user),
            format!("{:.4}", self.baseline.mean_distinct_titles_per_user),
            self.deltas.mean_distinct_titles_per_user,
        );
        push(
            "catalog coverage",
            format!("{:.4}", self.treatment.catalog_coverage),
            format!("{:.4}", self.baseline.catalog_coverage),
            self.deltas.catalog_coverage,
        );
        push(
            "inter-shelf title distance",
            format!("{:.4}", self.treatment.mean_inter_shelf_title_distance),
            format!("{:.4}", self.baseline.mean_inter_shelf_title_distance),
            self.deltas.mean_inter_shelf_title_distance,
        );
        push(
            "coherence",
            format!("{:.4}", self.treatment.coherence),
            format!("{:.4}", self.baseline.coherence),
            self.deltas.coherence,
        );
        let widths: Vec<usize> = (0..4).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &rows {
            let line: Vec<String> = row.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

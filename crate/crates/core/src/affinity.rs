//! Candidate generation: user profiles from interaction history and per-user
//! top-K candidate lists scored by content-embedding inner product.
//!
//! This is a stand-in for a learned retrieval model. Anything that yields a
//! [`CandidateList`] can be plugged in through [`CandidateGenerator`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{read_jsonl, Catalog, CatalogError, Item, ItemId};
use crate::embedding::{embed_text, Embedding};

#[derive(Debug, Error)]
pub enum AffinityError {
    #[error("interaction references unknown item `{0}`")]
    UnknownItem(ItemId),
    #[error("invalid interaction for user `{user}`: {message}")]
    InvalidInteraction { user: UserId, message: String },
    #[error("empty user id")]
    EmptyUserId,
    #[error("candidate list is not in canonical order at position {0}")]
    Unordered(usize),
    #[error("duplicate candidate `{0}`")]
    DuplicateCandidate(ItemId),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UserId(String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Result<Self, AffinityError> {
        let id = id.into();
        if id.is_empty() {
            return Err(AffinityError::EmptyUserId);
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for UserId {
    type Error = AffinityError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl From<UserId> for String {
    fn from(u: UserId) -> Self {
        u.0
    }
}

impl From<&str> for UserId {
    /// Panics on an empty string.
    fn from(s: &str) -> Self {
        Self::new(s).expect("user id must be non-empty")
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    #[serde(rename = "user_id")]
    pub user: UserId,
    #[serde(rename = "item_id")]
    pub item: ItemId,
    pub weight: f64,
}

pub fn load_interactions(path: &Path) -> Result<Vec<Interaction>, AffinityError> {
    let mut out = Vec::new();
    for (line, interaction) in read_jsonl::<Interaction>(path)? {
        if !(interaction.weight.is_finite() && interaction.weight >= 0.0) {
            return Err(AffinityError::InvalidInteraction {
                user: interaction.user,
                message: format!("line {line}: weight must be a non-negative number"),
            });
        }
        out.push(interaction);
    }
    Ok(out)
}

/// Groups interactions by user, in ascending user order.
pub fn group_by_user(interactions: Vec<Interaction>) -> BTreeMap<UserId, Vec<Interaction>> {
    let mut out: BTreeMap<UserId, Vec<Interaction>> = BTreeMap::new();
    for i in interactions {
        out.entry(i.user.clone()).or_default().push(i);
    }
    out
}

/// Embedding of title, description, and genre codes.
pub fn item_content_embedding(item: &Item, dim: usize) -> Embedding {
    let text = format!("{} {} {}", item.title, item.description, item.genre_codes.join(" "));
    embed_text(&text, dim)
}

/// Precomputed content embeddings for every catalog item, in id order.
#[derive(Debug, Clone)]
pub struct ContentIndex {
    dim: usize,
    ids: Vec<ItemId>,
    embeddings: Vec<Embedding>,
    positions: HashMap<ItemId, usize>,
}

impl ContentIndex {
    pub fn new(catalog: &Catalog, dim: usize) -> Self {
        let items: Vec<&Item> = catalog.items().collect();
        let embeddings = items.par_iter().map(|item| item_content_embedding(item, dim)).collect();
        Self::from_embeddings(dim, items.iter().map(|i| i.id.clone()).collect(), embeddings)
    }

    /// Builds an index from explicit embeddings; `ids` need not be sorted.
    pub fn from_embeddings(dim: usize, ids: Vec<ItemId>, embeddings: Vec<Embedding>) -> Self {
        assert_eq!(ids.len(), embeddings.len());
        let positions = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Self {
            dim,
            ids,
            embeddings,
            positions,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn embedding(&self, id: &ItemId) -> Option<&Embedding> {
        self.positions.get(id).map(|&i| &self.embeddings[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user: UserId,
    pub embedding: Embedding,
}

/// Weighted mean of interacted items' embeddings, renormalized. An empty or
/// zero-weight history yields the zero vector.
pub fn build_profile(user: &UserId, history: &[Interaction], index: &ContentIndex) -> Result<UserProfile, AffinityError> {
    let mut acc = vec![0.0; index.dim()];
    for interaction in history {
        let embedding = index
            .embedding(&interaction.item)
            .ok_or_else(|| AffinityError::UnknownItem(interaction.item.clone()))?;
        if !(interaction.weight.is_finite() && interaction.weight >= 0.0) {
            return Err(AffinityError::InvalidInteraction {
                user: user.clone(),
                message: format!("weight {} for `{}`", interaction.weight, interaction.item),
            });
        }
        for (a, v) in acc.iter_mut().zip(embedding.values()) {
            *a += interaction.weight * v;
        }
    }
    Ok(UserProfile {
        user: user.clone(),
        embedding: Embedding::normalized(acc),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub item_id: ItemId,
    pub score: f64,
}

/// Score descending, then item id ascending. `0.0` and `-0.0` tie.
pub fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    (b.score + 0.0)
        .total_cmp(&(a.score + 0.0))
        .then_with(|| a.item_id.cmp(&b.item_id))
}

/// A user's recommended items, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub user: UserId,
    entries: Vec<Candidate>,
}

impl CandidateList {
    /// Validates ordering and uniqueness.
    pub fn new(user: UserId, entries: Vec<Candidate>) -> Result<Self, AffinityError> {
        let mut seen = std::collections::HashSet::new();
        for (i, c) in entries.iter().enumerate() {
            if !seen.insert(&c.item_id) {
                return Err(AffinityError::DuplicateCandidate(c.item_id.clone()));
            }
            if i > 0 && candidate_order(&entries[i - 1], c) != Ordering::Less {
                return Err(AffinityError::Unordered(i));
            }
        }
        Ok(Self { user, entries })
    }

    /// Sorts arbitrary scores into canonical order and keeps the best `k`.
    /// A repeated item keeps its highest score.
    pub fn from_scores(user: UserId, mut entries: Vec<Candidate>, k: usize) -> Self {
        entries.sort_by(candidate_order);
        let mut seen = std::collections::HashSet::new();
        entries.retain(|c| seen.insert(c.item_id.clone()));
        entries.truncate(k);
        Self { user, entries }
    }

    pub fn empty(user: UserId) -> Self {
        Self {
            user,
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[Candidate] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Scores every indexed item against the profile and keeps the best `k`.
/// A zero profile falls back to ascending item id with score 0.
pub fn top_k(profile: &UserProfile, index: &ContentIndex, k: usize) -> CandidateList {
    assert!(k >= 1, "k must be positive");
    if profile.embedding.is_zero() {
        let mut ids: Vec<&ItemId> = index.ids.iter().collect();
        ids.sort();
        let entries = ids
            .into_iter()
            .take(k)
            .map(|id| Candidate {
                item_id: id.clone(),
                score: 0.0,
            })
            .collect();
        return CandidateList {
            user: profile.user.clone(),
            entries,
        };
    }
    let scored = index
        .ids
        .iter()
        .zip(&index.embeddings)
        .map(|(id, e)| Candidate {
            item_id: id.clone(),
            score: profile.embedding.dot(e).expect("profile and index share a dimension") + 0.0,
        })
        .collect();
    CandidateList::from_scores(profile.user.clone(), scored, k)
}

/// Seam for swapping in another recommender.
pub trait CandidateGenerator: Sync {
    fn candidates(&self, user: &UserId, history: &[Interaction], k: usize) -> Result<CandidateList, AffinityError>;
}

/// The content-embedding dot-product recommender.
pub struct ContentScorer<'a> {
    pub index: &'a ContentIndex,
}

impl CandidateGenerator for ContentScorer<'_> {
    fn candidates(&self, user: &UserId, history: &[Interaction], k: usize) -> Result<CandidateList, AffinityError> {
        let profile = build_profile(user, history, self.index)?;
        Ok(top_k(&profile, self.index, k))
    }
}

/// Candidate lists for every user with history, in ascending user order.
pub fn candidate_lists(
    generator: &dyn CandidateGenerator,
    histories: &BTreeMap<UserId, Vec<Interaction>>,
    k: usize,
) -> Result<Vec<CandidateList>, AffinityError> {
    let users: Vec<(&UserId, &Vec<Interaction>)> = histories.iter().collect();
    let lists: Vec<Result<CandidateList, AffinityError>> = users
        .par_iter()
        .map(|(user, history)| generator.candidates(user, history, k))
        .collect();
    lists.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn item(id: &str, title: &str, description: &str) -> Item {
        Item {
            id: id.into(),
            title: title.into(),
            authors: vec![],
            description: description.into(),
            genre_codes: vec![],
        }
    }

    fn toy_index(vectors: &[(&str, Vec<f64>)]) -> ContentIndex {
        let dim = vectors[0].1.len();
        ContentIndex::from_embeddings(
            dim,
            vectors.iter().map(|(id, _)| ItemId::from(*id)).collect(),
            vectors.iter().map(|(_, v)| Embedding::normalized(v.clone())).collect(),
        )
    }

    fn inter(item: &str, weight: f64) -> Interaction {
        Interaction {
            user: "u".into(),
            item: item.into(),
            weight,
        }
    }

    #[test]
    fn content_embedding_basics() {
        let blank = Item {
            genre_codes: vec![],
            ..item("a", " ", "")
        };
        assert!(item_content_embedding(&blank, 64).is_zero());
        let x = item("x", "Rivers", "A long journey down the great river to the sea.");
        assert_eq!(item_content_embedding(&x, 64), item_content_embedding(&x.clone(), 64));
    }

    #[test]
    fn shared_description_prefix_is_closer() {
        let prefix = "An orphaned girl travels across the frozen north to rescue her brother";
        let a = item("a", "North", &format!("{prefix}, guided by a bear."));
        let b = item("b", "South", &format!("{prefix}, helped by witches."));
        let c = item("c", "Ledger", "Quarterly accounting practices for small firms.");
        let [ea, eb, ec] = [&a, &b, &c].map(|i| item_content_embedding(i, 64));
        // Frozen from a direct dot-product computation over the same vectors.
        let ab: f64 = ea.values().iter().zip(eb.values()).map(|(x, y)| x * y).sum();
        let ac: f64 = ea.values().iter().zip(ec.values()).map(|(x, y)| x * y).sum();
        assert!(ab > ac, "{ab} vs {ac}");
        assert!(ab > 0.7);
    }

    #[test]
    fn profile_of_single_item_is_its_embedding() {
        let index = toy_index(&[("a", vec![3.0, 4.0, 0.0, 0.0]), ("b", vec![0.0, 0.0, 1.0, 0.0])]);
        let p = build_profile(&"u".into(), &[inter("a", 1.0)], &index).unwrap();
        assert_eq!(&p.embedding, index.embedding(&"a".into()).unwrap());
    }

    #[test]
    fn empty_history_is_cold_start() {
        let index = toy_index(&[("a", vec![1.0, 0.0])]);
        assert!(build_profile(&"u".into(), &[], &index).unwrap().embedding.is_zero());
        assert!(build_profile(&"u".into(), &[inter("a", 0.0)], &index).unwrap().embedding.is_zero());
    }

    #[test]
    fn weighted_profile_componentwise() {
        // e1 = (1,0,0,0), e2 = (0,0.6,0.8,0): e1 + 3*e2 = (1, 1.8, 2.4, 0), norm sqrt(1 + 3.24 + 5.76) = sqrt(10).
        let index = toy_index(&[("a", vec![1.0, 0.0, 0.0, 0.0]), ("b", vec![0.0, 0.6, 0.8, 0.0])]);
        let p = build_profile(&"u".into(), &[inter("a", 1.0), inter("b", 3.0)], &index).unwrap();
        let n = 10f64.sqrt();
        let expected = [1.0 / n, 1.8 / n, 2.4 / n, 0.0];
        for (got, want) in p.embedding.values().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_item_is_named() {
        let index = toy_index(&[("a", vec![1.0, 0.0])]);
        let err = build_profile(&"u".into(), &[inter("zz", 1.0)], &index).unwrap_err();
        assert!(err.to_string().contains("zz"));
    }

    #[test]
    fn top_k_clamps_and_ranks_self_first() {
        let index = toy_index(&[
            ("a", vec![1.0, 0.0, 0.0]),
            ("b", vec![0.0, 1.0, 0.0]),
            ("c", vec![0.0, 0.0, 1.0]),
        ]);
        let profile = build_profile(&"u".into(), &[inter("b", 1.0)], &index).unwrap();
        let cl = top_k(&profile, &index, 5);
        assert_eq!(cl.len(), 3);
        assert_eq!(cl.entries()[0].item_id.as_str(), "b");
        // Ties at zero resolve by id.
        assert_eq!(cl.entries()[1].item_id.as_str(), "a");
    }

    #[test]
    fn cold_start_orders_by_id() {
        let index = toy_index(&[("c", vec![1.0, 0.0]), ("a", vec![0.0, 1.0]), ("b", vec![1.0, 1.0])]);
        let profile = UserProfile {
            user: "u".into(),
            embedding: Embedding::zeros(2),
        };
        let cl = top_k(&profile, &index, 2);
        let ids: Vec<_> = cl.entries().iter().map(|c| c.item_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert!(cl.entries().iter().all(|c| c.score == 0.0));
    }

    #[test]
    fn candidate_list_validation() {
        let c = |id: &str, score| Candidate {
            item_id: id.into(),
            score,
        };
        assert!(CandidateList::new("u".into(), vec![c("a", 0.5), c("b", 0.5), c("c", 0.1)]).is_ok());
        assert!(CandidateList::new("u".into(), vec![c("b", 0.5), c("a", 0.5)]).is_err());
        assert!(CandidateList::new("u".into(), vec![c("a", 0.1), c("b", 0.5)]).is_err());
        assert!(CandidateList::new("u".into(), vec![c("a", 0.5), c("a", 0.4)]).is_err());
    }

    /// Exhaustive oracle over unit vectors: score each item by direct
    /// summation, then repeatedly extract the best remaining one.
    fn oracle_ranking(profile: &[f64], items: &[(String, Vec<f64>)], k: usize) -> Vec<String> {
        let mut remaining: Vec<(String, f64)> = items
            .iter()
            .map(|(id, v)| {
                let mut s = 0.0;
                for i in 0..v.len() {
                    s += v[i] * profile[i];
                }
                (id.clone(), s)
            })
            .collect();
        let mut out = Vec::new();
        while out.len() < k && !remaining.is_empty() {
            let mut best = 0;
            for i in 1..remaining.len() {
                let (ref id, s) = remaining[i];
                let (ref bid, bs) = remaining[best];
                if s > bs || (s == bs && id < bid) {
                    best = i;
                }
            }
            out.push(remaining.remove(best).0);
        }
        out
    }

    #[test]
    fn ten_item_ranking_matches_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let items: Vec<(String, Vec<f64>)> = (0..10)
            .map(|i| {
                let raw: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                (format!("item{i}"), Embedding::normalized(raw).values().to_vec())
            })
            .collect();
        let index = ContentIndex::from_embeddings(
            6,
            items.iter().map(|(id, _)| ItemId::from(id.as_str())).collect(),
            items.iter().map(|(_, v)| Embedding::normalized(v.clone())).collect(),
        );
        let profile = Embedding::normalized((0..6).map(|_| rng.random_range(-1.0..1.0)).collect());
        let cl = top_k(
            &UserProfile {
                user: "u".into(),
                embedding: profile.clone(),
            },
            &index,
            10,
        );
        let ids: Vec<String> = cl.entries().iter().map(|c| c.item_id.as_str().to_string()).collect();
        assert_eq!(ids, oracle_ranking(profile.values(), &items, 10));
    }

    proptest! {
        #[test]
        fn normalization_invariant_under_weight_scaling(
            weights in proptest::collection::vec(0.0f64..5.0, 1..6),
            c in 0.01f64..100.0,
        ) {
            let catalog = Catalog::new(
                (0..weights.len()).map(|i| item(&format!("i{i}"), &format!("Book number {i}"), &format!("story {} of the sea", i * 7))),
                std::iter::empty(),
            ).unwrap();
            let index = ContentIndex::new(&catalog, 32);
            let h1: Vec<_> = weights.iter().enumerate().map(|(i, w)| inter(&format!("i{i}"), *w)).collect();
            let h2: Vec<_> = weights.iter().enumerate().map(|(i, w)| inter(&format!("i{i}"), *w * c)).collect();
            let p1 = build_profile(&"u".into(), &h1, &index).unwrap();
            let p2 = build_profile(&"u".into(), &h2, &index).unwrap();
            for (a, b) in p1.embedding.values().iter().zip(p2.embedding.values()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            prop_assert!(p1.embedding.is_zero() || (p1.embedding.norm() - 1.0).abs() < 1e-9);
        }
    }
}

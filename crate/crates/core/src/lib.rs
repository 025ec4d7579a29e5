//! Descriptive shelves: personalized, diversified, titled recommendation
//! rows built from typed item descriptors.
//!
//! The pipeline runs candidate generation ([`affinity`]), title expansion
//! ([`templates`]), and shelf assembly ([`shelfgen`]) over a [`catalog`]
//! whose descriptors come from [`extraction`]. [`eval`] compares the result
//! with a single generic shelf under an equal slot budget, and [`corpus`]
//! generates seeded synthetic data for it.

pub mod affinity;
pub mod catalog;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod extraction;
pub mod shelfgen;
pub mod templates;

pub use affinity::{Candidate, CandidateList, Interaction, UserId};
pub use catalog::{canonicalize, Catalog, Descriptor, DescriptorSet, DescriptorType, Item, ItemId};
pub use embedding::{cosine_similarity, embed_text, Embedding};

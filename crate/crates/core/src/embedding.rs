//! Deterministic hashed character-trigram text embeddings and cosine
//! similarity.
//!
//! `embed_text` canonicalizes the input, slides a three-character window over
//! it, and hashes each trigram's UTF-8 bytes with 64-bit FNV-1a. The bucket is
//! `hash % dim`; the sign is `+1` when bit 63 of the hash is clear and `-1`
//! when it is set. The signed counts are then L2-normalized. Text shorter than
//! three characters (after canonicalization), or whose counts cancel to zero,
//! yields the zero vector.

use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::canonicalize;

pub const DEFAULT_DIM: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("embedding dimension mismatch: {left} vs {right}")]
pub struct DimensionMismatch {
    pub left: usize,
    pub right: usize,
}

/// A unit-length (or all-zero) real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Normalizes `values` to unit length; a zero vector stays zero.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = l2_norm(&values);
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        } else {
            values.iter_mut().for_each(|v| *v = 0.0);
        }
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn dot(&self, other: &Embedding) -> Result<f64, DimensionMismatch> {
        if self.dim() != other.dim() {
            return Err(DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(bytes);
    hasher.finish()
}

/// Hashed character-trigram embedding of `text`.
///
/// # Panics
/// If `dim < 2`.
pub fn embed_text(text: &str, dim: usize) -> Embedding {
    assert!(dim >= 2, "embedding dimension must be at least 2, got {dim}");
    let canonical = canonicalize(text);
    let chars: Vec<char> = canonical.chars().collect();
    let mut counts = vec![0.0; dim];
    let mut buf = String::with_capacity(12);
    for window in chars.windows(3) {
        buf.clear();
        buf.extend(window);
        let hash = fnv1a64(buf.as_bytes());
        let bucket = (hash % dim as u64) as usize;
        let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
        counts[bucket] += sign;
    }
    Embedding::normalized(counts)
}

/// Inner product of two unit vectors. Zero against any zero vector.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, DimensionMismatch> {
    let dot = a.dot(b)?;
    if a.is_zero() || b.is_zero() {
        return Ok(0.0);
    }
    Ok(dot.clamp(-1.0, 1.0))
}

//! Catalog data model: items, typed descriptors, and the loaded catalog.
//!
//! Items and descriptors are read from newline-delimited JSON. A loaded
//! [`Catalog`] is immutable and carries per-descriptor document frequencies
//! (number of items carrying each descriptor), which shelf ranking uses as
//! an inverse-document-frequency signal.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate item id `{0}`")]
    DuplicateItem(ItemId),
    #[error("descriptor references unknown item `{item_id}` (line {line})")]
    UnknownItem { item_id: ItemId, line: usize },
    #[error("invalid item: {0}")]
    InvalidItem(String),
    #[error("unknown descriptor type `{0}`")]
    UnknownDescriptorType(String),
    #[error("empty descriptor text")]
    EmptyDescriptor,
}

/// Opaque, non-empty item identifier. Ordering is plain string ordering and
/// is the tie-breaker used throughout ranking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(String);

impl ItemId {
    pub fn new(id: impl Into<String>) -> Result<Self, CatalogError> {
        let id = id.into();
        if id.is_empty() {
            return Err(CatalogError::InvalidItem("empty item id".into()));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    /// Panics on an empty string; use [`ItemId::new`] for untrusted input.
    fn from(s: &str) -> Self {
        Self::new(s).expect("item id must be non-empty")
    }
}

/// One catalog entry: the metadata an extraction backend sees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    pub title: String,
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub genre_codes: Vec<String>,
}

impl Item {
    fn validate(&self) -> Result<(), CatalogError> {
        if self.id.0.is_empty() {
            return Err(CatalogError::InvalidItem("empty item id".into()));
        }
        if self.title.trim().is_empty() {
            return Err(CatalogError::InvalidItem(format!("item `{}` has an empty title", self.id)));
        }
        Ok(())
    }
}

/// The closed descriptor taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DescriptorType {
    Genre,
    Theme,
    Character,
    Mood,
    Setting,
    PersonalSituation,
    StoryTrope,
    TargetAudience,
    Objective,
    NamedEntity,
}

impl DescriptorType {
    pub const COUNT: usize = 10;

    pub const ALL: [DescriptorType; Self::COUNT] = [
        DescriptorType::Genre,
        DescriptorType::Theme,
        DescriptorType::Character,
        DescriptorType::Mood,
        DescriptorType::Setting,
        DescriptorType::PersonalSituation,
        DescriptorType::StoryTrope,
        DescriptorType::TargetAudience,
        DescriptorType::Objective,
        DescriptorType::NamedEntity,
    ];

    /// Canonical serialization name, used in every file format.
    pub fn name(self) -> &'static str {
        match self {
            DescriptorType::Genre => "Genre",
            DescriptorType::Theme => "Theme",
            DescriptorType::Character => "Character",
            DescriptorType::Mood => "Mood",
            DescriptorType::Setting => "Setting",
            DescriptorType::PersonalSituation => "PersonalSituation",
            DescriptorType::StoryTrope => "StoryTrope",
            DescriptorType::TargetAudience => "TargetAudience",
            DescriptorType::Objective => "Objective",
            DescriptorType::NamedEntity => "NamedEntity",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DescriptorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DescriptorType {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DescriptorType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| CatalogError::UnknownDescriptorType(s.to_string()))
    }
}

/// Case-folds, trims, and collapses internal whitespace runs to one space.
///
/// Lowercasing is the per-character simple mapping; diacritics are kept.
pub fn canonicalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        for c in word.chars() {
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// A typed tag. Equality and hashing use `(dtype, canonical)` only, so
/// descriptors differing in case or spacing of their display text are equal.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawDescriptor", into = "RawDescriptor")]
pub struct Descriptor {
    dtype: DescriptorType,
    display: String,
    canonical: String,
}

#[derive(Serialize, Deserialize)]
struct RawDescriptor {
    #[serde(rename = "type")]
    dtype: DescriptorType,
    text: String,
}

impl TryFrom<RawDescriptor> for Descriptor {
    type Error = CatalogError;

    fn try_from(raw: RawDescriptor) -> Result<Self, Self::Error> {
        Descriptor::new(raw.dtype, &raw.text)
    }
}

impl From<Descriptor> for RawDescriptor {
    fn from(d: Descriptor) -> Self {
        RawDescriptor {
            dtype: d.dtype,
            text: d.display,
        }
    }
}

impl Descriptor {
    /// The display text is trimmed; text that canonicalizes to nothing is
    /// rejected.
    pub fn new(dtype: DescriptorType, display: &str) -> Result<Self, CatalogError> {
        let canonical = canonicalize(display);
        if canonical.is_empty() {
            return Err(CatalogError::EmptyDescriptor);
        }
        Ok(Self {
            dtype,
            display: display.trim().to_string(),
            canonical,
        })
    }

    pub fn dtype(&self) -> DescriptorType {
        self.dtype
    }

    pub fn display(&self) -> &str {
        &self.display
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }
}

impl PartialEq for Descriptor {
    fn eq(&self, other: &Self) -> bool {
        self.dtype == other.dtype && self.canonical == other.canonical
    }
}

impl Eq for Descriptor {}

impl Hash for Descriptor {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.dtype.hash(state);
        self.canonical.hash(state);
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.dtype, self.display)
    }
}

/// Per-item descriptors, one list per taxonomy type (lists may be empty).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DescriptorSet {
    lists: [Vec<Descriptor>; DescriptorType::COUNT],
}

static NO_DESCRIPTORS: DescriptorSet = DescriptorSet {
    lists: [const { Vec::new() }; DescriptorType::COUNT],
};

impl DescriptorSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, dtype: DescriptorType) -> &[Descriptor] {
        &self.lists[dtype.index()]
    }

    /// Appends unless an equal descriptor is already present. Returns whether
    /// it was inserted.
    pub fn insert(&mut self, descriptor: Descriptor) -> bool {
        let list = &mut self.lists[descriptor.dtype.index()];
        if list.contains(&descriptor) {
            return false;
        }
        list.push(descriptor);
        true
    }

    pub fn contains(&self, descriptor: &Descriptor) -> bool {
        self.get(descriptor.dtype).contains(descriptor)
    }

    pub fn contains_all<'a>(&self, descriptors: impl IntoIterator<Item = &'a Descriptor>) -> bool {
        descriptors.into_iter().all(|d| self.contains(d))
    }

    /// Removes every descriptor of `dtype` matching `pred`, returning them.
    pub fn remove_where(
        &mut self,
        dtype: DescriptorType,
        mut pred: impl FnMut(&Descriptor) -> bool,
    ) -> Vec<Descriptor> {
        let list = &mut self.lists[dtype.index()];
        let (removed, kept) = std::mem::take(list).into_iter().partition(|d| pred(d));
        *list = kept;
        removed
    }

    /// All descriptors in taxonomy order, then insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &Descriptor> {
        self.lists.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.iter().all(Vec::is_empty)
    }
}

impl FromIterator<Descriptor> for DescriptorSet {
    fn from_iter<I: IntoIterator<Item = Descriptor>>(iter: I) -> Self {
        let mut set = DescriptorSet::new();
        for d in iter {
            set.insert(d);
        }
        set
    }
}

/// One line of the descriptors file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorRecord {
    pub item_id: ItemId,
    #[serde(rename = "type")]
    pub dtype: String,
    pub text: String,
}

/// An immutable, validated catalog.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    items: BTreeMap<ItemId, Item>,
    descriptors: BTreeMap<ItemId, DescriptorSet>,
    document_frequency: HashMap<(DescriptorType, String), usize>,
}

impl Catalog {
    pub fn new(
        items: impl IntoIterator<Item = Item>,
        descriptors: impl IntoIterator<Item = (ItemId, Descriptor)>,
    ) -> Result<Self, CatalogError> {
        let mut catalog = Catalog::default();
        for item in items {
            item.validate()?;
            if catalog.items.contains_key(&item.id) {
                return Err(CatalogError::DuplicateItem(item.id));
            }
            catalog.items.insert(item.id.clone(), item);
        }
        for (line, (item_id, descriptor)) in descriptors.into_iter().enumerate() {
            catalog.attach(item_id, descriptor, line + 1)?;
        }
        catalog.document_frequency = catalog.recompute_document_frequencies();
        Ok(catalog)
    }

    /// Builds a catalog from per-item descriptor sets.
    pub fn from_sets(
        items: impl IntoIterator<Item = Item>,
        sets: impl IntoIterator<Item = (ItemId, DescriptorSet)>,
    ) -> Result<Self, CatalogError> {
        let mut pairs = Vec::new();
        for (id, set) in sets {
            pairs.extend(set.iter().cloned().map(|d| (id.clone(), d)));
        }
        Self::new(items, pairs)
    }

    fn attach(&mut self, item_id: ItemId, descriptor: Descriptor, line: usize) -> Result<(), CatalogError> {
        if !self.items.contains_key(&item_id) {
            return Err(CatalogError::UnknownItem { item_id, line });
        }
        self.descriptors.entry(item_id).or_default().insert(descriptor);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, id: &ItemId) -> Option<&Item> {
        self.items.get(id)
    }

    /// Items in ascending id order.
    pub fn items(&self) -> impl Iterator<Item = &Item> {
        self.items.values()
    }

    /// Descriptors of an item; all-empty for items without any.
    pub fn descriptors(&self, id: &ItemId) -> &DescriptorSet {
        self.descriptors.get(id).unwrap_or(&NO_DESCRIPTORS)
    }

    /// Number of items carrying the descriptor.
    pub fn document_frequency(&self, descriptor: &Descriptor) -> usize {
        self.document_frequency
            .get(&(descriptor.dtype, descriptor.canonical.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn document_frequencies(&self) -> &HashMap<(DescriptorType, String), usize> {
        &self.document_frequency
    }

    /// Counts items per descriptor from the stored sets.
    pub fn recompute_document_frequencies(&self) -> HashMap<(DescriptorType, String), usize> {
        let mut df = HashMap::new();
        for set in self.descriptors.values() {
            for d in set.iter() {
                *df.entry((d.dtype, d.canonical.clone())).or_insert(0) += 1;
            }
        }
        df
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CatalogError> {
    File::open(path).map(BufReader::new).map_err(|source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads newline-delimited JSON records, skipping blank lines. Yields
/// `(line_number, record)`.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, CatalogError> {
    let mut out = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|source| CatalogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CatalogError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push((idx + 1, record));
    }
    Ok(out)
}

/// Serializes records one per line.
pub fn write_jsonl<T: Serialize>(mut out: impl Write, records: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn load_items(path: &Path) -> Result<Vec<Item>, CatalogError> {
    let mut items = Vec::new();
    for (line, item) in read_jsonl::<Item>(path)? {
        item.validate().map_err(|e| CatalogError::Malformed {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

pub fn load_descriptor_records(path: &Path) -> Result<Vec<(usize, DescriptorRecord)>, CatalogError> {
    read_jsonl(path)
}

/// Loads and validates a catalog from the items and descriptors files.
pub fn load_catalog(items_path: &Path, descriptors_path: &Path) -> Result<Catalog, CatalogError> {
    let items = load_items(items_path)?;
    let mut catalog = Catalog::new(items, std::iter::empty())?;
    for (line, record) in load_descriptor_records(descriptors_path)? {
        let malformed = |message: String| CatalogError::Malformed {
            path: descriptors_path.to_path_buf(),
            line,
            message,
        };
        let dtype: DescriptorType = record.dtype.parse().map_err(|e: CatalogError| malformed(e.to_string()))?;
        let descriptor = Descriptor::new(dtype, &record.text).map_err(|e| malformed(e.to_string()))?;
        catalog.attach(record.item_id, descriptor, line)?;
    }
    catalog.document_frequency = catalog.recompute_document_frequencies();
    Ok(catalog)
}

/// Flattens descriptor sets into file records, ordered by item id then
/// taxonomy order.
pub fn descriptor_records<'a>(
    sets: impl IntoIterator<Item = (&'a ItemId, &'a DescriptorSet)>,
) -> Vec<DescriptorRecord> {
    let mut out = Vec::new();
    for (id, set) in sets {
        for d in set.iter() {
            out.push(DescriptorRecord {
                item_id: id.clone(),
                dtype: d.dtype.name().to_string(),
                text: d.display.clone(),
            });
        }
    }
    out
}

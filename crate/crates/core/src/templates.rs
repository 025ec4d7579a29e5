//! Shelf title candidates: single descriptors and slot-filling combinations
//! such as `<Mood>+<Genre>` ("Emotional Romance"), plus final decoration.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{canonicalize, Descriptor, DescriptorSet, DescriptorType};

pub const DEFAULT_HEADER: &str = "Audiobooks for you";
pub const DEFAULT_MAX_TITLE_CHARS: usize = 40;
pub const MAX_SLOTS: usize = 2;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template must have 1..={MAX_SLOTS} slots, got {0}")]
    SlotCount(usize),
    #[error("max_title_chars must be at least 8, got {0}")]
    TitleLimit(usize),
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

fn default_joiner() -> String {
    " ".to_string()
}

/// An ordered list of descriptor-type slots, filled left to right.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate")]
pub struct TemplateSpec {
    pub slots: Vec<DescriptorType>,
    pub joiner: String,
    pub suffix: String,
}

#[derive(Deserialize)]
struct RawTemplate {
    slots: Vec<DescriptorType>,
    #[serde(default = "default_joiner")]
    joiner: String,
    #[serde(default)]
    suffix: String,
}

impl TryFrom<RawTemplate> for TemplateSpec {
    type Error = TemplateError;

    fn try_from(raw: RawTemplate) -> Result<Self, Self::Error> {
        TemplateSpec::with_options(raw.slots, raw.joiner, raw.suffix)
    }
}

impl TemplateSpec {
    pub fn new(slots: Vec<DescriptorType>) -> Result<Self, TemplateError> {
        Self::with_options(slots, default_joiner(), String::new())
    }

    pub fn with_options(
        slots: Vec<DescriptorType>,
        joiner: impl Into<String>,
        suffix: impl Into<String>,
    ) -> Result<Self, TemplateError> {
        if slots.is_empty() || slots.len() > MAX_SLOTS {
            return Err(TemplateError::SlotCount(slots.len()));
        }
        Ok(Self {
            slots,
            joiner: joiner.into(),
            suffix: suffix.into(),
        })
    }

    pub fn single(dtype: DescriptorType) -> Self {
        Self::new(vec![dtype]).expect("one slot is valid")
    }

    pub fn pair(first: DescriptorType, second: DescriptorType) -> Self {
        Self::new(vec![first, second]).expect("two slots is valid")
    }

    pub fn with_suffix(mut self, suffix: impl Into<String>) -> Self {
        self.suffix = suffix.into();
        self
    }

    /// Joins the source displays; surrounding whitespace is trimmed.
    pub fn assemble(&self, source: &[Descriptor]) -> String {
        let parts: Vec<&str> = source.iter().map(Descriptor::display).collect();
        parts.join(&self.joiner).trim().to_string()
    }
}

/// The template set shipped by default. Moods only appear combined with a
/// genre; on their own they say little about a shelf.
pub fn default_templates() -> Vec<TemplateSpec> {
    use DescriptorType::*;
    vec![
        TemplateSpec::pair(Mood, Genre),
        TemplateSpec::single(Genre),
        TemplateSpec::single(Theme).with_suffix(" Audiobooks"),
        TemplateSpec::single(Character),
        TemplateSpec::single(Setting),
        TemplateSpec::single(PersonalSituation).with_suffix(" Audiobooks"),
        TemplateSpec::single(StoryTrope),
        TemplateSpec::single(TargetAudience),
        TemplateSpec::single(Objective),
    ]
}

pub fn load_templates(path: &Path) -> Result<Vec<TemplateSpec>, TemplateError> {
    let file_err = |message: String| TemplateError::File {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))
}

/// A candidate shelf title and the descriptors it was assembled from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TitleCandidate {
    display: String,
    canonical: String,
    source: Vec<Descriptor>,
    template: TemplateSpec,
}

impl TitleCandidate {
    /// Returns `None` when the source does not fit the template's slots or
    /// assembles to an empty title.
    pub fn assemble(template: &TemplateSpec, source: Vec<Descriptor>) -> Option<Self> {
        if source.len() != template.slots.len()
            || source.iter().zip(&template.slots).any(|(d, t)| d.dtype() != *t)
        {
            return None;
        }
        let display = template.assemble(&source);
        let canonical = canonicalize(&display);
        if canonical.is_empty() {
            return None;
        }
        Some(Self {
            display,
            canonical,
            source,
            template: template.clone(),
        })
    }

    pub fn display(&self) -> &str {
        &self.display
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn source(&self) -> &[Descriptor] {
        &self.source
    }

    pub fn template(&self) -> &TemplateSpec {
        &self.template
    }
}

/// Every title the templates can build from one item's descriptors, in
/// template order then descriptor order, deduplicated by canonical display.
pub fn expand_titles(dset: &DescriptorSet, templates: &[TemplateSpec]) -> Vec<TitleCandidate> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for template in templates {
        let mut partials: Vec<Vec<Descriptor>> = vec![Vec::new()];
        for slot in &template.slots {
            let options = dset.get(*slot);
            partials = partials
                .iter()
                .flat_map(|prefix| {
                    options.iter().map(move |d| {
                        let mut next = prefix.clone();
                        next.push(d.clone());
                        next
                    })
                })
                .collect();
        }
        for source in partials {
            if let Some(candidate) = TitleCandidate::assemble(template, source) {
                if seen.insert(candidate.canonical.clone()) {
                    out.push(candidate);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecorationConfig {
    #[serde(default = "default_header")]
    pub header: String,
    #[serde(default = "default_max_title_chars")]
    pub max_title_chars: usize,
}

fn default_header() -> String {
    DEFAULT_HEADER.to_string()
}

fn default_max_title_chars() -> usize {
    DEFAULT_MAX_TITLE_CHARS
}

impl Default for DecorationConfig {
    fn default() -> Self {
        Self {
            header: default_header(),
            max_title_chars: DEFAULT_MAX_TITLE_CHARS,
        }
    }
}

impl DecorationConfig {
    pub fn validate(&self) -> Result<(), TemplateError> {
        if self.max_title_chars < 8 {
            return Err(TemplateError::TitleLimit(self.max_title_chars));
        }
        Ok(())
    }
}

/// The title as shown: a small header line above the shelf name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoratedTitle {
    pub header: String,
    pub display: String,
}

/// Applies the template suffix and header. `None` when the display would
/// exceed `max_title_chars` characters.
pub fn decorate(candidate: &TitleCandidate, cfg: &DecorationConfig) -> Option<DecoratedTitle> {
    let display = format!("{}{}", candidate.display, candidate.template.suffix);
    if display.chars().count() > cfg.max_title_chars {
        return None;
    }
    Some(DecoratedTitle {
        header: cfg.header.clone(),
        display,
    })
}

//! Seeded synthetic corpus: items with descriptors, users with interest
//! mixtures, and their interactions.
//!
//! Each item draws, per descriptor type, a count uniformly from the
//! configured `[min, max]` range and that many distinct descriptors from the
//! first `vocab_size` entries of the type's vocabulary, with Zipf-like
//! popularity `1 / rank^zipf_exponent`. Descriptor texts are written into the
//! description, so the lexicon returned alongside the corpus recovers them.
//! Each user picks interest descriptors with a separate popularity exponent
//! and interacts with items carrying them.

use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::{Interaction, UserId};
use crate::catalog::{Descriptor, DescriptorSet, DescriptorType, Item, ItemId};
use crate::extraction::LexiconEntry;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("vocabulary size {requested} for {dtype} exceeds the {available} built-in entries")]
    VocabTooLarge {
        dtype: DescriptorType,
        requested: usize,
        available: usize,
    },
    #[error("invalid range for {0}: min exceeds max")]
    Range(String),
    #[error("exponents must be finite and non-negative")]
    Exponent,
}

const GENRES: &[(&str, &str)] = &[
    ("FIC027000", "Romance"),
    ("FIC022000", "Mystery"),
    ("FIC028000", "Science Fiction"),
    ("FIC009000", "Fantasy"),
    ("FIC031000", "Thriller"),
    ("JUV000000", "Juvenile Fiction"),
    ("BIO000000", "Biography"),
    ("HIS000000", "History"),
    ("SEL000000", "Self-Help"),
    ("TRU000000", "True Crime"),
    ("FIC014000", "Historical Fiction"),
    ("FIC015000", "Horror"),
    ("FIC016000", "Humor"),
    ("FIC044000", "Women's Fiction"),
    ("BUS000000", "Business"),
    ("SCI000000", "Popular Science"),
    ("PSY000000", "Psychology"),
    ("POL000000", "Politics"),
    ("YAF000000", "Young Adult Fiction"),
    ("FOR000000", "Language Learning"),
];

const THEMES: &[&str] = &[
    "Overcoming Obstacles",
    "Global Politics",
    "Family Secrets",
    "Friendship",
    "Coming of Age",
    "Redemption",
    "Survival",
    "Identity",
    "Revenge",
    "Forbidden Love",
    "Climate Change",
    "Artificial Intelligence",
    "Grief and Healing",
    "Power and Corruption",
    "Immigration",
    "Mental Health",
    "Sisterhood",
    "War and Peace",
    "Ambition",
    "Second Chances",
    "Small Town Life",
    "Space Exploration",
    "Social Justice",
    "Faith and Doubt",
    "Betrayal",
    "Entrepreneurship",
    "Parenthood",
    "Memory",
    "Wealth and Class",
    "Nature and Wilderness",
    "Music",
    "Sports",
    "Food and Cooking",
    "Addiction",
    "Loyalty",
    "Freedom",
    "Exile",
    "Scientific Discovery",
    "Heists",
    "Espionage",
];

const CHARACTERS: &[&str] = &[
    "Female Protagonist",
    "Unreliable Narrator",
    "Reluctant Hero",
    "Morally Grey Lead",
    "Detective Duo",
    "Strong Heroine",
    "Anti-Hero",
    "Ensemble Cast",
    "Young Narrator",
    "Elderly Protagonist",
    "Brilliant Scientist",
    "Grumpy Loner",
    "Charming Rogue",
    "Chosen One",
    "Single Parent",
    "Outsider",
    "Retired Spy",
    "Witty Sidekick",
    "Villain Narrator",
    "Found Family",
];

const MOODS: &[&str] = &[
    "Emotional",
    "Uplifting",
    "Adventurous",
    "Dark",
    "Funny",
    "Tense",
    "Hopeful",
    "Reflective",
    "Cozy",
    "Mysterious",
    "Inspiring",
    "Heartwarming",
    "Suspenseful",
    "Brilliant",
    "Powerful",
    "Bittersweet",
    "Whimsical",
    "Haunting",
    "Romantic",
    "Lighthearted",
];

const SETTINGS: &[&str] = &[
    "China's Cultural Revolution",
    "Victorian London",
    "Outer Space",
    "Small Coastal Town",
    "New York City",
    "Medieval Europe",
    "World War II",
    "Ancient Rome",
    "The American West",
    "Tokyo",
    "A Boarding School",
    "The Arctic",
    "Post-Apocalyptic Earth",
    "Paris in the 1920s",
    "A Royal Court",
    "The Deep Ocean",
    "Rural Ireland",
    "Silicon Valley",
    "The Amazon Rainforest",
    "A Haunted Manor",
    "Mars Colony",
    "Ancient Egypt",
    "Cold War Berlin",
    "A Desert Island",
    "Feudal Japan",
];

const SITUATIONS: &[&str] = &[
    "Dealing with Loss",
    "Starting Over",
    "Career Change",
    "New Parenthood",
    "Divorce",
    "Burnout",
    "Moving Abroad",
    "Retirement",
    "Chronic Illness",
    "First Love",
    "Loneliness",
    "Graduation",
    "Caring for a Parent",
    "Recovery",
    "Financial Stress",
    "Finding Purpose",
    "Heartbreak",
    "Midlife Crisis",
    "Coming Out",
    "Building Confidence",
];

const TROPES: &[&str] = &[
    "Enemies to Lovers",
    "Friends to Lovers",
    "Fake Dating",
    "Locked Room Mystery",
    "Chosen One Prophecy",
    "Time Travel",
    "Heist Gone Wrong",
    "Second Chance Romance",
    "Fish Out of Water",
    "Quest",
    "Hidden Identity",
    "Forced Proximity",
    "Rags to Riches",
    "Unlikely Allies",
    "Race Against Time",
    "Secret Society",
    "Love Triangle",
    "Whodunit",
    "Rivals to Partners",
    "Portal Fantasy",
    "Small Town Return",
    "Mentor's Death",
    "Dual Timeline",
    "Body Swap",
    "The Long Con",
];

const AUDIENCES: &[&str] = &[
    "Children's Literature",
    "Young Adults",
    "Adult Readers",
    "New Adults",
    "Middle Grade",
    "Professionals",
    "Students",
    "Parents",
    "Seniors",
    "Book Clubs",
];

const OBJECTIVES: &[&str] = &[
    "Learn Japanese",
    "Learn Spanish",
    "Build Better Habits",
    "Improve Productivity",
    "Manage Money",
    "Lead a Team",
    "Practice Mindfulness",
    "Sleep Better",
    "Get Fit",
    "Start a Business",
    "Understand the Economy",
    "Learn to Invest",
    "Speak in Public",
    "Write Fiction",
    "Negotiate Better",
];

const ENTITIES: &[&str] = &[
    "Britney Spears",
    "Abraham Lincoln",
    "Marie Curie",
    "Napoleon Bonaparte",
    "Cleopatra",
    "Albert Einstein",
    "Frida Kahlo",
    "Winston Churchill",
    "Ada Lovelace",
    "Nelson Mandela",
    "The Beatles",
    "NASA",
    "The Roman Empire",
    "Leonardo da Vinci",
    "Serena Williams",
    "Charles Darwin",
    "Harriet Tubman",
    "Genghis Khan",
    "Amelia Earhart",
    "Nikola Tesla",
];

const TITLE_ADJECTIVES: &[&str] = &[
    "Silent", "Golden", "Broken", "Hidden", "Last", "Burning", "Quiet", "Wild", "Distant", "Crimson", "Hollow",
    "Bright", "Lost", "Endless", "Secret", "Northern",
];

const TITLE_NOUNS: &[&str] = &[
    "River", "Garden", "Crown", "Letter", "Harbor", "Mountain", "Promise", "Shadow", "Kingdom", "Orchard",
    "Lighthouse", "Mirror", "Road", "Winter", "Signal", "Atlas",
];

const FIRST_NAMES: &[&str] = &[
    "Ana", "Ben", "Chloe", "Dev", "Elena", "Felix", "Grace", "Hiro", "Iris", "Jonah", "Kara", "Liam", "Maya", "Noor",
    "Omar", "Priya",
];

const LAST_NAMES: &[&str] = &[
    "Alder", "Brook", "Castell", "Dunmore", "Ellery", "Fairfax", "Grove", "Hallam", "Ingram", "Jessop", "Keane",
    "Lowell", "Marsh", "Nyland", "Orrin", "Pryce",
];

/// Built-in vocabulary of a type, most popular first.
pub fn vocabulary(dtype: DescriptorType) -> Vec<&'static str> {
    match dtype {
        DescriptorType::Genre => GENRES.iter().map(|(_, g)| *g).collect(),
        DescriptorType::Theme => THEMES.to_vec(),
        DescriptorType::Character => CHARACTERS.to_vec(),
        DescriptorType::Mood => MOODS.to_vec(),
        DescriptorType::Setting => SETTINGS.to_vec(),
        DescriptorType::PersonalSituation => SITUATIONS.to_vec(),
        DescriptorType::StoryTrope => TROPES.to_vec(),
        DescriptorType::TargetAudience => AUDIENCES.to_vec(),
        DescriptorType::Objective => OBJECTIVES.to_vec(),
        DescriptorType::NamedEntity => ENTITIES.to_vec(),
    }
}

/// Genre code to genre name for the built-in genres.
pub fn genre_code_map() -> BTreeMap<String, String> {
    GENRES.iter().map(|(c, g)| (c.to_string(), g.to_string())).collect()
}

fn default_per_item() -> BTreeMap<DescriptorType, (usize, usize)> {
    use DescriptorType::*;
    BTreeMap::from([
        (Genre, (1, 2)),
        (Theme, (1, 3)),
        (Character, (0, 2)),
        (Mood, (1, 2)),
        (Setting, (0, 1)),
        (PersonalSituation, (0, 1)),
        (StoryTrope, (0, 2)),
        (TargetAudience, (1, 1)),
        (Objective, (0, 1)),
        (NamedEntity, (0, 1)),
    ])
}

fn default_vocab_sizes() -> BTreeMap<DescriptorType, usize> {
    DescriptorType::ALL.into_iter().map(|t| (t, vocabulary(t).len())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub item_count: usize,
    pub user_count: usize,
    /// Entries used per type, taken from the front of the vocabulary.
    pub vocab_sizes: BTreeMap<DescriptorType, usize>,
    /// Inclusive descriptor-count range per item and type.
    pub per_item: BTreeMap<DescriptorType, (usize, usize)>,
    pub zipf_exponent: f64,
    /// Popularity exponent for user interests; 0 picks them uniformly.
    pub interest_exponent: f64,
    pub interests_per_user: (usize, usize),
    pub interactions_per_user: (usize, usize),
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            item_count: 1000,
            user_count: 200,
            vocab_sizes: default_vocab_sizes(),
            per_item: default_per_item(),
            zipf_exponent: 1.0,
            interest_exponent: 0.0,
            interests_per_user: (1, 3),
            interactions_per_user: (3, 12),
        }
    }
}

impl CorpusConfig {
    pub fn vocab_size(&self, dtype: DescriptorType) -> usize {
        self.vocab_sizes
            .get(&dtype)
            .copied()
            .unwrap_or_else(|| vocabulary(dtype).len())
    }

    pub fn count_range(&self, dtype: DescriptorType) -> (usize, usize) {
        self.per_item.get(&dtype).copied().unwrap_or((0, 0))
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for t in DescriptorType::ALL {
            let available = vocabulary(t).len();
            let requested = self.vocab_size(t);
            if requested > available {
                return Err(CorpusError::VocabTooLarge {
                    dtype: t,
                    requested,
                    available,
                });
            }
            let (lo, hi) = self.count_range(t);
            if lo > hi {
                return Err(CorpusError::Range(t.to_string()));
            }
        }
        if self.interests_per_user.0 > self.interests_per_user.1 {
            return Err(CorpusError::Range("interests_per_user".into()));
        }
        if self.interactions_per_user.0 > self.interactions_per_user.1 {
            return Err(CorpusError::Range("interactions_per_user".into()));
        }
        let ok = |e: f64| e.is_finite() && e >= 0.0;
        if !(ok(self.zipf_exponent) && ok(self.interest_exponent)) {
            return Err(CorpusError::Exponent);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub items: Vec<Item>,
    pub descriptors: BTreeMap<ItemId, DescriptorSet>,
    pub interactions: Vec<Interaction>,
    /// Recovers every generated descriptor from item text.
    pub lexicon: Vec<LexiconEntry>,
    pub genre_code_map: BTreeMap<String, String>,
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|r| 1.0 / (r as f64).powf(exponent)).collect()
}

/// Draws `k` distinct indices, each by popularity among those not yet drawn.
fn sample_distinct(rng: &mut ChaCha8Rng, weights: &[f64], k: usize) -> Vec<usize> {
    let mut w = weights.to_vec();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(w.len()) {
        let Ok(dist) = WeightedIndex::new(&w) else {
            break;
        };
        let i = dist.sample(rng);
        out.push(i);
        w[i] = 0.0;
    }
    out
}

/// Descriptor texts in taxonomy order, as a short blurb.
fn describe(set: &DescriptorSet) -> String {
    let parts: Vec<&str> = set.iter().map(Descriptor::display).collect();
    if parts.is_empty() {
        String::new()
    } else {
        format!("{}.", parts.join(", "))
    }
}

/// Generates a corpus; identical `(cfg, seed)` give identical output.
pub fn generate(cfg: &CorpusConfig, seed: u64) -> Result<Corpus, CorpusError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codes: HashMap<&str, &str> = GENRES.iter().map(|(c, g)| (*g, *c)).collect();
    let vocab: BTreeMap<DescriptorType, Vec<Descriptor>> = DescriptorType::ALL
        .into_iter()
        .map(|t| {
            let ds = vocabulary(t)
                .into_iter()
                .take(cfg.vocab_size(t))
                .map(|s| Descriptor::new(t, s).expect("built-in vocabulary is non-empty"))
                .collect();
            (t, ds)
        })
        .collect();

    let width = cfg.item_count.max(1).to_string().len().max(4);
    let mut items = Vec::with_capacity(cfg.item_count);
    let mut descriptors = BTreeMap::new();
    for i in 0..cfg.item_count {
        let id = ItemId::new(format!("item-{i:0width$}")).expect("non-empty");
        let mut set = DescriptorSet::new();
        for t in DescriptorType::ALL {
            let pool = &vocab[&t];
            let (lo, hi) = cfg.count_range(t);
            let k = rng.random_range(lo..=hi).min(pool.len());
            for idx in sample_distinct(&mut rng, &zipf_weights(pool.len(), cfg.zipf_exponent), k) {
                set.insert(pool[idx].clone());
            }
        }
        let title = format!(
            "The {} {}",
            TITLE_ADJECTIVES.choose(&mut rng).expect("non-empty"),
            TITLE_NOUNS.choose(&mut rng).expect("non-empty")
        );
        let author_count = rng.random_range(1..=2);
        let authors = (0..author_count)
            .map(|_| {
                format!(
                    "{} {}",
                    FIRST_NAMES.choose(&mut rng).expect("non-empty"),
                    LAST_NAMES.choose(&mut rng).expect("non-empty")
                )
            })
            .collect();
        let genre_codes = set
            .get(DescriptorType::Genre)
            .iter()
            .filter_map(|g| codes.get(g.display()).map(|c| c.to_string()))
            .collect();
        items.push(Item {
            id: id.clone(),
            title,
            authors,
            description: describe(&set),
            genre_codes,
        });
        descriptors.insert(id, set);
    }

    // Users draw interests from the types most shelves are built on.
    let interest_types = [
        DescriptorType::Theme,
        DescriptorType::Genre,
        DescriptorType::Setting,
        DescriptorType::StoryTrope,
        DescriptorType::PersonalSituation,
    ];
    let mut carriers: HashMap<&Descriptor, Vec<&ItemId>> = HashMap::new();
    for (id, set) in &descriptors {
        for d in set.iter() {
            carriers.entry(d).or_default().push(id);
        }
    }
    let mut interactions = Vec::new();
    let width = cfg.user_count.max(1).to_string().len().max(4);
    for u in 0..cfg.user_count {
        let user = UserId::new(format!("user-{u:0width$}")).expect("non-empty");
        let n_interests = rng.random_range(cfg.interests_per_user.0..=cfg.interests_per_user.1);
        let mut interests = Vec::new();
        for _ in 0..n_interests {
            let t = *interest_types.choose(&mut rng).expect("non-empty");
            let pool = &vocab[&t];
            if let Some(&idx) = sample_distinct(&mut rng, &zipf_weights(pool.len(), cfg.interest_exponent), 1).first() {
                interests.push(&pool[idx]);
            }
        }
        let mut reachable: Vec<&ItemId> = interests
            .iter()
            .flat_map(|d| carriers.get(d).into_iter().flatten().copied())
            .collect();
        reachable.sort();
        reachable.dedup();
        if reachable.is_empty() {
            continue;
        }
        let n = rng
            .random_range(cfg.interactions_per_user.0..=cfg.interactions_per_user.1)
            .min(reachable.len());
        for id in reachable.choose_multiple(&mut rng, n) {
            interactions.push(Interaction {
                user: user.clone(),
                item: (*id).clone(),
                weight: f64::from(rng.random_range(1u32..=5)),
            });
        }
    }

    let lexicon = vocab
        .values()
        .flatten()
        .map(|d| LexiconEntry {
            pattern: d.canonical().to_string(),
            dtype: d.dtype(),
            display: d.display().to_string(),
        })
        .collect();
    Ok(Corpus {
        items,
        descriptors,
        interactions,
        lexicon,
        genre_code_map: genre_code_map(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabularies_fit_title_limits() {
        for t in DescriptorType::ALL {
            for s in vocabulary(t) {
                assert!(s.len() + " Audiobooks".len() <= 40, "{s}");
            }
        }
        for m in MOODS {
            for (_, g) in GENRES {
                assert!(m.len() + 1 + g.len() <= 40);
            }
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let cfg = CorpusConfig {
            item_count: 50,
            user_count: 10,
            ..CorpusConfig::default()
        };
        assert_eq!(generate(&cfg, 42).unwrap(), generate(&cfg, 42).unwrap());
        assert_ne!(generate(&cfg, 42).unwrap().items, generate(&cfg, 43).unwrap().items);
    }

    #[test]
    fn empty_corpus() {
        let cfg = CorpusConfig {
            item_count: 0,
            ..CorpusConfig::default()
        };
        let c = generate(&cfg, 1).unwrap();
        assert!(c.items.is_empty() && c.interactions.is_empty() && c.descriptors.is_empty());
    }

    #[test]
    fn rejects_oversized_vocabulary() {
        let mut cfg = CorpusConfig::default();
        cfg.vocab_sizes.insert(DescriptorType::Mood, 999);
        assert!(matches!(generate(&cfg, 1), Err(CorpusError::VocabTooLarge { .. })));
        let mut cfg = CorpusConfig::default();
        cfg.per_item.insert(DescriptorType::Mood, (3, 1));
        assert!(generate(&cfg, 1).is_err());
    }
}

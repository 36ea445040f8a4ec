//! MCQ data model: ingestion with the option-length filter, seeded splits,
//! the deduplicated distractor pool, language identification and the
//! synthetic corpus generator.

mod lang;
mod synth;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textres::tokenize;

pub use lang::{detect_language, LanguageModel, LanguagePosterior, DEFAULT_LANGUAGES};
pub use synth::{generate_synthetic, SynthConfig};

/// Maximum number of tokens an option may have to survive ingestion.
pub const MAX_OPTION_TOKENS: usize = 6;

/// Canonical form used for every surface comparison: casefold, trim and
/// collapse internal whitespace.
pub fn normalize_surface(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// One multiple-choice question with exactly one key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqItem {
    pub id: String,
    pub stem: String,
    pub key: String,
    pub distractors: Vec<String>,
    #[serde(default)]
    pub language: Option<String>,
    #[serde(default)]
    pub subject: Option<String>,
}

impl McqItem {
    /// Key followed by distractors.
    pub fn options(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.key.as_str()).chain(self.distractors.iter().map(String::as_str))
    }
}

/// Raw record as found in JSONL input; fields are validated by [`ingest`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct McqRecord {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub stem: Option<String>,
    #[serde(default)]
    pub key: Option<String>,
    #[serde(default)]
    pub distractors: Vec<String>,
    #[serde(default)]
    pub language: Option<String>,
    #[serde(default)]
    pub subject: Option<String>,
}

impl From<&McqItem> for McqRecord {
    fn from(item: &McqItem) -> Self {
        McqRecord {
            id: Some(item.id.clone()),
            stem: Some(item.stem.clone()),
            key: Some(item.key.clone()),
            distractors: item.distractors.clone(),
            language: item.language.clone(),
            subject: item.subject.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetadata {
    pub source: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub items: Vec<McqItem>,
    pub metadata: CorpusMetadata,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&McqItem> {
        self.items.iter().find(|it| it.id == id)
    }

    /// Loads a JSONL file and runs it through [`ingest`].
    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Corpus> {
        let path = path.as_ref();
        let records: Vec<McqRecord> = crate::io::read_jsonl(path)?;
        ingest(records, &path.display().to_string())
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_jsonl(path, &self.items)
    }
}

/// Validates raw records and applies the option filters.
///
/// Distractors with more than [`MAX_OPTION_TOKENS`] tokens, duplicates and
/// distractors equal to the key are removed; items left without distractors
/// are dropped.
pub fn ingest(records: impl IntoIterator<Item = McqRecord>, source: &str) -> Result<Corpus> {
    let mut items = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut dropped = 0usize;
    for (index, rec) in records.into_iter().enumerate() {
        let stem = rec
            .stem
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| Error::MalformedRecord {
                index,
                reason: "missing stem".into(),
            })?;
        let key = rec
            .key
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| Error::MalformedRecord {
                index,
                reason: "missing key".into(),
            })?;
        let id = rec.id.unwrap_or_else(|| format!("item-{index}"));
        if !seen_ids.insert(id.clone()) {
            return Err(Error::MalformedRecord {
                index,
                reason: format!("duplicate id {id:?}"),
            });
        }
        let key_norm = normalize_surface(&key);
        let mut kept = Vec::new();
        let mut kept_norm = HashSet::new();
        for d in rec.distractors {
            let norm = normalize_surface(&d);
            if norm.is_empty() || norm == key_norm {
                continue;
            }
            if tokenize(&d).len() > MAX_OPTION_TOKENS {
                continue;
            }
            if kept_norm.insert(norm) {
                kept.push(d.trim().to_string());
            }
        }
        if kept.is_empty() {
            dropped += 1;
            continue;
        }
        items.push(McqItem {
            id,
            stem: stem.trim().to_string(),
            key: key.trim().to_string(),
            distractors: kept,
            language: rec.language,
            subject: rec.subject,
        });
    }
    if dropped > 0 {
        log::debug!("ingest dropped {dropped} items without usable distractors");
    }
    Ok(Corpus {
        items,
        metadata: CorpusMetadata {
            source: source.to_string(),
            seed: None,
        },
    })
}

/// Seeded disjoint train / validation / test partitions. Items keep their
/// corpus order inside each partition.
pub fn split(
    corpus: &Corpus,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus)> {
    let requested = sizes.0 + sizes.1 + sizes.2;
    if requested > corpus.len() {
        return Err(Error::SplitTooLarge {
            requested,
            available: corpus.len(),
            shortfall: requested - corpus.len(),
        });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let take = |range: std::ops::Range<usize>, tag: &str| {
        let mut idx: Vec<usize> = order[range].to_vec();
        idx.sort_unstable();
        Corpus {
            items: idx.iter().map(|&i| corpus.items[i].clone()).collect(),
            metadata: CorpusMetadata {
                source: format!("{}#{tag}", corpus.metadata.source),
                seed: Some(seed),
            },
        }
    };
    let a = sizes.0;
    let b = a + sizes.1;
    let c = b + sizes.2;
    Ok((take(0..a, "train"), take(a..b, "valid"), take(b..c, "test")))
}

/// Deduplicated candidate set. Pool ids follow sorted normalized surface
/// order, so the pool does not depend on item order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistractorPool {
    entries: Vec<String>,
    index_of: HashMap<String, usize>,
}

impl DistractorPool {
    pub fn from_surfaces<I, S>(surfaces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = surfaces
            .into_iter()
            .map(|s| normalize_surface(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        let entries: Vec<String> = set.into_iter().collect();
        let index_of = entries
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        DistractorPool { entries, index_of }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn surface(&self, pool_id: usize) -> &str {
        &self.entries[pool_id]
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Pool id of a surface, compared after normalization.
    pub fn id_of(&self, surface: &str) -> Option<usize> {
        self.index_of.get(&normalize_surface(surface)).copied()
    }

    /// Pool ids of an item's gold distractors that are present in the pool.
    pub fn gold_ids(&self, item: &McqItem) -> Vec<usize> {
        let mut ids: Vec<usize> = item
            .distractors
            .iter()
            .filter_map(|d| self.id_of(d))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Stable digest of the surface list.
    pub fn fingerprint(&self) -> String {
        crate::io::fingerprint(self.entries.join("\n").as_bytes())
    }

    /// Plain-text pool: one surface per line.
    pub fn load_txt(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_surfaces(text.lines()))
    }

    pub fn save_txt(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.entries.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Union of every key and distractor in the corpus.
pub fn build_pool(corpus: &Corpus) -> DistractorPool {
    DistractorPool::from_surfaces(corpus.items.iter().flat_map(|it| it.options()))
}

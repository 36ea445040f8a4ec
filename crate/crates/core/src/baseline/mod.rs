//! Feature-based baseline: 20 hand-crafted features of (stem, key,
//! candidate) scored by logistic regression.

mod logreg;

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{detect_language, normalize_surface, Corpus, DistractorPool, LanguageModel, LanguagePosterior, McqItem};
use crate::error::{Error, Result};
use crate::io;
use crate::retrieval::{select_top_k, Candidate, ModelKind, Query, RankedList};
use crate::textres::{
    avg_embedding, build_idf, cosine, tokenize, train_skipgram, wmd, IdfTable, SkipGramConfig, StaticEmbeddings,
};

pub use logreg::{sigmoid, train_logreg, BaselineModel, LogRegConfig, TrainingExample};

pub const FEATURE_COUNT: usize = 20;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "tfidf_word_match_share",
    "word_match_share",
    "equal_num",
    "longest_substring",
    "token_len_sim",
    "token_len_diff",
    "char_len_sim",
    "char_len_diff",
    "is_caps",
    "count_caps",
    "has_num",
    "get_count",
    "first_char_match",
    "last_char_match",
    "w2v_ad_sim",
    "wmd_w2v_qd",
    "wmd_w2v_ad",
    "glove_ad_sim",
    "wmd_glove_ad",
    "lang_prior",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResourceConfig {
    pub w2v: SkipGramConfig,
    pub glove: SkipGramConfig,
    /// Text-format vectors for the "glove" slot instead of a second
    /// skip-gram table.
    pub glove_file: Option<PathBuf>,
}

impl Default for ResourceConfig {
    fn default() -> Self {
        ResourceConfig {
            w2v: SkipGramConfig::default(),
            glove: SkipGramConfig {
                dim: 50,
                ..SkipGramConfig::default()
            },
            glove_file: None,
        }
    }
}

/// Everything the features need besides the three input texts.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureResources {
    pub idf: IdfTable,
    pub w2v: StaticEmbeddings,
    pub glove: StaticEmbeddings,
    /// Occurrences of each normalized surface as a key or distractor.
    pub option_counts: BTreeMap<String, u64>,
    pub lang: LanguageModel,
}

#[derive(Serialize, Deserialize)]
struct ResourceManifest {
    idf: IdfTable,
    option_counts: BTreeMap<String, u64>,
    lang: LanguageModel,
}

/// Language model over the training split's language tags, or the seeded
/// default model when items are untagged.
fn language_model(train: &Corpus) -> LanguageModel {
    let tags: BTreeSet<String> = train.items.iter().filter_map(|it| it.language.clone()).collect();
    if tags.is_empty() {
        return LanguageModel::default_seeded();
    }
    let langs: Vec<String> = tags.into_iter().collect();
    let samples = train.items.iter().filter_map(|it| {
        it.language
            .as_deref()
            .map(|l| std::iter::once(it.stem.as_str()).chain(it.options()).map(move |t| (l, t)))
    });
    LanguageModel::train(&langs, samples.flatten())
}

pub fn build_resources(train: &Corpus, cfg: &ResourceConfig, seed: u64) -> Result<FeatureResources> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus("training split".into()));
    }
    let w2v = train_skipgram(train, &cfg.w2v, seed)?;
    let glove = match &cfg.glove_file {
        Some(path) => StaticEmbeddings::load_text(path)?,
        None => train_skipgram(train, &cfg.glove, seed.wrapping_add(1))?,
    };
    let mut option_counts = BTreeMap::new();
    for item in &train.items {
        for opt in item.options() {
            *option_counts.entry(normalize_surface(opt)).or_insert(0) += 1;
        }
    }
    Ok(FeatureResources {
        idf: build_idf(train),
        w2v,
        glove,
        option_counts,
        lang: language_model(train),
    })
}

impl FeatureResources {
    /// Writes `resources.json`, `w2v.json` and `glove.json` (each table with
    /// its `.bin` blob) into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        io::write_json(
            dir.join("resources.json"),
            &ResourceManifest {
                idf: self.idf.clone(),
                option_counts: self.option_counts.clone(),
                lang: self.lang.clone(),
            },
        )?;
        self.w2v.save(dir.join("w2v.json"))?;
        self.glove.save(dir.join("glove.json"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let m: ResourceManifest = io::read_json(dir.join("resources.json"))?;
        Ok(FeatureResources {
            idf: m.idf,
            w2v: StaticEmbeddings::load(dir.join("w2v.json"))?,
            glove: StaticEmbeddings::load(dir.join("glove.json"))?,
            option_counts: m.option_counts,
            lang: m.lang,
        })
    }

    /// Precomputes the per-text quantities the features use.
    pub fn view(&self, text: &str) -> TextView {
        let raw: Vec<char> = text.trim().chars().collect();
        let tokens = tokenize(text);
        TextView {
            w2v_avg: avg_embedding(&tokens, &self.w2v),
            glove_avg: avg_embedding(&tokens, &self.glove),
            lang: detect_language(text, &self.lang),
            count: self.option_counts.get(&normalize_surface(text)).copied().unwrap_or(0),
            digits: raw.iter().filter(|c| c.is_ascii_digit()).count(),
            caps: raw.iter().filter(|c| c.is_uppercase()).count(),
            starts_upper: raw.first().is_some_and(|c| c.is_uppercase()),
            tokens,
            raw,
        }
    }
}

/// Cached derived values of one text.
#[derive(Debug, Clone)]
pub struct TextView {
    raw: Vec<char>,
    tokens: Vec<String>,
    w2v_avg: Vec<f32>,
    glove_avg: Vec<f32>,
    lang: LanguagePosterior,
    count: u64,
    digits: usize,
    caps: usize,
    starts_upper: bool,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Length of the longest common run of characters.
fn longest_common_substring(a: &[char], b: &[char]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// First (or last) five characters equal; shorter strings must be equal.
fn affix_match(a: &[char], b: &[char], first: bool) -> bool {
    const N: usize = 5;
    if a.len() < N || b.len() < N {
        return a == b;
    }
    if first {
        a[..N] == b[..N]
    } else {
        a[a.len() - N..] == b[b.len() - N..]
    }
}

fn abs_diff(a: usize, b: usize) -> f64 {
    a.abs_diff(b) as f64
}

/// The 20 features from cached views of stem, key and candidate.
pub fn features_from_views(s: &TextView, k: &TextView, d: &TextView, res: &FeatureResources) -> FeatureVector {
    let context: HashSet<&str> = s.tokens.iter().chain(&k.tokens).map(String::as_str).collect();
    let (mut shared_w, mut total_w, mut shared) = (0.0, 0.0, 0usize);
    for t in &d.tokens {
        let w = res.idf.idf(t);
        total_w += w;
        if context.contains(t.as_str()) {
            shared_w += w;
            shared += 1;
        }
    }
    let tfidf_share = if total_w > 0.0 { shared_w / total_w } else { 0.0 };
    let share = if d.tokens.is_empty() {
        0.0
    } else {
        shared as f64 / d.tokens.len() as f64
    };
    let longest = k.raw.len().max(d.raw.len());
    let lcs = if longest == 0 {
        0.0
    } else {
        longest_common_substring(&k.raw, &d.raw) as f64 / longest as f64
    };
    let cos = |a: &[f32], b: &[f32]| cosine(a, b).unwrap_or(0.0);
    FeatureVector([
        tfidf_share,
        share,
        flag(k.digits == d.digits),
        lcs,
        flag(k.tokens.len() == d.tokens.len()),
        abs_diff(k.tokens.len(), d.tokens.len()),
        flag(k.raw.len() == d.raw.len()),
        abs_diff(k.raw.len(), d.raw.len()),
        flag(k.starts_upper && d.starts_upper),
        flag(k.caps == d.caps),
        flag(k.digits > 0 && d.digits > 0),
        (1.0 + d.count as f64).ln(),
        flag(affix_match(&k.raw, &d.raw, true)),
        flag(affix_match(&k.raw, &d.raw, false)),
        cos(&k.w2v_avg, &d.w2v_avg),
        wmd(&s.tokens, &d.tokens, &res.w2v).distance,
        wmd(&k.tokens, &d.tokens, &res.w2v).distance,
        cos(&k.glove_avg, &d.glove_avg),
        wmd(&k.tokens, &d.tokens, &res.glove).distance,
        s.lang.overlap(&d.lang),
    ])
}

pub fn extract_features(stem: &str, key: &str, candidate: &str, res: &FeatureResources) -> FeatureVector {
    features_from_views(&res.view(stem), &res.view(key), &res.view(candidate), res)
}

/// Sampled non-distractors for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSample {
    pub ids: Vec<usize>,
    /// Set when the pool had no eligible candidate at all.
    pub empty: bool,
}

/// Up to `n` distinct pool ids, uniformly without replacement, excluding
/// the item's key and gold distractors. Returned in ascending order.
pub fn sample_negatives(item: &McqItem, pool: &DistractorPool, n: usize, seed: u64) -> NegativeSample {
    let mut excluded: HashSet<usize> = pool.gold_ids(item).into_iter().collect();
    excluded.extend(pool.id_of(&item.key));
    let eligible: Vec<usize> = (0..pool.len()).filter(|i| !excluded.contains(i)).collect();
    if eligible.is_empty() {
        log::warn!("item {}: no eligible negatives in the pool", item.id);
        return NegativeSample {
            ids: Vec::new(),
            empty: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = n.min(eligible.len());
    let mut ids: Vec<usize> = rand::seq::index::sample(&mut rng, eligible.len(), take)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    ids.sort_unstable();
    NegativeSample { ids, empty: false }
}

/// Per-item negative-sampling seed.
fn item_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Positives from every gold distractor and `negatives` sampled
/// non-distractors per training item.
pub fn build_training_examples(
    train: &Corpus,
    pool: &DistractorPool,
    res: &FeatureResources,
    negatives: usize,
    seed: u64,
) -> Vec<TrainingExample> {
    let views = pool_views(res, pool);
    let mut out = Vec::new();
    for (i, item) in train.items.iter().enumerate() {
        let sv = res.view(&item.stem);
        let kv = res.view(&item.key);
        // Positives go through the pool view too, so both labels see the
        // same normalized candidate surfaces as ranking does.
        for id in pool.gold_ids(item) {
            out.push(TrainingExample {
                features: features_from_views(&sv, &kv, &views[id], res),
                label: true,
                item_id: item.id.clone(),
            });
        }
        for id in sample_negatives(item, pool, negatives, item_seed(seed, i)).ids {
            out.push(TrainingExample {
                features: features_from_views(&sv, &kv, &views[id], res),
                label: false,
                item_id: item.id.clone(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineTrainConfig {
    pub resources: ResourceConfig,
    pub logreg: LogRegConfig,
    pub negatives: usize,
}

impl Default for BaselineTrainConfig {
    fn default() -> Self {
        BaselineTrainConfig {
            resources: ResourceConfig::default(),
            logreg: LogRegConfig::default(),
            negatives: 100,
        }
    }
}

/// Builds resources from `train`, samples examples against `pool` and
/// fits the classifier.
pub fn train_baseline(
    train: &Corpus,
    pool: &DistractorPool,
    cfg: &BaselineTrainConfig,
    seed: u64,
) -> Result<(FeatureResources, BaselineModel)> {
    let res = build_resources(train, &cfg.resources, seed)?;
    let examples = build_training_examples(train, pool, &res, cfg.negatives, seed);
    let model = train_logreg(&examples, &cfg.logreg, seed)?;
    Ok((res, model))
}

pub fn score_baseline(model: &BaselineModel, stem: &str, key: &str, candidate: &str, res: &FeatureResources) -> f64 {
    model.probability(&extract_features(stem, key, candidate, res))
}

/// Baseline ranking over a pool with candidate views cached.
pub struct BaselineRanker<'a> {
    model: &'a BaselineModel,
    res: &'a FeatureResources,
    pool: &'a DistractorPool,
    views: Cow<'a, [TextView]>,
}

/// Views of every pool entry, row i = pool id i.
pub fn pool_views(res: &FeatureResources, pool: &DistractorPool) -> Vec<TextView> {
    pool.entries().iter().map(|s| res.view(s)).collect()
}

impl<'a> BaselineRanker<'a> {
    pub fn new(model: &'a BaselineModel, res: &'a FeatureResources, pool: &'a DistractorPool) -> Self {
        BaselineRanker {
            model,
            res,
            pool,
            views: Cow::Owned(pool_views(res, pool)),
        }
    }

    /// Reuses views from [`pool_views`] over the same resources and pool.
    pub fn with_views(
        model: &'a BaselineModel,
        res: &'a FeatureResources,
        pool: &'a DistractorPool,
        views: &'a [TextView],
    ) -> Result<Self> {
        if views.len() != pool.len() {
            return Err(Error::PoolMismatch(format!(
                "{} cached views for a pool of {}",
                views.len(),
                pool.len()
            )));
        }
        Ok(BaselineRanker {
            model,
            res,
            pool,
            views: Cow::Borrowed(views),
        })
    }

    /// Top `k` by score; the key is excluded and ties go to the lower pool id.
    pub fn rank(&self, query: &Query, k: usize) -> RankedList {
        let sv = self.res.view(&query.stem);
        let kv = self.res.view(&query.key);
        let key = self.pool.id_of(&query.key);
        let cands = self
            .views
            .iter()
            .enumerate()
            .filter(|&(i, _)| Some(i) != key)
            .map(|(pool_id, dv)| Candidate {
                pool_id,
                score: self.model.logit(&features_from_views(&sv, &kv, dv, self.res)),
                tie: 0,
            });
        let top: Vec<(usize, f64)> = select_top_k(cands, k)
            .into_iter()
            .map(|(id, logit)| (id, sigmoid(logit)))
            .collect();
        RankedList::from_scored(self.pool, &top, ModelKind::Baseline)
    }
}

pub fn rank_baseline(
    model: &BaselineModel,
    res: &FeatureResources,
    pool: &DistractorPool,
    query: &Query,
    k: usize,
) -> RankedList {
    BaselineRanker::new(model, res, pool).rank(query, k)
}

#[cfg(test)]
mod tests;

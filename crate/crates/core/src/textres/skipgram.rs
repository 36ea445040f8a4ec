use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tokenize;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f32,
    pub min_count: usize,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            min_count: 1,
        }
    }
}

/// Token -> dense vector table, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticEmbeddings {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    pub config: Option<SkipGramConfig>,
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingManifest {
    dim: usize,
    count: usize,
    seed: Option<u64>,
    config: Option<SkipGramConfig>,
    tokens: Vec<String>,
}

impl StaticEmbeddings {
    pub fn from_rows(dim: usize, tokens: Vec<String>, data: Vec<f32>) -> Self {
        assert_eq!(tokens.len() * dim, data.len(), "row data does not match token count");
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        StaticEmbeddings {
            dim,
            tokens,
            index,
            data,
            config: None,
            seed: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vector(&self, token: &str) -> Option<&[f32]> {
        self.index
            .get(token)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Writes `<path>` (JSON manifest) and the `.bin` blob next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let manifest = EmbeddingManifest {
            dim: self.dim,
            count: self.tokens.len(),
            seed: self.seed,
            config: self.config.clone(),
            tokens: self.tokens.clone(),
        };
        io::write_json(path, &manifest)?;
        io::write_blob(io::blob_path(path), &self.data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let m: EmbeddingManifest = io::read_json(path)?;
        let bytes = io::read_blob(io::blob_path(path))?;
        if m.tokens.len() != m.count || bytes.len() != m.count * m.dim * 4 {
            return Err(Error::Checkpoint(format!(
                "embedding blob has {} bytes, manifest expects {}",
                bytes.len(),
                m.count * m.dim * 4
            )));
        }
        let mut e = Self::from_rows(m.dim, m.tokens, io::le_bytes_to_f32(&bytes));
        e.config = m.config;
        e.seed = m.seed;
        Ok(e)
    }

    /// Plain-text vectors, one `token v1 v2 …` row per line (GloVe and
    /// word2vec text format; a word2vec `count dim` header is skipped).
    /// Tokens are casefolded; the first occurrence of a token wins.
    pub fn load_text(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut dim = 0usize;
        let mut tokens = Vec::new();
        let mut data = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Vec<f32> = parts
                .map(|v| v.parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::MalformedRecord {
                    index: lineno,
                    reason: format!("bad vector component: {e}"),
                })?;
            if lineno == 0 && values.len() == 1 && token.parse::<usize>().is_ok() {
                continue;
            }
            if dim == 0 {
                dim = values.len();
            }
            if values.len() != dim || dim == 0 {
                return Err(Error::MalformedRecord {
                    index: lineno,
                    reason: format!("expected {dim} components, found {}", values.len()),
                });
            }
            let token = token.to_lowercase();
            if seen.insert(token.clone()) {
                tokens.push(token);
                data.extend(values);
            }
        }
        if tokens.is_empty() {
            return Err(Error::EmptyCorpus("vector file has no rows".into()));
        }
        Ok(Self::from_rows(dim, tokens, data))
    }
}

struct Doc {
    ids: Vec<usize>,
    option_start: usize,
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Skip-gram with negative sampling over per-item pseudo-documents (stem
/// tokens, then key tokens, then distractor tokens). A centre token inside
/// the option region sees the whole option region as context in addition
/// to its regular window.
pub fn train_skipgram(corpus: &Corpus, cfg: &SkipGramConfig, seed: u64) -> Result<StaticEmbeddings> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus("skip-gram training needs at least one item".into()));
    }
    if cfg.dim == 0 {
        return Err(Error::InvalidConfig("embedding dim must be >= 1".into()));
    }
    let raw_docs: Vec<(Vec<String>, usize)> = corpus
        .items
        .iter()
        .map(|item| {
            let mut toks = tokenize(&item.stem);
            let start = toks.len();
            for o in item.options() {
                toks.extend(tokenize(o));
            }
            (toks, start)
        })
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (toks, _) in &raw_docs {
        for t in toks {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let vocab: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= cfg.min_count.max(1))
        .map(|(t, c)| (t.to_string(), c))
        .collect();
    let tokens: Vec<String> = vocab.iter().map(|(t, _)| t.clone()).collect();
    let index: HashMap<&str, usize> = tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();

    let docs: Vec<Doc> = raw_docs
        .iter()
        .map(|(toks, start)| {
            let mut ids = Vec::new();
            let mut option_start = 0;
            for (pos, t) in toks.iter().enumerate() {
                if pos == *start {
                    option_start = ids.len();
                }
                if let Some(&i) = index.get(t.as_str()) {
                    ids.push(i);
                }
            }
            if *start >= toks.len() {
                option_start = ids.len();
            }
            Doc { ids, option_start }
        })
        .collect();

    // Unigram^0.75 sampling distribution.
    let mut cdf = Vec::with_capacity(vocab.len());
    let mut acc = 0.0f64;
    for (_, c) in &vocab {
        acc += (*c as f64).powf(0.75);
        cdf.push(acc);
    }
    let total_mass = acc;

    let dim = cfg.dim;
    let v = tokens.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 0.5 / dim as f32;
    let mut input: Vec<f32> = (0..v * dim).map(|_| rng.random_range(-scale..scale)).collect();
    let mut output = vec![0.0f32; v * dim];

    let total_centres: usize = docs.iter().map(|d| d.ids.len()).sum::<usize>() * cfg.epochs;
    let mut processed = 0usize;
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut grad = vec![0.0f32; dim];
    let mut contexts: Vec<usize> = Vec::new();
    let mut seen: HashSet<usize> = HashSet::new();
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &di in &order {
            let doc = &docs[di];
            let n = doc.ids.len();
            for c in 0..n {
                let lr = cfg.lr * (1.0 - processed as f32 / total_centres.max(1) as f32).max(1e-4);
                processed += 1;
                contexts.clear();
                seen.clear();
                let lo = c.saturating_sub(cfg.window);
                let hi = (c + cfg.window).min(n.saturating_sub(1));
                for p in lo..=hi {
                    if p != c && seen.insert(p) {
                        contexts.push(p);
                    }
                }
                if c >= doc.option_start {
                    for p in doc.option_start..n {
                        if p != c && seen.insert(p) {
                            contexts.push(p);
                        }
                    }
                }
                let centre = doc.ids[c];
                for &p in &contexts {
                    let target = doc.ids[p];
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for s in 0..=cfg.negatives {
                        let (t, label) = if s == 0 {
                            (target, 1.0f32)
                        } else {
                            let r = rng.random::<f64>() * total_mass;
                            let t = cdf.partition_point(|&x| x <= r).min(v - 1);
                            if t == target {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let h = &input[centre * dim..(centre + 1) * dim];
                        let o = &mut output[t * dim..(t + 1) * dim];
                        let dot: f32 = h.iter().zip(o.iter()).map(|(a, b)| a * b).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for k in 0..dim {
                            grad[k] += g * o[k];
                            o[k] += g * h[k];
                        }
                    }
                    let h = &mut input[centre * dim..(centre + 1) * dim];
                    for k in 0..dim {
                        h[k] += grad[k];
                    }
                }
            }
        }
    }
    if input.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("skip-gram embeddings".into()));
    }
    let mut e = StaticEmbeddings::from_rows(dim, tokens, input);
    e.config = Some(cfg.clone());
    e.seed = Some(seed);
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SynthConfig};
    use crate::textres::cosine;

    fn synth() -> Corpus {
        generate_synthetic(
            &SynthConfig {
                topics: 6,
                questions_per_topic: 30,
                options_per_topic: 10,
                distractors_per_question: 3,
                languages: vec!["en".into(), "nl".into()],
                option_reuse: true,
            },
            3,
        )
        .unwrap()
    }

    fn small_cfg() -> SkipGramConfig {
        SkipGramConfig {
            dim: 24,
            epochs: 5,
            ..Default::default()
        }
    }

    #[test]
    fn shape_and_determinism() {
        let c = synth();
        let cfg = SkipGramConfig {
            dim: 100,
            epochs: 1,
            ..Default::default()
        };
        let a = train_skipgram(&c, &cfg, 1).unwrap();
        assert!(a.tokens().iter().all(|t| a.vector(t).unwrap().len() == 100));
        let b = train_skipgram(&c, &cfg, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(train_skipgram(&Corpus::default(), &small_cfg(), 1).is_err());
    }

    #[test]
    fn co_option_tokens_are_closer_than_random_pairs() {
        let c = synth();
        let e = train_skipgram(&c, &small_cfg(), 11).unwrap();
        let mut co = Vec::new();
        for item in &c.items {
            let toks: Vec<String> = item.options().flat_map(tokenize).collect();
            for i in 0..toks.len() {
                for j in i + 1..toks.len() {
                    co.push(cosine(e.vector(&toks[i]).unwrap(), e.vector(&toks[j]).unwrap()).unwrap());
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = e.len();
        let random: Vec<f64> = (0..co.len())
            .map(|_| {
                let a = &e.tokens()[rng.random_range(0..n)];
                let b = &e.tokens()[rng.random_range(0..n)];
                cosine(e.vector(a).unwrap(), e.vector(b).unwrap()).unwrap()
            })
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&co) > mean(&random), "{} vs {}", mean(&co), mean(&random));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = train_skipgram(&synth(), &SkipGramConfig { dim: 8, epochs: 1, ..Default::default() }, 2).unwrap();
        let p = dir.path().join("w2v.json");
        e.save(&p).unwrap();
        assert_eq!(StaticEmbeddings::load(&p).unwrap(), e);
    }

    #[test]
    fn text_vectors_load_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        std::fs::write(&p, "2 3\nThe 0.1 0.2 0.3\ncat -1 0 1.5\n").unwrap();
        let e = StaticEmbeddings::load_text(&p).unwrap();
        assert_eq!((e.dim(), e.len()), (3, 2));
        assert_eq!(e.vector("the").unwrap(), &[0.1, 0.2, 0.3]);
        std::fs::write(&p, "cat 1 2\ndog 3\n").unwrap();
        assert!(StaticEmbeddings::load_text(&p).is_err());
    }
}

//! Bi-encoder scorers (D-SIM: stem+key vs distractor, Q-SIM: stem vs stem),
//! their contrastive training, offline indexes and ranking.

mod cluster;
mod index;
mod train;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{DistractorPool, McqItem};
use crate::encoder::{Checkpoint, DualHeadModel, Real};
use crate::error::{Error, Result};
use crate::textres::{SubwordVocab, CLS, SEP};

pub use cluster::{cluster_questions, make_qsim_pairs, QuestionCluster};
pub use index::{
    build_distractor_index, build_stem_index, rank_dsim, rank_qsim, DistractorIndex, DsimRanker, QsimRanker,
    StemIndex,
};
pub use train::{init_model, train_dsim, train_qsim, TrainConfig, TrainReport, Trained, Validation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Baseline,
    Dsim,
    Qsim,
    Dqsim,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Baseline, ModelKind::Dsim, ModelKind::Qsim, ModelKind::Dqsim];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Dsim => "dsim",
            ModelKind::Qsim => "qsim",
            ModelKind::Dqsim => "dqsim",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model {s:?}")))
    }
}

/// A ranking request. `id` names the corpus item the query came from (if
/// any) so that rankers can exclude it; `tie_seed` fixes the order of
/// equal-score candidates where a ranker breaks ties randomly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: Option<String>,
    pub stem: String,
    pub key: String,
    #[serde(default)]
    pub tie_seed: u64,
}

impl Query {
    pub fn new(stem: impl Into<String>, key: impl Into<String>) -> Self {
        Query {
            id: None,
            stem: stem.into(),
            key: key.into(),
            tie_seed: 0,
        }
    }

    pub fn from_item(item: &McqItem, tie_seed: u64) -> Self {
        Query {
            id: Some(item.id.clone()),
            stem: item.stem.clone(),
            key: item.key.clone(),
            tie_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub pool_id: usize,
    pub surface: String,
    pub score: f64,
    pub source: ModelKind,
}

/// Candidates for one query, best first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn from_scored(pool: &DistractorPool, scored: &[(usize, f64)], source: ModelKind) -> Self {
        RankedList {
            entries: scored
                .iter()
                .map(|&(pool_id, score)| RankedEntry {
                    pool_id,
                    surface: pool.surface(pool_id).to_string(),
                    score,
                    source,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pool_ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.pool_id).collect()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.surface.as_str()).collect()
    }
}

/// One candidate competing for a place in a ranking. Higher score wins,
/// then the lower `tie`, then the lower pool id.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate {
    pub pool_id: usize,
    pub score: f64,
    pub tie: u64,
}

impl Candidate {
    /// `Less` means `self` ranks ahead of `other`.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.tie.cmp(&other.tie))
            .then(self.pool_id.cmp(&other.pool_id))
    }
}

struct Worst(Candidate);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// Best `k` candidates in rank order, via a bounded heap.
pub(crate) fn select_top_k(candidates: impl IntoIterator<Item = Candidate>, k: usize) -> Vec<(usize, f64)> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(k.saturating_add(1).min(4096));
    for c in candidates {
        if heap.len() < k {
            heap.push(Worst(c));
        } else if let Some(top) = heap.peek() {
            if c.rank_cmp(&top.0) == Ordering::Less {
                heap.pop();
                heap.push(Worst(c));
            }
        }
    }
    let mut out: Vec<Candidate> = heap.into_iter().map(|w| w.0).collect();
    out.sort_by(|a, b| a.rank_cmp(b));
    out.into_iter().map(|c| (c.pool_id, c.score)).collect()
}

/// Every candidate in rank order.
pub(crate) fn sort_all(candidates: impl IntoIterator<Item = Candidate>) -> Vec<(usize, f64)> {
    let mut out: Vec<Candidate> = candidates.into_iter().collect();
    out.sort_by(|a, b| a.rank_cmp(b));
    out.into_iter().map(|c| (c.pool_id, c.score)).collect()
}

/// Seeded pseudo-random tie key for a pool id.
pub(crate) fn tie_key(seed: u64, pool_id: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(pool_id as u64))
}

/// `[CLS] t [SEP]`, truncating `t` to fit `max_len`.
pub fn sequence_for_text(text: &str, vocab: &SubwordVocab, max_len: usize) -> Vec<u32> {
    let body = vocab.encode(text);
    let keep = body.len().min(max_len.saturating_sub(2));
    let mut ids = Vec::with_capacity(keep + 2);
    ids.push(CLS);
    ids.extend_from_slice(&body[..keep]);
    ids.push(SEP);
    ids
}

/// `[CLS] s [SEP] k`. Over-length input loses stem subwords first; the
/// separator is always kept.
pub fn sequence_for_sk(stem: &str, key: &str, vocab: &SubwordVocab, max_len: usize) -> Vec<u32> {
    let key_ids = vocab.encode(key);
    if key_ids.is_empty() {
        return sequence_for_text(stem, vocab, max_len);
    }
    let stem_ids = vocab.encode(stem);
    let budget = max_len.saturating_sub(2);
    let key_keep = key_ids.len().min(budget);
    let stem_keep = stem_ids.len().min(budget - key_keep);
    let mut ids = Vec::with_capacity(stem_keep + key_keep + 2);
    ids.push(CLS);
    ids.extend_from_slice(&stem_ids[..stem_keep]);
    ids.push(SEP);
    ids.extend_from_slice(&key_ids[..key_keep]);
    ids
}

/// Dot product of two f32 vectors accumulated in f64. Every scoring path
/// goes through here so index and direct scores agree bit for bit.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn max_len(model: &DualHeadModel<f32>) -> usize {
    model.config.max_len
}

/// h^(sk): stem and key through the first head.
pub fn embed_sk(ckpt: &Checkpoint, stem: &str, key: &str) -> Result<Vec<f32>> {
    let ids = sequence_for_sk(stem, key, &ckpt.vocab, max_len(&ckpt.model));
    Ok(ckpt.model.embed_a(&ids)?.to_vec())
}

/// h^(d): a candidate surface through the second head.
pub fn embed_distractor(ckpt: &Checkpoint, surface: &str) -> Result<Vec<f32>> {
    let ids = sequence_for_text(surface, &ckpt.vocab, max_len(&ckpt.model));
    Ok(ckpt.model.embed_b(&ids)?.to_vec())
}

/// Query-side stem representation for Q-SIM.
pub fn embed_query_stem(ckpt: &Checkpoint, stem: &str) -> Result<Vec<f32>> {
    let ids = sequence_for_text(stem, &ckpt.vocab, max_len(&ckpt.model));
    Ok(ckpt.model.embed_a(&ids)?.to_vec())
}

/// Corpus-side stem representation for Q-SIM.
pub fn embed_corpus_stem(ckpt: &Checkpoint, stem: &str) -> Result<Vec<f32>> {
    let ids = sequence_for_text(stem, &ckpt.vocab, max_len(&ckpt.model));
    Ok(ckpt.model.embed_b(&ids)?.to_vec())
}

pub fn dsim_score(ckpt: &Checkpoint, stem: &str, key: &str, distractor: &str) -> Result<f64> {
    Ok(dot(&embed_sk(ckpt, stem, key)?, &embed_distractor(ckpt, distractor)?))
}

/// log(1 + e^x) without overflow.
fn softplus<F: Real>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// −Σ log σ(r⁺) − Σ log σ(−r⁻).
pub fn contrastive_loss(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() && neg.is_empty() {
        return Err(Error::InvalidConfig("contrastive loss needs at least one score".into()));
    }
    if pos.iter().chain(neg).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("contrastive loss input".into()));
    }
    Ok(pos.iter().map(|&r| softplus(-r)).sum::<f64>() + neg.iter().map(|&r| softplus(r)).sum::<f64>())
}

/// In-batch contrastive loss over S = A Bᵀ. Row i's positive is S[i,i]; its
/// negatives are S[i,j] for j ≠ i unless `masked[[i, j]]`. Returns the
/// mean per-row loss and its gradients with respect to A and B.
pub fn batch_contrastive_loss<F: Real>(
    a: &Array2<F>,
    b: &Array2<F>,
    masked: &Array2<bool>,
) -> Result<(F, Array2<F>, Array2<F>)> {
    batch_contrastive_loss_offset(a, b, masked, F::zero())
}

pub fn batch_contrastive_loss_offset<F: Real>(
    a: &Array2<F>,
    b: &Array2<F>,
    masked: &Array2<bool>,
    offset: F,
) -> Result<(F, Array2<F>, Array2<F>)> {
    let n = a.nrows();
    if b.nrows() != n || masked.dim() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: b.nrows(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let s = a.dot(&b.t());
    let inv_n = F::one() / F::from_usize(n).unwrap();
    let mut ds = Array2::<F>::zeros((n, n));
    let mut total = F::zero();
    for i in 0..n {
        for j in 0..n {
            let r = s[[i, j]] + offset;
            if i == j {
                total += softplus(-r);
                ds[[i, j]] = -sigmoid(-r) * inv_n;
            } else if !masked[[i, j]] {
                total += softplus(r);
                ds[[i, j]] = sigmoid(r) * inv_n;
            }
        }
    }
    let da = ds.dot(b);
    let db = ds.t().dot(a);
    Ok((total * inv_n, da, db))
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    dot, embed_corpus_stem, embed_distractor, embed_query_stem, embed_sk, select_top_k, sort_all, tie_key, Candidate,
    ModelKind, Query, RankedList,
};
use crate::corpus::{Corpus, DistractorPool};
use crate::encoder::Checkpoint;
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexManifest {
    kind: String,
    fingerprint: String,
    pool_fingerprint: String,
    rows: usize,
    dim: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    item_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    options: Vec<Vec<usize>>,
}

fn save_index(path: &Path, manifest: &IndexManifest, data: &[f32]) -> Result<()> {
    io::write_json(path, manifest)?;
    io::write_blob(io::blob_path(path), data)
}

fn load_index(path: &Path, kind: &str) -> Result<(IndexManifest, Vec<f32>)> {
    let m: IndexManifest = io::read_json(path)?;
    if m.kind != kind {
        return Err(Error::Checkpoint(format!("expected a {kind} index, found {}", m.kind)));
    }
    let bytes = io::read_blob(io::blob_path(path))?;
    let want = m.rows * m.dim * 4;
    if bytes.len() != want {
        return Err(Error::Checkpoint(format!(
            "index blob has {} bytes, manifest implies {want}",
            bytes.len()
        )));
    }
    Ok((m, io::le_bytes_to_f32(&bytes)))
}

/// h^(d) for every pool entry, row i = pool id i.
#[derive(Debug, Clone, PartialEq)]
pub struct DistractorIndex {
    pub fingerprint: String,
    pub pool_fingerprint: String,
    pub dim: usize,
    pub rows: Vec<f32>,
}

impl DistractorIndex {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.rows.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let m = IndexManifest {
            kind: "distractor".into(),
            fingerprint: self.fingerprint.clone(),
            pool_fingerprint: self.pool_fingerprint.clone(),
            rows: self.len(),
            dim: self.dim,
            item_ids: Vec::new(),
            options: Vec::new(),
        };
        save_index(path.as_ref(), &m, &self.rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (m, rows) = load_index(path.as_ref(), "distractor")?;
        Ok(DistractorIndex {
            fingerprint: m.fingerprint,
            pool_fingerprint: m.pool_fingerprint,
            dim: m.dim,
            rows,
        })
    }
}

pub fn build_distractor_index(ckpt: &Checkpoint, pool: &DistractorPool) -> Result<DistractorIndex> {
    let dim = ckpt.model.config.d_out;
    let mut rows = Vec::with_capacity(pool.len() * dim);
    for surface in pool.entries() {
        rows.extend(embed_distractor(ckpt, surface)?);
    }
    Ok(DistractorIndex {
        fingerprint: ckpt.fingerprint(),
        pool_fingerprint: pool.fingerprint(),
        dim,
        rows,
    })
}

/// Corpus-side stem vectors plus each item's distractor pool ids.
#[derive(Debug, Clone, PartialEq)]
pub struct StemIndex {
    pub fingerprint: String,
    pub pool_fingerprint: String,
    pub dim: usize,
    pub item_ids: Vec<String>,
    pub rows: Vec<f32>,
    pub options: Vec<Vec<usize>>,
}

impl StemIndex {
    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let m = IndexManifest {
            kind: "stem".into(),
            fingerprint: self.fingerprint.clone(),
            pool_fingerprint: self.pool_fingerprint.clone(),
            rows: self.len(),
            dim: self.dim,
            item_ids: self.item_ids.clone(),
            options: self.options.clone(),
        };
        save_index(path.as_ref(), &m, &self.rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (m, rows) = load_index(path.as_ref(), "stem")?;
        if m.item_ids.len() != m.rows || m.options.len() != m.rows {
            return Err(Error::Checkpoint("stem index item list does not match row count".into()));
        }
        Ok(StemIndex {
            fingerprint: m.fingerprint,
            pool_fingerprint: m.pool_fingerprint,
            dim: m.dim,
            item_ids: m.item_ids,
            rows,
            options: m.options,
        })
    }
}

pub fn build_stem_index(ckpt: &Checkpoint, corpus: &Corpus, pool: &DistractorPool) -> Result<StemIndex> {
    let dim = ckpt.model.config.d_out;
    let mut rows = Vec::with_capacity(corpus.len() * dim);
    for item in &corpus.items {
        rows.extend(embed_corpus_stem(ckpt, &item.stem)?);
    }
    Ok(StemIndex {
        fingerprint: ckpt.fingerprint(),
        pool_fingerprint: pool.fingerprint(),
        dim,
        item_ids: corpus.items.iter().map(|it| it.id.clone()).collect(),
        rows,
        options: corpus.items.iter().map(|it| pool.gold_ids(it)).collect(),
    })
}

fn check_compat(ckpt: &Checkpoint, fingerprint: &str, pool_fp: &str, dim: usize, pool: &DistractorPool) -> Result<()> {
    let model_fp = ckpt.fingerprint();
    if fingerprint != model_fp {
        return Err(Error::FingerprintMismatch {
            index: fingerprint.to_string(),
            model: model_fp,
        });
    }
    if pool_fp != pool.fingerprint() {
        return Err(Error::PoolMismatch("index was built over a different pool".into()));
    }
    if dim != ckpt.model.config.d_out {
        return Err(Error::DimensionMismatch {
            expected: ckpt.model.config.d_out,
            actual: dim,
        });
    }
    Ok(())
}

/// D-SIM scoring against a verified index.
pub struct DsimRanker<'a> {
    ckpt: &'a Checkpoint,
    index: &'a DistractorIndex,
    pool: &'a DistractorPool,
}

impl<'a> DsimRanker<'a> {
    pub fn new(ckpt: &'a Checkpoint, index: &'a DistractorIndex, pool: &'a DistractorPool) -> Result<Self> {
        check_compat(ckpt, &index.fingerprint, &index.pool_fingerprint, index.dim, pool)?;
        if index.len() != pool.len() {
            return Err(Error::PoolMismatch(format!(
                "index has {} rows, pool has {} entries",
                index.len(),
                pool.len()
            )));
        }
        Ok(DsimRanker { ckpt, index, pool })
    }

    /// For parts already checked by [`DsimRanker::new`].
    pub(crate) fn from_verified(ckpt: &'a Checkpoint, index: &'a DistractorIndex, pool: &'a DistractorPool) -> Self {
        DsimRanker { ckpt, index, pool }
    }

    pub fn pool(&self) -> &DistractorPool {
        self.pool
    }

    /// Score of every pool entry; `None` for the query's key.
    pub fn scores(&self, query: &Query) -> Result<Vec<Option<f64>>> {
        let q = embed_sk(self.ckpt, &query.stem, &query.key)?;
        let key = self.pool.id_of(&query.key);
        Ok((0..self.index.len())
            .map(|i| (Some(i) != key).then(|| dot(&q, self.index.row(i))))
            .collect())
    }

    fn candidates(&self, query: &Query) -> Result<Vec<Candidate>> {
        Ok(self
            .scores(query)?
            .into_iter()
            .enumerate()
            .filter_map(|(pool_id, s)| s.map(|score| Candidate { pool_id, score, tie: 0 }))
            .collect())
    }

    pub fn rank(&self, query: &Query, k: usize) -> Result<RankedList> {
        let top = select_top_k(self.candidates(query)?, k);
        Ok(RankedList::from_scored(self.pool, &top, ModelKind::Dsim))
    }

    /// Every eligible pool entry in rank order.
    pub fn full_ranking(&self, query: &Query) -> Result<Vec<(usize, f64)>> {
        Ok(sort_all(self.candidates(query)?))
    }
}

/// Q-SIM scoring against a verified stem index.
pub struct QsimRanker<'a> {
    ckpt: &'a Checkpoint,
    index: &'a StemIndex,
    pool: &'a DistractorPool,
}

impl<'a> QsimRanker<'a> {
    pub fn new(ckpt: &'a Checkpoint, index: &'a StemIndex, pool: &'a DistractorPool) -> Result<Self> {
        check_compat(ckpt, &index.fingerprint, &index.pool_fingerprint, index.dim, pool)?;
        Ok(QsimRanker { ckpt, index, pool })
    }

    /// For parts already checked by [`QsimRanker::new`].
    pub(crate) fn from_verified(ckpt: &'a Checkpoint, index: &'a StemIndex, pool: &'a DistractorPool) -> Self {
        QsimRanker { ckpt, index, pool }
    }

    pub fn pool(&self) -> &DistractorPool {
        self.pool
    }

    /// Per pool entry, the best stem score over indexed questions that use
    /// it as a distractor. `None` when no such question exists, and for the
    /// query's key. The query's own item is skipped.
    pub fn scores(&self, query: &Query) -> Result<Vec<Option<f64>>> {
        let q = embed_query_stem(self.ckpt, &query.stem)?;
        let mut best: Vec<Option<f64>> = vec![None; self.pool.len()];
        for (j, id) in self.index.item_ids.iter().enumerate() {
            if query.id.as_deref() == Some(id.as_str()) {
                continue;
            }
            let s = dot(&q, self.index.row(j));
            for &p in &self.index.options[j] {
                let slot = &mut best[p];
                if slot.is_none_or(|b| s > b) {
                    *slot = Some(s);
                }
            }
        }
        if let Some(key) = self.pool.id_of(&query.key) {
            best[key] = None;
        }
        Ok(best)
    }

    /// Top `k` covered candidates; equal scores ordered by the query's tie seed.
    pub fn rank(&self, query: &Query, k: usize) -> Result<RankedList> {
        let cands = self
            .scores(query)?
            .into_iter()
            .enumerate()
            .filter_map(|(pool_id, s)| {
                s.map(|score| Candidate {
                    pool_id,
                    score,
                    tie: tie_key(query.tie_seed, pool_id),
                })
            });
        let top = select_top_k(cands, k);
        Ok(RankedList::from_scored(self.pool, &top, ModelKind::Qsim))
    }

    /// Every pool entry except the key in rank order. Entries no indexed
    /// question uses share one score below every covered score (0 if none
    /// are covered) and are ordered by the tie seed.
    pub fn full_ranking(&self, query: &Query) -> Result<Vec<(usize, f64)>> {
        let scores = self.scores(query)?;
        let floor = scores
            .iter()
            .flatten()
            .copied()
            .reduce(f64::min)
            .map_or(0.0, |m| m - 1.0);
        let key = self.pool.id_of(&query.key);
        let cands = scores
            .into_iter()
            .enumerate()
            .filter(|&(pool_id, _)| Some(pool_id) != key)
            .map(|(pool_id, s)| Candidate {
                pool_id,
                score: s.unwrap_or(floor),
                tie: tie_key(query.tie_seed, pool_id),
            });
        Ok(sort_all(cands))
    }
}

pub fn rank_dsim(
    ckpt: &Checkpoint,
    index: &DistractorIndex,
    pool: &DistractorPool,
    query: &Query,
    k: usize,
) -> Result<RankedList> {
    DsimRanker::new(ckpt, index, pool)?.rank(query, k)
}

pub fn rank_qsim(
    ckpt: &Checkpoint,
    index: &StemIndex,
    pool: &DistractorPool,
    query: &Query,
    k: usize,
) -> Result<RankedList> {
    QsimRanker::new(ckpt, index, pool)?.rank(query, k)
}

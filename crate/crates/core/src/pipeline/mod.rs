//! Artifacts on disk, the loaded model set, run files and reports.

mod run;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::{pool_views, BaselineModel, BaselineRanker, FeatureResources, TextView};
use crate::corpus::{Corpus, DistractorPool};
use crate::encoder::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::error::{Error, Result};
use crate::evalstats::{evaluate_run, EvalReport, RunResult};
use crate::fusion::{DqsimRanker, FusionConfig};
use crate::io;
use crate::retrieval::{DistractorIndex, DsimRanker, ModelKind, QsimRanker, Query, RankedList, StemIndex};

pub use run::{run_pipeline, PipelineConfig, PipelineReport};

pub const BASELINE_MODEL_FILE: &str = "model.json";
pub const BASELINE_RESOURCES_DIR: &str = "resources";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const DISTRACTOR_INDEX_FILE: &str = "index.json";
pub const STEM_INDEX_FILE: &str = "stem_index.json";

pub fn save_baseline(dir: impl AsRef<Path>, model: &BaselineModel, res: &FeatureResources) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    model.save(dir.join(BASELINE_MODEL_FILE))?;
    res.save(dir.join(BASELINE_RESOURCES_DIR))
}

pub fn load_baseline(dir: impl AsRef<Path>) -> Result<(BaselineModel, FeatureResources)> {
    let dir = dir.as_ref();
    Ok((
        BaselineModel::load(dir.join(BASELINE_MODEL_FILE))?,
        FeatureResources::load(dir.join(BASELINE_RESOURCES_DIR))?,
    ))
}

/// Writes `checkpoint.json` (+ blob) into `dir`.
pub fn save_model_dir(dir: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    save_checkpoint(ckpt, dir.join(CHECKPOINT_FILE))
}

/// Where each model's artifacts live. Missing entries leave that model
/// unloaded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelPaths {
    pub pool: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub dsim: Option<PathBuf>,
    pub qsim: Option<PathBuf>,
}

struct BaselineParts {
    model: BaselineModel,
    res: FeatureResources,
    views: Vec<TextView>,
}

/// Every loaded model over one pool. Immutable once built.
pub struct ModelSet {
    pool: DistractorPool,
    baseline: Option<BaselineParts>,
    dsim: Option<(Checkpoint, DistractorIndex)>,
    qsim: Option<(Checkpoint, StemIndex)>,
    pub fusion: FusionConfig,
    fingerprint: String,
}

impl ModelSet {
    pub fn new(pool: DistractorPool, fusion: FusionConfig) -> Result<Self> {
        fusion.validate()?;
        let mut set = ModelSet {
            pool,
            baseline: None,
            dsim: None,
            qsim: None,
            fusion,
            fingerprint: String::new(),
        };
        set.refresh_fingerprint();
        Ok(set)
    }

    fn refresh_fingerprint(&mut self) {
        let mut parts = vec![self.pool.fingerprint()];
        if let Some(b) = &self.baseline {
            parts.push(io::fingerprint(&serde_json::to_vec(&b.model).unwrap_or_default()));
        }
        if let Some((_, idx)) = &self.dsim {
            parts.push(idx.fingerprint.clone());
        }
        if let Some((_, idx)) = &self.qsim {
            parts.push(idx.fingerprint.clone());
        }
        self.fingerprint = io::fingerprint(parts.join("/").as_bytes());
    }

    pub fn with_baseline(mut self, model: BaselineModel, res: FeatureResources) -> Self {
        let views = pool_views(&res, &self.pool);
        self.baseline = Some(BaselineParts { model, res, views });
        self.refresh_fingerprint();
        self
    }

    pub fn with_dsim(mut self, ckpt: Checkpoint, index: DistractorIndex) -> Result<Self> {
        DsimRanker::new(&ckpt, &index, &self.pool)?;
        self.dsim = Some((ckpt, index));
        self.refresh_fingerprint();
        Ok(self)
    }

    pub fn with_qsim(mut self, ckpt: Checkpoint, index: StemIndex) -> Result<Self> {
        QsimRanker::new(&ckpt, &index, &self.pool)?;
        self.qsim = Some((ckpt, index));
        self.refresh_fingerprint();
        Ok(self)
    }

    /// Loads whatever `paths` names. The pool is required.
    pub fn load(paths: &ModelPaths, fusion: FusionConfig) -> Result<Self> {
        let pool_path = paths
            .pool
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("no pool path configured".into()))?;
        let mut set = ModelSet::new(DistractorPool::load_txt(pool_path)?, fusion)?;
        if let Some(dir) = &paths.baseline {
            let (model, res) = load_baseline(dir)?;
            set = set.with_baseline(model, res);
        }
        if let Some(dir) = &paths.dsim {
            let ckpt = load_checkpoint(dir.join(CHECKPOINT_FILE))?;
            set = set.with_dsim(ckpt, DistractorIndex::load(dir.join(DISTRACTOR_INDEX_FILE))?)?;
        }
        if let Some(dir) = &paths.qsim {
            let ckpt = load_checkpoint(dir.join(CHECKPOINT_FILE))?;
            set = set.with_qsim(ckpt, StemIndex::load(dir.join(STEM_INDEX_FILE))?)?;
        }
        Ok(set)
    }

    pub fn pool(&self) -> &DistractorPool {
        &self.pool
    }

    /// Digest over the pool and every loaded model.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn available(&self) -> Vec<ModelKind> {
        let mut out = Vec::new();
        if self.baseline.is_some() {
            out.push(ModelKind::Baseline);
        }
        if self.dsim.is_some() {
            out.push(ModelKind::Dsim);
        }
        if self.qsim.is_some() {
            out.push(ModelKind::Qsim);
        }
        if self.dsim.is_some() && self.qsim.is_some() {
            out.push(ModelKind::Dqsim);
        }
        out
    }

    fn not_loaded(&self, kind: ModelKind) -> Error {
        Error::ModelNotLoaded {
            requested: kind.to_string(),
            available: self.available().iter().map(|k| k.to_string()).collect(),
        }
    }

    fn dsim_ranker(&self) -> Option<DsimRanker<'_>> {
        self.dsim
            .as_ref()
            .map(|(c, i)| DsimRanker::from_verified(c, i, &self.pool))
    }

    fn qsim_ranker(&self) -> Option<QsimRanker<'_>> {
        self.qsim
            .as_ref()
            .map(|(c, i)| QsimRanker::from_verified(c, i, &self.pool))
    }

    /// Top `k` candidates of one model. The query key is never returned.
    pub fn rank(&self, kind: ModelKind, query: &Query, k: usize) -> Result<RankedList> {
        match kind {
            ModelKind::Baseline => {
                let b = self.baseline.as_ref().ok_or_else(|| self.not_loaded(kind))?;
                Ok(BaselineRanker::with_views(&b.model, &b.res, &self.pool, &b.views)?.rank(query, k))
            }
            ModelKind::Dsim => self.dsim_ranker().ok_or_else(|| self.not_loaded(kind))?.rank(query, k),
            ModelKind::Qsim => self.qsim_ranker().ok_or_else(|| self.not_loaded(kind))?.rank(query, k),
            ModelKind::Dqsim => {
                let (Some(d), Some(q)) = (self.dsim_ranker(), self.qsim_ranker()) else {
                    return Err(self.not_loaded(kind));
                };
                DqsimRanker::new(d, q, self.fusion)?.rank(query, k)
            }
        }
    }

    pub fn dsim_parts(&self) -> Option<(&Checkpoint, &DistractorIndex)> {
        self.dsim.as_ref().map(|(c, i)| (c, i))
    }

    pub fn qsim_parts(&self) -> Option<(&Checkpoint, &StemIndex)> {
        self.qsim.as_ref().map(|(c, i)| (c, i))
    }
}

/// One line of a run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub qid: String,
    pub ranking: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RunRow {
    pub fn from_list(qid: &str, list: &RankedList) -> Self {
        RunRow {
            qid: qid.to_string(),
            ranking: list.pool_ids(),
            scores: list.entries.iter().map(|e| e.score).collect(),
        }
    }
}

/// Per-query tie seed used by every run: `seed + position`.
pub fn query_for(item: &crate::corpus::McqItem, position: usize, seed: u64) -> Query {
    Query::from_item(item, seed.wrapping_add(position as u64))
}

/// Ranks every item of `corpus` with one model, `depth` candidates each.
pub fn rank_corpus(models: &ModelSet, kind: ModelKind, corpus: &Corpus, depth: usize, seed: u64) -> Result<Vec<RunRow>> {
    corpus
        .items
        .iter()
        .enumerate()
        .map(|(i, item)| Ok(RunRow::from_list(&item.id, &models.rank(kind, &query_for(item, i, seed), depth)?)))
        .collect()
}

pub fn write_run(path: impl AsRef<Path>, rows: &[RunRow]) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    io::write_jsonl(path, rows)
}

pub fn read_run(path: impl AsRef<Path>) -> Result<Vec<RunRow>> {
    io::read_jsonl(path)
}

/// Scores a run against the gold distractors of `corpus`.
pub fn evaluate_rows(rows: &[RunRow], corpus: &Corpus, pool: &DistractorPool) -> Result<EvalReport> {
    let mut results = Vec::with_capacity(rows.len());
    for row in rows {
        let item = corpus
            .get(&row.qid)
            .ok_or_else(|| Error::NotFound(format!("query {} is not in the evaluation corpus", row.qid)))?;
        let unique: HashSet<usize> = row.ranking.iter().copied().collect();
        if unique.len() != row.ranking.len() || row.ranking.iter().any(|&id| id >= pool.len()) {
            return Err(Error::MalformedRecord {
                index: results.len(),
                reason: format!("ranking of {} has repeated or out-of-pool ids", row.qid),
            });
        }
        results.push(RunResult {
            qid: row.qid.clone(),
            ranking: row.ranking.clone(),
            gold: pool.gold_ids(item).into_iter().collect(),
        });
    }
    evaluate_run(&results)
}

/// Automatic-ranking table: one row per model, metrics as percentages.
pub fn format_table(reports: &BTreeMap<String, EvalReport>) -> String {
    let order = |name: &str| ModelKind::ALL.iter().position(|k| k.as_str() == name).unwrap_or(usize::MAX);
    let mut names: Vec<&String> = reports.keys().collect();
    names.sort_by_key(|n| (order(n), (*n).clone()));
    let mut out = format!("{:<16}{:>7}{:>7}{:>7}{:>7}{:>7}\n", "Model", "R@10", "P@1", "P@4", "MAP", "MRR");
    for name in names {
        let r = &reports[name];
        let _ = writeln!(
            out,
            "{:<16}{:>7.1}{:>7.1}{:>7.1}{:>7.1}{:>7.1}",
            name,
            100.0 * r.recall_10,
            100.0 * r.precision_1,
            100.0 * r.precision_4,
            100.0 * r.map,
            100.0 * r.mrr
        );
    }
    out
}

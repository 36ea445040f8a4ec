use std::collections::HashMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cluster::cluster_indices;
use super::{
    batch_contrastive_loss_offset, build_distractor_index, build_stem_index, sequence_for_sk, sequence_for_text, DsimRanker,
    ModelKind, QsimRanker, Query,
};
use crate::corpus::{normalize_surface, Corpus, DistractorPool};
use crate::encoder::{compute_gradients, Adam, AdamConfig, Checkpoint, DualHeadModel, EncoderConfig, Tensors};
use crate::error::{Error, Result};
use crate::evalstats::recall_at_k;
use crate::textres::train_bpe;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Second-moment decay of the optimizer.
    pub beta2: f64,
    /// Subword merges learned from the training split.
    pub merges: usize,
    /// Encoder shape; `vocab_size` is replaced by the learned vocabulary size.
    pub encoder: EncoderConfig,
    /// Tensor-name prefixes excluded from updates, e.g. `"encoder."`.
    pub freeze: Vec<String>,
    /// Cutoff of the validation recall used for checkpoint selection.
    pub eval_k: usize,
    /// Linear learning-rate warmup length in optimizer steps.
    pub warmup_steps: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    /// Shift training logits by −ln(n−1) in a batch of n rows so that one
    /// positive and n−1 negatives start balanced. Scores used for ranking
    /// are unaffected.
    pub prior_offset: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 64,
            epochs: 25,
            lr: 1e-3,
            beta2: 0.999,
            merges: 4000,
            encoder: EncoderConfig::default(),
            freeze: Vec::new(),
            eval_k: 10,
            warmup_steps: 0,
            clip_norm: 0.0,
            prior_offset: true,
        }
    }
}

/// Held-out items used to pick the best epoch.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub corpus: &'a Corpus,
    pub pool: &'a DistractorPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub kind: ModelKind,
    pub rows_per_epoch: usize,
    pub batch: usize,
    /// Mean per-row loss of each epoch.
    pub loss_trace: Vec<f64>,
    /// Validation recall after each epoch (empty without validation).
    pub valid_trace: Vec<f64>,
    /// 1-based epoch of the retained checkpoint; `None` for no training.
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

/// A randomly initialized model with a vocabulary learned from `train`.
pub fn init_model(kind: ModelKind, train: &Corpus, cfg: &TrainConfig, seed: u64) -> Result<Checkpoint> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus("training split".into()));
    }
    let vocab = train_bpe(train, cfg.merges);
    let config = EncoderConfig {
        vocab_size: vocab.len(),
        ..cfg.encoder.clone()
    };
    Ok(Checkpoint {
        kind: kind.as_str().to_string(),
        model: DualHeadModel::init(config, seed)?,
        vocab,
        seed,
        step: 0,
    })
}

struct Row {
    a: Vec<u32>,
    b: Vec<u32>,
    tag: usize,
    excludes: Vec<usize>,
}

fn mean_recall<I>(queries: I) -> Result<f64>
where
    I: IntoIterator<Item = Result<Option<f64>>>,
{
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in queries {
        if let Some(v) = r? {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoEvaluableQueries);
    }
    Ok(sum / n as f64)
}

fn dsim_validation(ckpt: &Checkpoint, v: &Validation, k: usize) -> Result<f64> {
    let index = build_distractor_index(ckpt, v.pool)?;
    let ranker = DsimRanker::new(ckpt, &index, v.pool)?;
    mean_recall(
        v.corpus.items.iter().map(|item| {
            let gold = v.pool.gold_ids(item).into_iter().collect();
            let ranked = ranker.rank(&Query::from_item(item, 0), k)?;
            Ok(recall_at_k(&ranked.pool_ids(), &gold, k))
        }),
    )
}

fn qsim_validation(ckpt: &Checkpoint, train: &Corpus, v: &Validation, k: usize) -> Result<f64> {
    let index = build_stem_index(ckpt, train, v.pool)?;
    let ranker = QsimRanker::new(ckpt, &index, v.pool)?;
    mean_recall(
        v.corpus.items.iter().map(|item| {
            let gold = v.pool.gold_ids(item).into_iter().collect();
            let ranked = ranker.rank(&Query::from_item(item, 0), k)?;
            Ok(recall_at_k(&ranked.pool_ids(), &gold, k))
        }),
    )
}

fn fit(
    mut ckpt: Checkpoint,
    cfg: &TrainConfig,
    seed: u64,
    mut sample_rows: impl FnMut(&mut ChaCha8Rng) -> Vec<Row>,
    validate: Option<&dyn Fn(&Checkpoint) -> Result<f64>>,
) -> Result<Trained> {
    let kind: ModelKind = ckpt.kind.parse()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_6e6b);
    let frozen: Vec<bool> = ckpt
        .model
        .tensors()
        .iter()
        .map(|(name, _, _)| cfg.freeze.iter().any(|p| name.starts_with(p.as_str())))
        .collect();
    let mut opt = Adam::<f32>::new(
        AdamConfig {
            lr: cfg.lr,
            beta2: cfg.beta2,
            ..AdamConfig::default()
        },
        &ckpt.model,
    );
    let mut report = TrainReport {
        kind,
        rows_per_epoch: 0,
        batch: cfg.batch.max(1),
        loss_trace: Vec::new(),
        valid_trace: Vec::new(),
        best_epoch: None,
    };
    let mut best: Option<(f64, DualHeadModel<f32>, u64)> = None;
    for epoch in 1..=cfg.epochs {
        let mut rows = sample_rows(&mut rng);
        rows.shuffle(&mut rng);
        if rows.is_empty() {
            return Err(Error::EmptyCorpus("no training rows".into()));
        }
        if report.batch > rows.len() {
            log::warn!("batch size {} exceeds {} training rows; clamping", report.batch, rows.len());
            report.batch = rows.len();
        }
        report.rows_per_epoch = rows.len();
        let mut total = 0.0f64;
        for chunk in rows.chunks(report.batch) {
            let n = chunk.len();
            let offset = if cfg.prior_offset && n > 2 {
                -((n - 1) as f32).ln()
            } else {
                0.0
            };
            let masked = Array2::from_shape_fn((n, n), |(i, j)| i != j && chunk[i].excludes.contains(&chunk[j].tag));
            let side_a: Vec<Vec<u32>> = chunk.iter().map(|r| r.a.clone()).collect();
            let side_b: Vec<Vec<u32>> = chunk.iter().map(|r| r.b.clone()).collect();
            let (loss, grads) = compute_gradients(
                &ckpt.model,
                &side_a,
                &side_b,
                Box::new(|a: &Array2<f32>, b: &Array2<f32>| batch_contrastive_loss_offset(a, b, &masked, offset)),
            )?;
            let mut grads = grads;
            if cfg.clip_norm > 0.0 {
                let norm = grads
                    .tensors()
                    .iter()
                    .flat_map(|(_, _, d)| d.iter())
                    .map(|&g| g as f64 * g as f64)
                    .sum::<f64>()
                    .sqrt();
                if norm > cfg.clip_norm {
                    let scale = (cfg.clip_norm / norm) as f32;
                    for t in grads.tensors_mut() {
                        t.iter_mut().for_each(|g| *g *= scale);
                    }
                }
            }
            if cfg.warmup_steps > 0 {
                let done = opt.steps() as f64 + 1.0;
                opt.config.lr = cfg.lr * (done / cfg.warmup_steps as f64).min(1.0);
            }
            opt.step(&mut ckpt.model, &grads, &frozen);
            total += loss as f64 * n as f64;
        }
        let epoch_loss = total / rows.len() as f64;
        report.loss_trace.push(epoch_loss);
        ckpt.step = opt.steps();
        match validate {
            Some(eval) => {
                let score = eval(&ckpt)?;
                log::info!("{kind} epoch {epoch}: loss {epoch_loss:.4}, valid R@{} {score:.4}", cfg.eval_k);
                report.valid_trace.push(score);
                if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                    best = Some((score, ckpt.model.clone(), ckpt.step));
                    report.best_epoch = Some(epoch);
                }
            }
            None => {
                log::info!("{kind} epoch {epoch}: loss {epoch_loss:.4}");
                report.best_epoch = Some(epoch);
            }
        }
    }
    if let Some((_, model, step)) = best {
        ckpt.model = model;
        ckpt.step = step;
    }
    Ok(Trained {
        checkpoint: ckpt,
        report,
    })
}

/// Trains D-SIM: each row pairs an item's stem+key with one of its
/// distractors (resampled every epoch). The other rows' distractors act as
/// negatives unless they are options of the row's own item.
pub fn train_dsim(train: &Corpus, valid: Option<Validation>, cfg: &TrainConfig, seed: u64) -> Result<Trained> {
    let ckpt = init_model(ModelKind::Dsim, train, cfg, seed)?;
    let max_len = ckpt.model.config.max_len;
    let mut interned: HashMap<String, usize> = HashMap::new();
    let mut intern = |s: &str| {
        let n = interned.len();
        *interned.entry(normalize_surface(s)).or_insert(n)
    };
    struct Prepared {
        sk: Vec<u32>,
        distractors: Vec<(Vec<u32>, usize)>,
        excludes: Vec<usize>,
    }
    let prepared: Vec<Prepared> = train
        .items
        .iter()
        .map(|item| {
            let mut excludes: Vec<usize> = item.options().map(&mut intern).collect();
            excludes.sort_unstable();
            excludes.dedup();
            Prepared {
                sk: sequence_for_sk(&item.stem, &item.key, &ckpt.vocab, max_len),
                distractors: item
                    .distractors
                    .iter()
                    .map(|d| (sequence_for_text(d, &ckpt.vocab, max_len), intern(d)))
                    .collect(),
                excludes,
            }
        })
        .filter(|p| !p.distractors.is_empty())
        .collect();
    let sample = |rng: &mut ChaCha8Rng| {
        prepared
            .iter()
            .map(|p| {
                let (seq, tag) = &p.distractors[rng.random_range(0..p.distractors.len())];
                Row {
                    a: p.sk.clone(),
                    b: seq.clone(),
                    tag: *tag,
                    excludes: p.excludes.clone(),
                }
            })
            .collect()
    };
    let k = cfg.eval_k;
    let eval = valid.map(|v| move |c: &Checkpoint| dsim_validation(c, &v, k));
    fit(ckpt, cfg, seed, sample, eval.as_ref().map(|f| f as &dyn Fn(&Checkpoint) -> Result<f64>))
}

/// Trains Q-SIM on stems of questions that share an option. Every epoch
/// each clustered item is paired with one random other member of its
/// cluster; other rows from the same cluster are not used as negatives.
pub fn train_qsim(train: &Corpus, valid: Option<Validation>, cfg: &TrainConfig, seed: u64) -> Result<Trained> {
    let clusters: Vec<Vec<usize>> = cluster_indices(train).into_iter().filter(|c| c.len() > 1).collect();
    if clusters.is_empty() {
        return Err(Error::NoPairs("no shared-option structure".into()));
    }
    let ckpt = init_model(ModelKind::Qsim, train, cfg, seed)?;
    let max_len = ckpt.model.config.max_len;
    let stems: Vec<Vec<u32>> = train
        .items
        .iter()
        .map(|it| sequence_for_text(&it.stem, &ckpt.vocab, max_len))
        .collect();
    let sample = |rng: &mut ChaCha8Rng| {
        let mut rows = Vec::new();
        for (c, members) in clusters.iter().enumerate() {
            for &anchor in members {
                let mut partner = members[rng.random_range(0..members.len() - 1)];
                if partner == anchor {
                    partner = members[members.len() - 1];
                }
                rows.push(Row {
                    a: stems[anchor].clone(),
                    b: stems[partner].clone(),
                    tag: c,
                    excludes: vec![c],
                });
            }
        }
        rows
    };
    let k = cfg.eval_k;
    let eval = valid.map(|v| move |c: &Checkpoint| qsim_validation(c, train, &v, k));
    fit(ckpt, cfg, seed, sample, eval.as_ref().map(|f| f as &dyn Fn(&Checkpoint) -> Result<f64>))
}

//! DQ-SIM: D-SIM and Q-SIM merged by score or by rank, plus the α sweep.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DistractorPool};
use crate::error::{Error, Result};
use crate::evalstats::recall_at_k;
use crate::retrieval::{select_top_k, Candidate, DsimRanker, ModelKind, QsimRanker, Query, RankedList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Score,
    Rank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreNorm {
    #[default]
    Raw,
    Minmax,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Score => "score",
            FusionMode::Rank => "rank",
        })
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score" => Ok(FusionMode::Score),
            "rank" => Ok(FusionMode::Rank),
            other => Err(Error::InvalidConfig(format!("unknown fusion mode {other:?}"))),
        }
    }
}

impl FromStr for ScoreNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(ScoreNorm::Raw),
            "minmax" => Ok(ScoreNorm::Minmax),
            other => Err(Error::InvalidConfig(format!("unknown score normalization {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub alpha: f64,
    #[serde(default)]
    pub norm: ScoreNorm,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            mode: FusionMode::Score,
            alpha: 0.8,
            norm: ScoreNorm::Raw,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

/// α·r_D + (1 − α)·r_Q.
pub fn fuse_score(r_d: f64, r_q: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha * r_d + (1.0 - alpha) * r_q)
}

/// α / ln(ρ_D + 1) + (1 − α) / ln(ρ_Q + 1) for 1-based ranks.
pub fn fuse_rank(rho_d: usize, rho_q: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    for rho in [rho_d, rho_q] {
        if rho < 1 {
            return Err(Error::InvalidRank(rho));
        }
    }
    Ok(alpha / (rho_d as f64 + 1.0).ln() + (1.0 - alpha) / (rho_q as f64 + 1.0).ln())
}

/// Per-pool-id (score, 1-based rank) of one component's full ranking.
struct Component {
    score: Vec<f64>,
    rank: Vec<usize>,
}

impl Component {
    fn from_ranking(ranking: &[(usize, f64)], pool_len: usize, norm: ScoreNorm) -> Result<Self> {
        let mut score = vec![f64::NAN; pool_len];
        let mut rank = vec![0usize; pool_len];
        for (pos, &(id, s)) in ranking.iter().enumerate() {
            if id >= pool_len || rank[id] != 0 {
                return Err(Error::PoolMismatch(format!("component ranking has invalid or repeated pool id {id}")));
            }
            score[id] = s;
            rank[id] = pos + 1;
        }
        if norm == ScoreNorm::Minmax {
            let (lo, hi) = ranking
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, s)| (lo.min(s), hi.max(s)));
            let span = hi - lo;
            for &(id, s) in ranking {
                score[id] = if span > 0.0 { (s - lo) / span } else { 0.0 };
            }
        }
        Ok(Component { score, rank })
    }
}

/// Every candidate of the two full component rankings, fused and sorted.
/// Both rankings must cover the same pool ids. Equal fused values keep the
/// order of the component with the larger weight (D-SIM when α ≥ 0.5).
pub fn fuse_full(
    pool_len: usize,
    dsim: &[(usize, f64)],
    qsim: &[(usize, f64)],
    cfg: &FusionConfig,
) -> Result<Vec<(usize, f64)>> {
    fuse_top(pool_len, dsim, qsim, cfg, usize::MAX)
}

fn fuse_top(
    pool_len: usize,
    dsim: &[(usize, f64)],
    qsim: &[(usize, f64)],
    cfg: &FusionConfig,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    cfg.validate()?;
    if dsim.len() != qsim.len() {
        return Err(Error::PoolMismatch(format!(
            "D-SIM ranks {} candidates, Q-SIM ranks {}",
            dsim.len(),
            qsim.len()
        )));
    }
    let d = Component::from_ranking(dsim, pool_len, cfg.norm)?;
    let q = Component::from_ranking(qsim, pool_len, cfg.norm)?;
    let lead = if cfg.alpha >= 0.5 { &d } else { &q };
    let mut cands = Vec::with_capacity(dsim.len());
    for &(id, _) in dsim {
        if q.rank[id] == 0 {
            return Err(Error::PoolMismatch(format!("pool id {id} missing from the Q-SIM ranking")));
        }
        let score = match cfg.mode {
            FusionMode::Score => fuse_score(d.score[id], q.score[id], cfg.alpha)?,
            FusionMode::Rank => fuse_rank(d.rank[id], q.rank[id], cfg.alpha)?,
        };
        cands.push(Candidate {
            pool_id: id,
            score,
            tie: lead.rank[id] as u64,
        });
    }
    Ok(select_top_k(cands, k))
}

/// Top `k` fused candidates from full component rankings.
pub fn rank_dqsim(
    pool: &DistractorPool,
    dsim: &[(usize, f64)],
    qsim: &[(usize, f64)],
    cfg: &FusionConfig,
    k: usize,
) -> Result<RankedList> {
    let top = fuse_top(pool.len(), dsim, qsim, cfg, k)?;
    Ok(RankedList::from_scored(pool, &top, ModelKind::Dqsim))
}

/// Both component rankers over one pool.
pub struct DqsimRanker<'a> {
    pub dsim: DsimRanker<'a>,
    pub qsim: QsimRanker<'a>,
    pub config: FusionConfig,
}

impl<'a> DqsimRanker<'a> {
    pub fn new(dsim: DsimRanker<'a>, qsim: QsimRanker<'a>, config: FusionConfig) -> Result<Self> {
        config.validate()?;
        if dsim.pool().fingerprint() != qsim.pool().fingerprint() {
            return Err(Error::PoolMismatch("D-SIM and Q-SIM rankers use different pools".into()));
        }
        Ok(DqsimRanker { dsim, qsim, config })
    }

    fn components(&self, query: &Query) -> Result<(Vec<(usize, f64)>, Vec<(usize, f64)>)> {
        Ok((self.dsim.full_ranking(query)?, self.qsim.full_ranking(query)?))
    }

    pub fn rank(&self, query: &Query, k: usize) -> Result<RankedList> {
        let (d, q) = self.components(query)?;
        rank_dqsim(self.dsim.pool(), &d, &q, &self.config, k)
    }

    pub fn full_ranking(&self, query: &Query) -> Result<Vec<(usize, f64)>> {
        let (d, q) = self.components(query)?;
        fuse_full(self.dsim.pool().len(), &d, &q, &self.config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCurve {
    pub mode: FusionMode,
    pub metric: String,
    pub grid: Vec<CurvePoint>,
    pub best_alpha: f64,
}

impl AlphaCurve {
    pub fn value_at(&self, alpha: f64) -> Option<f64> {
        self.grid.iter().find(|p| p.alpha == alpha).map(|p| p.value)
    }

    pub fn best_value(&self) -> f64 {
        self.value_at(self.best_alpha).unwrap_or(f64::NAN)
    }
}

/// 0.0, 0.1, …, 1.0.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub mode: FusionMode,
    pub norm: ScoreNorm,
    /// Recall cutoff of the swept metric.
    pub k: usize,
    pub grid: Vec<f64>,
    /// Query `i` uses tie seed `seed + i` at every α.
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            mode: FusionMode::Score,
            norm: ScoreNorm::Raw,
            k: 10,
            grid: default_grid(),
            seed: 0,
        }
    }
}

/// Mean R@k over the validation items at every grid α. The best α is the
/// first maximum, i.e. ties go to the smaller α.
pub fn sweep_alpha(dsim: &DsimRanker, qsim: &QsimRanker, valid: &Corpus, cfg: &SweepConfig) -> Result<AlphaCurve> {
    let pool = dsim.pool();
    if qsim.pool().fingerprint() != pool.fingerprint() {
        return Err(Error::PoolMismatch("D-SIM and Q-SIM rankers use different pools".into()));
    }
    if valid.is_empty() {
        return Err(Error::EmptyCorpus("validation split".into()));
    }
    let mut grid = cfg.grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    for &a in &grid {
        check_alpha(a)?;
    }
    if grid.first() != Some(&0.0) || grid.last() != Some(&1.0) {
        return Err(Error::InvalidConfig("alpha grid must contain 0 and 1".into()));
    }
    struct Prepared {
        gold: HashSet<usize>,
        d: Vec<(usize, f64)>,
        q: Vec<(usize, f64)>,
    }
    let mut prepared = Vec::new();
    for (i, item) in valid.items.iter().enumerate() {
        let gold: HashSet<usize> = pool.gold_ids(item).into_iter().collect();
        if gold.is_empty() {
            continue;
        }
        let query = Query::from_item(item, cfg.seed.wrapping_add(i as u64));
        prepared.push(Prepared {
            gold,
            d: dsim.full_ranking(&query)?,
            q: qsim.full_ranking(&query)?,
        });
    }
    if prepared.is_empty() {
        return Err(Error::NoEvaluableQueries);
    }
    let mut points = Vec::with_capacity(grid.len());
    for &alpha in &grid {
        let fusion = FusionConfig {
            mode: cfg.mode,
            alpha,
            norm: cfg.norm,
        };
        let mut sum = 0.0;
        for p in &prepared {
            let top = fuse_top(pool.len(), &p.d, &p.q, &fusion, cfg.k)?;
            let ids: Vec<usize> = top.iter().map(|t| t.0).collect();
            sum += recall_at_k(&ids, &p.gold, cfg.k).unwrap_or(0.0);
        }
        points.push(CurvePoint {
            alpha,
            value: sum / prepared.len() as f64,
        });
    }
    Ok(AlphaCurve {
        mode: cfg.mode,
        metric: format!("R@{}", cfg.k),
        best_alpha: best_alpha(&points),
        grid: points,
    })
}

/// α of the first maximum in grid order.
fn best_alpha(points: &[CurvePoint]) -> f64 {
    let mut best = points[0];
    for p in &points[1..] {
        if p.value > best.value {
            best = *p;
        }
    }
    best.alpha
}

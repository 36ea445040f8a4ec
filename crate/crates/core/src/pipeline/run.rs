use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    evaluate_rows, format_table, rank_corpus, save_baseline, save_model_dir, write_run, ModelSet, DISTRACTOR_INDEX_FILE,
    STEM_INDEX_FILE,
};
use crate::baseline::{train_baseline, BaselineTrainConfig};
use crate::corpus::{build_pool, generate_synthetic, split, SynthConfig};
use crate::error::Result;
use crate::evalstats::EvalReport;
use crate::fusion::{sweep_alpha, AlphaCurve, FusionConfig, SweepConfig};
use crate::io;
use crate::retrieval::{
    build_distractor_index, build_stem_index, init_model, train_dsim, train_qsim, DsimRanker, ModelKind, QsimRanker,
    TrainConfig, TrainReport, Validation,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    /// Train / validation / test sizes.
    pub split: [usize; 3],
    pub baseline: BaselineTrainConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    /// Candidates kept per query in run files.
    pub run_depth: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            synth: SynthConfig::default(),
            split: [1800, 100, 100],
            baseline: BaselineTrainConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            run_depth: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub pool_size: usize,
    pub split: [usize; 3],
    /// Test metrics per model.
    pub models: BTreeMap<String, EvalReport>,
    /// Test metrics of D-SIM at its random initialization.
    pub untrained_dsim: EvalReport,
    pub alpha_curve: AlphaCurve,
    pub fusion: FusionConfig,
    pub baseline_loss_trace: Vec<f64>,
    pub dsim_training: TrainReport,
    pub qsim_training: TrainReport,
}

/// Synthetic corpus → split → all four models → α sweep on validation →
/// test runs and reports, everything written under `out`.
///
/// Layout: `corpus.jsonl`, `{train,valid,test}.jsonl`, `pool.txt`,
/// `models/{baseline,dsim,qsim}/`, `runs/<model>.jsonl`,
/// `alpha_curve.json`, `report.json`, `table.txt`.
pub fn run_pipeline(cfg: &PipelineConfig, seed: u64, out: impl AsRef<Path>) -> Result<PipelineReport> {
    let out = out.as_ref();
    std::fs::create_dir_all(out)?;
    let corpus = generate_synthetic(&cfg.synth, seed)?;
    let (train, valid, test) = split(&corpus, (cfg.split[0], cfg.split[1], cfg.split[2]), seed)?;
    let pool = build_pool(&corpus);
    corpus.save_jsonl(out.join("corpus.jsonl"))?;
    train.save_jsonl(out.join("train.jsonl"))?;
    valid.save_jsonl(out.join("valid.jsonl"))?;
    test.save_jsonl(out.join("test.jsonl"))?;
    pool.save_txt(out.join("pool.txt"))?;
    let models_dir = out.join("models");

    log::info!("training baseline on {} items", train.len());
    let (res, baseline) = train_baseline(&train, &pool, &cfg.baseline, seed)?;
    save_baseline(models_dir.join("baseline"), &baseline, &res)?;

    let v = Validation {
        corpus: &valid,
        pool: &pool,
    };
    log::info!("training D-SIM");
    let dsim = train_dsim(&train, Some(v), &cfg.train, seed)?;
    let dsim_index = build_distractor_index(&dsim.checkpoint, &pool)?;
    save_model_dir(models_dir.join("dsim"), &dsim.checkpoint)?;
    dsim_index.save(models_dir.join("dsim").join(DISTRACTOR_INDEX_FILE))?;

    log::info!("training Q-SIM");
    let qsim = train_qsim(&train, Some(v), &cfg.train, seed.wrapping_add(1))?;
    let stem_index = build_stem_index(&qsim.checkpoint, &train, &pool)?;
    save_model_dir(models_dir.join("qsim"), &qsim.checkpoint)?;
    stem_index.save(models_dir.join("qsim").join(STEM_INDEX_FILE))?;

    let curve = sweep_alpha(
        &DsimRanker::new(&dsim.checkpoint, &dsim_index, &pool)?,
        &QsimRanker::new(&qsim.checkpoint, &stem_index, &pool)?,
        &valid,
        &cfg.sweep,
    )?;
    io::write_json(out.join("alpha_curve.json"), &curve)?;
    let fusion = FusionConfig {
        mode: cfg.sweep.mode,
        alpha: curve.best_alpha,
        norm: cfg.sweep.norm,
    };

    let untrained = init_model(ModelKind::Dsim, &train, &cfg.train, seed)?;
    let untrained_index = build_distractor_index(&untrained, &pool)?;
    let untrained_set = ModelSet::new(pool.clone(), fusion)?.with_dsim(untrained, untrained_index)?;
    let rows = rank_corpus(&untrained_set, ModelKind::Dsim, &test, cfg.run_depth, seed)?;
    write_run(out.join("runs").join("dsim_untrained.jsonl"), &rows)?;
    let untrained_dsim = evaluate_rows(&rows, &test, &pool)?;

    let set = ModelSet::new(pool.clone(), fusion)?
        .with_baseline(baseline.clone(), res)
        .with_dsim(dsim.checkpoint, dsim_index)?
        .with_qsim(qsim.checkpoint, stem_index)?;
    let mut models = BTreeMap::new();
    for kind in ModelKind::ALL {
        let rows = rank_corpus(&set, kind, &test, cfg.run_depth, seed)?;
        write_run(out.join("runs").join(format!("{kind}.jsonl")), &rows)?;
        models.insert(kind.to_string(), evaluate_rows(&rows, &test, &pool)?);
    }
    std::fs::write(out.join("table.txt"), format_table(&models))?;

    let report = PipelineReport {
        seed,
        pool_size: pool.len(),
        split: cfg.split,
        models,
        untrained_dsim,
        alpha_curve: curve,
        fusion,
        baseline_loss_trace: baseline.loss_trace,
        dsim_training: dsim.report,
        qsim_training: qsim.report,
    };
    io::write_json(out.join("report.json"), &report)?;
    Ok(report)
}

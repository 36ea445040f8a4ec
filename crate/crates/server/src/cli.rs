//! Command-line interface.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use distractor_core::baseline::{train_baseline, BaselineTrainConfig};
use distractor_core::corpus::{build_pool, generate_synthetic, ingest, split, Corpus, DistractorPool, McqRecord, SynthConfig};
use distractor_core::encoder::load_checkpoint;
use distractor_core::fusion::{sweep_alpha, FusionMode, ScoreNorm, SweepConfig};
use distractor_core::io;
use distractor_core::pipeline::{
    evaluate_rows, format_table, rank_corpus, read_run, run_pipeline, save_baseline, save_model_dir,
    write_run, ModelSet, PipelineConfig, CHECKPOINT_FILE, DISTRACTOR_INDEX_FILE, STEM_INDEX_FILE,
};
use distractor_core::retrieval::{
    build_distractor_index, build_stem_index, train_dsim, train_qsim, DistractorIndex, DsimRanker, ModelKind, Query,
    QsimRanker, StemIndex, TrainConfig, Validation,
};
use distractor_core::service::{self, AgreementQuery, Service, ServiceConfig};
use distractor_core::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::AppError;

#[derive(Debug, Parser)]
#[command(name = "distractor", version, about = "Distractor retrieval for multiple-choice questions")]
pub struct Cli {
    /// Service configuration file (JSON); `DISTRACTOR_*` variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for sampling, initialization, splits and shuffles.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print errors as JSON on stderr.
    #[arg(long, global = true)]
    pub json_errors: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate raw MCQ records and write a clean corpus (and pool).
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pool: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with its pool and optional splits.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 40)]
        topics: usize,
        #[arg(long, default_value_t = 50)]
        per_topic: usize,
        /// Train,valid,test sizes, e.g. `1800,100,100`.
        #[arg(long, value_parser = parse_split)]
        split: Option<[usize; 3]>,
    },
    /// Fit the feature-based classifier.
    TrainBaseline {
        #[command(flatten)]
        data: TrainData,
        /// JSON training parameters.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Train the distractor-similarity encoder.
    TrainDsim {
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Train the question-similarity encoder.
    TrainQsim {
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Precompute embeddings for a trained model directory.
    Index {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        /// Source questions; required for question-similarity models.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Rank a corpus into a run file, or one stem/key pair to stdout.
    Rank {
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long, value_parser = parse_kind)]
        model: ModelKind,
        #[arg(long, requires = "out", conflicts_with_all = ["stem", "key"])]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        depth: usize,
        #[arg(long, requires = "key")]
        stem: Option<String>,
        #[arg(long, requires = "stem")]
        key: Option<String>,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
    /// Grid-search the fusion weight on validation items.
    SweepAlpha {
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        valid: PathBuf,
        #[arg(long, default_value = "score", value_parser = parse_from_str::<FusionMode>)]
        mode: FusionMode,
        #[arg(long, default_value = "raw", value_parser = parse_from_str::<ScoreNorm>)]
        norm: ScoreNorm,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score run files against gold distractors.
    Evaluate {
        #[arg(long, required = true, num_args = 1..)]
        run: Vec<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Inter-rater agreement from a data directory's logs.
    Agreement {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        rater_a: String,
        #[arg(long)]
        rater_b: String,
        #[arg(long)]
        subject: Option<String>,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
    /// Generate, train, sweep and evaluate end to end on synthetic data.
    Pipeline {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        eval_corpus: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TrainData {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    /// Output model directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Model locations; each flag overrides the configuration file.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub dsim: Option<PathBuf>,
    #[arg(long)]
    pub qsim: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = parse_from_str::<FusionMode>)]
    pub fusion_mode: Option<FusionMode>,
    #[arg(long, value_parser = parse_from_str::<ScoreNorm>)]
    pub fusion_norm: Option<ScoreNorm>,
}

impl ModelArgs {
    fn apply(&self, cfg: &mut ServiceConfig) {
        let m = &mut cfg.models;
        for (slot, flag) in [
            (&mut m.pool, &self.pool),
            (&mut m.baseline, &self.baseline),
            (&mut m.dsim, &self.dsim),
            (&mut m.qsim, &self.qsim),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        if let Some(a) = self.alpha {
            cfg.fusion.alpha = a;
        }
        if let Some(mode) = self.fusion_mode {
            cfg.fusion.mode = mode;
        }
        if let Some(norm) = self.fusion_norm {
            cfg.fusion.norm = norm;
        }
    }
}

fn parse_split(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    <[usize; 3]>::try_from(parts).map_err(|p| format!("expected three sizes, got {}", p.len()))
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| e.to_string())
}

fn parse_from_str<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse::<T>().map_err(|e| e.to_string())
}

fn params<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T, AppError> {
    Ok(match path {
        Some(p) => io::read_json(p)?,
        None => T::default(),
    })
}

fn print_json<T: Serialize>(value: &T) -> Result<(), AppError> {
    println!("{}", serde_json::to_string_pretty(value).map_err(Error::from)?);
    Ok(())
}

fn load_pool(path: &Path) -> Result<DistractorPool, AppError> {
    Ok(DistractorPool::load_txt(path)?)
}

fn write_report<T: Serialize>(dir: &Path, value: &T) -> Result<(), AppError> {
    io::write_json(dir.join("training_report.json"), value)?;
    Ok(())
}

impl Cli {
    fn service_config(&self) -> Result<ServiceConfig, AppError> {
        let mut cfg = ServiceConfig::load(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn seed(&self) -> Result<u64, AppError> {
        match self.seed {
            Some(s) => Ok(s),
            None => Ok(self.service_config()?.seed),
        }
    }

    fn model_set(&self, args: &ModelArgs) -> Result<(ServiceConfig, ModelSet), AppError> {
        let mut cfg = self.service_config()?;
        args.apply(&mut cfg);
        cfg.validate()?;
        let set = ModelSet::load(&cfg.models, cfg.fusion)?;
        Ok((cfg, set))
    }

    pub fn run(&self) -> Result<(), AppError> {
        match &self.command {
            Command::Ingest { input, out, pool } => {
                let records: Vec<McqRecord> = io::read_jsonl(input)?;
                let n = records.len();
                let corpus = ingest(records, &input.display().to_string())?;
                corpus.save_jsonl(out)?;
                if let Some(p) = pool {
                    build_pool(&corpus).save_txt(p)?;
                }
                eprintln!("kept {} of {n} records", corpus.len());
            }
            Command::Synth {
                out_dir,
                topics,
                per_topic,
                split: sizes,
            } => {
                let seed = self.seed()?;
                let cfg = SynthConfig {
                    topics: *topics,
                    questions_per_topic: *per_topic,
                    ..SynthConfig::default()
                };
                let corpus = generate_synthetic(&cfg, seed)?;
                std::fs::create_dir_all(out_dir)?;
                corpus.save_jsonl(out_dir.join("corpus.jsonl"))?;
                build_pool(&corpus).save_txt(out_dir.join("pool.txt"))?;
                if let Some(s) = sizes {
                    let (tr, va, te) = split(&corpus, (s[0], s[1], s[2]), seed)?;
                    tr.save_jsonl(out_dir.join("train.jsonl"))?;
                    va.save_jsonl(out_dir.join("valid.jsonl"))?;
                    te.save_jsonl(out_dir.join("test.jsonl"))?;
                }
                eprintln!("wrote {} items to {}", corpus.len(), out_dir.display());
            }
            Command::TrainBaseline { data, params: p } => {
                let cfg: BaselineTrainConfig = params(p)?;
                let train = Corpus::load_jsonl(&data.train)?;
                let pool = load_pool(&data.pool)?;
                let (res, model) = train_baseline(&train, &pool, &cfg, self.seed()?)?;
                save_baseline(&data.out, &model, &res)?;
                eprintln!("final loss {:?}", model.loss_trace.last());
            }
            Command::TrainDsim { data, valid, params: p } | Command::TrainQsim { data, valid, params: p } => {
                let cfg: TrainConfig = params(p)?;
                let train = Corpus::load_jsonl(&data.train)?;
                let pool = load_pool(&data.pool)?;
                let valid = valid.as_ref().map(Corpus::load_jsonl).transpose()?;
                let v = valid.as_ref().map(|c| Validation { corpus: c, pool: &pool });
                let trained = match self.command {
                    Command::TrainDsim { .. } => train_dsim(&train, v, &cfg, self.seed()?)?,
                    _ => train_qsim(&train, v, &cfg, self.seed()?)?,
                };
                save_model_dir(&data.out, &trained.checkpoint)?;
                write_report(&data.out, &trained.report)?;
                eprintln!("best epoch {:?}", trained.report.best_epoch);
            }
            Command::Index { model, pool, corpus } => {
                let ckpt = load_checkpoint(model.join(CHECKPOINT_FILE))?;
                let pool = load_pool(pool)?;
                match ckpt.kind.parse::<ModelKind>()? {
                    ModelKind::Dsim => build_distractor_index(&ckpt, &pool)?.save(model.join(DISTRACTOR_INDEX_FILE))?,
                    ModelKind::Qsim => {
                        let path = corpus.as_ref().ok_or_else(|| {
                            AppError::BadRequest("--corpus is required to index a question-similarity model".into())
                        })?;
                        let c = Corpus::load_jsonl(path)?;
                        build_stem_index(&ckpt, &c, &pool)?.save(model.join(STEM_INDEX_FILE))?;
                    }
                    other => {
                        return Err(Error::Checkpoint(format!("no index for model kind {other}")).into());
                    }
                }
            }
            Command::Rank {
                models,
                model,
                corpus,
                out,
                depth,
                stem,
                key,
                k,
            } => {
                let (cfg, set) = self.model_set(models)?;
                match (corpus, out, stem, key) {
                    (Some(c), Some(out), _, _) => {
                        let c = Corpus::load_jsonl(c)?;
                        let rows = rank_corpus(&set, *model, &c, *depth, cfg.seed)?;
                        write_run(out, &rows)?;
                        eprintln!("ranked {} queries", rows.len());
                    }
                    (_, _, Some(stem), Some(key)) => {
                        let mut q = Query::new(stem, key);
                        q.tie_seed = cfg.seed;
                        print_json(&set.rank(*model, &q, *k)?)?;
                    }
                    _ => return Err(AppError::BadRequest("give --corpus and --out, or --stem and --key".into())),
                }
            }
            Command::SweepAlpha {
                models,
                valid,
                mode,
                norm,
                k,
                out,
            } => {
                let (cfg, set) = self.model_set(models)?;
                let missing = |kind: &str| Error::ModelNotLoaded {
                    requested: kind.into(),
                    available: set.available().iter().map(|k| k.to_string()).collect(),
                };
                let (dc, di): (_, &DistractorIndex) = set.dsim_parts().ok_or_else(|| missing("dsim"))?;
                let (qc, qi): (_, &StemIndex) = set.qsim_parts().ok_or_else(|| missing("qsim"))?;
                let sweep = SweepConfig {
                    mode: *mode,
                    norm: *norm,
                    k: *k,
                    seed: cfg.seed,
                    ..SweepConfig::default()
                };
                let curve = sweep_alpha(
                    &DsimRanker::new(dc, di, set.pool())?,
                    &QsimRanker::new(qc, qi, set.pool())?,
                    &Corpus::load_jsonl(valid)?,
                    &sweep,
                )?;
                if let Some(out) = out {
                    io::write_json(out, &curve)?;
                }
                print_json(&curve)?;
            }
            Command::Evaluate { run, corpus, pool, json } => {
                let corpus = Corpus::load_jsonl(corpus)?;
                let pool = load_pool(pool)?;
                let mut reports = BTreeMap::new();
                for path in run {
                    let name = path.file_stem().unwrap_or_default().to_string_lossy().to_string();
                    reports.insert(name, evaluate_rows(&read_run(path)?, &corpus, &pool)?);
                }
                if *json {
                    print_json(&reports)?;
                } else {
                    print!("{}", format_table(&reports));
                }
            }
            Command::Agreement {
                data_dir,
                rater_a,
                rater_b,
                subject,
                k,
            } => {
                let dir = match data_dir {
                    Some(d) => d.clone(),
                    None => self
                        .service_config()?
                        .data_dir
                        .ok_or_else(|| AppError::BadRequest("no data directory given or configured".into()))?,
                };
                let (sessions, ratings) = service::load_logs(&dir)?;
                let q = AgreementQuery {
                    rater_a: rater_a.clone(),
                    rater_b: rater_b.clone(),
                    subject: subject.clone(),
                    k: *k,
                };
                print_json(&service::agreement_report(&sessions, &ratings, &q)?)?;
            }
            Command::Pipeline { out_dir, params: p } => {
                let cfg: PipelineConfig = params(p)?;
                let report = run_pipeline(&cfg, self.seed()?, out_dir)?;
                print!("{}", format_table(&report.models));
            }
            Command::Serve {
                models,
                host,
                port,
                data_dir,
                corpus,
                eval_corpus,
            } => {
                let mut cfg = self.service_config()?;
                models.apply(&mut cfg);
                if let Some(h) = host {
                    cfg.host.clone_from(h);
                }
                if let Some(p) = port {
                    cfg.port = *p;
                }
                for (slot, flag) in [
                    (&mut cfg.data_dir, data_dir),
                    (&mut cfg.corpus, corpus),
                    (&mut cfg.eval_corpus, eval_corpus),
                ] {
                    if flag.is_some() {
                        slot.clone_from(flag);
                    }
                }
                let svc = Arc::new(Service::open(cfg)?);
                log::info!("models loaded: {:?}", svc.models().available());
                let rt = tokio::runtime::Runtime::new()?;
                rt.block_on(crate::http::serve(svc))?;
            }
        }
        Ok(())
    }
}

/// Runs the CLI and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match cli.run() {
        Ok(()) => 0,
        Err(e) => {
            if cli.json_errors {
                eprintln!("{}", serde_json::to_string(&e.body()).unwrap_or_else(|_| e.to_string()));
            } else {
                eprintln!("error: {e}");
            }
            1
        }
    }
}


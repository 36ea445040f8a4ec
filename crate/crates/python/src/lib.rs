//! Python module `distractor`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use distractor_core::corpus::{self, build_pool, generate_synthetic, DistractorPool, SynthConfig};
use distractor_core::evalstats::{self, ContingencyTable2x2};
use distractor_core::fusion::{FusionConfig, FusionMode, ScoreNorm};
use distractor_core::pipeline::{self, ModelPaths, ModelSet, PipelineConfig};
use distractor_core::retrieval::{ModelKind, Query};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(distractor, DistractorError, PyValueError);

fn err(e: distractor_core::Error) -> PyErr {
    DistractorError::new_err(format!("{}: {e}", e.kind()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| DistractorError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse<T: std::str::FromStr<Err = distractor_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// A validated MCQ corpus.
#[pyclass(frozen, module = "distractor")]
pub struct Corpus {
    inner: corpus::Corpus,
}

#[pymethods]
impl Corpus {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Corpus {
            inner: corpus::Corpus::load_jsonl(path).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (topics=40, questions_per_topic=50, seed=0))]
    fn synthetic(topics: usize, questions_per_topic: usize, seed: u64) -> PyResult<Self> {
        let cfg = SynthConfig {
            topics,
            questions_per_topic,
            ..SynthConfig::default()
        };
        Ok(Corpus {
            inner: generate_synthetic(&cfg, seed).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_jsonl(path).map_err(err)
    }

    fn items<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.items)
    }

    fn pool(&self) -> Pool {
        Pool {
            inner: build_pool(&self.inner),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Normalized, sorted candidate pool.
#[pyclass(frozen, module = "distractor")]
pub struct Pool {
    inner: DistractorPool,
}

#[pymethods]
impl Pool {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Pool {
            inner: DistractorPool::load_txt(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_txt(path).map_err(err)
    }

    fn surfaces(&self) -> Vec<String> {
        self.inner.entries().to_vec()
    }

    fn id_of(&self, surface: &str) -> Option<usize> {
        self.inner.id_of(surface)
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Loaded models over one pool.
#[pyclass(frozen, module = "distractor")]
pub struct Engine {
    inner: ModelSet,
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (pool, baseline=None, dsim=None, qsim=None, alpha=0.8, mode="score", norm="raw"))]
    fn new(
        pool: PathBuf,
        baseline: Option<PathBuf>,
        dsim: Option<PathBuf>,
        qsim: Option<PathBuf>,
        alpha: f64,
        mode: &str,
        norm: &str,
    ) -> PyResult<Self> {
        let paths = ModelPaths {
            pool: Some(pool),
            baseline,
            dsim,
            qsim,
        };
        let fusion = FusionConfig {
            mode: parse::<FusionMode>(mode)?,
            alpha,
            norm: parse::<ScoreNorm>(norm)?,
        };
        Ok(Engine {
            inner: ModelSet::load(&paths, fusion).map_err(err)?,
        })
    }

    fn available(&self) -> Vec<String> {
        self.inner.available().iter().map(|k| k.to_string()).collect()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint().to_string()
    }

    /// Top `k` `(surface, score)` pairs; the key is never returned.
    #[pyo3(signature = (model, stem, key, k=10, seed=0))]
    fn rank(&self, py: Python<'_>, model: &str, stem: &str, key: &str, k: usize, seed: u64) -> PyResult<Vec<(String, f64)>> {
        let kind = parse::<ModelKind>(model)?;
        let mut q = Query::new(stem, key);
        q.tie_seed = seed;
        let list = py.detach(|| self.inner.rank(kind, &q, k)).map_err(err)?;
        Ok(list.entries.into_iter().map(|e| (e.surface, e.score)).collect())
    }

    /// Ranks every item of `corpus` into a run file.
    #[pyo3(signature = (model, corpus, out, depth=100, seed=0))]
    fn rank_corpus(&self, py: Python<'_>, model: &str, corpus: &Corpus, out: PathBuf, depth: usize, seed: u64) -> PyResult<usize> {
        let kind = parse::<ModelKind>(model)?;
        let rows = py
            .detach(|| pipeline::rank_corpus(&self.inner, kind, &corpus.inner, depth, seed))
            .map_err(err)?;
        pipeline::write_run(out, &rows).map_err(err)?;
        Ok(rows.len())
    }
}

/// Metrics of a run file as a dict.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, run: PathBuf, corpus: &Corpus, pool: &Pool) -> PyResult<Bound<'py, PyAny>> {
    let rows = pipeline::read_run(run).map_err(err)?;
    let report = pipeline::evaluate_rows(&rows, &corpus.inner, &pool.inner).map_err(err)?;
    to_py(py, &report)
}

/// Synthetic end-to-end run; `params` is a JSON string of overrides.
#[pyfunction]
#[pyo3(signature = (out_dir, seed=42, params=None))]
fn run_pipeline<'py>(py: Python<'py>, out_dir: PathBuf, seed: u64, params: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: PipelineConfig = match params {
        Some(p) => serde_json::from_str(p).map_err(|e| DistractorError::new_err(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    let report = py.detach(|| pipeline::run_pipeline(&cfg, seed, &out_dir)).map_err(err)?;
    to_py(py, &report)
}

/// Two-sided Fisher exact test on `[[a, b], [c, d]]`.
#[pyfunction]
fn fisher_exact(a: i64, b: i64, c: i64, d: i64) -> PyResult<f64> {
    let t = ContingencyTable2x2::new(a, b, c, d).map_err(err)?;
    evalstats::fisher_exact(&t).map_err(err)
}

#[pyfunction]
fn normalize_surface(text: &str) -> String {
    corpus::normalize_surface(text)
}

/// Ranking metrics of one query; `None` when undefined.
#[pyfunction]
#[pyo3(signature = (ranking, gold, k=10))]
fn query_metrics(ranking: Vec<usize>, gold: Vec<usize>, k: usize) -> BTreeMap<String, Option<f64>> {
    let gold = gold.into_iter().collect();
    BTreeMap::from([
        (format!("R@{k}"), evalstats::recall_at_k(&ranking, &gold, k)),
        (format!("P@{k}"), evalstats::precision_at_k(&ranking, &gold, k)),
        ("AP".to_string(), evalstats::average_precision(&ranking, &gold)),
        ("RR".to_string(), evalstats::reciprocal_rank(&ranking, &gold)),
    ])
}

#[pymodule]
fn distractor(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DistractorError", m.py().get_type::<DistractorError>())?;
    m.add_class::<Corpus>()?;
    m.add_class::<Pool>()?;
    m.add_class::<Engine>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_exact, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_surface, m)?)?;
    m.add_function(wrap_pyfunction!(query_metrics, m)?)?;
    Ok(())
}

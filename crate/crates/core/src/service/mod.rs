//! Suggestion / rating workflow behind the HTTP API and CLI.

mod config;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_surface, Corpus};
use crate::error::{Error, Result};
use crate::evalstats::{
    cohens_kappa, conditional_label_prob, gdr_ndr, jaccard_label, jaccard_overall, rater_labels, AnnotationRecord,
    EvalReport, FourLevel, GdrNdr, Label, RankedSurfaces,
};
use crate::io;
use crate::pipeline::{evaluate_rows, format_table, read_run, ModelSet};
use crate::retrieval::{ModelKind, Query};

pub use config::{ServiceConfig, ENV_PREFIX};

pub const SESSIONS_FILE: &str = "sessions.jsonl";
pub const RATINGS_FILE: &str = "ratings.jsonl";
pub const RUNS_DIR: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionRequest {
    pub stem: String,
    pub key: String,
    pub models: Vec<ModelKind>,
    /// Candidates per model; the configured default when absent.
    #[serde(default)]
    pub k: Option<usize>,
    /// Shuffle seed; the configured seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Known distractors merged into the list.
    #[serde(default)]
    pub include_gold: Vec<String>,
    #[serde(default)]
    pub item_id: Option<String>,
    #[serde(default)]
    pub subject: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestedCandidate {
    pub surface: String,
    /// Models that proposed it, in request order.
    pub models: Vec<ModelKind>,
    /// 1-based rank per proposing model.
    pub ranks: BTreeMap<ModelKind, usize>,
    pub gold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionResponse {
    pub session_id: String,
    /// The request with defaults filled in.
    pub request: SuggestionRequest,
    pub candidates: Vec<SuggestedCandidate>,
}

/// A served suggestion, kept so analytics never re-run models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub item_id: String,
    pub subject: Option<String>,
    pub request: SuggestionRequest,
    pub candidates: Vec<SuggestedCandidate>,
}

impl Session {
    fn candidate(&self, surface: &str) -> Option<&SuggestedCandidate> {
        let norm = normalize_surface(surface);
        self.candidates.iter().find(|c| normalize_surface(&c.surface) == norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub session_id: String,
    /// Must match the session's item when given.
    #[serde(default)]
    pub item_id: Option<String>,
    pub distractor: String,
    /// `true_answer`, `good`, `poor` (with `subtype`), `nonsense`, or a
    /// stored label such as `poor_meaning`.
    pub label: String,
    #[serde(default)]
    pub subtype: Option<String>,
    pub rater_id: String,
    #[serde(default)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingAck {
    pub session_id: String,
    pub item_id: String,
    pub distractor: String,
    pub rater_id: String,
    pub label: Label,
    /// An earlier rating of the same candidate by this rater was superseded.
    pub replaced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    /// 1-based position in the (filtered) queue.
    pub position: usize,
    pub total: usize,
    pub id: String,
    pub stem: String,
    pub key: String,
    pub distractors: Vec<String>,
    pub subject: Option<String>,
    pub language: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementQuery {
    pub rater_a: String,
    pub rater_b: String,
    #[serde(default)]
    pub subject: Option<String>,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// Candidates served in the sessions under the filter.
    pub candidates: usize,
    pub rated_by_a: usize,
    pub rated_by_b: usize,
    pub shared: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub rater_a: String,
    pub rater_b: String,
    pub subject: Option<String>,
    /// Per four-level label; `None` when neither rater used the label.
    pub jaccard: BTreeMap<String, Option<f64>>,
    pub jaccard_overall: f64,
    pub kappa: f64,
    /// `conditional[x][y]` = P(other = x | one = y), both directions averaged.
    pub conditional: BTreeMap<String, BTreeMap<String, Option<f64>>>,
    /// Per model over both raters' labels (majority, ties to the worse label).
    pub gdr_ndr: BTreeMap<String, Option<GdrNdr>>,
    pub coverage: Coverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub file: String,
    pub report: EvalReport,
    pub table: String,
}

#[derive(Default)]
struct RatingLog {
    path: Option<PathBuf>,
    records: Vec<AnnotationRecord>,
}

type RatingKey = (String, String, String);

fn rating_key(r: &AnnotationRecord) -> RatingKey {
    (
        r.session_id.clone().unwrap_or_default(),
        normalize_surface(&r.distractor),
        r.rater_id.clone(),
    )
}

impl RatingLog {
    /// Latest record per (session, candidate, rater), in log order of
    /// those latest records.
    fn current(&self) -> Vec<AnnotationRecord> {
        let mut last: HashMap<RatingKey, usize> = HashMap::new();
        for (i, r) in self.records.iter().enumerate() {
            last.insert(rating_key(r), i);
        }
        let mut idx: Vec<usize> = last.into_values().collect();
        idx.sort_unstable();
        idx.into_iter().map(|i| self.records[i].clone()).collect()
    }
}

/// Merges per-model rankings by normalized surface (first model and rank
/// win the displayed surface), adds gold distractors, drops the key and
/// shuffles with `seed`.
pub fn merge_suggestions(
    lists: &[(ModelKind, Vec<String>)],
    gold: &[String],
    key: &str,
    seed: u64,
) -> Vec<SuggestedCandidate> {
    let key = normalize_surface(key);
    let mut merged: Vec<SuggestedCandidate> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut add = |surface: &str, merged: &mut Vec<SuggestedCandidate>| -> Option<usize> {
        let norm = normalize_surface(surface);
        if norm.is_empty() || norm == key {
            return None;
        }
        Some(*slot.entry(norm).or_insert_with(|| {
            merged.push(SuggestedCandidate {
                surface: surface.trim().to_string(),
                models: Vec::new(),
                ranks: BTreeMap::new(),
                gold: false,
            });
            merged.len() - 1
        }))
    };
    for (kind, surfaces) in lists {
        for (pos, s) in surfaces.iter().enumerate() {
            if let Some(i) = add(s, &mut merged) {
                let c = &mut merged[i];
                if !c.ranks.contains_key(kind) {
                    c.models.push(*kind);
                    c.ranks.insert(*kind, pos + 1);
                }
            }
        }
    }
    for g in gold {
        if let Some(i) = add(g, &mut merged) {
            merged[i].gold = true;
        }
    }
    merged.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    merged
}

/// Agreement of two raters over the sessions in scope, from current
/// (latest-wins) ratings.
pub fn agreement_report(
    sessions: &BTreeMap<String, Session>,
    ratings: &[AnnotationRecord],
    q: &AgreementQuery,
) -> Result<AgreementReport> {
    if q.rater_a == q.rater_b {
        return Err(Error::Annotation("agreement needs two distinct raters".into()));
    }
    let in_scope = |sid: &Option<String>| {
        sid.as_ref()
            .and_then(|id| sessions.get(id))
            .is_some_and(|s| q.subject.is_none() || s.subject == q.subject)
    };
    let records: Vec<AnnotationRecord> = ratings
        .iter()
        .filter(|r| in_scope(&r.session_id) && (r.rater_id == q.rater_a || r.rater_id == q.rater_b))
        .cloned()
        .collect();
    let a = rater_labels(&records, &q.rater_a);
    let b = rater_labels(&records, &q.rater_b);
    if a.is_empty() || b.is_empty() {
        let missing = if a.is_empty() { &q.rater_a } else { &q.rater_b };
        return Err(Error::Annotation(format!("rater {missing} has no ratings under this filter")));
    }
    let overall = jaccard_overall::<FourLevel>(&a, &b)?;
    let mut jaccard = BTreeMap::new();
    let mut conditional = BTreeMap::new();
    for x in FourLevel::ALL {
        jaccard.insert(x.as_str().to_string(), jaccard_label(&a, &b, x)?);
        let mut row = BTreeMap::new();
        for y in FourLevel::ALL {
            row.insert(y.as_str().to_string(), conditional_label_prob(&a, &b, x, y)?);
        }
        conditional.insert(x.as_str().to_string(), row);
    }
    let scoped: Vec<&Session> = sessions
        .values()
        .filter(|s| q.subject.is_none() || s.subject == q.subject)
        .collect();
    let mut gdr = BTreeMap::new();
    for kind in ModelKind::ALL {
        let ranked: Vec<RankedSurfaces> = scoped
            .iter()
            .filter(|s| s.request.models.contains(&kind))
            .map(|s| {
                let mut c: Vec<(usize, &str)> = s
                    .candidates
                    .iter()
                    .filter_map(|c| c.ranks.get(&kind).map(|&r| (r, c.surface.as_str())))
                    .collect();
                c.sort();
                RankedSurfaces {
                    item_id: s.item_id.clone(),
                    surfaces: c.into_iter().map(|(_, s)| s.to_string()).collect(),
                }
            })
            .collect();
        if !ranked.is_empty() {
            gdr.insert(kind.to_string(), gdr_ndr(&records, &ranked, q.k).ok());
        }
    }
    let shared = a.keys().filter(|k| b.contains_key(*k)).count();
    Ok(AgreementReport {
        rater_a: q.rater_a.clone(),
        rater_b: q.rater_b.clone(),
        subject: q.subject.clone(),
        jaccard,
        jaccard_overall: overall,
        kappa: cohens_kappa(&a, &b)?,
        conditional,
        gdr_ndr: gdr,
        coverage: Coverage {
            candidates: scoped.iter().map(|s| s.candidates.len()).sum(),
            rated_by_a: a.len(),
            rated_by_b: b.len(),
            shared,
        },
    })
}

/// Sessions and current ratings persisted under `data_dir`.
pub fn load_logs(data_dir: &Path) -> Result<(BTreeMap<String, Session>, Vec<AnnotationRecord>)> {
    let mut sessions = BTreeMap::new();
    let sp = data_dir.join(SESSIONS_FILE);
    if sp.exists() {
        for s in io::read_jsonl::<Session>(&sp)? {
            sessions.insert(s.session_id.clone(), s);
        }
    }
    let rp = data_dir.join(RATINGS_FILE);
    let log = RatingLog {
        path: None,
        records: if rp.exists() { io::read_jsonl(&rp)? } else { Vec::new() },
    };
    Ok((sessions, log.current()))
}

/// The loaded engine plus session and rating state.
pub struct Service {
    config: ServiceConfig,
    models: ModelSet,
    corpus: Option<Corpus>,
    eval_corpus: Option<Corpus>,
    sessions: RwLock<BTreeMap<String, Session>>,
    ratings: Mutex<RatingLog>,
}

fn load_corpus(path: &Option<PathBuf>) -> Result<Option<Corpus>> {
    path.as_ref().map(Corpus::load_jsonl).transpose()
}

impl Service {
    /// Loads models, corpora and any persisted sessions and ratings.
    pub fn open(config: ServiceConfig) -> Result<Self> {
        config.validate()?;
        let models = ModelSet::load(&config.models, config.fusion)?;
        let corpus = load_corpus(&config.corpus)?;
        let eval_corpus = match &config.eval_corpus {
            Some(_) => load_corpus(&config.eval_corpus)?,
            None => corpus.clone(),
        };
        Self::with_parts(config, models, corpus, eval_corpus)
    }

    /// Builds a service around already loaded parts.
    pub fn with_parts(
        config: ServiceConfig,
        models: ModelSet,
        corpus: Option<Corpus>,
        eval_corpus: Option<Corpus>,
    ) -> Result<Self> {
        config.validate()?;
        let mut sessions = BTreeMap::new();
        let mut ratings = RatingLog::default();
        if let Some(dir) = &config.data_dir {
            std::fs::create_dir_all(dir)?;
            let sp = dir.join(SESSIONS_FILE);
            if sp.exists() {
                for s in io::read_jsonl::<Session>(&sp)? {
                    sessions.insert(s.session_id.clone(), s);
                }
            }
            let rp = dir.join(RATINGS_FILE);
            if rp.exists() {
                ratings.records = io::read_jsonl(&rp)?;
            }
            ratings.path = Some(rp);
        }
        Ok(Service {
            config,
            models,
            corpus,
            eval_corpus,
            sessions: RwLock::new(sessions),
            ratings: Mutex::new(ratings),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn models(&self) -> &ModelSet {
        &self.models
    }

    fn subject_of(&self, item_id: &str) -> Option<String> {
        self.corpus.as_ref()?.get(item_id)?.subject.clone()
    }

    /// Per-model top-k merged by normalized surface, gold merged in, then
    /// shuffled by the request seed. The session is stored.
    pub fn suggest(&self, req: &SuggestionRequest) -> Result<SuggestionResponse> {
        let mut req = req.clone();
        let k = *req.k.get_or_insert(self.config.default_k);
        let seed = *req.seed.get_or_insert(self.config.seed);
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if req.models.is_empty() {
            return Err(Error::InvalidConfig("select at least one model".into()));
        }
        if req.stem.trim().is_empty() || req.key.trim().is_empty() {
            return Err(Error::InvalidConfig("stem and key are required".into()));
        }
        if self.models.pool().is_empty() {
            return Err(Error::EmptyCorpus("distractor pool".into()));
        }
        let mut models: Vec<ModelKind> = Vec::new();
        for m in &req.models {
            if !models.contains(m) {
                models.push(*m);
            }
        }
        req.models = models.clone();

        let mut query = Query::new(&req.stem, &req.key);
        query.id = req.item_id.clone();
        query.tie_seed = seed;
        let mut lists = Vec::with_capacity(models.len());
        for &kind in &models {
            let list = self.models.rank(kind, &query, k)?;
            lists.push((kind, list.surfaces().into_iter().map(str::to_string).collect()));
        }
        let merged = merge_suggestions(&lists, &req.include_gold, &req.key, seed);

        let request_bytes = serde_json::to_vec(&req)?;
        let session_id = io::fingerprint(&[self.models.fingerprint().as_bytes(), &request_bytes].concat());
        let item_id = req.item_id.clone().unwrap_or_else(|| session_id.clone());
        let session = Session {
            session_id: session_id.clone(),
            subject: req.subject.clone().or_else(|| self.subject_of(&item_id)),
            item_id,
            request: req.clone(),
            candidates: merged.clone(),
        };
        {
            let mut sessions = self.sessions.write().expect("session lock poisoned");
            if sessions.get(&session_id) != Some(&session) {
                if let Some(dir) = &self.config.data_dir {
                    io::append_jsonl(dir.join(SESSIONS_FILE), &session)?;
                }
                sessions.insert(session_id.clone(), session);
            }
        }
        Ok(SuggestionResponse {
            session_id,
            request: req,
            candidates: merged,
        })
    }

    pub fn session(&self, id: &str) -> Option<Session> {
        self.sessions.read().expect("session lock poisoned").get(id).cloned()
    }

    /// Checks a submission and builds its log record.
    fn prepare_rating(&self, sub: &RatingSubmission) -> Result<AnnotationRecord> {
        let label = Label::parse(&sub.label, sub.subtype.as_deref())?;
        if sub.rater_id.trim().is_empty() {
            return Err(Error::Annotation("rater_id is required".into()));
        }
        let session = self
            .session(&sub.session_id)
            .ok_or_else(|| Error::NotFound(format!("session {}", sub.session_id)))?;
        if let Some(item) = &sub.item_id {
            if item != &session.item_id {
                return Err(Error::Annotation(format!(
                    "session {} belongs to item {}, not {item}",
                    session.session_id, session.item_id
                )));
            }
        }
        let cand = session.candidate(&sub.distractor).ok_or_else(|| {
            Error::NotFound(format!("candidate {:?} in session {}", sub.distractor, session.session_id))
        })?;
        let source = if cand.gold {
            "gold".to_string()
        } else {
            cand.models.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(",")
        };
        Ok(AnnotationRecord {
            item_id: session.item_id.clone(),
            distractor: cand.surface.clone(),
            rater_id: sub.rater_id.trim().to_string(),
            label,
            source,
            session_id: Some(session.session_id.clone()),
            timestamp: sub.timestamp.clone(),
        })
    }

    /// Validates and appends one rating. A later rating of the same
    /// (session, candidate, rater) supersedes the earlier one.
    pub fn record_rating(&self, sub: &RatingSubmission) -> Result<RatingAck> {
        Ok(self.record_ratings(std::slice::from_ref(sub))?.remove(0))
    }

    /// Records a page of ratings; nothing is stored unless all are valid.
    pub fn record_ratings(&self, subs: &[RatingSubmission]) -> Result<Vec<RatingAck>> {
        let records = subs.iter().map(|s| self.prepare_rating(s)).collect::<Result<Vec<_>>>()?;
        let mut log = self.ratings.lock().expect("rating lock poisoned");
        let mut acks = Vec::with_capacity(records.len());
        for record in records {
            let key = rating_key(&record);
            let replaced = log.records.iter().any(|r| rating_key(r) == key);
            if replaced {
                log::info!(
                    "rating of {:?} by {} in {} superseded",
                    record.distractor,
                    record.rater_id,
                    key.0
                );
            }
            if let Some(path) = &log.path {
                io::append_jsonl(path, &record)?;
            }
            acks.push(RatingAck {
                session_id: key.0,
                item_id: record.item_id.clone(),
                distractor: record.distractor.clone(),
                rater_id: record.rater_id.clone(),
                label: record.label,
                replaced,
            });
            log.records.push(record);
        }
        Ok(acks)
    }

    /// Current ratings (latest per session, candidate and rater).
    pub fn ratings(&self) -> Vec<AnnotationRecord> {
        self.ratings.lock().expect("rating lock poisoned").current()
    }

    /// Corpus items, optionally restricted to one subject.
    pub fn items(&self, subject: Option<&str>) -> Result<Vec<QueueItem>> {
        let corpus = self
            .corpus
            .as_ref()
            .ok_or_else(|| Error::NotFound("no item corpus configured".into()))?;
        let chosen: Vec<_> = corpus
            .items
            .iter()
            .filter(|it| subject.is_none_or(|s| it.subject.as_deref() == Some(s)))
            .collect();
        let total = chosen.len();
        Ok(chosen
            .into_iter()
            .enumerate()
            .map(|(i, it)| QueueItem {
                position: i + 1,
                total,
                id: it.id.clone(),
                stem: it.stem.clone(),
                key: it.key.clone(),
                distractors: it.distractors.clone(),
                subject: it.subject.clone(),
                language: it.language.clone(),
            })
            .collect())
    }

    pub fn agreement_report(&self, q: &AgreementQuery) -> Result<AgreementReport> {
        let sessions = self.sessions.read().expect("session lock poisoned").clone();
        agreement_report(&sessions, &self.ratings(), q)
    }

    fn runs_dir(&self) -> Result<PathBuf> {
        self.config
            .data_dir
            .as_ref()
            .map(|d| d.join(RUNS_DIR))
            .ok_or_else(|| Error::NotFound("no data directory configured".into()))
    }

    /// Metrics of a run file stored under `<data_dir>/runs/`.
    pub fn run_report(&self, file: &str) -> Result<RunReport> {
        let name = Path::new(file);
        let plain = name.components().count() == 1
            && name.file_name().is_some_and(|n| n == name.as_os_str())
            && name.extension().is_some_and(|e| e == "jsonl");
        if !plain {
            return Err(Error::InvalidConfig(format!("run file must be a plain *.jsonl name, got {file:?}")));
        }
        let path = self.runs_dir()?.join(name);
        if !path.exists() {
            return Err(Error::NotFound(format!("run file {file}")));
        }
        let corpus = self
            .eval_corpus
            .as_ref()
            .ok_or_else(|| Error::NotFound("no evaluation corpus configured".into()))?;
        let report = evaluate_rows(&read_run(&path)?, corpus, self.models.pool())?;
        let stem = name.file_stem().unwrap_or_default().to_string_lossy().to_string();
        let table = format_table(&BTreeMap::from([(stem, report.clone())]));
        Ok(RunReport {
            file: file.to_string(),
            report,
            table,
        })
    }
}

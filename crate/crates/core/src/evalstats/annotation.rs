use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::corpus::normalize_surface;
use crate::error::{Error, Result};

/// Stored annotation label; "poor" is always kept with its subtype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    TrueAnswer,
    Good,
    PoorMeaning,
    PoorFormat,
    Nonsense,
}

impl Label {
    pub const ALL: [Label; 5] = [
        Label::TrueAnswer,
        Label::Good,
        Label::PoorMeaning,
        Label::PoorFormat,
        Label::Nonsense,
    ];

    /// Parses a label name, with the subtype given separately for "poor".
    pub fn parse(label: &str, subtype: Option<&str>) -> Result<Label> {
        let norm = |s: &str| s.trim().to_lowercase().replace([' ', '-'], "_");
        match norm(label).as_str() {
            "true_answer" => Ok(Label::TrueAnswer),
            "good" => Ok(Label::Good),
            "poor_meaning" => Ok(Label::PoorMeaning),
            "poor_format" => Ok(Label::PoorFormat),
            "nonsense" => Ok(Label::Nonsense),
            "poor" => match subtype.map(norm).as_deref() {
                Some("meaning") | Some("poor_meaning") => Ok(Label::PoorMeaning),
                Some("format") | Some("poor_format") => Ok(Label::PoorFormat),
                Some(other) => Err(Error::InvalidLabel(format!("unknown poor subtype {other:?}"))),
                None => Err(Error::InvalidLabel("subtype required for label \"poor\"".into())),
            },
            other => Err(Error::InvalidLabel(format!("unknown label {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::TrueAnswer => "true_answer",
            Label::Good => "good",
            Label::PoorMeaning => "poor_meaning",
            Label::PoorFormat => "poor_format",
            Label::Nonsense => "nonsense",
        }
    }

    /// Good is plausible; everything else is less plausible.
    pub fn plausible(self) -> bool {
        self == Label::Good
    }

    /// Higher is worse; used to break majority ties pessimistically.
    fn severity(self) -> u8 {
        match self {
            Label::Good => 0,
            Label::PoorFormat => 1,
            Label::PoorMeaning => 2,
            Label::Nonsense => 3,
            Label::TrueAnswer => 4,
        }
    }
}

/// Four-level view with both poor subtypes collapsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FourLevel {
    TrueAnswer,
    Good,
    Poor,
    Nonsense,
}

impl FourLevel {
    pub const ALL: [FourLevel; 4] = [FourLevel::TrueAnswer, FourLevel::Good, FourLevel::Poor, FourLevel::Nonsense];

    pub fn as_str(self) -> &'static str {
        match self {
            FourLevel::TrueAnswer => "true_answer",
            FourLevel::Good => "good",
            FourLevel::Poor => "poor",
            FourLevel::Nonsense => "nonsense",
        }
    }
}

impl From<Label> for FourLevel {
    fn from(l: Label) -> Self {
        match l {
            Label::TrueAnswer => FourLevel::TrueAnswer,
            Label::Good => FourLevel::Good,
            Label::PoorMeaning | Label::PoorFormat => FourLevel::Poor,
            Label::Nonsense => FourLevel::Nonsense,
        }
    }
}

/// One rating of one candidate by one rater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub item_id: String,
    pub distractor: String,
    pub rater_id: String,
    pub label: Label,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl AnnotationRecord {
    pub fn candidate_key(&self) -> CandidateKey {
        (self.item_id.clone(), normalize_surface(&self.distractor))
    }
}

/// (item id, normalized distractor surface).
pub type CandidateKey = (String, String);

/// One rater's labels; later records overwrite earlier ones.
pub fn rater_labels(records: &[AnnotationRecord], rater: &str) -> BTreeMap<CandidateKey, Label> {
    records
        .iter()
        .filter(|r| r.rater_id == rater)
        .map(|r| (r.candidate_key(), r.label))
        .collect()
}

fn shared<'a>(
    a: &'a BTreeMap<CandidateKey, Label>,
    b: &'a BTreeMap<CandidateKey, Label>,
) -> Result<Vec<(Label, Label)>> {
    let pairs: Vec<(Label, Label)> = a
        .iter()
        .filter_map(|(k, la)| b.get(k).map(|lb| (*la, *lb)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Annotation("annotators share no rated candidates".into()));
    }
    Ok(pairs)
}

/// Intersection over union of the candidates each annotator put in
/// `label`, over their shared candidates. `None` when neither used it.
pub fn jaccard_label<C>(
    a: &BTreeMap<CandidateKey, Label>,
    b: &BTreeMap<CandidateKey, Label>,
    label: C,
) -> Result<Option<f64>>
where
    C: From<Label> + PartialEq + Copy,
{
    let pairs = shared(a, b)?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (la, lb) in pairs {
        let ia = C::from(la) == label;
        let ib = C::from(lb) == label;
        if ia && ib {
            inter += 1;
        }
        if ia || ib {
            union += 1;
        }
    }
    Ok((union > 0).then(|| inter as f64 / union as f64))
}

/// Agreement over all (candidate, label) assignments:
/// |agree| / (2·|shared| − |agree|).
pub fn jaccard_overall<C>(a: &BTreeMap<CandidateKey, Label>, b: &BTreeMap<CandidateKey, Label>) -> Result<f64>
where
    C: From<Label> + PartialEq + Copy,
{
    let pairs = shared(a, b)?;
    let agree = pairs.iter().filter(|(x, y)| C::from(*x) == C::from(*y)).count();
    Ok(agree as f64 / (2 * pairs.len() - agree) as f64)
}

/// Cohen's kappa from a square confusion matrix. When chance agreement is
/// 1 (both raters constant and equal) the result is 1.
pub fn kappa_from_confusion(m: &[Vec<u64>]) -> Result<f64> {
    let n: u64 = m.iter().flatten().sum();
    if n == 0 {
        return Err(Error::Annotation("empty confusion matrix".into()));
    }
    let n = n as f64;
    let k = m.len();
    let po = (0..k).map(|i| m[i][i]).sum::<u64>() as f64 / n;
    let pe: f64 = (0..k)
        .map(|i| {
            let row: u64 = m[i].iter().sum();
            let col: u64 = m.iter().map(|r| r[i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    if (1.0 - pe).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Cohen's kappa over the five stored labels.
pub fn cohens_kappa(a: &BTreeMap<CandidateKey, Label>, b: &BTreeMap<CandidateKey, Label>) -> Result<f64> {
    let pairs = shared(a, b)?;
    let idx = |l: Label| Label::ALL.iter().position(|x| *x == l).unwrap();
    let mut m = vec![vec![0u64; 5]; 5];
    for (la, lb) in pairs {
        m[idx(la)][idx(lb)] += 1;
    }
    kappa_from_confusion(&m)
}

/// Mean over both directions of P(other rater = x | conditioning rater = y).
/// A direction whose conditioning event never occurs is left out; `None`
/// if it never occurs in either direction.
pub fn conditional_label_prob<C>(
    a: &BTreeMap<CandidateKey, Label>,
    b: &BTreeMap<CandidateKey, Label>,
    x: C,
    y: C,
) -> Result<Option<f64>>
where
    C: From<Label> + PartialEq + Copy,
{
    let pairs = shared(a, b)?;
    let direction = |cond_first: bool| {
        let mut given = 0usize;
        let mut both = 0usize;
        for &(la, lb) in &pairs {
            let (cond, other) = if cond_first { (la, lb) } else { (lb, la) };
            if C::from(cond) == y {
                given += 1;
                if C::from(other) == x {
                    both += 1;
                }
            }
        }
        (given > 0).then(|| both as f64 / given as f64)
    };
    let dirs: Vec<f64> = [direction(true), direction(false)].into_iter().flatten().collect();
    Ok((!dirs.is_empty()).then(|| dirs.iter().sum::<f64>() / dirs.len() as f64))
}

/// Majority label among raters; ties go to the worse label.
pub fn resolve_majority(labels: &[Label]) -> Option<Label> {
    let mut counts: HashMap<Label, usize> = HashMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .max_by(|(la, ca), (lb, cb)| ca.cmp(cb).then(la.severity().cmp(&lb.severity())))
        .map(|(l, _)| l)
}

/// Ordered candidate surfaces proposed for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSurfaces {
    pub item_id: String,
    pub surfaces: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdrNdr {
    pub k: usize,
    pub gdr: f64,
    pub ndr: f64,
    pub queries: usize,
    /// Top-k candidates without any annotation (excluded from the rates).
    pub unannotated: usize,
}

fn labels_by_candidate(records: &[AnnotationRecord]) -> HashMap<CandidateKey, Vec<Label>> {
    // Latest record per (candidate, rater).
    let mut latest: BTreeMap<(CandidateKey, String), Label> = BTreeMap::new();
    for r in records {
        latest.insert((r.candidate_key(), r.rater_id.clone()), r.label);
    }
    let mut out: HashMap<CandidateKey, Vec<Label>> = HashMap::new();
    for ((key, _), l) in latest {
        out.entry(key).or_default().push(l);
    }
    out
}

/// Good / nonsense distractor rates (percentages) among the top-k
/// candidates, averaged over queries.
pub fn gdr_ndr(records: &[AnnotationRecord], ranked: &[RankedSurfaces], k: usize) -> Result<GdrNdr> {
    let labels = labels_by_candidate(records);
    let mut gdr_sum = 0.0;
    let mut ndr_sum = 0.0;
    let mut queries = 0usize;
    let mut unannotated = 0usize;
    for q in ranked {
        let mut rated = 0usize;
        let mut good = 0usize;
        let mut nonsense = 0usize;
        for s in q.surfaces.iter().take(k) {
            let key = (q.item_id.clone(), normalize_surface(s));
            match labels.get(&key).and_then(|ls| resolve_majority(ls)) {
                Some(l) => {
                    rated += 1;
                    good += (l == Label::Good) as usize;
                    nonsense += (l == Label::Nonsense) as usize;
                }
                None => unannotated += 1,
            }
        }
        if rated > 0 {
            queries += 1;
            gdr_sum += 100.0 * good as f64 / rated as f64;
            ndr_sum += 100.0 * nonsense as f64 / rated as f64;
        }
    }
    if unannotated > 0 {
        log::warn!("{unannotated} top-{k} candidates have no annotation");
    }
    if queries == 0 {
        return Err(Error::Annotation("no annotated candidates among the rankings".into()));
    }
    Ok(GdrNdr {
        k,
        gdr: gdr_sum / queries as f64,
        ndr: ndr_sum / queries as f64,
        queries,
        unannotated,
    })
}

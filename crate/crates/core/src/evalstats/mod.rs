//! Ranking metrics and annotation statistics.

mod annotation;
mod fisher;
mod metrics;

pub use annotation::{
    cohens_kappa, conditional_label_prob, gdr_ndr, jaccard_label, jaccard_overall, kappa_from_confusion,
    rater_labels, resolve_majority, AnnotationRecord, CandidateKey, FourLevel, GdrNdr, Label, RankedSurfaces,
};
pub use fisher::{fisher_exact, ContingencyTable2x2};
pub use metrics::{
    average_precision, evaluate_run, precision_at_k, recall_at_k, reciprocal_rank, EvalReport, RunResult,
};

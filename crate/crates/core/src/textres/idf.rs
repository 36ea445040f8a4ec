use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::tokenize;
use crate::corpus::Corpus;

/// Smoothed inverse document frequencies: `ln((N + 1) / (df + 1)) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub documents: usize,
    pub df: BTreeMap<String, usize>,
}

impl IdfTable {
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        ((self.documents as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
    }
}

/// One document per item: stem, key and distractors together.
pub fn build_idf(corpus: &Corpus) -> IdfTable {
    let mut df = BTreeMap::new();
    for item in &corpus.items {
        let toks: HashSet<String> = std::iter::once(item.stem.as_str())
            .chain(item.options())
            .flat_map(tokenize)
            .collect();
        for t in toks {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    IdfTable {
        documents: corpus.len(),
        df,
    }
}

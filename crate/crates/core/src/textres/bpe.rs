use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::tokenize;
use crate::corpus::Corpus;

pub const CLS: u32 = 0;
pub const SEP: u32 = 1;
pub const PAD: u32 = 2;
pub const UNK: u32 = 3;

const SPECIALS: [&str; 4] = ["[CLS]", "[SEP]", "[PAD]", "[UNK]"];

/// Byte-pair style subword vocabulary over characters. Ids 0..4 are the
/// specials, then single characters in sorted order, then merge products in
/// merge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubwordVocab {
    tokens: Vec<String>,
    merges: Vec<(String, String)>,
    #[serde(skip)]
    lookup: HashMap<String, u32>,
    #[serde(skip)]
    merge_rank: HashMap<(String, String), usize>,
}

impl SubwordVocab {
    fn from_parts(tokens: Vec<String>, merges: Vec<(String, String)>) -> Self {
        let mut v = SubwordVocab {
            tokens,
            merges,
            lookup: HashMap::new(),
            merge_rank: HashMap::new(),
        };
        v.reindex();
        v
    }

    /// Rebuilds lookup tables after deserialization.
    pub fn reindex(&mut self) {
        self.lookup = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        self.merge_rank = self
            .merges
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.lookup.get(token).copied()
    }

    /// Splits one word into subword strings by applying merges in rank order.
    pub fn encode_word(&self, word: &str) -> Vec<String> {
        let mut parts: Vec<String> = word.chars().map(|c| c.to_string()).collect();
        loop {
            let mut best: Option<(usize, usize)> = None;
            for i in 0..parts.len().saturating_sub(1) {
                let key = (parts[i].clone(), parts[i + 1].clone());
                if let Some(&r) = self.merge_rank.get(&key) {
                    if best.is_none_or(|(_, br)| r < br) {
                        best = Some((i, r));
                    }
                }
            }
            let Some((_, rank)) = best else { break };
            let (a, b) = &self.merges[rank];
            let mut next = Vec::with_capacity(parts.len());
            let mut i = 0;
            while i < parts.len() {
                if i + 1 < parts.len() && &parts[i] == a && &parts[i + 1] == b {
                    next.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    next.push(std::mem::take(&mut parts[i]));
                    i += 1;
                }
            }
            parts = next;
        }
        parts
    }

    /// Token ids for running text (tokenized first); unknown characters map
    /// to [`UNK`].
    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text)
            .iter()
            .flat_map(|w| self.encode_word(w))
            .map(|p| self.id(&p).unwrap_or(UNK))
            .collect()
    }
}

/// Frequency-greedy pair merging over the tokenized corpus text. Ties are
/// broken by the lexicographically smallest pair.
pub fn train_bpe(corpus: &Corpus, n_merges: usize) -> SubwordVocab {
    let mut word_freq: BTreeMap<String, u64> = BTreeMap::new();
    for item in &corpus.items {
        for text in std::iter::once(item.stem.as_str()).chain(item.options()) {
            for w in tokenize(text) {
                *word_freq.entry(w).or_insert(0) += 1;
            }
        }
    }
    let mut words: Vec<(Vec<String>, u64)> = word_freq
        .into_iter()
        .map(|(w, f)| (w.chars().map(|c| c.to_string()).collect(), f))
        .collect();
    let mut chars: Vec<String> = words
        .iter()
        .flat_map(|(w, _)| w.iter().cloned())
        .collect();
    chars.sort();
    chars.dedup();

    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend(chars);
    let mut merges = Vec::new();
    for _ in 0..n_merges {
        let mut counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for (w, f) in &words {
            for pair in w.windows(2) {
                *counts.entry((pair[0].as_str(), pair[1].as_str())).or_insert(0) += f;
            }
        }
        // BTreeMap iterates pairs in lexicographic order, so the first
        // maximum is the smallest pair among ties.
        let mut best: Option<((&str, &str), u64)> = None;
        for (pair, c) in counts {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((pair, c));
            }
        }
        let Some(((a, b), _)) = best else { break };
        let (a, b) = (a.to_string(), b.to_string());
        let merged = format!("{a}{b}");
        for (w, _) in words.iter_mut() {
            let mut i = 0;
            let mut next = Vec::with_capacity(w.len());
            while i < w.len() {
                if i + 1 < w.len() && w[i] == a && w[i + 1] == b {
                    next.push(merged.clone());
                    i += 2;
                } else {
                    next.push(std::mem::take(&mut w[i]));
                    i += 1;
                }
            }
            *w = next;
        }
        if !tokens.contains(&merged) {
            tokens.push(merged);
        }
        merges.push((a, b));
    }
    SubwordVocab::from_parts(tokens, merges)
}

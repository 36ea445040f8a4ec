use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_surface, Corpus};

/// Items connected through shared option surfaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionCluster {
    /// Item ids in corpus order.
    pub items: Vec<String>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components as item indices. Components are ordered by their
/// first item; members keep corpus order.
pub(crate) fn cluster_indices(corpus: &Corpus) -> Vec<Vec<usize>> {
    let n = corpus.items.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    for (i, item) in corpus.items.iter().enumerate() {
        for opt in item.options() {
            let norm = normalize_surface(opt);
            match first_seen.get(&norm) {
                Some(&j) => {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
                None => {
                    first_seen.insert(norm, i);
                }
            }
        }
    }
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let c = *slot.entry(root).or_insert_with(|| {
            clusters.push(Vec::new());
            clusters.len() - 1
        });
        clusters[c].push(i);
    }
    clusters
}

pub fn cluster_questions(corpus: &Corpus) -> Vec<QuestionCluster> {
    cluster_indices(corpus)
        .into_iter()
        .map(|members| QuestionCluster {
            items: members.into_iter().map(|i| corpus.items[i].id.clone()).collect(),
        })
        .collect()
}

/// Every ordered (anchor, positive) pair of distinct items in a cluster.
pub fn make_qsim_pairs(clusters: &[QuestionCluster]) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for c in clusters {
        for a in &c.items {
            for b in &c.items {
                if a != b {
                    pairs.push((a.clone(), b.clone()));
                }
            }
        }
    }
    pairs
}

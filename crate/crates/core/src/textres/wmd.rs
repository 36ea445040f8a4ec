use std::collections::BTreeMap;

use super::StaticEmbeddings;

/// Above this many distinct in-vocabulary tokens on either side the relaxed
/// lower bound is used instead of exact transport.
pub const EXACT_WMD_MAX_DISTINCT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmdResult {
    pub distance: f64,
    /// True when the value is the exact optimal-transport cost.
    pub exact: bool,
    /// True when one side had no in-vocabulary token and the sentinel was used.
    pub sentinel: bool,
}

fn euclid(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Distinct in-vocab tokens with occurrence counts, in sorted token order.
fn bag<'a>(tokens: &'a [String], table: &'a StaticEmbeddings) -> Vec<(&'a [f32], u64)> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for t in tokens {
        if table.vector(t).is_some() {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .map(|(t, c)| (table.vector(t).unwrap(), c))
        .collect()
}

/// Word mover's distance between two token sequences with Euclidean ground
/// cost; each side's mass is spread uniformly over its in-vocabulary token
/// occurrences.
///
/// If either side is entirely out of vocabulary the result is the sentinel
/// `1 + max pairwise cost` among the in-vocabulary tokens that are present
/// (1.0 when fewer than two exist).
pub fn wmd(a: &[String], b: &[String], table: &StaticEmbeddings) -> WmdResult {
    let ba = bag(a, table);
    let bb = bag(b, table);
    if ba.is_empty() || bb.is_empty() {
        let present: Vec<&[f32]> = ba.iter().chain(&bb).map(|(v, _)| *v).collect();
        let mut max = 0.0f64;
        for i in 0..present.len() {
            for j in i + 1..present.len() {
                max = max.max(euclid(present[i], present[j]));
            }
        }
        return WmdResult {
            distance: 1.0 + max,
            exact: false,
            sentinel: true,
        };
    }
    let cost: Vec<Vec<f64>> = ba
        .iter()
        .map(|(u, _)| bb.iter().map(|(v, _)| euclid(u, v)).collect())
        .collect();
    if ba.len() <= EXACT_WMD_MAX_DISTINCT && bb.len() <= EXACT_WMD_MAX_DISTINCT {
        WmdResult {
            distance: exact_transport(&ba, &bb, &cost),
            exact: true,
            sentinel: false,
        }
    } else {
        WmdResult {
            distance: relaxed_transport(&ba, &bb, &cost),
            exact: false,
            sentinel: false,
        }
    }
}

/// Max of the two directed nearest-neighbour averages; a lower bound on the
/// exact transport cost.
pub(crate) fn relaxed_transport(
    a: &[(&[f32], u64)],
    b: &[(&[f32], u64)],
    cost: &[Vec<f64>],
) -> f64 {
    let na: u64 = a.iter().map(|x| x.1).sum();
    let nb: u64 = b.iter().map(|x| x.1).sum();
    let ab: f64 = a
        .iter()
        .enumerate()
        .map(|(i, (_, c))| *c as f64 * cost[i].iter().cloned().fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / na as f64;
    let ba: f64 = b
        .iter()
        .enumerate()
        .map(|(j, (_, c))| *c as f64 * cost.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / nb as f64;
    ab.max(ba)
}

/// Exact transport by successive shortest paths on integer masses: token i
/// of `a` supplies count_i * |b|, token j of `b` demands count_j * |a|.
pub(crate) fn exact_transport(
    a: &[(&[f32], u64)],
    b: &[(&[f32], u64)],
    cost: &[Vec<f64>],
) -> f64 {
    let na: u64 = a.iter().map(|x| x.1).sum();
    let nb: u64 = b.iter().map(|x| x.1).sum();
    let (m, n) = (a.len(), b.len());
    // Nodes: 0 = source, 1..=m sources, m+1..=m+n sinks, m+n+1 = sink.
    let nodes = m + n + 2;
    let src = 0;
    let dst = m + n + 1;
    struct Edge {
        to: usize,
        cap: u64,
        cost: f64,
    }
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let add = |edges: &mut Vec<Edge>, adj: &mut Vec<Vec<usize>>, u: usize, v: usize, cap: u64, c: f64| {
        adj[u].push(edges.len());
        edges.push(Edge { to: v, cap, cost: c });
        adj[v].push(edges.len());
        edges.push(Edge { to: u, cap: 0, cost: -c });
    };
    for (i, (_, c)) in a.iter().enumerate() {
        add(&mut edges, &mut adj, src, 1 + i, c * nb, 0.0);
    }
    for (j, (_, c)) in b.iter().enumerate() {
        add(&mut edges, &mut adj, 1 + m + j, dst, c * na, 0.0);
    }
    for i in 0..m {
        for j in 0..n {
            add(&mut edges, &mut adj, 1 + i, 1 + m + j, na * nb, cost[i][j]);
        }
    }
    let total = na * nb;
    let mut sent = 0u64;
    let mut total_cost = 0.0f64;
    while sent < total {
        // Bellman-Ford over the residual graph.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev: Vec<Option<usize>> = vec![None; nodes];
        dist[src] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &adj[u] {
                    let edge = &edges[e];
                    if edge.cap > 0 && dist[u] + edge.cost < dist[edge.to] - 1e-12 {
                        dist[edge.to] = dist[u] + edge.cost;
                        prev[edge.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[dst] == f64::INFINITY {
            break;
        }
        let mut push = total - sent;
        let mut v = dst;
        while let Some(e) = prev[v] {
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = dst;
        while let Some(e) = prev[v] {
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            total_cost += push as f64 * edges[e].cost;
            v = edges[e ^ 1].to;
        }
        sent += push;
    }
    (total_cost / total as f64).max(0.0)
}

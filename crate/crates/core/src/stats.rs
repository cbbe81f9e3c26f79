//! Graph statistics: node / edge histograms, degree buckets, mean density
//! and similarity-threshold sweeps.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::construct::{similarity_counts, Graph};
use crate::symbolize::Method;
use crate::Result;

pub const NUM_BUCKETS: usize = 10;

/// Degree-bucket labels: pairs of degrees, with everything from 18 up in
/// the last bucket.
pub const BUCKET_LABELS: [&str; NUM_BUCKETS] = [
    "0,1", "2,3", "4,5", "6,7", "8,9", "10,11", "12,13", "14,15", "16,17", ">=18",
];

/// Representative degree of each bucket for the bucket-weighted density
/// estimate; the open-ended last bucket uses its lower bound.
const BUCKET_MIDPOINTS: [f64; NUM_BUCKETS] =
    [0.5, 2.5, 4.5, 6.5, 8.5, 10.5, 12.5, 14.5, 16.5, 18.0];

pub fn bucket_of(degree: usize) -> usize {
    (degree / 2).min(NUM_BUCKETS - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub node_kind_histogram: BTreeMap<String, usize>,
    pub edge_code_histogram: BTreeMap<u16, usize>,
    pub view_histogram: BTreeMap<String, usize>,
    pub degree_buckets: [usize; NUM_BUCKETS],
    /// Most frequent node kind per bucket (ties broken by name).
    pub bucket_main_kind: Vec<Option<String>>,
    /// Exact average degree, `Σ deg(v) / |V|`.
    pub rho_mean: f64,
    /// Bucket-weighted estimate of the same quantity.
    pub rho_bucket_estimate: f64,
}

/// Undirected degree of every node: each edge adds one to both endpoints.
pub fn degrees(graph: &Graph) -> Vec<usize> {
    let mut deg = alloc::vec![0usize; graph.num_nodes()];
    for e in graph.edges() {
        deg[e.head as usize] += 1;
        deg[e.tail as usize] += 1;
    }
    deg
}

pub fn compute_stats(graph: &Graph) -> Stats {
    let deg = degrees(graph);
    let mut node_kind_histogram = BTreeMap::new();
    let mut buckets = [0usize; NUM_BUCKETS];
    let mut bucket_kinds: Vec<BTreeMap<&'static str, usize>> =
        alloc::vec![BTreeMap::new(); NUM_BUCKETS];
    for (node, &d) in graph.nodes().nodes().iter().zip(&deg) {
        *node_kind_histogram
            .entry(node.kind.name().to_string())
            .or_insert(0) += 1;
        let b = bucket_of(d);
        buckets[b] += 1;
        *bucket_kinds[b].entry(node.kind.name()).or_insert(0) += 1;
    }
    let mut edge_code_histogram = BTreeMap::new();
    let mut view_histogram = BTreeMap::new();
    for e in graph.edges() {
        *edge_code_histogram.entry(e.code).or_insert(0) += 1;
        *view_histogram
            .entry(graph.view_of(e).name().to_string())
            .or_insert(0) += 1;
    }
    let bucket_main_kind = bucket_kinds
        .iter()
        .map(|m| {
            m.iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(k, _)| (*k).to_string())
        })
        .collect();
    let n = graph.num_nodes();
    let (rho_mean, rho_bucket_estimate) = if n == 0 {
        (0.0, 0.0)
    } else {
        let total: usize = deg.iter().sum();
        let est: f64 = buckets
            .iter()
            .zip(BUCKET_MIDPOINTS)
            .map(|(&c, m)| c as f64 * m)
            .sum();
        (total as f64 / n as f64, est / n as f64)
    };
    Stats {
        num_nodes: n,
        num_edges: graph.num_triples(),
        node_kind_histogram,
        edge_code_histogram,
        view_histogram,
        degree_buckets: buckets,
        bucket_main_kind,
        rho_mean,
        rho_bucket_estimate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    /// Similarity edges at this threshold.
    pub edge_count: usize,
    /// Mean degree if the graph's similarity edges were rebuilt at `tau`.
    pub rho_mean: f64,
}

/// Re-thresholds the graph's similarity views at each `tau` (ascending).
/// Non-similarity edges are held fixed.
pub fn tau_sweep(graph: &Graph, taus: &[f64]) -> Result<Vec<SweepPoint>> {
    let counts = similarity_counts(graph.nodes(), taus)?;
    let fixed = graph
        .edges()
        .iter()
        .filter(|e| graph.method_of(e) != Method::Cosine)
        .count();
    let n = graph.num_nodes();
    Ok(taus
        .iter()
        .zip(counts)
        .map(|(&tau, edge_count)| SweepPoint {
            tau,
            edge_count,
            rho_mean: if n == 0 {
                0.0
            } else {
                2.0 * (fixed + edge_count) as f64 / n as f64
            },
        })
        .collect())
}

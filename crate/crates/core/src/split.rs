//! Seeded train / validation / test partitions of a graph, either by
//! triple or by whole fact.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::construct::Graph;
use crate::features::Owner;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Triples are shuffled and cut directly.
    Triple,
    /// Whole facts (with all their descendants) are assigned together.
    Fact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// How partitions are named when reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    TrainValTest,
    PretrainFinetuneTest,
}

impl Scheme {
    pub fn name(self, p: Partition) -> &'static str {
        match (self, p) {
            (Scheme::TrainValTest, Partition::Train) => "train",
            (Scheme::TrainValTest, Partition::Val) => "val",
            (Scheme::PretrainFinetuneTest, Partition::Train) => "pretrain",
            (Scheme::PretrainFinetuneTest, Partition::Val) => "finetune",
            (_, Partition::Test) => "test",
        }
    }

    pub fn parse(&self, name: &str) -> Option<Partition> {
        Partition::ALL.into_iter().find(|&p| self.name(p) == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub mode: SplitMode,
    #[serde(default)]
    pub scheme: Scheme,
    pub ratios: [f64; 3],
    pub seed: u64,
    /// Partition of every graph edge, indexed like `Graph::edges`.
    pub edges: Vec<Partition>,
    /// Fact mode only: partition of every owning corpus item.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub units: Vec<(Owner, Partition)>,
}

impl Split {
    pub fn edge_indices(&self, p: Partition) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, &q)| q == p)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for p in &self.edges {
            c[p.index()] += 1;
        }
        c
    }
}

/// Hamilton apportionment of `n` units to the three ratios: floors first,
/// then the leftover units go to the largest fractional parts (earlier
/// partitions win ties).
pub fn largest_remainder(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| r * n as f64);
    let mut sizes = quotas.map(|q| libm::floor(q) as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - libm::floor(quotas[a]);
        let fb = quotas[b] - libm::floor(quotas[b]);
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

fn check_ratios(r: [f64; 3]) -> Result<()> {
    if r.iter().any(|&x| !(x > 0.0)) || ((r[0] + r[1] + r[2]) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must be positive and sum to 1, got {r:?}"
        )));
    }
    Ok(())
}

fn assign(n: usize, ratios: [f64; 3], seed: u64, tag: &str) -> Vec<Partition> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::derived(seed, tag, 0));
    let sizes = largest_remainder(n, ratios);
    let mut out = alloc::vec![Partition::Train; n];
    let mut cursor = 0;
    for (p, size) in Partition::ALL.into_iter().zip(sizes) {
        for &i in &order[cursor..cursor + size] {
            out[i] = p;
        }
        cursor += size;
    }
    out
}

/// Partitions `graph` with a seeded shuffle.
///
/// In fact mode the units are the corpus items owning nodes (news facts,
/// and image-text pairs for pair corpora). An edge lands in a partition
/// when both endpoints' owners do; edges crossing partitions go to train.
pub fn split(graph: &Graph, ratios: [f64; 3], mode: SplitMode, seed: u64) -> Result<Split> {
    check_ratios(ratios)?;
    let (edges, units) = match mode {
        SplitMode::Triple => (
            assign(graph.num_triples(), ratios, seed, "split-triple"),
            Vec::new(),
        ),
        SplitMode::Fact => {
            let owners: Vec<Owner> = graph
                .nodes()
                .nodes()
                .iter()
                .map(|n| n.origin.owner())
                .collect::<alloc::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let parts = assign(owners.len(), ratios, seed, "split-fact");
            let of: BTreeMap<Owner, Partition> =
                owners.iter().copied().zip(parts.iter().copied()).collect();
            let owner_part = |id: u32| {
                of[&graph
                    .nodes()
                    .node(id)
                    .expect("validated edge")
                    .origin
                    .owner()]
            };
            let edges = graph
                .edges()
                .iter()
                .map(|e| {
                    let (a, b) = (owner_part(e.head), owner_part(e.tail));
                    if a == b {
                        a
                    } else {
                        Partition::Train
                    }
                })
                .collect();
            (edges, owners.into_iter().zip(parts).collect())
        }
    };
    Ok(Split {
        mode,
        scheme: Scheme::default(),
        ratios,
        seed,
        edges,
        units,
    })
}

//! Link prediction over graph triples: translation embeddings, the
//! neighbour-aggregation plug-in, margin-ranking training and filtered
//! ranking evaluation.

mod embedding;
mod plugin;
mod ranking;
pub mod synthetic;
mod train;

pub use embedding::{init_embeddings, transe_distance, transe_score, EmbeddingTable, Norm};
pub use plugin::{sample_neighbors, PluginCache, PluginConfig, PluginGrads, PluginParams};
pub use ranking::{
    evaluate, expected_random_mrr, filtered_rank, metrics_from_ranks, rank_answer, raw_rank,
    Direction, FilterIndex, LinkScorer, Metrics, TripleQuery,
};
pub use train::{margin_step, train, Model, ModelScorer, TrainConfig};

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::construct::Graph;
use crate::split::{Partition, Split};
use crate::symbolize::NUM_CODES;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: u32,
    pub relation: u16,
    pub tail: u32,
}

impl Triple {
    pub fn new(head: u32, relation: u16, tail: u32) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Training view of a knowledge graph: the entity / relation vocabulary,
/// the training triples, and the undirected neighbourhoods the plug-in
/// aggregates over (built from training triples only).
#[derive(Debug, Clone, PartialEq)]
pub struct KgData {
    pub num_entities: usize,
    pub num_relations: usize,
    pub train: Vec<Triple>,
    pub neighbors: Vec<Vec<u32>>,
}

impl KgData {
    pub fn new(num_entities: usize, num_relations: usize, train: Vec<Triple>) -> Result<Self> {
        let mut sets = alloc::vec![BTreeSet::new(); num_entities];
        for t in &train {
            if t.head as usize >= num_entities
                || t.tail as usize >= num_entities
                || t.relation as usize >= num_relations
            {
                return Err(Error::invalid(alloc::format!(
                    "triple {t:?} outside the vocabulary"
                )));
            }
            if t.head != t.tail {
                sets[t.head as usize].insert(t.tail);
                sets[t.tail as usize].insert(t.head);
            }
        }
        let neighbors = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        Ok(Self {
            num_entities,
            num_relations,
            train,
            neighbors,
        })
    }

    /// Triples of one partition of a split graph; every graph node is an
    /// entity and every edge code a relation.
    pub fn from_split(graph: &Graph, split: &Split, partition: Partition) -> Result<Self> {
        Self::new(
            graph.num_nodes(),
            NUM_CODES,
            split_triples(graph, split, partition)?,
        )
    }
}

pub fn graph_triples(graph: &Graph) -> Vec<Triple> {
    graph
        .edges()
        .iter()
        .map(|e| Triple::new(e.head, e.code, e.tail))
        .collect()
}

pub fn split_triples(graph: &Graph, split: &Split, partition: Partition) -> Result<Vec<Triple>> {
    if split.edges.len() != graph.num_triples() {
        return Err(Error::invalid(alloc::format!(
            "split covers {} edges but the graph has {}",
            split.edges.len(),
            graph.num_triples()
        )));
    }
    Ok(graph
        .edges()
        .iter()
        .zip(&split.edges)
        .filter(|(_, &p)| p == partition)
        .map(|(e, _)| Triple::new(e.head, e.code, e.tail))
        .collect())
}

//! The knowledge embedding `z^k`, the three-way image / text / knowledge
//! score, and event-cluster retrieval and classification metrics.

mod retrieval;

pub use retrieval::{classification_eval, retrieval_eval, RetrievalMode};

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::construct::Graph;
use crate::math;
use crate::reasoning::ModelScorer;
use crate::symbolize::{Level, Modality, NodeKind, NodeTable};
use crate::{Error, Result};

/// A per-node vector lookup: stored node features or learned
/// representations.
pub trait NodeEmbeddings {
    fn dim(&self) -> usize;

    /// `None` when the node has no vector.
    fn vector(&self, id: u32) -> Option<Vec<f64>>;
}

impl NodeEmbeddings for NodeTable {
    fn dim(&self) -> usize {
        self.embeddings().dim
    }

    fn vector(&self, id: u32) -> Option<Vec<f64>> {
        self.embedding(id)
    }
}

impl NodeEmbeddings for ModelScorer {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn vector(&self, id: u32) -> Option<Vec<f64>> {
        use crate::reasoning::LinkScorer;
        ((id as usize) < self.num_entities()).then(|| self.entity(id).to_vec())
    }
}

/// Pooled neighbour embeddings in the order I_in, T_in, I_cross, T_cross.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEmbedding {
    pub blocks: [Vec<f64>; 4],
}

impl KnowledgeEmbedding {
    pub fn new(blocks: [Vec<f64>; 4]) -> Result<Self> {
        let d = blocks[0].len();
        if blocks.iter().any(|b| b.len() != d) {
            return Err(Error::invalid("knowledge blocks differ in length"));
        }
        Ok(Self { blocks })
    }

    pub fn dim(&self) -> usize {
        self.blocks[0].len()
    }

    /// In-order concatenation, length `4d`.
    pub fn concat(&self) -> Vec<f64> {
        self.blocks.concat()
    }

    /// Elementwise mean of the four blocks, length `d`.
    pub fn projected(&self) -> Vec<f64> {
        let rows = self.blocks.iter().map(Vec::as_slice);
        math::mean(rows, self.dim()).expect("four blocks")
    }
}

fn l2_node(nodes: &NodeTable, id: u32, modality: Modality) -> Result<()> {
    let n = nodes
        .node(id)
        .ok_or_else(|| Error::invalid(alloc::format!("node {id} does not exist")))?;
    if n.level() != Level::L2 || n.modality() != modality {
        return Err(Error::invalid(alloc::format!(
            "node {id} has kind {}, expected an L2 {modality:?} node",
            n.kind.name()
        )));
    }
    Ok(())
}

/// Distinct neighbours of `id` (either edge direction) accepted by `keep`.
fn neighbours(graph: &Graph, id: u32, keep: impl Fn(NodeKind) -> bool) -> BTreeSet<u32> {
    let nodes = graph.nodes();
    graph
        .edges()
        .iter()
        .filter_map(|e| match (e.head == id, e.tail == id) {
            (true, false) => Some(e.tail),
            (false, true) => Some(e.head),
            _ => None,
        })
        .filter(|&n| nodes.node(n).is_some_and(|node| keep(node.kind)))
        .collect()
}

fn pool(ids: &BTreeSet<u32>, source: &dyn NodeEmbeddings) -> Result<Vec<f64>> {
    let d = source.dim();
    let vecs: Vec<Vec<f64>> = ids.iter().filter_map(|&i| source.vector(i)).collect();
    if let Some(v) = vecs.iter().find(|v| v.len() != d) {
        return Err(Error::invalid(alloc::format!(
            "embedding of length {} in a {d}-dimensional source",
            v.len()
        )));
    }
    Ok(math::mean(vecs.iter().map(Vec::as_slice), d).unwrap_or_else(|| alloc::vec![0.0; d]))
}

/// `z^k` for an image / text pair: mean object vectors around the image,
/// mean entity vectors around the text, mean L2 image neighbours of the
/// image and mean L2 text neighbours of the text. Views without any vector
/// give a zero block.
pub fn build_zk(
    image: u32,
    text: u32,
    graph: &Graph,
    source: &dyn NodeEmbeddings,
) -> Result<KnowledgeEmbedding> {
    let nodes = graph.nodes();
    l2_node(nodes, image, Modality::Image)?;
    l2_node(nodes, text, Modality::Text)?;
    let l2 = |m: Modality| move |k: NodeKind| k.level() == Level::L2 && k.modality() == m;
    let blocks = [
        pool(&neighbours(graph, image, |k| k == NodeKind::Object), source)?,
        pool(&neighbours(graph, text, |k| k == NodeKind::Entity), source)?,
        pool(&neighbours(graph, image, l2(Modality::Image)), source)?,
        pool(&neighbours(graph, text, l2(Modality::Text)), source)?,
    ];
    KnowledgeEmbedding::new(blocks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TikScore {
    /// `cos(zT, zI)`, `cos(zk′, zI)`, `cos(zk′, zT)`.
    pub terms: [f64; 3],
    pub total: f64,
}

/// `cos(zT, zI) + cos(zk′, zI) + cos(zk′, zT)` with `zk′` the block mean.
/// A zero `zk′` contributes 0 to both knowledge terms.
pub fn score_tik(z_t: &[f64], z_i: &[f64], zk: &KnowledgeEmbedding) -> Result<TikScore> {
    if math::is_zero(z_t) || math::is_zero(z_i) {
        return Err(Error::UndefinedSimilarity);
    }
    let kp = zk.projected();
    let text_image = math::cosine(z_t, z_i)?;
    let (k_image, k_text) = if math::is_zero(&kp) {
        if kp.len() != z_i.len() {
            return Err(Error::invalid(
                "knowledge embedding and inputs differ in dimension",
            ));
        }
        (0.0, 0.0)
    } else {
        (math::cosine(&kp, z_i)?, math::cosine(&kp, z_t)?)
    };
    let terms = [text_image, k_image, k_text];
    Ok(TikScore {
        terms,
        total: terms[0] + terms[1] + terms[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{build_graph, BuildConfig};
    use crate::testutil::{toy_corpus, toy_features};
    use alloc::collections::BTreeMap;
    use alloc::vec;

    struct MapSource(usize, BTreeMap<u32, Vec<f64>>);

    impl NodeEmbeddings for MapSource {
        fn dim(&self) -> usize {
            self.0
        }
        fn vector(&self, id: u32) -> Option<Vec<f64>> {
            self.1.get(&id).cloned()
        }
    }

    fn kinds(graph: &Graph, kind: NodeKind) -> Vec<u32> {
        let mut v: Vec<u32> = graph
            .nodes()
            .nodes()
            .iter()
            .filter(|n| n.kind == kind)
            .map(|n| n.id)
            .collect();
        v.sort_unstable();
        v
    }

    #[test]
    fn object_block_is_the_hand_mean() {
        let c = toy_corpus(1);
        let g = build_graph(&c, &toy_features(&c, 2, 0), &BuildConfig::default()).unwrap();
        let image = kinds(&g, NodeKind::Image)[0];
        let title = kinds(&g, NodeKind::Title)[0];
        let objects = kinds(&g, NodeKind::Object);
        assert_eq!(objects.len(), 2);
        let src = MapSource(
            2,
            [(objects[0], vec![1.0, 0.0]), (objects[1], vec![0.0, 1.0])]
                .into_iter()
                .collect(),
        );
        let zk = build_zk(image, title, &g, &src).unwrap();
        assert_eq!(zk.blocks[0], vec![0.5, 0.5]);
        // The title has no entities.
        assert_eq!(zk.blocks[1], vec![0.0, 0.0]);
        assert_eq!(zk.concat().len(), 8);
        assert_eq!(zk.projected(), vec![0.125, 0.125]);
    }

    #[test]
    fn build_zk_checks_node_roles() {
        let c = toy_corpus(1);
        let g = build_graph(&c, &toy_features(&c, 1, 1), &BuildConfig::default()).unwrap();
        let image = kinds(&g, NodeKind::Image)[0];
        let title = kinds(&g, NodeKind::Title)[0];
        assert!(build_zk(title, image, &g, g.nodes()).is_err());
        assert!(build_zk(image, 999, &g, g.nodes()).is_err());
        let zk = build_zk(image, title, &g, g.nodes()).unwrap();
        assert_eq!(zk.dim(), 8);
        assert!(!math::is_zero(&zk.blocks[0]));
        assert!(!math::is_zero(&zk.blocks[1]));
    }

    #[test]
    fn score_examples() {
        let u = vec![0.6, 0.8, 0.0];
        let zk = KnowledgeEmbedding::new([u.clone(), u.clone(), u.clone(), u.clone()]).unwrap();
        assert_eq!(score_tik(&u, &u, &zk).unwrap().total, 3.0);

        let (x, y, z) = (
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        );
        let zk = KnowledgeEmbedding::new([z.clone(), z.clone(), z.clone(), z.clone()]).unwrap();
        assert_eq!(score_tik(&x, &y, &zk).unwrap().total, 0.0);
        assert_eq!(score_tik(&x, &[-1.0, 0.0, 0.0], &zk).unwrap().total, -1.0);

        let zero =
            KnowledgeEmbedding::new([vec![0.0; 3], vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]])
                .unwrap();
        let s = score_tik(&x, &x, &zero).unwrap();
        assert_eq!(s.terms, [1.0, 0.0, 0.0]);
        assert_eq!(
            score_tik(&[0.0; 3], &x, &zk),
            Err(Error::UndefinedSimilarity)
        );
    }
}

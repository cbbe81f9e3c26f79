//! Information symbolization: every fact, image, text, object and entity
//! becomes a node with a level-tagged global id.
//!
//! Ids are first assigned in a canonical order (facts by id; L2 items by
//! owner then field; L3 items by parent then payload index) and then
//! permuted by a seeded shuffle, so the global id carries no positional
//! information while staying reproducible.

mod registry;

pub use registry::{
    codes, edge_registry, EdgeOverride, EdgeRegistry, EdgeType, Method, View, NUM_CODES,
};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::features::{FeatureKey, FeatureStore, Owner, Selector};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
    L3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Fact,
    Image,
    Text,
    Object,
    Entity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Fact,
    Title,
    Content,
    ImageDescription,
    PairText,
    Image,
    PairImage,
    Object,
    Entity,
}

impl NodeKind {
    pub fn modality(self) -> Modality {
        match self {
            NodeKind::Fact => Modality::Fact,
            NodeKind::Title
            | NodeKind::Content
            | NodeKind::ImageDescription
            | NodeKind::PairText => Modality::Text,
            NodeKind::Image | NodeKind::PairImage => Modality::Image,
            NodeKind::Object => Modality::Object,
            NodeKind::Entity => Modality::Entity,
        }
    }

    pub fn level(self) -> Level {
        match self.modality() {
            Modality::Fact => Level::L1,
            Modality::Image | Modality::Text => Level::L2,
            Modality::Object | Modality::Entity => Level::L3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Fact => "fact",
            NodeKind::Title => "title",
            NodeKind::Content => "content",
            NodeKind::ImageDescription => "image_description",
            NodeKind::PairText => "pair_text",
            NodeKind::Image => "image",
            NodeKind::PairImage => "pair_image",
            NodeKind::Object => "object",
            NodeKind::Entity => "entity",
        }
    }

    fn of_selector(s: Selector) -> Self {
        match s {
            Selector::Title => NodeKind::Title,
            Selector::Content => NodeKind::Content,
            Selector::Image(_) => NodeKind::Image,
            Selector::ImageDescription(_) => NodeKind::ImageDescription,
            Selector::PairText => NodeKind::PairText,
            Selector::PairImage => NodeKind::PairImage,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a node came from in the corpus / feature store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Origin {
    Fact {
        fact_id: u64,
    },
    Item {
        key: FeatureKey,
    },
    /// `index` is the detection's position in the image's detection list.
    Object {
        parent: FeatureKey,
        index: u32,
    },
    /// `index` is the position among the parent's distinct entities.
    Entity {
        parent: FeatureKey,
        index: u32,
    },
}

impl Origin {
    /// Corpus item owning this node (facts own themselves).
    pub fn owner(&self) -> Owner {
        match self {
            Origin::Fact { fact_id } => Owner::Fact(*fact_id),
            Origin::Item { key }
            | Origin::Object { parent: key, .. }
            | Origin::Entity { parent: key, .. } => key.owner,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    /// Position in the canonical pre-shuffle order.
    pub canonical: u32,
    pub kind: NodeKind,
    pub origin: Origin,
    /// Structural parent: the fact of a news L2 item, the L2 item of an L3 node.
    pub parent: Option<u32>,
    /// Detection class for objects, NER class for entities.
    pub label: Option<u32>,
    /// Row in the node embedding matrix.
    pub embedding: Option<u32>,
    pub attributes: BTreeMap<String, String>,
}

impl Node {
    pub fn level(&self) -> Level {
        self.kind.level()
    }

    pub fn modality(&self) -> Modality {
        self.kind.modality()
    }
}

/// Row-major `f32` node embeddings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, r: u32) -> &[f32] {
        let r = r as usize;
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_f64(&self, r: u32) -> Vec<f64> {
        self.row(r).iter().map(|&x| x as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    nodes: Vec<Node>,
    seed: u64,
    embeddings: EmbeddingMatrix,
    by_origin: BTreeMap<Origin, u32>,
}

impl NodeTable {
    /// Reassembles a table from stored parts, checking its invariants.
    pub fn from_parts(nodes: Vec<Node>, seed: u64, embeddings: EmbeddingMatrix) -> Result<Self> {
        let n = nodes.len();
        let mut seen_canonical = alloc::vec![false; n];
        let mut by_origin = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if node.id as usize != i {
                return Err(Error::Schema(format!(
                    "node at position {i} has id {}",
                    node.id
                )));
            }
            let c = node.canonical as usize;
            if c >= n || core::mem::replace(&mut seen_canonical[c], true) {
                return Err(Error::Schema(format!("node {i}: bad canonical index {c}")));
            }
            if let Some(p) = node.parent {
                if p as usize >= n {
                    return Err(Error::Schema(format!("node {i}: parent {p} out of range")));
                }
            }
            if let Some(r) = node.embedding {
                if r as usize >= embeddings.rows() {
                    return Err(Error::Schema(format!(
                        "node {i}: embedding row {r} out of range"
                    )));
                }
            }
            if by_origin.insert(node.origin, node.id).is_some() {
                return Err(Error::Schema(format!("node {i}: duplicate origin")));
            }
        }
        if embeddings.dim > 0 && !embeddings.data.len().is_multiple_of(embeddings.dim) {
            return Err(Error::Schema(
                "embedding matrix is not a whole number of rows".into(),
            ));
        }
        Ok(Self {
            nodes,
            seed,
            embeddings,
            by_origin,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: u32) -> Option<&Node> {
        self.nodes.get(id as usize)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    /// Node embedding widened to `f64`.
    pub fn embedding(&self, id: u32) -> Option<Vec<f64>> {
        let row = self.node(id)?.embedding?;
        Some(self.embeddings.row_f64(row))
    }

    pub fn by_origin(&self, origin: &Origin) -> Option<u32> {
        self.by_origin.get(origin).copied()
    }

    pub fn fact_node(&self, fact_id: u64) -> Option<u32> {
        self.by_origin(&Origin::Fact { fact_id })
    }

    pub fn item_node(&self, key: FeatureKey) -> Option<u32> {
        self.by_origin(&Origin::Item { key })
    }

    pub fn count_level(&self, level: Level) -> usize {
        self.nodes.iter().filter(|n| n.level() == level).count()
    }

    /// Nodes sorted back into canonical (pre-shuffle) order.
    pub fn canonical_order(&self) -> Vec<&Node> {
        let mut v: Vec<&Node> = self.nodes.iter().collect();
        v.sort_by_key(|n| n.canonical);
        v
    }
}

struct Pending {
    kind: NodeKind,
    origin: Origin,
    parent_canonical: Option<usize>,
    label: Option<u32>,
    embedding: Option<Vec<f64>>,
    attributes: BTreeMap<String, String>,
}

fn attrs(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| ((*k).to_string(), v.clone()))
        .collect()
}

/// Numbers every corpus item and extracted object / entity.
///
/// One L1 node per news record; one L2 text node per title, content,
/// non-empty image description and pair text; one L2 image node per image;
/// one L3 object node per detection; one L3 entity node per distinct
/// (text node, surface, NER class).
pub fn assign_nodes(corpus: &Corpus, features: &FeatureStore, seed: u64) -> Result<NodeTable> {
    features.check_owners(corpus)?;
    let mut pending: Vec<Pending> = Vec::new();

    let mut news: Vec<_> = corpus.news.iter().collect();
    news.sort_by_key(|n| n.fact_id);
    let mut fact_canonical = BTreeMap::new();
    for n in &news {
        fact_canonical.insert(n.fact_id, pending.len());
        let mut a = attrs(&[
            ("title", n.title.clone()),
            ("time", n.time.clone()),
            ("event_coarse", n.event_coarse.name().to_string()),
            ("event_fine", n.event_fine.clone()),
        ]);
        if !n.event_description.is_empty() {
            a.insert("event_description".into(), n.event_description.clone());
        }
        for (k, v) in &n.event_attributes {
            a.insert(format!("event.{k}"), v.clone());
        }
        pending.push(Pending {
            kind: NodeKind::Fact,
            origin: Origin::Fact { fact_id: n.fact_id },
            parent_canonical: None,
            label: None,
            embedding: None,
            attributes: a,
        });
    }

    // L2 items in (owner, selector) order.
    let mut items: Vec<(FeatureKey, String)> = Vec::new();
    for n in &news {
        let owner = Owner::Fact(n.fact_id);
        items.push((FeatureKey::new(owner, Selector::Title), n.title.clone()));
        items.push((FeatureKey::new(owner, Selector::Content), n.content.clone()));
        for (k, p) in n.image_paths.iter().enumerate() {
            items.push((FeatureKey::new(owner, Selector::Image(k as u32)), p.clone()));
        }
        for (k, d) in n.image_descriptions.iter().enumerate() {
            if !d.is_empty() {
                items.push((
                    FeatureKey::new(owner, Selector::ImageDescription(k as u32)),
                    d.clone(),
                ));
            }
        }
    }
    let mut pairs: Vec<_> = corpus.pairs.iter().collect();
    pairs.sort_by_key(|p| p.pair_id);
    for p in pairs {
        let owner = Owner::Pair(p.pair_id);
        items.push((FeatureKey::new(owner, Selector::PairText), p.text.clone()));
        items.push((
            FeatureKey::new(owner, Selector::PairImage),
            p.image_path.clone(),
        ));
    }
    items.sort_by_key(|item| item.0);

    let mut l2_canonical = Vec::with_capacity(items.len());
    for (key, value) in &items {
        let kind = NodeKind::of_selector(key.selector);
        let field = if key.selector.is_image() {
            "path"
        } else {
            "text"
        };
        let parent_canonical = match key.owner {
            Owner::Fact(id) => fact_canonical.get(&id).copied(),
            Owner::Pair(_) => None,
        };
        l2_canonical.push(pending.len());
        pending.push(Pending {
            kind,
            origin: Origin::Item { key: *key },
            parent_canonical,
            label: None,
            embedding: features.embedding(key).map(<[f64]>::to_vec),
            attributes: attrs(&[(field, value.clone())]),
        });
    }

    for ((key, _), &parent) in items.iter().zip(&l2_canonical) {
        for (i, d) in features.detections(key).iter().enumerate() {
            let [x0, y0, x1, y1] = d.bbox;
            pending.push(Pending {
                kind: NodeKind::Object,
                origin: Origin::Object {
                    parent: *key,
                    index: i as u32,
                },
                parent_canonical: Some(parent),
                label: Some(d.class_index),
                embedding: Some(d.crop_embedding.clone()),
                attributes: attrs(&[
                    ("class_index", d.class_index.to_string()),
                    ("box", format!("{x0},{y0},{x1},{y1}")),
                ]),
            });
        }
        let mut distinct: Vec<(&str, u32)> = Vec::new();
        for e in features.entities(key) {
            if distinct.contains(&(e.surface.as_str(), e.ner_index)) {
                continue;
            }
            distinct.push((e.surface.as_str(), e.ner_index));
            pending.push(Pending {
                kind: NodeKind::Entity,
                origin: Origin::Entity {
                    parent: *key,
                    index: (distinct.len() - 1) as u32,
                },
                parent_canonical: Some(parent),
                label: Some(e.ner_index),
                embedding: e.embedding.clone(),
                attributes: attrs(&[
                    ("surface", e.surface.clone()),
                    ("ner_index", e.ner_index.to_string()),
                    ("span", format!("{},{}", e.span[0], e.span[1])),
                ]),
            });
        }
    }

    let n = pending.len();
    let mut perm: Vec<u32> = (0..n as u32).collect();
    perm.shuffle(&mut rng::derived(seed, "node-shuffle", 0));

    let mut nodes: Vec<Option<Node>> = (0..n).map(|_| None).collect();
    for (canonical, p) in pending.iter().enumerate() {
        let id = perm[canonical];
        let kind = p.kind;
        let mut attributes = p.attributes.clone();
        attributes.insert("level".into(), format!("{:?}", kind.level()));
        attributes.insert(
            "modality".into(),
            format!("{:?}", kind.modality()).to_lowercase(),
        );
        attributes.insert("kind".into(), kind.name().into());
        attributes.insert("origin".into(), origin_label(&p.origin));
        nodes[id as usize] = Some(Node {
            id,
            canonical: canonical as u32,
            kind,
            origin: p.origin,
            parent: p.parent_canonical.map(|c| perm[c]),
            label: p.label,
            embedding: None,
            attributes,
        });
    }
    let mut nodes: Vec<Node> = nodes
        .into_iter()
        .map(|n| n.expect("perm is a bijection"))
        .collect();

    // Embedding rows follow global id order.
    let dim = features.dim().unwrap_or(0);
    let mut data = Vec::new();
    let mut rows = 0u32;
    for node in nodes.iter_mut() {
        if let Some(v) = &pending[node.canonical as usize].embedding {
            data.extend(v.iter().map(|&x| x as f32));
            node.embedding = Some(rows);
            node.attributes.insert("embedding".into(), rows.to_string());
            rows += 1;
        }
    }
    NodeTable::from_parts(nodes, seed, EmbeddingMatrix { dim, data })
}

fn origin_label(o: &Origin) -> String {
    match o {
        Origin::Fact { fact_id } => format!("fact:{fact_id}"),
        Origin::Item { key } => key.to_string(),
        Origin::Object { parent, index } => format!("{parent}/object[{index}]"),
        Origin::Entity { parent, index } => format!("{parent}/entity[{index}]"),
    }
}

//! Knowledge construction: materializes edges for the five knowledge views
//! and assembles the immutable multimodal graph.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, NewsRecord};
use crate::features::{FeatureKey, FeatureStore, Owner, Selector, DETECTION_CLASSES, NER_CLASSES};
use crate::math;
use crate::symbolize::{
    assign_nodes, codes, EdgeRegistry, Level, Method, NodeKind, NodeTable, View,
};
use crate::{Error, Result};

/// One `<head, relation, tail>` triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub head: u32,
    pub code: u16,
    pub tail: u32,
    /// 1.0 for categorical / annotation edges, the cosine for similarity edges.
    pub weight: f64,
}

impl Edge {
    pub fn new(head: u32, code: u16, tail: u32) -> Self {
        Self {
            head,
            code,
            tail,
            weight: 1.0,
        }
    }

    pub fn key(&self) -> (u32, u16, u32) {
        (self.head, self.code, self.tail)
    }
}

/// Edges internal to one image (objects, codes 000–079) or one text
/// (entities, codes 080–097).
pub fn build_internal_edges(nodes: &NodeTable) -> Result<Vec<Edge>> {
    let mut out = Vec::new();
    for n in nodes.nodes() {
        let (Some(parent), Some(label)) = (n.parent, n.label) else {
            continue;
        };
        let code = match n.kind {
            NodeKind::Object if (label as usize) < DETECTION_CLASSES => label as u16,
            NodeKind::Entity if (label as usize) < NER_CLASSES => codes::NER_BASE + label as u16,
            NodeKind::Object | NodeKind::Entity => {
                return Err(Error::RegistryViolation(format!(
                    "node {}: {} class {label} has no edge code",
                    n.id, n.kind
                )))
            }
            _ => continue,
        };
        out.push(Edge::new(parent, code, n.id));
    }
    Ok(out)
}

struct FactNodes {
    fact: u32,
    title: Option<u32>,
    content: Option<u32>,
    images: Vec<u32>,
}

fn fact_nodes(nodes: &NodeTable, n: &NewsRecord) -> Option<FactNodes> {
    let owner = Owner::Fact(n.fact_id);
    let item = |s| nodes.item_node(FeatureKey::new(owner, s));
    Some(FactNodes {
        fact: nodes.fact_node(n.fact_id)?,
        title: item(Selector::Title),
        content: item(Selector::Content),
        images: (0..n.image_paths.len() as u32)
            .filter_map(|k| item(Selector::Image(k)))
            .collect(),
    })
}

fn undirected(a: u32, code: u16, b: u32) -> Edge {
    Edge::new(a.min(b), code, a.max(b))
}

/// Structural and event annotation edges (codes 098–104, 106–109).
///
/// Same-event relations group facts by their (coarse, fine) event label and
/// skip facts with an empty fine label. Time continuity (107) links the
/// contents of consecutive facts within a coarse category, ordered by
/// `(time, fact_id)`.
pub fn build_annotation_edges(nodes: &NodeTable, news: &[NewsRecord]) -> Vec<Edge> {
    let mut out = Vec::new();
    let mut sorted: Vec<&NewsRecord> = news.iter().collect();
    sorted.sort_by_key(|n| n.fact_id);
    let resolved: Vec<(&NewsRecord, FactNodes)> = sorted
        .into_iter()
        .filter_map(|n| Some((n, fact_nodes(nodes, n)?)))
        .collect();

    for (n, f) in &resolved {
        if let Some(t) = f.title {
            out.push(Edge::new(f.fact, codes::FACT_TITLE, t));
        }
        if let Some(c) = f.content {
            out.push(Edge::new(f.fact, codes::FACT_CONTENT, c));
        }
        for (k, &img) in f.images.iter().enumerate() {
            out.push(Edge::new(f.fact, codes::FACT_IMAGE, img));
            let desc =
                FeatureKey::new(Owner::Fact(n.fact_id), Selector::ImageDescription(k as u32));
            if let Some(d) = nodes.item_node(desc) {
                out.push(Edge::new(img, codes::IMAGE_DESCRIPTION, d));
            }
            if let Some(t) = f.title {
                out.push(Edge::new(img, codes::IMAGE_TITLE, t));
            }
            if let Some(c) = f.content {
                out.push(Edge::new(img, codes::IMAGE_CONTENT, c));
            }
        }
    }

    let mut events: BTreeMap<(usize, &str), Vec<&FactNodes>> = BTreeMap::new();
    for (n, f) in &resolved {
        if !n.event_fine.is_empty() {
            events
                .entry((n.event_coarse.index(), n.event_fine.as_str()))
                .or_default()
                .push(f);
        }
    }
    for group in events.values() {
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                out.push(undirected(a.fact, codes::FACT_FACT_EVENT, b.fact));
                if let (Some(x), Some(y)) = (a.title, b.title) {
                    out.push(undirected(x, codes::TITLE_TITLE_EVENT, y));
                }
                for &x in &a.images {
                    for &y in &b.images {
                        out.push(undirected(x, codes::IMAGE_IMAGE_EVENT, y));
                    }
                }
                if let (Some(c), Some(t)) = (a.content, b.title) {
                    out.push(Edge::new(c, codes::CONTENT_TITLE_EVENT, t));
                }
                if let (Some(c), Some(t)) = (b.content, a.title) {
                    out.push(Edge::new(c, codes::CONTENT_TITLE_EVENT, t));
                }
            }
        }
    }

    let mut by_coarse: BTreeMap<usize, Vec<&(&NewsRecord, FactNodes)>> = BTreeMap::new();
    for r in &resolved {
        by_coarse
            .entry(r.0.event_coarse.index())
            .or_default()
            .push(r);
    }
    for group in by_coarse.values_mut() {
        group.sort_by(|a, b| a.0.time.cmp(&b.0.time).then(a.0.fact_id.cmp(&b.0.fact_id)));
        for w in group.windows(2) {
            if let (Some(x), Some(y)) = (w[0].1.content, w[1].1.content) {
                out.push(Edge::new(x, codes::CONTENT_CONTINUITY, y));
            }
        }
    }
    out
}

/// Which similarity view a pair of L2 nodes belongs to, if any.
///
/// Pair texts are treated as titles (short captions).
pub fn similarity_code(nodes: &NodeTable, a: u32, b: u32) -> Option<u16> {
    use NodeKind::*;
    let (na, nb) = (nodes.node(a)?, nodes.node(b)?);
    let titleish = |k| matches!(k, Title | PairText);
    match (na.kind, nb.kind) {
        (Image | PairImage, Image | PairImage) => {
            let same_fact = matches!(na.origin.owner(), Owner::Fact(_))
                && na.origin.owner() == nb.origin.owner();
            Some(if same_fact {
                codes::IMAGE_SIM
            } else {
                codes::IMAGE_IMAGE_CLIP
            })
        }
        (Content, Content) => Some(codes::CONTENT_CONTENT_CLIP),
        (x, y) if titleish(x) && titleish(y) => Some(codes::TITLE_TITLE_CLIP),
        (x, Content) | (Content, x) if titleish(x) => Some(codes::TITLE_CONTENT_CLIP),
        _ => None,
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("tau must lie in (0, 1], got {tau}")));
    }
    Ok(())
}

/// Nodes that take part in cosine-similarity views, with their embeddings.
fn similarity_participants(nodes: &NodeTable) -> Vec<(u32, Vec<f64>)> {
    nodes
        .nodes()
        .iter()
        .filter(|n| {
            matches!(
                n.kind,
                NodeKind::Image
                    | NodeKind::PairImage
                    | NodeKind::Title
                    | NodeKind::PairText
                    | NodeKind::Content
            )
        })
        .filter_map(|n| nodes.embedding(n.id).map(|v| (n.id, v)))
        .filter(|(_, v)| !math::is_zero(v))
        .collect()
}

/// All candidate similarity pairs with their cosine, `head < tail`.
fn similarity_candidates(nodes: &NodeTable, floor: f64) -> Vec<Edge> {
    let parts = similarity_participants(nodes);
    let mut out = Vec::new();
    for (i, (a, va)) in parts.iter().enumerate() {
        for (b, vb) in &parts[i + 1..] {
            let Some(code) = similarity_code(nodes, *a, *b) else {
                continue;
            };
            let c = math::cosine(va, vb).expect("participants are nonzero and equally sized");
            if c >= floor {
                let mut e = undirected(*a, code, *b);
                e.weight = c;
                out.push(e);
            }
        }
    }
    out
}

/// Cosine-similarity edges (codes 105, 110–113) for every eligible
/// unordered node pair with `cosine >= tau`; the head is the lower id.
///
/// With `topk = Some(k)` an edge is kept only if it ranks among the `k`
/// most similar partners (same code) of at least one endpoint.
pub fn build_similarity_edges(
    nodes: &NodeTable,
    tau: f64,
    topk: Option<usize>,
) -> Result<Vec<Edge>> {
    check_tau(tau)?;
    let mut edges = similarity_candidates(nodes, tau);
    if let Some(k) = topk {
        edges = cap_per_node(edges, k);
    }
    edges.sort_by_key(Edge::key);
    Ok(edges)
}

fn cap_per_node(edges: Vec<Edge>, k: usize) -> Vec<Edge> {
    let mut incident: BTreeMap<(u32, u16), Vec<usize>> = BTreeMap::new();
    for (i, e) in edges.iter().enumerate() {
        incident.entry((e.head, e.code)).or_default().push(i);
        incident.entry((e.tail, e.code)).or_default().push(i);
    }
    let mut keep = alloc::vec![false; edges.len()];
    for ((node, _), mut list) in incident {
        let other = |i: usize| {
            if edges[i].head == node {
                edges[i].tail
            } else {
                edges[i].head
            }
        };
        list.sort_by(|&x, &y| {
            edges[y]
                .weight
                .total_cmp(&edges[x].weight)
                .then(other(x).cmp(&other(y)))
        });
        for &i in list.iter().take(k) {
            keep[i] = true;
        }
    }
    edges
        .into_iter()
        .zip(keep)
        .filter_map(|(e, k)| k.then_some(e))
        .collect()
}

/// Similarity-edge counts for several thresholds from a single all-pairs
/// pass. `taus` must be ascending.
pub fn similarity_counts(nodes: &NodeTable, taus: &[f64]) -> Result<Vec<usize>> {
    if taus.is_empty() {
        return Err(Error::invalid("empty tau list"));
    }
    for &t in taus {
        check_tau(t)?;
    }
    if taus.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("taus must be sorted ascending"));
    }
    let cands = similarity_candidates(nodes, taus[0]);
    Ok(taus
        .iter()
        .map(|&t| cands.iter().filter(|e| e.weight >= t).count())
        .collect())
}

/// The immutable multimodal knowledge graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    nodes: NodeTable,
    edges: Vec<Edge>,
    registry: EdgeRegistry,
    tau: f64,
    build_seed: u64,
    provenance: BTreeMap<String, String>,
}

/// Merges edge lists into a graph: edges are validated, deduplicated on
/// `(head, code, tail)` (first occurrence wins) and sorted.
pub fn assemble_graph(
    nodes: NodeTable,
    registry: EdgeRegistry,
    edge_lists: impl IntoIterator<Item = Vec<Edge>>,
    tau: f64,
    seed: u64,
    provenance: BTreeMap<String, String>,
) -> Result<Graph> {
    let mut edges: Vec<Edge> = edge_lists.into_iter().flatten().collect();
    edges.sort_by_key(Edge::key);
    edges.dedup_by_key(|e| e.key());
    Graph::from_parts(nodes, edges, registry, tau, seed, provenance)
}

impl Graph {
    /// Reassembles a graph from stored parts. Edges must already be sorted
    /// and unique.
    pub fn from_parts(
        nodes: NodeTable,
        edges: Vec<Edge>,
        registry: EdgeRegistry,
        tau: f64,
        build_seed: u64,
        provenance: BTreeMap<String, String>,
    ) -> Result<Self> {
        let n = nodes.len() as u32;
        for e in &edges {
            registry.get(e.code as u32)?;
            if e.head >= n || e.tail >= n || e.head == e.tail {
                return Err(Error::DanglingEdge {
                    head: e.head,
                    code: e.code,
                    tail: e.tail,
                });
            }
        }
        if edges.windows(2).any(|w| w[0].key() >= w[1].key()) {
            return Err(Error::Schema("edges are not sorted and unique".into()));
        }
        Ok(Self {
            nodes,
            edges,
            registry,
            tau,
            build_seed,
            provenance,
        })
    }

    pub fn nodes(&self) -> &NodeTable {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn registry(&self) -> &EdgeRegistry {
        &self.registry
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn build_seed(&self) -> u64 {
        self.build_seed
    }

    pub fn provenance(&self) -> &BTreeMap<String, String> {
        &self.provenance
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triples(&self) -> usize {
        self.edges.len()
    }

    pub fn view_of(&self, e: &Edge) -> View {
        self.registry
            .view(e.code)
            .expect("edges are validated against the registry")
    }

    pub fn method_of(&self, e: &Edge) -> Method {
        self.registry.get(e.code as u32).expect("validated").method
    }

    /// Edge count per view; views without edges are omitted.
    pub fn view_counts(&self) -> BTreeMap<View, usize> {
        let mut m = BTreeMap::new();
        for e in &self.edges {
            *m.entry(self.view_of(e)).or_insert(0) += 1;
        }
        m
    }

    /// Undirected adjacency: for every node, `(neighbour, code)` in edge order.
    pub fn adjacency(&self) -> Vec<Vec<(u32, u16)>> {
        let mut adj = alloc::vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.head as usize].push((e.tail, e.code));
            adj[e.tail as usize].push((e.head, e.code));
        }
        adj
    }

    /// Checks that every L3 node is linked to its L2 parent.
    pub fn check_structure(&self) -> Result<()> {
        let adj = self.adjacency();
        for n in self.nodes.nodes() {
            if n.level() == Level::L3 {
                let p = n
                    .parent
                    .ok_or_else(|| Error::Schema(format!("L3 node {} has no parent", n.id)))?;
                if !adj[n.id as usize].iter().any(|&(m, _)| m == p) {
                    return Err(Error::Schema(format!(
                        "L3 node {} is not linked to its parent {p}",
                        n.id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub tau: f64,
    pub seed: u64,
    pub sim_topk: Option<usize>,
    pub registry: EdgeRegistry,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            tau: 0.8,
            seed: 0,
            sim_topk: None,
            registry: EdgeRegistry::default(),
        }
    }
}

/// Runs symbolization and every edge builder, then assembles the graph.
pub fn build_graph(corpus: &Corpus, features: &FeatureStore, cfg: &BuildConfig) -> Result<Graph> {
    check_tau(cfg.tau)?;
    let nodes = assign_nodes(corpus, features, cfg.seed)?;
    let internal = build_internal_edges(&nodes)?;
    let annotation = build_annotation_edges(&nodes, &corpus.news);
    let similarity = build_similarity_edges(&nodes, cfg.tau, cfg.sim_topk)?;
    let mut provenance = BTreeMap::new();
    provenance.insert("tau".to_string(), format!("{}", cfg.tau));
    provenance.insert("seed".to_string(), cfg.seed.to_string());
    provenance.insert(
        "sim_topk".to_string(),
        cfg.sim_topk
            .map_or_else(|| "unlimited".to_string(), |k| k.to_string()),
    );
    provenance.insert(
        "embedding_dim".to_string(),
        features.dim().unwrap_or(0).to_string(),
    );
    provenance.insert("n_news".to_string(), corpus.news.len().to_string());
    provenance.insert("n_pairs".to_string(), corpus.pairs.len().to_string());
    assemble_graph(
        nodes,
        cfg.registry.clone(),
        [internal, annotation, similarity],
        cfg.tau,
        cfg.seed,
        provenance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PairRecord;
    use crate::features::{FeaturePayload, FeatureRecord};
    use crate::testutil::{toy_corpus, toy_features};
    use alloc::vec;

    fn one_news_with_description() -> Corpus {
        let mut c = toy_corpus(1);
        c.news[0].image_descriptions[0] = "A crowd at the square".into();
        c
    }

    #[test]
    fn single_record_annotation_edges() {
        let corpus = one_news_with_description();
        let nodes = assign_nodes(&corpus, &FeatureStore::default(), 3).unwrap();
        let mut got: Vec<u16> = build_annotation_edges(&nodes, &corpus.news)
            .iter()
            .map(|e| e.code)
            .collect();
        got.sort_unstable();
        assert_eq!(got, [98, 99, 100, 102, 103, 104]);
    }

    #[test]
    fn shared_fine_event_links_facts_once() {
        let mut corpus = toy_corpus(2);
        for n in &mut corpus.news {
            n.event_coarse = crate::corpus::EventCategory::ArmedConflicts;
            n.event_fine = "War in Donbass".into();
        }
        let nodes = assign_nodes(&corpus, &FeatureStore::default(), 3).unwrap();
        let edges = build_annotation_edges(&nodes, &corpus.news);
        assert_eq!(
            edges
                .iter()
                .filter(|e| e.code == codes::FACT_FACT_EVENT)
                .count(),
            1
        );
        assert_eq!(
            edges
                .iter()
                .filter(|e| e.code == codes::TITLE_TITLE_EVENT)
                .count(),
            1
        );
        assert_eq!(
            edges
                .iter()
                .filter(|e| e.code == codes::IMAGE_IMAGE_EVENT)
                .count(),
            1
        );
        assert_eq!(
            edges
                .iter()
                .filter(|e| e.code == codes::CONTENT_TITLE_EVENT)
                .count(),
            2
        );
        assert_eq!(
            edges
                .iter()
                .filter(|e| e.code == codes::CONTENT_CONTINUITY)
                .count(),
            1
        );
    }

    #[test]
    fn pair_only_corpus_has_no_annotation_edges() {
        let corpus = Corpus::new(
            vec![PairRecord {
                pair_id: 0,
                text: "A red bus".into(),
                image_path: "./1.jpg".into(),
            }],
            Vec::new(),
        );
        let nodes = assign_nodes(&corpus, &FeatureStore::default(), 0).unwrap();
        assert!(build_annotation_edges(&nodes, &corpus.news).is_empty());
    }

    #[test]
    fn internal_edge_codes() {
        let corpus = toy_corpus(1);
        let f = toy_features(&corpus, 2, 3);
        let nodes = assign_nodes(&corpus, &f, 0).unwrap();
        let edges = build_internal_edges(&nodes).unwrap();
        for e in &edges {
            let child = nodes.node(e.tail).unwrap();
            let expected = match child.kind {
                NodeKind::Object => child.label.unwrap() as u16,
                NodeKind::Entity => 80 + child.label.unwrap() as u16,
                _ => unreachable!(),
            };
            assert_eq!(e.code, expected);
            assert_eq!(child.parent, Some(e.head));
        }
        assert_eq!(edges.len(), 2 + 3 * 2);
    }

    fn identical_images() -> (Corpus, FeatureStore) {
        let mut corpus = toy_corpus(1);
        corpus.news[0].image_paths.push("./dup.jpg".into());
        corpus.news[0].image_descriptions.push(String::new());
        let v = vec![0.6, 0.8, 0.0];
        let rec = |k| {
            FeatureRecord::new(
                Owner::Fact(0),
                Selector::Image(k),
                FeaturePayload::Embedding(v.clone()),
            )
        };
        (
            corpus,
            FeatureStore::from_records([rec(0), rec(1)]).unwrap(),
        )
    }

    #[test]
    fn identical_images_give_one_imgsim_edge() {
        let (corpus, f) = identical_images();
        let nodes = assign_nodes(&corpus, &f, 0).unwrap();
        let e = build_similarity_edges(&nodes, 0.8, None).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!((e[0].code, e[0].weight), (codes::IMAGE_SIM, 1.0));
        assert!(e[0].head < e[0].tail);
        assert_eq!(build_similarity_edges(&nodes, 1.0, None).unwrap().len(), 1);
    }

    #[test]
    fn threshold_is_inclusive_and_validated() {
        let mut corpus = toy_corpus(2);
        corpus.news[1].title = "other".into();
        // cos = 0.79 exactly representable direction pair
        let a = vec![1.0, 0.0];
        let b = vec![0.79, libm::sqrt(1.0 - 0.79 * 0.79)];
        let f = FeatureStore::from_records([
            FeatureRecord::new(
                Owner::Fact(0),
                Selector::Title,
                FeaturePayload::Embedding(a),
            ),
            FeatureRecord::new(
                Owner::Fact(1),
                Selector::Title,
                FeaturePayload::Embedding(b),
            ),
        ])
        .unwrap();
        let nodes = assign_nodes(&corpus, &f, 0).unwrap();
        assert!(build_similarity_edges(&nodes, 0.8, None)
            .unwrap()
            .is_empty());
        assert_eq!(build_similarity_edges(&nodes, 0.78, None).unwrap().len(), 1);
        assert!(build_similarity_edges(&nodes, 0.0, None).is_err());
        assert!(build_similarity_edges(&nodes, 1.5, None).is_err());
    }

    #[test]
    fn assemble_dedups_and_validates() {
        let corpus = toy_corpus(1);
        let nodes = assign_nodes(&corpus, &FeatureStore::default(), 0).unwrap();
        let e = Edge::new(0, 98, 1);
        let g = assemble_graph(
            nodes.clone(),
            EdgeRegistry::default(),
            [vec![e], vec![e]],
            0.8,
            0,
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(g.num_triples(), 1);
        let g = assemble_graph(
            nodes.clone(),
            EdgeRegistry::default(),
            [],
            0.8,
            0,
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!((g.num_nodes(), g.num_triples()), (4, 0));
        let bad = Edge::new(0, 98, 99);
        assert!(matches!(
            assemble_graph(
                nodes,
                EdgeRegistry::default(),
                [vec![bad]],
                0.8,
                0,
                BTreeMap::new()
            ),
            Err(Error::DanglingEdge { .. })
        ));
    }

    #[test]
    fn topk_caps_partners() {
        let mut corpus = toy_corpus(4);
        for n in &mut corpus.news {
            n.title = "same".into();
        }
        let f = FeatureStore::from_records((0..4).map(|i| {
            FeatureRecord::new(
                Owner::Fact(i),
                Selector::Title,
                FeaturePayload::Embedding(vec![1.0, 0.01 * i as f64]),
            )
        }))
        .unwrap();
        let nodes = assign_nodes(&corpus, &f, 0).unwrap();
        assert_eq!(build_similarity_edges(&nodes, 0.5, None).unwrap().len(), 6);
        let capped = build_similarity_edges(&nodes, 0.5, Some(1)).unwrap();
        assert!(capped.len() < 6 && !capped.is_empty());
    }

    #[test]
    fn toy_build_is_structurally_sound() {
        let corpus = toy_corpus(3);
        let f = toy_features(&corpus, 2, 3);
        let g = build_graph(&corpus, &f, &BuildConfig::default()).unwrap();
        g.check_structure().unwrap();
        assert_eq!(g.view_counts().values().sum::<usize>(), g.num_triples());
        assert_eq!(
            g,
            build_graph(&corpus, &f, &BuildConfig::default()).unwrap()
        );
    }
}

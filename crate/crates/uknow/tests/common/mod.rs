//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use uknow::ingest::load_corpus;
use uknow_core::construct::{build_graph, BuildConfig, Edge, Graph};
use uknow_core::corpus::Corpus;
use uknow_core::features::{
    stub_corpus_records, FeaturePayload, FeatureRecord, FeatureStore, Owner, Selector,
};
use uknow_core::symbolize::{
    EdgeRegistry, EmbeddingMatrix, Node, NodeKind, NodeTable, Origin, View,
};

pub const TOY_DIM: usize = 64;
pub const TOY_SEED: u64 = 7;

pub fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join("toy")
}

/// The shipped toy corpus with stub features (image content is the path,
/// since the toy ships no image files).
pub fn toy_inputs() -> (Corpus, Vec<FeatureRecord>) {
    let (corpus, _) = load_corpus(toy_dir()).expect("toy corpus loads");
    let dir = toy_dir();
    let records = stub_corpus_records(&corpus, TOY_DIM, TOY_SEED, &|p: &str| {
        std::fs::read(dir.join(p)).unwrap_or_else(|_| p.as_bytes().to_vec())
    })
    .expect("stub features");
    (corpus, records)
}

pub fn toy_graph(tau: f64) -> Graph {
    let (corpus, records) = toy_inputs();
    let store = FeatureStore::from_records(records).expect("feature store");
    let cfg = BuildConfig {
        tau,
        seed: TOY_SEED,
        sim_topk: None,
        registry: EdgeRegistry::default(),
    };
    build_graph(&corpus, &store, &cfg).expect("toy graph builds")
}

/// Plain cosine with a straightforward left-to-right sum.
pub fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Counts worked out from the corpus and feature records alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enumeration {
    pub nodes: usize,
    pub per_view: BTreeMap<View, usize>,
    pub triples: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Item {
    Title,
    Content,
    Image,
}

/// Enumerates nodes and edges of the toy build rule by rule: structural
/// fact links, image annotations, same-event links, time continuity,
/// detections, entities and thresholded cosine pairs. Embeddings are
/// rounded to `f32`, as stored.
pub fn enumerate_build(corpus: &Corpus, records: &[FeatureRecord], tau: f64) -> Enumeration {
    let mut emb: BTreeMap<(Owner, Selector), Vec<f64>> = BTreeMap::new();
    let mut dets: BTreeMap<(Owner, Selector), usize> = BTreeMap::new();
    let mut ents: BTreeMap<(Owner, Selector), BTreeSet<(String, u32)>> = BTreeMap::new();
    for r in records {
        let k = (r.key.owner, r.key.selector);
        match &r.payload {
            FeaturePayload::Embedding(v) => {
                emb.insert(k, v.iter().map(|&x| x as f32 as f64).collect());
            }
            FeaturePayload::Detections(d) => *dets.entry(k).or_default() += d.len(),
            FeaturePayload::Entities(e) => ents
                .entry(k)
                .or_default()
                .extend(e.iter().map(|m| (m.surface.clone(), m.ner_index))),
            _ => {}
        }
    }

    let mut view: BTreeMap<View, usize> = BTreeMap::new();
    let mut add = |v: View, n: usize| *view.entry(v).or_default() += n;
    let mut nodes = 0;
    let mut items: Vec<(u64, Item, Vec<f64>)> = Vec::new();
    for n in &corpus.news {
        let o = Owner::Fact(n.fact_id);
        let descs: Vec<usize> = (0..n.image_descriptions.len())
            .filter(|&k| !n.image_descriptions[k].is_empty())
            .collect();
        let imgs = n.image_paths.len();
        nodes += 1 + 2 + imgs + descs.len();
        add(View::Fact, 2 + imgs);
        add(View::ITCross, descs.len() + 2 * imgs);
        let mut texts = vec![Selector::Title, Selector::Content];
        texts.extend(descs.iter().map(|&k| Selector::ImageDescription(k as u32)));
        for s in texts {
            let e = ents.get(&(o, s)).map_or(0, BTreeSet::len);
            nodes += e;
            add(View::TIn, e);
        }
        for k in 0..imgs {
            let d = dets
                .get(&(o, Selector::Image(k as u32)))
                .copied()
                .unwrap_or(0);
            nodes += d;
            add(View::IIn, d);
            items.push((
                n.fact_id,
                Item::Image,
                emb[&(o, Selector::Image(k as u32))].clone(),
            ));
        }
        items.push((n.fact_id, Item::Title, emb[&(o, Selector::Title)].clone()));
        items.push((
            n.fact_id,
            Item::Content,
            emb[&(o, Selector::Content)].clone(),
        ));
    }

    // Same fine event: fact, title and cross content / title links per
    // unordered fact pair, plus every image pair between the two facts.
    let news = &corpus.news;
    for (i, a) in news.iter().enumerate() {
        for b in &news[i + 1..] {
            if a.event_fine.is_empty()
                || a.event_coarse != b.event_coarse
                || a.event_fine != b.event_fine
            {
                continue;
            }
            add(View::Fact, 1);
            add(View::TCross, 1 + 2);
            add(View::ICross, a.image_paths.len() * b.image_paths.len());
        }
    }
    // Continuity: consecutive facts of a coarse category.
    let mut coarse: BTreeMap<String, usize> = BTreeMap::new();
    for n in news {
        *coarse.entry(n.event_coarse.name().to_string()).or_default() += 1;
    }
    add(View::TCross, coarse.values().map(|c| c - 1).sum());

    for (i, (fa, ka, va)) in items.iter().enumerate() {
        for (fb, kb, vb) in &items[i + 1..] {
            let v = match (ka, kb) {
                (Item::Image, Item::Image) => View::ICross,
                (Item::Image, _) | (_, Item::Image) => continue,
                _ => View::TCross,
            };
            let _ = (fa, fb);
            if naive_cosine(va, vb) >= tau {
                add(v, 1);
            }
        }
    }
    let triples = view.values().sum();
    Enumeration {
        nodes,
        per_view: view,
        triples,
    }
}

/// Similarity pairs of a node table by exhaustive search, as
/// `(low id, high id)` with the cosine.
pub fn similarity_pairs(nodes: &NodeTable) -> Vec<((u32, u32), f64)> {
    let eligible = |k: NodeKind| {
        matches!(
            k,
            NodeKind::Image
                | NodeKind::PairImage
                | NodeKind::Title
                | NodeKind::PairText
                | NodeKind::Content
        )
    };
    let image = |k: NodeKind| matches!(k, NodeKind::Image | NodeKind::PairImage);
    let parts: Vec<(&Node, Vec<f64>)> = nodes
        .nodes()
        .iter()
        .filter(|n| eligible(n.kind))
        .filter_map(|n| nodes.embedding(n.id).map(|v| (n, v)))
        .filter(|(_, v)| v.iter().any(|&x| x != 0.0))
        .collect();
    let mut out = Vec::new();
    for (i, (a, va)) in parts.iter().enumerate() {
        for (b, vb) in &parts[i + 1..] {
            if image(a.kind) != image(b.kind) {
                continue;
            }
            out.push(((a.id.min(b.id), a.id.max(b.id)), naive_cosine(va, vb)));
        }
    }
    out
}

/// A star: node 0 joined to nodes `1..n` with code 98.
pub fn star_graph(n: u32) -> Graph {
    let nodes = (0..n)
        .map(|i| Node {
            id: i,
            canonical: i,
            kind: NodeKind::Fact,
            origin: Origin::Fact { fact_id: i as u64 },
            parent: None,
            label: None,
            embedding: None,
            attributes: BTreeMap::new(),
        })
        .collect();
    let table = NodeTable::from_parts(nodes, 0, EmbeddingMatrix::default()).expect("bare nodes");
    let edges = (1..n).map(|i| Edge::new(0, 98, i)).collect();
    Graph::from_parts(
        table,
        edges,
        EdgeRegistry::default(),
        0.8,
        0,
        BTreeMap::new(),
    )
    .expect("star graph")
}

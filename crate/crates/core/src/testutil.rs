//! Fixtures shared by unit tests.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{Corpus, EventCategory, NewsRecord};
use crate::features::{
    stub_featurize, Detection, EntityMention, FeaturePayload, FeatureRecord, FeatureStore, Owner,
    Selector,
};

/// `n` news facts (ids `0..n`), each with one image and an empty image
/// description, all in coarse category Sports with distinct fine events.
pub fn toy_corpus(n: u64) -> Corpus {
    let news = (0..n)
        .map(|i| NewsRecord {
            fact_id: i,
            title: format!("title {i}"),
            content: format!("content {i}"),
            time: format!("2020-01-{:02}", i + 1),
            image_paths: vec![format!("./img/{i}.jpg")],
            image_descriptions: vec![String::new()],
            event_description: String::new(),
            event_coarse: EventCategory::Sports,
            event_fine: format!("Match {i}"),
            event_attributes: BTreeMap::new(),
        })
        .collect();
    Corpus::new(Vec::new(), news)
}

/// Stub embeddings for every L2 item, `dets` detections per image and
/// `ents` distinct entities per title / content.
pub fn toy_features(corpus: &Corpus, dets: usize, ents: usize) -> FeatureStore {
    let dim = 8;
    let v = |s: &str| stub_featurize(s.as_bytes(), dim, 0).unwrap();
    let mut recs = Vec::new();
    for n in &corpus.news {
        let o = Owner::Fact(n.fact_id);
        for (sel, text) in [(Selector::Title, &n.title), (Selector::Content, &n.content)] {
            recs.push(FeatureRecord::new(
                o,
                sel,
                FeaturePayload::Embedding(v(text)),
            ));
            let e = (0..ents)
                .map(|k| EntityMention {
                    surface: format!("{text} E{k}"),
                    ner_index: (k % 18) as u32,
                    span: [0, 1],
                    embedding: Some(v(&format!("{text} E{k}"))),
                })
                .collect();
            recs.push(FeatureRecord::new(o, sel, FeaturePayload::Entities(e)));
        }
        for (k, p) in n.image_paths.iter().enumerate() {
            let sel = Selector::Image(k as u32);
            recs.push(FeatureRecord::new(o, sel, FeaturePayload::Embedding(v(p))));
            let d = (0..dets)
                .map(|j| Detection {
                    class_index: (j * 7 % 80) as u32,
                    bbox: [0.0, 0.0, 0.5, 0.5],
                    crop_embedding: v(&format!("{p}#{j}")),
                })
                .collect();
            recs.push(FeatureRecord::new(o, sel, FeaturePayload::Detections(d)));
        }
    }
    FeatureStore::from_records(recs).unwrap()
}

/// `n` fact nodes with ids `0..n` in canonical order, no embeddings.
pub fn bare_nodes(n: u32) -> crate::symbolize::NodeTable {
    use crate::symbolize::{Node, NodeKind, NodeTable, Origin};
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
    NodeTable::from_parts(nodes, 0, Default::default()).unwrap()
}

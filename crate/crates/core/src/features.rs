//! Per-item feature contract.
//!
//! Feature extractors (image / text encoders, detectors, NER taggers,
//! captioners) run outside this crate. Their output is a list of
//! [`FeatureRecord`]s keyed by corpus item, collected into an immutable
//! [`FeatureStore`]. Any extractor may be missing; downstream edge builders
//! simply skip views lacking inputs.
//!
//! [`stub_featurize`] is a deterministic stand-in for the encoders so the
//! whole pipeline can run without models.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::math;
use crate::{Error, Result};

pub use crate::math::cosine;

/// Number of detection classes (edge codes 000–079).
pub const DETECTION_CLASSES: usize = 80;
/// Number of named-entity classes (edge codes 080–097).
pub const NER_CLASSES: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Fact(u64),
    Pair(u64),
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Fact(id) => write!(f, "fact:{id}"),
            Owner::Pair(id) => write!(f, "pair:{id}"),
        }
    }
}

/// Which field of an owner a feature belongs to. The derived ordering is
/// the canonical field order used when numbering nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Selector {
    Title,
    Content,
    Image(u32),
    ImageDescription(u32),
    PairText,
    PairImage,
}

impl Selector {
    pub fn is_image(self) -> bool {
        matches!(self, Selector::Image(_) | Selector::PairImage)
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Title => f.write_str("title"),
            Selector::Content => f.write_str("content"),
            Selector::Image(k) => write!(f, "image[{k}]"),
            Selector::ImageDescription(k) => write!(f, "image_description[{k}]"),
            Selector::PairText => f.write_str("pair_text"),
            Selector::PairImage => f.write_str("pair_image"),
        }
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let indexed = |prefix: &str| -> Option<u32> {
            s.strip_prefix(prefix)?
                .strip_prefix('[')?
                .strip_suffix(']')?
                .parse()
                .ok()
        };
        match s {
            "title" => Ok(Selector::Title),
            "content" => Ok(Selector::Content),
            "pair_text" => Ok(Selector::PairText),
            "pair_image" => Ok(Selector::PairImage),
            _ => indexed("image_description")
                .map(Selector::ImageDescription)
                .or_else(|| indexed("image").map(Selector::Image))
                .ok_or_else(|| Error::Schema(alloc::format!("unknown selector {s:?}"))),
        }
    }
}

impl Serialize for Selector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Selector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureKey {
    pub owner: Owner,
    pub selector: Selector,
}

impl FeatureKey {
    pub fn new(owner: Owner, selector: Selector) -> Self {
        Self { owner, selector }
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.owner, self.selector)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_index: u32,
    /// Normalized `[x0, y0, x1, y1]`.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub crop_embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    pub ner_index: u32,
    /// Character offsets `[start, end)`.
    pub span: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Embedding,
    Detection,
    Entity,
    Caption,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeaturePayload {
    Embedding(Vec<f64>),
    Detections(Vec<Detection>),
    Entities(Vec<EntityMention>),
    Caption(String),
}

impl FeaturePayload {
    pub fn kind(&self) -> FeatureKind {
        match self {
            FeaturePayload::Embedding(_) => FeatureKind::Embedding,
            FeaturePayload::Detections(_) => FeatureKind::Detection,
            FeaturePayload::Entities(_) => FeatureKind::Entity,
            FeaturePayload::Caption(_) => FeatureKind::Caption,
        }
    }

    fn vector_dims(&self) -> Vec<usize> {
        match self {
            FeaturePayload::Embedding(v) => alloc::vec![v.len()],
            FeaturePayload::Detections(ds) => ds.iter().map(|d| d.crop_embedding.len()).collect(),
            FeaturePayload::Entities(es) => es
                .iter()
                .filter_map(|e| e.embedding.as_ref().map(Vec::len))
                .collect(),
            FeaturePayload::Caption(_) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub key: FeatureKey,
    pub payload: FeaturePayload,
}

impl FeatureRecord {
    pub fn new(owner: Owner, selector: Selector, payload: FeaturePayload) -> Self {
        Self {
            key: FeatureKey::new(owner, selector),
            payload,
        }
    }

    pub fn kind(&self) -> FeatureKind {
        self.payload.kind()
    }

    fn validate(&self) -> Result<()> {
        let ctx = |msg: String| Error::Schema(alloc::format!("{}: {msg}", self.key));
        match &self.payload {
            FeaturePayload::Detections(ds) => {
                for d in ds {
                    if d.class_index as usize >= DETECTION_CLASSES {
                        return Err(ctx(alloc::format!(
                            "detection class {} outside 0..{DETECTION_CLASSES}",
                            d.class_index
                        )));
                    }
                    let [x0, y0, x1, y1] = d.bbox;
                    let unit = |v: f64| (0.0..=1.0).contains(&v);
                    if !(x0 < x1 && y0 < y1 && d.bbox.iter().all(|&v| unit(v))) {
                        return Err(ctx(alloc::format!("invalid box {:?}", d.bbox)));
                    }
                }
            }
            FeaturePayload::Entities(es) => {
                for e in es {
                    if e.ner_index as usize >= NER_CLASSES {
                        return Err(ctx(alloc::format!(
                            "ner class {} outside 0..{NER_CLASSES}",
                            e.ner_index
                        )));
                    }
                    if e.span[0] > e.span[1] {
                        return Err(ctx(alloc::format!("inverted span {:?}", e.span)));
                    }
                }
            }
            FeaturePayload::Embedding(v) => {
                if v.is_empty() {
                    return Err(ctx("empty embedding".to_string()));
                }
            }
            FeaturePayload::Caption(_) => {}
        }
        if self.payload.vector_dims().contains(&0) {
            return Err(ctx("empty vector".to_string()));
        }
        Ok(())
    }
}

/// Immutable index of feature records keyed by corpus item.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    dim: Option<usize>,
    index: BTreeMap<FeatureKey, BTreeMap<FeatureKind, FeaturePayload>>,
}

impl FeatureStore {
    /// Builds a store, checking record shapes and that every vector shares
    /// one dimension. At most one record per (item, kind) is accepted.
    pub fn from_records(records: impl IntoIterator<Item = FeatureRecord>) -> Result<Self> {
        let mut store = FeatureStore::default();
        for r in records {
            store.insert(r)?;
        }
        Ok(store)
    }

    fn insert(&mut self, record: FeatureRecord) -> Result<()> {
        record.validate()?;
        for d in record.payload.vector_dims() {
            match self.dim {
                None => self.dim = Some(d),
                Some(dim) if dim != d => {
                    return Err(Error::Schema(alloc::format!(
                        "{}: vector dimension {d} differs from manifest dimension {dim}",
                        record.key
                    )))
                }
                Some(_) => {}
            }
        }
        let kind = record.kind();
        let slot = self.index.entry(record.key).or_default();
        if slot.contains_key(&kind) {
            return Err(Error::Schema(alloc::format!(
                "{}: duplicate {kind:?} record",
                record.key
            )));
        }
        slot.insert(kind, record.payload);
        Ok(())
    }

    /// Common vector dimension, or `None` when the store carries no vectors.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, key: &FeatureKey, kind: FeatureKind) -> Option<&FeaturePayload> {
        self.index.get(key)?.get(&kind)
    }

    pub fn embedding(&self, key: &FeatureKey) -> Option<&[f64]> {
        match self.get(key, FeatureKind::Embedding)? {
            FeaturePayload::Embedding(v) => Some(v),
            _ => None,
        }
    }

    pub fn detections(&self, key: &FeatureKey) -> &[Detection] {
        match self.get(key, FeatureKind::Detection) {
            Some(FeaturePayload::Detections(d)) => d,
            _ => &[],
        }
    }

    pub fn entities(&self, key: &FeatureKey) -> &[EntityMention] {
        match self.get(key, FeatureKind::Entity) {
            Some(FeaturePayload::Entities(e)) => e,
            _ => &[],
        }
    }

    pub fn caption(&self, key: &FeatureKey) -> Option<&str> {
        match self.get(key, FeatureKind::Caption)? {
            FeaturePayload::Caption(c) => Some(c),
            _ => None,
        }
    }

    /// Records in canonical key order.
    pub fn records(&self) -> impl Iterator<Item = FeatureRecord> + '_ {
        self.index.iter().flat_map(|(key, kinds)| {
            kinds.values().map(move |p| FeatureRecord {
                key: *key,
                payload: p.clone(),
            })
        })
    }

    /// Rejects records whose owner or field does not exist in `corpus`.
    pub fn check_owners(&self, corpus: &Corpus) -> Result<()> {
        for key in self.index.keys() {
            if !key_exists(corpus, key) {
                return Err(Error::DanglingOwner(key.to_string()));
            }
        }
        Ok(())
    }
}

fn key_exists(corpus: &Corpus, key: &FeatureKey) -> bool {
    match key.owner {
        Owner::Fact(id) => corpus.fact(id).is_some_and(|n| match key.selector {
            Selector::Title | Selector::Content => true,
            Selector::Image(k) => (k as usize) < n.image_paths.len(),
            Selector::ImageDescription(k) => n
                .image_descriptions
                .get(k as usize)
                .is_some_and(|d| !d.is_empty()),
            Selector::PairText | Selector::PairImage => false,
        }),
        Owner::Pair(id) => {
            corpus.pair(id).is_some()
                && matches!(key.selector, Selector::PairText | Selector::PairImage)
        }
    }
}

const STUB_DOMAIN: &[u8] = b"uknow-stub-featurize-v1";

/// Deterministic pseudo-embedding of `content`.
///
/// The key is `SHA-256(domain ‖ seed_le ‖ dim_le ‖ content)`; it seeds a
/// ChaCha8 stream from which `dim` reals are drawn uniformly in `[-1, 1)`,
/// and the result is scaled to unit L2 norm.
pub fn stub_featurize(content: &[u8], dim: usize, seed: u64) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::invalid("stub_featurize: dim must be positive"));
    }
    let mut h = Sha256::new();
    h.update(STUB_DOMAIN);
    h.update(seed.to_le_bytes());
    h.update((dim as u64).to_le_bytes());
    h.update(content);
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if !math::is_zero(&v) {
            math::normalize(&mut v);
            return Ok(v);
        }
    }
}

/// Lowercased alphanumeric tokens of `text`.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Bag-of-tokens stub text embedding: the normalized sum of
/// [`stub_featurize`] over the text's lowercased tokens. Texts sharing
/// vocabulary get correlated vectors; identical texts get identical vectors.
pub fn stub_text_embedding(text: &str, dim: usize, seed: u64) -> Result<Vec<f64>> {
    let mut acc = alloc::vec![0.0; dim];
    let mut any = false;
    for t in tokens(text) {
        let v = stub_featurize(t.as_bytes(), dim, seed)?;
        for (a, x) in acc.iter_mut().zip(&v) {
            *a += x;
        }
        any = true;
    }
    if !any || math::is_zero(&acc) {
        return stub_featurize(text.as_bytes(), dim, seed);
    }
    math::normalize(&mut acc);
    Ok(acc)
}

fn keyed_rng(tag: &[u8], content: &[u8], seed: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(STUB_DOMAIN);
    h.update(tag);
    h.update(seed.to_le_bytes());
    h.update(content);
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Zero to two pseudo-detections for an image, each with a crop embedding
/// derived from the image content and its box.
pub fn stub_detections(image: &[u8], dim: usize, seed: u64) -> Result<Vec<Detection>> {
    let mut rng = keyed_rng(b"detect", image, seed);
    let count = rng.random_range(0..=2usize);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let class_index = rng.random_range(0..DETECTION_CLASSES as u32);
        let x0: f64 = rng.random_range(0.0..0.5);
        let y0: f64 = rng.random_range(0.0..0.5);
        let x1 = x0 + rng.random_range(0.1..0.5);
        let y1 = y0 + rng.random_range(0.1..0.5);
        let bbox = [x0, y0, x1, y1];
        let mut crop = image.to_vec();
        for b in bbox {
            crop.extend_from_slice(&b.to_le_bytes());
        }
        out.push(Detection {
            class_index,
            bbox,
            crop_embedding: stub_featurize(&crop, dim, seed)?,
        });
    }
    Ok(out)
}

/// Pseudo-NER: maximal runs of capitalized words become entity mentions;
/// the class is a keyed hash of the surface form and the embedding is the
/// stub embedding of its lowercased surface.
pub fn stub_entities(text: &str, dim: usize, seed: u64) -> Result<Vec<EntityMention>> {
    let chars: Vec<char> = text.chars().collect();
    let mut words: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            words.push((start, i));
        } else {
            i += 1;
        }
    }
    let capital = |(s, _): (usize, usize)| chars[s].is_uppercase();
    let mut out = Vec::new();
    let mut w = 0;
    while w < words.len() {
        if !capital(words[w]) {
            w += 1;
            continue;
        }
        let start = words[w].0;
        let mut end = words[w].1;
        w += 1;
        // Merge capitalized words separated by single spaces.
        while w < words.len() && capital(words[w]) && words[w].0 == end + 1 && chars[end] == ' ' {
            end = words[w].1;
            w += 1;
        }
        let surface: String = chars[start..end].iter().collect();
        let mut rng = keyed_rng(b"ner", surface.as_bytes(), seed);
        let ner_index = rng.random_range(0..NER_CLASSES as u32);
        let embedding = stub_featurize(surface.to_lowercase().as_bytes(), dim, seed)?;
        out.push(EntityMention {
            surface,
            ner_index,
            span: [start, end],
            embedding: Some(embedding),
        });
    }
    Ok(out)
}

/// Runs the stub extractors over a whole corpus and returns records in
/// canonical key order. `image_bytes` supplies the content that stands in
/// for each image path (typically the file bytes, or the path itself).
pub fn stub_corpus_records(
    corpus: &Corpus,
    dim: usize,
    seed: u64,
    image_bytes: &dyn Fn(&str) -> Vec<u8>,
) -> Result<Vec<FeatureRecord>> {
    if dim == 0 {
        return Err(Error::invalid("stub featurizer: dim must be positive"));
    }
    let mut out = Vec::new();
    let text = |out: &mut Vec<FeatureRecord>, owner, sel, s: &str| -> Result<()> {
        out.push(FeatureRecord::new(
            owner,
            sel,
            FeaturePayload::Embedding(stub_text_embedding(s, dim, seed)?),
        ));
        let ents = stub_entities(s, dim, seed)?;
        if !ents.is_empty() {
            out.push(FeatureRecord::new(
                owner,
                sel,
                FeaturePayload::Entities(ents),
            ));
        }
        Ok(())
    };
    let image = |out: &mut Vec<FeatureRecord>, owner, sel, path: &str| -> Result<()> {
        let bytes = image_bytes(path);
        out.push(FeatureRecord::new(
            owner,
            sel,
            FeaturePayload::Embedding(stub_featurize(&bytes, dim, seed)?),
        ));
        let dets = stub_detections(&bytes, dim, seed)?;
        if !dets.is_empty() {
            out.push(FeatureRecord::new(
                owner,
                sel,
                FeaturePayload::Detections(dets),
            ));
        }
        Ok(())
    };

    let mut news: Vec<_> = corpus.news.iter().collect();
    news.sort_by_key(|n| n.fact_id);
    for n in news {
        let owner = Owner::Fact(n.fact_id);
        text(&mut out, owner, Selector::Title, &n.title)?;
        text(&mut out, owner, Selector::Content, &n.content)?;
        for (k, path) in n.image_paths.iter().enumerate() {
            image(&mut out, owner, Selector::Image(k as u32), path)?;
        }
        for (k, desc) in n.image_descriptions.iter().enumerate() {
            if !desc.is_empty() {
                text(&mut out, owner, Selector::ImageDescription(k as u32), desc)?;
            }
        }
    }
    let mut pairs: Vec<_> = corpus.pairs.iter().collect();
    pairs.sort_by_key(|p| p.pair_id);
    for p in pairs {
        let owner = Owner::Pair(p.pair_id);
        text(&mut out, owner, Selector::PairText, &p.text)?;
        image(&mut out, owner, Selector::PairImage, &p.image_path)?;
    }
    out.sort_by(|a, b| a.key.cmp(&b.key).then(a.kind().cmp(&b.kind())));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn emb(owner: Owner, sel: Selector, d: usize) -> FeatureRecord {
        FeatureRecord::new(owner, sel, FeaturePayload::Embedding(vec![0.5; d]))
    }

    #[test]
    fn stub_is_deterministic_unit_and_shaped() {
        let a = stub_featurize(b"hello", 8, 3).unwrap();
        let b = stub_featurize(b"hello", 8, 3).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert!((math::l2_norm(&a) - 1.0).abs() < 1e-9);
        assert_ne!(a, stub_featurize(b"hello", 8, 4).unwrap());
        assert!(matches!(
            stub_featurize(b"x", 0, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn stub_vectors_are_nearly_orthogonal() {
        let vs: Vec<_> = (0..1000u32)
            .map(|i| stub_featurize(&i.to_le_bytes(), 64, 11).unwrap())
            .collect();
        let mut total = 0.0;
        let mut n = 0usize;
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                total += cosine(&vs[i], &vs[j]).unwrap().abs();
                n += 1;
            }
        }
        assert!(total / (n as f64) < 0.2);
    }

    #[test]
    fn store_infers_dim_and_rejects_mixed_dims() {
        let s = FeatureStore::from_records([emb(Owner::Fact(1), Selector::Title, 16)]).unwrap();
        assert_eq!((s.dim(), s.len()), (Some(16), 1));
        let err = FeatureStore::from_records([
            emb(Owner::Fact(1), Selector::Title, 16),
            emb(Owner::Fact(1), Selector::Content, 32),
        ]);
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn store_rejects_bad_payloads() {
        let det = |class_index, bbox| {
            FeatureRecord::new(
                Owner::Fact(1),
                Selector::Image(0),
                FeaturePayload::Detections(vec![Detection {
                    class_index,
                    bbox,
                    crop_embedding: vec![1.0],
                }]),
            )
        };
        assert!(FeatureStore::from_records([det(79, [0.0, 0.0, 1.0, 1.0])]).is_ok());
        assert!(FeatureStore::from_records([det(80, [0.0, 0.0, 1.0, 1.0])]).is_err());
        assert!(FeatureStore::from_records([det(1, [0.5, 0.0, 0.5, 1.0])]).is_err());
        let ent = FeatureRecord::new(
            Owner::Fact(1),
            Selector::Title,
            FeaturePayload::Entities(vec![EntityMention {
                surface: "X".into(),
                ner_index: 18,
                span: [0, 1],
                embedding: None,
            }]),
        );
        assert!(FeatureStore::from_records([ent]).is_err());
    }

    #[test]
    fn selector_text_form() {
        for s in [
            Selector::Title,
            Selector::Content,
            Selector::Image(3),
            Selector::ImageDescription(0),
            Selector::PairText,
            Selector::PairImage,
        ] {
            assert_eq!(s.to_string().parse::<Selector>().unwrap(), s);
        }
        assert!("image[x]".parse::<Selector>().is_err());
    }

    #[test]
    fn stub_entities_merge_capitalized_runs() {
        let e = stub_entities("Talks in New York with the Red Cross.", 4, 0).unwrap();
        let s: Vec<_> = e.iter().map(|m| m.surface.as_str()).collect();
        assert_eq!(s, ["Talks", "New York", "Red Cross"]);
        assert_eq!(e[1].span, [9, 17]);
        assert!(e.iter().all(|m| (m.ner_index as usize) < NER_CLASSES));
    }

    #[test]
    fn identical_texts_share_stub_embedding() {
        let a = stub_text_embedding("Storm hits the coast", 16, 1).unwrap();
        let b = stub_text_embedding("storm hits the coast!", 16, 1).unwrap();
        assert_eq!(cosine(&a, &b).unwrap(), 1.0);
    }
}

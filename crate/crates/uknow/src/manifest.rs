//! Feature manifests: one JSON object per line,
//! `{"owner": {"fact_id"|"pair_id": N, "selector": S}, "kind": K, "payload": P}`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use uknow_core::corpus::Corpus;
use uknow_core::features::{
    Detection, EntityMention, FeatureKind, FeaturePayload, FeatureRecord, FeatureStore, Owner,
    Selector,
};

use crate::error::{Error, Result};
use crate::ingest::{numbered_lines, read_text};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OwnerRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fact_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pair_id: Option<u64>,
    selector: Selector,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    owner: OwnerRef,
    kind: FeatureKind,
    payload: Value,
}

fn decode(line: Line) -> std::result::Result<FeatureRecord, String> {
    let owner = match (line.owner.fact_id, line.owner.pair_id) {
        (Some(f), None) => Owner::Fact(f),
        (None, Some(p)) => Owner::Pair(p),
        _ => return Err("owner needs exactly one of fact_id / pair_id".into()),
    };
    let payload = match line.kind {
        FeatureKind::Embedding => FeaturePayload::Embedding(
            serde_json::from_value(line.payload).map_err(|e| e.to_string())?,
        ),
        FeatureKind::Detection => FeaturePayload::Detections(
            serde_json::from_value::<Vec<Detection>>(line.payload).map_err(|e| e.to_string())?,
        ),
        FeatureKind::Entity => FeaturePayload::Entities(
            serde_json::from_value::<Vec<EntityMention>>(line.payload)
                .map_err(|e| e.to_string())?,
        ),
        FeatureKind::Caption => FeaturePayload::Caption(
            serde_json::from_value(line.payload).map_err(|e| e.to_string())?,
        ),
    };
    Ok(FeatureRecord::new(owner, line.owner.selector, payload))
}

/// Parses manifest text into records without cross-record checks.
pub fn parse_feature_records(text: &str, path: &Path) -> Result<Vec<FeatureRecord>> {
    numbered_lines(text)
        .map(|(n, raw)| {
            let line: Line = serde_json::from_str(raw).map_err(|e| Error::malformed(path, n, e))?;
            decode(line).map_err(|e| Error::malformed(path, n, e))
        })
        .collect()
}

/// Loads a manifest, enforcing one embedding dimension and that every
/// owner exists in `corpus`.
pub fn load_feature_manifest(path: impl AsRef<Path>, corpus: &Corpus) -> Result<FeatureStore> {
    let path = path.as_ref();
    let records = parse_feature_records(&read_text(path)?, path)?;
    let store = FeatureStore::from_records(records)?;
    store.check_owners(corpus)?;
    Ok(store)
}

pub fn write_feature_records<'a>(records: impl IntoIterator<Item = &'a FeatureRecord>) -> String {
    let mut out = String::new();
    for r in records {
        let (fact_id, pair_id) = match r.key.owner {
            Owner::Fact(f) => (Some(f), None),
            Owner::Pair(p) => (None, Some(p)),
        };
        let payload = match &r.payload {
            FeaturePayload::Embedding(v) => serde_json::to_value(v),
            FeaturePayload::Detections(d) => serde_json::to_value(d),
            FeaturePayload::Entities(e) => serde_json::to_value(e),
            FeaturePayload::Caption(c) => serde_json::to_value(c),
        }
        .expect("feature payloads serialize");
        let line = Line {
            owner: OwnerRef {
                fact_id,
                pair_id,
                selector: r.key.selector,
            },
            kind: r.kind(),
            payload,
        };
        out.push_str(&serde_json::to_string(&line).expect("feature lines serialize"));
        out.push('\n');
    }
    out
}

mod common;

use std::fs;

use uknow::store::{
    decode_embeddings, encode_embeddings, graph_fingerprint, load_graph, load_model, load_split,
    save_graph, save_model, save_split,
};
use uknow::Error;
use uknow_core::construct::{build_graph, BuildConfig};
use uknow_core::features::FeatureStore;
use uknow_core::reasoning::{train, KgData, PluginConfig, TrainConfig};
use uknow_core::split::{split, Partition, SplitMode};
use uknow_core::symbolize::{EdgeOverride, EdgeRegistry, EmbeddingMatrix, Method, View};

use common::*;

const DATA_FILES: [&str; 5] = [
    "meta.json",
    "nodes.jsonl",
    "edges.jsonl",
    "registry.json",
    "embeddings.bin",
];

#[test]
fn graph_round_trip_and_stable_bytes() {
    let g = toy_graph(0.8);
    let tmp = tempfile::tempdir().unwrap();
    save_graph(&g, tmp.path().join("a")).unwrap();
    save_graph(&g, tmp.path().join("b")).unwrap();
    for f in DATA_FILES {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(load_graph(tmp.path().join("a")).unwrap(), g);
}

#[test]
fn every_truncation_point_class_is_detected() {
    let g = toy_graph(0.8);
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    save_graph(&g, &src).unwrap();
    for f in DATA_FILES {
        let bytes = fs::read(src.join(f)).unwrap();
        for cut in [0, 1, bytes.len() / 2, bytes.len() - 1] {
            let dir = tmp.path().join(format!("{f}-{cut}"));
            save_graph(&g, &dir).unwrap();
            fs::write(dir.join(f), &bytes[..cut]).unwrap();
            let err = load_graph(&dir).unwrap_err();
            assert!(
                matches!(err, Error::CorruptStore { .. }),
                "{f}@{cut}: {err:?}"
            );
        }
    }
}

#[test]
fn same_length_tampering_is_detected() {
    let g = toy_graph(0.8);
    let tmp = tempfile::tempdir().unwrap();
    save_graph(&g, tmp.path()).unwrap();
    let path = tmp.path().join("embeddings.bin");
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&path, bytes).unwrap();
    assert!(matches!(
        load_graph(tmp.path()),
        Err(Error::CorruptStore { .. })
    ));
}

#[test]
fn missing_meta_is_a_missing_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_graph(tmp.path()),
        Err(Error::MissingManifest(_))
    ));
}

#[test]
fn registry_overrides_survive_persistence() {
    let (corpus, records) = toy_inputs();
    let registry = EdgeRegistry::default()
        .with_overrides([(
            105,
            EdgeOverride {
                name: "imgsim".into(),
                view: View::IIn,
                method: Method::Cosine,
            },
        )])
        .unwrap();
    let cfg = BuildConfig {
        tau: 0.8,
        seed: 1,
        sim_topk: None,
        registry: registry.clone(),
    };
    let g = build_graph(&corpus, &FeatureStore::from_records(records).unwrap(), &cfg).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    save_graph(&g, tmp.path()).unwrap();
    let back = load_graph(tmp.path()).unwrap();
    assert_eq!(back.registry(), &registry);
    assert_eq!(back, g);
}

#[test]
fn embedding_header_is_checked() {
    let m = EmbeddingMatrix {
        dim: 3,
        data: vec![1.0, -2.5, 0.25, 4.0, 5.0, 6.0],
    };
    let bytes = encode_embeddings(&m);
    let p = std::path::Path::new("e.bin");
    assert_eq!(decode_embeddings(&bytes, p).unwrap(), m);
    assert!(decode_embeddings(&bytes[..bytes.len() - 4], p).is_err());
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    assert!(decode_embeddings(&wrong, p).is_err());
}

#[test]
fn splits_are_bound_to_their_graph() {
    let g = toy_graph(0.8);
    let other = toy_graph(0.9);
    let tmp = tempfile::tempdir().unwrap();
    let s = split(&g, [0.8, 0.15, 0.05], SplitMode::Fact, 3).unwrap();
    save_split(tmp.path(), "f", &g, &s).unwrap();
    assert_eq!(load_split(tmp.path(), "f", &g).unwrap(), s);
    assert!(matches!(
        load_split(tmp.path(), "f", &other),
        Err(Error::CorruptStore { .. })
    ));
    assert!(matches!(
        load_split(tmp.path(), "nope", &g),
        Err(Error::MissingManifest(_))
    ));
    assert!(matches!(
        save_split(tmp.path(), "../escape", &g, &s),
        Err(Error::Usage(_))
    ));
}

#[test]
fn models_round_trip_bit_exactly() {
    let g = toy_graph(0.8);
    let s = split(&g, [0.8, 0.15, 0.05], SplitMode::Triple, 0).unwrap();
    let data = KgData::from_split(&g, &s, Partition::Train).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    for (i, plugin) in [None, Some(PluginConfig::default())].into_iter().enumerate() {
        let cfg = TrainConfig {
            dim: 8,
            epochs: 2,
            plugin,
            ..TrainConfig::default()
        };
        let model = train(&data, cfg).unwrap();
        let dir = tmp.path().join(format!("m{i}"));
        save_model(&model, &graph_fingerprint(&g), "default", &dir).unwrap();
        let back = load_model(&dir).unwrap();
        assert_eq!(back.model, model);
        assert_eq!(back.split, "default");
        assert_eq!(back.graph, graph_fingerprint(&g));

        let tensors = dir.join("tensors.bin");
        let bytes = fs::read(&tensors).unwrap();
        fs::write(&tensors, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            load_model(&dir),
            Err(Error::CorruptStore { .. })
        ));
    }
}

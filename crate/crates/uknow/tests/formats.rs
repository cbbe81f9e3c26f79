mod common;

use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;
use uknow::ingest::{load_corpus, parse_news, parse_pairs, write_news, write_pairs};
use uknow::manifest::{load_feature_manifest, parse_feature_records, write_feature_records};
use uknow::Error;
use uknow_core::corpus::{EventCategory, NewsRecord, PairRecord};

use common::*;

#[test]
fn toy_corpus_loads_with_expected_counts() {
    let (corpus, summary) = load_corpus(toy_dir()).unwrap();
    assert_eq!(corpus.news.len(), 20);
    assert_eq!(summary.n_news, 20);
    assert_eq!(
        summary.n_images,
        corpus.news.iter().map(|n| n.image_paths.len()).sum::<usize>()
    );
    assert_eq!(summary.event_histogram.values().sum::<usize>(), 20);
}

#[test]
fn missing_corpus_files_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_corpus(tmp.path()),
        Err(Error::MissingManifest(_))
    ));
}

#[test]
fn malformed_news_lines_carry_line_numbers() {
    let good = std::fs::read_to_string(toy_dir().join("news.jsonl")).unwrap();
    let first = good.lines().next().unwrap();
    let text = format!("{first}\n{{\"fact_id\": 2, \"title\": \"x\"}}\n");
    match parse_news(&text, Path::new("news.jsonl")) {
        Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 2),
        other => panic!("unexpected {other:?}"),
    }
    let bad_event = first.replace("Sports→", "Sportz→");
    assert!(parse_news(&bad_event, Path::new("news.jsonl")).is_err());
}

#[test]
fn duplicate_fact_ids_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let first = std::fs::read_to_string(toy_dir().join("news.jsonl"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    std::fs::write(tmp.path().join("news.jsonl"), format!("{first}\n{first}\n")).unwrap();
    assert!(matches!(load_corpus(tmp.path()), Err(Error::Core(_))));
}

#[test]
fn stub_manifest_round_trips_through_the_loader() {
    let (corpus, records) = toy_inputs();
    let text = write_feature_records(&records);
    assert_eq!(
        parse_feature_records(&text, Path::new("f")).unwrap(),
        records
    );
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("features.jsonl");
    std::fs::write(&path, &text).unwrap();
    let store = load_feature_manifest(&path, &corpus).unwrap();
    assert_eq!(store.dim(), Some(TOY_DIM));
}

#[test]
fn manifest_rejects_unknown_owners_and_mixed_dimensions() {
    let (corpus, _) = toy_inputs();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("f.jsonl");
    let line = |fact: u64, v: &str| {
        format!(r#"{{"owner":{{"fact_id":{fact},"selector":"title"}},"kind":"embedding","payload":{v}}}"#)
    };
    std::fs::write(&path, line(999, "[1.0, 0.0]") + "\n").unwrap();
    assert!(load_feature_manifest(&path, &corpus).is_err());
    let mixed = format!("{}\n{}\n", line(1, "[1.0, 0.0]"), line(2, "[1.0, 0.0, 0.0]"));
    std::fs::write(&path, mixed).unwrap();
    assert!(load_feature_manifest(&path, &corpus).is_err());
    std::fs::write(&path, "{not json}\n").unwrap();
    assert!(matches!(
        load_feature_manifest(&path, &corpus),
        Err(Error::MalformedLine { line: 1, .. })
    ));
}

fn text_strategy() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 ,.'\"→é-]{1,30}".prop_filter("no surrounding blanks", |s| s.trim() == s && !s.is_empty())
}

fn news_strategy() -> impl Strategy<Value = NewsRecord> {
    (
        any::<u32>(),
        text_strategy(),
        text_strategy(),
        prop::collection::vec((text_strategy(), prop::option::of(text_strategy())), 0..3),
        0..EventCategory::ALL.len(),
        prop::option::of(text_strategy()),
        prop::collection::btree_map("[a-z]{1,6}", text_strategy(), 0..3),
    )
        .prop_map(|(id, title, content, images, cat, fine, attrs)| {
            let coarse = EventCategory::ALL[cat];
            let fine = if coarse == EventCategory::Others {
                String::new()
            } else {
                fine.unwrap_or_default().replace('→', "")
            };
            NewsRecord {
                fact_id: id as u64,
                title,
                content,
                time: "2020-01-01".into(),
                image_paths: images.iter().map(|(p, _)| format!("./{p}.jpg")).collect(),
                image_descriptions: images.into_iter().map(|(_, d)| d.unwrap_or_default()).collect(),
                event_description: String::new(),
                event_coarse: coarse,
                event_fine: fine.trim().to_string(),
                event_attributes: attrs.into_iter().collect::<BTreeMap<_, _>>(),
            }
        })
}

proptest! {
    #[test]
    fn news_round_trip(records in prop::collection::vec(news_strategy(), 0..6)) {
        let text = write_news(&records);
        prop_assert_eq!(parse_news(&text, Path::new("n")).unwrap(), records);
    }

    #[test]
    fn pair_round_trip(texts in prop::collection::vec(text_strategy(), 0..6)) {
        let pairs: Vec<PairRecord> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| PairRecord { pair_id: i as u64, text: t.clone(), image_path: format!("./img/{i}.jpg") })
            .collect();
        prop_assert_eq!(parse_pairs(&write_pairs(&pairs), Path::new("p")).unwrap(), pairs);
    }
}

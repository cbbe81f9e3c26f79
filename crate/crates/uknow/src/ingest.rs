//! Pair manifests (`<text>\t<path>` lines) and news manifests (one JSON
//! object per line).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use uknow_core::corpus::{
    format_event, parse_event, validate_corpus, Corpus, CorpusSummary, NewsRecord, PairRecord,
};

use crate::error::{Error, Result};

pub const NEWS_FILE: &str = "news.jsonl";
pub const PAIRS_FILE: &str = "pairs.tsv";

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty lines with their 1-based line numbers, line endings removed.
pub(crate) fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.is_empty())
}

/// Parses pair-manifest text; `path` is only used in diagnostics.
pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<PairRecord>> {
    let mut out = Vec::new();
    for (line, raw) in numbered_lines(text) {
        let Some((caption, image)) = raw.split_once('\t') else {
            return Err(Error::malformed(
                path,
                line,
                "expected <text>\\t<image path>",
            ));
        };
        if caption.is_empty() {
            return Err(Error::malformed(path, line, "empty text"));
        }
        out.push(PairRecord {
            pair_id: out.len() as u64,
            text: caption.to_string(),
            image_path: image.to_string(),
        });
    }
    Ok(out)
}

pub fn parse_pair_manifest(path: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    let path = path.as_ref();
    parse_pairs(&read_text(path)?, path)
}

pub fn write_pairs(pairs: &[PairRecord]) -> String {
    pairs
        .iter()
        .map(|p| format!("{}\t{}\n", p.text, p.image_path))
        .collect()
}

/// On-disk shape of one news record.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewsLine {
    fact_id: u64,
    title: String,
    content: String,
    time: String,
    #[serde(default)]
    image_paths: Vec<String>,
    #[serde(default)]
    image_descriptions: Vec<String>,
    #[serde(default)]
    event_description: String,
    event: String,
    #[serde(default)]
    event_attributes: BTreeMap<String, String>,
}

impl NewsLine {
    fn into_record(self) -> Result<NewsRecord> {
        let (event_coarse, event_fine) = parse_event(&self.event)?;
        let rec = NewsRecord {
            fact_id: self.fact_id,
            title: self.title,
            content: self.content,
            time: self.time,
            image_paths: self.image_paths,
            image_descriptions: self.image_descriptions,
            event_description: self.event_description,
            event_coarse,
            event_fine,
            event_attributes: self.event_attributes,
        };
        rec.check_shape()?;
        Ok(rec)
    }

    fn from_record(r: &NewsRecord) -> Self {
        NewsLine {
            fact_id: r.fact_id,
            title: r.title.clone(),
            content: r.content.clone(),
            time: r.time.clone(),
            image_paths: r.image_paths.clone(),
            image_descriptions: r.image_descriptions.clone(),
            event_description: r.event_description.clone(),
            event: r.event(),
            event_attributes: r.event_attributes.clone(),
        }
    }
}

pub fn parse_news(text: &str, path: &Path) -> Result<Vec<NewsRecord>> {
    numbered_lines(text)
        .map(|(line, raw)| {
            let parsed: NewsLine =
                serde_json::from_str(raw).map_err(|e| Error::malformed(path, line, e))?;
            parsed.into_record()
        })
        .collect()
}

pub fn parse_news_manifest(path: impl AsRef<Path>) -> Result<Vec<NewsRecord>> {
    let path = path.as_ref();
    parse_news(&read_text(path)?, path)
}

pub fn write_news(news: &[NewsRecord]) -> String {
    let mut out = String::new();
    for r in news {
        out.push_str(
            &serde_json::to_string(&NewsLine::from_record(r)).expect("news records serialize"),
        );
        out.push('\n');
    }
    out
}

/// Canonical hierarchical label, e.g. `Sports→2019 Daytona 500`.
pub fn event_label(r: &NewsRecord) -> String {
    format_event(r.event_coarse, &r.event_fine)
}

/// Loads `news.jsonl` and/or `pairs.tsv` from a corpus directory and
/// validates the result.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<(Corpus, CorpusSummary)> {
    let dir = dir.as_ref();
    let news_path = dir.join(NEWS_FILE);
    let pairs_path = dir.join(PAIRS_FILE);
    if !news_path.is_file() && !pairs_path.is_file() {
        return Err(Error::MissingManifest(dir.to_path_buf()));
    }
    let news = if news_path.is_file() {
        parse_news_manifest(&news_path)?
    } else {
        Vec::new()
    };
    let pairs = if pairs_path.is_file() {
        parse_pair_manifest(&pairs_path)?
    } else {
        Vec::new()
    };
    let summary = validate_corpus(&pairs, &news)?;
    Ok((Corpus::new(pairs, news), summary))
}

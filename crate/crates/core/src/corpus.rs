//! Normalized corpus records: image-text pairs and news facts with
//! hierarchical event labels.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Canonical separator between the coarse and fine parts of an event label.
pub const EVENT_SEPARATOR: &str = "→";
const ASCII_SEPARATOR: &str = "->";

/// The eleven coarse news-event categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventCategory {
    ArmedConflicts,
    ArtsAndCulture,
    BusinessAndEconomy,
    DisastersAndAccidents,
    HealthAndEnvironment,
    InternationalRelations,
    Sports,
    LawAndCrime,
    PoliticsAndElections,
    ScienceAndTechnology,
    Others,
}

impl EventCategory {
    pub const ALL: [EventCategory; 11] = [
        EventCategory::ArmedConflicts,
        EventCategory::ArtsAndCulture,
        EventCategory::BusinessAndEconomy,
        EventCategory::DisastersAndAccidents,
        EventCategory::HealthAndEnvironment,
        EventCategory::InternationalRelations,
        EventCategory::Sports,
        EventCategory::LawAndCrime,
        EventCategory::PoliticsAndElections,
        EventCategory::ScienceAndTechnology,
        EventCategory::Others,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventCategory::ArmedConflicts => "Armed conflicts and attacks",
            EventCategory::ArtsAndCulture => "Arts and culture",
            EventCategory::BusinessAndEconomy => "Business and economy",
            EventCategory::DisastersAndAccidents => "Disasters and accidents",
            EventCategory::HealthAndEnvironment => "Health and environment",
            EventCategory::InternationalRelations => "International relations",
            EventCategory::Sports => "Sports",
            EventCategory::LawAndCrime => "Law and crime",
            EventCategory::PoliticsAndElections => "Politics and elections",
            EventCategory::ScienceAndTechnology => "Science and technology",
            EventCategory::Others => "Others",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EventCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Splits a hierarchical event string such as
/// `"Armed conflicts and attacks→War in Donbass"` into its coarse category
/// and fine event name. Both `→` and `->` are accepted as the separator; a
/// string without a separator has an empty fine part.
pub fn parse_event(label: &str) -> Result<(EventCategory, String)> {
    let (coarse, fine) = match label.find(EVENT_SEPARATOR) {
        Some(i) => (&label[..i], &label[i + EVENT_SEPARATOR.len()..]),
        None => match label.find(ASCII_SEPARATOR) {
            Some(i) => (&label[..i], &label[i + ASCII_SEPARATOR.len()..]),
            None => (label, ""),
        },
    };
    let category = EventCategory::from_name(coarse.trim())
        .ok_or_else(|| Error::InvalidEvent(label.to_string()))?;
    Ok((category, fine.trim().to_string()))
}

/// Inverse of [`parse_event`], always using the canonical `→` separator.
pub fn format_event(coarse: EventCategory, fine: &str) -> String {
    if fine.is_empty() {
        coarse.name().to_string()
    } else {
        alloc::format!("{}{}{}", coarse.name(), EVENT_SEPARATOR, fine)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: u64,
    pub text: String,
    pub image_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewsRecord {
    pub fact_id: u64,
    pub title: String,
    pub content: String,
    /// ISO-8601 date; compared lexicographically.
    pub time: String,
    pub image_paths: Vec<String>,
    pub image_descriptions: Vec<String>,
    pub event_description: String,
    pub event_coarse: EventCategory,
    pub event_fine: String,
    pub event_attributes: BTreeMap<String, String>,
}

impl NewsRecord {
    pub fn event(&self) -> String {
        format_event(self.event_coarse, &self.event_fine)
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.image_paths.len() != self.image_descriptions.len() {
            return Err(Error::Schema(alloc::format!(
                "fact {}: {} image paths but {} image descriptions",
                self.fact_id,
                self.image_paths.len(),
                self.image_descriptions.len()
            )));
        }
        Ok(())
    }
}

/// A parsed corpus: news facts and/or plain image-text pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub pairs: Vec<PairRecord>,
    pub news: Vec<NewsRecord>,
}

impl Corpus {
    pub fn new(pairs: Vec<PairRecord>, news: Vec<NewsRecord>) -> Self {
        Self { pairs, news }
    }

    pub fn fact(&self, fact_id: u64) -> Option<&NewsRecord> {
        self.news.iter().find(|n| n.fact_id == fact_id)
    }

    pub fn pair(&self, pair_id: u64) -> Option<&PairRecord> {
        self.pairs.iter().find(|p| p.pair_id == pair_id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub n_pairs: usize,
    pub n_news: usize,
    pub n_images: usize,
    pub n_texts: usize,
    pub event_histogram: BTreeMap<String, usize>,
}

/// Counts the corpus and rejects duplicate ids.
///
/// Texts are titles, contents, non-empty image descriptions and pair texts;
/// images are news images plus pair images.
pub fn validate_corpus(pairs: &[PairRecord], news: &[NewsRecord]) -> Result<CorpusSummary> {
    let dup_pairs = duplicates(pairs.iter().map(|p| p.pair_id));
    if !dup_pairs.is_empty() {
        return Err(Error::DuplicateId {
            kind: "pair",
            ids: dup_pairs,
        });
    }
    let dup_facts = duplicates(news.iter().map(|n| n.fact_id));
    if !dup_facts.is_empty() {
        return Err(Error::DuplicateId {
            kind: "fact",
            ids: dup_facts,
        });
    }

    let mut summary = CorpusSummary {
        n_pairs: pairs.len(),
        n_news: news.len(),
        n_images: pairs.len(),
        n_texts: pairs.len(),
        event_histogram: BTreeMap::new(),
    };
    for n in news {
        n.check_shape()?;
        summary.n_images += n.image_paths.len();
        summary.n_texts += 2 + n
            .image_descriptions
            .iter()
            .filter(|d| !d.is_empty())
            .count();
        *summary
            .event_histogram
            .entry(n.event_coarse.name().to_string())
            .or_insert(0) += 1;
    }
    Ok(summary)
}

fn duplicates(ids: impl Iterator<Item = u64>) -> Vec<u64> {
    let mut seen = BTreeSet::new();
    let mut dup = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            dup.insert(id);
        }
    }
    dup.into_iter().collect()
}

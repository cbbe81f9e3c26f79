//! Static edge-code registry (codes 000–113).
//!
//! | codes   | method     | view                 |
//! |---------|------------|----------------------|
//! | 000–079 | detection  | I_in                 |
//! | 080–097 | NER        | T_in                 |
//! | 098–101 | annotation | fact                 |
//! | 102–104 | annotation | IT_cross             |
//! | 105     | cosine     | I_cross              |
//! | 106–109 | annotation | T_cross / I_cross    |
//! | 110–113 | cosine     | T_cross / I_cross    |

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const NUM_CODES: usize = 114;

const DETECTION_NAMES: &str = include_str!("../../data/detection_classes.txt");
const NER_NAMES: &str = include_str!("../../data/ner_classes.txt");

/// Named codes outside the detection / NER ranges.
pub mod codes {
    pub const NER_BASE: u16 = 80;
    pub const FACT_TITLE: u16 = 98;
    pub const FACT_CONTENT: u16 = 99;
    pub const FACT_IMAGE: u16 = 100;
    pub const FACT_FACT_EVENT: u16 = 101;
    pub const IMAGE_DESCRIPTION: u16 = 102;
    pub const IMAGE_TITLE: u16 = 103;
    pub const IMAGE_CONTENT: u16 = 104;
    pub const IMAGE_SIM: u16 = 105;
    pub const TITLE_TITLE_EVENT: u16 = 106;
    pub const CONTENT_CONTINUITY: u16 = 107;
    pub const IMAGE_IMAGE_EVENT: u16 = 108;
    pub const CONTENT_TITLE_EVENT: u16 = 109;
    pub const CONTENT_CONTENT_CLIP: u16 = 110;
    pub const TITLE_TITLE_CLIP: u16 = 111;
    pub const IMAGE_IMAGE_CLIP: u16 = 112;
    pub const TITLE_CONTENT_CLIP: u16 = 113;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum View {
    #[serde(rename = "I_in")]
    IIn,
    #[serde(rename = "T_in")]
    TIn,
    #[serde(rename = "I_cross")]
    ICross,
    #[serde(rename = "T_cross")]
    TCross,
    #[serde(rename = "IT_cross")]
    ITCross,
    #[serde(rename = "fact")]
    Fact,
}

impl View {
    pub const ALL: [View; 6] = [
        View::IIn,
        View::TIn,
        View::ICross,
        View::TCross,
        View::ITCross,
        View::Fact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            View::IIn => "I_in",
            View::TIn => "T_in",
            View::ICross => "I_cross",
            View::TCross => "T_cross",
            View::ITCross => "IT_cross",
            View::Fact => "fact",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Detection,
    Ner,
    Annotation,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeType {
    pub code: u16,
    pub name: String,
    pub view: View,
    pub method: Method,
}

/// A user override for one code; view and method must stay inside the
/// code's range constraints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeOverride {
    pub name: String,
    pub view: View,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeRegistry {
    entries: Vec<EdgeType>,
}

/// Range constraints: (first, last, method, allowed views).
const RANGES: [(u16, u16, Method, &[View]); 7] = [
    (0, 79, Method::Detection, &[View::IIn]),
    (80, 97, Method::Ner, &[View::TIn]),
    (98, 101, Method::Annotation, &[View::Fact]),
    (102, 104, Method::Annotation, &[View::ITCross]),
    (105, 105, Method::Cosine, &[View::ICross, View::IIn]),
    (106, 109, Method::Annotation, &[View::TCross, View::ICross]),
    (110, 113, Method::Cosine, &[View::TCross, View::ICross]),
];

fn range_of(code: u16) -> Option<&'static (u16, u16, Method, &'static [View])> {
    RANGES
        .iter()
        .find(|(lo, hi, _, _)| (*lo..=*hi).contains(&code))
}

fn default_entry(code: u16) -> EdgeType {
    use codes::*;
    let (name, view): (String, View) = match code {
        0..=79 => (
            format!(
                "det_{}",
                DETECTION_NAMES
                    .lines()
                    .nth(code as usize)
                    .unwrap_or("unknown")
            ),
            View::IIn,
        ),
        80..=97 => (
            format!(
                "ner_{}",
                NER_NAMES
                    .lines()
                    .nth((code - NER_BASE) as usize)
                    .unwrap_or("unknown")
            ),
            View::TIn,
        ),
        _ => {
            let (name, view) = match code {
                FACT_TITLE => ("fact_title", View::Fact),
                FACT_CONTENT => ("fact_content", View::Fact),
                FACT_IMAGE => ("fact_image", View::Fact),
                FACT_FACT_EVENT => ("fact_fact_event", View::Fact),
                IMAGE_DESCRIPTION => ("image_description", View::ITCross),
                IMAGE_TITLE => ("image_title", View::ITCross),
                IMAGE_CONTENT => ("image_content", View::ITCross),
                IMAGE_SIM => ("imgsim", View::ICross),
                TITLE_TITLE_EVENT => ("title_title_event", View::TCross),
                CONTENT_CONTINUITY => ("content_content_continuity", View::TCross),
                IMAGE_IMAGE_EVENT => ("image_image_event", View::ICross),
                CONTENT_TITLE_EVENT => ("content_title_event", View::TCross),
                CONTENT_CONTENT_CLIP => ("content_content_clip", View::TCross),
                TITLE_TITLE_CLIP => ("title_title_clip", View::TCross),
                IMAGE_IMAGE_CLIP => ("image_image_clip", View::ICross),
                TITLE_CONTENT_CLIP => ("title_content_clip", View::TCross),
                _ => unreachable!("code {code} outside registry"),
            };
            (name.to_string(), view)
        }
    };
    let method = range_of(code).expect("default codes are in range").2;
    EdgeType {
        code,
        name,
        view,
        method,
    }
}

/// The default 114-entry registry.
pub fn edge_registry() -> EdgeRegistry {
    EdgeRegistry {
        entries: (0..NUM_CODES as u16).map(default_entry).collect(),
    }
}

impl Default for EdgeRegistry {
    fn default() -> Self {
        edge_registry()
    }
}

impl EdgeRegistry {
    pub fn get(&self, code: u32) -> Result<&EdgeType> {
        self.entries
            .get(code as usize)
            .ok_or(Error::UnknownCode(code))
    }

    pub fn view(&self, code: u16) -> Result<View> {
        Ok(self.get(code as u32)?.view)
    }

    pub fn entries(&self) -> &[EdgeType] {
        &self.entries
    }

    pub fn by_name(&self, name: &str) -> Option<&EdgeType> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Applies overrides, rejecting any that break the range constraints.
    pub fn with_overrides(
        mut self,
        overrides: impl IntoIterator<Item = (u32, EdgeOverride)>,
    ) -> Result<Self> {
        for (code, o) in overrides {
            let slot = self
                .entries
                .get_mut(code as usize)
                .ok_or(Error::UnknownCode(code))?;
            let (lo, hi, method, views) = range_of(code as u16).expect("codes 0..114 are tiled");
            if o.method != *method {
                return Err(Error::RegistryViolation(format!(
                    "code {code:03} lies in {lo:03}–{hi:03} which requires method {method:?}, got {:?}",
                    o.method
                )));
            }
            if !views.contains(&o.view) {
                return Err(Error::RegistryViolation(format!(
                    "code {code:03} cannot belong to view {}",
                    o.view
                )));
            }
            if o.name.is_empty() {
                return Err(Error::RegistryViolation(format!(
                    "code {code:03}: empty name"
                )));
            }
            slot.name = o.name;
            slot.view = o.view;
        }
        let mut names: Vec<&str> = self.entries.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::RegistryViolation(format!(
                "duplicate edge name {:?}",
                w[0]
            )));
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_anchored_codes() {
        let r = edge_registry();
        let e = r.get(111).unwrap();
        assert_eq!(
            (e.name.as_str(), e.method, e.view),
            ("title_title_clip", Method::Cosine, View::TCross)
        );
        let e = r.get(42).unwrap();
        assert_eq!((e.method, e.view), (Method::Detection, View::IIn));
        assert_eq!(r.get(200), Err(Error::UnknownCode(200)));
        assert_eq!(r.get(0).unwrap().name, "det_person");
        assert_eq!(r.get(80).unwrap().name, "ner_PERSON");
        assert_eq!(r.get(97).unwrap().name, "ner_CARDINAL");
    }

    #[test]
    fn ranges_tile_without_gaps_or_overlaps() {
        let mut covered = [0u8; NUM_CODES];
        for (lo, hi, _, _) in RANGES {
            for c in lo..=hi {
                covered[c as usize] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
        for e in edge_registry().entries() {
            let (_, _, method, views) = range_of(e.code).unwrap();
            assert_eq!(e.method, *method);
            assert!(views.contains(&e.view));
        }
    }

    #[test]
    fn range_widths_match_class_counts() {
        use crate::features::{DETECTION_CLASSES, NER_CLASSES};
        assert_eq!(RANGES[0].1 as usize + 1, DETECTION_CLASSES);
        assert_eq!((RANGES[1].1 - RANGES[1].0) as usize + 1, NER_CLASSES);
        assert_eq!(DETECTION_NAMES.lines().count(), DETECTION_CLASSES);
        assert_eq!(NER_NAMES.lines().count(), NER_CLASSES);
    }

    #[test]
    fn names_are_unique() {
        assert!(edge_registry().with_overrides([]).is_ok());
    }

    #[test]
    fn overrides_are_range_checked() {
        let ok = EdgeOverride {
            name: "img_dup".into(),
            view: View::IIn,
            method: Method::Cosine,
        };
        let r = edge_registry().with_overrides([(105, ok)]).unwrap();
        assert_eq!(r.get(105).unwrap().view, View::IIn);

        let bad_method = EdgeOverride {
            name: "x".into(),
            view: View::IIn,
            method: Method::Cosine,
        };
        assert!(matches!(
            edge_registry().with_overrides([(3, bad_method)]),
            Err(Error::RegistryViolation(_))
        ));
        let bad_view = EdgeOverride {
            name: "x".into(),
            view: View::TCross,
            method: Method::Annotation,
        };
        assert!(edge_registry().with_overrides([(98, bad_view)]).is_err());
        let oob = EdgeOverride {
            name: "x".into(),
            view: View::TCross,
            method: Method::Cosine,
        };
        assert_eq!(
            edge_registry().with_overrides([(114, oob)]),
            Err(Error::UnknownCode(114))
        );
    }
}

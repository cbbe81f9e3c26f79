//! R@K over event clusters and ACC@K over class-score matrices.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    /// Queries and gallery are the same items (img→img, txt→txt); a query
    /// never retrieves itself.
    SameSet,
    /// Queries and gallery are different items (img→txt, txt→img).
    Cross,
}

/// Fraction of eligible queries whose `k` nearest gallery items by cosine
/// include one with the query's label. Ties are broken against the query.
///
/// A query is eligible when its label occurs at least twice among the
/// queries (no singleton clusters) and some candidate carries it. Returns
/// `None` when nothing is eligible.
pub fn retrieval_eval<L: Ord>(
    queries: &[Vec<f64>],
    query_labels: &[L],
    gallery: &[Vec<f64>],
    gallery_labels: &[L],
    k: usize,
    mode: RetrievalMode,
) -> Result<Option<f64>> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if queries.len() != query_labels.len() || gallery.len() != gallery_labels.len() {
        return Err(Error::invalid("every item needs exactly one label"));
    }
    if mode == RetrievalMode::SameSet && queries.len() != gallery.len() {
        return Err(Error::invalid(
            "same-set retrieval needs identical query and gallery sets",
        ));
    }
    let mut cluster: BTreeMap<&L, usize> = BTreeMap::new();
    for l in query_labels {
        *cluster.entry(l).or_insert(0) += 1;
    }

    let mut eligible = 0usize;
    let mut hits = 0usize;
    for (qi, (q, ql)) in queries.iter().zip(query_labels).enumerate() {
        if cluster[ql] < 2 {
            continue;
        }
        let mut best_relevant: Option<f64> = None;
        let mut others = Vec::new();
        for (gi, (g, gl)) in gallery.iter().zip(gallery_labels).enumerate() {
            if mode == RetrievalMode::SameSet && gi == qi {
                continue;
            }
            let c = math::cosine(q, g)?;
            if gl == ql {
                best_relevant = Some(best_relevant.map_or(c, |b: f64| b.max(c)));
            } else {
                others.push(c);
            }
        }
        let Some(best) = best_relevant else { continue };
        eligible += 1;
        // Rank of the best relevant item with ties counted against it.
        let ahead = others.iter().filter(|&&c| c >= best).count();
        if ahead < k {
            hits += 1;
        }
    }
    Ok((eligible > 0).then(|| hits as f64 / eligible as f64))
}

/// Fraction of rows whose true class is within the `k` highest scores,
/// with ties counted against the true class.
pub fn classification_eval(scores: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::invalid(
            "need one label per score row and at least one row",
        ));
    }
    let mut hits = 0usize;
    for (row, &label) in scores.iter().zip(labels) {
        let Some(&truth) = row.get(label) else {
            return Err(Error::invalid(alloc::format!(
                "label {label} outside 0..{}",
                row.len()
            )));
        };
        let ahead = row
            .iter()
            .enumerate()
            .filter(|&(c, &s)| c != label && !(s < truth))
            .count();
        if ahead < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / scores.len() as f64)
}

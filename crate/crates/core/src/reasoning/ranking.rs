//! Filtered link-prediction ranking and the MRR / Hits@N metrics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Triple;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `<anchor, r, ?>`
    Tail,
    /// `<?, r, anchor>`
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripleQuery {
    pub anchor: u32,
    pub relation: u16,
    pub direction: Direction,
}

impl TripleQuery {
    pub fn tail(head: u32, relation: u16) -> Self {
        Self {
            anchor: head,
            relation,
            direction: Direction::Tail,
        }
    }

    pub fn head(tail: u32, relation: u16) -> Self {
        Self {
            anchor: tail,
            relation,
            direction: Direction::Head,
        }
    }

    /// The query that `t` answers in `direction`, with its answer.
    pub fn from_triple(t: &Triple, direction: Direction) -> (Self, u32) {
        match direction {
            Direction::Tail => (Self::tail(t.head, t.relation), t.tail),
            Direction::Head => (Self::head(t.tail, t.relation), t.head),
        }
    }

    /// The triple formed by placing `candidate` in the open slot.
    pub fn complete(&self, candidate: u32) -> Triple {
        match self.direction {
            Direction::Tail => Triple::new(self.anchor, self.relation, candidate),
            Direction::Head => Triple::new(candidate, self.relation, self.anchor),
        }
    }
}

/// A link-prediction model seen as a distance: lower is better.
pub trait LinkScorer {
    fn num_entities(&self) -> usize;

    /// Rejects queries the model cannot score (e.g. an unknown relation).
    fn check_query(&self, _query: &TripleQuery) -> Result<()> {
        Ok(())
    }

    fn score(&self, query: &TripleQuery, candidate: u32) -> f64;

    /// Distances for every candidate entity, indexed by entity id.
    fn distances(&self, query: &TripleQuery) -> Vec<f64> {
        (0..self.num_entities() as u32)
            .map(|c| self.score(query, c))
            .collect()
    }
}

/// Known true answers per query, used to filter competing positives.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterIndex {
    answers: BTreeMap<TripleQuery, BTreeSet<u32>>,
}

impl FilterIndex {
    pub fn new<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut idx = Self::default();
        for t in triples {
            idx.insert(t);
        }
        idx
    }

    pub fn insert(&mut self, t: &Triple) {
        for dir in [Direction::Tail, Direction::Head] {
            let (q, a) = TripleQuery::from_triple(t, dir);
            self.answers.entry(q).or_default().insert(a);
        }
    }

    pub fn answers(&self, query: &TripleQuery) -> Option<&BTreeSet<u32>> {
        self.answers.get(query)
    }

    pub fn contains(&self, t: &Triple) -> bool {
        let (q, a) = TripleQuery::from_triple(t, Direction::Tail);
        self.answers.get(&q).is_some_and(|s| s.contains(&a))
    }
}

/// `1 + #{c ∉ filtered, c ≠ answer : d(c) ≤ d(answer)}`. Ties count
/// against the answer, and so does any NaN distance.
pub fn filtered_rank(distances: &[f64], answer: u32, filtered: Option<&BTreeSet<u32>>) -> usize {
    let target = distances[answer as usize];
    1 + distances
        .iter()
        .enumerate()
        .filter(|&(c, &d)| {
            let c = c as u32;
            c != answer && !(d > target) && !filtered.is_some_and(|f| f.contains(&c))
        })
        .count()
}

pub fn raw_rank(distances: &[f64], answer: u32) -> usize {
    filtered_rank(distances, answer, None)
}

pub fn rank_answer(
    query: &TripleQuery,
    answer: u32,
    scorer: &dyn LinkScorer,
    filter: &FilterIndex,
) -> Result<usize> {
    let n = scorer.num_entities();
    if answer as usize >= n || query.anchor as usize >= n {
        return Err(Error::invalid(alloc::format!("entity id outside 0..{n}")));
    }
    scorer.check_query(query)?;
    let distances = scorer.distances(query);
    Ok(filtered_rank(&distances, answer, filter.answers(query)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
}

pub fn metrics_from_ranks(ranks: &[usize]) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(Error::invalid("no ranks to aggregate"));
    }
    if ranks.contains(&0) {
        return Err(Error::invalid("ranks start at 1"));
    }
    let n = ranks.len() as f64;
    let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(Metrics {
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        hits1: hits(1),
        hits3: hits(3),
        hits10: hits(10),
        n_queries: ranks.len(),
    })
}

/// Ranks every test triple in both directions; returns the per-query ranks
/// (tail query then head query for each triple) and their metrics.
pub fn evaluate(
    scorer: &dyn LinkScorer,
    test: &[Triple],
    filter: &FilterIndex,
) -> Result<(Metrics, Vec<usize>)> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let mut ranks = Vec::with_capacity(2 * test.len());
    for t in test {
        for dir in [Direction::Tail, Direction::Head] {
            let (q, a) = TripleQuery::from_triple(t, dir);
            ranks.push(rank_answer(&q, a, scorer, filter)?);
        }
    }
    Ok((metrics_from_ranks(&ranks)?, ranks))
}

/// Expected filtered MRR of a scorer that ranks candidates uniformly at
/// random: with `n` surviving candidates the rank is uniform on `1..=n`, so
/// the expectation is `H(n) / n`.
pub fn expected_random_mrr(
    num_entities: usize,
    test: &[Triple],
    filter: &FilterIndex,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for t in test {
        for dir in [Direction::Tail, Direction::Head] {
            let (q, a) = TripleQuery::from_triple(t, dir);
            let others = filter
                .answers(&q)
                .map_or(0, |s| s.iter().filter(|&&c| c != a).count());
            let n = num_entities - others;
            let harmonic: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
            total += harmonic / n as f64;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

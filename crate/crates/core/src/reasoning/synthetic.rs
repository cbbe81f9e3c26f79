//! A seeded compositional benchmark graph: entities on a rectangular grid
//! with four functional relations (right, left, up, down).

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::Triple;
use crate::rng;
use crate::{Error, Result};

pub const RIGHT: u16 = 0;
pub const LEFT: u16 = 1;
pub const UP: u16 = 2;
pub const DOWN: u16 = 3;
pub const NUM_RELATIONS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GridGraph {
    pub rows: usize,
    pub cols: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub train: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl GridGraph {
    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.test)
    }
}

/// Every grid triple, with entity `r * cols + c` at row `r`, column `c`.
pub fn grid_triples(rows: usize, cols: usize) -> Vec<Triple> {
    let id = |r: usize, c: usize| (r * cols + c) as u32;
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                out.push(Triple::new(id(r, c), RIGHT, id(r, c + 1)));
                out.push(Triple::new(id(r, c + 1), LEFT, id(r, c)));
            }
            if r + 1 < rows {
                out.push(Triple::new(id(r, c), UP, id(r + 1, c)));
                out.push(Triple::new(id(r + 1, c), DOWN, id(r, c)));
            }
        }
    }
    out
}

/// Builds the grid, relabels entities by a seeded permutation when
/// `scramble` is set, and holds out `round(holdout · |triples|)` triples.
pub fn grid_graph(
    rows: usize,
    cols: usize,
    holdout: f64,
    scramble: bool,
    seed: u64,
) -> Result<GridGraph> {
    if rows == 0 || cols == 0 || !(0.0..1.0).contains(&holdout) {
        return Err(Error::invalid(
            "grid needs positive size and a holdout fraction in [0, 1)",
        ));
    }
    let n = rows * cols;
    let mut triples = grid_triples(rows, cols);
    if scramble {
        let mut perm: Vec<u32> = (0..n as u32).collect();
        perm.shuffle(&mut rng::derived(seed, "grid-relabel", 0));
        for t in &mut triples {
            t.head = perm[t.head as usize];
            t.tail = perm[t.tail as usize];
        }
    }
    triples.shuffle(&mut rng::derived(seed, "grid-holdout", 0));
    let n_test = libm::round(holdout * triples.len() as f64) as usize;
    let train = triples.split_off(n_test);
    let mut test = triples;
    test.sort_unstable();
    let mut train = train;
    train.sort_unstable();
    Ok(GridGraph {
        rows,
        cols,
        num_entities: n,
        num_relations: NUM_RELATIONS,
        train,
        test,
    })
}

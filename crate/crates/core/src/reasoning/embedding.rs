use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[default]
    L1,
    L2,
}

impl Norm {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => math::l2_norm(v),
        }
    }

    /// Gradient of `‖v‖` with respect to `v` (zero at the origin).
    pub fn grad(self, v: &[f64]) -> Vec<f64> {
        match self {
            Norm::L1 => v
                .iter()
                .map(|&x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
            Norm::L2 => {
                let n = math::l2_norm(v);
                if n == 0.0 {
                    alloc::vec![0.0; v.len()]
                } else {
                    v.iter().map(|x| x / n).collect()
                }
            }
        }
    }
}

/// Entity and relation vectors, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub entities: Vec<f64>,
    pub relations: Vec<f64>,
}

impl EmbeddingTable {
    pub fn entity(&self, e: u32) -> &[f64] {
        let e = e as usize;
        &self.entities[e * self.dim..(e + 1) * self.dim]
    }

    pub fn entity_mut(&mut self, e: u32) -> &mut [f64] {
        let e = e as usize;
        &mut self.entities[e * self.dim..(e + 1) * self.dim]
    }

    pub fn relation(&self, r: u16) -> &[f64] {
        let r = r as usize;
        &self.relations[r * self.dim..(r + 1) * self.dim]
    }

    pub fn relation_mut(&mut self, r: u16) -> &mut [f64] {
        let r = r as usize;
        &mut self.relations[r * self.dim..(r + 1) * self.dim]
    }

    pub fn normalize_entities(&mut self) {
        for row in self.entities.chunks_mut(self.dim) {
            math::normalize(row);
        }
    }

    pub fn check_ids(&self, h: u32, r: u16, t: u32) -> Result<()> {
        if h as usize >= self.num_entities || t as usize >= self.num_entities {
            return Err(Error::invalid(format!(
                "entity id out of range in ({h}, {r}, {t})"
            )));
        }
        if r as usize >= self.num_relations {
            return Err(Error::invalid(format!("relation {r} out of range")));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.entities
            .iter()
            .chain(&self.relations)
            .all(|x| x.is_finite())
    }
}

/// Seeded uniform initialisation in `[-6/√d, 6/√d]`; entity rows are then
/// scaled to unit L2 norm.
pub fn init_embeddings(
    num_entities: usize,
    num_relations: usize,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    let bound = 6.0 / math::sqrt(dim as f64);
    let mut rng = rng::derived(seed, "init-embeddings", 0);
    let mut draw =
        |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..=bound)).collect() };
    let entities = draw(num_entities * dim);
    let relations = draw(num_relations * dim);
    let mut table = EmbeddingTable {
        dim,
        num_entities,
        num_relations,
        entities,
        relations,
    };
    table.normalize_entities();
    Ok(table)
}

/// `‖h + r − t‖` for explicit vectors.
pub fn transe_distance(h: &[f64], r: &[f64], t: &[f64], norm: Norm) -> f64 {
    let diff: Vec<f64> = h
        .iter()
        .zip(r)
        .zip(t)
        .map(|((a, b), c)| a + b - c)
        .collect();
    norm.of(&diff)
}

/// TransE distance of a triple under `table`; lower is more plausible.
pub fn transe_score(h: u32, r: u16, t: u32, table: &EmbeddingTable, norm: Norm) -> Result<f64> {
    table.check_ids(h, r, t)?;
    Ok(transe_distance(
        table.entity(h),
        table.relation(r),
        table.entity(t),
        norm,
    ))
}

//! One-pass greedy partition of examples into contiguous chunks of similar
//! total nonzero count.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Acceptance test applied when deciding whether coordinate `t` joins the open chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChunkGuard {
    /// Join iff `s + u[t] <= m` where `s` is the open chunk's nnz sum.
    #[default]
    NnzSum,
    /// Join iff `g + u[t] <= m` where `g` is the open chunk's coordinate count.
    /// Kept for comparison with the literal pseudocode.
    CoordinateCount,
}

/// Contiguous chunks `G_1..G_k` covering `0..n` in input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPartition {
    /// Chunk `j` holds coordinates `boundaries[j]..boundaries[j + 1]`.
    pub boundaries: Vec<usize>,
    /// Coordinates per chunk.
    pub g: Vec<usize>,
    /// Nonzeros per chunk, `ψ(j) = Σ_{i ∈ G_j} u[i]`.
    pub s: Vec<usize>,
    /// `m = max_i u[i]`.
    pub capacity: usize,
    /// Loop iterations performed by the partitioner.
    #[serde(skip)]
    pub visited: usize,
}

impl ChunkPartition {
    pub fn k(&self) -> usize {
        self.g.len()
    }

    pub fn n(&self) -> usize {
        *self.boundaries.last().unwrap_or(&0)
    }

    pub fn chunk(&self, j: usize) -> std::ops::Range<usize> {
        self.boundaries[j]..self.boundaries[j + 1]
    }

    pub fn max_size(&self) -> usize {
        self.g.iter().copied().max().unwrap_or(0)
    }

    /// Chunk index of every coordinate.
    pub fn owner(&self) -> Vec<usize> {
        let mut owner = vec![0; self.n()];
        for j in 0..self.k() {
            owner[self.chunk(j)].iter_mut().for_each(|o| *o = j);
        }
        owner
    }
}

pub fn naive_chunks(u: &[usize]) -> Result<ChunkPartition> {
    naive_chunks_with(u, ChunkGuard::NnzSum)
}

/// Greedy left-to-right chunking: the open chunk absorbs the next coordinate
/// while the guard holds, otherwise a new chunk starts there.
pub fn naive_chunks_with(u: &[usize], guard: ChunkGuard) -> Result<ChunkPartition> {
    let (&first, rest) = u
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("cannot chunk an empty nnz vector".into()))?;
    let capacity = u.iter().copied().max().unwrap_or(0);

    let mut boundaries = vec![0];
    let mut g = vec![1usize];
    let mut s = vec![first];
    let mut visited = 1;
    for (offset, &ut) in rest.iter().enumerate() {
        visited += 1;
        let open = g.len() - 1;
        let load = match guard {
            ChunkGuard::NnzSum => s[open],
            ChunkGuard::CoordinateCount => g[open],
        };
        if load + ut <= capacity {
            g[open] += 1;
            s[open] += ut;
        } else {
            boundaries.push(offset + 1);
            g.push(1);
            s.push(ut);
        }
    }
    boundaries.push(u.len());
    Ok(ChunkPartition {
        boundaries,
        g,
        s,
        capacity,
        visited,
    })
}

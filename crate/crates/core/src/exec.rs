//! Execution strategy for data-parallel loops.
//!
//! Work is split into fixed-size blocks whose partial results are combined in
//! index order, so parallel and sequential execution produce bitwise-identical
//! results. Without the `parallel` feature, [`Execution::Parallel`] runs
//! sequentially.

use std::ops::Range;

/// Number of examples per block in full-data reductions.
pub const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this strategy actually fans out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Evaluates `f` on `0..count` and collects the results in index order.
    pub fn map<R, F>(self, count: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..count).into_par_iter().map(f).collect();
        }
        (0..count).map(f).collect()
    }

    /// Evaluates `f` on consecutive ranges of at most `block` indices covering `0..len`.
    pub fn map_blocks<R, F>(self, len: usize, block: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(Range<usize>) -> R + Sync + Send,
    {
        let block = block.max(1);
        let blocks = len.div_ceil(block);
        self.map(blocks, |b| f(b * block..((b + 1) * block).min(len)))
    }
}

impl std::str::FromStr for Execution {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "seq" | "sequential" => Ok(Execution::Sequential),
            "par" | "parallel" => Ok(Execution::Parallel),
            other => Err(crate::Error::InvalidArgument(format!(
                "unknown execution mode '{other}' (expected seq or par)"
            ))),
        }
    }
}

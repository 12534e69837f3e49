//! Tensor-train states and operators.

mod dump;
mod operator;
mod state;

pub use dump::{dump_operator, dump_state};
pub use operator::TtOperator;
pub use state::{Direction, SplitPair, TensorTrain};

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest one at a cut are
/// treated as exact zeros and never kept.
pub const NOISE_FLOOR: f64 = 1e-14;

/// Rank control for every SVD truncation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationPolicy {
    pub max_rank: usize,
    /// Relative cutoff on singular values; 0 means rank-controlled only.
    pub svd_threshold: f64,
}

impl TruncationPolicy {
    pub fn new(max_rank: usize, svd_threshold: f64) -> Result<Self> {
        if max_rank < 1 {
            return Err(Error::InvalidPolicy("max_rank must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&svd_threshold) {
            return Err(Error::InvalidPolicy(format!(
                "svd_threshold must lie in [0, 1), got {svd_threshold}"
            )));
        }
        Ok(TruncationPolicy { max_rank, svd_threshold })
    }

    pub fn rank(max_rank: usize) -> Result<Self> {
        Self::new(max_rank, 0.0)
    }

    /// Keeps everything above the noise floor.
    pub fn exact() -> Self {
        TruncationPolicy { max_rank: usize::MAX, svd_threshold: 0.0 }
    }

    pub fn with_max_rank(self, max_rank: usize) -> Self {
        TruncationPolicy { max_rank: max_rank.max(1), ..self }
    }

    /// Number of singular values kept from a descending list; at least one.
    pub fn keep(&self, s: &[f64]) -> usize {
        let Some(&s0) = s.first() else { return 0 };
        if s0 <= 0.0 {
            return 1;
        }
        let cut = self.svd_threshold.max(NOISE_FLOOR) * s0;
        let above = s.iter().take_while(|&&x| x > cut).count();
        above.min(self.max_rank).max(1)
    }
}

//! Inter- and intra-observer agreement on voxel-wise binary annotations.

mod kappa;
mod staple;

pub use kappa::{fleiss_kappa, fleiss_kappa_counts, fleiss_kappa_in_box, kappa_mean, KappaBand, KappaResult};
pub use staple::{staple, StapleOptions, StapleResult, STAPLE_CLAMP, STAPLE_INITIAL_RATE};

use crate::error::{Error, Result};
use crate::metrics::dsc;
use crate::volume::{BinaryMask, Grid};

/// Two or more annotations of one image sharing a grid.
#[derive(Debug, Clone)]
pub struct RaterStack {
    masks: Vec<BinaryMask>,
}

impl RaterStack {
    pub fn new(masks: Vec<BinaryMask>) -> Result<Self> {
        if masks.len() < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 raters, got {}", masks.len())));
        }
        for (i, m) in masks.iter().enumerate().skip(1) {
            masks[0].grid().ensure_same(m.grid(), &format!("rater {}", i + 1))?;
        }
        Ok(RaterStack { masks })
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn n_raters(&self) -> usize {
        self.masks.len()
    }

    pub fn grid(&self) -> &Grid {
        self.masks[0].grid()
    }

    /// Voxel count M.
    pub fn n_voxels(&self) -> usize {
        self.grid().len()
    }

    /// Number of raters labeling each voxel foreground.
    pub fn votes(&self) -> Vec<u32> {
        let mut votes = vec![0u32; self.n_voxels()];
        for m in &self.masks {
            for (v, &b) in votes.iter_mut().zip(m.data()) {
                *v += b as u32;
            }
        }
        votes
    }
}

/// Symmetric matrix of DSC between every pair of raters (unit diagonal).
pub fn pairwise_dsc(stack: &RaterStack) -> Vec<Vec<f64>> {
    let n = stack.n_raters();
    let mut out = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = dsc(&stack.masks[i], &stack.masks[j]).expect("stack grids agree");
            out[i][j] = d;
            out[j][i] = d;
        }
    }
    out
}

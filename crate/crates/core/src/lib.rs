//! Evaluation of 3D lesion segmentations on PET/CT volumes.
//!
//! - [`volume`]: grids, scalar volumes, binary masks, connected components,
//!   resampling and preprocessing.
//! - [`metrics`]: Dice, false-positive and false-negative volumes.
//! - [`detection`]: lesion matching and the three detection criteria.
//! - [`measures`]: patient-level lesion measures (SUVmean, SUVmax, lesion
//!   count, TMTV, TLG, Dmax) and MAPE.
//! - [`agreement`]: Fleiss' kappa, pairwise Dice and STAPLE.
//! - [`stats`]: paired t-tests, MAPE curves, threshold curves, summaries.
//! - [`io`]: NIfTI-1 volumes and CSV/JSON reports.
//! - [`phantom`]: synthetic phantoms and mask degradations.

// Index loops over the three axes read better than zipped iterators, and
// negated comparisons are how NaN parameters get rejected.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod agreement;
mod assignment;
pub mod detection;
pub mod error;
pub mod io;
pub mod measures;
pub mod metrics;
pub mod phantom;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};

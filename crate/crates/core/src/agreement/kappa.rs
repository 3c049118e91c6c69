use std::fmt;

use serde::{Deserialize, Serialize};

use super::RaterStack;
use crate::error::{Error, Result};
use crate::volume::BoundingBox;

/// Qualitative agreement bands: below 0 none, up to 0.20 slight, 0.40 fair,
/// 0.60 moderate, 0.80 substantial, above that almost perfect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaBand {
    None,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl KappaBand {
    pub fn of(kappa: f64) -> KappaBand {
        if kappa < 0.0 {
            KappaBand::None
        } else if kappa <= 0.20 {
            KappaBand::Slight
        } else if kappa <= 0.40 {
            KappaBand::Fair
        } else if kappa <= 0.60 {
            KappaBand::Moderate
        } else if kappa <= 0.80 {
            KappaBand::Substantial
        } else {
            KappaBand::AlmostPerfect
        }
    }
}

impl fmt::Display for KappaBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KappaBand::None => "none",
            KappaBand::Slight => "slight",
            KappaBand::Fair => "fair",
            KappaBand::Moderate => "moderate",
            KappaBand::Substantial => "substantial",
            KappaBand::AlmostPerfect => "almost_perfect",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    /// Observed agreement.
    pub p_bar: f64,
    /// Chance agreement.
    pub p_e: f64,
    pub band: KappaBand,
    /// Chance agreement is 1 (every voxel carries the same label from every
    /// rater); kappa is reported as 1.
    pub degenerate: bool,
}

/// Fleiss' kappa from per-voxel foreground vote counts with two labels.
pub fn fleiss_kappa_counts(votes: &[u32], n_raters: usize) -> Result<KappaResult> {
    if n_raters < 2 {
        return Err(Error::InvalidParameter("need at least 2 raters".into()));
    }
    if votes.is_empty() {
        return Err(Error::EmptyInput("no voxels".into()));
    }
    let m = votes.len() as f64;
    let n = n_raters as f64;
    let mut sum_sq = 0.0f64;
    let mut fg_total = 0.0f64;
    for &v in votes {
        let fg = v as f64;
        let bg = n - fg;
        sum_sq += fg * fg + bg * bg;
        fg_total += fg;
    }
    let bg_total = m * n - fg_total;
    let p_bar = (sum_sq - m * n) / (m * n * (n - 1.0));
    let p_e = (fg_total * fg_total + bg_total * bg_total) / (m * m * n * n);
    if p_e >= 1.0 {
        return Ok(KappaResult { kappa: 1.0, p_bar, p_e, band: KappaBand::AlmostPerfect, degenerate: true });
    }
    let kappa = (p_bar - p_e) / (1.0 - p_e);
    Ok(KappaResult { kappa, p_bar, p_e, band: KappaBand::of(kappa), degenerate: false })
}

/// Fleiss' kappa over every voxel of the stack.
pub fn fleiss_kappa(stack: &RaterStack) -> KappaResult {
    fleiss_kappa_counts(&stack.votes(), stack.n_raters()).expect("stack holds at least 2 raters and 1 voxel")
}

/// Fleiss' kappa restricted to the voxels inside `bbox`.
pub fn fleiss_kappa_in_box(stack: &RaterStack, bbox: &BoundingBox) -> Result<KappaResult> {
    let cropped = stack.masks().iter().map(|m| m.crop(bbox)).collect::<Result<Vec<_>>>()?;
    Ok(fleiss_kappa(&RaterStack::new(cropped)?))
}

/// Arithmetic mean of per-case kappa.
pub fn kappa_mean(stacks: &[RaterStack]) -> Result<f64> {
    if stacks.is_empty() {
        return Err(Error::EmptyInput("no cases for kappa mean".into()));
    }
    Ok(stacks.iter().map(|s| fleiss_kappa(s).kappa).sum::<f64>() / stacks.len() as f64)
}

//! Voxel-level segmentation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{connected_components, BinaryMask, Connectivity, LabeledComponents, ScalarVolume};

pub const DICE_LOSS_EPS: f64 = 1e-5;
pub const DICE_LOSS_ETA: f64 = 1e-5;

/// Patient-level overlap scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    pub dsc: f64,
    pub fpv_ml: f64,
    pub fnv_ml: f64,
}

/// Dice similarity `2|G∩P| / (|G|+|P|)`. Two empty masks score 1, one empty
/// mask scores 0.
pub fn dsc(gt: &BinaryMask, pred: &BinaryMask) -> Result<f64> {
    let inter = gt.intersection_count(pred)?;
    let total = gt.count() + pred.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Single-patch binary Dice loss with stabilizers `eps` (numerator) and `eta`
/// (denominator).
pub fn soft_dice_loss(pred_probs: &ScalarVolume, gt: &BinaryMask, eps: f64, eta: f64) -> Result<f64> {
    pred_probs.grid().ensure_same(gt.grid(), "soft dice loss")?;
    let mut inter = 0.0;
    let mut sum = 0.0;
    for (i, (&p, &g)) in pred_probs.data().iter().zip(gt.data()).enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("probability {p} at voxel {i} outside [0, 1]")));
        }
        let g = if g { 1.0 } else { 0.0 };
        inter += p * g;
        sum += p + g;
    }
    Ok(1.0 - (2.0 * inter + eps) / (sum + eta))
}

/// Total volume (ml) of predicted components that do not touch the ground
/// truth foreground.
pub fn fpv(gt: &BinaryMask, pred_cc: &LabeledComponents) -> Result<f64> {
    pred_cc.grid().ensure_same(gt.grid(), "fpv")?;
    Ok(missed_volume(pred_cc, gt))
}

/// Total volume (ml) of ground-truth components that the prediction does not
/// touch.
pub fn fnv(gt_cc: &LabeledComponents, pred: &BinaryMask) -> Result<f64> {
    gt_cc.grid().ensure_same(pred.grid(), "fnv")?;
    Ok(missed_volume(gt_cc, pred))
}

fn missed_volume(cc: &LabeledComponents, other: &BinaryMask) -> f64 {
    let voxels: usize = cc
        .components()
        .filter(|(_, v)| !v.iter().any(|&i| other.contains(i)))
        .map(|(_, v)| v.len())
        .sum();
    voxels as f64 * cc.grid().voxel_volume_ml()
}

/// DSC, FPV and FNV in one pass, labeling both masks with `connectivity`.
pub fn seg_scores(gt: &BinaryMask, pred: &BinaryMask, connectivity: Connectivity) -> Result<SegScores> {
    let dsc = dsc(gt, pred)?;
    let gt_cc = connected_components(gt, connectivity);
    let pred_cc = connected_components(pred, connectivity);
    Ok(SegScores { dsc, fpv_ml: fpv(gt, &pred_cc)?, fnv_ml: fnv(&gt_cc, pred)? })
}

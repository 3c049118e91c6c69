//! Per-lesion detection criteria.
//!
//! * Criterion 1: a predicted lesion is a TP when it overlaps any ground-truth
//!   lesion; a ground-truth lesion is an FN when no prediction touches it.
//! * Criterion 2: lesions are paired one-to-one by maximizing total IoU; a
//!   pair is a TP when its IoU reaches the threshold.
//! * Criterion 3: same pairing; a pair is a TP when the predicted lesion
//!   contains the ground-truth lesion's SUVmax voxel.
//!
//! For criteria 2 and 3 a pair that fails the test makes the prediction an FP
//! and the ground-truth lesion an FN (`fn_effective`). `fn_strict` counts only
//! ground-truth lesions left unpaired.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::assignment::lexicographic_max_matching;
use crate::error::{Error, Result};
use crate::volume::{LabeledComponents, ScalarVolume};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    C1,
    C2,
    C3,
}

impl Criterion {
    pub fn number(self) -> u8 {
        match self {
            Criterion::C1 => 1,
            Criterion::C2 => 2,
            Criterion::C3 => 3,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Criterion::C1),
            2 => Ok(Criterion::C2),
            3 => Ok(Criterion::C3),
            _ => Err(Error::InvalidParameter(format!("detection criterion must be 1, 2 or 3, got {n}"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt_label: u32,
    pub pred_label: u32,
    pub intersection: usize,
    pub union: usize,
    pub iou: f64,
}

/// One-to-one pairing of ground-truth and predicted lesions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTable {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_gt: Vec<u32>,
    pub unmatched_pred: Vec<u32>,
    pub n_gt: usize,
    pub n_pred: usize,
}

impl MatchTable {
    pub fn total_iou(&self) -> f64 {
        self.pairs.iter().map(|p| p.iou).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub criterion: Criterion,
    pub tp: usize,
    pub fp: usize,
    /// Ground-truth lesions not detected (unpaired or paired but failing).
    #[serde(rename = "fn")]
    pub fn_effective: usize,
    /// Ground-truth lesions left unpaired only.
    pub fn_strict: usize,
    pub n_gt: usize,
    pub n_pred: usize,
    /// `None` when the case has no ground-truth lesions.
    pub sensitivity: Option<f64>,
}

impl DetectionOutcome {
    fn new(criterion: Criterion, tp: usize, fp: usize, fn_effective: usize, fn_strict: usize, n_gt: usize, n_pred: usize) -> Self {
        let sensitivity = (n_gt > 0).then(|| (n_gt - fn_effective) as f64 / n_gt as f64);
        DetectionOutcome { criterion, tp, fp, fn_effective, fn_strict, n_gt, n_pred, sensitivity }
    }

    pub fn is_no_lesion(&self) -> bool {
        self.n_gt == 0
    }
}

/// Voxel counts of every overlapping `(gt_label, pred_label)` pair.
fn overlaps(gt_cc: &LabeledComponents, pred_cc: &LabeledComponents) -> BTreeMap<(u32, u32), usize> {
    let mut out = BTreeMap::new();
    for (g, voxels) in gt_cc.components() {
        for &i in voxels {
            let p = pred_cc.label_at(i);
            if p != 0 {
                *out.entry((g, p)).or_insert(0) += 1;
            }
        }
    }
    out
}

/// Optimal one-to-one pairing maximizing the summed IoU over pairs that
/// overlap. Among optimal pairings, ground-truth lesions in label order take
/// the lowest-labeled prediction that keeps the total optimal.
pub fn match_lesions(gt_cc: &LabeledComponents, pred_cc: &LabeledComponents) -> Result<MatchTable> {
    gt_cc.grid().ensure_same(pred_cc.grid(), "match lesions")?;
    let inter = overlaps(gt_cc, pred_cc);
    let gt_sizes = gt_cc.sizes();
    let pred_sizes = pred_cc.sizes();

    // Only lesions with some overlap take part in the assignment.
    let mut gt_rows: Vec<u32> = inter.keys().map(|&(g, _)| g).collect();
    gt_rows.dedup();
    let mut pred_cols: Vec<u32> = inter.keys().map(|&(_, p)| p).collect();
    pred_cols.sort_unstable();
    pred_cols.dedup();
    let col_of: BTreeMap<u32, usize> = pred_cols.iter().enumerate().map(|(c, &p)| (p, c)).collect();
    let row_of: BTreeMap<u32, usize> = gt_rows.iter().enumerate().map(|(r, &g)| (g, r)).collect();

    let iou_of = |g: u32, p: u32, n: usize| {
        let union = gt_sizes[g as usize - 1] + pred_sizes[p as usize - 1] - n;
        (union, n as f64 / union as f64)
    };
    let mut weights = vec![vec![0.0; pred_cols.len()]; gt_rows.len()];
    for (&(g, p), &n) in &inter {
        weights[row_of[&g]][col_of[&p]] = iou_of(g, p, n).1;
    }

    let mut pairs: Vec<MatchedPair> = lexicographic_max_matching(&weights, gt_rows.len(), pred_cols.len())
        .into_iter()
        .map(|(r, c)| {
            let (g, p) = (gt_rows[r], pred_cols[c]);
            let n = inter[&(g, p)];
            let (union, iou) = iou_of(g, p, n);
            MatchedPair { gt_label: g, pred_label: p, intersection: n, union, iou }
        })
        .collect();
    pairs.sort_by_key(|p| (p.gt_label, p.pred_label));

    let mut gt_used = vec![false; gt_cc.count()];
    let mut pred_used = vec![false; pred_cc.count()];
    for p in &pairs {
        gt_used[p.gt_label as usize - 1] = true;
        pred_used[p.pred_label as usize - 1] = true;
    }
    let unused = |used: &[bool]| used.iter().enumerate().filter(|(_, &u)| !u).map(|(i, _)| i as u32 + 1).collect();
    Ok(MatchTable {
        unmatched_gt: unused(&gt_used),
        unmatched_pred: unused(&pred_used),
        pairs,
        n_gt: gt_cc.count(),
        n_pred: pred_cc.count(),
    })
}

/// Overlap-only detection.
pub fn criterion1(gt_cc: &LabeledComponents, pred_cc: &LabeledComponents) -> Result<DetectionOutcome> {
    gt_cc.grid().ensure_same(pred_cc.grid(), "criterion 1")?;
    let inter = overlaps(gt_cc, pred_cc);
    let mut gt_hit = vec![false; gt_cc.count()];
    let mut pred_hit = vec![false; pred_cc.count()];
    for &(g, p) in inter.keys() {
        gt_hit[g as usize - 1] = true;
        pred_hit[p as usize - 1] = true;
    }
    let tp = pred_hit.iter().filter(|&&h| h).count();
    let fp = pred_hit.len() - tp;
    let fn_ = gt_hit.iter().filter(|&&h| !h).count();
    Ok(DetectionOutcome::new(Criterion::C1, tp, fp, fn_, fn_, gt_cc.count(), pred_cc.count()))
}

fn from_pair_tests(criterion: Criterion, table: &MatchTable, passed: impl Fn(&MatchedPair) -> bool) -> DetectionOutcome {
    let tp = table.pairs.iter().filter(|p| passed(p)).count();
    let failed = table.pairs.len() - tp;
    let fp = failed + table.unmatched_pred.len();
    let fn_strict = table.unmatched_gt.len();
    DetectionOutcome::new(criterion, tp, fp, fn_strict + failed, fn_strict, table.n_gt, table.n_pred)
}

/// IoU-threshold detection on a match table (inclusive `iou >= threshold`).
pub fn criterion2(table: &MatchTable, threshold: f64) -> Result<DetectionOutcome> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!("IoU threshold {threshold} must lie in (0, 1]")));
    }
    Ok(from_pair_tests(Criterion::C2, table, |p| p.iou >= threshold))
}

/// Index of the maximum-SUV voxel of each ground-truth lesion (smallest index
/// on ties).
pub fn suv_max_voxels(gt_cc: &LabeledComponents, suv: &ScalarVolume) -> Result<Vec<usize>> {
    gt_cc.grid().ensure_same(suv.grid(), "SUVmax voxels")?;
    let data = suv.data();
    Ok(gt_cc
        .components()
        .map(|(_, voxels)| {
            // voxel lists are ascending, so strict > keeps the first maximum
            let mut best = voxels[0];
            for &i in &voxels[1..] {
                if data[i] > data[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}

/// SUVmax-voxel detection on a match table.
pub fn criterion3(
    table: &MatchTable,
    gt_cc: &LabeledComponents,
    pred_cc: &LabeledComponents,
    suv: &ScalarVolume,
) -> Result<DetectionOutcome> {
    gt_cc.grid().ensure_same(pred_cc.grid(), "criterion 3")?;
    let peaks = suv_max_voxels(gt_cc, suv)?;
    Ok(from_pair_tests(Criterion::C3, table, |p| {
        pred_cc.label_at(peaks[p.gt_label as usize - 1]) == p.pred_label
    }))
}

/// All three criteria for one case.
pub fn detect_all(
    gt_cc: &LabeledComponents,
    pred_cc: &LabeledComponents,
    suv: &ScalarVolume,
    threshold: f64,
) -> Result<[DetectionOutcome; 3]> {
    let table = match_lesions(gt_cc, pred_cc)?;
    Ok([
        criterion1(gt_cc, pred_cc)?,
        criterion2(&table, threshold)?,
        criterion3(&table, gt_cc, pred_cc, suv)?,
    ])
}

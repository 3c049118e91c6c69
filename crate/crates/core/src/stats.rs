//! Statistical analyses over per-case results: paired t-tests with Bonferroni
//! correction, binned MAPE curves, threshold-subset DSC curves and
//! distribution summaries.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::measures::mape;

pub const DEFAULT_ALPHA: f64 = 0.05;
/// Upper quantile bounding the thresholds of subset-DSC curves.
pub const THRESHOLD_UPPER_QUANTILE: f64 = 0.85;
pub const DEFAULT_LOG_BINS: usize = 8;

/// Linear-interpolation quantile (type 7) of already sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile of empty list".into()));
    }
    Ok(quantile_sorted(&sorted(values), q))
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantile(values, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator; 0 for one value).
    pub sd: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

pub fn summary(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptyInput("summary of empty list".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let s = sorted(values);
    Ok(Summary {
        n,
        mean,
        sd,
        median: quantile_sorted(&s, 0.5),
        q25: quantile_sorted(&s, 0.25),
        q75: quantile_sorted(&s, 0.75),
    })
}

/// Two-sided p-value of Student's t with `df` degrees of freedom:
/// `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub t_stat: f64,
    pub p_value: f64,
    pub n: usize,
    pub alpha: f64,
    pub n_tests: usize,
    pub alpha_corrected: f64,
    /// `p_value < alpha_corrected`.
    pub reject: bool,
    /// Differences had zero variance; `p_value` is 1 when they were all
    /// zero and 0 otherwise.
    pub degenerate: bool,
}

/// Bonferroni-corrected significance level.
pub fn bonferroni(alpha: f64, n_tests: usize) -> f64 {
    alpha / n_tests as f64
}

/// Two-sided paired Student's t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64, n_tests: usize) -> Result<PairedTestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidParameter("paired t-test needs at least 2 pairs".into()));
    }
    if n_tests == 0 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} / n_tests {n_tests} invalid")));
    }
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let alpha_corrected = bonferroni(alpha, n_tests);

    let (t_stat, p_value, degenerate) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0, true)
        } else {
            (mean.signum() * f64::INFINITY, 0.0, true)
        }
    } else {
        let t = mean / (var / n as f64).sqrt();
        (t, t_two_sided_p(t, (n - 1) as f64), false)
    };
    Ok(PairedTestResult {
        t_stat,
        p_value,
        n,
        alpha,
        n_tests,
        alpha_corrected,
        reject: p_value < alpha_corrected,
        degenerate,
    })
}

/// Points or bins of a curve. For binned curves `bin_edges` has one more
/// entry than `bin_values`; for threshold curves each edge is the threshold
/// of the matching value. Empty bins carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCurve {
    pub bin_edges: Vec<f64>,
    pub bin_values: Vec<Option<f64>>,
    pub bin_counts: Vec<usize>,
}

/// Bin edges: `n_log_bins` geometric bins from the smallest positive value
/// up to `log_linear_break`, then linear bins of `linear_step` up to the
/// largest value.
pub fn log_linear_edges(values: &[f64], log_linear_break: f64, n_log_bins: usize, linear_step: f64) -> Result<Vec<f64>> {
    if !(log_linear_break > 0.0 && linear_step > 0.0) {
        return Err(Error::InvalidParameter("break and linear step must be positive".into()));
    }
    let positive: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::EmptyInput("no positive values to bin".into()));
    }
    let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = positive.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut edges = Vec::new();
    if lo < log_linear_break && n_log_bins > 0 {
        let ratio = (log_linear_break / lo).ln() / n_log_bins as f64;
        edges.push(lo);
        for k in 1..n_log_bins {
            edges.push(lo * (ratio * k as f64).exp());
        }
        edges.push(log_linear_break);
    } else {
        edges.push(lo.min(log_linear_break));
    }
    let mut last = *edges.last().unwrap();
    while last < hi {
        last += linear_step;
        edges.push(last);
    }
    if edges.len() == 1 {
        edges.push(edges[0] + linear_step);
    }
    Ok(edges)
}

/// Bin index of `v` (half-open bins, last bin closed).
fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if v < edges[0] || v > edges[n] {
        return None;
    }
    let k = edges.partition_point(|&e| e <= v);
    Some(k.saturating_sub(1).min(n - 1))
}

/// Per-bin MAPE, bucketing cases by their original value.
pub fn mape_curve(
    orig: &[f64],
    pred: &[f64],
    log_linear_break: f64,
    n_log_bins: usize,
    linear_step: f64,
) -> Result<BinnedCurve> {
    if orig.is_empty() {
        return Err(Error::EmptyInput("MAPE curve of empty input".into()));
    }
    if orig.len() != pred.len() {
        return Err(Error::InvalidParameter(format!("length mismatch: {} vs {}", orig.len(), pred.len())));
    }
    let edges = log_linear_edges(orig, log_linear_break, n_log_bins, linear_step)?;
    mape_curve_with_edges(orig, pred, edges)
}

pub fn mape_curve_with_edges(orig: &[f64], pred: &[f64], edges: Vec<f64>) -> Result<BinnedCurve> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("bin edges must be strictly ascending".into()));
    }
    let n_bins = edges.len() - 1;
    let mut members: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n_bins];
    for (&o, &p) in orig.iter().zip(pred) {
        // zero originals are excluded from MAPE
        if o == 0.0 {
            continue;
        }
        if let Some(k) = bin_of(&edges, o) {
            members[k].0.push(o);
            members[k].1.push(p);
        }
    }
    let bin_values = members
        .iter()
        .map(|(o, p)| if o.is_empty() { None } else { mape(o, p).ok().map(|m| m.percent) })
        .collect();
    let bin_counts = members.iter().map(|(o, _)| o.len()).collect();
    Ok(BinnedCurve { bin_edges: edges, bin_values, bin_counts })
}

/// Median DSC over the cases whose measure is at least `t`, for thresholds
/// from the minimum measure up to its `upper_quantile` in steps of `step`.
pub fn threshold_subset_dsc(measure: &[f64], dsc: &[f64], step: f64, upper_quantile: f64) -> Result<BinnedCurve> {
    if measure.is_empty() {
        return Err(Error::EmptyInput("threshold curve of empty input".into()));
    }
    if measure.len() != dsc.len() {
        return Err(Error::InvalidParameter(format!("length mismatch: {} vs {}", measure.len(), dsc.len())));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold step {step} must be positive")));
    }
    let s = sorted(measure);
    let start = s[0];
    let stop = quantile_sorted(&s, upper_quantile);
    let mut curve = BinnedCurve { bin_edges: Vec::new(), bin_values: Vec::new(), bin_counts: Vec::new() };
    let mut k = 0usize;
    loop {
        // t = start + k·step avoids drift from repeated addition
        let t = start + k as f64 * step;
        if t > stop {
            break;
        }
        let subset: Vec<f64> = measure.iter().zip(dsc).filter(|(&b, _)| b >= t).map(|(_, &d)| d).collect();
        curve.bin_edges.push(t);
        curve.bin_counts.push(subset.len());
        curve.bin_values.push(median(&subset).ok());
        k += 1;
    }
    Ok(curve)
}

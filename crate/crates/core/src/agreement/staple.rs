//! Binary STAPLE: expectation-maximization over a consensus foreground
//! probability per voxel and a sensitivity/specificity per rater.
//!
//! The prior foreground probability of each voxel is the fraction of raters
//! marking it. Rater parameters start at [`STAPLE_INITIAL_RATE`] and are
//! clamped to `[STAPLE_CLAMP.0, STAPLE_CLAMP.1]` whenever they are set.
//! Each iteration runs the E-step (voxel posteriors from the current rater
//! parameters) then the M-step (rater parameters from the posteriors); the
//! loop stops once no posterior moves by more than `tol`.

use log::warn;
use serde::{Deserialize, Serialize};

use super::RaterStack;
use crate::volume::BinaryMask;

pub const STAPLE_INITIAL_RATE: f64 = 0.9999;
pub const STAPLE_CLAMP: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StapleOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for StapleOptions {
    fn default() -> Self {
        StapleOptions { max_iter: 100, tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct StapleResult {
    /// Voxels with posterior ≥ 0.5.
    pub consensus: BinaryMask,
    pub probabilities: Vec<f64>,
    pub sensitivities: Vec<f64>,
    pub specificities: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn clamp_rate(v: f64) -> f64 {
    v.clamp(STAPLE_CLAMP.0, STAPLE_CLAMP.1)
}

pub fn staple(stack: &RaterStack, options: StapleOptions) -> StapleResult {
    let n = stack.n_raters();
    let m = stack.n_voxels();
    let masks = stack.masks();
    let prior: Vec<f64> = stack.votes().iter().map(|&v| v as f64 / n as f64).collect();

    let mut sens = vec![clamp_rate(STAPLE_INITIAL_RATE); n];
    let mut spec = vec![clamp_rate(STAPLE_INITIAL_RATE); n];
    let mut w = prior.clone();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iter {
        iterations += 1;

        // E-step
        let mut max_change = 0.0f64;
        for i in 0..m {
            let pi = prior[i];
            let w_new = if pi <= 0.0 {
                0.0
            } else if pi >= 1.0 {
                1.0
            } else {
                let mut a = pi;
                let mut b = 1.0 - pi;
                for (j, mask) in masks.iter().enumerate() {
                    if mask.contains(i) {
                        a *= sens[j];
                        b *= 1.0 - spec[j];
                    } else {
                        a *= 1.0 - sens[j];
                        b *= spec[j];
                    }
                }
                a / (a + b)
            };
            max_change = max_change.max((w_new - w[i]).abs());
            w[i] = w_new;
        }

        // M-step
        let w_sum: f64 = w.iter().sum();
        let bg_sum: f64 = w.iter().map(|x| 1.0 - x).sum();
        for (j, mask) in masks.iter().enumerate() {
            let mut tp = 0.0;
            let mut tn = 0.0;
            for (i, &wi) in w.iter().enumerate() {
                if mask.contains(i) {
                    tp += wi;
                } else {
                    tn += 1.0 - wi;
                }
            }
            sens[j] = clamp_rate(if w_sum > 0.0 { tp / w_sum } else { STAPLE_CLAMP.1 });
            spec[j] = clamp_rate(if bg_sum > 0.0 { tn / bg_sum } else { STAPLE_CLAMP.1 });
        }

        if max_change < options.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("STAPLE stopped after {iterations} iterations without converging (tol {})", options.tol);
    }

    let consensus = BinaryMask::new(*stack.grid(), w.iter().map(|&p| p >= 0.5).collect()).expect("grid length");
    StapleResult { consensus, probabilities: w, sensitivities: sens, specificities: spec, iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Grid, Spacing};

    fn grid() -> Grid {
        Grid::new([4, 4, 4], Spacing::isotropic(1.0).unwrap()).unwrap()
    }

    #[test]
    fn identical_raters_are_a_fixed_point() {
        let a = BinaryMask::from_indices(grid(), [0, 5, 6, 7, 20, 63]).unwrap();
        let r = staple(&RaterStack::new(vec![a.clone(), a.clone(), a.clone()]).unwrap(), StapleOptions::default());
        assert_eq!(r.consensus, a);
        assert!(r.converged);
        assert!(r.sensitivities.iter().chain(&r.specificities).all(|&v| v == 0.99));
    }

    #[test]
    fn even_split_ties_go_foreground() {
        let a = BinaryMask::from_indices(grid(), [0, 1]).unwrap();
        let b = BinaryMask::from_indices(grid(), [1, 2]).unwrap();
        let r = staple(&RaterStack::new(vec![a.clone(), b.clone()]).unwrap(), StapleOptions { max_iter: 1, tol: 0.0 });
        // after one E-step with symmetric initial rates, split voxels sit at 0.5
        assert!((r.probabilities[0] - 0.5).abs() < 1e-12);
        assert!(r.consensus.contains(0));
        let r = staple(&RaterStack::new(vec![a, b]).unwrap(), StapleOptions::default());
        assert_eq!(r.probabilities[0], r.probabilities[2]);
        assert!(r.consensus.contains(0) && r.consensus.contains(1) && r.consensus.contains(2));
        assert!(!r.consensus.contains(3));
    }

    #[test]
    fn respects_iteration_cap() {
        let a = BinaryMask::from_indices(grid(), 0..10).unwrap();
        let b = BinaryMask::from_indices(grid(), 5..20).unwrap();
        let c = BinaryMask::from_indices(grid(), 8..12).unwrap();
        let r = staple(&RaterStack::new(vec![a, b, c]).unwrap(), StapleOptions { max_iter: 1, tol: 0.0 });
        assert_eq!(r.iterations, 1);
        assert!(!r.converged);
    }
}

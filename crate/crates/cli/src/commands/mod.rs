pub mod agreement;
pub mod analyze;
pub mod detect;
pub mod evaluate;
pub mod phantom;

use petseg::io::{read_mask, read_volume};
use petseg::volume::{resample_mask_to_grid, BinaryMask, Grid, ScalarVolume, Unit};
use rayon::prelude::*;

use crate::manifest::{ensure_exist, CaseEntry};
use crate::{CliError, GlobalOpts, Toggle};

pub(crate) struct LoadedCase {
    pub pet: ScalarVolume,
    pub gt: BinaryMask,
    /// Predictions on the ground-truth grid, sorted by model name.
    pub preds: Vec<(String, BinaryMask)>,
}

fn align(mask: BinaryMask, target: &Grid, g: &GlobalOpts, what: &str) -> petseg::Result<BinaryMask> {
    if mask.grid().same_as(target) {
        return Ok(mask);
    }
    match g.resample_pred {
        Toggle::On => resample_mask_to_grid(&mask, target),
        Toggle::Off => {
            target.ensure_same(mask.grid(), what)?;
            Ok(mask)
        }
    }
}

pub(crate) fn load_case(c: &CaseEntry, g: &GlobalOpts, need_preds: bool) -> petseg::Result<LoadedCase> {
    ensure_exist([&c.pet_path, &c.gt_path].into_iter().chain(c.pred_paths.values()))?;
    if need_preds && c.pred_paths.is_empty() {
        return Err(petseg::Error::EmptyInput("case lists no predictions".into()));
    }
    let pet = read_volume(&c.pet_path, Unit::Suv)?;
    let gt = read_mask(&c.gt_path)?;
    pet.grid().ensure_same(gt.grid(), "PET vs ground truth")?;
    let preds = c
        .pred_paths
        .iter()
        .map(|(name, p)| Ok((name.clone(), align(read_mask(p)?, gt.grid(), g, &format!("prediction {name}"))?)))
        .collect::<petseg::Result<Vec<_>>>()?;
    Ok(LoadedCase { pet, gt, preds })
}

/// Runs `f` over every case on the worker pool; results keep manifest order.
pub(crate) fn par_cases<T: Send>(
    g: &GlobalOpts,
    cases: &[CaseEntry],
    f: impl Fn(&CaseEntry) -> petseg::Result<T> + Sync,
) -> Result<Vec<(String, petseg::Result<T>)>, CliError> {
    let pool = g.pool()?;
    Ok(pool.install(|| cases.par_iter().map(|c| (c.case_id.clone(), f(c))).collect()))
}

use serde::{Deserialize, Serialize};

use super::{connected_components, Connectivity, ScalarVolume, Unit};
use crate::error::{Error, Result};

pub const CT_CLIP_LO_HU: f64 = -154.0;
pub const CT_CLIP_HI_HU: f64 = 325.0;

/// SUV above which a voxel is treated as part of the patient.
pub const BODY_SUV_THRESHOLD: f64 = 0.1;

/// Physical half-life of F-18 in minutes.
pub const F18_HALF_LIFE_MIN: f64 = 109.77;

/// Clamps CT values to `[lo_hu, hi_hu]` and rescales them to `[0, 1]`.
pub fn clip_normalize_ct(ct: &ScalarVolume, lo_hu: f64, hi_hu: f64) -> Result<ScalarVolume> {
    ct.ensure_unit(Unit::Hu)?;
    if !(lo_hu.is_finite() && hi_hu.is_finite() && lo_hu < hi_hu) {
        return Err(Error::InvalidParameter(format!("CT clip range [{lo_hu}, {hi_hu}] must satisfy lo < hi")));
    }
    let width = hi_hu - lo_hu;
    let data = ct.data().iter().map(|&v| (v.clamp(lo_hu, hi_hu) - lo_hu) / width).collect();
    ScalarVolume::new(*ct.grid(), data, Unit::Normalized)
}

/// Inclusive voxel-index box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BoundingBox {
    pub fn of_indices(grid: &super::Grid, indices: &[usize]) -> Option<BoundingBox> {
        let mut it = indices.iter();
        let first = grid.coords(*it.next()?);
        let mut bb = BoundingBox { min: first, max: first };
        for &i in it {
            let c = grid.coords(i);
            for a in 0..3 {
                bb.min[a] = bb.min[a].min(c[a]);
                bb.max[a] = bb.max[a].max(c[a]);
            }
        }
        Some(bb)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.max[0] - self.min[0] + 1, self.max[1] - self.min[1] + 1, self.max[2] - self.min[2] + 1]
    }

    pub fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|a| c[a] >= self.min[a] && c[a] <= self.max[a])
    }
}

/// Tightest box around the largest 26-connected region with SUV above
/// [`BODY_SUV_THRESHOLD`].
pub fn body_bounding_box(pet: &ScalarVolume) -> Result<BoundingBox> {
    body_bounding_box_with(pet, BODY_SUV_THRESHOLD, Connectivity::TwentySix)
}

/// Ties between equally large regions go to the one with the smallest voxel
/// index.
pub fn body_bounding_box_with(pet: &ScalarVolume, threshold: f64, connectivity: Connectivity) -> Result<BoundingBox> {
    pet.ensure_unit(Unit::Suv)?;
    let cc = connected_components(&pet.threshold_above(threshold), connectivity);
    let largest = cc
        .components()
        .fold(None::<(u32, usize)>, |best, (label, v)| match best {
            Some((_, n)) if n >= v.len() => best,
            _ => Some((label, v.len())),
        })
        .ok_or(Error::NoBodyFound { threshold })?;
    Ok(BoundingBox::of_indices(pet.grid(), cc.voxels(largest.0)).expect("components are nonempty"))
}

/// Acquisition parameters for body-weight SUV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuvConversionParams {
    pub injected_dose_bq: f64,
    pub body_weight_g: f64,
    pub delay_min: f64,
    #[serde(default = "default_half_life")]
    pub half_life_min: f64,
}

fn default_half_life() -> f64 {
    F18_HALF_LIFE_MIN
}

impl SuvConversionParams {
    pub fn f18(injected_dose_bq: f64, body_weight_g: f64, delay_min: f64) -> Self {
        SuvConversionParams { injected_dose_bq, body_weight_g, delay_min, half_life_min: F18_HALF_LIFE_MIN }
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("injected_dose_bq", self.injected_dose_bq),
            ("body_weight_g", self.body_weight_g),
            ("delay_min", self.delay_min),
            ("half_life_min", self.half_life_min),
        ];
        for (name, v) in fields {
            // A zero delay is a legitimate "decay-corrected at injection" input.
            let ok = if name == "delay_min" { v >= 0.0 } else { v > 0.0 };
            if !(v.is_finite() && ok) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    /// Dose remaining at scan time.
    pub fn decayed_dose_bq(&self) -> f64 {
        self.injected_dose_bq * (-self.delay_min / self.half_life_min).exp2()
    }
}

/// SUV = activity · body weight / decay-corrected dose.
pub fn suv_from_activity(act: &ScalarVolume, params: &SuvConversionParams) -> Result<ScalarVolume> {
    act.ensure_unit(Unit::BqPerMl)?;
    params.validate()?;
    let scale = params.body_weight_g / params.decayed_dose_bq();
    let data = act.data().iter().map(|&a| a * scale).collect();
    ScalarVolume::new(*act.grid(), data, Unit::Suv)
}

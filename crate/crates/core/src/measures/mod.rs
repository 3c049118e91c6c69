//! Patient-level lesion measures and their prediction error.

mod hull;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{connected_components, BinaryMask, Connectivity, Grid, LabeledComponents, ScalarVolume, Unit};

/// Below this many foreground voxels Dmax is computed over all pairs.
pub const DMAX_ALL_PAIRS_LIMIT: usize = 1000;

/// The six patient-level measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionMeasures {
    pub suv_mean: f64,
    pub suv_max: f64,
    pub n_lesions: usize,
    pub tmtv_ml: f64,
    pub tlg_ml: f64,
    pub dmax_cm: f64,
    /// Set when the mask had no foreground; every other field is then zero.
    pub empty: bool,
}

impl LesionMeasures {
    pub fn zero() -> Self {
        LesionMeasures { suv_mean: 0.0, suv_max: 0.0, n_lesions: 0, tmtv_ml: 0.0, tlg_ml: 0.0, dmax_cm: 0.0, empty: true }
    }

    /// Values in [`Measure::ALL`] order.
    pub fn values(&self) -> [f64; 6] {
        [self.suv_mean, self.suv_max, self.n_lesions as f64, self.tmtv_ml, self.tlg_ml, self.dmax_cm]
    }

    pub fn get(&self, m: Measure) -> f64 {
        self.values()[m as usize]
    }
}

/// Names of the six measures, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    SuvMean = 0,
    SuvMax = 1,
    NLesions = 2,
    TmtvMl = 3,
    TlgMl = 4,
    DmaxCm = 5,
}

impl Measure {
    pub const ALL: [Measure; 6] =
        [Measure::SuvMean, Measure::SuvMax, Measure::NLesions, Measure::TmtvMl, Measure::TlgMl, Measure::DmaxCm];

    pub fn name(self) -> &'static str {
        match self {
            Measure::SuvMean => "suv_mean",
            Measure::SuvMax => "suv_max",
            Measure::NLesions => "n_lesions",
            Measure::TmtvMl => "tmtv_ml",
            Measure::TlgMl => "tlg_ml",
            Measure::DmaxCm => "dmax_cm",
        }
    }

    pub fn from_name(name: &str) -> Option<Measure> {
        Measure::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Threshold step used for the subset-DSC curves: 1 (SUVmean), 2
    /// (SUVmax), 1 (lesion count), 25 ml (TMTV), 150 ml (TLG), 3 cm (Dmax).
    pub fn threshold_step(self) -> f64 {
        match self {
            Measure::SuvMean => 1.0,
            Measure::SuvMax => 2.0,
            Measure::NLesions => 1.0,
            Measure::TmtvMl => 25.0,
            Measure::TlgMl => 150.0,
            Measure::DmaxCm => 3.0,
        }
    }
}

/// Computes the six measures over the foreground of `mask`; `cc` supplies the
/// lesion count and must label the same mask.
pub fn lesion_measures(suv: &ScalarVolume, mask: &BinaryMask, cc: &LabeledComponents) -> Result<LesionMeasures> {
    suv.grid().ensure_same(mask.grid(), "lesion measures")?;
    mask.grid().ensure_same(cc.grid(), "lesion measures")?;
    suv.ensure_unit(Unit::Suv)?;
    if cc.foreground_count() != mask.count() {
        return Err(Error::InvalidParameter("components do not label the given mask".into()));
    }

    let data = suv.data();
    let fg: Vec<usize> = mask.foreground_indices().collect();
    if fg.is_empty() {
        return Ok(LesionMeasures::zero());
    }
    let v_ml = mask.grid().voxel_volume_ml();
    let sum: f64 = fg.iter().map(|&i| data[i]).sum();
    let suv_max = fg.iter().map(|&i| data[i]).fold(f64::NEG_INFINITY, f64::max);
    let suv_mean = sum / fg.len() as f64;
    let tmtv_ml = v_ml * fg.len() as f64;
    Ok(LesionMeasures {
        suv_mean,
        suv_max,
        n_lesions: cc.count(),
        tmtv_ml,
        tlg_ml: v_ml * sum,
        dmax_cm: dmax_mm(mask.grid(), &fg) / 10.0,
        empty: false,
    })
}

/// Labels `mask` with `connectivity` and computes its measures.
pub fn lesion_measures_of(suv: &ScalarVolume, mask: &BinaryMask, connectivity: Connectivity) -> Result<LesionMeasures> {
    lesion_measures(suv, mask, &connected_components(mask, connectivity))
}

/// Largest distance (mm) between two foreground voxel centers.
pub fn dmax_mm(grid: &Grid, foreground: &[usize]) -> f64 {
    let points: Vec<hull::P3> = foreground
        .iter()
        .map(|&i| {
            let c = grid.coords(i);
            [c[0] as i64, c[1] as i64, c[2] as i64]
        })
        .collect();
    let spacing = grid.spacing.as_array();
    let candidates = if points.len() < DMAX_ALL_PAIRS_LIMIT {
        points
    } else {
        hull::hull_vertices(&hull::line_extremes(&points))
    };
    hull::max_pairwise_sq(&candidates, spacing).sqrt()
}

/// Result of a MAPE computation; cases with a zero original value are left out
/// and listed in `excluded`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    pub percent: f64,
    pub n_used: usize,
    pub excluded: Vec<usize>,
}

/// Mean absolute percentage error `100 · mean |(pred − orig) / orig|`.
pub fn mape(orig: &[f64], pred: &[f64]) -> Result<Mape> {
    if orig.len() != pred.len() {
        return Err(Error::InvalidParameter(format!("length mismatch: {} vs {}", orig.len(), pred.len())));
    }
    let mut total = 0.0;
    let mut n_used = 0;
    let mut excluded = Vec::new();
    for (i, (&o, &p)) in orig.iter().zip(pred).enumerate() {
        if o == 0.0 {
            excluded.push(i);
            continue;
        }
        total += ((p - o) / o).abs();
        n_used += 1;
    }
    if n_used == 0 {
        return Err(Error::EmptyInput("every case has a zero original value".into()));
    }
    Ok(Mape { percent: 100.0 * total / n_used as f64, n_used, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    fn grid(n: usize, s: f64) -> Grid {
        Grid::new([n, n, n], Spacing::isotropic(s).unwrap()).unwrap()
    }

    #[test]
    fn single_voxel_record() {
        let g = grid(4, 2.0);
        let mut data = vec![1.0; g.len()];
        data[g.index(1, 2, 3)] = 7.3;
        let suv = ScalarVolume::new(g, data, Unit::Suv).unwrap();
        let mask = BinaryMask::from_indices(g, [g.index(1, 2, 3)]).unwrap();
        let m = lesion_measures_of(&suv, &mask, Connectivity::TwentySix).unwrap();
        assert_eq!(m.suv_mean, 7.3);
        assert_eq!(m.suv_max, 7.3);
        assert_eq!(m.n_lesions, 1);
        assert!((m.tmtv_ml - 0.008).abs() < 1e-15);
        assert!((m.tlg_ml - 0.0584).abs() < 1e-12);
        assert_eq!(m.dmax_cm, 0.0);
        assert!(!m.empty);
    }

    #[test]
    fn three_four_five() {
        let g = grid(6, 10.0);
        let suv = ScalarVolume::filled(g, 2.0, Unit::Suv).unwrap();
        let mask = BinaryMask::from_indices(g, [g.index(0, 0, 0), g.index(3, 4, 0)]).unwrap();
        let m = lesion_measures_of(&suv, &mask, Connectivity::TwentySix).unwrap();
        assert!((m.dmax_cm - 5.0).abs() < 1e-12);
        assert_eq!(m.n_lesions, 2);
    }

    #[test]
    fn empty_mask_is_flagged_zero() {
        let g = grid(3, 2.0);
        let suv = ScalarVolume::filled(g, 2.0, Unit::Suv).unwrap();
        let m = lesion_measures_of(&suv, &BinaryMask::empty(g), Connectivity::TwentySix).unwrap();
        assert_eq!(m, LesionMeasures::zero());
        assert!(m.empty);
    }

    #[test]
    fn requires_suv_unit() {
        let g = grid(3, 2.0);
        let hu = ScalarVolume::filled(g, 2.0, Unit::Hu).unwrap();
        assert!(lesion_measures_of(&hu, &BinaryMask::full(g), Connectivity::Six).is_err());
    }

    #[test]
    fn large_mask_dmax_uses_hull() {
        // solid 12³ cube: 1728 voxels, above the all-pairs limit
        let g = grid(12, 2.0);
        let all: Vec<usize> = (0..g.len()).collect();
        let d = dmax_mm(&g, &all);
        assert!((d - (3.0f64 * 22.0 * 22.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mape_cases() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap().percent, 0.0);
        assert!((mape(&[100.0], &[150.0]).unwrap().percent - 50.0).abs() < 1e-12);
        assert!((mape(&[10.0, 20.0], &[11.0, 16.0]).unwrap().percent - 15.0).abs() < 1e-12);
        let m = mape(&[0.0, 10.0], &[3.0, 12.0]).unwrap();
        assert_eq!(m.excluded, vec![0]);
        assert_eq!(m.n_used, 1);
        assert!((m.percent - 20.0).abs() < 1e-12);
        assert!(mape(&[0.0], &[1.0]).is_err());
        assert!(mape(&[1.0], &[]).is_err());
    }

    #[test]
    fn threshold_steps() {
        let steps: Vec<f64> = Measure::ALL.iter().map(|m| m.threshold_step()).collect();
        assert_eq!(steps, vec![1.0, 2.0, 1.0, 25.0, 150.0, 3.0]);
    }
}

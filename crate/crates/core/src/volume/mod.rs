//! Voxel grids and the deterministic preprocessing applied to PET/CT volumes.
//!
//! All volumes share one linear layout: x varies fastest, then y, then z,
//! so the voxel `(x, y, z)` lives at `x + nx * (y + ny * z)`. Files are
//! reoriented into this layout at load time (see [`crate::io`]).

mod components;
mod patches;
mod preprocess;
mod resample;

pub use components::{connected_components, Connectivity, LabeledComponents};
pub use patches::{patch_origin, sample_patch_centers};
pub use preprocess::{
    body_bounding_box, body_bounding_box_with, clip_normalize_ct, suv_from_activity, BoundingBox,
    SuvConversionParams, BODY_SUV_THRESHOLD, CT_CLIP_HI_HU, CT_CLIP_LO_HU, F18_HALF_LIFE_MIN,
};
pub use resample::{resample, resample_mask, resample_mask_to_grid, Interpolation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing spacings of two grids.
const SPACING_RTOL: f64 = 1e-6;

/// Voxel size in millimeters along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Spacing {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        for (axis, v) in [("dx", dx), ("dy", dy), ("dz", dz)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("spacing {axis} = {v} must be positive")));
            }
        }
        Ok(Spacing { dx, dy, dz })
    }

    pub fn isotropic(d: f64) -> Result<Self> {
        Self::new(d, d, d)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }

    /// Volume of one voxel in milliliters (1 ml = 1000 mm³).
    pub fn voxel_volume_ml(&self) -> f64 {
        self.dx * self.dy * self.dz / 1000.0
    }

    pub fn approx_eq(&self, other: &Spacing) -> bool {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .all(|(a, b)| (a - b).abs() <= SPACING_RTOL * a.abs().max(b.abs()))
    }
}

/// Dimensions plus spacing; two volumes can be combined voxel-wise only when
/// their grids agree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: Spacing,
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: Spacing) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidParameter(format!("dims {dims:?} must be positive")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidParameter(format!("dims {dims:?} overflow")))?;
        Ok(Grid { dims, spacing })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn voxel_volume_ml(&self) -> f64 {
        self.spacing.voxel_volume_ml()
    }

    /// Physical position (mm) of a voxel center, measured from the grid's
    /// origin corner.
    pub fn center_mm(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        let s = self.spacing.as_array();
        [(c[0] as f64 + 0.5) * s[0], (c[1] as f64 + 0.5) * s[1], (c[2] as f64 + 0.5) * s[2]]
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.dims == other.dims && self.spacing.approx_eq(&other.spacing)
    }

    pub fn ensure_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{what}: dims {:?} spacing {:?} vs dims {:?} spacing {:?}",
                self.dims,
                self.spacing.as_array(),
                other.dims,
                other.spacing.as_array()
            )))
        }
    }
}

/// Physical meaning of scalar samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Suv,
    Hu,
    BqPerMl,
    Normalized,
    /// Samples derived from a binary mask (0/1); never interpolated linearly.
    Mask,
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Unit::Suv => "SUV",
            Unit::Hu => "HU",
            Unit::BqPerMl => "Bq/ml",
            Unit::Normalized => "normalized",
            Unit::Mask => "mask",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    grid: Grid,
    data: Vec<f64>,
    unit: Unit,
}

impl ScalarVolume {
    /// Rejects a data length that does not match the grid and any non-finite
    /// sample.
    pub fn new(grid: Grid, data: Vec<f64>, unit: Unit) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                grid.dims
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(ScalarVolume { grid, data, unit })
    }

    pub fn filled(grid: Grid, value: f64, unit: Unit) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()], unit)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.grid.spacing
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.grid.index(x, y, z)]
    }

    pub(crate) fn ensure_unit(&self, expected: Unit) -> Result<()> {
        if self.unit == expected {
            Ok(())
        } else {
            Err(Error::UnitMismatch { expected: expected.to_string(), found: self.unit.to_string() })
        }
    }

    /// Voxels with a value strictly above `threshold`.
    pub fn threshold_above(&self, threshold: f64) -> BinaryMask {
        BinaryMask { grid: self.grid, data: self.data.iter().map(|&v| v > threshold).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: Grid,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(grid: Grid, data: Vec<bool>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "mask length {} does not match dims {:?}",
                data.len(),
                grid.dims
            )));
        }
        Ok(BinaryMask { grid, data })
    }

    pub fn empty(grid: Grid) -> Self {
        BinaryMask { grid, data: vec![false; grid.len()] }
    }

    pub fn full(grid: Grid) -> Self {
        BinaryMask { grid, data: vec![true; grid.len()] }
    }

    pub fn from_indices(grid: Grid, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = Self::empty(grid);
        for i in indices {
            if i >= mask.data.len() {
                return Err(Error::InvalidParameter(format!("voxel index {i} out of range")));
            }
            mask.data[i] = true;
        }
        Ok(mask)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.grid.spacing
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.data[index]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.grid.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.grid.index(x, y, z);
        self.data[i] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn foreground_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn volume_ml(&self) -> f64 {
        self.count() as f64 * self.grid.voxel_volume_ml()
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize> {
        self.grid.ensure_same(&other.grid, "intersection")?;
        Ok(self.data.iter().zip(&other.data).filter(|(a, b)| **a && **b).count())
    }

    /// 0/1 samples tagged [`Unit::Mask`].
    pub fn to_volume(&self) -> ScalarVolume {
        ScalarVolume {
            grid: self.grid,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            unit: Unit::Mask,
        }
    }

    /// Restricts the mask to an inclusive box, producing a smaller grid.
    pub fn crop(&self, bbox: &BoundingBox) -> Result<BinaryMask> {
        let (grid, idx) = crop_indices(&self.grid, bbox)?;
        Ok(BinaryMask { grid, data: idx.into_iter().map(|i| self.data[i]).collect() })
    }
}

impl ScalarVolume {
    pub fn crop(&self, bbox: &BoundingBox) -> Result<ScalarVolume> {
        let (grid, idx) = crop_indices(&self.grid, bbox)?;
        Ok(ScalarVolume { grid, data: idx.into_iter().map(|i| self.data[i]).collect(), unit: self.unit })
    }
}

fn crop_indices(grid: &Grid, bbox: &BoundingBox) -> Result<(Grid, Vec<usize>)> {
    for a in 0..3 {
        if bbox.min[a] > bbox.max[a] || bbox.max[a] >= grid.dims[a] {
            return Err(Error::InvalidParameter(format!(
                "bounding box {:?}..={:?} outside dims {:?}",
                bbox.min, bbox.max, grid.dims
            )));
        }
    }
    let dims = bbox.dims();
    let mut idx = Vec::with_capacity(dims.iter().product());
    for z in bbox.min[2]..=bbox.max[2] {
        for y in bbox.min[1]..=bbox.max[1] {
            for x in bbox.min[0]..=bbox.max[0] {
                idx.push(grid.index(x, y, z));
            }
        }
    }
    Ok((Grid::new(dims, grid.spacing)?, idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new([n, n, n], Spacing::isotropic(2.0).unwrap()).unwrap()
    }

    #[test]
    fn spacing_rejects_non_positive() {
        assert!(Spacing::new(1.0, 0.0, 1.0).is_err());
        assert!(Spacing::new(1.0, 1.0, -2.0).is_err());
        assert!(Spacing::new(f64::NAN, 1.0, 1.0).is_err());
        assert!((Spacing::isotropic(2.0).unwrap().voxel_volume_ml() - 0.008).abs() < 1e-15);
    }

    #[test]
    fn linear_layout_is_x_fastest() {
        let g = Grid::new([3, 4, 5], Spacing::isotropic(1.0).unwrap()).unwrap();
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 3);
        assert_eq!(g.index(0, 0, 1), 12);
        for i in 0..g.len() {
            let [x, y, z] = g.coords(i);
            assert_eq!(g.index(x, y, z), i);
        }
    }

    #[test]
    fn scalar_volume_rejects_nan_and_bad_length() {
        let g = grid(2);
        assert!(matches!(ScalarVolume::new(g, vec![0.0; 7], Unit::Suv), Err(Error::InvalidParameter(_))));
        let mut data = vec![0.0; 8];
        data[5] = f64::NAN;
        assert!(matches!(ScalarVolume::new(g, data, Unit::Suv), Err(Error::NonFinite { index: 5 })));
    }

    #[test]
    fn crop_keeps_box_contents() {
        let g = grid(4);
        let mut m = BinaryMask::empty(g);
        m.set(1, 2, 3, true);
        let c = m.crop(&BoundingBox { min: [1, 1, 1], max: [2, 3, 3] }).unwrap();
        assert_eq!(c.dims(), [2, 3, 3]);
        assert!(c.get(0, 1, 2));
        assert_eq!(c.count(), 1);
        assert!(m.crop(&BoundingBox { min: [0, 0, 0], max: [4, 0, 0] }).is_err());
    }
}

//! Grid resampling. Output voxel centers sit at `(i + 0.5) * target` mm from
//! the input's origin corner; samples falling outside the input grid clamp to
//! the nearest edge voxel.

use serde::{Deserialize, Serialize};

use super::{BinaryMask, Grid, ScalarVolume, Spacing, Unit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    Trilinear,
}

/// Number of output voxels covering `extent_mm` at `step` mm, tolerant of
/// floating-point noise in the ratio.
fn output_len(n: usize, input_step: f64, target_step: f64) -> usize {
    let ratio = n as f64 * input_step / target_step;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
        (rounded as usize).max(1)
    } else {
        (ratio.ceil() as usize).max(1)
    }
}

/// Continuous input index sampled by output voxel `i` along one axis.
#[inline]
fn source_coord(i: usize, input_step: f64, target_step: f64) -> f64 {
    let ratio = target_step / input_step;
    (i as f64 + 0.5) * ratio - 0.5
}

#[inline]
fn nearest_index(u: f64, n: usize) -> usize {
    let r = (u + 0.5).floor();
    if r <= 0.0 {
        0
    } else {
        (r as usize).min(n - 1)
    }
}

/// Per-axis lookup: (lower index, upper index, weight of upper).
fn linear_taps(u: f64, n: usize) -> (usize, usize, f64) {
    let u = u.clamp(0.0, (n - 1) as f64);
    let lo = u.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let mut w = u - lo as f64;
    if w < 1e-12 {
        w = 0.0;
    }
    (lo, hi, w)
}

pub(crate) fn target_grid(grid: &Grid, target: Spacing) -> Result<Grid> {
    let src = grid.spacing.as_array();
    let dst = target.as_array();
    let dims = [
        output_len(grid.dims[0], src[0], dst[0]),
        output_len(grid.dims[1], src[1], dst[1]),
        output_len(grid.dims[2], src[2], dst[2]),
    ];
    Grid::new(dims, target)
}

/// For each output voxel of `out` (sampled against `src`), the source index
/// under nearest-neighbor lookup.
fn nearest_map(src: &Grid, out: &Grid) -> Vec<usize> {
    let s = src.spacing.as_array();
    let t = out.spacing.as_array();
    let axis: Vec<Vec<usize>> = (0..3)
        .map(|a| (0..out.dims[a]).map(|i| nearest_index(source_coord(i, s[a], t[a]), src.dims[a])).collect())
        .collect();
    let mut map = Vec::with_capacity(out.len());
    for z in 0..out.dims[2] {
        for y in 0..out.dims[1] {
            for x in 0..out.dims[0] {
                map.push(src.index(axis[0][x], axis[1][y], axis[2][z]));
            }
        }
    }
    map
}

pub fn resample(vol: &ScalarVolume, target: Spacing, mode: Interpolation) -> Result<ScalarVolume> {
    if mode == Interpolation::Trilinear && vol.unit() == Unit::Mask {
        return Err(Error::InvalidParameter(
            "trilinear interpolation is not defined for mask-derived volumes; use nearest".into(),
        ));
    }
    let src = *vol.grid();
    let out = target_grid(&src, target)?;
    let data = vol.data();
    let samples = match mode {
        Interpolation::Nearest => nearest_map(&src, &out).into_iter().map(|i| data[i]).collect(),
        Interpolation::Trilinear => {
            let s = src.spacing.as_array();
            let t = target.as_array();
            let taps: Vec<Vec<(usize, usize, f64)>> = (0..3)
                .map(|a| (0..out.dims[a]).map(|i| linear_taps(source_coord(i, s[a], t[a]), src.dims[a])).collect())
                .collect();
            let mut samples = Vec::with_capacity(out.len());
            for z in 0..out.dims[2] {
                let (z0, z1, wz) = taps[2][z];
                for y in 0..out.dims[1] {
                    let (y0, y1, wy) = taps[1][y];
                    for x in 0..out.dims[0] {
                        let (x0, x1, wx) = taps[0][x];
                        let v = |xx, yy, zz| data[src.index(xx, yy, zz)];
                        let c00 = lerp(v(x0, y0, z0), v(x1, y0, z0), wx);
                        let c10 = lerp(v(x0, y1, z0), v(x1, y1, z0), wx);
                        let c01 = lerp(v(x0, y0, z1), v(x1, y0, z1), wx);
                        let c11 = lerp(v(x0, y1, z1), v(x1, y1, z1), wx);
                        samples.push(lerp(lerp(c00, c10, wy), lerp(c01, c11, wy), wz));
                    }
                }
            }
            samples
        }
    };
    ScalarVolume::new(out, samples, vol.unit())
}

#[inline]
fn lerp(a: f64, b: f64, w: f64) -> f64 {
    if w == 0.0 {
        a
    } else {
        a + (b - a) * w
    }
}

/// Nearest-neighbor resampling of a mask to a new spacing.
pub fn resample_mask(mask: &BinaryMask, target: Spacing) -> Result<BinaryMask> {
    let out = target_grid(mask.grid(), target)?;
    resample_mask_to_grid(mask, &out)
}

/// Nearest-neighbor resampling onto an explicit grid sharing the same origin
/// corner (used to bring predictions onto ground-truth geometry).
pub fn resample_mask_to_grid(mask: &BinaryMask, out: &Grid) -> Result<BinaryMask> {
    if mask.grid().same_as(out) {
        return Ok(mask.clone());
    }
    let data = mask.data();
    BinaryMask::new(*out, nearest_map(mask.grid(), out).into_iter().map(|i| data[i]).collect())
}

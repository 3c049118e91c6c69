//! Synthetic PET phantoms with exactly known lesion masks, plus controlled
//! degradations of a mask that stand in for model predictions.
//!
//! Lesions are ellipsoids: a voxel belongs to a lesion iff its center lies
//! inside the ellipsoid. Lesion voxels carry their lesion's SUV (the largest
//! one where lesions overlap) without noise; background voxels carry
//! Gaussian noise truncated at 0 SUV.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::LesionMeasures;
use crate::volume::{connected_components, BinaryMask, Connectivity, Grid, ScalarVolume, Spacing, Unit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LesionSpec {
    pub center_mm: [f64; 3],
    pub radii_mm: [f64; 3],
    pub suv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub background_suv: f64,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub lesions: Vec<LesionSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl PhantomSpec {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dims, Spacing::new(self.spacing[0], self.spacing[1], self.spacing[2])?)
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub suv: ScalarVolume,
    pub gt: BinaryMask,
    /// Measures of `gt` by direct enumeration, independent of the
    /// measures module.
    pub truth: LesionMeasures,
}

/// Voxels whose center lies inside the axis-aligned ellipsoid.
pub fn ellipsoid_indices(grid: &Grid, center_mm: [f64; 3], radii_mm: [f64; 3]) -> Vec<usize> {
    let s = grid.spacing.as_array();
    let mut range = [(0usize, 0usize); 3];
    for a in 0..3 {
        // candidate voxels: centers within [c − r, c + r]
        let lo = ((center_mm[a] - radii_mm[a]) / s[a] - 0.5).ceil().max(0.0) as usize;
        let hi = ((center_mm[a] + radii_mm[a]) / s[a] - 0.5).floor();
        if hi < 0.0 {
            return Vec::new();
        }
        range[a] = (lo, (hi as usize).min(grid.dims[a] - 1));
    }
    let mut out = Vec::new();
    for z in range[2].0..=range[2].1 {
        for y in range[1].0..=range[1].1 {
            for x in range[0].0..=range[0].1 {
                let p = [(x as f64 + 0.5) * s[0], (y as f64 + 0.5) * s[1], (z as f64 + 0.5) * s[2]];
                let q: f64 = (0..3).map(|a| ((p[a] - center_mm[a]) / radii_mm[a]).powi(2)).sum();
                if q <= 1.0 {
                    out.push(grid.index(x, y, z));
                }
            }
        }
    }
    out
}

fn check_inside(grid: &Grid, center_mm: [f64; 3], radii_mm: [f64; 3], what: &str) -> Result<()> {
    let s = grid.spacing.as_array();
    for a in 0..3 {
        if !(radii_mm[a] > 0.0 && radii_mm[a].is_finite()) {
            return Err(Error::InvalidParameter(format!("{what}: radii {radii_mm:?} must be positive")));
        }
        let extent = grid.dims[a] as f64 * s[a];
        if center_mm[a] - radii_mm[a] < 0.0 || center_mm[a] + radii_mm[a] > extent {
            return Err(Error::InvalidParameter(format!(
                "{what} (center {center_mm:?} mm, radii {radii_mm:?} mm) extends outside the volume"
            )));
        }
    }
    Ok(())
}

pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    let grid = spec.grid()?;
    if !(spec.background_suv >= 0.0 && spec.noise_sd >= 0.0) {
        return Err(Error::InvalidParameter("background SUV and noise sd must be non-negative".into()));
    }
    let mut lesion_suv: Vec<Option<f64>> = vec![None; grid.len()];
    for (k, l) in spec.lesions.iter().enumerate() {
        let what = format!("lesion {k}");
        check_inside(&grid, l.center_mm, l.radii_mm, &what)?;
        if !(l.suv > spec.background_suv) {
            return Err(Error::InvalidParameter(format!("{what}: SUV {} must exceed the background", l.suv)));
        }
        let idx = ellipsoid_indices(&grid, l.center_mm, l.radii_mm);
        if idx.is_empty() {
            return Err(Error::InvalidParameter(format!("{what} contains no voxel center")));
        }
        for i in idx {
            let v = lesion_suv[i].get_or_insert(l.suv);
            *v = v.max(l.suv);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(spec.background_suv, spec.noise_sd)
        .map_err(|e| Error::InvalidParameter(format!("noise: {e}")))?;
    let data: Vec<f64> = lesion_suv
        .iter()
        .map(|l| match l {
            Some(v) => *v,
            None if spec.noise_sd == 0.0 => spec.background_suv,
            None => loop {
                let v = noise.sample(&mut rng);
                if v >= 0.0 {
                    break v;
                }
            },
        })
        .collect();
    let gt = BinaryMask::new(grid, lesion_suv.iter().map(Option::is_some).collect())?;
    let suv = ScalarVolume::new(grid, data, Unit::Suv)?;
    let truth = truth_measures(&suv, &gt);
    Ok(Phantom { suv, gt, truth })
}

/// Measures by plain enumeration, independent of the measures module:
/// union-find lesion count (26-adjacency) and farthest pair over the
/// per-line extreme voxels.
pub fn truth_measures(suv: &ScalarVolume, gt: &BinaryMask) -> LesionMeasures {
    let grid = *gt.grid();
    let fg: Vec<usize> = gt.foreground_indices().collect();
    if fg.is_empty() {
        return LesionMeasures::zero();
    }
    let v = grid.voxel_volume_ml();
    let values: Vec<f64> = fg.iter().map(|&i| suv.data()[i]).collect();
    let sum: f64 = values.iter().sum();

    let pos: std::collections::HashMap<usize, usize> = fg.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut parent: Vec<usize> = (0..fg.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (k, &i) in fg.iter().enumerate() {
        let c = grid.coords(i);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let n = [c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz];
                    if (0..3).any(|a| n[a] < 0 || n[a] >= grid.dims[a] as i64) {
                        continue;
                    }
                    if let Some(&m) = pos.get(&grid.index(n[0] as usize, n[1] as usize, n[2] as usize)) {
                        let (ra, rb) = (find(&mut parent, k), find(&mut parent, m));
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    let n_lesions = (0..fg.len()).filter(|&k| find(&mut parent, k) == k).count();

    // the farthest pair is attained at the ends of x-lines
    let mut ends: Vec<[usize; 3]> = Vec::new();
    for (k, &i) in fg.iter().enumerate() {
        let c = grid.coords(i);
        let first = k == 0 || { let p = grid.coords(fg[k - 1]); p[1] != c[1] || p[2] != c[2] };
        let last = k + 1 == fg.len() || { let q = grid.coords(fg[k + 1]); q[1] != c[1] || q[2] != c[2] };
        if first || last {
            ends.push(c);
        }
    }
    let s = grid.spacing.as_array();
    let mut best = 0.0f64;
    for a in 0..ends.len() {
        for b in a + 1..ends.len() {
            let d: f64 = (0..3).map(|t| ((ends[a][t] as f64 - ends[b][t] as f64) * s[t]).powi(2)).sum();
            best = best.max(d);
        }
    }

    LesionMeasures {
        suv_mean: sum / fg.len() as f64,
        suv_max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        n_lesions,
        tmtv_ml: v * fg.len() as f64,
        tlg_ml: v * sum,
        dmax_cm: best.sqrt() / 10.0,
        empty: false,
    }
}

/// A blob added to a mask; a missing center is drawn at random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    /// Voxel coordinates of the blob center.
    #[serde(default)]
    pub center: Option<[usize; 3]>,
    pub radii_mm: [f64; 3],
}

/// One step of a mask degradation. Morphology uses the 6-connected unit
/// ball; component indices follow 26-connected labeling order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum DegradeOp {
    Dilate { k: usize },
    Erode { k: usize },
    DropComponent { index: usize },
    AddBlob(BlobSpec),
    /// Translation by whole voxels; voxels leaving the grid are lost.
    Shift { by: [i64; 3] },
}

const BLOB_PLACEMENT_TRIES: usize = 10_000;

fn face_neighbors(grid: &Grid, i: usize) -> impl Iterator<Item = usize> + '_ {
    let c = grid.coords(i);
    Connectivity::Six.offsets().into_iter().filter_map(move |o| {
        let n = [c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]];
        if (0..3).all(|a| n[a] >= 0 && n[a] < grid.dims[a] as i64) {
            Some(grid.index(n[0] as usize, n[1] as usize, n[2] as usize))
        } else {
            None
        }
    })
}

fn dilate_once(mask: &BinaryMask) -> BinaryMask {
    let grid = *mask.grid();
    let mut out = mask.clone();
    for i in mask.foreground_indices() {
        for n in face_neighbors(&grid, i) {
            out.data_mut()[n] = true;
        }
    }
    out
}

fn erode_once(mask: &BinaryMask) -> BinaryMask {
    let grid = *mask.grid();
    let mut out = BinaryMask::empty(grid);
    for i in mask.foreground_indices() {
        // voxels outside the grid count as background
        let interior = face_neighbors(&grid, i).count() == 6 && face_neighbors(&grid, i).all(|n| mask.contains(n));
        out.data_mut()[i] = interior;
    }
    out
}

fn shift(mask: &BinaryMask, by: [i64; 3]) -> BinaryMask {
    let grid = *mask.grid();
    let mut out = BinaryMask::empty(grid);
    for i in mask.foreground_indices() {
        let c = grid.coords(i);
        let n = [c[0] as i64 + by[0], c[1] as i64 + by[1], c[2] as i64 + by[2]];
        if (0..3).all(|a| n[a] >= 0 && n[a] < grid.dims[a] as i64) {
            out.data_mut()[grid.index(n[0] as usize, n[1] as usize, n[2] as usize)] = true;
        }
    }
    out
}

/// Blob voxels around a voxel center, or `None` if the blob leaves the grid
/// or touches (26-adjacency) existing foreground.
fn try_blob(mask: &BinaryMask, center: [usize; 3], radii_mm: [f64; 3]) -> Result<Option<Vec<usize>>> {
    let grid = *mask.grid();
    if (0..3).any(|a| center[a] >= grid.dims[a]) {
        return Err(Error::InvalidParameter(format!("blob center {center:?} outside dims {:?}", grid.dims)));
    }
    let c_mm = grid.center_mm(grid.index(center[0], center[1], center[2]));
    if check_inside(&grid, c_mm, radii_mm, "blob").is_err() {
        return Ok(None);
    }
    let idx = ellipsoid_indices(&grid, c_mm, radii_mm);
    let touches = idx.iter().any(|&i| {
        let c = grid.coords(i);
        Connectivity::TwentySix.offsets().into_iter().chain([[0, 0, 0]]).any(|o| {
            let n = [c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]];
            (0..3).all(|a| n[a] >= 0 && n[a] < grid.dims[a] as i64)
                && mask.contains(grid.index(n[0] as usize, n[1] as usize, n[2] as usize))
        })
    });
    Ok(if touches { None } else { Some(idx) })
}

fn add_blob(mask: &BinaryMask, blob: &BlobSpec, rng: &mut ChaCha8Rng) -> Result<BinaryMask> {
    let grid = *mask.grid();
    let voxels = match blob.center {
        Some(c) => try_blob(mask, c, blob.radii_mm)?.ok_or_else(|| {
            Error::InvalidParameter(format!("blob at {c:?} leaves the volume or touches existing foreground"))
        })?,
        None => {
            let mut found = None;
            for _ in 0..BLOB_PLACEMENT_TRIES {
                let c = [
                    rng.random_range(0..grid.dims[0]),
                    rng.random_range(0..grid.dims[1]),
                    rng.random_range(0..grid.dims[2]),
                ];
                if let Some(v) = try_blob(mask, c, blob.radii_mm)? {
                    found = Some(v);
                    break;
                }
            }
            found.ok_or_else(|| Error::InvalidParameter("no free position for a random blob".into()))?
        }
    };
    let mut out = mask.clone();
    for i in voxels {
        out.data_mut()[i] = true;
    }
    Ok(out)
}

/// Applies `ops` in order. `seed` drives random blob placement only.
pub fn degrade(gt: &BinaryMask, ops: &[DegradeOp], seed: u64) -> Result<BinaryMask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = gt.clone();
    for op in ops {
        mask = match op {
            DegradeOp::Dilate { k } => (0..*k).fold(mask, |m, _| dilate_once(&m)),
            DegradeOp::Erode { k } => (0..*k).fold(mask, |m, _| erode_once(&m)),
            DegradeOp::DropComponent { index } => {
                let cc = connected_components(&mask, Connectivity::TwentySix);
                if *index >= cc.count() {
                    return Err(Error::InvalidComponent { index: *index, count: cc.count() });
                }
                let mut out = mask.clone();
                for &i in cc.voxels(*index as u32 + 1) {
                    out.data_mut()[i] = false;
                }
                out
            }
            DegradeOp::AddBlob(blob) => add_blob(&mask, blob, &mut rng)?,
            DegradeOp::Shift { by } => shift(&mask, *by),
        };
    }
    Ok(mask)
}

/// Independent stream `stream` of a base seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub ops: Vec<DegradeOp>,
}

/// Recipe for a cohort of random phantoms: each case draws its lesion count,
/// radii (spheres), SUVs and centers uniformly from the given ranges; each
/// model's prediction and each rater's annotation is a degradation of the
/// case's ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub seed: u64,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub background_suv: f64,
    #[serde(default)]
    pub noise_sd: f64,
    /// Inclusive range of lesions per case.
    pub lesion_count: [usize; 2],
    pub lesion_radius_mm: [f64; 2],
    pub lesion_suv: [f64; 2],
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    /// One op list per rater; empty means no rater annotations.
    #[serde(default)]
    pub raters: Vec<Vec<DegradeOp>>,
}

/// A generated case plus the seeds used for its degradations.
#[derive(Debug, Clone)]
pub struct CohortCase {
    pub phantom: Phantom,
    pub spec: PhantomSpec,
    pub predictions: Vec<(String, BinaryMask)>,
    pub raters: Vec<BinaryMask>,
}

impl CohortSpec {
    fn validate(&self) -> Result<()> {
        let [c0, c1] = self.lesion_count;
        let [r0, r1] = self.lesion_radius_mm;
        let [s0, s1] = self.lesion_suv;
        if c0 > c1 || !(r0 > 0.0 && r0 <= r1) || !(s0 > self.background_suv && s0 <= s1) {
            return Err(Error::InvalidParameter("cohort ranges must be ordered, radii positive, SUV above background".into()));
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("model names must be unique".into()));
        }
        Ok(())
    }

    /// Phantom spec of case `case`; depends only on the cohort seed and index.
    pub fn phantom_spec(&self, case: usize) -> Result<PhantomSpec> {
        self.validate()?;
        let grid = Grid::new(self.dims, Spacing::new(self.spacing[0], self.spacing[1], self.spacing[2])?)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, case as u64));
        let n = rng.random_range(self.lesion_count[0]..=self.lesion_count[1]);
        let s = grid.spacing.as_array();
        let mut lesions = Vec::with_capacity(n);
        for _ in 0..n {
            let r = if self.lesion_radius_mm[0] == self.lesion_radius_mm[1] {
                self.lesion_radius_mm[0]
            } else {
                rng.random_range(self.lesion_radius_mm[0]..self.lesion_radius_mm[1])
            };
            let suv = if self.lesion_suv[0] == self.lesion_suv[1] {
                self.lesion_suv[0]
            } else {
                rng.random_range(self.lesion_suv[0]..self.lesion_suv[1])
            };
            let mut center = [0.0; 3];
            for a in 0..3 {
                let extent = self.dims[a] as f64 * s[a];
                if 2.0 * r > extent {
                    return Err(Error::InvalidParameter(format!("lesion radius {r} mm does not fit the volume")));
                }
                // snap to a voxel center so the voxelization stays well defined
                let lo = (r / s[a] - 0.5).ceil() as usize;
                let hi = ((extent - r) / s[a] - 0.5).floor() as usize;
                let i = if lo >= hi { lo.min(hi) } else { rng.random_range(lo..=hi) };
                center[a] = (i as f64 + 0.5) * s[a];
            }
            lesions.push(LesionSpec { center_mm: center, radii_mm: [r; 3], suv });
        }
        Ok(PhantomSpec {
            dims: self.dims,
            spacing: self.spacing,
            background_suv: self.background_suv,
            noise_sd: self.noise_sd,
            lesions,
            seed: rng.next_u64(),
        })
    }

    pub fn case(&self, case: usize) -> Result<CohortCase> {
        let spec = self.phantom_spec(case)?;
        let phantom = generate(&spec)?;
        let base = derive_seed(self.seed, case as u64);
        let predictions = self
            .models
            .iter()
            .enumerate()
            .map(|(m, model)| Ok((model.name.clone(), degrade(&phantom.gt, &model.ops, derive_seed(base, 1 + m as u64))?)))
            .collect::<Result<Vec<_>>>()?;
        let offset = 1 + self.models.len() as u64;
        let raters = self
            .raters
            .iter()
            .enumerate()
            .map(|(r, ops)| degrade(&phantom.gt, ops, derive_seed(base, offset + r as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CohortCase { phantom, spec, predictions, raters })
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BinaryMask;
use crate::error::{Error, Result};

/// Draws `n_patches` patch centers. Each center is a lesion voxel with
/// probability `pos / (pos + neg)` and a background voxel otherwise, drawn
/// uniformly within its class. When one class is empty every center comes
/// from the other.
pub fn sample_patch_centers(
    mask: &BinaryMask,
    pos: u32,
    neg: u32,
    n_patches: usize,
    patch_edge: usize,
    seed: u64,
) -> Result<Vec<[usize; 3]>> {
    if pos + neg == 0 {
        return Err(Error::InvalidParameter("pos + neg must be positive".into()));
    }
    let dims = mask.dims();
    if patch_edge == 0 || dims.iter().any(|&d| patch_edge > d) {
        return Err(Error::InvalidParameter(format!("patch edge {patch_edge} does not fit dims {dims:?}")));
    }
    let (fg, bg): (Vec<usize>, Vec<usize>) = (0..mask.grid().len()).partition(|&i| mask.contains(i));
    if fg.is_empty() && neg == 0 {
        return Err(Error::EmptyInput("mask has no foreground and neg = 0".into()));
    }
    if bg.is_empty() && pos == 0 {
        return Err(Error::EmptyInput("mask has no background and pos = 0".into()));
    }

    let p_fg = pos as f64 / (pos + neg) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(n_patches);
    for _ in 0..n_patches {
        let want_fg = rng.random::<f64>() < p_fg;
        let pool = match (want_fg, fg.is_empty(), bg.is_empty()) {
            (true, false, _) | (false, _, true) => &fg,
            _ => &bg,
        };
        let i = pool[rng.random_range(0..pool.len())];
        centers.push(mask.grid().coords(i));
    }
    Ok(centers)
}

/// Lower corner of a cubic patch of edge `patch_edge` around `center`,
/// shifted so the patch stays inside `dims`.
pub fn patch_origin(center: [usize; 3], patch_edge: usize, dims: [usize; 3]) -> [usize; 3] {
    let mut origin = [0; 3];
    for a in 0..3 {
        let lo = center[a].saturating_sub(patch_edge / 2);
        origin[a] = lo.min(dims[a].saturating_sub(patch_edge));
    }
    origin
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Grid, Spacing};

    fn mask() -> BinaryMask {
        let g = Grid::new([10, 10, 10], Spacing::isotropic(2.0).unwrap()).unwrap();
        let mut m = BinaryMask::empty(g);
        for x in 2..5 {
            m.set(x, 3, 3, true);
        }
        m
    }

    #[test]
    fn pos_only_draws_foreground() {
        let m = mask();
        let c = sample_patch_centers(&m, 1, 0, 200, 4, 7).unwrap();
        assert!(c.iter().all(|&[x, y, z]| m.get(x, y, z)));
    }

    #[test]
    fn neg_only_draws_background() {
        let m = mask();
        let c = sample_patch_centers(&m, 0, 1, 200, 4, 7).unwrap();
        assert!(c.iter().all(|&[x, y, z]| !m.get(x, y, z)));
    }

    #[test]
    fn empty_class_falls_back() {
        let g = *mask().grid();
        let empty = BinaryMask::empty(g);
        let c = sample_patch_centers(&empty, 2, 1, 50, 4, 1).unwrap();
        assert_eq!(c.len(), 50);
        assert!(matches!(sample_patch_centers(&empty, 1, 0, 5, 4, 1), Err(Error::EmptyInput(_))));
        let full = BinaryMask::full(g);
        assert!(sample_patch_centers(&full, 0, 1, 5, 4, 1).is_err());
        assert!(sample_patch_centers(&full, 1, 1, 5, 4, 1).unwrap().iter().all(|&[x, y, z]| full.get(x, y, z)));
    }

    #[test]
    fn foreground_fraction_matches_ratio() {
        let m = mask();
        let n = 30_000;
        let c = sample_patch_centers(&m, 2, 1, n, 4, 2024).unwrap();
        let frac = c.iter().filter(|&&[x, y, z]| m.get(x, y, z)).count() as f64 / n as f64;
        // binomial sd = sqrt(2/9 / 30000) ≈ 0.0027
        assert!((frac - 2.0 / 3.0).abs() < 0.01, "fraction {frac}");
    }

    #[test]
    fn same_seed_same_centers() {
        let m = mask();
        assert_eq!(
            sample_patch_centers(&m, 2, 1, 100, 4, 99).unwrap(),
            sample_patch_centers(&m, 2, 1, 100, 4, 99).unwrap()
        );
    }

    #[test]
    fn rejects_oversized_patch() {
        assert!(sample_patch_centers(&mask(), 1, 1, 1, 11, 0).is_err());
        assert!(sample_patch_centers(&mask(), 0, 0, 1, 4, 0).is_err());
    }

    #[test]
    fn patch_origin_clamps_to_volume() {
        assert_eq!(patch_origin([0, 5, 9], 4, [10, 10, 10]), [0, 3, 6]);
    }
}

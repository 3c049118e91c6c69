mod common;

use petseg::agreement::{fleiss_kappa, kappa_mean, RaterStack};
use petseg::measures::dmax_mm;
use petseg::volume::{resample, BinaryMask, Grid, Interpolation, ScalarVolume, Spacing, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn library_matches_brute_force_on_1000_random_volumes() {
    for seed in 0..1000 {
        if let Err(e) = common::check_seed(seed, 8) {
            panic!("{e}");
        }
    }
}

#[test]
fn hull_dmax_matches_all_pairs_above_the_cutoff() {
    // dense 13³–15³ masks carry more than 1000 foreground voxels, so the
    // library takes the hull path
    for seed in 0..12u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = rng.random_range(13..=15);
        let s = common::SPACINGS[rng.random_range(0..common::SPACINGS.len())];
        let grid = Grid::new([e, e + 1, e], Spacing::new(s, 1.0, 2.0 * s).unwrap()).unwrap();
        let p = rng.random_range(0.6..0.95);
        let fg: Vec<usize> = (0..grid.len()).filter(|_| rng.random::<f64>() < p).collect();
        assert!(fg.len() > 1000);
        let got = dmax_mm(&grid, &fg) / 10.0;
        let want = common::dmax_cm(&grid, &fg);
        assert!(common::close(got, want, 1e-9), "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn hull_dmax_on_thin_slabs() {
    // a slab three voxels thick: the hull is nearly flat
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::new([40, 3, 30], Spacing::new(1.0, 2.5, 0.5).unwrap()).unwrap();
        let n = rng.random_range(1500..2500);
        let mut fg: Vec<usize> = (0..n).map(|_| rng.random_range(0..grid.len())).collect();
        fg.sort_unstable();
        fg.dedup();
        assert!(fg.len() >= 1000);
        let got = dmax_mm(&grid, &fg) / 10.0;
        assert!(common::close(got, common::dmax_cm(&grid, &fg), 1e-9), "seed {seed}");
    }
}

#[test]
fn kappa_matches_textbook_formula_and_mean() {
    let mut stacks = Vec::new();
    let mut want = 0.0;
    for seed in 0..9u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let grid = Grid::new([6, 6, 6], Spacing::isotropic(2.0).unwrap()).unwrap();
        let base = common::random_mask(&mut rng, grid);
        let raters: Vec<BinaryMask> = (0..3).map(|_| common::perturb(&mut rng, &base, 0.15)).collect();
        let plain: Vec<Vec<bool>> = raters.iter().map(|m| m.data().to_vec()).collect();
        let k = common::fleiss_kappa(&plain);
        let stack = RaterStack::new(raters).unwrap();
        assert!(common::close(fleiss_kappa(&stack).kappa, k, 1e-12), "seed {seed}");
        want += k / 9.0;
        stacks.push(stack);
    }
    assert!(common::close(kappa_mean(&stacks).unwrap(), want, 1e-12));
}

#[test]
fn nearest_round_trip_through_a_coarser_grid() {
    // 2 mm → 3 mm → 2 mm: each output voxel takes the input voxel whose
    // center is nearest its own; map the composition by hand
    let grid = Grid::new([6, 3, 9], Spacing::isotropic(2.0).unwrap()).unwrap();
    let data: Vec<f64> = (0..grid.len()).map(|i| i as f64).collect();
    let vol = ScalarVolume::new(grid, data, Unit::Suv).unwrap();
    let coarse = resample(&vol, Spacing::isotropic(3.0).unwrap(), Interpolation::Nearest).unwrap();
    assert_eq!(coarse.dims(), [4, 2, 6]);
    let back = resample(&coarse, Spacing::isotropic(2.0).unwrap(), Interpolation::Nearest).unwrap();
    assert_eq!(back.dims(), [6, 3, 9]);
    // nearest source index of center (i + 0.5)·t in a grid of step s,
    // exact halves rounding up
    let nearest = |i: usize, t: f64, s: f64, n: usize| {
        let c = (i as f64 + 0.5) * t / s - 0.5;
        ((c + 0.5).floor().max(0.0) as usize).min(n - 1)
    };
    for z in 0..9 {
        for y in 0..3 {
            for x in 0..6 {
                let via = |i: usize, n_coarse: usize, n: usize| nearest(nearest(i, 2.0, 3.0, n_coarse), 3.0, 2.0, n);
                let src = [via(x, 4, 6), via(y, 2, 3), via(z, 6, 9)];
                assert_eq!(back.get(x, y, z), vol.get(src[0], src[1], src[2]), "voxel ({x},{y},{z})");
            }
        }
    }
}

#[test]
fn trilinear_reproduces_a_linear_ramp() {
    // along x only; sampled positions away from the clamped borders
    let grid = Grid::new([8, 1, 1], Spacing::new(2.0, 1.0, 1.0).unwrap()).unwrap();
    let ramp = |x_mm: f64| 3.0 + 0.25 * x_mm;
    let data: Vec<f64> = (0..8).map(|i| ramp((i as f64 + 0.5) * 2.0)).collect();
    let vol = ScalarVolume::new(grid, data, Unit::Suv).unwrap();
    let out = resample(&vol, Spacing::new(1.0, 1.0, 1.0).unwrap(), Interpolation::Trilinear).unwrap();
    assert_eq!(out.dims(), [16, 1, 1]);
    for i in 1..15 {
        let want = ramp(i as f64 + 0.5);
        assert!((out.get(i, 0, 0) - want).abs() < 1e-12, "x = {i}: {} vs {want}", out.get(i, 0, 0));
    }
}

//! Brute-force reference implementations used as test oracles. Everything
//! here is deliberately naive and shares no code with the library beyond the
//! volume containers.

#![allow(dead_code)]

use petseg::volume::{BinaryMask, Connectivity, Grid, ScalarVolume, Spacing, Unit};
use rand::Rng;

pub const REL_TOL: f64 = 1e-9;

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn max_nonzero(conn: Connectivity) -> usize {
    match conn {
        Connectivity::Six => 1,
        Connectivity::Eighteen => 2,
        Connectivity::TwentySix => 3,
    }
}

pub fn adjacent(a: [usize; 3], b: [usize; 3], conn: Connectivity) -> bool {
    let mut nz = 0;
    for k in 0..3 {
        let d = a[k].abs_diff(b[k]);
        if d > 1 {
            return false;
        }
        nz += d;
    }
    nz >= 1 && nz <= max_nonzero(conn)
}

pub fn coords(dims: [usize; 3], i: usize) -> [usize; 3] {
    [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])]
}

/// Flood fill with an explicit stack over coordinate neighbors; labels are
/// 1-based in order of each component's first voxel.
pub fn components(mask: &BinaryMask, conn: Connectivity) -> (Vec<u32>, usize) {
    let dims = mask.dims();
    let data = mask.data();
    let mut labels = vec![0u32; data.len()];
    let mut next = 0u32;
    for seed in 0..data.len() {
        if !data[seed] || labels[seed] != 0 {
            continue;
        }
        next += 1;
        labels[seed] = next;
        let mut stack = vec![seed];
        while let Some(v) = stack.pop() {
            let c = coords(dims, v);
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let n = [c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz];
                        if (0..3).any(|k| n[k] < 0 || n[k] >= dims[k] as i64) {
                            continue;
                        }
                        let n = [n[0] as usize, n[1] as usize, n[2] as usize];
                        if !adjacent(c, n, conn) {
                            continue;
                        }
                        let j = n[0] + dims[0] * (n[1] + dims[1] * n[2]);
                        if data[j] && labels[j] == 0 {
                            labels[j] = next;
                            stack.push(j);
                        }
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

pub fn component_lists(labels: &[u32], count: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); count];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            out[l as usize - 1].push(i);
        }
    }
    out
}

pub fn dsc(gt: &BinaryMask, pred: &BinaryMask) -> f64 {
    let g = gt.data().iter().filter(|&&b| b).count();
    let p = pred.data().iter().filter(|&&b| b).count();
    if g + p == 0 {
        return 1.0;
    }
    let both = gt.data().iter().zip(pred.data()).filter(|(&a, &b)| a && b).count();
    2.0 * both as f64 / (g + p) as f64
}

/// Volume of the components of `a` that share no voxel with `b`.
pub fn untouched_volume_ml(a: &BinaryMask, b: &BinaryMask, conn: Connectivity) -> f64 {
    let (labels, n) = components(a, conn);
    let v = voxel_ml(a.grid());
    component_lists(&labels, n)
        .iter()
        .filter(|c| c.iter().all(|&i| !b.data()[i]))
        .map(|c| c.len() as f64 * v)
        .sum()
}

pub fn fpv(gt: &BinaryMask, pred: &BinaryMask, conn: Connectivity) -> f64 {
    untouched_volume_ml(pred, gt, conn)
}

pub fn fnv(gt: &BinaryMask, pred: &BinaryMask, conn: Connectivity) -> f64 {
    untouched_volume_ml(gt, pred, conn)
}

pub fn voxel_ml(g: &Grid) -> f64 {
    g.spacing.dx * g.spacing.dy * g.spacing.dz / 1000.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measures {
    pub suv_mean: f64,
    pub suv_max: f64,
    pub n_lesions: usize,
    pub tmtv_ml: f64,
    pub tlg_ml: f64,
    pub dmax_cm: f64,
}

/// All-pairs Dmax over voxel centers, in cm.
pub fn dmax_cm(grid: &Grid, fg: &[usize]) -> f64 {
    let s = grid.spacing.as_array();
    let mut best = 0.0f64;
    for (a, &i) in fg.iter().enumerate() {
        let ci = coords(grid.dims, i);
        for &j in &fg[a + 1..] {
            let cj = coords(grid.dims, j);
            let d2: f64 = (0..3).map(|k| ((ci[k] as f64 - cj[k] as f64) * s[k]).powi(2)).sum();
            best = best.max(d2);
        }
    }
    best.sqrt() / 10.0
}

pub fn measures(suv: &ScalarVolume, mask: &BinaryMask, conn: Connectivity) -> Measures {
    let fg: Vec<usize> = (0..mask.data().len()).filter(|&i| mask.data()[i]).collect();
    if fg.is_empty() {
        return Measures { suv_mean: 0.0, suv_max: 0.0, n_lesions: 0, tmtv_ml: 0.0, tlg_ml: 0.0, dmax_cm: 0.0 };
    }
    let v = voxel_ml(mask.grid());
    let vals: Vec<f64> = fg.iter().map(|&i| suv.data()[i]).collect();
    let sum: f64 = vals.iter().sum();
    Measures {
        suv_mean: sum / fg.len() as f64,
        suv_max: vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        n_lesions: components(mask, conn).1,
        tmtv_ml: v * fg.len() as f64,
        tlg_ml: v * sum,
        dmax_cm: dmax_cm(mask.grid(), &fg),
    }
}

/// Intersection and union voxel counts for every (gt, pred) component pair.
pub struct Overlaps {
    pub gt: Vec<Vec<usize>>,
    pub pred: Vec<Vec<usize>>,
    pub inter: Vec<Vec<usize>>,
}

impl Overlaps {
    pub fn new(gt: &BinaryMask, pred: &BinaryMask, conn: Connectivity) -> Self {
        let (gl, gn) = components(gt, conn);
        let (pl, pn) = components(pred, conn);
        let mut inter = vec![vec![0usize; pn]; gn];
        for i in 0..gl.len() {
            if gl[i] > 0 && pl[i] > 0 {
                inter[gl[i] as usize - 1][pl[i] as usize - 1] += 1;
            }
        }
        Overlaps { gt: component_lists(&gl, gn), pred: component_lists(&pl, pn), inter }
    }

    pub fn iou(&self, g: usize, p: usize) -> f64 {
        let i = self.inter[g][p];
        i as f64 / (self.gt[g].len() + self.pred[p].len() - i) as f64
    }
}

/// Exhaustive optimal matching. Pairs need a positive overlap. Among
/// assignments whose total IoU is within `REL_TOL` of the best, the
/// lexicographically smallest per-gt prediction vector wins, with
/// "unmatched" ranking after every prediction.
pub fn exhaustive_matching(ov: &Overlaps) -> Vec<Option<usize>> {
    let ng = ov.gt.len();
    let np = ov.pred.len();
    let mut all: Vec<(f64, Vec<Option<usize>>)> = Vec::new();
    fn rec(
        ov: &Overlaps,
        g: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        total: f64,
        all: &mut Vec<(f64, Vec<Option<usize>>)>,
    ) {
        if g == ov.gt.len() {
            all.push((total, cur.clone()));
            return;
        }
        for p in 0..ov.pred.len() {
            if !used[p] && ov.inter[g][p] > 0 {
                used[p] = true;
                cur.push(Some(p));
                rec(ov, g + 1, used, cur, total + ov.iou(g, p), all);
                cur.pop();
                used[p] = false;
            }
        }
        cur.push(None);
        rec(ov, g + 1, used, cur, total, all);
        cur.pop();
    }
    rec(ov, 0, &mut vec![false; np], &mut Vec::with_capacity(ng), 0.0, &mut all);
    let best = all.iter().map(|(t, _)| *t).fold(f64::NEG_INFINITY, f64::max);
    let key = |v: &Vec<Option<usize>>| v.iter().map(|p| p.unwrap_or(usize::MAX)).collect::<Vec<_>>();
    all.into_iter()
        .filter(|(t, _)| *t >= best - 1e-9)
        .map(|(_, v)| v)
        .min_by_key(key)
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub tp: usize,
    pub fp: usize,
    pub fn_effective: usize,
    pub fn_strict: usize,
    pub sensitivity: Option<f64>,
}

fn outcome(tp: usize, fp: usize, fn_effective: usize, fn_strict: usize, n_gt: usize) -> Outcome {
    let sensitivity = (n_gt > 0).then(|| (n_gt - fn_effective) as f64 / n_gt as f64);
    Outcome { tp, fp, fn_effective, fn_strict, sensitivity }
}

pub fn criterion1(ov: &Overlaps) -> Outcome {
    let ng = ov.gt.len();
    let np = ov.pred.len();
    let tp = (0..np).filter(|&p| (0..ng).any(|g| ov.inter[g][p] > 0)).count();
    let missed = (0..ng).filter(|&g| (0..np).all(|p| ov.inter[g][p] == 0)).count();
    outcome(tp, np - tp, missed, missed, ng)
}

fn from_matching(ov: &Overlaps, m: &[Option<usize>], pass: impl Fn(usize, usize) -> bool) -> Outcome {
    let matched = m.iter().flatten().count();
    let tp = m.iter().enumerate().filter(|(g, p)| p.is_some_and(|p| pass(*g, p))).count();
    let failed = matched - tp;
    let unmatched_gt = m.len() - matched;
    let unmatched_pred = ov.pred.len() - matched;
    outcome(tp, failed + unmatched_pred, failed + unmatched_gt, unmatched_gt, ov.gt.len())
}

pub fn criterion2(ov: &Overlaps, m: &[Option<usize>], threshold: f64) -> Outcome {
    from_matching(ov, m, |g, p| ov.iou(g, p) >= threshold)
}

/// Index of the highest-SUV voxel of a lesion, earliest index on ties.
pub fn peak(suv: &ScalarVolume, voxels: &[usize]) -> usize {
    let mut best = usize::MAX;
    for &i in voxels {
        if best == usize::MAX || suv.data()[i] > suv.data()[best] || (suv.data()[i] == suv.data()[best] && i < best) {
            best = i;
        }
    }
    best
}

pub fn criterion3(ov: &Overlaps, m: &[Option<usize>], suv: &ScalarVolume) -> Outcome {
    from_matching(ov, m, |g, p| ov.pred[p].contains(&peak(suv, &ov.gt[g])))
}

// ---- random instances ----

pub const SPACINGS: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 4.0];

pub fn random_grid(rng: &mut impl Rng, max_edge: usize) -> Grid {
    let dims = [rng.random_range(1..=max_edge), rng.random_range(1..=max_edge), rng.random_range(1..=max_edge)];
    let s = [0; 3].map(|_| SPACINGS[rng.random_range(0..SPACINGS.len())]);
    Grid::new(dims, Spacing::new(s[0], s[1], s[2]).unwrap()).unwrap()
}

pub fn random_mask(rng: &mut impl Rng, grid: Grid) -> BinaryMask {
    let p: f64 = rng.random_range(0.02..0.6);
    let data = (0..grid.len()).map(|_| rng.random::<f64>() < p).collect();
    BinaryMask::new(grid, data).unwrap()
}

/// `mask` with each voxel flipped with probability `p`.
pub fn perturb(rng: &mut impl Rng, mask: &BinaryMask, p: f64) -> BinaryMask {
    let data = mask.data().iter().map(|&b| b ^ (rng.random::<f64>() < p)).collect();
    BinaryMask::new(*mask.grid(), data).unwrap()
}

/// Keeps only the first `max` components of `mask` under `conn`.
pub fn cap_components(mask: &BinaryMask, conn: Connectivity, max: usize) -> BinaryMask {
    let (labels, _) = components(mask, conn);
    let data = labels.iter().map(|&l| l > 0 && l as usize <= max).collect();
    BinaryMask::new(*mask.grid(), data).unwrap()
}

/// SUV values from a small integer set, so ties within lesions are common.
pub fn random_suv(rng: &mut impl Rng, grid: Grid) -> ScalarVolume {
    let data = (0..grid.len()).map(|_| rng.random_range(0..5) as f64 * 0.5).collect();
    ScalarVolume::new(grid, data, Unit::Suv).unwrap()
}

pub const CONNECTIVITIES: [Connectivity; 3] = [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix];

// ---- STAPLE ----

#[derive(Debug, Clone)]
pub struct StapleTrace {
    pub w: Vec<f64>,
    pub sens: Vec<f64>,
    pub spec: Vec<f64>,
    pub iterations: usize,
}

/// Binary STAPLE EM in log space with a per-voxel prior equal to the mean
/// vote, rates started at 0.9999 and clamped to [0.01, 0.99].
pub fn staple(raters: &[Vec<bool>], max_iter: usize, tol: f64) -> StapleTrace {
    let n = raters.len();
    let m = raters[0].len();
    let clamp = |v: f64| v.clamp(0.01, 0.99);
    let prior: Vec<f64> = (0..m).map(|i| raters.iter().filter(|r| r[i]).count() as f64 / n as f64).collect();
    let mut sens = vec![clamp(0.9999); n];
    let mut spec = vec![clamp(0.9999); n];
    let mut w = prior.clone();
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let mut delta = 0.0f64;
        let mut next = vec![0.0; m];
        for i in 0..m {
            next[i] = if prior[i] == 0.0 || prior[i] == 1.0 {
                prior[i]
            } else {
                let mut la = prior[i].ln();
                let mut lb = (1.0 - prior[i]).ln();
                for j in 0..n {
                    if raters[j][i] {
                        la += sens[j].ln();
                        lb += (1.0 - spec[j]).ln();
                    } else {
                        la += (1.0 - sens[j]).ln();
                        lb += spec[j].ln();
                    }
                }
                1.0 / (1.0 + (lb - la).exp())
            };
            delta = delta.max((next[i] - w[i]).abs());
        }
        w = next;
        let fg: f64 = w.iter().sum();
        let bg = m as f64 - fg;
        for j in 0..n {
            let hit: f64 = (0..m).filter(|&i| raters[j][i]).map(|i| w[i]).sum();
            let rej: f64 = (0..m).filter(|&i| !raters[j][i]).map(|i| 1.0 - w[i]).sum();
            sens[j] = clamp(if fg > 0.0 { hit / fg } else { 0.99 });
            spec[j] = clamp(if bg > 0.0 { rej / bg } else { 0.99 });
        }
        if delta < tol {
            break;
        }
    }
    StapleTrace { w, sens, spec, iterations: it }
}

/// Fleiss' kappa straight from the textbook definitions, two categories.
pub fn fleiss_kappa(raters: &[Vec<bool>]) -> f64 {
    let n = raters.len() as f64;
    let m = raters[0].len();
    let mut p_i_sum = 0.0;
    let mut fg_total = 0.0;
    for i in 0..m {
        let fg = raters.iter().filter(|r| r[i]).count() as f64;
        let bg = n - fg;
        p_i_sum += (fg * (fg - 1.0) + bg * (bg - 1.0)) / (n * (n - 1.0));
        fg_total += fg;
    }
    let p_bar = p_i_sum / m as f64;
    let p_fg = fg_total / (m as f64 * n);
    let p_e = p_fg * p_fg + (1.0 - p_fg) * (1.0 - p_fg);
    (p_bar - p_e) / (1.0 - p_e)
}

// ---- library vs oracle on one seeded instance ----

fn check_outcome(what: &str, got: &petseg::detection::DetectionOutcome, want: &Outcome) -> Result<(), String> {
    let same_sens = match (got.sensitivity, want.sensitivity) {
        (Some(a), Some(b)) => close(a, b, REL_TOL),
        (None, None) => true,
        _ => false,
    };
    if got.tp != want.tp
        || got.fp != want.fp
        || got.fn_effective != want.fn_effective
        || got.fn_strict != want.fn_strict
        || !same_sens
    {
        return Err(format!("{what}: library {got:?}, oracle {want:?}"));
    }
    Ok(())
}

/// Compares every library routine covered by the oracles on one random
/// instance of at most `max_edge`³ voxels.
pub fn check_seed(seed: u64, max_edge: usize) -> Result<(), String> {
    use petseg::detection::{criterion1 as c1, criterion2 as c2, criterion3 as c3, match_lesions};
    use petseg::measures::lesion_measures;
    use petseg::metrics;
    use petseg::volume::connected_components;
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let grid = random_grid(&mut rng, max_edge);
    let noise = random_mask(&mut rng, grid);
    for conn in CONNECTIVITIES {
        let (labels, count) = components(&noise, conn);
        let cc = connected_components(&noise, conn);
        if cc.count() != count || cc.labels() != labels.as_slice() {
            return Err(format!("seed {seed}: components differ under {conn:?}"));
        }
        if cc.sizes().iter().sum::<usize>() != noise.count() {
            return Err(format!("seed {seed}: component sizes do not sum to the foreground"));
        }
    }

    let conn = CONNECTIVITIES[rng.random_range(0..3)];
    let gt = cap_components(&random_mask(&mut rng, grid), conn, 6);
    let flip = rng.random_range(0.0..0.5);
    let pred = cap_components(&perturb(&mut rng, &gt, flip), conn, 6);
    let suv = random_suv(&mut rng, grid);
    let gt_cc = connected_components(&gt, conn);
    let pred_cc = connected_components(&pred, conn);
    let ctx = |what: &str| format!("seed {seed} ({conn:?}, dims {:?}): {what}", grid.dims);

    let pairs = [
        ("dsc", metrics::dsc(&gt, &pred).map_err(|e| e.to_string())?, dsc(&gt, &pred)),
        ("fpv", metrics::fpv(&gt, &pred_cc).map_err(|e| e.to_string())?, fpv(&gt, &pred, conn)),
        ("fnv", metrics::fnv(&gt_cc, &pred).map_err(|e| e.to_string())?, fnv(&gt, &pred, conn)),
    ];
    for (what, got, want) in pairs {
        if !close(got, want, REL_TOL) {
            return Err(ctx(&format!("{what} {got} vs oracle {want}")));
        }
    }

    for (name, mask, cc) in [("gt", &gt, &gt_cc), ("pred", &pred, &pred_cc)] {
        let got = lesion_measures(&suv, mask, cc).map_err(|e| e.to_string())?;
        let want = measures(&suv, mask, conn);
        let reals = [
            (got.suv_mean, want.suv_mean),
            (got.suv_max, want.suv_max),
            (got.tmtv_ml, want.tmtv_ml),
            (got.tlg_ml, want.tlg_ml),
            (got.dmax_cm, want.dmax_cm),
        ];
        if got.n_lesions != want.n_lesions || reals.iter().any(|&(a, b)| !close(a, b, REL_TOL)) {
            return Err(ctx(&format!("{name} measures {got:?} vs oracle {want:?}")));
        }
    }

    let ov = Overlaps::new(&gt, &pred, conn);
    let assign = exhaustive_matching(&ov);
    let table = match_lesions(&gt_cc, &pred_cc).map_err(|e| e.to_string())?;
    let mut lib_assign = vec![None; ov.gt.len()];
    for p in &table.pairs {
        let (g, q) = (p.gt_label as usize - 1, p.pred_label as usize - 1);
        if p.intersection != ov.inter[g][q]
            || p.union != ov.gt[g].len() + ov.pred[q].len() - ov.inter[g][q]
            || !close(p.iou, ov.iou(g, q), REL_TOL)
        {
            return Err(ctx(&format!("pair {p:?} disagrees with the overlap oracle")));
        }
        lib_assign[g] = Some(q);
    }
    if lib_assign != assign {
        return Err(ctx(&format!("matching {lib_assign:?} vs exhaustive {assign:?}")));
    }
    let want_unmatched: Vec<u32> = (0..ov.gt.len()).filter(|&g| assign[g].is_none()).map(|g| g as u32 + 1).collect();
    if table.unmatched_gt != want_unmatched {
        return Err(ctx("unmatched ground-truth labels differ"));
    }
    let want_free: Vec<u32> =
        (0..ov.pred.len()).filter(|p| !assign.contains(&Some(*p))).map(|p| p as u32 + 1).collect();
    if table.unmatched_pred != want_free {
        return Err(ctx("unmatched predicted labels differ"));
    }

    check_outcome(&ctx("criterion 1"), &c1(&gt_cc, &pred_cc).map_err(|e| e.to_string())?, &criterion1(&ov))?;
    for t in [0.5, rng.random_range(0.01..=1.0)] {
        let got = c2(&table, t).map_err(|e| e.to_string())?;
        check_outcome(&ctx(&format!("criterion 2 at T = {t}")), &got, &criterion2(&ov, &assign, t))?;
    }
    let got = c3(&table, &gt_cc, &pred_cc, &suv).map_err(|e| e.to_string())?;
    check_outcome(&ctx("criterion 3"), &got, &criterion3(&ov, &assign, &suv))?;
    Ok(())
}

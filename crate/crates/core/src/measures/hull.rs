//! Farthest pair of integer lattice points through an exact convex hull.
//!
//! Points are voxel indices, so every orientation test runs in `i64`/`i128`
//! without rounding. Coplanar and collinear inputs fall back to a planar hull
//! or the two extremes of the line.

use std::collections::HashMap;

pub(crate) type P3 = [i64; 3];

#[inline]
fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn cross(a: P3, b: P3) -> P3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
fn dot(a: P3, b: P3) -> i128 {
    a[0] as i128 * b[0] as i128 + a[1] as i128 * b[1] as i128 + a[2] as i128 * b[2] as i128
}

/// Signed volume (×6) of tetrahedron `abcd`; positive when `d` lies on the
/// side the normal `(b-a)×(c-a)` points to.
#[inline]
fn orient(a: P3, b: P3, c: P3, d: P3) -> i128 {
    dot(cross(sub(b, a), sub(c, a)), sub(d, a))
}

/// Keeps only points that are extreme (min or max) along each axis within
/// their axis-aligned line; hull vertices always survive this filter.
pub(crate) fn line_extremes(points: &[P3]) -> Vec<P3> {
    let mut keep = vec![true; points.len()];
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut ext: HashMap<(i64, i64), (i64, i64)> = HashMap::new();
        for p in points {
            let e = ext.entry((p[u], p[v])).or_insert((p[axis], p[axis]));
            e.0 = e.0.min(p[axis]);
            e.1 = e.1.max(p[axis]);
        }
        for (k, p) in points.iter().enumerate() {
            let (lo, hi) = ext[&(p[u], p[v])];
            if p[axis] != lo && p[axis] != hi {
                keep[k] = false;
            }
        }
    }
    points.iter().zip(keep).filter_map(|(p, k)| k.then_some(*p)).collect()
}

struct Face {
    v: [usize; 3],
    normal: P3,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn new(pts: &[P3], v: [usize; 3]) -> Face {
        let normal = cross(sub(pts[v[1]], pts[v[0]]), sub(pts[v[2]], pts[v[0]]));
        Face { v, normal, outside: Vec::new(), alive: true }
    }

    #[inline]
    fn height(&self, pts: &[P3], p: usize) -> i128 {
        dot(self.normal, sub(pts[p], pts[self.v[0]]))
    }
}

/// Vertices of the convex hull of `pts` (a superset in degenerate corner
/// cases is harmless for farthest-pair queries; no true vertex is dropped).
pub(crate) fn hull_vertices(pts: &[P3]) -> Vec<P3> {
    let mut pts = pts.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 3 {
        return pts;
    }

    // Initial simplex: two extreme points, farthest from their line, farthest
    // from their plane.
    let a = 0;
    let b = (1..pts.len()).max_by_key(|&i| dot(sub(pts[i], pts[a]), sub(pts[i], pts[a]))).unwrap();
    let ab = sub(pts[b], pts[a]);
    let (c, c_area) = (0..pts.len())
        .map(|i| {
            let n = cross(ab, sub(pts[i], pts[a]));
            (i, dot(n, n))
        })
        .max_by_key(|&(_, n)| n)
        .unwrap();
    if c_area == 0 {
        return collinear_extremes(&pts);
    }
    let (d, d_vol) = (0..pts.len())
        .map(|i| (i, orient(pts[a], pts[b], pts[c], pts[i]).abs()))
        .max_by_key(|&(_, v)| v)
        .unwrap();
    if d_vol == 0 {
        return planar_hull(&pts, cross(ab, sub(pts[c], pts[a])));
    }

    let mut faces: Vec<Face> = Vec::new();
    let mut simplex = [[a, b, c], [a, c, d], [a, d, b], [b, d, c]];
    if orient(pts[a], pts[b], pts[c], pts[d]) > 0 {
        for f in &mut simplex {
            f.swap(1, 2);
        }
    }
    for v in simplex {
        faces.push(Face::new(&pts, v));
    }
    // directed edge -> owning face
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            edges.insert((f.v[k], f.v[(k + 1) % 3]), fi);
        }
    }

    for p in 0..pts.len() {
        if [a, b, c, d].contains(&p) {
            continue;
        }
        if let Some(f) = faces.iter_mut().find(|f| f.height(&pts, p) > 0) {
            f.outside.push(p);
        }
    }

    let mut stack: Vec<usize> = (0..faces.len()).filter(|&f| !faces[f].outside.is_empty()).collect();
    while let Some(fi) = stack.pop() {
        if !faces[fi].alive || faces[fi].outside.is_empty() {
            continue;
        }
        let eye = *faces[fi].outside.iter().max_by_key(|&&p| (faces[fi].height(&pts, p), std::cmp::Reverse(p))).unwrap();

        // visible region by flood fill over face adjacency
        let mut visible = vec![fi];
        let mut seen = std::collections::HashSet::from([fi]);
        let mut k = 0;
        while k < visible.len() {
            let f = visible[k];
            k += 1;
            let v = faces[f].v;
            for e in 0..3 {
                let nb = edges[&(v[(e + 1) % 3], v[e])];
                if seen.insert(nb) && faces[nb].height(&pts, eye) > 0 {
                    visible.push(nb);
                }
            }
        }

        let visible_set: std::collections::HashSet<usize> = visible.iter().copied().collect();
        let mut horizon = Vec::new();
        let mut orphans = Vec::new();
        for &f in &visible {
            let v = faces[f].v;
            for e in 0..3 {
                let (s, t) = (v[e], v[(e + 1) % 3]);
                if !visible_set.contains(&edges[&(t, s)]) {
                    horizon.push((s, t));
                }
            }
            orphans.append(&mut faces[f].outside);
            faces[f].alive = false;
        }
        for &f in &visible {
            let v = faces[f].v;
            for e in 0..3 {
                let key = (v[e], v[(e + 1) % 3]);
                if edges.get(&key) == Some(&f) {
                    edges.remove(&key);
                }
            }
        }

        let mut new_faces = Vec::with_capacity(horizon.len());
        for (s, t) in horizon {
            let fi_new = faces.len();
            faces.push(Face::new(&pts, [s, t, eye]));
            edges.insert((s, t), fi_new);
            edges.insert((t, eye), fi_new);
            edges.insert((eye, s), fi_new);
            new_faces.push(fi_new);
        }
        for p in orphans {
            if p == eye {
                continue;
            }
            if let Some(&f) = new_faces.iter().find(|&&f| faces[f].height(&pts, p) > 0) {
                faces[f].outside.push(p);
            }
        }
        stack.extend(new_faces.iter().copied().filter(|&f| !faces[f].outside.is_empty()));
    }

    let mut used = vec![false; pts.len()];
    for f in faces.iter().filter(|f| f.alive) {
        for &v in &f.v {
            used[v] = true;
        }
    }
    pts.iter().zip(used).filter_map(|(p, u)| u.then_some(*p)).collect()
}

fn collinear_extremes(pts: &[P3]) -> Vec<P3> {
    // sorted lexicographically, so the ends of a line are first and last
    vec![pts[0], pts[pts.len() - 1]]
}

/// Monotone-chain hull of coplanar points, projected along the dominant axis
/// of the plane normal (an affine bijection within the plane).
fn planar_hull(pts: &[P3], normal: P3) -> Vec<P3> {
    let drop = (0..3).max_by_key(|&i| normal[i].abs()).unwrap();
    let (u, v) = match drop {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by_key(|&i| (pts[i][u], pts[i][v]));
    let cross2 = |o: usize, a: usize, b: usize| {
        let (ox, oy) = (pts[o][u] as i128, pts[o][v] as i128);
        (pts[a][u] as i128 - ox) * (pts[b][v] as i128 - oy) - (pts[a][v] as i128 - oy) * (pts[b][u] as i128 - ox)
    };
    let mut hull: Vec<usize> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let order: Box<dyn Iterator<Item = &usize>> = if pass == 0 { Box::new(idx.iter()) } else { Box::new(idx.iter().rev()) };
        for &i in order {
            while hull.len() >= start + 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0 {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    let mut out: Vec<P3> = hull.into_iter().map(|i| pts[i]).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Largest squared physical distance between any two points, with per-axis
/// scale `spacing` (mm per index step).
pub(crate) fn max_pairwise_sq(points: &[P3], spacing: [f64; 3]) -> f64 {
    let mut best = 0.0f64;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let d = (0..3).map(|a| ((p[a] - q[a]) as f64 * spacing[a]).powi(2)).sum::<f64>();
            best = best.max(d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: u64) -> impl FnMut(i64) -> i64 {
        let mut s = seed;
        move |m| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) % m as u64) as i64
        }
    }

    #[test]
    fn cube_corners_are_the_hull() {
        let mut pts = Vec::new();
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..4 {
                    pts.push([x, y, z]);
                }
            }
        }
        let mut h = hull_vertices(&pts);
        h.sort_unstable();
        let mut corners: Vec<P3> = [0, 3].iter().flat_map(|&x| [0, 3].iter().flat_map(move |&y| [0, 3].iter().map(move |&z| [x, y, z]))).collect();
        corners.sort_unstable();
        assert_eq!(h, corners);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(hull_vertices(&[[1, 1, 1]]), vec![[1, 1, 1]]);
        let line: Vec<P3> = (0..6).map(|i| [i, 2 * i, 0]).collect();
        assert_eq!(hull_vertices(&line), vec![[0, 0, 0], [5, 10, 0]]);
        let plane: Vec<P3> = (0..5).flat_map(|x| (0..5).map(move |y| [x, y, x + y])).collect();
        let h = hull_vertices(&plane);
        assert_eq!(h.len(), 4);
    }

    #[test]
    fn hull_farthest_pair_matches_all_pairs() {
        let mut rnd = lcg(7);
        for trial in 0..400 {
            let n = 1 + rnd(60) as usize;
            let span = 2 + rnd(8);
            let pts: Vec<P3> = (0..n)
                .map(|_| {
                    let z = if trial % 5 == 0 { 3 } else { rnd(span) };
                    [rnd(span), rnd(span), z]
                })
                .collect();
            let s = [1.0, 1.7, 2.3];
            let brute = max_pairwise_sq(&pts, s);
            let via_hull = max_pairwise_sq(&hull_vertices(&line_extremes(&pts)), s);
            assert_eq!(brute, via_hull, "trial {trial}");
        }
    }

    #[test]
    fn support_function_is_preserved() {
        // same maximum along every direction means same convex hull
        let mut rnd = lcg(99);
        for _ in 0..200 {
            let pts: Vec<P3> = (0..80).map(|_| [rnd(7), rnd(7), rnd(7)]).collect();
            let h = hull_vertices(&pts);
            for _ in 0..50 {
                let w = [rnd(11) - 5, rnd(11) - 5, rnd(11) - 5];
                let all = pts.iter().map(|&p| dot(w, p)).max().unwrap();
                let hull = h.iter().map(|&p| dot(w, p)).max().unwrap();
                assert_eq!(all, hull);
            }
        }
    }
}

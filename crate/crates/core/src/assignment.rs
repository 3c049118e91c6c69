//! Rectangular linear assignment (Kuhn–Munkres with potentials).

/// Returns, for each row, the column it is assigned to, minimizing the total
/// cost. Requires `rows <= cols`; every row is assigned.
fn min_cost_rows(cost: &[Vec<f64>], cols: usize) -> Vec<usize> {
    let n = cost.len();
    let m = cols;
    debug_assert!(n <= m);
    // 1-based potentials and matching as in the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Maximum-weight matching on a dense `rows × cols` weight matrix with
/// non-negative weights. Returns `(row, col)` pairs with positive weight,
/// sorted by row.
pub(crate) fn max_weight_matching(weights: &[Vec<f64>], rows: usize, cols: usize) -> Vec<(usize, usize)> {
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let mut pairs: Vec<(usize, usize)> = if rows <= cols {
        let cost: Vec<Vec<f64>> = weights.iter().map(|r| r.iter().map(|w| -w).collect()).collect();
        min_cost_rows(&cost, cols).into_iter().enumerate().collect()
    } else {
        let cost: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| -weights[r][c]).collect()).collect();
        min_cost_rows(&cost, rows).into_iter().enumerate().map(|(c, r)| (r, c)).collect()
    };
    pairs.retain(|&(r, c)| weights[r][c] > 0.0);
    pairs.sort_unstable();
    pairs
}

/// Totals within this distance of the optimum count as ties.
pub(crate) const TIE_EPS: f64 = 1e-9;

fn optimum(weights: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let sub: Vec<Vec<f64>> = rows.iter().map(|&r| cols.iter().map(|&c| weights[r][c]).collect()).collect();
    max_weight_matching(&sub, rows.len(), cols.len()).iter().map(|&(i, j)| sub[i][j]).sum()
}

/// Maximum-weight matching with a deterministic choice among optimal
/// matchings (totals within [`TIE_EPS`]): rows in ascending order take the
/// smallest column that still admits an optimal completion, and stay
/// unmatched only if none does. Rows and columns are first split into the
/// connected blocks of the positive-weight graph, which are independent.
pub(crate) fn lexicographic_max_matching(weights: &[Vec<f64>], rows: usize, cols: usize) -> Vec<(usize, usize)> {
    // union-find over rows (0..rows) and columns (rows..rows + cols)
    let mut parent: Vec<usize> = (0..rows + cols).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (r, row) in weights.iter().enumerate() {
        for (c, &w) in row.iter().enumerate() {
            if w > 0.0 {
                let (a, b) = (find(&mut parent, r), find(&mut parent, rows + c));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut blocks: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> = Default::default();
    for r in 0..rows {
        let root = find(&mut parent, r);
        blocks.entry(root).or_default().0.push(r);
    }
    for c in 0..cols {
        let root = find(&mut parent, rows + c);
        blocks.entry(root).or_default().1.push(c);
    }

    let mut out = Vec::new();
    for (block_rows, block_cols) in blocks.into_values() {
        if block_rows.is_empty() || block_cols.is_empty() {
            continue;
        }
        let opt = optimum(weights, &block_rows, &block_cols);
        let mut acc = 0.0;
        let mut free = block_cols;
        for (k, &r) in block_rows.iter().enumerate() {
            let rest = &block_rows[k + 1..];
            for idx in 0..free.len() {
                let c = free[idx];
                let w = weights[r][c];
                if w <= 0.0 {
                    continue;
                }
                let remaining: Vec<usize> = free.iter().copied().filter(|&x| x != c).collect();
                if acc + w + optimum(weights, rest, &remaining) >= opt - TIE_EPS {
                    out.push((r, c));
                    acc += w;
                    free.remove(idx);
                    break;
                }
            }
        }
    }
    out.sort_unstable();
    out
}

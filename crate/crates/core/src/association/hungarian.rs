//! Kuhn-Munkres assignment with row/column potentials, O(n^2 m).

use super::Matrix;

/// Maximum-value assignment. Returns, for every row, the matched column.
///
/// When there are more rows than columns exactly `cols` rows are matched
/// and the rest are `None`; otherwise every row is matched.
pub fn standard_hungarian(values: &Matrix) -> Vec<Option<usize>> {
    let (rows, cols) = (values.rows(), values.cols());
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        let col_of_row = solve_min(rows, cols, |i, j| -values.get(i, j));
        col_of_row.into_iter().map(Some).collect()
    } else {
        // Transposed problem: columns become the assigned side.
        let row_of_col = solve_min(cols, rows, |i, j| -values.get(j, i));
        let mut out = vec![None; rows];
        for (c, r) in row_of_col.into_iter().enumerate() {
            out[r] = Some(c);
        }
        out
    }
}

/// Minimum-cost assignment of `n` rows into `m >= n` columns.
fn solve_min(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(n <= m);
    // One-based with index 0 as the virtual root column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of_row = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            col_of_row[owner[j] - 1] = j - 1;
        }
    }
    col_of_row
}

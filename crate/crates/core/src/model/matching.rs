//! Optimal one-to-one assignment (Hungarian / Kuhn-Munkres with potentials).

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Assignment of `min(Nq, G)` pairs `(query, ground_truth)` minimizing total
/// cost for a `[Nq × G]` cost matrix. Pairs are sorted by ground-truth index.
pub fn hungarian_match(cost: &Tensor) -> Result<Vec<(usize, usize)>> {
    let (nq, ng) = match cost.shape() {
        [a, b] => (*a, *b),
        s => return Err(Error::Dimension(format!("cost must be a matrix, got {s:?}"))),
    };
    if !cost.is_finite() {
        return Err(Error::Numeric("cost matrix has non-finite entries".into()));
    }
    let at = |q: usize, gt: usize| cost.data()[q * ng + gt];
    let mut pairs = if ng <= nq {
        // rows = ground truths, columns = queries
        solve(ng, nq, |r, c| at(c, r))
            .into_iter()
            .enumerate()
            .map(|(gt, q)| (q, gt))
            .collect::<Vec<_>>()
    } else {
        solve(nq, ng, at)
            .into_iter()
            .enumerate()
            .map(|(q, gt)| (q, gt))
            .collect()
    };
    pairs.sort_by_key(|&(_, gt)| gt);
    Ok(pairs)
}

/// Sum of the matched entries.
pub fn assignment_cost(cost: &Tensor, pairs: &[(usize, usize)]) -> f64 {
    let ng = cost.shape()[1];
    pairs.iter().map(|&(q, g)| cost.data()[q * ng + g]).sum()
}

/// Rectangular assignment with `rows <= cols`; returns the column for each row.
fn solve(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(rows <= cols);
    if rows == 0 {
        return Vec::new();
    }
    // 1-based potentials; column 0 is a virtual start column.
    let mut u = vec![0.0f64; rows + 1];
    let mut v = vec![0.0f64; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for row in 1..=rows {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
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
    let mut assignment = vec![0usize; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

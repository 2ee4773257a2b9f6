//! Minimum-cost perfect matching on a square cost matrix (Hungarian method,
//! shortest augmenting paths with dual potentials, O(n³)).

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Returns `assignment[row] = col` minimizing the total cost.
///
/// `cost` is row-major `n x n`; every entry must be finite.
pub fn solve_assignment<S: Real>(cost: &[S], n: usize) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(Error::Shape(format!(
            "cost matrix needs {} entries for n = {n}, got {}",
            n * n,
            cost.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("cost matrix entries must be finite".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let inf: S = lit(f64::INFINITY);
    let at = |i: usize, j: usize| cost[(i - 1) * n + (j - 1)];
    // 1-based; column 0 is the virtual root of each augmenting tree.
    let mut u = vec![S::zero(); n + 1];
    let mut v = vec![S::zero(); n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == 0 {
                // Unreachable with finite costs; guards against NaN slipping through.
                return Err(Error::Domain("assignment failed to augment".into()));
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of_col[j] - 1] = j - 1;
    }
    Ok(assignment)
}

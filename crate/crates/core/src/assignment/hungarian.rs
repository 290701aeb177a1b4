use super::cost::{Assignment, CostMatrix};
use crate::error::{Error, Result};

/// Minimum-cost matching of size `min(rows, cols)`.
///
/// Shortest-augmenting-path Hungarian method with row/column potentials,
/// O(n^2 m). Infeasible (`+inf`) cells are never used; if no complete
/// matching avoids them an [`Error::Infeasible`] is returned.
pub fn hungarian(costs: &CostMatrix) -> Result<Assignment> {
    if costs.rows() == 0 || costs.cols() == 0 {
        return Ok(Assignment { pairs: Vec::new(), total: 0.0 });
    }
    if costs.rows() <= costs.cols() {
        let cols = solve_wide(costs)?;
        let pairs = cols.into_iter().enumerate().collect();
        Ok(Assignment::from_pairs(costs, pairs))
    } else {
        let t = costs.transpose();
        let rows = solve_wide(&t)?;
        let pairs = rows.into_iter().enumerate().map(|(c, r)| (r, c)).collect();
        Ok(Assignment::from_pairs(costs, pairs))
    }
}

/// Solves `rows <= cols`; returns the column of every row.
fn solve_wide(a: &CostMatrix) -> Result<Vec<usize>> {
    let (n, m) = (a.rows(), a.cols());
    debug_assert!(n <= m);
    // 1-based potentials and column owners; index 0 is the virtual root
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![f64::INFINITY; m + 1];
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
                let cur = a.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if !delta.is_finite() {
                return Err(Error::Infeasible(format!(
                    "row {} cannot be matched without an infeasible cell",
                    i - 1
                )));
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
    let mut col_of = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            col_of[owner[j] - 1] = j - 1;
        }
    }
    Ok(col_of)
}

/// Maximum-cardinality, then minimum-cost matching that only uses feasible
/// cells. Never fails; rows or columns may stay unmatched.
pub fn hungarian_partial(costs: &CostMatrix) -> Assignment {
    let (n, m) = (costs.rows(), costs.cols());
    if n == 0 || m == 0 {
        return Assignment { pairs: Vec::new(), total: 0.0 };
    }
    let finite_sum: f64 = (0..n)
        .flat_map(|r| (0..m).map(move |c| (r, c)))
        .map(|(r, c)| costs.get(r, c))
        .filter(|v| v.is_finite())
        .map(f64::abs)
        .sum();
    // leaving a row unmatched must cost more than any set of real matches
    let penalty = 2.0 * finite_sum + 1.0;
    let mut padded = CostMatrix::filled(n, m + n, f64::INFINITY);
    for r in 0..n {
        for c in 0..m {
            padded.set(r, c, costs.get(r, c));
        }
        padded.set(r, m + r, penalty);
    }
    let full = hungarian(&padded).expect("padded matrix always has a feasible matching");
    let pairs = full.pairs.into_iter().filter(|&(_, c)| c < m).collect();
    Assignment::from_pairs(costs, pairs)
}

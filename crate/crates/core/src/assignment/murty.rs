use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::cost::{Assignment, CostMatrix};
use super::hungarian::hungarian;
use crate::error::Result;

/// A solved subproblem of Murty's partitioning.
struct Node {
    total: f64,
    /// Column of each row of the (possibly transposed) working matrix.
    cols: Vec<usize>,
    /// Assignment in the caller's orientation; used for tie ordering.
    key: Vec<Option<usize>>,
    forced: Vec<(usize, usize)>,
    forbidden: Vec<(usize, usize)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // reversed so BinaryHeap pops the cheapest, then lexicographically
    // smallest assignment
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .total
            .total_cmp(&self.total)
            .then_with(|| other.key.cmp(&self.key))
    }
}

/// The `k` lowest-cost complete assignments in nondecreasing cost order
/// (ties ordered by the row-to-column vector). `k = usize::MAX` enumerates
/// every feasible assignment.
pub fn murty_kbest(costs: &CostMatrix, k: usize) -> Result<Vec<Assignment>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let transposed = costs.rows() > costs.cols();
    let work = if transposed { costs.transpose() } else { costs.clone() };

    let to_assignment = |cols: &[usize]| -> Assignment {
        let pairs = cols
            .iter()
            .enumerate()
            .map(|(r, &c)| if transposed { (c, r) } else { (r, c) })
            .collect();
        Assignment::from_pairs(costs, pairs)
    };
    let key_of = |a: &Assignment| a.row_to_col(costs.rows());

    let solve = |forced: &[(usize, usize)], forbidden: &[(usize, usize)]| -> Option<Vec<usize>> {
        let mut m = work.clone();
        for &(r, c) in forbidden {
            m.set_infeasible(r, c);
        }
        for &(r, c) in forced {
            for j in 0..m.cols() {
                if j != c {
                    m.set_infeasible(r, j);
                }
            }
            for i in 0..m.rows() {
                if i != r {
                    m.set_infeasible(i, c);
                }
            }
        }
        let a = hungarian(&m).ok()?;
        let mut cols = vec![0; m.rows()];
        for (r, c) in a.pairs {
            cols[r] = c;
        }
        Some(cols)
    };

    let first = hungarian(&work)?;
    let mut cols = vec![0; work.rows()];
    for (r, c) in first.pairs {
        cols[r] = c;
    }
    let a0 = to_assignment(&cols);
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        total: a0.total,
        key: key_of(&a0),
        cols,
        forced: Vec::new(),
        forbidden: Vec::new(),
    });

    let mut out = Vec::new();
    while let Some(node) = heap.pop() {
        let a = to_assignment(&node.cols);
        out.push(a);
        if out.len() >= k {
            break;
        }
        let free: Vec<usize> = (0..work.rows())
            .filter(|r| !node.forced.iter().any(|(fr, _)| fr == r))
            .collect();
        let mut forced = node.forced.clone();
        for &r in &free {
            let mut forbidden = node.forbidden.clone();
            forbidden.push((r, node.cols[r]));
            if let Some(cols) = solve(&forced, &forbidden) {
                let a = to_assignment(&cols);
                heap.push(Node {
                    total: a.total,
                    key: key_of(&a),
                    cols,
                    forced: forced.clone(),
                    forbidden,
                });
            }
            forced.push((r, node.cols[r]));
        }
    }
    Ok(out)
}

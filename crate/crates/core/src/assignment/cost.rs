use crate::error::{Error, Result};

/// Dense row-major cost matrix. Infeasible cells hold `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "cost matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() || **v == f64::INFINITY)) {
            return Err(Error::invalid(format!("cost matrix entry {v} is neither finite nor +inf")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("ragged cost matrix rows"));
        }
        Self::new(n, m, rows.concat())
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn set_infeasible(&mut self, r: usize, c: usize) {
        self.set(r, c, f64::INFINITY);
    }

    pub fn is_feasible(&self, r: usize, c: usize) -> bool {
        self.get(r, c).is_finite()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::filled(self.cols, self.rows, 0.0);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }
}

/// A matching as `(row, col)` pairs sorted by row, with its total cost
/// summed in row order.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

impl Assignment {
    pub(crate) fn from_pairs(costs: &CostMatrix, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        let total = pairs.iter().map(|&(r, c)| costs.get(r, c)).sum();
        Self { pairs, total }
    }

    /// Column assigned to each row, `None` for unassigned rows.
    pub fn row_to_col(&self, rows: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; rows];
        for &(r, c) in &self.pairs {
            out[r] = Some(c);
        }
        out
    }
}

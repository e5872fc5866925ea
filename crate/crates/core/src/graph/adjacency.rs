use crate::error::{shape_err, Result};
use crate::graph::Graph;
use crate::numerics::Matrix;

/// Sparse symmetric normalized adjacency `D̃^{-1/2}(A+I)D̃^{-1/2}` in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAdj {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

pub fn normalize_adjacency(g: &Graph) -> NormAdj {
    let n = g.n();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / ((g.degree(i) + 1) as f64).sqrt())
        .collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(2 * g.num_edges() + n);
    let mut values = Vec::with_capacity(2 * g.num_edges() + n);
    row_ptr.push(0);
    for i in 0..n {
        let nbrs = g.neighbors(i);
        let split = nbrs.partition_point(|&j| j < i);
        let row = nbrs[..split]
            .iter()
            .copied()
            .chain(std::iter::once(i))
            .chain(nbrs[split..].iter().copied());
        for j in row {
            col_idx.push(j);
            values.push(inv_sqrt[i] * inv_sqrt[j]);
        }
        row_ptr.push(col_idx.len());
    }
    NormAdj {
        n,
        row_ptr,
        col_idx,
        values,
    }
}

impl NormAdj {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` entries of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// `Â · x` for a dense `x` with `n` rows.
    pub fn spmm(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.n {
            return Err(shape_err!(
                "spmm: adjacency is {0}x{0}, operand has {1} rows",
                self.n,
                x.rows()
            ));
        }
        let mut out = Matrix::zeros(self.n, x.cols());
        for i in 0..self.n {
            let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let dst = out.row_mut(i);
            for k in start..end {
                let a = self.values[k];
                for (d, s) in dst.iter_mut().zip(x.row(self.col_idx[k])) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m.set(i, j, v);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::from_edges;

    #[test]
    fn single_edge_is_all_halves() {
        let a = normalize_adjacency(&from_edges(2, &[(0, 1)])).to_dense();
        assert!(a.data().iter().all(|&x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn isolated_node_keeps_unit_self_loop() {
        let a = normalize_adjacency(&from_edges(3, &[(0, 1)])).to_dense();
        assert_eq!(a.get(2, 2), 1.0);
        assert_eq!(a.get(2, 0), 0.0);
    }

    #[test]
    fn triangle_is_uniform_thirds() {
        let a = normalize_adjacency(&from_edges(3, &[(0, 1), (1, 2), (0, 2)])).to_dense();
        for x in a.data() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_and_spmm_matches_dense() {
        let g = from_edges(6, &[(0, 1), (0, 2), (2, 3), (3, 4), (1, 4), (4, 5)]);
        let a = normalize_adjacency(&g);
        let d = a.to_dense();
        for i in 0..6 {
            for j in 0..6 {
                assert!((d.get(i, j) - d.get(j, i)).abs() < 1e-12);
            }
        }
        let x = Matrix::from_fn(6, 3, |i, j| (i as f64) * 0.5 - j as f64);
        let sparse = a.spmm(&x).unwrap();
        let dense = d.matmul(&x).unwrap();
        assert!(sparse.sub(&dense).unwrap().max_abs() < 1e-12);
        assert!(a.spmm(&Matrix::zeros(5, 1)).is_err());
    }
}

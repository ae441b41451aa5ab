//! Small sparse-matrix helpers on top of faer.
//!
//! Assembly accumulates triplets into a [`CooMat`]; duplicates are summed in a
//! deterministic (sorted) order before conversion, so serial assembly is
//! bit-reproducible.

use faer::sparse::SparseColMat;
use faer::{Col, Mat};
use std::io::Write;

pub type SpMat = SparseColMat<usize, f64>;

#[derive(Debug, Clone)]
pub struct CooMat {
    pub nrows: usize,
    pub ncols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl CooMat {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        CooMat { nrows, ncols, triplets: Vec::new() }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if value != 0.0 {
            self.triplets.push((row, col, value));
        }
    }

    /// Sorted, duplicate-summed CSC matrix.
    pub fn into_csc(mut self) -> SpMat {
        self.triplets.sort_by_key(|&(r, c, _)| (c, r));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(self.triplets.len());
        for (r, c, v) in self.triplets {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        SpMat::try_new_from_triplets(self.nrows, self.ncols, &merged)
            .expect("valid triplets")
    }
}

/// Dense copy of a sparse matrix.
pub fn to_dense(m: &SpMat) -> Mat<f64> {
    let mut out = Mat::zeros(m.nrows(), m.ncols());
    for col in 0..m.ncols() {
        for (idx, &row) in m.row_indices_of_col_raw(col).iter().enumerate() {
            let v = m.values_of_col(col)[idx];
            out[(row, col)] += v;
        }
    }
    out
}

/// Transpose as an owned CSC matrix.
pub fn transpose(m: &SpMat) -> SpMat {
    let mut coo = CooMat::new(m.ncols(), m.nrows());
    for col in 0..m.ncols() {
        for (idx, &row) in m.row_indices_of_col_raw(col).iter().enumerate() {
            coo.push(col, row, m.values_of_col(col)[idx]);
        }
    }
    coo.into_csc()
}

/// Linear combination `sum_q coeff_q * m_q` of same-shape sparse matrices.
pub fn linear_combination(terms: &[(f64, &SpMat)]) -> SpMat {
    assert!(!terms.is_empty());
    let (nrows, ncols) = (terms[0].1.nrows(), terms[0].1.ncols());
    let mut coo = CooMat::new(nrows, ncols);
    for &(theta, m) in terms {
        assert_eq!((m.nrows(), m.ncols()), (nrows, ncols), "shape mismatch");
        for col in 0..ncols {
            for (idx, &row) in m.row_indices_of_col_raw(col).iter().enumerate() {
                coo.push(row, col, theta * m.values_of_col(col)[idx]);
            }
        }
    }
    coo.into_csc()
}

/// Sparse matrix-vector product.
pub fn spmv(m: &SpMat, x: &Col<f64>) -> Col<f64> {
    assert_eq!(m.ncols(), x.nrows());
    let mut out = Col::zeros(m.nrows());
    for col in 0..m.ncols() {
        let xv = x[col];
        if xv == 0.0 {
            continue;
        }
        for (idx, &row) in m.row_indices_of_col_raw(col).iter().enumerate() {
            out[row] += m.values_of_col(col)[idx] * xv;
        }
    }
    out
}

/// Quadratic form `y^T M x`.
pub fn quad_form(y: &Col<f64>, m: &SpMat, x: &Col<f64>) -> f64 {
    let mx = spmv(m, x);
    let mut acc = 0.0;
    for i in 0..y.nrows() {
        acc += y[i] * mx[i];
    }
    acc
}

/// Extracts the submatrix with the given rows and columns (kept in order).
pub fn submatrix(m: &SpMat, rows: &[usize], cols: &[usize]) -> SpMat {
    let mut row_pos = vec![usize::MAX; m.nrows()];
    for (k, &r) in rows.iter().enumerate() {
        row_pos[r] = k;
    }
    let mut coo = CooMat::new(rows.len(), cols.len());
    for (k, &c) in cols.iter().enumerate() {
        for (idx, &row) in m.row_indices_of_col_raw(c).iter().enumerate() {
            if row_pos[row] != usize::MAX {
                coo.push(row_pos[row], k, m.values_of_col(c)[idx]);
            }
        }
    }
    coo.into_csc()
}

/// Sparse matrix times dense matrix.
pub fn spmm(m: &SpMat, x: faer::MatRef<f64>) -> Mat<f64> {
    assert_eq!(m.ncols(), x.nrows());
    let mut out = Mat::zeros(m.nrows(), x.ncols());
    for j in 0..x.ncols() {
        for col in 0..m.ncols() {
            let xv = x[(col, j)];
            if xv == 0.0 {
                continue;
            }
            for (idx, &row) in m.row_indices_of_col_raw(col).iter().enumerate() {
                out[(row, j)] += m.values_of_col(col)[idx] * xv;
            }
        }
    }
    out
}

/// Galerkin projection `Z_l^T M Z_r` of a sparse operator onto dense bases.
pub fn project(zl: faer::MatRef<f64>, m: &SpMat, zr: faer::MatRef<f64>) -> Mat<f64> {
    zl.transpose() * spmm(m, zr)
}

/// Relative Frobenius distance between two sparse matrices.
pub fn rel_frobenius_gap(a: &SpMat, b: &SpMat) -> f64 {
    let (da, db) = (to_dense(a), to_dense(b));
    let diff = &da - &db;
    let denom = da.norm_l2().max(1e-300);
    diff.norm_l2() / denom
}

/// Writes a sparse matrix in MatrixMarket coordinate format.
pub fn write_matrix_market<W: Write>(m: &SpMat, mut w: W) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.compute_nnz())?;
    for col in 0..m.ncols() {
        for (idx, &row) in m.row_indices_of_col_raw(col).iter().enumerate() {
            writeln!(w, "{} {} {:.17e}", row + 1, col + 1, m.values_of_col(col)[idx])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coo_sums_duplicates() {
        let mut coo = CooMat::new(2, 2);
        coo.push(0, 0, 1.0);
        coo.push(1, 1, 2.0);
        coo.push(0, 0, 3.0);
        let m = coo.into_csc();
        let d = to_dense(&m);
        assert_eq!(d[(0, 0)], 4.0);
        assert_eq!(d[(1, 1)], 2.0);
        assert_eq!(d[(0, 1)], 0.0);
    }

    #[test]
    fn spmv_and_transpose() {
        let mut coo = CooMat::new(2, 3);
        coo.push(0, 0, 1.0);
        coo.push(0, 2, 2.0);
        coo.push(1, 1, -1.0);
        let m = coo.into_csc();
        let x = Col::from_fn(3, |i| (i + 1) as f64);
        let y = spmv(&m, &x);
        assert_eq!(y[0], 1.0 + 6.0);
        assert_eq!(y[1], -2.0);
        let t = transpose(&m);
        assert_eq!((t.nrows(), t.ncols()), (3, 2));
        assert_eq!(to_dense(&t)[(2, 0)], 2.0);
    }

    #[test]
    fn submatrix_extracts() {
        let mut coo = CooMat::new(3, 3);
        for i in 0..3 {
            coo.push(i, i, (i + 1) as f64);
        }
        let m = coo.into_csc();
        let s = submatrix(&m, &[0, 2], &[0, 2]);
        let d = to_dense(&s);
        assert_eq!(d[(0, 0)], 1.0);
        assert_eq!(d[(1, 1)], 3.0);
    }
}

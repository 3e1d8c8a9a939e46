//! Small dense/sparse helpers shared across the crate.
//!
//! Symmetric matrices are packed as `svec`: the upper triangle stored column
//! by column with off-diagonal entries scaled by `sqrt(2)`, so that
//! `svec(A) . svec(B) == trace(A B)`.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::SQRT_2;

/// Length of the packed triangle of a `side x side` symmetric matrix.
pub fn svec_len(side: usize) -> usize {
    side * (side + 1) / 2
}

/// Position of entry `(i, j)` (either order) inside the packed triangle.
pub fn svec_index(i: usize, j: usize) -> usize {
    let (row, col) = if i <= j { (i, j) } else { (j, i) };
    col * (col + 1) / 2 + row
}

/// Recovers the side of a packed triangle, if `len` is triangular.
pub fn svec_side(len: usize) -> Option<usize> {
    let side = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (svec_len(side) == len).then_some(side)
}

pub fn svec(mat: &DMatrix<f64>) -> Vec<f64> {
    let n = mat.nrows();
    let mut out = Vec::with_capacity(svec_len(n));
    for col in 0..n {
        for row in 0..=col {
            if row == col {
                out.push(mat[(row, col)]);
            } else {
                out.push((mat[(row, col)] + mat[(col, row)]) / SQRT_2);
            }
        }
    }
    out
}

pub fn smat(packed: &[f64]) -> DMatrix<f64> {
    let side = svec_side(packed.len()).expect("packed length is not triangular");
    let mut mat = DMatrix::zeros(side, side);
    let mut idx = 0;
    for col in 0..side {
        for row in 0..=col {
            if row == col {
                mat[(row, col)] = packed[idx];
            } else {
                let v = packed[idx] / SQRT_2;
                mat[(row, col)] = v;
                mat[(col, row)] = v;
            }
            idx += 1;
        }
    }
    mat
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(mat: &DMatrix<f64>) -> f64 {
    if mat.nrows() == 0 {
        return 0.0;
    }
    let eig = mat.clone().symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Sparse vector as `(index, value)` pairs, sorted by index with no repeats.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVec {
    entries: Vec<(usize, f64)>,
}

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from arbitrary pairs: sums repeated indices and drops zeros.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut entries: Vec<(usize, f64)> = pairs.into_iter().collect();
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        Self { entries: merged }
    }

    pub fn unit(index: usize) -> Self {
        Self {
            entries: vec![(index, 1.0)],
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self::from_pairs(values.iter().copied().enumerate())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_pairs(self.entries.iter().map(|&(i, v)| (i, v * factor)))
    }

    pub fn shifted(&self, offset: usize) -> Self {
        Self {
            entries: self.entries.iter().map(|&(i, v)| (i + offset, v)).collect(),
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, &(_, v)| m.max(v.abs()))
    }

    pub fn to_dense(&self, len: usize) -> DVector<f64> {
        let mut out = DVector::zeros(len);
        for &(i, v) in &self.entries {
            out[i] += v;
        }
        out
    }

    /// `mat^T * self` for a dense matrix whose rows are indexed like `self`.
    pub fn project(&self, mat: &DMatrix<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(mat.ncols());
        for &(i, v) in &self.entries {
            out.axpy(v, &mat.row(i).transpose(), 1.0);
        }
        out
    }

    /// Canonical key: rescaled to unit infinity norm, values quantised to
    /// their bit patterns. Equal keys mean identical rows up to positive scaling.
    pub fn canonical_key(&self) -> Vec<(usize, u64)> {
        let scale = self.norm_inf();
        if scale == 0.0 {
            return Vec::new();
        }
        self.entries
            .iter()
            .map(|&(i, v)| {
                let q = (v / scale * 1e12).round() / 1e12;
                (i, q.to_bits())
            })
            .collect()
    }
}

/// Affine scalar function `constant + coefs . v`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Affine {
    pub coefs: SparseVec,
    pub constant: f64,
}

impl Affine {
    pub fn new(coefs: SparseVec, constant: f64) -> Self {
        Self { coefs, constant }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            coefs: SparseVec::new(),
            constant: value,
        }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        self.constant + self.coefs.dot(v)
    }
}

pub fn norm_inf(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Orthonormal basis of the null space of `mat` (columns of the result).
///
/// Rows are normalised before the decomposition; singular values below
/// `rel_tol * sigma_max` count as zero.
pub fn null_space(mat: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let cols = mat.ncols();
    let mut scaled = mat.clone();
    for mut row in scaled.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    // Pad the transpose to a square matrix so the left singular vectors span
    // the whole column space of the input's row space complement.
    let side = cols.max(scaled.nrows());
    let mut padded = DMatrix::zeros(cols, side);
    padded
        .view_mut((0, 0), (cols, scaled.nrows()))
        .copy_from(&scaled.transpose());
    let svd = padded.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_tol * sigma_max.max(1.0);
    let keep: Vec<usize> = (0..u.ncols())
        .filter(|&k| k >= svd.singular_values.len() || svd.singular_values[k] <= cutoff)
        .collect();
    let mut basis = DMatrix::zeros(cols, keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        basis.set_column(dst, &u.column(src));
    }
    basis
}

/// Null-space basis of `mat` from its reduced row echelon form: one column per
/// free variable, equal to the unit vector on that variable minus the
/// pivot-column combination. Pivots are taken with threshold partial pivoting
/// (`|a| >= 0.1 max |row|`), preferring columns with a lower `priority` class,
/// so high-priority-class variables tend to stay free and their rows of the
/// basis stay unit vectors.
pub fn echelon_null_space(mat: &DMatrix<f64>, priority: &[u8], rel_tol: f64) -> DMatrix<f64> {
    let (rows, cols) = mat.shape();
    assert_eq!(priority.len(), cols);
    let mut work = mat.clone();
    for mut row in work.row_iter_mut() {
        let n = row.amax();
        if n > 0.0 {
            row /= n;
        }
    }
    let mut pivot_of_row: Vec<Option<usize>> = vec![None; rows];
    let mut is_pivot = vec![false; cols];
    for r in 0..rows {
        let rowmax = (0..cols).filter(|&c| !is_pivot[c]).map(|c| work[(r, c)].abs()).fold(0.0, f64::max);
        if rowmax <= rel_tol {
            continue;
        }
        let pc = (0..cols)
            .filter(|&c| !is_pivot[c] && work[(r, c)].abs() >= 0.1 * rowmax)
            .min_by(|&a, &b| {
                priority[a]
                    .cmp(&priority[b])
                    .then(work[(r, b)].abs().total_cmp(&work[(r, a)].abs()))
            })
            .expect("row maximum is attained");
        let pv = work[(r, pc)];
        let pivot_row = work.row(r) / pv;
        work.set_row(r, &pivot_row);
        for other in 0..rows {
            if other != r {
                let f = work[(other, pc)];
                if f != 0.0 {
                    let updated = work.row(other) - &pivot_row * f;
                    work.set_row(other, &updated);
                    work[(other, pc)] = 0.0;
                }
            }
        }
        is_pivot[pc] = true;
        pivot_of_row[r] = Some(pc);
    }
    let free: Vec<usize> = (0..cols).filter(|&c| !is_pivot[c]).collect();
    let mut basis = DMatrix::zeros(cols, free.len());
    for (k, &f) in free.iter().enumerate() {
        basis[(f, k)] = 1.0;
        for r in 0..rows {
            if let Some(pc) = pivot_of_row[r] {
                let v = work[(r, f)];
                if v.abs() > 1e-14 {
                    basis[(pc, k)] = -v;
                }
            }
        }
    }
    basis
}

/// Numerical rank of a dense matrix.
pub fn rank(mat: &DMatrix<f64>, rel_tol: f64) -> usize {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return 0;
    }
    let sv = mat.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echelon_basis_spans_null_space() {
        let k = DMatrix::from_row_slice(3, 5, &[1.0, 2.0, 0.0, -1.0, 3.0, 0.0, 1.0, 1.0, 0.0, 2.0, 1.0, 3.0, 1.0, -1.0, 5.0]);
        let v = echelon_null_space(&k, &[0, 0, 1, 1, 1], 1e-12);
        assert_eq!(v.ncols(), 5 - rank(&k, 1e-12));
        assert!((&k * &v).amax() < 1e-12);
        assert_eq!(rank(&v, 1e-12), v.ncols());
        // Priority keeps the last three columns free: their rows are units.
        for r in 2..5 {
            assert_eq!(v.row(r).iter().filter(|x| x.abs() > 0.0).count(), 1);
        }
    }

    #[test]
    fn svec_roundtrip_preserves_inner_product() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 5.0, -1.0, 3.0, -1.0, 4.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.5, 1.0, 0.0, 1.0, -2.0, 7.0, 0.0, 7.0, 1.0]);
        let lhs: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
        let rhs = (&a * &b).trace();
        assert!((lhs - rhs).abs() < 1e-12);
        assert!((smat(&svec(&a)) - &a).norm() < 1e-12);
        assert_eq!(svec_index(1, 2), svec_index(2, 1));
        assert_eq!(svec_side(6), Some(3));
        assert_eq!(svec_side(7), None);
    }

    #[test]
    fn null_space_is_orthonormal_and_annihilated() {
        let k = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 6000.0, -1.0]);
        let v = null_space(&k, 1e-10);
        assert_eq!(v.ncols(), 2);
        assert!((&k * &v).norm() < 1e-8);
        let gram = v.transpose() * &v;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn sparse_vec_merges_duplicates() {
        let s = SparseVec::from_pairs([(3, 1.0), (1, 2.0), (3, -1.0), (0, 0.5)]);
        assert_eq!(s.entries(), &[(0, 0.5), (1, 2.0)]);
        assert_eq!(s.canonical_key(), s.scaled(4.0).canonical_key());
    }
}

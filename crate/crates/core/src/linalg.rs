//! Dense linear-algebra helpers shared by the estimators and the simulator.

use nalgebra::{DMatrix, DVector};

/// Eigenpairs of a symmetric matrix, eigenvalues sorted in descending order.
///
/// Each eigenvector's sign is fixed so that its largest-magnitude entry is
/// positive (ties resolved towards the lowest index).
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector of `values[i]`.
    pub vectors: DMatrix<f64>,
}

pub fn symmetric_eigen(m: &DMatrix<f64>) -> SymmetricEigen {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        fix_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    SymmetricEigen { values, vectors }
}

pub(crate) fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        // Small relative slack so near-ties resolve deterministically.
        if x.abs() > best_abs * (1.0 + 1e-9) {
            best_abs = x.abs();
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Nonzero spectrum of `scale * rowsᵀ rows`.
///
/// `rows` is `r × m`; the returned vectors are `m`-dimensional unit vectors.
/// When `r < m` the small dual Gram matrix `scale * rows rowsᵀ` is
/// decomposed and the lifted vectors are re-orthonormalised in order.
/// Eigenvalues below `1e-13 * λ_max` are dropped; all further eigenvalues of
/// the `m × m` matrix are zero.
pub fn gram_eigen(rows: &DMatrix<f64>, scale: f64) -> SymmetricEigen {
    let m = rows.ncols();
    if rows.nrows() == 0 || m == 0 {
        return SymmetricEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(m, 0),
        };
    }
    let primal = rows.nrows() >= m;
    let small = if primal {
        symmetric_eigen(&(rows.transpose() * rows * scale))
    } else {
        symmetric_eigen(&(rows * rows.transpose() * scale))
    };
    let top = small.values.first().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..small.values.len())
        .filter(|&i| top > 0.0 && small.values[i] > 1e-13 * top)
        .collect();
    let mut vectors = DMatrix::zeros(m, keep.len());
    let mut values = Vec::with_capacity(keep.len());
    for (dst, &i) in keep.iter().enumerate() {
        let mut v = if primal {
            small.vectors.column(i).clone_owned()
        } else {
            let mut v = rows.transpose() * small.vectors.column(i);
            for prev in 0..dst {
                let c = vectors.column(prev).dot(&v);
                v.axpy(-c, &vectors.column(prev), 1.0);
            }
            v
        };
        let norm = v.norm();
        v /= norm;
        fix_sign(&mut v);
        vectors.set_column(dst, &v);
        values.push(small.values[i]);
    }
    SymmetricEigen { values, vectors }
}

/// Low-rank pivoted Cholesky factor `L` (`n × r`) with `A ≈ L Lᵀ`.
///
/// Stops once the largest remaining diagonal residual drops below
/// `rel_tol * max_diag`. Entries are supplied lazily so that large kernels
/// never need to be materialised.
pub fn pivoted_cholesky<F>(n: usize, entry: F, rel_tol: f64, max_rank: usize) -> DMatrix<f64>
where
    F: Fn(usize, usize) -> f64,
{
    let mut resid: Vec<f64> = (0..n).map(|i| entry(i, i)).collect();
    let max_diag = resid.iter().cloned().fold(0.0_f64, f64::max);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    if max_diag <= 0.0 {
        return DMatrix::zeros(n, 0);
    }
    let limit = max_rank.min(n);
    while cols.len() < limit {
        let (piv, &best) = resid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        if best <= rel_tol * max_diag {
            break;
        }
        let pivot_root = best.sqrt();
        let mut col = vec![0.0; n];
        for (i, c) in col.iter_mut().enumerate() {
            if resid[i] <= 0.0 && i != piv {
                continue;
            }
            let mut v = entry(i, piv);
            for prev in &cols {
                v -= prev[i] * prev[piv];
            }
            *c = v / pivot_root;
        }
        col[piv] = pivot_root;
        for i in 0..n {
            resid[i] -= col[i] * col[i];
        }
        resid[piv] = 0.0;
        cols.push(col);
    }
    let r = cols.len();
    DMatrix::from_fn(n, r, |i, k| cols[k][i])
}

/// Nearest-rank (type 1) empirical quantile of unsorted data.
pub fn nearest_rank_quantile(data: &[f64], p: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    v[rank - 1]
}

/// Linear-interpolation (type 7) empirical quantile of unsorted data.
pub fn linear_quantile(data: &[f64], p: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    sorted_linear_quantile(&v, p)
}

pub(crate) fn sorted_linear_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_follow_their_definitions() {
        let data = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(nearest_rank_quantile(&data, 0.75), 3.0);
        assert_eq!(nearest_rank_quantile(&data, 0.25), 1.0);
        assert!((linear_quantile(&data, 0.75) - 3.25).abs() < 1e-15);
        assert!((linear_quantile(&data, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn gram_eigen_matches_dense_eigen() {
        let rows = DMatrix::from_fn(3, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * j as f64);
        let dense = symmetric_eigen(&(rows.transpose() * &rows * 0.5));
        let dual = gram_eigen(&rows, 0.5);
        assert_eq!(dual.values.len(), 3);
        for k in 0..3 {
            assert!((dual.values[k] - dense.values[k]).abs() < 1e-10);
            let dot = dual.vectors.column(k).dot(&dense.vectors.column(k));
            assert!((dot.abs() - 1.0).abs() < 1e-9);
        }
        assert!(dense.values[3].abs() < 1e-10);
    }

    #[test]
    fn pivoted_cholesky_reconstructs_psd_matrix() {
        let b = DMatrix::from_fn(8, 3, |i, j| ((i + 1) as f64).powi(j as i32 + 1).sin());
        let a = &b * b.transpose();
        let l = pivoted_cholesky(8, |i, j| a[(i, j)], 1e-14, 8);
        assert_eq!(l.ncols(), 3);
        assert!((&l * l.transpose() - &a).abs().max() < 1e-10);
    }

    #[test]
    fn eigenvector_sign_convention() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let e = symmetric_eigen(&m);
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        for k in 0..2 {
            let col = e.vectors.column(k);
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
        }
    }
}

//! Piecewise-constant symmetric kernels on `[0, M]²`.
//!
//! A [`StepKernel`] with cell width `Δn` and value matrix `K` represents the
//! integral operator `(T_k h)(x) = ∫ k(x, y) h(y) dy`. In the orthonormal cell
//! basis `1_cell / √Δn` that operator is the symmetric matrix `Δn · K`, which
//! is what every spectral routine here works with.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram_eigen, symmetric_eigen, SymmetricEigen};

const SYMMETRY_TOL: f64 = 1e-10;
const ORTHONORMAL_TOL: f64 = 1e-8;
const NEGATIVE_EIGEN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct StepKernel {
    delta_n: f64,
    values: DMatrix<f64>,
}

impl StepKernel {
    /// Builds a kernel from its cell values, symmetrizing tiny asymmetries.
    pub fn new(delta_n: f64, values: DMatrix<f64>) -> Result<Self> {
        if !(delta_n > 0.0) {
            return Err(Error::config(format!("delta_n must be positive, got {delta_n}")));
        }
        if values.nrows() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.nrows(),
                actual: values.ncols(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("kernel has non-finite values"));
        }
        let scale = values.amax();
        let asym = (&values - values.transpose()).amax();
        if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) && asym > 0.0 {
            return Err(Error::numerical(format!(
                "kernel asymmetry {asym:.3e} exceeds tolerance (max |value| {scale:.3e})"
            )));
        }
        let values = if asym > 0.0 {
            (&values + values.transpose()) * 0.5
        } else {
            values
        };
        Ok(StepKernel { delta_n, values })
    }

    pub fn zeros(delta_n: f64, m_cells: usize) -> Self {
        StepKernel {
            delta_n,
            values: DMatrix::zeros(m_cells, m_cells),
        }
    }

    /// Kernel `scale · rowsᵀ rows` (symmetric by construction).
    pub fn from_gram(delta_n: f64, rows: &DMatrix<f64>, scale: f64) -> Self {
        let mut values = rows.transpose() * rows;
        values *= scale;
        // Exact symmetry regardless of the multiplication kernel's rounding.
        let n = values.nrows();
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (values[(i, j)] + values[(j, i)]);
                values[(i, j)] = v;
                values[(j, i)] = v;
            }
        }
        StepKernel { delta_n, values }
    }

    pub fn delta_n(&self) -> f64 {
        self.delta_n
    }

    pub fn m_cells(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Value at `(x, y)` in years; cells are closed on the left.
    pub fn value_at(&self, x: f64, y: f64) -> Result<f64> {
        let i = self.cell_of(x)?;
        let j = self.cell_of(y)?;
        Ok(self.values[(i, j)])
    }

    pub(crate) fn cell_of(&self, x: f64) -> Result<usize> {
        let extent = self.delta_n * self.m_cells() as f64;
        if !(x >= 0.0 && x <= extent * (1.0 + 1e-12)) {
            return Err(Error::config(format!("maturity {x} outside [0, {extent}]")));
        }
        Ok(((x / self.delta_n).floor() as usize).min(self.m_cells() - 1))
    }

    fn check_same_grid(&self, other: &StepKernel) -> Result<()> {
        if self.m_cells() != other.m_cells() {
            return Err(Error::DimensionMismatch {
                expected: self.m_cells(),
                actual: other.m_cells(),
            });
        }
        if (self.delta_n - other.delta_n).abs() > 1e-12 * self.delta_n {
            return Err(Error::config(format!(
                "kernel grids differ: delta_n {} vs {}",
                self.delta_n, other.delta_n
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &StepKernel) -> Result<StepKernel> {
        self.check_same_grid(other)?;
        Ok(StepKernel {
            delta_n: self.delta_n,
            values: &self.values + &other.values,
        })
    }

    pub fn sub(&self, other: &StepKernel) -> Result<StepKernel> {
        self.check_same_grid(other)?;
        Ok(StepKernel {
            delta_n: self.delta_n,
            values: &self.values - &other.values,
        })
    }

    pub fn scaled(&self, c: f64) -> StepKernel {
        StepKernel {
            delta_n: self.delta_n,
            values: &self.values * c,
        }
    }

    /// `Δn · Σ_j values[j][j]`, the operator trace.
    pub fn trace(&self) -> f64 {
        self.delta_n * self.values.trace()
    }
}

/// A family of step functions on the maturity grid, one per column of
/// `heights` (the function's value on each cell).
#[derive(Debug, Clone, PartialEq)]
pub struct StepBasis {
    pub delta_n: f64,
    pub heights: DMatrix<f64>,
}

impl StepBasis {
    pub fn new(delta_n: f64, heights: DMatrix<f64>) -> Self {
        StepBasis { delta_n, heights }
    }

    /// Basis from unit vectors of the cell-coordinate space.
    pub fn from_unit_vectors(delta_n: f64, vectors: DMatrix<f64>) -> Self {
        StepBasis {
            delta_n,
            heights: vectors / delta_n.sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.heights.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.ncols() == 0
    }

    pub fn m_cells(&self) -> usize {
        self.heights.nrows()
    }

    /// First `k` functions.
    pub fn truncated(&self, k: usize) -> StepBasis {
        let k = k.min(self.len());
        StepBasis {
            delta_n: self.delta_n,
            heights: self.heights.columns(0, k).clone_owned(),
        }
    }

    /// Gram matrix of L² inner products `⟨e_a, e_b⟩`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.heights.transpose() * &self.heights * self.delta_n
    }

    pub fn check_orthonormal(&self) -> Result<()> {
        let g = self.gram();
        let dev = (g - DMatrix::identity(self.len(), self.len())).amax();
        if dev > ORTHONORMAL_TOL {
            return Err(Error::numerical(format!(
                "basis is not orthonormal (max Gram deviation {dev:.3e})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Descending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Eigenfunctions as step functions, orthonormal in `L²[0, M]`.
    pub eigenfunctions: StepBasis,
}

impl SpectralDecomposition {
    fn from_matrix_eigen(delta_n: f64, eig: SymmetricEigen) -> Self {
        SpectralDecomposition {
            eigenvalues: eig.values,
            eigenfunctions: StepBasis::from_unit_vectors(delta_n, eig.vectors),
        }
    }

    /// Kernel `Σ λ_i e_i(x) e_i(y)` over the first `k` eigenpairs.
    pub fn reconstruct(&self, k: usize) -> StepKernel {
        let k = k.min(self.eigenvalues.len());
        let h = self.eigenfunctions.heights.columns(0, k);
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.eigenvalues[..k]));
        StepKernel {
            delta_n: self.eigenfunctions.delta_n,
            values: h * lam * h.transpose(),
        }
    }
}

/// `‖k‖_{L²([0,M]²)} = Δn · ‖values‖_F`, equal to the Hilbert–Schmidt norm of `T_k`.
pub fn hs_norm(k: &StepKernel) -> f64 {
    k.delta_n * k.values.norm()
}

/// Full spectrum of `T_k` (dense symmetric eigensolver on `Δn · values`).
pub fn eigendecompose(k: &StepKernel) -> SpectralDecomposition {
    let op = &k.values * k.delta_n;
    SpectralDecomposition::from_matrix_eigen(k.delta_n, symmetric_eigen(&op))
}

/// Nonzero spectrum of the kernel `scale · rowsᵀ rows` without forming it.
///
/// Equivalent to `eigendecompose(&StepKernel::from_gram(delta_n, rows, scale))`
/// restricted to the (at most `rows.nrows()`) nonzero eigenvalues.
pub fn eigendecompose_gram(delta_n: f64, rows: &DMatrix<f64>, scale: f64) -> SpectralDecomposition {
    SpectralDecomposition::from_matrix_eigen(delta_n, gram_eigen(rows, scale * delta_n))
}

/// Clips noise-level negative eigenvalues; rejects genuinely indefinite spectra.
fn clipped_spectrum(values: &[f64]) -> Result<Vec<f64>> {
    let top = values.iter().cloned().fold(0.0_f64, f64::max);
    let mut clipped = 0usize;
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        if v < -NEGATIVE_EIGEN_TOL * top {
            return Err(Error::numerical(format!(
                "operator is not positive semidefinite: eigenvalue {v:.3e} vs λ₁ = {top:.3e}"
            )));
        }
        if v < 0.0 {
            clipped += 1;
        }
        out.push(v.max(0.0));
    }
    if clipped > 0 {
        log::debug!("clipped {clipped} slightly negative eigenvalues to zero");
    }
    Ok(out)
}

/// `min { d : Σ_{i≤d} w_i / Σ_i w_i > p }` for already ordered weights.
pub fn dimension_from_weights(weights: &[f64], p: f64) -> Result<usize> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::config(format!("explained fraction must lie in (0, 1), got {p}")));
    }
    let w = clipped_spectrum(weights)?;
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::numerical("non-positive trace in explained-dimension computation"));
    }
    let mut acc = 0.0;
    for (i, x) in w.iter().enumerate() {
        acc += x;
        if acc / total > p {
            return Ok(i + 1);
        }
    }
    // Only reachable through rounding when p is within an ulp of 1.
    Ok(w.len())
}

/// Rayleigh quotients `⟨e_i, T_k e_i⟩` for every function of `basis`.
pub fn rayleigh_quotients(k: &StepKernel, basis: &StepBasis) -> Result<Vec<f64>> {
    if basis.m_cells() != k.m_cells() {
        return Err(Error::DimensionMismatch {
            expected: k.m_cells(),
            actual: basis.m_cells(),
        });
    }
    let dn2 = k.delta_n * k.delta_n;
    let kh = &k.values * &basis.heights;
    Ok((0..basis.len())
        .map(|i| dn2 * basis.heights.column(i).dot(&kh.column(i)))
        .collect())
}

/// Number of basis directions needed to explain more than a fraction `p` of
/// the operator's trace. Without a basis the kernel's own eigenbasis is used.
pub fn explained_dimension(k: &StepKernel, basis: Option<&StepBasis>, p: f64) -> Result<usize> {
    match basis {
        None => dimension_from_weights(&eigendecompose(k).eigenvalues, p),
        Some(b) => {
            b.check_orthonormal()?;
            dimension_from_weights(&rayleigh_quotients(k, b)?, p)
        }
    }
}

/// Kernel of `P T_k P` where `P` is the orthogonal projection onto `basis`.
pub fn project_kernel(k: &StepKernel, basis: &StepBasis) -> Result<StepKernel> {
    if basis.m_cells() != k.m_cells() {
        return Err(Error::DimensionMismatch {
            expected: k.m_cells(),
            actual: basis.m_cells(),
        });
    }
    basis.check_orthonormal()?;
    let h = &basis.heights;
    let dn2 = k.delta_n * k.delta_n;
    // Coefficients ⟨e_a, T_k e_b⟩ = Δn² h_aᵀ K h_b.
    let coeffs = h.transpose() * &k.values * h * dn2;
    StepKernel::new(k.delta_n, h * coeffs * h.transpose())
}

/// `rE(k1, k2) = ‖k1 − k2‖ / ‖k2‖`.
pub fn relative_error(k1: &StepKernel, k2: &StepKernel) -> Result<f64> {
    k1.check_same_grid(k2)?;
    let denom = hs_norm(k2);
    if !(denom > 0.0) {
        return Err(Error::numerical("relative error against a zero kernel"));
    }
    Ok(k1.delta_n * (&k1.values - &k2.values).norm() / denom)
}

/// Metadata written next to an exported kernel matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KernelSidecar {
    pub delta_n: f64,
    pub m_cells: usize,
    pub scaling: String,
}

impl KernelSidecar {
    pub fn for_kernel(k: &StepKernel) -> Self {
        KernelSidecar {
            delta_n: k.delta_n,
            m_cells: k.m_cells(),
            scaling: "includes_delta_n^-2".to_string(),
        }
    }
}

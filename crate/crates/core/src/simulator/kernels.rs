//! Covariance kernels driving the simulated forward curves, as cell-integral
//! matrices `Q[j1][j2] = ∫∫_{cell j1 × cell j2} q(x, y) dx dy`.

use nalgebra::DMatrix;
use statrs::function::erf::erf;

use crate::curve_panel::GridSpec;
use crate::error::{Error, Result};
use crate::kernel_space::StepKernel;
use crate::linalg::pivoted_cholesky;

const CHOLESKY_REL_TOL: f64 = 1e-12;

/// `q(x, y) = c · exp(−a ((x − y)/M)²)` with `c` chosen so that
/// `‖q|_{[0,M]²}‖_{L²} = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    pub a: f64,
    pub max_maturity: f64,
    pub scale: f64,
}

/// `∫₀¹∫₀¹ exp(−b (u − v)²) du dv`.
fn unit_square_gaussian_integral(b: f64) -> f64 {
    if b < 1e-4 {
        return 1.0 - b / 6.0 + b * b / 30.0;
    }
    let rb = b.sqrt();
    std::f64::consts::PI.sqrt() / rb * erf(rb) - (1.0 - (-b).exp()) / b
}

impl GaussianKernel {
    pub fn new(a: f64, max_maturity: f64) -> Result<Self> {
        if !(a > 0.0) || !(max_maturity > 0.0) {
            return Err(Error::config(format!(
                "Gaussian kernel needs a > 0 and M > 0, got a = {a}, M = {max_maturity}"
            )));
        }
        let sq_norm = max_maturity * max_maturity * unit_square_gaussian_integral(2.0 * a);
        Ok(GaussianKernel {
            a,
            max_maturity,
            scale: 1.0 / sq_norm.sqrt(),
        })
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let u = (x - y) / self.max_maturity;
        self.scale * (-self.a * u * u).exp()
    }

    /// Cell integrals as a function of the lag `|j1 − j2|`, `0..cells`, by
    /// 2×2 Gauss–Legendre quadrature per cell pair.
    pub fn lag_integrals(&self, delta_n: f64, cells: usize) -> Vec<f64> {
        let h = 0.5 * delta_n / 3f64.sqrt();
        let w = 0.25 * delta_n * delta_n;
        (0..cells)
            .map(|k| {
                let lag = k as f64 * delta_n;
                let mut s = 0.0;
                for sa in [-h, h] {
                    for sb in [-h, h] {
                        s += self.value(lag + sa, sb);
                    }
                }
                w * s
            })
            .collect()
    }
}

/// Dense cell-integral matrix of the normalized Gaussian kernel.
pub fn gaussian_cov_matrix(a: f64, grid: &GridSpec, internal_cells: usize) -> Result<DMatrix<f64>> {
    let k = GaussianKernel::new(a, grid.max_maturity)?;
    let t = k.lag_integrals(grid.delta_n, internal_cells);
    Ok(DMatrix::from_fn(internal_cells, internal_cells, |i, j| t[i.abs_diff(j)]))
}

/// Cell integrals `v_j = e^{−jΔn} − e^{−(j+1)Δn}` of `e^{−x}`.
pub fn exp_cell_integrals(delta_n: f64, cells: usize) -> Vec<f64> {
    (0..cells)
        .map(|j| {
            let x = j as f64 * delta_n;
            (-x).exp() * (1.0 - (-delta_n).exp())
        })
        .collect()
}

/// Normalizing constant `c` of `c · e^{−(x+y)}` on `[0, M]²`.
pub fn exp_kernel_scale(max_maturity: f64) -> f64 {
    2.0 / (1.0 - (-2.0 * max_maturity).exp())
}

/// Rank-one cell-integral matrix `c · v vᵀ` of the normalized `e^{−(x+y)}` kernel.
pub fn exp_cov_matrix(grid: &GridSpec, internal_cells: usize) -> DMatrix<f64> {
    let v = exp_cell_integrals(grid.delta_n, internal_cells);
    let c = exp_kernel_scale(grid.max_maturity);
    DMatrix::from_fn(internal_cells, internal_cells, |i, j| c * v[i] * v[j])
}

/// Low-rank factor `L` with `L Lᵀ ≈ Q` for the Toeplitz cell-integral matrix
/// of the normalized Gaussian kernel, without materializing `Q`.
pub fn gaussian_cov_factor(a: f64, grid: &GridSpec, internal_cells: usize) -> Result<DMatrix<f64>> {
    let k = GaussianKernel::new(a, grid.max_maturity)?;
    let t = k.lag_integrals(grid.delta_n, internal_cells);
    Ok(pivoted_cholesky(
        internal_cells,
        |i, j| t[i.abs_diff(j)],
        CHOLESKY_REL_TOL,
        internal_cells,
    ))
}

/// Step kernel of cell averages `Q[j1][j2] / Δn²` over the first `cells` cells.
pub fn cell_average_kernel(q: &DMatrix<f64>, delta_n: f64, cells: usize) -> Result<StepKernel> {
    if cells > q.nrows() {
        return Err(Error::DimensionMismatch {
            expected: cells,
            actual: q.nrows(),
        });
    }
    StepKernel::new(
        delta_n,
        q.view((0, 0), (cells, cells)).clone_owned() / (delta_n * delta_n),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_space::{eigendecompose, explained_dimension, hs_norm};

    fn grid(dn: f64, m: f64) -> GridSpec {
        GridSpec::new(dn, m, 1.0).unwrap()
    }

    #[test]
    fn unit_square_integral_matches_quadrature() {
        for b in [1e-6, 0.02, 1.0, 100.0] {
            let n = 2000;
            let h = 1.0 / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let d = (i as f64 - j as f64) * h;
                    s += (-b * d * d).exp();
                }
            }
            s *= h * h;
            assert!((s - unit_square_gaussian_integral(b)).abs() < 1e-3, "b = {b}");
        }
    }

    #[test]
    fn small_bandwidth_is_nearly_constant() {
        let q = gaussian_cov_matrix(1e-9, &grid(0.5, 1.0), 2).unwrap();
        let v = q[(0, 0)];
        assert!(q.iter().all(|x| (x - v).abs() < 1e-8 * v));
        // ‖c‖ on [0,1]² = 1 → c = 1, cell integrals 1/4.
        assert!((v - 0.25).abs() < 1e-8);
    }

    #[test]
    fn diagonal_dominance_and_normalization() {
        let g = grid(0.05, 2.0);
        let q = gaussian_cov_matrix(5.0, &g, 40).unwrap();
        for j in 0..40 {
            assert!((0..40).all(|k| q[(j, j)] >= q[(j, k)]));
        }
        let k = cell_average_kernel(&q, g.delta_n, 40).unwrap();
        assert!((hs_norm(&k) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn gaussian_a50_needs_ten_components_at_99_percent() {
        let g = grid(0.01, 10.0);
        let q = gaussian_cov_matrix(50.0, &g, 1000).unwrap();
        let k = cell_average_kernel(&q, g.delta_n, 1000).unwrap();
        assert_eq!(explained_dimension(&k, None, 0.99).unwrap(), 10);
        assert_eq!(explained_dimension(&k, None, 0.85).unwrap(), 5);
    }

    #[test]
    fn exp_kernel_is_rank_one_and_normalized() {
        let g = grid(0.1, 3.0);
        let q = exp_cov_matrix(&g, 30);
        let k = cell_average_kernel(&q, g.delta_n, 30).unwrap();
        let spec = eigendecompose(&k);
        assert!(spec.eigenvalues[1].abs() < 1e-10 * spec.eigenvalues[0]);
        // Cell averages of a smooth kernel: HS norm within O(Δn²) of 1.
        assert!((hs_norm(&k) - 1.0).abs() < 2e-3);
        let c = exp_kernel_scale(3.0);
        for (j1, j2) in [(0usize, 0usize), (3, 7), (29, 1)] {
            let f = |j: usize| (-(j as f64) * 0.1).exp() - (-((j + 1) as f64) * 0.1).exp();
            assert!((q[(j1, j2)] - c * f(j1) * f(j2)).abs() < 1e-12);
        }
    }

    #[test]
    fn exp_kernel_exact_normalization() {
        // Σ_{j1,j2} (c v_{j1} v_{j2})² / Δn² → ‖q‖² as Δn → 0; check via the continuous norm.
        let m = 4.0;
        let c = exp_kernel_scale(m);
        let sq = c * c * ((1.0 - (-2.0 * m).exp()) / 2.0).powi(2);
        assert!((sq - 1.0).abs() < 1e-12);
    }

    #[test]
    fn factor_reconstructs_matrix() {
        let g = grid(0.05, 2.0);
        let q = gaussian_cov_matrix(50.0, &g, 60).unwrap();
        let l = gaussian_cov_factor(50.0, &g, 60).unwrap();
        assert!(l.ncols() < 60);
        assert!((&l * l.transpose() - &q).amax() < 1e-9 * q.amax());
    }
}

//! Penalized quintic B-spline smoothing of observed log-price curves.
//!
//! Each date is fitted separately with a third-derivative roughness penalty;
//! the penalty weight minimizes `n·ln(RSS/n) + ln(n)·edf` over a log-spaced
//! grid.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::curve_panel::{GridSpec, LogBondPanel};
use crate::error::{Error, Result};
use crate::simulator::observe::ObservationSet;

pub const DEGREE: usize = 5;
const PENALTY_ORDER: usize = 3;
const LAMBDA_EXPONENTS: (f64, f64, usize) = (-12.0, 8.0, 41);

/// Clamped B-spline basis on `[0, upper]` with uniform interior knots.
#[derive(Debug, Clone)]
pub struct BSplineBasis {
    pub degree: usize,
    pub knots: Vec<f64>,
}

impl BSplineBasis {
    pub fn uniform(degree: usize, interior: usize, upper: f64) -> Self {
        let mut knots = vec![0.0; degree + 1];
        for k in 1..=interior {
            knots.push(upper * k as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(upper, degree + 1));
        BSplineBasis { degree, knots }
    }

    pub fn len(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn span(&self, x: f64) -> usize {
        let n = self.len();
        let p = self.degree;
        if x >= self.knots[n] {
            return n - 1;
        }
        // Last index s in p..n with knots[s] ≤ x.
        let s = self.knots[..=n].partition_point(|&t| t <= x) - 1;
        s.clamp(p, n - 1)
    }

    /// Index of the first nonzero basis function and the `degree + 1` values at `x`.
    pub fn eval_nonzero(&self, x: f64) -> (usize, Vec<f64>) {
        let p = self.degree;
        let t = &self.knots;
        let s = self.span(x);
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (s - p, n)
    }

    /// Row vector of all basis values at `x`.
    pub fn eval_row(&self, x: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.len()];
        let (first, vals) = self.eval_nonzero(x);
        row[first..first + vals.len()].copy_from_slice(&vals);
        row
    }

    pub fn design(&self, xs: &[f64]) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(xs.len(), self.len());
        for (i, &x) in xs.iter().enumerate() {
            let (first, vals) = self.eval_nonzero(x);
            for (k, v) in vals.into_iter().enumerate() {
                b[(i, first + k)] = v;
            }
        }
        b
    }

    /// Basis of the derivative space and the matrix mapping coefficients to
    /// derivative coefficients.
    fn derivative(&self) -> (BSplineBasis, DMatrix<f64>) {
        let p = self.degree;
        let n = self.len();
        let mut d = DMatrix::zeros(n - 1, n);
        for i in 0..n - 1 {
            let h = self.knots[i + p + 1] - self.knots[i + 1];
            if h > 0.0 {
                d[(i, i)] = -(p as f64) / h;
                d[(i, i + 1)] = p as f64 / h;
            }
        }
        let knots = self.knots[1..self.knots.len() - 1].to_vec();
        (BSplineBasis { degree: p - 1, knots }, d)
    }

    /// `Ω[a][b] = ∫ B_a^{(k)} B_b^{(k)}`, exact by Gauss–Legendre per knot interval.
    pub fn derivative_penalty(&self, order: usize) -> DMatrix<f64> {
        let mut basis = self.clone();
        let mut map = DMatrix::identity(self.len(), self.len());
        for _ in 0..order {
            let (next, d) = basis.derivative();
            map = d * map;
            basis = next;
        }
        // Products of degree-(p−k) pieces need 2(p−k) exactness: 3 points cover degree 5.
        let nodes = [-(0.6f64).sqrt(), 0.0, 0.6f64.sqrt()];
        let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        assert!(basis.degree <= 2, "penalty quadrature sized for derivative degree ≤ 2");
        let mut gram = DMatrix::zeros(basis.len(), basis.len());
        for w in self.knots.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi <= lo {
                continue;
            }
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (z, wt) in nodes.iter().zip(weights) {
                let (first, vals) = basis.eval_nonzero(mid + half * z);
                for (a, va) in vals.iter().enumerate() {
                    for (b, vb) in vals.iter().enumerate() {
                        gram[(first + a, first + b)] += wt * half * va * vb;
                    }
                }
            }
        }
        map.transpose() * gram * map
    }
}

/// Result of one penalized fit.
#[derive(Debug, Clone)]
pub struct SplineFit {
    pub coefficients: DVector<f64>,
    pub lambda: f64,
    pub edf: f64,
    pub rss: f64,
    pub bic: f64,
}

/// Penalized least squares with the weight chosen by BIC.
pub fn fit_penalized(b: &DMatrix<f64>, y: &DVector<f64>, omega: &DMatrix<f64>) -> Result<SplineFit> {
    let n = y.len();
    let btb = b.transpose() * b;
    let bty = b.transpose() * y;
    let ratio = btb.trace() / omega.trace().max(f64::MIN_POSITIVE);
    let (lo, hi, count) = LAMBDA_EXPONENTS;
    let mut best: Option<SplineFit> = None;
    for k in 0..count {
        let e = lo + (hi - lo) * k as f64 / (count - 1) as f64;
        let lambda = 10f64.powf(e) * ratio;
        let a = &btb + omega * lambda;
        let Some(chol) = a.cholesky() else {
            continue;
        };
        let c = chol.solve(&bty);
        let resid = y - b * &c;
        let rss = resid.norm_squared();
        let edf = chol.solve(&btb).trace();
        let floor = f64::MIN_POSITIVE * n as f64;
        let bic = n as f64 * (rss.max(floor) / n as f64).ln() + (n as f64).ln() * edf;
        if best.as_ref().is_none_or(|f| bic < f.bic) {
            best = Some(SplineFit {
                coefficients: c,
                lambda,
                edf,
                rss,
                bic,
            });
        }
    }
    best.ok_or_else(|| Error::numerical("penalized spline system singular for every smoothing weight"))
}

/// Smooths every date's observations onto the full maturity grid, fitting
/// only curves with `P[i][0] = 0`.
pub fn presmooth(obs: &ObservationSet) -> Result<LogBondPanel> {
    let grid: GridSpec = obs.grid;
    let m = grid.m_cells();
    let upper = grid.max_maturity;
    let rows: Vec<Result<Vec<f64>>> = obs
        .observations
        .par_iter()
        .enumerate()
        .map(|(i, points)| {
            if points.len() < DEGREE + 2 {
                return Err(Error::data(format!(
                    "date {i}: presmoothing needs at least {} observations, got {}",
                    DEGREE + 2,
                    points.len()
                )));
            }
            let basis = BSplineBasis::uniform(DEGREE, points.len().div_ceil(4), upper);
            // Only the first clamped basis function is nonzero at 0; dropping it
            // fits within the curves with P(0) = 0.
            let k = basis.len() - 1;
            let omega = basis.derivative_penalty(PENALTY_ORDER).view((1, 1), (k, k)).clone_owned();
            let xs: Vec<f64> = points.iter().map(|&(j, _)| j as f64 * grid.delta_n).collect();
            let design = basis.design(&xs).columns(1, k).clone_owned();
            let y = DVector::from_iterator(points.len(), points.iter().map(|&(_, v)| v));
            let fit = fit_penalized(&design, &y, &omega)?;
            let eval = |x: f64| {
                let (first, vals) = basis.eval_nonzero(x);
                vals.iter()
                    .enumerate()
                    .filter(|&(i, _)| first + i > 0)
                    .map(|(i, v)| v * fit.coefficients[first + i - 1])
                    .sum::<f64>()
            };
            Ok((0..=m).map(|j| eval(j as f64 * grid.delta_n)).collect())
        })
        .collect();
    let mut values = DMatrix::zeros(obs.n_dates(), m + 1);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row?.into_iter().enumerate() {
            values[(i, j)] = v;
        }
    }
    LogBondPanel::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn partition_of_unity_and_nonnegativity() {
        let b = BSplineBasis::uniform(5, 7, 3.0);
        assert_eq!(b.len(), 13);
        for k in 0..=300 {
            let x = 3.0 * k as f64 / 300.0;
            let row = b.eval_row(x);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= -1e-15));
        }
    }

    #[test]
    fn penalty_matches_numerical_third_derivative_energy() {
        let b = BSplineBasis::uniform(5, 4, 2.0);
        let omega = b.derivative_penalty(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = DVector::from_fn(b.len(), |_, _| rng.random_range(-1.0..1.0));
        let f = |x: f64| b.eval_row(x).iter().zip(c.iter()).map(|(u, v)| u * v).sum::<f64>();
        // Finite-difference third derivative, midpoint rule.
        let n = 20000;
        let h = 2.0 / n as f64;
        let e = 1e-3;
        let mut energy = 0.0;
        for k in 0..n {
            let x = ((k as f64 + 0.5) * h).clamp(2.0 * e, 2.0 - 2.0 * e);
            let d3 = (f(x + 2.0 * e) - 2.0 * f(x + e) + 2.0 * f(x - e) - f(x - 2.0 * e)) / (2.0 * e * e * e);
            energy += d3 * d3 * h;
        }
        let exact = (c.transpose() * &omega * &c)[(0, 0)];
        assert!((energy / exact - 1.0).abs() < 1e-2, "{energy} vs {exact}");
    }

    #[test]
    fn cubic_polynomial_is_reproduced() {
        let dn = 0.01;
        let grid = GridSpec::new(dn, 1.0, 0.01).unwrap();
        let poly = |x: f64| -0.03 * x - 0.002 * x * x + 0.0004 * x * x * x;
        let observations = (0..2)
            .map(|_| (0..=100).map(|j| (j, poly(j as f64 * dn))).collect())
            .collect();
        let p = presmooth(&ObservationSet { grid, observations }).unwrap();
        for j in 0..=100 {
            assert!((p.values[(1, j)] - poly(j as f64 * dn)).abs() < 1e-6);
        }
    }

    #[test]
    fn fit_passes_through_the_origin() {
        let grid = GridSpec::new(0.01, 1.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = |x: f64| -0.04 * x - 0.01 * x * x;
        let noisy: Vec<(usize, f64)> = (1..=100)
            .step_by(3)
            .map(|j| (j, truth(j as f64 * 0.01) + 0.001 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let p = presmooth(&ObservationSet { grid, observations: vec![noisy.clone(), noisy] }).unwrap();
        assert_eq!(p.values[(0, 0)], 0.0);
        let rmse = ((0..=100).map(|j| (p.values[(1, j)] - truth(j as f64 * 0.01)).powi(2)).sum::<f64>() / 101.0).sqrt();
        assert!(rmse < 0.001, "{rmse}");
    }

    #[test]
    fn too_few_points_rejected_with_date() {
        let grid = GridSpec::new(0.01, 1.0, 0.01).unwrap();
        let obs = ObservationSet {
            grid,
            observations: vec![(0..10).map(|j| (j, 0.0)).collect(), vec![(0, 0.0), (5, 0.1)]],
        };
        let err = presmooth(&obs).unwrap_err().to_string();
        assert!(err.contains("date 1"), "{err}");
    }
}

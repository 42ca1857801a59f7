//! Relative mean absolute error of factor approximations to lagged
//! difference-return curves.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::curve_panel::{higher_order_difference_returns, DifferenceReturnPanel, LogBondPanel};
use crate::error::{Error, Result};
use crate::harness::empirical::Period;
use crate::kernel_space::StepBasis;
use crate::linalg::gram_eigen;
use crate::simulator::stream_rng;

const VALIDATION_STREAM: u64 = 7;
const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorSource {
    /// Principal components of log-price increments outside the validation set.
    LogPricePcs,
    /// Eigenfunctions of the long-run volatility kernel.
    LongRunEigen,
}

impl FactorSource {
    pub fn label(&self) -> &'static str {
        match self {
            FactorSource::LogPricePcs => "log-price-pcs",
            FactorSource::LongRunEigen => "long-run-eigen",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationSpec {
    /// Rows drawn per period, without replacement.
    pub per_period: usize,
    pub seed: u64,
}

impl Default for ValidationSpec {
    fn default() -> Self {
        ValidationSpec {
            per_period: 25,
            seed: 0,
        }
    }
}

/// Sorted validation rows: `per_period` uniform draws from every period
/// (all of its rows when it is shorter).
pub fn validation_rows(periods: &[Period], spec: ValidationSpec) -> Vec<usize> {
    let mut rng = stream_rng(spec.seed, VALIDATION_STREAM);
    let mut out = Vec::new();
    for p in periods {
        let k = spec.per_period.min(p.rows.len());
        let mut idx = sample(&mut rng, p.rows.len(), k).into_vec();
        idx.sort_unstable();
        out.extend(idx.into_iter().map(|i| p.rows.start + i));
    }
    out
}

/// Top principal directions of the log-price increments `P_{i+1} − P_i`,
/// `i ∉ exclude`, restricted to the maturities `1..J−1` that index difference returns.
pub fn log_price_factors(p: &LogBondPanel, exclude: &[usize], k: usize) -> Result<StepBasis> {
    let rows = p.n_dates();
    let cols = p.n_maturities();
    if cols < 3 {
        return Err(Error::InsufficientData {
            what: "maturities for log-price factors",
            required: 3,
            actual: cols,
        });
    }
    let skip: std::collections::HashSet<usize> = exclude.iter().copied().collect();
    let used: Vec<usize> = (0..rows.saturating_sub(1)).filter(|i| !skip.contains(i)).collect();
    if used.is_empty() {
        return Err(Error::InsufficientData {
            what: "log-price increments outside the validation set",
            required: 1,
            actual: 0,
        });
    }
    let inc = DMatrix::from_fn(used.len(), cols - 2, |r, c| {
        let i = used[r];
        p.values[(i + 1, c + 1)] - p.values[(i, c + 1)]
    });
    let eig = gram_eigen(&inc, 1.0 / used.len() as f64);
    let k = k.min(eig.vectors.ncols());
    Ok(StepBasis::from_unit_vectors(p.grid.delta_n, eig.vectors.columns(0, k).clone_owned()))
}

/// `RMAE_L(d)` for `d = 1..=max_d`: mean over `validation` of
/// `‖h − P_d h‖ / ‖h‖` with `h` the lag-`L` difference-return curve, padded
/// with zeros beyond its last maturity, and `P_d` the projection onto the
/// first `d` factors. Rows whose curve vanishes are skipped.
pub fn rmae_curve(
    d: &DifferenceReturnPanel,
    lag: usize,
    factors: &StepBasis,
    validation: &[usize],
    max_d: usize,
) -> Result<Vec<f64>> {
    if validation.is_empty() {
        return Err(Error::config("empty validation set"));
    }
    if factors.m_cells() != d.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: d.n_cols(),
            actual: factors.m_cells(),
        });
    }
    factors.check_orthonormal().map_err(|_| Error::config("factors are not orthonormal"))?;
    let lagged = higher_order_difference_returns(d, lag)?;
    let width = lagged.n_cols();
    let max_d = max_d.min(factors.len());
    let units = &factors.heights * factors.delta_n.sqrt();
    let mut sums = vec![0.0; max_d];
    let mut used = 0usize;
    for &i in validation {
        if i >= lagged.n_rows() {
            return Err(Error::data(format!("validation row {i} outside 0..{}", lagged.n_rows())));
        }
        let h = lagged.values.row(i);
        let norm = h.norm();
        if norm == 0.0 {
            continue;
        }
        used += 1;
        let mut resid = nalgebra::DVector::zeros(d.n_cols());
        resid.rows_mut(0, width).copy_from(&h.transpose());
        for (k, s) in sums.iter_mut().enumerate() {
            let f = units.column(k);
            let c = f.dot(&resid);
            resid.axpy(-c, &f, 1.0);
            *s += resid.norm() / norm;
        }
    }
    if used == 0 {
        return Err(Error::data("every validation curve vanishes"));
    }
    Ok(sums.into_iter().map(|s| s / used as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmaeEntry {
    pub lag: usize,
    pub source: FactorSource,
    pub d: usize,
    pub rmae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmaeTable {
    pub entries: Vec<RmaeEntry>,
    pub validation: ValidationSpec,
    pub validation_rows: Vec<usize>,
}

impl RmaeTable {
    pub fn value(&self, lag: usize, source: FactorSource, d: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.lag == lag && e.source == source && e.d == d)
            .map(|e| e.rmae)
    }
}

/// Inputs of [`rmae_study`].
pub struct RmaeInput<'a> {
    pub log_prices: &'a LogBondPanel,
    pub returns: &'a DifferenceReturnPanel,
    pub periods: &'a [Period],
    /// Eigenfunctions of the long-run kernel, required for [`FactorSource::LongRunEigen`].
    pub long_run_basis: Option<&'a StepBasis>,
}

pub fn rmae_study(
    input: &RmaeInput<'_>,
    sources: &[FactorSource],
    lags: &[usize],
    max_d: usize,
    validation: ValidationSpec,
) -> Result<RmaeTable> {
    if max_d == 0 {
        return Err(Error::config("maximal factor count must be ≥ 1"));
    }
    let rows = validation_rows(input.periods, validation);
    if rows.is_empty() {
        return Err(Error::config("empty validation set"));
    }
    let mut entries = Vec::new();
    for &source in sources {
        let factors = match source {
            FactorSource::LogPricePcs => log_price_factors(input.log_prices, &rows, max_d)?,
            FactorSource::LongRunEigen => input
                .long_run_basis
                .ok_or_else(|| Error::config("long-run factors requested but no long-run basis supplied"))?
                .truncated(max_d),
        };
        for &lag in lags {
            let curve = rmae_curve(input.returns, lag, &factors, &rows, max_d)?;
            let mut prev = f64::INFINITY;
            for (k, v) in curve.into_iter().enumerate() {
                if v > prev * (1.0 + ORTHONORMAL_TOL) + ORTHONORMAL_TOL {
                    return Err(Error::numerical(format!(
                        "RMAE increased from {prev} to {v} at d = {} (lag {lag})",
                        k + 1
                    )));
                }
                prev = v;
                entries.push(RmaeEntry {
                    lag,
                    source,
                    d: k + 1,
                    rmae: v,
                });
            }
        }
    }
    Ok(RmaeTable {
        entries,
        validation,
        validation_rows: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve_panel::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn panel(rows: usize, cols: usize, seed: u64) -> DifferenceReturnPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GridSpec::new(0.1, (cols + 1) as f64 * 0.1, rows as f64 * 0.1).unwrap();
        DifferenceReturnPanel::new(g, DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    fn identity_basis(m: usize, dn: f64) -> StepBasis {
        StepBasis::from_unit_vectors(dn, DMatrix::identity(m, m))
    }

    #[test]
    fn full_basis_gives_zero() {
        let d = panel(30, 12, 1);
        let b = identity_basis(12, 0.1);
        let v = rmae_curve(&d, 3, &b, &[0, 5, 9, 20], 12).unwrap();
        assert!(v[11].abs() < 1e-8, "{}", v[11]);
        assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn curves_in_the_first_factor_span() {
        let m = 10;
        let f: Vec<f64> = (0..m).map(|j| (j as f64 + 1.0).sqrt()).collect();
        let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        let units = DMatrix::from_fn(m, 1, |j, _| f[j] / norm);
        let b = StepBasis::from_unit_vectors(0.1, units);
        let g = GridSpec::new(0.1, 1.1, 0.5).unwrap();
        let values = DMatrix::from_fn(5, m, |i, j| (i as f64 - 2.5) * f[j]);
        let d = DifferenceReturnPanel::new(g, values).unwrap();
        let v = rmae_curve(&d, 0, &b, &[0, 1, 2, 3, 4], 1).unwrap();
        assert!(v[0] < 1e-12);
    }

    #[test]
    fn empty_validation_rejected() {
        let d = panel(10, 5, 2);
        assert!(rmae_curve(&d, 0, &identity_basis(5, 0.1), &[], 3).is_err());
        let periods = vec![Period {
            label: "x".into(),
            rows: 0..10,
        }];
        let spec = ValidationSpec { per_period: 0, seed: 1 };
        let p = LogBondPanel::new(d.grid, DMatrix::zeros(11, 7)).unwrap();
        let input = RmaeInput {
            log_prices: &p,
            returns: &d,
            periods: &periods,
            long_run_basis: None,
        };
        assert!(rmae_study(&input, &[FactorSource::LogPricePcs], &[0], 2, spec).is_err());
    }

    #[test]
    fn validation_sampling_is_seeded_and_per_period() {
        let periods = vec![
            Period { label: "a".into(), rows: 0..100 },
            Period { label: "b".into(), rows: 100..110 },
        ];
        let spec = ValidationSpec { per_period: 25, seed: 4 };
        let v = validation_rows(&periods, spec);
        assert_eq!(v.len(), 35);
        assert_eq!(v, validation_rows(&periods, spec));
        assert_eq!(v.iter().filter(|&&i| i >= 100).count(), 10);
    }

    #[test]
    fn log_price_factors_skip_validation_rows() {
        let g = GridSpec::new(0.1, 0.5, 0.3).unwrap();
        let mut values = DMatrix::zeros(4, 6);
        for j in 1..6 {
            values[(1, j)] = -(j as f64);
            values[(2, j)] = values[(1, j)];
            values[(3, j)] = values[(1, j)] + if j == 2 { 1.0 } else { 0.0 };
        }
        let p = LogBondPanel::new(g, values).unwrap();
        // Increment 0 is a ramp, increment 2 a spike at maturity 2; excluding
        // increment 0 leaves only the spike direction.
        let b = log_price_factors(&p, &[0], 1).unwrap();
        let unit = &b.heights * b.delta_n.sqrt();
        assert!((unit[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }
}

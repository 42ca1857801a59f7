//! Sparse, noisy observation of simulated log bond prices.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::curve_panel::{forwards_to_log_prices, ForwardPanel, GridSpec};
use crate::error::{Error, Result};
use crate::simulator::stream_rng;

const OBSERVATION_STREAM: u64 = 3;

/// Per date, the observed `(maturity index, noisy log price)` pairs, sorted by maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub grid: GridSpec,
    pub observations: Vec<Vec<(usize, f64)>>,
}

impl ObservationSet {
    pub fn n_dates(&self) -> usize {
        self.observations.len()
    }
}

/// Draws `m_obs` distinct maturities per date uniformly from `{0, …, M/Δn}`
/// and adds `N(0, σ_ε²)` noise to their log prices.
pub fn observe(f: &ForwardPanel, m_obs: usize, sigma_eps: f64, seed: u64) -> Result<ObservationSet> {
    let p = forwards_to_log_prices(f)?;
    let cols = p.values.ncols();
    if m_obs == 0 || m_obs > cols {
        return Err(Error::config(format!("m_obs = {m_obs} must lie in 1..={cols}")));
    }
    if !(sigma_eps >= 0.0 && sigma_eps.is_finite()) {
        return Err(Error::config(format!("noise level must be finite and ≥ 0, got {sigma_eps}")));
    }
    let mut rng = stream_rng(seed, OBSERVATION_STREAM);
    let observations = (0..p.values.nrows())
        .map(|i| {
            let mut idx = sample(&mut rng, cols, m_obs).into_vec();
            idx.sort_unstable();
            idx.into_iter()
                .map(|j| {
                    let eps = if sigma_eps > 0.0 {
                        sigma_eps * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    (j, p.values[(i, j)] + eps)
                })
                .collect()
        })
        .collect();
    Ok(ObservationSet {
        grid: f.grid,
        observations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn forwards(rows: usize, m: usize) -> ForwardPanel {
        let dn = 0.01;
        let grid = GridSpec::new(dn, m as f64 * dn, (rows - 1) as f64 * dn).unwrap();
        ForwardPanel {
            grid,
            values: DMatrix::from_fn(rows, m, |i, j| dn * (0.03 + 0.001 * i as f64 + 0.0001 * j as f64)),
        }
    }

    #[test]
    fn full_noise_free_observation_reproduces_the_panel() {
        let f = forwards(4, 50);
        let p = forwards_to_log_prices(&f).unwrap();
        let obs = observe(&f, 51, 0.0, 1).unwrap();
        for (i, row) in obs.observations.iter().enumerate() {
            assert_eq!(row.len(), 51);
            for &(j, v) in row {
                assert_eq!(v, p.values[(i, j)]);
            }
        }
    }

    #[test]
    fn noise_has_the_requested_standard_deviation() {
        let f = forwards(1001, 100);
        let p = forwards_to_log_prices(&f).unwrap();
        let obs = observe(&f, 100, 0.01, 2).unwrap();
        let mut ss = 0.0;
        let mut n = 0.0;
        for (i, row) in obs.observations.iter().enumerate() {
            for &(j, v) in row {
                ss += (v - p.values[(i, j)]).powi(2);
                n += 1.0;
            }
        }
        assert!(((ss / n).sqrt() / 0.01 - 1.0).abs() < 0.03);
    }

    #[test]
    fn indices_are_distinct_and_uniform() {
        let f = forwards(2000, 20);
        let obs = observe(&f, 5, 0.0, 3).unwrap();
        let mut counts = [0usize; 21];
        for row in &obs.observations {
            let mut idx: Vec<usize> = row.iter().map(|o| o.0).collect();
            idx.dedup();
            assert_eq!(idx.len(), 5);
            for j in idx {
                counts[j] += 1;
            }
        }
        let expected = 2000.0 * 5.0 / 21.0;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new(20.0).unwrap().cdf(stat);
        assert!(p > 0.001, "chi-square p = {p}");
    }

    #[test]
    fn too_many_observations_rejected() {
        assert!(observe(&forwards(2, 10), 12, 0.0, 0).is_err());
    }
}

//! Square-root (CIR) volatility factor `dx = κ(θ − x)dt + ξ√x dβ`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::stream_rng;

const CIR_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub x0: f64,
}

impl Default for CirParams {
    fn default() -> Self {
        CirParams {
            kappa: 1.5,
            theta: 0.058,
            xi: 0.05,
            x0: 0.058,
        }
    }
}

impl CirParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.kappa, self.theta, self.xi, self.x0];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config(format!("CIR parameters must be finite and ≥ 0: {self:?}")));
        }
        Ok(())
    }
}

/// Full-truncation Euler path on the fine lattice `Δn / subres`.
#[derive(Debug, Clone)]
pub struct CirPath {
    /// `x` at every fine step, `n_steps · subres + 1` points (truncated at 0).
    pub fine: Vec<f64>,
    /// Left Riemann sums `I_i ≈ ∫_{(i−1)Δn}^{iΔn} x(s) ds`, one per step.
    pub integrals: Vec<f64>,
    /// Number of negative Euler proposals clipped to zero.
    pub truncations: usize,
    pub subres: usize,
    pub delta_n: f64,
}

impl CirPath {
    /// `∫_0^{T} x(s) ds` over the simulated horizon.
    pub fn total_integral(&self) -> f64 {
        self.integrals.iter().sum()
    }
}

pub fn simulate_cir(cir: &CirParams, n_steps: usize, delta_n: f64, subres: usize, seed: u64) -> Result<CirPath> {
    cir.validate()?;
    if subres == 0 {
        return Err(Error::config("CIR substeps per increment must be ≥ 1"));
    }
    let mut rng = stream_rng(seed, CIR_STREAM);
    let h = delta_n / subres as f64;
    let sqrt_h = h.sqrt();
    let mut fine = Vec::with_capacity(n_steps * subres + 1);
    let mut integrals = Vec::with_capacity(n_steps);
    let mut truncations = 0;
    let mut x = cir.x0;
    fine.push(x);
    for _ in 0..n_steps {
        let mut acc = 0.0;
        for _ in 0..subres {
            let xp = x.max(0.0);
            acc += xp * h;
            let z: f64 = if cir.xi > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            let proposal = x + cir.kappa * (cir.theta - xp) * h + cir.xi * xp.sqrt() * sqrt_h * z;
            if proposal < 0.0 {
                truncations += 1;
            }
            x = proposal;
            fine.push(x.max(0.0));
        }
        integrals.push(acc);
    }
    if truncations > 0 {
        log::info!("CIR path: {truncations} negative proposals truncated at zero");
    }
    Ok(CirPath {
        fine,
        integrals,
        truncations,
        subres,
        delta_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_path_approaches_theta_monotonically() {
        let cir = CirParams {
            xi: 0.0,
            x0: 0.2,
            ..CirParams::default()
        };
        let p = simulate_cir(&cir, 300, 0.01, 10, 1).unwrap();
        assert!(p.fine.windows(2).all(|w| w[1] <= w[0] && w[1] >= cir.theta));
        assert!((p.fine.last().unwrap() - cir.theta) < 0.02);
    }

    #[test]
    fn equilibrium_path_is_constant() {
        let cir = CirParams {
            xi: 0.0,
            ..CirParams::default()
        };
        let p = simulate_cir(&cir, 50, 0.01, 100, 2).unwrap();
        assert!(p.fine.iter().all(|&x| (x - 0.058).abs() < 1e-15));
        assert!(p.integrals.iter().all(|&i| (i - 0.058 * 0.01).abs() < 1e-15));
    }

    #[test]
    fn ergodic_mean_matches_theta() {
        let p = simulate_cir(&CirParams::default(), 10_000, 0.01, 100, 3).unwrap();
        let mean = p.fine.iter().sum::<f64>() / p.fine.len() as f64;
        assert!((mean / 0.058 - 1.0).abs() < 0.02, "mean {mean}");
        assert_eq!(p.truncations, 0);
    }

    #[test]
    fn same_seed_same_path() {
        let a = simulate_cir(&CirParams::default(), 20, 0.01, 10, 9).unwrap();
        let b = simulate_cir(&CirParams::default(), 20, 0.01, 10, 9).unwrap();
        assert_eq!(a.fine, b.fine);
    }
}

//! Forward-curve recursion `F_i[j] = F_{i−1}[j+1] + G_i[j] + J_i[j]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::curve_panel::{ForwardPanel, GridSpec};
use crate::error::{Error, Result};
use crate::kernel_space::StepKernel;
use crate::simulator::cir::{simulate_cir, CirParams, CirPath};
use crate::simulator::kernels::{
    cell_average_kernel, exp_cell_integrals, exp_kernel_scale, gaussian_cov_factor,
};
use crate::simulator::stream_rng;

const DIFFUSION_STREAM: u64 = 1;
const JUMP_STREAM: u64 = 2;

fn default_subres() -> usize {
    100
}

fn default_jump_bandwidth() -> f64 {
    0.01
}

/// Parameters of one simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Bandwidth of the diffusion kernel `Q_a`.
    pub a: f64,
    #[serde(default)]
    pub lambda1: f64,
    #[serde(default)]
    pub lambda2: f64,
    #[serde(default)]
    pub rho1: f64,
    #[serde(default)]
    pub rho2: f64,
    /// Bandwidth of the second jump component's Gaussian kernel.
    #[serde(default = "default_jump_bandwidth")]
    pub jump_bandwidth: f64,
    #[serde(default)]
    pub cir: CirParams,
    pub grid: GridSpec,
    /// Observed maturities per date; `None` means the dense grid.
    #[serde(default)]
    pub m_obs: Option<usize>,
    /// Observation noise standard deviation.
    #[serde(default)]
    pub sigma_eps: f64,
    #[serde(default = "default_subres")]
    pub subres: usize,
    #[serde(default)]
    pub seed: u64,
    /// Shift exponential-kernel jumps by `e^{−(Δn − τ)}` for their arrival time `τ`.
    #[serde(default)]
    pub jump_decay: bool,
}

impl SimConfig {
    /// Dense, jump-free configuration on `n` steps per year.
    pub fn dense(a: f64, n: usize, max_maturity: f64, horizon: f64) -> Result<SimConfig> {
        Ok(SimConfig {
            a,
            lambda1: 0.0,
            lambda2: 0.0,
            rho1: 0.0,
            rho2: 0.0,
            jump_bandwidth: default_jump_bandwidth(),
            cir: CirParams::default(),
            grid: GridSpec::per_year(n, max_maturity, horizon)?,
            m_obs: None,
            sigma_eps: 0.0,
            subres: default_subres(),
            seed: 0,
            jump_decay: false,
        })
    }

    /// Adds the two compound-Poisson jump components used in the jump experiments.
    pub fn with_standard_jumps(mut self) -> SimConfig {
        self.lambda1 = 1.0;
        self.lambda2 = 4.0;
        self.rho1 = 0.0116;
        self.rho2 = 0.0029;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.cir.validate()?;
        if !(self.a > 0.0) || !(self.jump_bandwidth > 0.0) {
            return Err(Error::config("kernel bandwidths must be positive"));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("sigma_eps", self.sigma_eps),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        if self.subres == 0 {
            return Err(Error::config("subres must be ≥ 1"));
        }
        if let Some(m) = self.m_obs {
            if m == 0 || m > self.grid.m_cells() + 1 {
                return Err(Error::config(format!(
                    "m_obs = {m} must lie in 1..={}",
                    self.grid.m_cells() + 1
                )));
            }
        }
        Ok(())
    }

    pub fn has_jumps(&self) -> bool {
        (self.lambda1 > 0.0 && self.rho1 > 0.0) || (self.lambda2 > 0.0 && self.rho2 > 0.0)
    }

    /// Cell-average step kernel of `Q_a` on the `m_cells` leading cells.
    pub fn diffusion_kernel(&self, m_cells: usize) -> Result<StepKernel> {
        let q = crate::simulator::kernels::gaussian_cov_matrix(self.a, &self.grid, m_cells)?;
        cell_average_kernel(&q, self.grid.delta_n, m_cells)
    }
}

/// One jump added to the curve during step `step` (the move from date
/// `step − 1` to date `step`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub step: usize,
    pub component: u8,
    /// Euclidean norm of the jump's cell integrals over the reported maturities.
    pub l2_norm: f64,
    /// Jump cell integrals over the reported maturities.
    #[serde(skip)]
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    /// `n_steps + 1` dates (including `t = 0`) × `M/Δn` cells.
    pub forwards: ForwardPanel,
    pub jumps: Vec<JumpEvent>,
    pub cir: CirPath,
}

impl SimulatedPanel {
    /// `(∫ x ds) · Q_a / Δn²` over the first `m_cells` cells: the integrated
    /// volatility of the continuous part.
    pub fn integrated_volatility(&self, cfg: &SimConfig, m_cells: usize) -> Result<StepKernel> {
        Ok(cfg.diffusion_kernel(m_cells)?.scaled(self.cir.total_integral()))
    }
}

/// `F_0`: cell integrals of `0.04 + 0.02 (1 − e^{−x})`.
pub fn initial_curve(delta_n: f64, cells: usize) -> Vec<f64> {
    let e = exp_cell_integrals(delta_n, cells);
    (0..cells).map(|j| 0.06 * delta_n - 0.02 * e[j]).collect()
}

pub fn simulate_forward_panel(cfg: &SimConfig) -> Result<SimulatedPanel> {
    cfg.validate()?;
    let grid = cfg.grid;
    let dn = grid.delta_n;
    let m = grid.m_cells();
    let steps = grid.n_steps;
    let internal = m + steps;

    let cir = simulate_cir(&cfg.cir, steps, dn, cfg.subres, cfg.seed)?;
    let diffusion = gaussian_cov_factor(cfg.a, &grid, internal)?;
    let exp_loadings = {
        let c = exp_kernel_scale(grid.max_maturity);
        let v = exp_cell_integrals(dn, internal);
        DVector::from_iterator(internal, v.into_iter().map(|x| (cfg.rho1 * c).sqrt() * x))
    };
    let small_jump_factor = if cfg.lambda2 > 0.0 && cfg.rho2 > 0.0 {
        gaussian_cov_factor(cfg.jump_bandwidth, &grid, internal)? * cfg.rho2.sqrt()
    } else {
        DMatrix::zeros(internal, 0)
    };
    let poisson = |rate: f64| -> Result<Option<Poisson<f64>>> {
        if rate > 0.0 {
            Poisson::new(rate)
                .map(Some)
                .map_err(|e| Error::config(format!("invalid jump intensity {rate}: {e}")))
        } else {
            Ok(None)
        }
    };
    let count1 = if cfg.rho1 > 0.0 { poisson(cfg.lambda1 * dn)? } else { None };
    let count2 = if small_jump_factor.ncols() > 0 { poisson(cfg.lambda2 * dn)? } else { None };

    let mut rng_g = stream_rng(cfg.seed, DIFFUSION_STREAM);
    let mut rng_j = stream_rng(cfg.seed, JUMP_STREAM);

    let mut out = DMatrix::zeros(steps + 1, m);
    let mut curve = initial_curve(dn, internal);
    for j in 0..m {
        out[(0, j)] = curve[j];
    }
    let r = diffusion.ncols();
    let mut jumps = Vec::new();
    for step in 1..=steps {
        let len = internal - step;
        let scale = cir.integrals[step - 1].sqrt();
        let z = DVector::from_fn(r, |_, _| rng_g.sample::<f64, _>(StandardNormal));
        let g = diffusion.rows(0, len) * z;
        let mut next: Vec<f64> = (0..len).map(|j| curve[j + 1] + scale * g[j]).collect();

        if let Some(dist) = &count1 {
            let k = dist.sample(&mut rng_j) as usize;
            for _ in 0..k {
                let z: f64 = rng_j.sample(StandardNormal);
                let decay = if cfg.jump_decay {
                    let tau: f64 = rng_j.random_range(0.0..dn);
                    (-(dn - tau)).exp()
                } else {
                    1.0
                };
                let jump: Vec<f64> = (0..len).map(|j| decay * z * exp_loadings[j]).collect();
                record_jump(&mut jumps, &mut next, jump, step, 1, m);
            }
        }
        if let Some(dist) = &count2 {
            let k = dist.sample(&mut rng_j) as usize;
            for _ in 0..k {
                let z = DVector::from_fn(small_jump_factor.ncols(), |_, _| rng_j.sample::<f64, _>(StandardNormal));
                let jump = small_jump_factor.rows(0, len) * z;
                record_jump(&mut jumps, &mut next, jump.iter().copied().collect(), step, 2, m);
            }
        }
        for j in 0..m {
            out[(step, j)] = next[j];
        }
        curve = next;
    }
    Ok(SimulatedPanel {
        forwards: ForwardPanel { grid, values: out },
        jumps,
        cir,
    })
}

fn record_jump(log: &mut Vec<JumpEvent>, next: &mut [f64], jump: Vec<f64>, step: usize, component: u8, m: usize) {
    for (n, j) in next.iter_mut().zip(&jump) {
        *n += j;
    }
    let curve: Vec<f64> = jump[..m].to_vec();
    let l2_norm = curve.iter().map(|x| x * x).sum::<f64>().sqrt();
    log.push(JumpEvent {
        step,
        component,
        l2_norm,
        curve,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve_panel::{difference_returns, forwards_to_log_prices};
    use crate::simulator::kernels::gaussian_cov_matrix;

    fn small_cfg() -> SimConfig {
        SimConfig::dense(50.0, 20, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_increments_shift_the_initial_curve() {
        let mut cfg = small_cfg();
        cfg.cir = CirParams {
            kappa: 0.0,
            theta: 0.0,
            xi: 0.0,
            x0: 0.0,
        };
        let sim = simulate_forward_panel(&cfg).unwrap();
        let f0 = initial_curve(cfg.grid.delta_n, 40);
        for i in 0..=20 {
            for j in 0..20 {
                assert_eq!(sim.forwards.values[(i, j)], f0[j + i]);
            }
        }
    }

    #[test]
    fn reproducible_for_equal_seeds() {
        let mut cfg = small_cfg().with_standard_jumps();
        cfg.seed = 17;
        let a = simulate_forward_panel(&cfg).unwrap();
        let b = simulate_forward_panel(&cfg).unwrap();
        assert_eq!(a.forwards.values, b.forwards.values);
        assert_eq!(a.jumps, b.jumps);
    }

    #[test]
    fn zero_jump_scale_matches_jump_free_law() {
        let mut cfg = small_cfg();
        cfg.lambda1 = 3.0;
        cfg.lambda2 = 3.0;
        cfg.seed = 4;
        let with = simulate_forward_panel(&cfg).unwrap();
        cfg.lambda1 = 0.0;
        cfg.lambda2 = 0.0;
        let without = simulate_forward_panel(&cfg).unwrap();
        assert!(with.jumps.is_empty());
        assert_eq!(with.forwards.values, without.forwards.values);
    }

    #[test]
    fn semigroup_adjusted_increments_are_difference_returns() {
        let mut cfg = small_cfg().with_standard_jumps();
        cfg.seed = 5;
        let sim = simulate_forward_panel(&cfg).unwrap();
        let d = difference_returns(&forwards_to_log_prices(&sim.forwards).unwrap()).unwrap();
        let f = &sim.forwards.values;
        for r in 0..d.n_rows() {
            for c in 0..d.n_cols() {
                let adj = f[(r, c + 1)] - f[(r + 1, c)];
                assert!((d.values[(r, c)] - adj).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn increments_have_the_diffusion_covariance() {
        let mut cfg = SimConfig::dense(5.0, 100, 0.05, 0.01).unwrap();
        cfg.cir.xi = 0.0;
        cfg.subres = 1;
        let m = cfg.grid.m_cells();
        let q = gaussian_cov_matrix(5.0, &cfg.grid, m).unwrap() * (0.058 * cfg.grid.delta_n);
        let reps = 10_000;
        let mut cov = DMatrix::zeros(m - 1, m - 1);
        for seed in 0..reps {
            cfg.seed = seed;
            let f = simulate_forward_panel(&cfg).unwrap().forwards.values;
            let inc: Vec<f64> = (0..m - 1).map(|j| f[(1, j)] - f[(0, j + 1)]).collect();
            for a in 0..m - 1 {
                for b in 0..m - 1 {
                    cov[(a, b)] += inc[a] * inc[b];
                }
            }
        }
        cov /= reps as f64;
        for a in 0..m - 1 {
            for b in 0..m - 1 {
                let se = ((q[(a, a)] * q[(b, b)] + q[(a, b)].powi(2)) / reps as f64).sqrt();
                assert!((cov[(a, b)] - q[(a, b)]).abs() < 5.0 * se);
            }
        }
    }

    #[test]
    fn poisson_jump_counts() {
        let mut total = 0;
        let reps = 200;
        for seed in 0..reps {
            let mut cfg = SimConfig::dense(50.0, 20, 0.5, 1.0).unwrap().with_standard_jumps();
            cfg.subres = 1;
            cfg.seed = seed;
            total += simulate_forward_panel(&cfg).unwrap().jumps.len();
        }
        let mean = total as f64 / reps as f64;
        // Poisson(5): standard error of the mean √(5/200) ≈ 0.16.
        assert!((mean - 5.0).abs() < 0.5, "mean jump count {mean}");
    }
}

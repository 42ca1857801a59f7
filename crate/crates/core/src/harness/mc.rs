//! Monte-Carlo study: simulate, estimate, compare with the integrated volatility.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariation::truncated_covariation;
use crate::curve_panel::{difference_returns, forwards_to_log_prices, project_onto_pcs, DifferenceReturnPanel};
use crate::error::{Error, Result};
use crate::harness::{derive_seed, dimensions, kept_spectrum, Quartiles, DIMENSION_LEVELS};
use crate::kernel_space::relative_error;
use crate::simulator::{observe, presmooth, simulate_forward_panel, SimConfig};
use crate::truncation::{preliminary_estimate, rule_from_preliminary, RuleOptions, TruncationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Estimate from the (possibly presmoothed) curves directly.
    #[default]
    S1,
    /// Project log-price increments onto their leading principal components first.
    S2,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
        }
    }
}

fn default_pcs() -> usize {
    3
}

/// One Monte-Carlo model: a simulation configuration plus the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub sim: SimConfig,
    #[serde(default)]
    pub scenario: Scenario,
    /// Truncation multipliers `l`; `null` (or an empty list) means no truncation.
    #[serde(default)]
    pub levels: Vec<Option<f64>>,
    /// Principal components kept in scenario S2.
    #[serde(default = "default_pcs")]
    pub pcs: usize,
}

impl ModelSpec {
    pub fn levels(&self) -> Vec<Option<f64>> {
        if self.levels.is_empty() {
            vec![None]
        } else {
            self.levels.clone()
        }
    }
}

/// Outcome of one replication at one truncation level.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub level: Option<f64>,
    pub relative_error: f64,
    pub dims: [usize; 4],
    pub flagged: usize,
}

/// Difference returns produced by the estimation pipeline of `model` on a
/// fresh simulation with `seed`, plus the matching integrated-volatility target.
pub fn simulate_and_prepare(
    model: &ModelSpec,
    seed: u64,
) -> Result<(DifferenceReturnPanel, crate::kernel_space::StepKernel)> {
    let mut cfg = model.sim.clone();
    cfg.seed = seed;
    let sim = simulate_forward_panel(&cfg)?;
    let m = cfg.grid.m_cells();
    let sparse = cfg.m_obs.is_some_and(|k| k < m + 1) || cfg.sigma_eps > 0.0;
    let mut logp = if sparse {
        let obs = observe(&sim.forwards, cfg.m_obs.unwrap_or(m + 1), cfg.sigma_eps, seed)?;
        presmooth(&obs)?
    } else {
        forwards_to_log_prices(&sim.forwards)?
    };
    if model.scenario == Scenario::S2 {
        logp = project_onto_pcs(&logp, model.pcs)?;
    }
    let d = difference_returns(&logp)?;
    let iv = sim.integrated_volatility(&cfg, d.n_cols())?;
    Ok((d, iv))
}

pub fn run_replication(model: &ModelSpec, seed: u64, options: RuleOptions) -> Result<Vec<ReplicationOutcome>> {
    let (d, iv) = simulate_and_prepare(model, seed)?;
    let levels = model.levels();
    let prelim = if levels.iter().any(Option::is_some) {
        Some(preliminary_estimate(&d)?)
    } else {
        None
    };
    let rows = d.n_rows();
    levels
        .into_iter()
        .map(|level| {
            let spec = match (level, &prelim) {
                (Some(l), Some(p)) => rule_from_preliminary(p, l, d.grid.delta_n, options)?,
                _ => TruncationSpec::no_truncation(),
            };
            let res = truncated_covariation(&d, &spec, 0..rows)?;
            let spectrum = kept_spectrum(&d, &res);
            let mut dims = [0usize; 4];
            for (k, p) in DIMENSION_LEVELS.iter().enumerate() {
                dims[k] = dimensions(&spectrum.eigenvalues, *p)?;
            }
            Ok(ReplicationOutcome {
                level,
                relative_error: relative_error(&res.truncated_kernel, &iv)?,
                dims,
                flagged: res.flagged_increments.len(),
            })
        })
        .collect()
}

/// Aggregated results of one (model, scenario, level) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub model: String,
    pub scenario: Scenario,
    pub level: Option<f64>,
    pub replications: usize,
    pub relative_error: Quartiles,
    /// One entry per explained fraction in [`DIMENSION_LEVELS`].
    pub dims: Vec<Quartiles>,
    pub flagged: Quartiles,
    /// Not serialized.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub master_seed: u64,
    pub replications: usize,
    pub rows: Vec<McRow>,
}

impl McSummary {
    pub fn row(&self, model: &str, level: Option<f64>) -> Option<&McRow> {
        self.rows.iter().find(|r| r.model == model && r.level == level)
    }
}

/// Runs every model for `replications` seeded replications. Replication `r`
/// uses the same seed across models.
pub fn mc_run(models: &[ModelSpec], replications: usize, master_seed: u64, options: RuleOptions) -> Result<McSummary> {
    if replications == 0 {
        return Err(Error::config("replications must be ≥ 1"));
    }
    options.validate()?;
    let mut rows = Vec::new();
    for model in models {
        model.sim.validate()?;
        let start = Instant::now();
        let outcomes: Vec<Vec<ReplicationOutcome>> = (0..replications)
            .into_par_iter()
            .map(|r| {
                let seed = derive_seed(master_seed, r as u64);
                run_replication(model, seed, options).map_err(|e| {
                    log::error!("model {} replication {r} (seed {seed}) failed: {e}", model.name);
                    Error::Replication {
                        replication: r,
                        seed,
                        source: Box::new(e),
                    }
                })
            })
            .collect::<Result<_>>()?;
        let elapsed = start.elapsed().as_secs_f64();
        for (k, level) in model.levels().into_iter().enumerate() {
            let pick = |f: &dyn Fn(&ReplicationOutcome) -> f64| -> Vec<f64> { outcomes.iter().map(|o| f(&o[k])).collect() };
            rows.push(McRow {
                model: model.name.clone(),
                scenario: model.scenario,
                level,
                replications,
                relative_error: Quartiles::of(&pick(&|o| o.relative_error)),
                dims: (0..DIMENSION_LEVELS.len())
                    .map(|p| Quartiles::of(&pick(&|o| o.dims[p] as f64)))
                    .collect(),
                flagged: Quartiles::of(&pick(&|o| o.flagged as f64)),
                wall_clock_secs: elapsed,
            });
        }
    }
    Ok(McSummary {
        master_seed,
        replications,
        rows,
    })
}

/// Dense (M1), sparse presmoothed (M2) and jump (M3) models in scenarios S1 and
/// S2, at `n` steps per year up to maturity `max_maturity`.
pub fn standard_models(n: usize, max_maturity: f64) -> Result<Vec<ModelSpec>> {
    let dense = SimConfig::dense(50.0, n, max_maturity, 1.0)?;
    let mut sparse = dense.clone();
    sparse.m_obs = Some(100);
    sparse.sigma_eps = 0.01;
    let jumps = dense.clone().with_standard_jumps();
    let levels = vec![Some(3.0), Some(4.0), Some(5.0)];
    let mut out = Vec::new();
    for scenario in [Scenario::S1, Scenario::S2] {
        let tag = scenario.label();
        out.push(ModelSpec {
            name: format!("M1-{tag}"),
            sim: dense.clone(),
            scenario,
            levels: vec![None],
            pcs: 3,
        });
        out.push(ModelSpec {
            name: format!("M2-{tag}"),
            sim: sparse.clone(),
            scenario,
            levels: vec![None],
            pcs: 3,
        });
        out.push(ModelSpec {
            name: format!("M3-{tag}"),
            sim: jumps.clone(),
            scenario,
            levels: levels.clone(),
            pcs: 3,
        });
    }
    Ok(out)
}

//! Experiment orchestration: Monte-Carlo study, empirical yearwise pipeline,
//! factor-approximation study and report emission.

pub mod config;
pub mod empirical;
pub mod mc;
pub mod report;
pub mod rmae;

use nalgebra::DMatrix;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::covariation::CovariationResult;
use crate::curve_panel::DifferenceReturnPanel;
use crate::error::Result;
use crate::kernel_space::{dimension_from_weights, eigendecompose_gram, SpectralDecomposition, StepBasis};
use crate::linalg::sorted_linear_quantile;
use crate::simulator::stream_rng;

pub use config::HarnessConfig;
pub use empirical::{empirical_periods, empirical_run, year_periods, EmpiricalOptions, EmpiricalOutput, Period, YearReport};
pub use mc::{mc_run, standard_models, ModelSpec, McSummary, Scenario};
pub use report::{emit_report, KernelExport, ReportInputs, RunInfo};
pub use rmae::{rmae_study, FactorSource, RmaeInput, RmaeTable, ValidationSpec};

/// Explained fractions at which dimensions are reported.
pub const DIMENSION_LEVELS: [f64; 4] = [0.85, 0.90, 0.95, 0.99];

/// First quartile, median and third quartile (linear interpolation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Quartiles {
        if values.is_empty() {
            return Quartiles {
                q1: f64::NAN,
                median: f64::NAN,
                q3: f64::NAN,
            };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Quartiles {
            q1: sorted_linear_quantile(&v, 0.25),
            median: sorted_linear_quantile(&v, 0.5),
            q3: sorted_linear_quantile(&v, 0.75),
        }
    }
}

/// Seed of replication `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    stream_rng(master, index).next_u64()
}

/// Rows of `d` that entered the truncated kernel of `res`.
pub(crate) fn kept_rows(d: &DifferenceReturnPanel, res: &CovariationResult) -> DMatrix<f64> {
    let flagged: std::collections::HashSet<usize> = res.flagged_increments.iter().copied().collect();
    let idx: Vec<usize> = res.rows.clone().filter(|i| !flagged.contains(i)).collect();
    d.values.select_rows(idx.iter())
}

/// Nonzero spectrum of the truncated kernel of `res`.
pub(crate) fn kept_spectrum(d: &DifferenceReturnPanel, res: &CovariationResult) -> SpectralDecomposition {
    let dn = d.grid.delta_n;
    eigendecompose_gram(dn, &kept_rows(d, res), 1.0 / (dn * dn))
}

/// `D(p)` from ordered weights; zero when the operator vanishes.
pub(crate) fn dimensions(weights: &[f64], p: f64) -> Result<usize> {
    if weights.iter().all(|&w| w == 0.0) {
        return Ok(0);
    }
    dimension_from_weights(weights, p)
}

/// `D(p)` of the kernel `Σ_r d_r ⊗ d_r` in the directions of `basis`, measured
/// against the kernel's full trace. `None` when the basis captures at most a
/// fraction `p` of it.
pub(crate) fn basis_dimension(rows: &DMatrix<f64>, basis: &StepBasis, p: f64) -> Option<usize> {
    let total = rows.norm_squared();
    if total == 0.0 {
        return Some(0);
    }
    let coeffs = rows * (&basis.heights * basis.delta_n.sqrt());
    let mut acc = 0.0;
    for k in 0..coeffs.ncols() {
        acc += coeffs.column(k).norm_squared();
        if acc > p * total {
            return Some(k + 1);
        }
    }
    None
}

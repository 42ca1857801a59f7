//! Realized covariation of difference returns and its truncated (continuous)
//! and jump parts.
//!
//! Every kernel returned here carries the `Δn⁻²` factor, so it estimates the
//! quadratic covariation `[X, X]` over the selected rows directly.

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve_panel::DifferenceReturnPanel;
use crate::error::{Error, Result};
use crate::kernel_space::{hs_norm, StepKernel};
use crate::truncation::TruncationSpec;

const IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CovariationResult {
    /// `q̂`: all rows.
    pub kernel: StepKernel,
    /// `q̂⁻`: rows with `g_n(d_i/Δn) ≤ u_n`.
    pub truncated_kernel: StepKernel,
    /// `q̂⁺ = q̂ − q̂⁻`: flagged rows only.
    pub jump_kernel: StepKernel,
    /// Panel row indices with `g_n(d_i/Δn) > u_n`.
    pub flagged_increments: Vec<usize>,
    /// `g_n(d_i/Δn)` for every row in `rows`.
    pub g_values: Vec<f64>,
    pub rows: Range<usize>,
    pub spec: TruncationSpec,
}

impl CovariationResult {
    /// `‖q̂⁻‖_HS / ‖q̂‖_HS`, or 1 when `q̂` vanishes.
    pub fn norm_ratio(&self) -> f64 {
        let total = hs_norm(&self.kernel);
        if total > 0.0 {
            hs_norm(&self.truncated_kernel) / total
        } else {
            1.0
        }
    }

    pub fn manifest(&self) -> CovariationManifest {
        CovariationManifest {
            rows_used: self.rows.len() - self.flagged_increments.len(),
            rows_flagged: self.flagged_increments.len(),
            u_n: self.spec.u_n,
            g_kind: self.spec.g_kind.name().to_string(),
            hs_norm_total: hs_norm(&self.kernel),
            hs_norm_truncated: hs_norm(&self.truncated_kernel),
            ratio: self.norm_ratio(),
        }
    }
}

/// Per-estimation run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariationManifest {
    pub rows_used: usize,
    pub rows_flagged: usize,
    pub u_n: f64,
    pub g_kind: String,
    pub hs_norm_total: f64,
    pub hs_norm_truncated: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct LongRunVolatility {
    pub kernel: StepKernel,
    pub per_period: Vec<StepKernel>,
}

fn check_range(d: &DifferenceReturnPanel, rows: &Range<usize>) -> Result<()> {
    if rows.start >= rows.end || rows.end > d.n_rows() {
        return Err(Error::data(format!(
            "row range {rows:?} is empty or outside 0..{}",
            d.n_rows()
        )));
    }
    Ok(())
}

fn scaled_gram(d: &DifferenceReturnPanel, selected: &[usize]) -> StepKernel {
    let dn = d.grid.delta_n;
    let sub: DMatrix<f64> = d.values.select_rows(selected.iter());
    StepKernel::from_gram(dn, &sub, 1.0 / (dn * dn))
}

/// `Δn⁻² Σ_{i ∈ rows} d_i ⊗ d_i`.
pub fn realized_covariation(d: &DifferenceReturnPanel, rows: Range<usize>) -> Result<StepKernel> {
    check_range(d, &rows)?;
    let dn = d.grid.delta_n;
    let sub = d.values.rows(rows.start, rows.len()).clone_owned();
    Ok(StepKernel::from_gram(dn, &sub, 1.0 / (dn * dn)))
}

/// Splits `q̂` over `rows` into the truncated part and the flagged jump part.
pub fn truncated_covariation(
    d: &DifferenceReturnPanel,
    spec: &TruncationSpec,
    rows: Range<usize>,
) -> Result<CovariationResult> {
    check_range(d, &rows)?;
    spec.validate()?;
    let sub = d.rows(rows.clone())?;
    let g_values = spec.g_values(&sub)?;
    let mut kept = Vec::with_capacity(rows.len());
    let mut flagged = Vec::new();
    for (k, &g) in g_values.iter().enumerate() {
        if g > spec.u_n {
            flagged.push(k);
        } else {
            kept.push(k);
        }
    }
    let truncated_kernel = scaled_gram(&sub, &kept);
    let jump_kernel = scaled_gram(&sub, &flagged);
    let kernel = truncated_kernel.add(&jump_kernel)?;
    check_split(&kernel, &truncated_kernel, &jump_kernel)?;
    Ok(CovariationResult {
        kernel,
        truncated_kernel,
        jump_kernel,
        flagged_increments: flagged.into_iter().map(|k| k + rows.start).collect(),
        g_values,
        rows,
        spec: spec.clone(),
    })
}

fn check_split(total: &StepKernel, minus: &StepKernel, plus: &StepKernel) -> Result<()> {
    let scale = total.values().amax().max(f64::MIN_POSITIVE);
    let err = (total.values() - minus.values() - plus.values()).amax();
    if err > IDENTITY_TOL * scale {
        return Err(Error::numerical(format!(
            "q = q⁻ + q⁺ violated by {err:.3e} (scale {scale:.3e})"
        )));
    }
    Ok(())
}

/// One result per period `[b_k, b_{k+1})`; the truncation rule is rebuilt
/// from each period's rows alone.
pub fn yearwise_covariations<F>(
    d: &DifferenceReturnPanel,
    boundaries: &[usize],
    spec_builder: F,
) -> Result<Vec<CovariationResult>>
where
    F: Fn(&DifferenceReturnPanel) -> Result<TruncationSpec> + Sync,
{
    if boundaries.len() < 2 {
        return Err(Error::config("need at least two period boundaries"));
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) || *boundaries.last().unwrap() > d.n_rows() {
        return Err(Error::config(format!(
            "period boundaries {boundaries:?} must increase within 0..={}",
            d.n_rows()
        )));
    }
    boundaries
        .windows(2)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|w| {
            let range = w[0]..w[1];
            if range.len() < 2 {
                return Err(Error::InsufficientData {
                    what: "rows in period",
                    required: 2,
                    actual: range.len(),
                });
            }
            let sub = d.rows(range.clone())?;
            let spec = spec_builder(&sub)?;
            let mut res = truncated_covariation(&sub, &spec, 0..range.len())?;
            for f in res.flagged_increments.iter_mut() {
                *f += range.start;
            }
            res.rows = range;
            Ok(res)
        })
        .collect()
}

/// Arithmetic mean of the truncated kernels.
pub fn long_time_average(results: &[CovariationResult]) -> Result<LongRunVolatility> {
    let kernels: Vec<StepKernel> = results.iter().map(|r| r.truncated_kernel.clone()).collect();
    average_kernels(kernels)
}

pub fn average_kernels(kernels: Vec<StepKernel>) -> Result<LongRunVolatility> {
    let first = kernels
        .first()
        .ok_or_else(|| Error::config("long-run average needs at least one period"))?;
    let mut sum = StepKernel::zeros(first.delta_n(), first.m_cells());
    for k in &kernels {
        sum = sum.add(k)?;
    }
    Ok(LongRunVolatility {
        kernel: sum.scaled(1.0 / kernels.len() as f64),
        per_period: kernels,
    })
}

/// Plug-in asymptotic covariance
/// `T⁻¹ (q̂⁻(x,z) q̂⁻(w,y) + q̂⁻(x,w) q̂⁻(z,y))`.
pub fn clt_asymptotic_variance(q_minus: &StepKernel, horizon: f64, coords: (f64, f64, f64, f64)) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::config(format!("horizon must be positive, got {horizon}")));
    }
    let (x, z, w, y) = coords;
    let q = |a: f64, b: f64| q_minus.value_at(a, b);
    Ok((q(x, z)? * q(w, y)? + q(x, w)? * q(z, y)?) / horizon)
}

/// Plug-in variance of the entry `(x, y)`: `T⁻¹ (q̂⁻(x,x) q̂⁻(y,y) + q̂⁻(x,y)²)`.
pub fn clt_entry_variance(q_minus: &StepKernel, horizon: f64, x: f64, y: f64) -> Result<f64> {
    clt_asymptotic_variance(q_minus, horizon, (x, y, x, y))
}

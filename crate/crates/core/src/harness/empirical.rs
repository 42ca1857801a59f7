//! Yearwise pipeline on observed yield curves: jump flags, norm ratios,
//! dimensions and the long-run volatility kernel.

use std::ops::Range;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariation::{average_kernels, truncated_covariation, LongRunVolatility};
use crate::curve_panel::{difference_returns, yields_to_log_prices, DifferenceReturnPanel, YieldPanel};
use crate::error::{Error, Result};
use crate::harness::{basis_dimension, dimensions, DIMENSION_LEVELS};
use crate::kernel_space::{eigendecompose_gram, hs_norm, SpectralDecomposition, StepKernel};
use crate::truncation::{preliminary_estimate, rule_from_preliminary, RuleOptions};

const MIN_PERIOD_ROWS: usize = 8;

/// A block of consecutive difference-return rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub label: String,
    pub rows: Range<usize>,
}

/// Groups difference-return rows by the calendar year of their end date.
pub fn year_periods(dates: &[NaiveDate]) -> Result<Vec<Period>> {
    if dates.len() < 2 {
        return Err(Error::InsufficientData {
            what: "dates",
            required: 2,
            actual: dates.len(),
        });
    }
    let mut out: Vec<Period> = Vec::new();
    for r in 0..dates.len() - 1 {
        let label = dates[r + 1].year().to_string();
        match out.last_mut() {
            Some(p) if p.label == label => p.rows.end = r + 1,
            _ => out.push(Period { label, rows: r..r + 1 }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalOptions {
    pub levels: Vec<f64>,
    /// Level whose truncated kernels enter the long-run average.
    pub long_run_level: f64,
    pub rule: RuleOptions,
}

impl Default for EmpiricalOptions {
    fn default() -> Self {
        EmpiricalOptions {
            levels: vec![3.0, 4.0, 5.0],
            long_run_level: 3.0,
            rule: RuleOptions::default(),
        }
    }
}

impl EmpiricalOptions {
    pub fn validate(&self) -> Result<()> {
        self.rule.validate()?;
        if self.levels.is_empty() || self.levels.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::config("truncation levels must be a non-empty list of positive numbers"));
        }
        if !self.levels.contains(&self.long_run_level) {
            return Err(Error::config(format!(
                "long-run level {} is not among the truncation levels {:?}",
                self.long_run_level, self.levels
            )));
        }
        Ok(())
    }

    fn long_run_index(&self) -> usize {
        self.levels.iter().position(|&l| l == self.long_run_level).unwrap_or(0)
    }
}

/// Truncation outcome of one period at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelOutcome {
    pub l: f64,
    pub u_n: f64,
    /// Dimension used by the truncation functional.
    pub rule_dimension: usize,
    pub flags: usize,
    /// Absolute panel rows that were truncated.
    pub flagged_rows: Vec<usize>,
    pub ratio: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearReport {
    pub label: String,
    pub rows: Range<usize>,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub hs_norm: f64,
    /// All difference returns vanish; no rule was built.
    pub degenerate: bool,
    pub levels: Vec<LevelOutcome>,
    /// `D(p)` of the long-run-level truncated kernel in its own eigenbasis.
    pub dims_own: Vec<usize>,
    /// `D(p)` in the long-run eigenbasis; `None` when that basis cannot reach `p`.
    pub dims_long_run: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct EmpiricalOutput {
    pub periods: Vec<YearReport>,
    pub long_run: LongRunVolatility,
    pub long_run_spectrum: SpectralDecomposition,
}

struct PeriodWork {
    report: YearReport,
    long_run_kernel: StepKernel,
    long_run_rows: DMatrix<f64>,
}

/// Difference returns this small are rounding residue of flat curves.
const DEGENERATE_TOL: f64 = 1e-13;

fn run_period(d: &DifferenceReturnPanel, period: &Period, options: &EmpiricalOptions) -> Result<PeriodWork> {
    let range = period.rows.clone();
    if range.len() < MIN_PERIOD_ROWS {
        return Err(Error::data(format!(
            "period {} has {} difference returns, need at least {MIN_PERIOD_ROWS}",
            period.label,
            range.len()
        )));
    }
    let sub = d.rows(range.clone())?;
    let dn = d.grid.delta_n;
    let degenerate = sub.values.amax() <= DEGENERATE_TOL;
    let mut levels = Vec::with_capacity(options.levels.len());
    let mut kept_by_level = Vec::with_capacity(options.levels.len());
    let mut hs_total = 0.0;
    let mut long_run_kernel = StepKernel::zeros(dn, sub.n_cols());
    if degenerate {
        log::warn!("period {}: all difference returns vanish", period.label);
        for &l in &options.levels {
            levels.push(LevelOutcome {
                l,
                u_n: f64::NAN,
                rule_dimension: 0,
                flags: 0,
                flagged_rows: Vec::new(),
                ratio: 1.0,
                warnings: vec!["degenerate period: all difference returns vanish".to_string()],
            });
            kept_by_level.push(DMatrix::zeros(0, sub.n_cols()));
        }
    } else {
        let prelim = preliminary_estimate(&sub)?;
        for (k, &l) in options.levels.iter().enumerate() {
            let spec = rule_from_preliminary(&prelim, l, dn, options.rule)?;
            let res = truncated_covariation(&sub, &spec, 0..sub.n_rows())?;
            hs_total = hs_norm(&res.kernel);
            let flagged: std::collections::HashSet<usize> = res.flagged_increments.iter().copied().collect();
            let kept: Vec<usize> = (0..sub.n_rows()).filter(|i| !flagged.contains(i)).collect();
            kept_by_level.push(sub.values.select_rows(kept.iter()));
            let audit = spec.audit.as_ref();
            levels.push(LevelOutcome {
                l,
                u_n: spec.u_n,
                rule_dimension: audit.map_or(0, |a| a.d),
                flags: res.flagged_increments.len(),
                flagged_rows: res.flagged_increments.iter().map(|&i| i + range.start).collect(),
                ratio: res.norm_ratio(),
                warnings: audit.map(|a| a.warnings.clone()).unwrap_or_default(),
            });
            if k == options.long_run_index() {
                long_run_kernel = res.truncated_kernel;
            }
        }
    }
    let lr_rows = kept_by_level.swap_remove(options.long_run_index());
    let spectrum = eigendecompose_gram(dn, &lr_rows, 1.0 / (dn * dn));
    let dims_own = DIMENSION_LEVELS
        .iter()
        .map(|&p| dimensions(&spectrum.eigenvalues, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(PeriodWork {
        report: YearReport {
            label: period.label.clone(),
            rows: range,
            first_date: None,
            last_date: None,
            hs_norm: hs_total,
            degenerate,
            levels,
            dims_own,
            dims_long_run: Vec::new(),
        },
        long_run_kernel,
        long_run_rows: lr_rows,
    })
}

/// Runs the yearwise pipeline on difference returns split into `periods`.
pub fn empirical_periods(
    d: &DifferenceReturnPanel,
    periods: &[Period],
    options: &EmpiricalOptions,
) -> Result<EmpiricalOutput> {
    options.validate()?;
    if periods.is_empty() {
        return Err(Error::config("no periods to analyse"));
    }
    let work: Vec<PeriodWork> = periods
        .par_iter()
        .map(|p| run_period(d, p, options))
        .collect::<Result<_>>()?;
    let dn = d.grid.delta_n;
    let n_periods = work.len() as f64;
    let stacked = stack_rows(work.iter().map(|w| &w.long_run_rows), d.n_cols());
    let long_run_spectrum = eigendecompose_gram(dn, &stacked, 1.0 / (dn * dn * n_periods));
    let basis = &long_run_spectrum.eigenfunctions;
    let mut reports = Vec::with_capacity(work.len());
    let mut kernels = Vec::with_capacity(work.len());
    for w in work {
        let mut report = w.report;
        report.dims_long_run = DIMENSION_LEVELS
            .iter()
            .map(|&p| basis_dimension(&w.long_run_rows, basis, p))
            .collect();
        reports.push(report);
        kernels.push(w.long_run_kernel);
    }
    Ok(EmpiricalOutput {
        periods: reports,
        long_run: average_kernels(kernels)?,
        long_run_spectrum,
    })
}

fn stack_rows<'a>(blocks: impl Iterator<Item = &'a DMatrix<f64>>, cols: usize) -> DMatrix<f64> {
    let blocks: Vec<&DMatrix<f64>> = blocks.collect();
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(total, cols);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Full pipeline from a dated yield panel, one period per calendar year.
pub fn empirical_run(y: &YieldPanel, options: &EmpiricalOptions) -> Result<EmpiricalOutput> {
    let dates = y
        .dates
        .as_ref()
        .ok_or_else(|| Error::data("the empirical pipeline needs dated yield curves"))?;
    let periods = year_periods(dates)?;
    let p = yields_to_log_prices(y)?;
    let d = difference_returns(&p)?;
    let mut out = empirical_periods(&d, &periods, options)?;
    for r in out.periods.iter_mut() {
        r.first_date = Some(dates[r.rows.start]);
        r.last_date = Some(dates[r.rows.end]);
    }
    Ok(out)
}

//! Yield, log-bond-price, forward-rate and difference-return panels.
//!
//! All panels share a [`GridSpec`]: the same step `Δn` is used along the
//! time axis and the maturity axis. Rows are dates, columns are maturities.

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::gram_eigen;

const GRID_TOL: f64 = 1e-9;

/// Shared discretization of time and maturity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Step in years, `1/n`.
    pub delta_n: f64,
    /// Number of time increments over `[0, T]`.
    pub n_steps: usize,
    /// Largest maturity `M` in years.
    pub max_maturity: f64,
    /// Horizon `T` in years.
    pub horizon: f64,
}

fn integral_ratio(x: f64, step: f64, what: &str) -> Result<usize> {
    let r = x / step;
    let k = r.round();
    if (r - k).abs() > GRID_TOL * r.abs().max(1.0) || k < 0.0 {
        return Err(Error::config(format!(
            "{what} = {x} is not an integer multiple of delta_n = {step}"
        )));
    }
    Ok(k as usize)
}

impl GridSpec {
    pub fn new(delta_n: f64, max_maturity: f64, horizon: f64) -> Result<Self> {
        if !(delta_n > 0.0 && delta_n.is_finite()) {
            return Err(Error::config(format!("delta_n must be positive, got {delta_n}")));
        }
        integral_ratio(max_maturity, delta_n, "max_maturity")?;
        let n_steps = integral_ratio(horizon, delta_n, "horizon")?;
        Ok(GridSpec {
            delta_n,
            n_steps,
            max_maturity,
            horizon,
        })
    }

    /// Grid with `n` steps per year.
    pub fn per_year(n: usize, max_maturity: f64, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("steps per year must be positive"));
        }
        Self::new(1.0 / n as f64, max_maturity, horizon)
    }

    /// Number of maturity cells `M/Δn`.
    pub fn m_cells(&self) -> usize {
        (self.max_maturity / self.delta_n).round() as usize
    }

    pub fn steps_per_year(&self) -> f64 {
        1.0 / self.delta_n
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.delta_n, self.max_maturity, self.horizon).and_then(|g| {
            if g.n_steps != self.n_steps {
                Err(Error::config(format!(
                    "n_steps {} inconsistent with horizon/delta_n = {}",
                    self.n_steps, g.n_steps
                )))
            } else {
                Ok(())
            }
        })
    }
}

fn check_finite(values: &DMatrix<f64>) -> Result<()> {
    for j in 0..values.ncols() {
        for i in 0..values.nrows() {
            let v = values[(i, j)];
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Continuously compounded yields, `values[(i, j)] = y_{iΔn}(jΔn)`.
#[derive(Debug, Clone)]
pub struct YieldPanel {
    pub grid: GridSpec,
    pub values: DMatrix<f64>,
    pub dates: Option<Vec<NaiveDate>>,
}

impl YieldPanel {
    pub fn new(grid: GridSpec, values: DMatrix<f64>) -> Result<Self> {
        check_finite(&values)?;
        if values.ncols() != grid.m_cells() + 1 {
            return Err(Error::DimensionMismatch {
                expected: grid.m_cells() + 1,
                actual: values.ncols(),
            });
        }
        Ok(YieldPanel {
            grid,
            values,
            dates: None,
        })
    }

    pub fn with_dates(mut self, dates: Vec<NaiveDate>) -> Result<Self> {
        if dates.len() != self.values.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.values.nrows(),
                actual: dates.len(),
            });
        }
        self.dates = Some(dates);
        Ok(self)
    }
}

/// Log zero-coupon prices, `values[(i, j)] = log P_{iΔn}(jΔn)`; column 0 is 0.
#[derive(Debug, Clone)]
pub struct LogBondPanel {
    pub grid: GridSpec,
    pub values: DMatrix<f64>,
    pub dates: Option<Vec<NaiveDate>>,
}

impl LogBondPanel {
    /// Wraps a matrix of log prices, forcing the zero-maturity column to 0.
    pub fn new(grid: GridSpec, mut values: DMatrix<f64>) -> Result<Self> {
        check_finite(&values)?;
        if values.ncols() < 1 {
            return Err(Error::data("log-price panel has no maturity columns"));
        }
        values.column_mut(0).fill(0.0);
        Ok(LogBondPanel {
            grid,
            values,
            dates: None,
        })
    }

    pub fn n_dates(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_maturities(&self) -> usize {
        self.values.ncols()
    }
}

/// Cell integrals of forward curves, `values[(i, j-1)] = ⟨1_{[(j-1)Δn, jΔn]}, f_{iΔn}⟩`.
#[derive(Debug, Clone)]
pub struct ForwardPanel {
    pub grid: GridSpec,
    pub values: DMatrix<f64>,
}

/// Difference returns `d_i(j)`; row `r` spans the dates `r → r+1`, column
/// `c` is maturity index `j = c + 1`.
#[derive(Debug, Clone)]
pub struct DifferenceReturnPanel {
    pub grid: GridSpec,
    pub values: DMatrix<f64>,
}

impl DifferenceReturnPanel {
    pub fn new(grid: GridSpec, values: DMatrix<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(DifferenceReturnPanel { grid, values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Sub-panel with the rows in `range`.
    pub fn rows(&self, range: std::ops::Range<usize>) -> Result<DifferenceReturnPanel> {
        if range.start >= range.end || range.end > self.n_rows() {
            return Err(Error::data(format!(
                "row range {range:?} is empty or outside 0..{}",
                self.n_rows()
            )));
        }
        Ok(DifferenceReturnPanel {
            grid: self.grid,
            values: self.values.rows(range.start, range.len()).clone_owned(),
        })
    }
}

/// `log P_t(x) = -x · y_t(x)`.
pub fn yields_to_log_prices(y: &YieldPanel) -> Result<LogBondPanel> {
    check_finite(&y.values)?;
    let dn = y.grid.delta_n;
    let values = DMatrix::from_fn(y.values.nrows(), y.values.ncols(), |i, j| {
        -(j as f64 * dn) * y.values[(i, j)]
    });
    let mut p = LogBondPanel::new(y.grid, values)?;
    p.dates = y.dates.clone();
    Ok(p)
}

/// Inverse of [`yields_to_log_prices`] on maturities `j ≥ 1`; the zero-maturity
/// yield is taken from the first positive maturity.
pub fn log_prices_to_yields(p: &LogBondPanel) -> Result<YieldPanel> {
    let dn = p.grid.delta_n;
    let cols = p.values.ncols();
    if cols < 2 {
        return Err(Error::InsufficientData {
            what: "maturity columns",
            required: 2,
            actual: cols,
        });
    }
    let values = DMatrix::from_fn(p.values.nrows(), cols, |i, j| {
        let jj = j.max(1);
        -p.values[(i, jj)] / (jj as f64 * dn)
    });
    Ok(YieldPanel {
        grid: p.grid,
        values,
        dates: p.dates.clone(),
    })
}

/// `log P_t(jΔn) = -Σ_{k ≤ j} F[k]`; returns `M/Δn + 1` maturity columns.
pub fn forwards_to_log_prices(f: &ForwardPanel) -> Result<LogBondPanel> {
    let m = f.grid.m_cells();
    if f.values.ncols() < m {
        return Err(Error::InsufficientData {
            what: "forward-panel maturity columns",
            required: m,
            actual: f.values.ncols(),
        });
    }
    let rows = f.values.nrows();
    let mut values = DMatrix::zeros(rows, m + 1);
    for i in 0..rows {
        let mut acc = 0.0;
        for j in 1..=m {
            acc -= f.values[(i, j - 1)];
            values[(i, j)] = acc;
        }
    }
    LogBondPanel::new(f.grid, values)
}

/// `d_i(j) = P[i+1][j] − P[i][j+1] − P[i+1][j−1] + P[i][j]` for every pair of
/// consecutive dates and `j = 1..J−1` where `J + 1` is the column count.
pub fn difference_returns(p: &LogBondPanel) -> Result<DifferenceReturnPanel> {
    let rows = p.values.nrows();
    let cols = p.values.ncols();
    if rows < 2 {
        return Err(Error::InsufficientData {
            what: "dates for difference returns",
            required: 2,
            actual: rows,
        });
    }
    if cols < 3 {
        return Err(Error::InsufficientData {
            what: "maturities for difference returns",
            required: 3,
            actual: cols,
        });
    }
    let v = &p.values;
    let out = DMatrix::from_fn(rows - 1, cols - 2, |i, c| {
        let j = c + 1;
        // Group as (P[i+1][j] − P[i+1][j−1]) − (P[i][j+1] − P[i][j]) so that
        // per-date constants cancel before they can lose precision.
        (v[(i + 1, j)] - v[(i + 1, j - 1)]) - (v[(i, j + 1)] - v[(i, j)])
    });
    DifferenceReturnPanel::new(p.grid, out)
}

/// Replaces date-to-date log-price increments by their projection onto the
/// top-`d` eigenvectors of the (uncentered) increment covariance, then
/// rebuilds levels from the first date.
pub fn project_onto_pcs(p: &LogBondPanel, d: usize) -> Result<LogBondPanel> {
    if d == 0 {
        return Err(Error::config("number of principal components must be ≥ 1"));
    }
    let rows = p.values.nrows();
    if rows < 2 {
        return Err(Error::InsufficientData {
            what: "dates for log-price increments",
            required: 2,
            actual: rows,
        });
    }
    let inc = DMatrix::from_fn(rows - 1, p.values.ncols(), |i, j| {
        p.values[(i + 1, j)] - p.values[(i, j)]
    });
    let eig = gram_eigen(&inc, 1.0 / (rows - 1) as f64);
    let k = d.min(eig.values.len());
    let basis = eig.vectors.columns(0, k);
    let coeffs = &inc * basis;
    let projected = coeffs * basis.transpose();
    let mut values = DMatrix::zeros(rows, p.values.ncols());
    values.row_mut(0).copy_from(&p.values.row(0));
    for i in 1..rows {
        let next = values.row(i - 1) + projected.row(i - 1);
        values.row_mut(i).copy_from(&next);
    }
    let mut out = LogBondPanel::new(p.grid, values)?;
    out.dates = p.dates.clone();
    Ok(out)
}

/// `(d_L)_i(j) = Σ_{l=0}^{L} d_i(j+l)`; the column count shrinks by `L`.
pub fn higher_order_difference_returns(
    d: &DifferenceReturnPanel,
    lag: usize,
) -> Result<DifferenceReturnPanel> {
    let cols = d.n_cols();
    if lag >= cols {
        return Err(Error::InsufficientData {
            what: "maturity columns for lagged difference returns",
            required: lag + 1,
            actual: cols,
        });
    }
    let out_cols = cols - lag;
    let mut out = DMatrix::zeros(d.n_rows(), out_cols);
    for i in 0..d.n_rows() {
        // Sliding window over the row.
        let mut acc: f64 = (0..=lag).map(|l| d.values[(i, l)]).sum();
        out[(i, 0)] = acc;
        for c in 1..out_cols {
            acc += d.values[(i, c + lag)] - d.values[(i, c - 1)];
            out[(i, c)] = acc;
        }
    }
    Ok(DifferenceReturnPanel {
        grid: d.grid,
        values: out,
    })
}

//! Truncation functions and the two-step data-driven truncation rule.
//!
//! Step one trims the 25% of increments with the largest `l²` norm, forms a
//! covariation kernel from the rest and rescales it with a robust
//! interquartile estimate of the leading factor's variance. Step two builds a
//! Mahalanobis-type functional from that kernel's spectrum and sets the
//! threshold `u_n = l·√(d+1)·Δn^w`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::curve_panel::DifferenceReturnPanel;
use crate::error::{Error, Result};
use crate::kernel_space::{dimension_from_weights, eigendecompose_gram, SpectralDecomposition, StepBasis, StepKernel};
use crate::linalg::{linear_quantile, nearest_rank_quantile};

/// `Φ⁻¹(0.75)`, the upper quartile of the standard normal law.
pub const NORMAL_Q75: f64 = 0.674_489_750_196_081_7;

pub const DEFAULT_W_EXPONENT: f64 = 0.49;
pub const DEFAULT_EXPLAINED: f64 = 0.90;
const TRIM_QUANTILE: f64 = 0.75;
const MIN_PRELIMINARY_ROWS: usize = 8;

/// How the leading Mahalanobis coordinates are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeadingWeight {
    /// `⟨h, e_i⟩² / λ_i` (χ²-calibrated).
    #[default]
    Inverse,
    /// `⟨h, e_i⟩² / λ_i²`.
    InverseSquared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisParams {
    pub d: usize,
    /// Leading eigenvalues `λ_1 ≥ … ≥ λ_d > 0`.
    pub eigenvalues: Vec<f64>,
    /// Leading eigenfunctions (orthonormal step functions).
    pub eigenfunctions: StepBasis,
    /// `Σ_{i>d} λ_i`.
    pub tail_mass: f64,
    pub weighting: LeadingWeight,
}

impl MahalanobisParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.eigenvalues.len() != self.d || self.eigenfunctions.len() != self.d {
            return Err(Error::config(format!(
                "Mahalanobis parameters need d ≥ 1 matching {} eigenvalues and {} eigenfunctions",
                self.eigenvalues.len(),
                self.eigenfunctions.len()
            )));
        }
        if let Some(bad) = self.eigenvalues.iter().find(|&&l| !(l > 0.0)) {
            return Err(Error::config(format!("leading eigenvalue {bad} is not positive")));
        }
        if !(self.tail_mass > 0.0) {
            return Err(Error::config(format!("tail mass {} is not positive", self.tail_mass)));
        }
        Ok(())
    }

    fn weight(&self, i: usize) -> f64 {
        match self.weighting {
            LeadingWeight::Inverse => self.eigenvalues[i],
            LeadingWeight::InverseSquared => self.eigenvalues[i] * self.eigenvalues[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GKind {
    L2Norm,
    Mahalanobis(MahalanobisParams),
}

impl GKind {
    pub fn name(&self) -> &'static str {
        match self {
            GKind::L2Norm => "l2",
            GKind::Mahalanobis(_) => "mahalanobis",
        }
    }
}

/// Audit trail of how a rule was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleAudit {
    pub l: f64,
    pub d: usize,
    pub u_n: f64,
    pub eigenvalues: Vec<f64>,
    pub tail_mass: f64,
    pub rho_star: f64,
    pub kept_fraction: f64,
    pub warnings: Vec<String>,
}

/// Truncation function `g_n` plus threshold `u_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationSpec {
    pub g_kind: GKind,
    pub u_n: f64,
    pub l: f64,
    pub w_exponent: f64,
    pub audit: Option<RuleAudit>,
}

impl TruncationSpec {
    /// `g = ‖·‖_{l²}` with an explicit threshold.
    pub fn l2(u_n: f64) -> Self {
        TruncationSpec {
            g_kind: GKind::L2Norm,
            u_n,
            l: f64::NAN,
            w_exponent: DEFAULT_W_EXPONENT,
            audit: None,
        }
    }

    /// Rule that never truncates (`l = ∞`).
    pub fn no_truncation() -> Self {
        TruncationSpec {
            g_kind: GKind::L2Norm,
            u_n: f64::INFINITY,
            l: f64::INFINITY,
            w_exponent: DEFAULT_W_EXPONENT,
            audit: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_n > 0.0) {
            return Err(Error::config(format!("threshold u_n must be positive, got {}", self.u_n)));
        }
        if let GKind::Mahalanobis(p) = &self.g_kind {
            p.validate()?;
        }
        Ok(())
    }

    pub fn g(&self, row: &[f64], delta_n: f64) -> Result<f64> {
        match &self.g_kind {
            GKind::L2Norm => Ok(g_l2(row, delta_n)),
            GKind::Mahalanobis(p) => g_mahalanobis(row, p, delta_n),
        }
    }

    /// `g_n(d_i / Δn)` for every row of the panel.
    pub fn g_values(&self, d: &DifferenceReturnPanel) -> Result<Vec<f64>> {
        match &self.g_kind {
            GKind::L2Norm => Ok(l2_values(&d.values, d.grid.delta_n)),
            GKind::Mahalanobis(p) => mahalanobis_values(&d.values, p, d.grid.delta_n),
        }
    }

    /// Rows with `g_n(d_i/Δn) > u_n`.
    pub fn flags(&self, d: &DifferenceReturnPanel) -> Result<Vec<bool>> {
        self.validate()?;
        Ok(self.g_values(d)?.into_iter().map(|g| g > self.u_n).collect())
    }

    /// Same truncation function with a different multiplier `l`.
    pub fn with_level(&self, l: f64, delta_n: f64) -> TruncationSpec {
        let d = match &self.g_kind {
            GKind::Mahalanobis(p) => p.d,
            GKind::L2Norm => self.audit.as_ref().map_or(0, |a| a.d),
        };
        let u_n = threshold(l, d, delta_n, self.w_exponent);
        let mut out = self.clone();
        out.l = l;
        out.u_n = u_n;
        if let Some(a) = out.audit.as_mut() {
            a.l = l;
            a.u_n = u_n;
        }
        out
    }
}

/// `u_n = l · √(d+1) · Δn^w`; `l = ∞` yields `u_n = ∞`.
pub fn threshold(l: f64, d: usize, delta_n: f64, w: f64) -> f64 {
    if l.is_infinite() {
        return f64::INFINITY;
    }
    l * ((d + 1) as f64).sqrt() * delta_n.powf(w)
}

/// Euclidean norm of `row / Δn`.
pub fn g_l2(row: &[f64], delta_n: f64) -> f64 {
    row.iter().map(|x| x * x).sum::<f64>().sqrt() / delta_n
}

fn l2_values(values: &DMatrix<f64>, delta_n: f64) -> Vec<f64> {
    (0..values.nrows())
        .map(|i| values.row(i).norm() / delta_n)
        .collect()
}

/// Mahalanobis truncation functional of `p_n(row / Δn)`:
/// `Σ_{i≤d} ⟨h, e_i⟩² / λ_i + ‖(I − P_d) h‖² / tail_mass`, square-rooted.
pub fn g_mahalanobis(row: &[f64], params: &MahalanobisParams, delta_n: f64) -> Result<f64> {
    let m = DMatrix::from_row_slice(1, row.len(), row);
    Ok(mahalanobis_values(&m, params, delta_n)?[0])
}

fn mahalanobis_values(values: &DMatrix<f64>, params: &MahalanobisParams, delta_n: f64) -> Result<Vec<f64>> {
    params.validate()?;
    if params.eigenfunctions.m_cells() != values.ncols() {
        return Err(Error::DimensionMismatch {
            expected: params.eigenfunctions.m_cells(),
            actual: values.ncols(),
        });
    }
    // For h = p_n(x/Δn): ⟨h, e_i⟩ = Σ_j x_j e_i[j] and ‖h‖² = Σ_j x_j² / Δn.
    let coords = values * &params.eigenfunctions.heights;
    Ok((0..values.nrows())
        .map(|r| {
            let total = values.row(r).norm_squared() / delta_n;
            let mut lead = 0.0;
            let mut captured = 0.0;
            for i in 0..params.d {
                let c = coords[(r, i)];
                captured += c * c;
                lead += c * c / params.weight(i);
            }
            let tail = (total - captured).max(0.0);
            (lead + tail / params.tail_mass).sqrt()
        })
        .collect())
}

/// Step one of the rule: trimmed, robustly rescaled covariation estimate.
#[derive(Debug, Clone)]
pub struct PreliminaryEstimate {
    /// `ρ* · Δn⁻² T⁻¹ Σ_{kept} d_i ⊗ d_i`.
    pub kernel: StepKernel,
    /// Nonzero spectrum of `kernel`.
    pub spectrum: SpectralDecomposition,
    pub rho_star: f64,
    pub kept_fraction: f64,
    pub kept_rows: Vec<usize>,
    /// Zero interquartile range: `ρ*` was left at 1.
    pub degenerate: bool,
}

pub fn preliminary_estimate(d: &DifferenceReturnPanel) -> Result<PreliminaryEstimate> {
    let rows = d.n_rows();
    if rows < MIN_PRELIMINARY_ROWS {
        return Err(Error::InsufficientData {
            what: "rows for the preliminary estimate",
            required: MIN_PRELIMINARY_ROWS,
            actual: rows,
        });
    }
    let dn = d.grid.delta_n;
    let norms = l2_values(&d.values, dn);
    let cut = nearest_rank_quantile(&norms, TRIM_QUANTILE);
    let kept_rows: Vec<usize> = (0..rows).filter(|&i| norms[i] <= cut).collect();
    let kept = d.values.select_rows(kept_rows.iter());
    let period = rows as f64 * dn;
    let scale = 1.0 / (dn * dn * period);

    let raw_spectrum = eigendecompose_gram(dn, &kept, scale);
    let lambda1 = raw_spectrum.eigenvalues.first().copied().unwrap_or(0.0);
    if !(lambda1 > 0.0) {
        return Err(Error::numerical(format!(
            "preliminary kernel has non-positive leading eigenvalue {lambda1:.3e}"
        )));
    }
    // Loadings of p_n(d_i/Δn) on ê_1 over all rows: Σ_j d_i(j) ê_1[j].
    let e1 = raw_spectrum.eigenfunctions.heights.column(0);
    let loadings: Vec<f64> = (0..rows).map(|i| d.values.row(i).transpose().dot(&e1)).collect();
    let iqr = linear_quantile(&loadings, 0.75) - linear_quantile(&loadings, 0.25);
    let (rho_star, degenerate) = if iqr > 0.0 {
        (iqr * iqr / (4.0 * NORMAL_Q75 * NORMAL_Q75 * dn * lambda1), false)
    } else {
        log::warn!("zero interquartile range in preliminary estimate; skipping rescaling");
        (1.0, true)
    };

    let mut spectrum = raw_spectrum;
    for v in spectrum.eigenvalues.iter_mut() {
        *v *= rho_star;
    }
    Ok(PreliminaryEstimate {
        kernel: StepKernel::from_gram(dn, &kept, scale * rho_star),
        spectrum,
        rho_star,
        kept_fraction: kept_rows.len() as f64 / rows as f64,
        kept_rows,
        degenerate,
    })
}

/// Tuning knobs of [`build_rule`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleOptions {
    pub explained: f64,
    pub w_exponent: f64,
    pub weighting: LeadingWeight,
}

impl Default for RuleOptions {
    fn default() -> Self {
        RuleOptions {
            explained: DEFAULT_EXPLAINED,
            w_exponent: DEFAULT_W_EXPONENT,
            weighting: LeadingWeight::Inverse,
        }
    }
}

impl RuleOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_exponent > 0.0 && self.w_exponent < 0.5) {
            return Err(Error::config(format!("w exponent must lie in (0, 0.5), got {}", self.w_exponent)));
        }
        if !(self.explained > 0.0 && self.explained < 1.0) {
            return Err(Error::config(format!("explained fraction must lie in (0, 1), got {}", self.explained)));
        }
        Ok(())
    }
}

/// Builds the data-driven rule for multiplier `l` (use `f64::INFINITY` to disable truncation).
pub fn build_rule(d: &DifferenceReturnPanel, l: f64, options: RuleOptions) -> Result<TruncationSpec> {
    options.validate()?;
    if !(l > 0.0) {
        return Err(Error::config(format!("truncation multiplier must be positive, got {l}")));
    }
    let prelim = preliminary_estimate(d)?;
    rule_from_preliminary(&prelim, l, d.grid.delta_n, options)
}

pub fn rule_from_preliminary(
    prelim: &PreliminaryEstimate,
    l: f64,
    delta_n: f64,
    options: RuleOptions,
) -> Result<TruncationSpec> {
    let spectrum = &prelim.spectrum;
    let dim = dimension_from_weights(&spectrum.eigenvalues, options.explained)?;
    let leading: Vec<f64> = spectrum.eigenvalues[..dim].to_vec();
    let tail_mass: f64 = spectrum.eigenvalues[dim..].iter().map(|v| v.max(0.0)).sum();
    let u_n = threshold(l, dim, delta_n, options.w_exponent);
    let mut warnings = Vec::new();
    if prelim.degenerate {
        warnings.push("zero interquartile range: rho* rescaling skipped".to_string());
    }
    let g_kind = if tail_mass > 0.0 {
        GKind::Mahalanobis(MahalanobisParams {
            d: dim,
            eigenvalues: leading.clone(),
            eigenfunctions: spectrum.eigenfunctions.truncated(dim),
            tail_mass,
            weighting: options.weighting,
        })
    } else {
        let msg = format!("tail mass {tail_mass:.3e} is not positive; falling back to the l2 truncation function");
        log::warn!("{msg}");
        warnings.push(msg);
        GKind::L2Norm
    };
    Ok(TruncationSpec {
        g_kind,
        u_n,
        l,
        w_exponent: options.w_exponent,
        audit: Some(RuleAudit {
            l,
            d: dim,
            u_n,
            eigenvalues: leading,
            tail_mass,
            rho_star: prelim.rho_star,
            kept_fraction: prelim.kept_fraction,
            warnings,
        }),
    })
}

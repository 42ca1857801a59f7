//! JSON configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::empirical::EmpiricalOptions;
use crate::harness::mc::{standard_models, ModelSpec};
use crate::harness::rmae::{FactorSource, ValidationSpec};
use crate::simulator::SimConfig;
use crate::truncation::RuleOptions;

/// Observed yield curves in long CSV format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub yields_csv: PathBuf,
    pub steps_per_year: usize,
    pub max_maturity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    /// Truncation multiplier; `null` disables truncation.
    pub level: Option<f64>,
    pub export_triplets: bool,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            level: Some(3.0),
            export_triplets: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub replications: usize,
    pub steps_per_year: usize,
    pub max_maturity: f64,
    /// Explicit models; the standard six-model set when absent.
    pub models: Option<Vec<ModelSpec>>,
    /// Restrict the run to these model names.
    pub only: Option<Vec<String>>,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            replications: 100,
            steps_per_year: 100,
            max_maturity: 10.0,
            models: None,
            only: None,
        }
    }
}

impl McConfig {
    pub fn resolved_models(&self) -> Result<Vec<ModelSpec>> {
        let all = match &self.models {
            Some(m) => m.clone(),
            None => standard_models(self.steps_per_year, self.max_maturity)?,
        };
        match &self.only {
            None => Ok(all),
            Some(names) => {
                for n in names {
                    if !all.iter().any(|m| &m.name == n) {
                        return Err(Error::config(format!("unknown model {n:?}")));
                    }
                }
                Ok(all.into_iter().filter(|m| names.contains(&m.name)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmpiricalConfig {
    pub levels: Vec<f64>,
    pub long_run_level: f64,
    /// Also write every period's truncated kernel.
    pub export_period_kernels: bool,
}

impl Default for EmpiricalConfig {
    fn default() -> Self {
        let o = EmpiricalOptions::default();
        EmpiricalConfig {
            levels: o.levels,
            long_run_level: o.long_run_level,
            export_period_kernels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmaeConfig {
    pub lags: Vec<usize>,
    pub max_factors: usize,
    pub validation_per_period: usize,
    pub sources: Vec<FactorSource>,
}

impl Default for RmaeConfig {
    fn default() -> Self {
        RmaeConfig {
            lags: vec![7, 30, 90, 180],
            max_factors: 15,
            validation_per_period: ValidationSpec::default().per_period,
            sources: vec![FactorSource::LogPricePcs, FactorSource::LongRunEigen],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub seed: u64,
    pub rule: RuleOptions,
    pub data: Option<DataConfig>,
    pub simulate: Option<SimConfig>,
    pub estimate: EstimateConfig,
    pub mc: McConfig,
    pub empirical: EmpiricalConfig,
    pub rmae: RmaeConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            seed: 20_240_601,
            rule: RuleOptions::default(),
            data: None,
            simulate: None,
            estimate: EstimateConfig::default(),
            mc: McConfig::default(),
            empirical: EmpiricalConfig::default(),
            rmae: RmaeConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: HarnessConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; a relative `data.yields_csv` is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(data) = cfg.data.as_mut() {
            if data.yields_csv.is_relative() {
                if let Some(dir) = path.parent() {
                    data.yields_csv = dir.join(&data.yields_csv);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.rule.validate()?;
        self.empirical_options().validate()?;
        if let Some(sim) = &self.simulate {
            sim.validate()?;
        }
        if self.mc.replications == 0 {
            return Err(Error::config("mc.replications must be ≥ 1"));
        }
        if let Some(l) = self.estimate.level {
            if !(l > 0.0) {
                return Err(Error::config(format!("estimate.level must be positive, got {l}")));
            }
        }
        if self.rmae.max_factors == 0 || self.rmae.lags.is_empty() {
            return Err(Error::config("rmae needs at least one lag and one factor"));
        }
        Ok(())
    }

    pub fn empirical_options(&self) -> EmpiricalOptions {
        EmpiricalOptions {
            levels: self.empirical.levels.clone(),
            long_run_level: self.empirical.long_run_level,
            rule: self.rule,
        }
    }

    pub fn data(&self) -> Result<&DataConfig> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::config("this command needs a `data` section with the yield file"))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }
}

//! Writes CSV tables, JSON summaries, kernel exports and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::csv_io::{write_kernel, write_kernel_triplets};
use crate::error::{Error, Result};
use crate::harness::empirical::YearReport;
use crate::harness::mc::McSummary;
use crate::harness::rmae::RmaeTable;
use crate::harness::DIMENSION_LEVELS;
use crate::kernel_space::{KernelSidecar, StepKernel};

/// A kernel to export under `kernels/<name>.csv`.
pub struct KernelExport<'a> {
    pub name: String,
    pub kernel: &'a StepKernel,
    pub triplets: bool,
}

/// Everything a run may emit; absent parts are skipped.
#[derive(Default)]
pub struct ReportInputs<'a> {
    pub mc: Option<&'a McSummary>,
    pub years: Option<&'a [YearReport]>,
    pub rmae: Option<&'a RmaeTable>,
    pub kernels: Vec<KernelExport<'a>>,
    /// Pre-rendered files, by path relative to the output directory.
    pub files: Vec<(String, Vec<u8>)>,
    /// Command-specific summary stored in the manifest.
    pub summary: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunInfo {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub wall_clock_secs: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: &'a str,
    created_at: String,
    wall_clock_secs: f64,
    files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<&'a serde_json::Value>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn fmt_level(l: Option<f64>) -> String {
    l.map_or_else(|| "none".to_string(), |v| v.to_string())
}

fn dim_tag(p: f64) -> String {
    format!("D{}", (p * 100.0).round())
}

pub fn mc_summary_csv(s: &McSummary) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["model", "scenario", "level", "replications", "rE_median", "rE_q1", "rE_q3"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for p in DIMENSION_LEVELS {
        let t = dim_tag(p);
        header.extend([format!("{t}_median"), format!("{t}_q1"), format!("{t}_q3")]);
    }
    header.extend(["flagged_median", "flagged_q1", "flagged_q3"].map(String::from));
    w.write_record(&header)?;
    for r in &s.rows {
        let mut rec = vec![
            r.model.clone(),
            r.scenario.label().to_string(),
            fmt_level(r.level),
            r.replications.to_string(),
        ];
        let mut push = |q: &crate::harness::Quartiles| {
            rec.extend([q.median.to_string(), q.q1.to_string(), q.q3.to_string()]);
        };
        push(&r.relative_error);
        for q in &r.dims {
            push(q);
        }
        push(&r.flagged);
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::data(e.to_string()))
}

pub fn year_report_csv(years: &[YearReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let levels: Vec<f64> = years.first().map(|y| y.levels.iter().map(|l| l.l).collect()).unwrap_or_default();
    let mut header: Vec<String> = ["period", "first_date", "last_date", "rows", "hs_norm", "degenerate"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for l in &levels {
        header.extend([format!("flags_l{l}"), format!("ratio_l{l}")]);
    }
    for p in DIMENSION_LEVELS {
        header.push(format!("{}_own", dim_tag(p)));
    }
    for p in DIMENSION_LEVELS {
        header.push(format!("{}_long_run", dim_tag(p)));
    }
    w.write_record(&header)?;
    let date = |d: Option<chrono::NaiveDate>| d.map(|d| d.to_string()).unwrap_or_default();
    for y in years {
        let mut rec = vec![
            y.label.clone(),
            date(y.first_date),
            date(y.last_date),
            y.rows.len().to_string(),
            y.hs_norm.to_string(),
            y.degenerate.to_string(),
        ];
        for l in &y.levels {
            rec.extend([l.flags.to_string(), l.ratio.to_string()]);
        }
        rec.extend(y.dims_own.iter().map(|d| d.to_string()));
        rec.extend(y.dims_long_run.iter().map(|d| d.map_or_else(|| "NA".to_string(), |v| v.to_string())));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::data(e.to_string()))
}

/// One row per (lag, source), one column per factor count.
pub fn rmae_csv(t: &RmaeTable) -> Result<Vec<u8>> {
    let max_d = t.entries.iter().map(|e| e.d).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["lag".to_string(), "source".to_string()];
    header.extend((1..=max_d).map(|d| format!("d{d}")));
    w.write_record(&header)?;
    let mut keys: Vec<(usize, _)> = Vec::new();
    for e in &t.entries {
        if !keys.contains(&(e.lag, e.source)) {
            keys.push((e.lag, e.source));
        }
    }
    for (lag, source) in keys {
        let mut rec = vec![lag.to_string(), source.label().to_string()];
        rec.extend((1..=max_d).map(|d| t.value(lag, source, d).map_or_else(String::new, |v| v.to_string())));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::data(e.to_string()))
}

fn kernel_files(k: &KernelExport<'_>) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    let mut buf = Vec::new();
    write_kernel(&mut buf, k.kernel)?;
    out.push((format!("kernels/{}.csv", k.name), buf));
    let sidecar = serde_json::to_vec_pretty(&KernelSidecar::for_kernel(k.kernel))?;
    out.push((format!("kernels/{}.json", k.name), sidecar));
    if k.triplets {
        let mut buf = Vec::new();
        write_kernel_triplets(&mut buf, k.kernel)?;
        out.push((format!("kernels/{}_triplets.csv", k.name), buf));
    }
    Ok(out)
}

/// Writes all present parts of `inputs` plus `manifest.json` into `out_dir`
/// and returns the written paths. Only the manifest's `created_at` and
/// `wall_clock_secs` vary between identical runs.
pub fn emit_report(inputs: &ReportInputs<'_>, out_dir: &Path, info: &RunInfo) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    if let Some(mc) = inputs.mc {
        files.push(("mc_summary.csv".into(), mc_summary_csv(mc)?));
        files.push(("mc_summary.json".into(), serde_json::to_vec_pretty(mc)?));
    }
    if let Some(years) = inputs.years {
        files.push(("year_report.csv".into(), year_report_csv(years)?));
        files.push(("year_report.json".into(), serde_json::to_vec_pretty(years)?));
    }
    if let Some(t) = inputs.rmae {
        files.push(("rmae.csv".into(), rmae_csv(t)?));
        files.push(("rmae.json".into(), serde_json::to_vec_pretty(t)?));
    }
    for k in &inputs.kernels {
        files.extend(kernel_files(k)?);
    }
    files.extend(inputs.files.iter().cloned());
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::with_capacity(files.len() + 1);
    for (name, bytes) in &files {
        let path = out_dir.join(name);
        write_file(&path, bytes)?;
        written.push(path);
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: &info.command,
        seed: info.seed,
        config_sha256: &info.config_sha256,
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        wall_clock_secs: info.wall_clock_secs,
        files: files.iter().map(|(n, _)| n.clone()).collect(),
        summary: inputs.summary.as_ref(),
    };
    let path = out_dir.join("manifest.json");
    write_file(&path, &serde_json::to_vec_pretty(&manifest)?)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::mc::{McRow, Scenario};
    use crate::harness::Quartiles;

    fn info() -> RunInfo {
        RunInfo {
            command: "test".into(),
            seed: 1,
            config_sha256: "00".into(),
            wall_clock_secs: 0.0,
        }
    }

    #[test]
    fn empty_results_write_manifest_only() {
        let dir = tempfile::tempdir().unwrap();
        let written = emit_report(&ReportInputs::default(), dir.path(), &info()).unwrap();
        assert_eq!(written, vec![dir.path().join("manifest.json")]);
        let m: serde_json::Value = serde_json::from_slice(&fs::read(&written[0]).unwrap()).unwrap();
        assert_eq!(m["seed"], 1);
        assert!(m["files"].as_array().unwrap().is_empty());
    }

    #[test]
    fn mc_schema() {
        let q = Quartiles {
            q1: 1.0,
            median: 2.0,
            q3: 3.0,
        };
        let s = McSummary {
            master_seed: 0,
            replications: 3,
            rows: vec![McRow {
                model: "M1-S1".into(),
                scenario: Scenario::S1,
                level: None,
                replications: 3,
                relative_error: q,
                dims: vec![q; 4],
                flagged: q,
                wall_clock_secs: 0.5,
            }],
        };
        let text = String::from_utf8(mc_summary_csv(&s).unwrap()).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header.len(), 4 + 3 * 6);
        assert_eq!(&header[4..7], &["rE_median", "rE_q1", "rE_q3"]);
        assert_eq!(header[7], "D85_median");
        assert_eq!(header[16], "D99_median");
        assert!(lines.next().unwrap().starts_with("M1-S1,S1,none,3,2,1,3"));
        assert!(lines.next().is_none());
    }

    #[test]
    fn unwritable_directory_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let err = emit_report(&ReportInputs::default(), &blocker.join("sub"), &info()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("file"));
    }
}

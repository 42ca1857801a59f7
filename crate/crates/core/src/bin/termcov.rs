use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use termcov::covariation::truncated_covariation;
use termcov::csv_io::{read_yields_file, write_panel};
use termcov::curve_panel::{difference_returns, forwards_to_log_prices, yields_to_log_prices, LogBondPanel, YieldPanel};
use termcov::harness::{
    emit_report, empirical_run, mc::mc_run, rmae_study, year_periods, EmpiricalOutput, HarnessConfig, KernelExport,
    ReportInputs, RmaeInput, RunInfo, ValidationSpec,
};
use termcov::simulator::{simulate_forward_panel, SimConfig};
use termcov::truncation::{build_rule, TruncationSpec};
use termcov::{Error, Result};

#[derive(Parser)]
#[command(name = "termcov", version, about = "Truncated realized covariation of bond-market difference returns")]
struct Cli {
    /// JSON configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Simulate one forward-curve panel and write it with its jump log.
    Simulate,
    /// Truncated covariation of the configured yield data over its full span.
    Estimate,
    /// Build and print the data-driven truncation rule.
    Rule,
    /// Monte-Carlo study.
    Mc,
    /// Yearwise jump and dimension tables with the long-run kernel.
    Empirical,
    /// Factor approximation errors of lagged difference returns.
    Rmae,
    /// Every study the configuration supports, in one output directory.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Rule => "rule",
            Command::Mc => "mc",
            Command::Empirical => "empirical",
            Command::Rmae => "rmae",
            Command::Report => "report",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let cfg = match &cli.config {
        Some(path) => HarnessConfig::load(path)?,
        None => HarnessConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    let start = Instant::now();
    let mut info = RunInfo {
        command: cli.command.name().to_string(),
        seed,
        config_sha256: cfg.hash()?,
        wall_clock_secs: 0.0,
    };
    let out = &cli.out;
    match cli.command {
        Command::Simulate => simulate(&cfg, cli.seed, out, &mut info, start),
        Command::Estimate => estimate(&cfg, out, &info, start),
        Command::Rule => rule(&cfg, out, &info, start),
        Command::Mc => {
            let summary = run_mc(&cfg, seed)?;
            info.wall_clock_secs = start.elapsed().as_secs_f64();
            let inputs = ReportInputs {
                mc: Some(&summary),
                summary: Some(mc_timings(&summary)),
                ..ReportInputs::default()
            };
            finish(&inputs, out, &info)
        }
        Command::Empirical => {
            let y = load_yields(&cfg)?;
            let emp = empirical_run(&y, &cfg.empirical_options())?;
            info.wall_clock_secs = start.elapsed().as_secs_f64();
            let mut inputs = empirical_inputs(&cfg, &emp);
            inputs.years = Some(&emp.periods);
            finish(&inputs, out, &info)
        }
        Command::Rmae => {
            let y = load_yields(&cfg)?;
            let emp = empirical_run(&y, &cfg.empirical_options())?;
            let table = run_rmae(&cfg, &y, &emp, seed)?;
            info.wall_clock_secs = start.elapsed().as_secs_f64();
            let inputs = ReportInputs {
                rmae: Some(&table),
                ..ReportInputs::default()
            };
            finish(&inputs, out, &info)
        }
        Command::Report => {
            let summary = run_mc(&cfg, seed)?;
            let empirical = match &cfg.data {
                Some(_) => {
                    let y = load_yields(&cfg)?;
                    let emp = empirical_run(&y, &cfg.empirical_options())?;
                    let table = run_rmae(&cfg, &y, &emp, seed)?;
                    Some((emp, table))
                }
                None => {
                    log::info!("no data section: skipping the empirical and factor studies");
                    None
                }
            };
            info.wall_clock_secs = start.elapsed().as_secs_f64();
            let mut inputs = match &empirical {
                Some((emp, _)) => empirical_inputs(&cfg, emp),
                None => ReportInputs::default(),
            };
            inputs.mc = Some(&summary);
            inputs.summary = Some(mc_timings(&summary));
            if let Some((emp, table)) = &empirical {
                inputs.years = Some(&emp.periods);
                inputs.rmae = Some(table);
            }
            finish(&inputs, out, &info)
        }
    }
}

fn finish(inputs: &ReportInputs<'_>, out: &Path, info: &RunInfo) -> Result<()> {
    let written = emit_report(inputs, out, info)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn load_yields(cfg: &HarnessConfig) -> Result<YieldPanel> {
    let data = cfg.data()?;
    read_yields_file(&data.yields_csv, data.steps_per_year, data.max_maturity)
}

fn run_mc(cfg: &HarnessConfig, seed: u64) -> Result<termcov::harness::McSummary> {
    let models = cfg.mc.resolved_models()?;
    mc_run(&models, cfg.mc.replications, seed, cfg.rule)
}

fn mc_timings(s: &termcov::harness::McSummary) -> serde_json::Value {
    let mut timings = serde_json::Map::new();
    for r in &s.rows {
        timings.insert(r.model.clone(), serde_json::json!(r.wall_clock_secs));
    }
    serde_json::json!({ "model_wall_clock_secs": timings })
}

fn empirical_inputs<'a>(cfg: &HarnessConfig, emp: &'a EmpiricalOutput) -> ReportInputs<'a> {
    let mut kernels = vec![KernelExport {
        name: "long_run".into(),
        kernel: &emp.long_run.kernel,
        triplets: true,
    }];
    if cfg.empirical.export_period_kernels {
        for (report, k) in emp.periods.iter().zip(&emp.long_run.per_period) {
            kernels.push(KernelExport {
                name: format!("period_{}", report.label),
                kernel: k,
                triplets: false,
            });
        }
    }
    ReportInputs {
        kernels,
        ..ReportInputs::default()
    }
}

fn run_rmae(
    cfg: &HarnessConfig,
    y: &YieldPanel,
    emp: &EmpiricalOutput,
    seed: u64,
) -> Result<termcov::harness::RmaeTable> {
    let dates = y.dates.as_deref().unwrap_or_default();
    let periods = year_periods(dates)?;
    let p = yields_to_log_prices(y)?;
    let d = difference_returns(&p)?;
    let input = RmaeInput {
        log_prices: &p,
        returns: &d,
        periods: &periods,
        long_run_basis: Some(&emp.long_run_spectrum.eigenfunctions),
    };
    rmae_study(
        &input,
        &cfg.rmae.sources,
        &cfg.rmae.lags,
        cfg.rmae.max_factors,
        ValidationSpec {
            per_period: cfg.rmae.validation_per_period,
            seed,
        },
    )
}

fn csv_bytes(labels: &[String], maturities: &[f64], values: &nalgebra::DMatrix<f64>, first: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_panel(&mut buf, first, labels, maturities, values)?;
    Ok(buf)
}

fn simulate(cfg: &HarnessConfig, seed: Option<u64>, out: &Path, info: &mut RunInfo, start: Instant) -> Result<()> {
    let mut sim = match &cfg.simulate {
        Some(s) => s.clone(),
        None => SimConfig::dense(50.0, 100, 10.0, 1.0)?,
    };
    if let Some(s) = seed {
        sim.seed = s;
    }
    info.seed = sim.seed;
    let panel = simulate_forward_panel(&sim)?;
    let p = forwards_to_log_prices(&panel.forwards)?;
    let dn = sim.grid.delta_n;
    let times: Vec<String> = (0..p.n_dates()).map(|i| (i as f64 * dn).to_string()).collect();
    let cells: Vec<f64> = (1..=panel.forwards.values.ncols()).map(|j| j as f64 * dn).collect();
    let points: Vec<f64> = (0..p.n_maturities()).map(|j| j as f64 * dn).collect();
    let mut jumps = csv::Writer::from_writer(Vec::new());
    jumps.write_record(["step", "component", "l2_norm"])?;
    for j in &panel.jumps {
        jumps.write_record([j.step.to_string(), j.component.to_string(), j.l2_norm.to_string()])?;
    }
    let jumps = jumps.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    let iv = panel.integrated_volatility(&sim, sim.grid.m_cells() - 1)?;
    info.wall_clock_secs = start.elapsed().as_secs_f64();
    let inputs = ReportInputs {
        kernels: vec![KernelExport {
            name: "integrated_volatility".into(),
            kernel: &iv,
            triplets: false,
        }],
        files: vec![
            ("forwards.csv".into(), csv_bytes(&times, &cells, &panel.forwards.values, "time")?),
            ("log_prices.csv".into(), csv_bytes(&times, &points, &p.values, "time")?),
            ("jumps.csv".into(), jumps),
        ],
        summary: Some(serde_json::json!({
            "jumps": panel.jumps.len(),
            "integrated_variance_loading": panel.cir.total_integral(),
        })),
        ..ReportInputs::default()
    };
    finish(&inputs, out, info)
}

fn data_returns(cfg: &HarnessConfig) -> Result<(LogBondPanel, termcov::curve_panel::DifferenceReturnPanel)> {
    let y = load_yields(cfg)?;
    let p = yields_to_log_prices(&y)?;
    let d = difference_returns(&p)?;
    Ok((p, d))
}

fn estimate(cfg: &HarnessConfig, out: &Path, info: &RunInfo, start: Instant) -> Result<()> {
    let (_, d) = data_returns(cfg)?;
    let spec = match cfg.estimate.level {
        Some(l) => build_rule(&d, l, cfg.rule)?,
        None => TruncationSpec::no_truncation(),
    };
    let res = truncated_covariation(&d, &spec, 0..d.n_rows())?;
    let mut info = info.clone();
    info.wall_clock_secs = start.elapsed().as_secs_f64();
    let t = cfg.estimate.export_triplets;
    let inputs = ReportInputs {
        kernels: vec![
            KernelExport {
                name: "q_hat".into(),
                kernel: &res.kernel,
                triplets: t,
            },
            KernelExport {
                name: "q_hat_truncated".into(),
                kernel: &res.truncated_kernel,
                triplets: t,
            },
            KernelExport {
                name: "q_hat_jumps".into(),
                kernel: &res.jump_kernel,
                triplets: t,
            },
        ],
        summary: Some(serde_json::json!({
            "covariation": res.manifest(),
            "flagged_rows": res.flagged_increments,
            "rule": spec.audit,
        })),
        ..ReportInputs::default()
    };
    finish(&inputs, out, &info)
}

fn rule(cfg: &HarnessConfig, out: &Path, info: &RunInfo, start: Instant) -> Result<()> {
    let (_, d) = data_returns(cfg)?;
    let l = cfg.estimate.level.unwrap_or(f64::INFINITY);
    let spec = build_rule(&d, l, cfg.rule)?;
    let audit = serde_json::to_value(&spec.audit)?;
    println!("{}", serde_json::to_string_pretty(&audit)?);
    let mut info = info.clone();
    info.wall_clock_secs = start.elapsed().as_secs_f64();
    let inputs = ReportInputs {
        files: vec![("rule.json".into(), serde_json::to_vec_pretty(&audit)?)],
        summary: Some(serde_json::json!({ "g_kind": spec.g_kind.name(), "u_n": spec.u_n })),
        ..ReportInputs::default()
    };
    finish(&inputs, out, &info)
}

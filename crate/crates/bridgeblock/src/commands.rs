//! The `sample`, `rates` and `experiment` subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bridgeblock_core::analysis::rate_report;
use bridgeblock_core::blocking::{run_blocked_sampler, CsvRecorder};
use bridgeblock_core::bridge::{
    expected_acceptance, sample_bridge_exact_through, sample_bridge_rejection, SamplerVariant,
};
use bridgeblock_core::diagnostics::ess;
use bridgeblock_core::models::DiffusionModel;
use bridgeblock_core::rng::StreamSeed;
use log::info;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::experiment::{cell_grid, plan_cell, run_experiment, summarise, CellStatus, ExperimentRecord};
use crate::output::{fmt_f64, Column, OutputDir, RunMeta};

/// Environment variable overriding the output directory.
pub const OUTPUT_ENV: &str = "BRIDGEBLOCK_OUT";
pub const DEFAULT_OUTPUT_DIR: &str = "results";

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Resolves the configuration and output directory. The output directory comes from
/// `--out`, then the environment, then the config file.
pub fn load(config_path: &Path, overrides: &Overrides) -> Result<(ExperimentConfig, OutputDir), CliError> {
    let mut cfg = ExperimentConfig::from_path(config_path)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    let dir = overrides
        .out
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let out = OutputDir::create(&dir, RunMeta::new(cfg.hash(), cfg.seed))?;
    Ok((cfg, out))
}

/// Summary of an unblocked run.
#[derive(Debug, Clone, Serialize)]
pub struct DrawSummary {
    pub mode: &'static str,
    pub model: String,
    pub t: f64,
    pub x0: f64,
    pub x_t: f64,
    pub variant: &'static str,
    pub requested_draws: usize,
    /// Accepted proposals, one per completed draw.
    pub accepted: usize,
    pub proposals: u64,
    pub acceptance_rate: f64,
    pub mean_proposals: f64,
    /// Closed-form acceptance probability, for Gaussian models.
    pub expected_acceptance: Option<f64>,
    pub elapsed_seconds: f64,
    pub ess: Option<f64>,
    pub taess: Option<f64>,
    pub status: &'static str,
    pub error: Option<String>,
}

fn variant_name(v: SamplerVariant) -> &'static str {
    match v {
        SamplerVariant::Approximate => "approximate",
        SamplerVariant::Exact => "exact",
    }
}

fn single<T: Copy>(values: &[T], key: &str) -> Result<T, CliError> {
    match values {
        [v] => Ok(*v),
        _ => Err(CliError::Config(format!("{key}: sample takes exactly one value, got {}", values.len()))),
    }
}

/// Draws independent bridges (no knots) or runs one blocked chain, depending on whether
/// the config gives knots. A budget failure still writes the partial output.
pub fn cmd_sample(cfg: &ExperimentConfig, out: &OutputDir) -> Result<serde_json::Value, CliError> {
    let model = cfg.model()?;
    single(&cfg.horizons(), "t")?;
    if cfg.is_blocked() {
        sample_blocked(&model, cfg, out)
    } else {
        sample_unblocked(&model, cfg, out)
    }
}

fn sample_unblocked(
    model: &DiffusionModel,
    cfg: &ExperimentConfig,
    out: &OutputDir,
) -> Result<serde_json::Value, CliError> {
    let t = cfg.horizons()[0];
    let x_t = cfg.endpoint(0);
    let variant: SamplerVariant = cfg.variant.into();
    let mesh = cfg.mesh();
    let upper = match variant {
        SamplerVariant::Exact => Some(match cfg.phi_upper_bound {
            Some(u) => u,
            None => model.phi_upper_bound().map_err(|e| CliError::core("sample", e))?,
        }),
        SamplerVariant::Approximate => None,
    };
    let csv_path = out.path("draws.csv");
    let io = |e: std::io::Error| CliError::io(&csv_path, e);
    let mut w = out.csv(
        "draws.csv",
        vec![
            Column::new("draw", "draw index"),
            Column::new("proposals", "proposals until acceptance"),
            Column::new("midpoint_value", "path value at T/2"),
        ],
    )?;
    let seed = StreamSeed::new(cfg.seed);
    let mut mids = Vec::with_capacity(cfg.draws);
    let mut proposals = 0u64;
    let mut failure = None;
    let start = Instant::now();
    for i in 0..cfg.draws {
        let mut rng = seed.stream(i as u64, 0);
        let drawn = match upper {
            Some(up) => {
                sample_bridge_exact_through(model, cfg.x0, x_t, 0.0, t, up, &[t / 2.0], cfg.max_proposals, &mut rng)
            }
            None => sample_bridge_rejection(model, cfg.x0, x_t, 0.0, t, &mesh, cfg.max_proposals, &mut rng),
        };
        match drawn {
            Ok(path) => {
                let mid = path.value_at(t / 2.0);
                proposals += path.meta.proposals_used;
                mids.push(mid);
                writeln!(w, "{i},{},{}", path.meta.proposals_used, fmt_f64(mid)).map_err(io)?;
            }
            Err(e) => {
                failure = Some(CliError::core(format!("draw {i}"), e));
                break;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    w.flush().map_err(io)?;
    let accepted = mids.len();
    let ess_value = ess(&mids).ok();
    let summary = DrawSummary {
        mode: "unblocked",
        model: model.name().to_string(),
        t,
        x0: cfg.x0,
        x_t,
        variant: variant_name(variant),
        requested_draws: cfg.draws,
        accepted,
        proposals,
        acceptance_rate: if proposals > 0 { accepted as f64 / proposals as f64 } else { 0.0 },
        mean_proposals: if accepted > 0 { proposals as f64 / accepted as f64 } else { f64::NAN },
        expected_acceptance: if model.is_gaussian() { expected_acceptance(model, t, cfg.x0, x_t).ok() } else { None },
        elapsed_seconds: elapsed,
        ess: ess_value,
        taess: ess_value.filter(|_| elapsed > 0.0).map(|e| e / elapsed),
        status: if failure.is_some() { "failed" } else { "ok" },
        error: failure.as_ref().map(|e| e.to_string()),
    };
    out.json("summary.json", &summary)?;
    out.write_schema()?;
    match failure {
        Some(e) => Err(e),
        None => Ok(serde_json::to_value(&summary).expect("summary serialises")),
    }
}

fn sample_blocked(
    model: &DiffusionModel,
    cfg: &ExperimentConfig,
    out: &OutputDir,
) -> Result<serde_json::Value, CliError> {
    let cells = cell_grid(cfg)?;
    let spec = single(&cells, "m/scheme")?;
    let plan = plan_cell(model, cfg, &spec)?;
    let labels: Vec<String> = plan.functionals.iter().map(|f| f.label()).collect();
    let chain_path = out.path("chain.csv");
    let file = std::fs::File::create(&chain_path).map_err(|e| CliError::io(&chain_path, e))?;
    let mut buffered = std::io::BufWriter::new(file);
    buffered.write_all(out.meta().csv_preamble().as_bytes()).map_err(|e| CliError::io(&chain_path, e))?;
    let mut columns = vec![Column::new("sweep", "sweep number, from 1")];
    columns.extend((1..=spec.m).map(|i| Column::new(format!("k{i}"), format!("knot {i} at time {i}·δ"))));
    columns.extend(labels.iter().map(|l| Column::new(l.clone(), "path functional")));
    out.register("chain.csv", columns);

    let mut recorder = CsvRecorder::new(buffered, spec.m, &labels, false);
    let seed = StreamSeed::new(cfg.seed);
    info!("sampling T = {}, m = {}, {} sweeps", spec.t, spec.m, cfg.n_sweeps);
    let outcome =
        run_blocked_sampler(model, plan.state, cfg.n_sweeps, &plan.sweep, &seed, &plan.functionals, &mut recorder);
    recorder.into_inner().flush().map_err(|e| CliError::io(&chain_path, e))?;
    let (run, failure) = match outcome {
        Ok(run) => (run, None),
        Err(e) => (*e.partial, Some(CliError::core("sample", e.error))),
    };

    let timing_path = out.path("timing.csv");
    let mut timing = out.csv(
        "timing.csv",
        vec![
            Column::new("sweep", "sweep number, from 1"),
            Column::new("nanos", "wall-clock nanoseconds of the sweep body"),
        ],
    )?;
    for (i, ns) in run.sweep_nanos.iter().enumerate() {
        writeln!(timing, "{},{ns}", i + 1).map_err(|e| CliError::io(&timing_path, e))?;
    }
    timing.flush().map_err(|e| CliError::io(&timing_path, e))?;

    let mut record = summarise(spec, cfg.n_sweeps, plan.burn_in, plan.analytic.as_ref(), &run);
    if let Some(e) = &failure {
        record.status = CellStatus::Failed { message: e.to_string(), exit_code: e.exit_code() };
    }
    let acceptance: Vec<Option<f64>> = record
        .proposals_per_set
        .iter()
        .zip(&record.updates_per_set)
        .map(|(&p, &u)| (p > 0).then(|| u as f64 / p as f64))
        .collect();
    let mut summary = serde_json::to_value(&record).expect("record serialises");
    summary["mode"] = json!("blocked");
    summary["model"] = json!(model.name());
    summary["variant"] = json!(variant_name(cfg.variant.into()));
    summary["acceptance_per_set"] = json!(acceptance);
    out.json("summary.json", &summary)?;
    out.write_schema()?;
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

/// Writes `rates.csv`: one closed-form rate row per (scheme, T, m).
pub fn cmd_rates(cfg: &ExperimentConfig, out: &OutputDir) -> Result<usize, CliError> {
    let model = cfg.model()?;
    let path = out.path("rates.csv");
    let mut w = out.csv(
        "rates.csv",
        vec![
            Column::new("scheme", "updating scheme"),
            Column::new("model", "diffusion model"),
            Column::new("m", "number of knots"),
            Column::new("t", "bridge horizon T"),
            Column::new("delta", "knot spacing T/(m+1)"),
            Column::new("c_delta", "partial correlation of neighbouring knots"),
            Column::new("lambda_max", "largest eigenvalue of the knot correlation operator"),
            Column::new("rho", "L2 convergence rate per sweep"),
            Column::new("relaxation_time", "-1/ln(rho), in sweeps"),
            Column::new("degenerate", "true when rho <= 0 and sweeps are independent"),
        ],
    )?;
    let mut rows = 0;
    for cell in cell_grid(cfg)? {
        let r = rate_report(&model, cell.scheme, cell.m, cell.t)
            .map_err(|e| CliError::core(format!("rates at T = {}, m = {}", cell.t, cell.m), e))?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scheme.name(),
            model.name(),
            r.m,
            fmt_f64(r.t_end),
            fmt_f64(r.delta),
            fmt_f64(r.c_delta),
            fmt_f64(r.lambda_max),
            fmt_f64(r.rho),
            fmt_f64(r.relaxation_time.sweeps),
            r.relaxation_time.degenerate,
        )
        .map_err(|e| CliError::io(&path, e))?;
        rows += 1;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    out.write_schema()?;
    Ok(rows)
}

/// Runs the experiment named on the command line, or in the config when absent.
pub fn cmd_experiment(
    cfg: &ExperimentConfig,
    which: Option<ExperimentKind>,
    out: &OutputDir,
) -> Result<ExperimentRecord, CliError> {
    let kind =
        which.or(cfg.experiment).ok_or_else(|| CliError::Config("experiment: no experiment kind given".into()))?;
    let record = run_experiment(cfg, kind, out)?;
    info!("{} of {} cells failed", record.failed_cells(), record.cells.len());
    Ok(record)
}

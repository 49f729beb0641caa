//! The (T, m, scheme) grid harness behind `bridgeblock experiment`.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use bridgeblock_core::analysis::{rate_report, RateReport};
use bridgeblock_core::blocking::{
    build_layout, default_burn_in, run_blocked_sampler, BlockedRun, BlockedState, Functional, NullRecorder, Scheme,
    SweepConfig,
};
use bridgeblock_core::diagnostics::{ess, fitted_rate};
use bridgeblock_core::models::DiffusionModel;
use bridgeblock_core::rng::StreamSeed;
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::output::{fmt_f64, fmt_opt, Column, OutputDir, RowWriter, RunMeta};

/// Longest autocorrelation lag used by the geometric-rate fit.
pub const RATE_FIT_MAX_LAG: usize = 200;

fn scheme_name<S: serde::Serializer>(s: &Scheme, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(s.name())
}

/// One grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellSpec {
    pub index: usize,
    pub t: f64,
    pub x_t: f64,
    pub m: usize,
    #[serde(serialize_with = "scheme_name")]
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { message: String, exit_code: i32 },
}

/// Measurements for one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    #[serde(flatten)]
    pub spec: CellSpec,
    pub delta: f64,
    pub n_sweeps: usize,
    pub completed_sweeps: usize,
    pub burn_in: usize,
    /// Wall-clock seconds of the retained (post burn-in) sweeps.
    pub elapsed_seconds: f64,
    /// Mean wall-clock seconds per sweep over all completed sweeps.
    pub mean_sweep_seconds: f64,
    pub ess: Option<f64>,
    pub taess: Option<f64>,
    pub fitted_rate: Option<f64>,
    pub analytic_rate: Option<f64>,
    pub analytic_relaxation_time: Option<f64>,
    pub proposals_per_set: Vec<u64>,
    pub updates_per_set: Vec<u64>,
    #[serde(flatten)]
    pub status: CellStatus,
}

impl CellRecord {
    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        let p: u64 = self.proposals_per_set.iter().sum();
        (p > 0).then(|| self.updates_per_set.iter().sum::<u64>() as f64 / p as f64)
    }

    pub fn columns() -> Vec<Column> {
        vec![
            Column::new("cell", "grid cell index"),
            Column::new("scheme", "updating scheme"),
            Column::new("t", "bridge horizon T"),
            Column::new("x_t", "right endpoint"),
            Column::new("m", "number of knots"),
            Column::new("delta", "knot spacing T/(m+1)"),
            Column::new("n_sweeps", "requested sweeps"),
            Column::new("completed_sweeps", "sweeps completed"),
            Column::new("burn_in", "sweeps discarded before diagnostics"),
            Column::new("elapsed_seconds", "wall-clock seconds of the retained sweeps"),
            Column::new("mean_sweep_seconds", "mean wall-clock seconds per sweep"),
            Column::new("ess", "effective sample size of the first functional"),
            Column::new("taess", "ESS per wall-clock second"),
            Column::new("inv_taess", "1/taESS, the cost of one independent draw"),
            Column::new("fitted_rate", "geometric rate fitted to the sample autocorrelation"),
            Column::new("analytic_rate", "closed-form convergence rate (Gaussian models)"),
            Column::new("acceptance_rate", "block updates per proposal"),
            Column::new("proposals_per_set", "proposals per update set, ';'-separated"),
            Column::new("updates_per_set", "block updates per update set, ';'-separated"),
            Column::new("status", "ok or failed"),
            Column::new("message", "failure description"),
        ]
    }

    pub fn csv_row(&self) -> String {
        let join = |v: &[u64]| v.iter().map(u64::to_string).collect::<Vec<_>>().join(";");
        let (status, message) = match &self.status {
            CellStatus::Ok => ("ok", String::new()),
            CellStatus::Failed { message, .. } => ("failed", message.replace([',', '\n'], " ")),
        };
        [
            self.spec.index.to_string(),
            self.spec.scheme.name().to_string(),
            fmt_f64(self.spec.t),
            fmt_f64(self.spec.x_t),
            self.spec.m.to_string(),
            fmt_f64(self.delta),
            self.n_sweeps.to_string(),
            self.completed_sweeps.to_string(),
            self.burn_in.to_string(),
            fmt_f64(self.elapsed_seconds),
            fmt_f64(self.mean_sweep_seconds),
            fmt_opt(self.ess),
            fmt_opt(self.taess),
            fmt_opt(self.taess.map(|x| 1.0 / x)),
            fmt_opt(self.fitted_rate),
            fmt_opt(self.analytic_rate),
            fmt_opt(self.acceptance_rate()),
            join(&self.proposals_per_set),
            join(&self.updates_per_set),
            status.to_string(),
            message,
        ]
        .join(",")
    }
}

/// Everything needed to run one blocked chain.
pub struct CellPlan {
    pub state: BlockedState,
    pub functionals: Vec<Functional>,
    pub burn_in: usize,
    pub analytic: Option<RateReport>,
    pub sweep: SweepConfig,
}

/// Expands the configuration into cells, ordered by T, then scheme, then m.
pub fn cell_grid(cfg: &ExperimentConfig) -> Result<Vec<CellSpec>, CliError> {
    let mut cells = Vec::new();
    for (i, t) in cfg.horizons().into_iter().enumerate() {
        for scheme in cfg.schemes()? {
            for m in cfg.knot_counts(t)? {
                cells.push(CellSpec { index: cells.len(), t, x_t: cfg.endpoint(i), m, scheme });
            }
        }
    }
    Ok(cells)
}

pub fn plan_cell(model: &DiffusionModel, cfg: &ExperimentConfig, spec: &CellSpec) -> Result<CellPlan, CliError> {
    let layout = build_layout(spec.t, spec.m, spec.scheme).map_err(|e| CliError::core("layout", e))?;
    let analytic = if model.is_gaussian() {
        Some(rate_report(model, spec.scheme, spec.m, spec.t).map_err(|e| CliError::core("analytic rate", e))?)
    } else {
        None
    };
    let burn_in = cfg
        .burn_in
        .unwrap_or_else(|| default_burn_in(analytic.as_ref().map(|r| r.relaxation_time.sweeps), cfg.n_sweeps));
    let functionals = cfg.functionals(spec.t)?;
    let state = BlockedState::new(layout, cfg.x0, spec.x_t, &cfg.mesh(), cfg.variant.into());
    let sweep = SweepConfig {
        max_proposals: cfg.max_proposals,
        phi_upper_bound: cfg.phi_upper_bound,
        parallel: cfg.parallel_blocks,
    };
    Ok(CellPlan { state, functionals, burn_in, analytic, sweep })
}

/// Diagnostics of a (possibly partial) run. Burn-in is capped at half the completed sweeps.
pub fn summarise(
    spec: CellSpec,
    n_sweeps: usize,
    plan_burn_in: usize,
    analytic: Option<&RateReport>,
    run: &BlockedRun,
) -> CellRecord {
    let done = run.sweep_nanos.len();
    let burn_in = plan_burn_in.min(done / 2);
    let elapsed = run.elapsed_seconds(burn_in);
    let series = run.functionals.first().map(|v| &v[burn_in.min(v.len())..]);
    let ess_value = series.and_then(|s| ess(s).ok());
    let fitted = series.and_then(|s| {
        let lag = RATE_FIT_MAX_LAG.min(s.len().saturating_sub(1) / 2);
        (lag >= 3).then(|| fitted_rate(s, lag).ok()).flatten()
    });
    CellRecord {
        spec,
        delta: run.state.layout().delta(),
        n_sweeps,
        completed_sweeps: done,
        burn_in,
        elapsed_seconds: elapsed,
        mean_sweep_seconds: if done > 0 { run.elapsed_seconds(0) / done as f64 } else { f64::NAN },
        ess: ess_value,
        taess: ess_value.filter(|_| elapsed > 0.0).map(|e| e / elapsed),
        fitted_rate: fitted,
        analytic_rate: analytic.map(|r| r.rho),
        analytic_relaxation_time: analytic.map(|r| r.relaxation_time.sweeps),
        proposals_per_set: run.state.proposals_per_set().to_vec(),
        updates_per_set: run.state.updates_per_set().to_vec(),
        status: CellStatus::Ok,
    }
}

fn failed(spec: CellSpec, n_sweeps: usize, err: &CliError) -> CellRecord {
    CellRecord {
        spec,
        delta: spec.t / (spec.m as f64 + 1.0),
        n_sweeps,
        completed_sweeps: 0,
        burn_in: 0,
        elapsed_seconds: 0.0,
        mean_sweep_seconds: f64::NAN,
        ess: None,
        taess: None,
        fitted_rate: None,
        analytic_rate: None,
        analytic_relaxation_time: None,
        proposals_per_set: Vec::new(),
        updates_per_set: Vec::new(),
        status: CellStatus::Failed { message: err.to_string(), exit_code: err.exit_code() },
    }
}

/// Runs one cell on its own stream family. Failures are recorded, not raised.
pub fn run_cell(model: &DiffusionModel, cfg: &ExperimentConfig, spec: CellSpec) -> CellRecord {
    let plan = match plan_cell(model, cfg, &spec) {
        Ok(p) => p,
        Err(e) => return failed(spec, cfg.n_sweeps, &e),
    };
    let seed = StreamSeed::new(cfg.seed).with_chain(spec.index as u64);
    let outcome =
        run_blocked_sampler(model, plan.state, cfg.n_sweeps, &plan.sweep, &seed, &plan.functionals, &mut NullRecorder);
    match outcome {
        Ok(run) => summarise(spec, cfg.n_sweeps, plan.burn_in, plan.analytic.as_ref(), &run),
        Err(e) => {
            let err = CliError::core(format!("cell {} (T = {}, m = {})", spec.index, spec.t, spec.m), e.error);
            let mut rec = summarise(spec, cfg.n_sweeps, plan.burn_in, plan.analytic.as_ref(), &e.partial);
            rec.status = CellStatus::Failed { message: err.to_string(), exit_code: err.exit_code() };
            rec
        }
    }
}

/// Per-horizon location of the taESS maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaessPeak {
    pub t: f64,
    #[serde(serialize_with = "scheme_name")]
    pub scheme: Scheme,
    pub best_delta: f64,
    pub best_m: usize,
    pub best_taess: f64,
    /// The maximum is neither the smallest nor the largest δ scanned.
    pub interior: bool,
}

/// Per-sweep time at the smallest m against the m closest to ten.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCostRatio {
    pub t: f64,
    #[serde(serialize_with = "scheme_name")]
    pub scheme: Scheme,
    pub smallest_m: usize,
    pub reference_m: usize,
    pub ratio: f64,
}

/// Least-squares slope of log(1/taESS) against log T.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSlope {
    #[serde(serialize_with = "scheme_name")]
    pub scheme: Scheme,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentSummary {
    CostPerSweep { ratios: Vec<SweepCostRatio> },
    TaessVsDelta { peaks: Vec<TaessPeak> },
    CostVsT { slopes: Vec<CostSlope> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub model: String,
    pub cells: Vec<CellRecord>,
    pub summary: ExperimentSummary,
}

impl ExperimentRecord {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_ok()).count()
    }
}

fn groups(cells: &[CellRecord]) -> Vec<(f64, Scheme, Vec<&CellRecord>)> {
    let mut out: Vec<(f64, Scheme, Vec<&CellRecord>)> = Vec::new();
    for c in cells {
        match out.iter_mut().find(|(t, s, _)| *t == c.spec.t && *s == c.spec.scheme) {
            Some((_, _, v)) => v.push(c),
            None => out.push((c.spec.t, c.spec.scheme, vec![c])),
        }
    }
    out
}

pub fn taess_peaks(cells: &[CellRecord]) -> Vec<TaessPeak> {
    groups(cells)
        .into_iter()
        .filter_map(|(t, scheme, group)| {
            let scored: Vec<(&CellRecord, f64)> =
                group.iter().filter_map(|c| c.taess.filter(|_| c.is_ok()).map(|x| (*c, x))).collect();
            let (best, best_taess) = scored.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1))?;
            let deltas = group.iter().map(|c| c.delta);
            let lo = deltas.clone().fold(f64::INFINITY, f64::min);
            let hi = deltas.fold(f64::NEG_INFINITY, f64::max);
            Some(TaessPeak {
                t,
                scheme,
                best_delta: best.delta,
                best_m: best.spec.m,
                best_taess,
                interior: best.delta > lo && best.delta < hi,
            })
        })
        .collect()
}

pub fn sweep_cost_ratios(cells: &[CellRecord]) -> Vec<SweepCostRatio> {
    groups(cells)
        .into_iter()
        .filter_map(|(t, scheme, group)| {
            let ok: Vec<&CellRecord> = group.into_iter().filter(|c| c.is_ok()).collect();
            let small = ok.iter().min_by_key(|c| c.spec.m)?;
            let reference = ok.iter().min_by_key(|c| c.spec.m.abs_diff(10))?;
            Some(SweepCostRatio {
                t,
                scheme,
                smallest_m: small.spec.m,
                reference_m: reference.spec.m,
                ratio: small.mean_sweep_seconds / reference.mean_sweep_seconds,
            })
        })
        .collect()
}

/// Ordinary least-squares slope of `y` on `x`; `None` with fewer than two distinct `x`.
pub fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn cost_slopes(cells: &[CellRecord]) -> Vec<CostSlope> {
    let mut schemes: Vec<Scheme> = Vec::new();
    for c in cells {
        if !schemes.contains(&c.spec.scheme) {
            schemes.push(c.spec.scheme);
        }
    }
    schemes
        .into_iter()
        .map(|s| {
            let pts: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.spec.scheme == s && c.is_ok())
                .filter_map(|c| c.taess.map(|x| (c.spec.t.ln(), (1.0 / x).ln())))
                .collect();
            CostSlope { scheme: s, slope: ols_slope(&pts) }
        })
        .collect()
}

/// Runs every cell of the grid and writes `cells.csv`, `experiment.json` and `schema.json`.
///
/// Cells run on `workers` threads, each with its own stream family, and rows are appended
/// as cells finish. A warning is logged once the projected runtime exceeds the budget.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    out: &OutputDir,
) -> Result<ExperimentRecord, CliError> {
    let model = cfg.model()?;
    let cells = cell_grid(cfg)?;
    let writer = RowWriter::new(out.csv("cells.csv", CellRecord::columns())?);
    let csv_path = out.path("cells.csv");
    let write_error: Mutex<Option<CliError>> = Mutex::new(None);
    let done = AtomicUsize::new(0);
    let warned = AtomicBool::new(false);
    let start = Instant::now();
    let total = cells.len();
    info!("{}: {} cells on {} worker(s)", kind.name(), total, cfg.workers);

    let work = |spec: CellSpec| {
        let rec = run_cell(&model, cfg, spec);
        if let CellStatus::Failed { message, .. } = &rec.status {
            warn!("{message}");
        }
        if let Err(e) = writer.append(&rec.csv_row()) {
            write_error.lock().expect("error slot").get_or_insert(CliError::io(&csv_path, e));
        }
        let finished = done.fetch_add(1, Ordering::SeqCst) + 1;
        let elapsed = start.elapsed().as_secs_f64();
        let projected = elapsed * total as f64 / finished as f64;
        if projected > cfg.runtime_budget_seconds && !warned.swap(true, Ordering::SeqCst) {
            warn!(
                "projected runtime {projected:.0} s exceeds the budget of {:.0} s ({finished}/{total} cells done)",
                cfg.runtime_budget_seconds
            );
        }
        rec
    };
    let mut records: Vec<CellRecord> = if cfg.workers == 1 {
        cells.into_iter().map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| CliError::Config(format!("workers: {e}")))?;
        pool.install(|| cells.into_par_iter().map(work).collect())
    };
    if let Some(e) = write_error.into_inner().expect("error slot") {
        return Err(e);
    }
    records.sort_by_key(|r| r.spec.index);

    let summary = match kind {
        ExperimentKind::CostPerSweep => ExperimentSummary::CostPerSweep { ratios: sweep_cost_ratios(&records) },
        ExperimentKind::TaessVsDelta => ExperimentSummary::TaessVsDelta { peaks: taess_peaks(&records) },
        ExperimentKind::CostVsT => ExperimentSummary::CostVsT { slopes: cost_slopes(&records) },
    };
    let RunMeta { config_hash, seed, .. } = out.meta().clone();
    let record = ExperimentRecord {
        experiment: kind,
        config_hash,
        seed,
        model: model.name().to_string(),
        cells: records,
        summary,
    };
    out.json("experiment.json", &record)?;
    out.write_schema()?;
    Ok(record)
}

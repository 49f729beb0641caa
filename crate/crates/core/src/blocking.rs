//! Blocked Gibbs sampling of diffusion bridges.
//!
//! `m` anchors `k_i = iT/(m+1)` split `[0, T]` into equal pieces of length
//! `δ = T/(m+1)`. The anchors are partitioned into sets `A_1, …, A_𝕜`; updating set
//! `A_i` redraws every block of `B_i`, i.e. each maximal interval between consecutive
//! points of `A_{−i} ∪ {0, T}` that contains an anchor of `A_i`, as a fresh bridge
//! given its end values.
//!
//! - **checkerboard**: `A_1` = odd anchors, `A_2` = even anchors (one set when `m = 1`);
//!   a sweep updates `A_1` then `A_2`.
//! - **lexicographic**: `A_i = {k_i}`, updated in temporal order.
//! - **random**: `A_i = {k_i}`; a sweep is `m` uniformly random picks.
//!
//! Every block update draws from its own counter-based stream keyed by
//! `(sweep, block)`, so results do not depend on thread scheduling.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::analysis::KnotChain;
use crate::bridge::{
    rejection_fill, sample_bridge_exact_through, MeshSpec, Path, PathMeta, SamplerVariant, DEFAULT_MAX_PROPOSALS,
};
use crate::models::DiffusionModel;
use crate::rng::{StreamSeed, SCHEDULER_BLOCK};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Checkerboard,
    Lexicographic,
    Random,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Checkerboard, Scheme::Lexicographic, Scheme::Random];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Checkerboard => "checkerboard",
            Scheme::Lexicographic => "lexicographic",
            Scheme::Random => "random",
        }
    }

    /// Anchor sets `A_1, …` as zero-based anchor indices.
    pub fn partition(&self, m: usize) -> Vec<Vec<usize>> {
        match self {
            Scheme::Checkerboard if m == 1 => vec![vec![0]],
            Scheme::Checkerboard => vec![(0..m).step_by(2).collect(), (1..m).step_by(2).collect()],
            Scheme::Lexicographic | Scheme::Random => (0..m).map(|i| vec![i]).collect(),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "checkerboard" | "check" => Ok(Scheme::Checkerboard),
            "lexicographic" | "lex" => Ok(Scheme::Lexicographic),
            "random" | "rand" => Ok(Scheme::Random),
            other => Err(Error::InvalidArgs(format!(
                "unknown scheme '{other}' (expected checkerboard, lexicographic or random)"
            ))),
        }
    }
}

/// A block between two conditioning points, as extended anchor indices: `0` is time 0,
/// `m + 1` is time `T`, and `i ∈ 1..=m` is anchor `k_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockInterval {
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockingLayout {
    t_end: f64,
    m: usize,
    scheme: Scheme,
    anchors: Vec<f64>,
    partition: Vec<Vec<usize>>,
    blocks: Vec<Vec<BlockInterval>>,
}

pub fn build_layout(t_end: f64, m: usize, scheme: Scheme) -> Result<BlockingLayout> {
    BlockingLayout::new(t_end, m, scheme)
}

impl BlockingLayout {
    pub fn new(t_end: f64, m: usize, scheme: Scheme) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidArgs("need at least one anchor".into()));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidArgs(format!("horizon must be positive, got {t_end}")));
        }
        let anchors = (1..=m).map(|i| i as f64 * t_end / (m as f64 + 1.0)).collect();
        let partition = scheme.partition(m);
        let blocks = partition.iter().map(|set| derive_blocks(m, set)).collect();
        Ok(Self { t_end, m, scheme, anchors, partition, blocks })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn anchors(&self) -> &[f64] {
        &self.anchors
    }

    /// `δ = T/(m+1)`.
    pub fn delta(&self) -> f64 {
        self.t_end / (self.m as f64 + 1.0)
    }

    /// Anchor sets as zero-based anchor indices.
    pub fn partition(&self) -> &[Vec<usize>] {
        &self.partition
    }

    /// Blocks `B_i` of anchor set `i` (zero-based).
    pub fn blocks(&self, set: usize) -> &[BlockInterval] {
        &self.blocks[set]
    }

    pub fn num_sets(&self) -> usize {
        self.partition.len()
    }

    /// Time of an extended anchor index.
    pub fn time(&self, ext: usize) -> f64 {
        match ext {
            0 => 0.0,
            e if e == self.m + 1 => self.t_end,
            e => self.anchors[e - 1],
        }
    }

    pub fn block_times(&self, block: BlockInterval) -> (f64, f64) {
        (self.time(block.left), self.time(block.right))
    }

    /// One-based index of the anchor nearest `T/2` (the lower one on ties).
    pub fn midpoint_anchor(&self) -> usize {
        self.m.div_ceil(2)
    }

    /// Every pair of anchors of one set is separated by an anchor of the other (two-set
    /// layouts only).
    pub fn is_interlaced(&self) -> bool {
        if self.partition.len() != 2 {
            return false;
        }
        let mut owner = vec![0usize; self.m];
        for (s, set) in self.partition.iter().enumerate() {
            for &i in set {
                owner[i] = s;
            }
        }
        owner.windows(2).all(|w| w[0] != w[1])
    }
}

/// Intervals between consecutive conditioning points of `A_{−i} ∪ {0, T}` that contain
/// an anchor of `A_i`.
fn derive_blocks(m: usize, set: &[usize]) -> Vec<BlockInterval> {
    let mut conditioning = vec![0];
    conditioning.extend((0..m).filter(|i| !set.contains(i)).map(|i| i + 1));
    conditioning.push(m + 1);
    conditioning.windows(2).filter(|w| w[1] - w[0] >= 2).map(|w| BlockInterval { left: w[0], right: w[1] }).collect()
}

/// Linear interpolation between `(0, x0)` and `(T, xT)` on the sampler's grid.
pub fn initialize_path(x0: f64, x_t: f64, t_end: f64, layout: &BlockingLayout, mesh: &MeshSpec) -> Result<Path> {
    if (layout.t_end() - t_end).abs() > 1e-12 * t_end.max(1.0) {
        return Err(Error::InvalidArgs(format!("layout horizon {} differs from T = {t_end}", layout.t_end())));
    }
    let (times, _) = build_grid(layout, Some(mesh));
    let values = linear_values(&times, x0, x_t);
    Path::new(times, values, PathMeta { proposals_used: 0, variant: SamplerVariant::Approximate })
}

fn linear_values(times: &[f64], x0: f64, x_t: f64) -> Vec<f64> {
    let t_end = *times.last().unwrap();
    let mut values: Vec<f64> = times.iter().map(|&t| x0 + (x_t - x0) * t / t_end).collect();
    values[0] = x0;
    *values.last_mut().unwrap() = x_t;
    values
}

/// Grid with every anchor on it, refined by `mesh` between anchors when given. Returns
/// the times and the grid positions of the extended anchors `0..=m+1`.
fn build_grid(layout: &BlockingLayout, mesh: Option<&MeshSpec>) -> (Vec<f64>, Vec<usize>) {
    let m = layout.m();
    let steps = mesh.map_or(1, |h| h.steps(layout.delta()));
    let mut times = Vec::with_capacity((m + 1) * steps + 1);
    let mut anchor_pos = Vec::with_capacity(m + 2);
    for e in 0..=m {
        let (a, b) = (layout.time(e), layout.time(e + 1));
        anchor_pos.push(times.len());
        times.push(a);
        for i in 1..steps {
            times.push(a + (b - a) * i as f64 / steps as f64);
        }
    }
    anchor_pos.push(times.len());
    times.push(layout.t_end());
    (times, anchor_pos)
}

/// Per-sweep sampler settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub max_proposals: u64,
    /// Upper bound on φ for the exact variant; defaults to the model's own bound.
    pub phi_upper_bound: Option<f64>,
    /// Run the blocks of a checkerboard half-sweep on the rayon pool. Results are
    /// bit-identical to the sequential order.
    pub parallel: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { max_proposals: DEFAULT_MAX_PROPOSALS, phi_upper_bound: None, parallel: false }
    }
}

/// Current trajectory of a blocked sampler. The approximate variant keeps the full mesh;
/// the exact variant keeps the anchors and endpoints only.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedState {
    layout: BlockingLayout,
    variant: SamplerVariant,
    times: Vec<f64>,
    values: Vec<f64>,
    anchor_pos: Vec<usize>,
    sweep_index: usize,
    proposals: Vec<u64>,
    updates: Vec<u64>,
}

impl BlockedState {
    pub fn new(layout: BlockingLayout, x0: f64, x_t: f64, mesh: &MeshSpec, variant: SamplerVariant) -> Self {
        let (times, anchor_pos) = match variant {
            SamplerVariant::Approximate => build_grid(&layout, Some(mesh)),
            SamplerVariant::Exact => build_grid(&layout, None),
        };
        let values = linear_values(&times, x0, x_t);
        let sets = layout.num_sets();
        Self {
            layout,
            variant,
            times,
            values,
            anchor_pos,
            sweep_index: 0,
            proposals: vec![0; sets],
            updates: vec![0; sets],
        }
    }

    /// Replaces the knot values, interpolating linearly in between.
    pub fn with_knots(mut self, knots: &[f64]) -> Result<Self> {
        let m = self.layout.m();
        if knots.len() != m {
            return Err(Error::InvalidArgs(format!("expected {m} knot values, got {}", knots.len())));
        }
        for (i, &k) in knots.iter().enumerate() {
            self.values[self.anchor_pos[i + 1]] = k;
        }
        for e in 0..=m {
            let (a, b) = (self.anchor_pos[e], self.anchor_pos[e + 1]);
            let (ta, tb) = (self.times[a], self.times[b]);
            let (va, vb) = (self.values[a], self.values[b]);
            for j in a + 1..b {
                self.values[j] = va + (vb - va) * (self.times[j] - ta) / (tb - ta);
            }
        }
        Ok(self)
    }

    pub fn layout(&self) -> &BlockingLayout {
        &self.layout
    }

    pub fn variant(&self) -> SamplerVariant {
        self.variant
    }

    pub fn sweep_index(&self) -> usize {
        self.sweep_index
    }

    pub fn knots(&self) -> Vec<f64> {
        (1..=self.layout.m()).map(|e| self.values[self.anchor_pos[e]]).collect()
    }

    /// One-based knot `k_i`.
    pub fn knot(&self, i: usize) -> f64 {
        self.values[self.anchor_pos[i]]
    }

    pub fn endpoints(&self) -> (f64, f64) {
        (self.values[0], *self.values.last().unwrap())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn path(&self) -> Path {
        Path {
            times: self.times.clone(),
            values: self.values.clone(),
            meta: PathMeta { proposals_used: self.proposals.iter().sum(), variant: self.variant },
        }
    }

    /// Linear interpolation of the current trajectory.
    pub fn value_at(&self, t: f64) -> f64 {
        let ts = &self.times;
        let j = ts.partition_point(|&s| s <= t).clamp(1, ts.len() - 1);
        let (t0, t1) = (ts[j - 1], ts[j]);
        if t <= t0 {
            return self.values[j - 1];
        }
        let w = ((t - t0) / (t1 - t0)).min(1.0);
        self.values[j - 1] + w * (self.values[j] - self.values[j - 1])
    }

    /// Proposals spent per anchor set since construction.
    pub fn proposals_per_set(&self) -> &[u64] {
        &self.proposals
    }

    /// Block updates per anchor set since construction.
    pub fn updates_per_set(&self) -> &[u64] {
        &self.updates
    }
}

/// Anchor sets picked by the random scheme in a given sweep (zero-based).
pub fn random_picks(seed: &StreamSeed, sweep: u64, m: usize) -> Vec<usize> {
    let mut rng = seed.stream(sweep, SCHEDULER_BLOCK);
    (0..m).map(|_| rng.random_range(0..m)).collect()
}

struct BlockJob {
    set: usize,
    block: BlockInterval,
    stream: u64,
}

/// Redraws one block on a private copy of its slice. Returns the new slice and the
/// proposals used.
fn run_block(
    state: &BlockedState,
    model: &DiffusionModel,
    config: &SweepConfig,
    seed: &StreamSeed,
    job: &BlockJob,
) -> Result<(Vec<f64>, u64)> {
    let lo = state.anchor_pos[job.block.left];
    let hi = state.anchor_pos[job.block.right];
    let times = &state.times[lo..=hi];
    let mut buf = state.values[lo..=hi].to_vec();
    let mut rng = seed.stream(state.sweep_index as u64, job.stream);
    let annotate = |e: Error| Error::InBlock {
        t_a: times[0],
        t_b: times[times.len() - 1],
        sweep: state.sweep_index,
        source: Box::new(e),
    };
    let used = match state.variant {
        SamplerVariant::Approximate => {
            rejection_fill(model, times, &mut buf, config.max_proposals, &mut rng).map_err(annotate)?
        }
        SamplerVariant::Exact => {
            let upper = match config.phi_upper_bound {
                Some(u) => u,
                None => model.phi_upper_bound().map_err(annotate)?,
            };
            let n = times.len();
            let inner = &times[1..n - 1];
            let path = sample_bridge_exact_through(
                model,
                buf[0],
                buf[n - 1],
                times[0],
                times[n - 1],
                upper,
                inner,
                config.max_proposals,
                &mut rng,
            )
            .map_err(annotate)?;
            for (k, &t) in inner.iter().enumerate() {
                let idx = path.times.partition_point(|&s| s < t);
                buf[k + 1] = path.values[idx];
            }
            path.meta.proposals_used
        }
    };
    Ok((buf, used))
}

/// One Gibbs sweep; increments the sweep index on success.
pub fn gibbs_sweep(
    state: &mut BlockedState,
    model: &DiffusionModel,
    config: &SweepConfig,
    seed: &StreamSeed,
) -> Result<()> {
    let layout = state.layout.clone();
    let groups: Vec<Vec<BlockJob>> = match layout.scheme() {
        Scheme::Random => random_picks(seed, state.sweep_index as u64, layout.m())
            .into_iter()
            .enumerate()
            .map(|(k, set)| vec![BlockJob { set, block: layout.blocks(set)[0], stream: k as u64 }])
            .collect(),
        _ => {
            let mut stream = 0u64;
            (0..layout.num_sets())
                .map(|set| {
                    layout
                        .blocks(set)
                        .iter()
                        .map(|&block| {
                            stream += 1;
                            BlockJob { set, block, stream: stream - 1 }
                        })
                        .collect()
                })
                .collect()
        }
    };
    for jobs in &groups {
        // Blocks of one set share no interior points and only read the complement, so
        // each can be computed against the same snapshot.
        let results: Vec<(Vec<f64>, u64)> = if config.parallel && jobs.len() > 1 {
            jobs.par_iter().map(|job| run_block(state, model, config, seed, job)).collect::<Result<_>>()?
        } else {
            jobs.iter().map(|job| run_block(state, model, config, seed, job)).collect::<Result<_>>()?
        };
        for (job, (buf, used)) in jobs.iter().zip(results) {
            let lo = state.anchor_pos[job.block.left];
            let n = buf.len();
            state.values[lo + 1..lo + n - 1].copy_from_slice(&buf[1..n - 1]);
            state.proposals[job.set] += used;
            state.updates[job.set] += 1;
        }
    }
    state.sweep_index += 1;
    Ok(())
}

/// Scalar summaries of the current trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// One-based knot `k_i`.
    Knot(usize),
    /// The knot nearest `T/2`.
    MidpointKnot,
    /// Trajectory value at time `t`, linearly interpolated on the sampler's grid.
    ValueAt(f64),
    /// Trapezoid integral over the knots and endpoints.
    PathIntegral,
}

impl Functional {
    pub fn label(&self) -> String {
        match self {
            Functional::Knot(i) => format!("knot_{i}"),
            Functional::MidpointKnot => "midpoint_knot".into(),
            Functional::ValueAt(t) => format!("value_at_{t}"),
            Functional::PathIntegral => "path_integral".into(),
        }
    }

    fn validate(&self, layout: &BlockingLayout) -> Result<()> {
        match *self {
            Functional::Knot(i) if i == 0 || i > layout.m() => {
                Err(Error::InvalidArgs(format!("knot index {i} outside 1..={}", layout.m())))
            }
            Functional::ValueAt(t) if !(0.0..=layout.t_end()).contains(&t) => {
                Err(Error::InvalidArgs(format!("time {t} outside [0, {}]", layout.t_end())))
            }
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, state: &BlockedState) -> f64 {
        let layout = state.layout();
        match *self {
            Functional::Knot(i) => state.knot(i),
            Functional::MidpointKnot => state.knot(layout.midpoint_anchor()),
            Functional::ValueAt(t) => state.value_at(t),
            Functional::PathIntegral => (0..=layout.m())
                .map(|e| {
                    let (a, b) = (state.anchor_pos[e], state.anchor_pos[e + 1]);
                    0.5 * (state.values[a] + state.values[b]) * (layout.time(e + 1) - layout.time(e))
                })
                .sum(),
        }
    }
}

/// One row of recorder output.
#[derive(Debug, Clone, Copy)]
pub struct SweepRecord<'a> {
    pub sweep: usize,
    pub knots: &'a [f64],
    pub functionals: &'a [f64],
    pub cumulative_nanos: u64,
}

pub trait Recorder {
    fn record(&mut self, row: &SweepRecord<'_>) -> std::io::Result<()>;
}

/// Discards every row.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullRecorder;

impl Recorder for NullRecorder {
    fn record(&mut self, _row: &SweepRecord<'_>) -> std::io::Result<()> {
        Ok(())
    }
}

/// CSV rows `sweep, k_1..k_m, functionals..[, cumulative_nanos]`.
#[derive(Debug)]
pub struct CsvRecorder<W: Write> {
    out: W,
    header: Option<String>,
    include_timing: bool,
}

impl<W: Write> CsvRecorder<W> {
    pub fn new(out: W, m: usize, functional_labels: &[String], include_timing: bool) -> Self {
        let mut cols = vec!["sweep".to_string()];
        cols.extend((1..=m).map(|i| format!("k{i}")));
        cols.extend(functional_labels.iter().cloned());
        if include_timing {
            cols.push("cumulative_nanos".into());
        }
        Self { out, header: Some(cols.join(",")), include_timing }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> Recorder for CsvRecorder<W> {
    fn record(&mut self, row: &SweepRecord<'_>) -> std::io::Result<()> {
        if let Some(h) = self.header.take() {
            writeln!(self.out, "{h}")?;
        }
        write!(self.out, "{}", row.sweep)?;
        for v in row.knots.iter().chain(row.functionals) {
            write!(self.out, ",{v:e}")?;
        }
        if self.include_timing {
            write!(self.out, ",{}", row.cumulative_nanos)?;
        }
        writeln!(self.out)
    }
}

/// Output of [`run_blocked_sampler`].
#[derive(Debug, Clone)]
pub struct BlockedRun {
    pub chain: KnotChain,
    /// One series per requested functional.
    pub functionals: Vec<Vec<f64>>,
    /// Wall-clock nanoseconds of each sweep body.
    pub sweep_nanos: Vec<u64>,
    pub state: BlockedState,
}

impl BlockedRun {
    pub fn elapsed_seconds(&self, skip: usize) -> f64 {
        self.sweep_nanos.iter().skip(skip).sum::<u64>() as f64 * 1e-9
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{error} (after {} completed sweeps)", partial.chain.len())]
pub struct RunError {
    pub partial: Box<BlockedRun>,
    #[source]
    pub error: Error,
}

/// Runs `n_sweeps` sweeps from `state`, recording the knots and functionals after each.
pub fn run_blocked_sampler(
    model: &DiffusionModel,
    state: BlockedState,
    n_sweeps: usize,
    config: &SweepConfig,
    seed: &StreamSeed,
    functionals: &[Functional],
    recorder: &mut dyn Recorder,
) -> std::result::Result<BlockedRun, RunError> {
    let m = state.layout().m();
    let mut run = BlockedRun {
        chain: KnotChain::with_capacity(m, n_sweeps),
        functionals: (0..functionals.len()).map(|_| Vec::with_capacity(n_sweeps)).collect(),
        sweep_nanos: Vec::with_capacity(n_sweeps),
        state,
    };
    let fail = |run: BlockedRun, error: Error| RunError { partial: Box::new(run), error };
    if n_sweeps == 0 {
        return Err(fail(run, Error::InvalidArgs("need at least one sweep".into())));
    }
    if let Some(e) = functionals.iter().find_map(|f| f.validate(run.state.layout()).err()) {
        return Err(fail(run, e));
    }
    let mut cumulative = 0u64;
    let mut values = vec![0.0; functionals.len()];
    for _ in 0..n_sweeps {
        let start = Instant::now();
        let outcome = gibbs_sweep(&mut run.state, model, config, seed);
        let nanos = start.elapsed().as_nanos() as u64;
        if let Err(e) = outcome {
            return Err(fail(run, e));
        }
        cumulative += nanos;
        run.sweep_nanos.push(nanos);
        let knots = run.state.knots();
        for (k, f) in functionals.iter().enumerate() {
            values[k] = f.evaluate(&run.state);
            run.functionals[k].push(values[k]);
        }
        run.chain.push(&knots);
        let row = SweepRecord {
            sweep: run.state.sweep_index(),
            knots: &knots,
            functionals: &values,
            cumulative_nanos: cumulative,
        };
        if let Err(e) = recorder.record(&row) {
            return Err(fail(run, Error::Io(e.to_string())));
        }
    }
    Ok(run)
}

/// Burn-in: `max(10·⌈relaxation time⌉, 1000)` sweeps when an analytic rate is known,
/// otherwise 10% of the chain; never more than half of it.
pub fn default_burn_in(relaxation_time: Option<f64>, n_sweeps: usize) -> usize {
    let b = match relaxation_time {
        Some(r) if r.is_finite() => (10 * r.ceil().max(0.0) as usize).max(1000),
        _ => n_sweeps / 10,
    };
    b.min(n_sweeps / 2)
}

//! Declarative run configuration, read from TOML (or JSON when the file ends in `.json`).
//!
//! ```toml
//! seed = 7
//! t = [0.4, 0.5, 1.0]
//! x_t = [0.85, 0.85, 0.95]   # one value, or one per T
//! m = [1, 3, 5, 9]           # or: knots = { c1 = 10.0, chi1 = 0.0 }
//! scheme = "checkerboard"
//! n_sweeps = 10000
//! variant = "exact"
//!
//! [model]
//! kind = "sine"
//! ```

use std::path::{Path, PathBuf};

use bridgeblock_core::analysis::{optimal_num_knots, DEFAULT_C1, DEFAULT_CHI1};
use bridgeblock_core::blocking::{Functional, Scheme};
use bridgeblock_core::bridge::{MeshSpec, SamplerVariant, DEFAULT_MAX_PROPOSALS, DEFAULT_MESH_WIDTH};
use bridgeblock_core::models::DiffusionModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    ScaledBm {
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default)]
        mu: f64,
    },
    Ou {
        #[serde(default = "one")]
        theta: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
    Sine {
        #[serde(default = "two")]
        a: f64,
        #[serde(default = "two")]
        b: f64,
        #[serde(default = "eight")]
        omega: f64,
        #[serde(default = "half")]
        sigma: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn eight() -> f64 {
    8.0
}
fn half() -> f64 {
    0.5
}

impl ModelSpec {
    pub fn build(&self) -> Result<DiffusionModel, CliError> {
        let model = match *self {
            ModelSpec::ScaledBm { sigma, mu } => DiffusionModel::scaled_bm(sigma, mu),
            ModelSpec::Ou { theta, sigma } => DiffusionModel::ou(theta, sigma),
            ModelSpec::Sine { a, b, omega, sigma } => DiffusionModel::sine(a, b, omega, sigma),
        };
        model.map_err(|e| CliError::Config(format!("model: {e}")))
    }
}

/// A scalar or a list in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnotRule {
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_chi1")]
    pub chi1: f64,
}

fn default_c1() -> f64 {
    DEFAULT_C1
}
fn default_chi1() -> f64 {
    DEFAULT_CHI1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Approximate,
    Exact,
}

impl From<VariantName> for SamplerVariant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::Approximate => SamplerVariant::Approximate,
            VariantName::Exact => SamplerVariant::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Per-sweep wall-clock against the number of knots at fixed T.
    CostPerSweep,
    /// Time-adjusted ESS against the knot spacing δ.
    TaessVsDelta,
    /// Inverse taESS against T with the knot-count rule, and its log-log slope.
    CostVsT,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::CostPerSweep => "cost_per_sweep",
            ExperimentKind::TaessVsDelta => "taess_vs_delta",
            ExperimentKind::CostVsT => "cost_vs_t",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "zero_endpoint")]
    pub x_t: OneOrMany<f64>,
    pub t: OneOrMany<f64>,
    /// Knot counts; absent (and no `knots` rule) means unblocked sampling.
    #[serde(default)]
    pub m: Option<OneOrMany<usize>>,
    #[serde(default)]
    pub knots: Option<KnotRule>,
    #[serde(default = "default_scheme")]
    pub scheme: OneOrMany<String>,
    #[serde(default = "default_sweeps")]
    pub n_sweeps: usize,
    /// Independent draws for unblocked sampling.
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Sweeps discarded before diagnostics; derived from the analytic rate when absent.
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_mesh")]
    pub mesh_width: f64,
    #[serde(default = "default_variant")]
    pub variant: VariantName,
    #[serde(default)]
    pub phi_upper_bound: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub max_proposals: u64,
    /// Recorded path functionals; the first one is the ESS functional.
    #[serde(default = "default_functionals")]
    pub functionals: Vec<String>,
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    /// Grid cells run concurrently on this many threads.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Update the blocks of a checkerboard half-sweep concurrently.
    #[serde(default)]
    pub parallel_blocks: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Projected runtime above which a warning is logged.
    #[serde(default = "default_runtime_budget")]
    pub runtime_budget_seconds: f64,
}

fn zero_endpoint() -> OneOrMany<f64> {
    OneOrMany::One(0.0)
}
fn default_scheme() -> OneOrMany<String> {
    OneOrMany::One("checkerboard".into())
}
fn default_sweeps() -> usize {
    10_000
}
fn default_draws() -> usize {
    1000
}
fn default_mesh() -> f64 {
    DEFAULT_MESH_WIDTH
}
fn default_variant() -> VariantName {
    VariantName::Approximate
}
fn default_budget() -> u64 {
    DEFAULT_MAX_PROPOSALS
}
fn default_functionals() -> Vec<String> {
    vec!["midpoint_knot".into()]
}
fn default_workers() -> usize {
    1
}
fn default_runtime_budget() -> f64 {
    1800.0
}

/// A functional name resolved against a horizon.
pub fn parse_functional(name: &str, t_end: f64) -> Result<Functional, CliError> {
    let bad = || CliError::Config(format!("functionals: unknown functional '{name}'"));
    match name {
        "midpoint_knot" => Ok(Functional::MidpointKnot),
        "midpoint_value" => Ok(Functional::ValueAt(t_end / 2.0)),
        "path_integral" => Ok(Functional::PathIntegral),
        _ => {
            if let Some(i) = name.strip_prefix("knot:") {
                i.trim().parse().map(Functional::Knot).map_err(|_| bad())
            } else if let Some(t) = name.strip_prefix("value_at:") {
                t.trim().parse().map(Functional::ValueAt).map_err(|_| bad())
            } else {
                Err(bad())
            }
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |key: &str, msg: String| Err(CliError::Config(format!("{key}: {msg}")));
        self.model.build()?;
        let ts = self.t.to_vec();
        if ts.is_empty() {
            return fail("t", "grid is empty".into());
        }
        if let Some(t) = ts.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return fail("t", format!("horizons must be positive, got {t}"));
        }
        let xts = self.x_t.to_vec();
        if xts.len() != 1 && xts.len() != ts.len() {
            return fail("x_t", format!("expected 1 or {} values, got {}", ts.len(), xts.len()));
        }
        if let Some(m) = &self.m {
            let ms = m.to_vec();
            if ms.is_empty() {
                return fail("m", "grid is empty".into());
            }
            if ms.contains(&0) {
                return fail("m", "knot counts must be at least 1".into());
            }
            if self.knots.is_some() {
                return fail("knots", "give either an m grid or a knots rule, not both".into());
            }
        }
        if let Some(rule) = &self.knots {
            if !(rule.c1 > 0.0 && rule.chi1 >= 0.0) {
                return fail("knots", format!("need c1 > 0 and chi1 ≥ 0, got {rule:?}"));
            }
        }
        if self.schemes()?.is_empty() {
            return fail("scheme", "grid is empty".into());
        }
        if self.n_sweeps < 4 {
            return fail("n_sweeps", format!("need at least 4 sweeps, got {}", self.n_sweeps));
        }
        if self.draws < 1 {
            return fail("draws", "need at least one draw".into());
        }
        if let Some(b) = self.burn_in {
            if b >= self.n_sweeps {
                return fail("burn_in", format!("{b} leaves no sweeps out of {}", self.n_sweeps));
            }
        }
        MeshSpec::new(self.mesh_width).map_err(|e| CliError::Config(format!("mesh_width: {e}")))?;
        if self.max_proposals == 0 {
            return fail("max_proposals", "must be positive".into());
        }
        if self.functionals.is_empty() {
            return fail("functionals", "need at least one functional".into());
        }
        for f in &self.functionals {
            parse_functional(f, ts[0])?;
        }
        if self.workers == 0 {
            return fail("workers", "must be positive".into());
        }
        Ok(())
    }

    pub fn model(&self) -> Result<DiffusionModel, CliError> {
        self.model.build()
    }

    pub fn horizons(&self) -> Vec<f64> {
        self.t.to_vec()
    }

    /// Right endpoint for the `i`-th horizon.
    pub fn endpoint(&self, i: usize) -> f64 {
        let xs = self.x_t.to_vec();
        if xs.len() == 1 {
            xs[0]
        } else {
            xs[i]
        }
    }

    pub fn schemes(&self) -> Result<Vec<Scheme>, CliError> {
        self.scheme.to_vec().iter().map(|s| s.parse().map_err(|e| CliError::Config(format!("scheme: {e}")))).collect()
    }

    pub fn is_blocked(&self) -> bool {
        self.m.is_some() || self.knots.is_some()
    }

    /// Knot counts for a horizon: the explicit grid, or the single count of the rule.
    pub fn knot_counts(&self, t_end: f64) -> Result<Vec<usize>, CliError> {
        match (&self.m, &self.knots) {
            (Some(m), _) => Ok(m.to_vec()),
            (None, Some(rule)) => optimal_num_knots(t_end, rule.c1, rule.chi1)
                .map(|m| vec![m])
                .map_err(|e| CliError::Config(format!("knots: {e}"))),
            (None, None) => Err(CliError::Config("m: no knot grid or knots rule given".into())),
        }
    }

    pub fn mesh(&self) -> MeshSpec {
        MeshSpec::new(self.mesh_width).expect("validated")
    }

    pub fn functionals(&self, t_end: f64) -> Result<Vec<Functional>, CliError> {
        self.functionals.iter().map(|f| parse_functional(f, t_end)).collect()
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&canonical))
    }
}

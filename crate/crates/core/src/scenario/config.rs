//! Scenario files: JSON, `schema_version` 1.

use crate::base::BaseKind;
use crate::foliation::LeafKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// A rejected scenario, located by a JSON pointer into the file.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self { pointer: pointer.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "(root)" } else { &self.pointer };
        write!(f, "{at}: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// A number or an expression in the base coordinates `x0, x1, …`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expr(String),
}

pub type Matrix = Vec<Vec<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeSpec {
    Leafwise,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionSpec {
    pub scope: ScopeSpec,
    /// One skew matrix per base coordinate; empty means flat.
    #[serde(default)]
    pub coefficients: Vec<Vec<Vec<Scalar>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantSpec {
    pub name: String,
    /// Expression in the fiber coordinates `v0, v1, …`.
    pub expr: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosureSpec {
    pub generators: Vec<Matrix>,
    #[serde(default)]
    pub rational: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpec {
    pub n: usize,
    pub generators: Vec<Matrix>,
    #[serde(default)]
    pub finite_part: Vec<Matrix>,
    #[serde(default)]
    pub invariants: Vec<InvariantSpec>,
    /// Defaults to the algebra itself.
    #[serde(default)]
    pub closure: Option<ClosureSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    /// Horizontal lift of `∂/∂x_i`.
    Horizontal { coordinate: usize },
    /// `v ↦ A v` for a skew matrix `A`.
    Generator { matrix: Matrix },
    /// Components as expressions in `x*` and `v*`.
    Expression { base: Vec<String>, fiber: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    pub source: FieldSource,
    /// Expected fiber-linear part of the linearization.
    #[serde(default)]
    pub linear_part: Option<Matrix>,
    /// Whether the linearization is expected to be skew.
    #[serde(default)]
    pub killing: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub center: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub name: String,
    /// Knots of the leafwise polyline `α`.
    pub alpha: Vec<Vec<f64>>,
    pub u0: BoxSpec,
    pub u1: BoxSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopExpectation {
    /// Knots of a leafwise loop.
    pub path: Vec<Vec<f64>>,
    /// Closed-form transport around the loop.
    #[serde(default)]
    pub matrix: Option<Matrix>,
    /// Order of the transport in the fiber group.
    #[serde(default)]
    pub order: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default)]
    pub holonomy_dim: Option<usize>,
    #[serde(default)]
    pub holonomy_loop: Option<LoopExpectation>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    /// Composition of path classes without the conjugation `C_β`.
    DroppedConjugation,
    /// Quotient composition solving `x·a = y` with the wrong factor order.
    WrongQuotientSolve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub transport: f64,
    pub arrow: f64,
    pub axioms: f64,
    pub invariant: f64,
    pub holonomy: f64,
    pub order_low: f64,
    pub order_high: f64,
    pub linear: f64,
    pub killing: f64,
    pub non_killing: f64,
    /// Hausdorff bound as a multiple of ε.
    pub hausdorff_factor: f64,
    pub closure: f64,
    pub chart_round_trip: f64,
    pub chart_transition: f64,
    pub chart_excluded_partials: f64,
    pub chart_derivative_bound: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            transport: 1e-8,
            arrow: 1e-7,
            axioms: 1e-9,
            invariant: 1e-6,
            holonomy: 1e-6,
            order_low: 3.5,
            order_high: 4.5,
            linear: 1e-6,
            killing: 1e-6,
            non_killing: 0.9,
            hausdorff_factor: 2.0,
            closure: 0.05,
            chart_round_trip: 1e-8,
            chart_transition: 1e-7,
            chart_excluded_partials: 1e-7,
            chart_derivative_bound: 1e3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    pub group_steps: usize,
    pub word_length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosureRun {
    /// Lattice budgets of the successive `F_ell` slices.
    pub steps: Vec<usize>,
    pub tau: f64,
    /// Net resolution of the `F_hat` reference slice.
    pub epsilon: f64,
}

impl Default for ClosureRun {
    fn default() -> Self {
        Self { steps: vec![100, 1_000, 10_000], tau: 0.05, epsilon: 0.02 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub seed: u64,
    /// Integration step for transport and chart checks.
    pub transport_step: f64,
    /// Integration step inside the groupoid and leaf suites.
    pub groupoid_step: f64,
    pub epsilon: f64,
    /// Group lattice step; defaults to `ε/2`.
    pub tau: Option<f64>,
    pub budget: BudgetSpec,
    /// Random-walk steps of the `F` sampler on invariant level sets.
    pub walk_steps: usize,
    /// Seed point of leaf samples; defaults to the origin of the base and `e₀` in the fiber.
    pub seed_point: Option<(Vec<f64>, Vec<f64>)>,
    pub pairs: usize,
    pub triples: usize,
    pub transport_paths: usize,
    pub frames: usize,
    pub orbit_budget: usize,
    pub lambdas: Vec<f64>,
    pub flow_times: Vec<f64>,
    pub flow_substep: f64,
    /// RK4 substep of the flow-generated leaf sampler.
    pub sample_substep: f64,
    pub chart_samples: usize,
    /// Chart points are drawn from the box scaled by this factor.
    pub chart_shrink: f64,
    pub closure: ClosureRun,
    pub mutation: Option<Mutation>,
    pub tolerances: Tolerances,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            transport_step: 1e-3,
            groupoid_step: 1e-2,
            epsilon: 0.25,
            tau: None,
            budget: BudgetSpec { group_steps: 40, word_length: 4 },
            walk_steps: 4000,
            seed_point: None,
            pairs: 1000,
            triples: 300,
            transport_paths: 24,
            frames: 4,
            orbit_budget: 200_000,
            lambdas: vec![1.0, 0.5, 0.25, 0.125],
            flow_times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            flow_substep: 0.01,
            sample_substep: 0.05,
            chart_samples: 200,
            chart_shrink: 0.4,
            closure: ClosureRun::default(),
            mutation: None,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSpec {
    pub kind: LeafKind,
    /// Projection, e.g. `v0,v1` or `x0,v0,v1`.
    pub proj: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory, relative to the working directory; overridden by `--out`.
    pub dir: Option<String>,
    pub plots: Vec<PlotSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub base: BaseKind,
    pub connection: ConnectionSpec,
    pub fiber: FiberSpec,
    #[serde(default)]
    pub fields: Vec<FieldSpec>,
    #[serde(default)]
    pub charts: Vec<ChartSpec>,
    #[serde(default)]
    pub expect: Expectations,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ScenarioConfig {
    /// SHA-256 of the canonical JSON serialization, in hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configs serialize");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Lattice step of the leaf samplers.
    pub fn tau(&self) -> f64 {
        self.run.tau.unwrap_or(self.run.epsilon / 2.0)
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    path.iter()
        .filter_map(|s| match s {
            Segment::Seq { index } => Some(format!("/{index}")),
            Segment::Map { key } => Some(format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => Some(format!("/{variant}")),
            Segment::Unknown => None,
        })
        .collect()
}

/// Parses a scenario; structural checks only, see [`super::Scenario::build`] for the rest.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let p = pointer(e.path());
        ConfigError::new(p, e.into_inner().to_string())
    })?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(ConfigError::new(
            "/schema_version",
            format!("unsupported schema version {}, expected {SCHEMA_VERSION}", config.schema_version),
        ));
    }
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

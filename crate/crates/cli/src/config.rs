//! Declarative experiment configuration.
//!
//! A config is one TOML file. Only `problem.name` and `problem.n` are
//! required; everything else has a default. `--set key=value` overrides are
//! applied to the parsed tree before it is turned into an [`ExperimentConfig`],
//! so they obey exactly the same schema.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use zomd::{
    builtin_problem, choose_params, initial_radius_sq, iteration_count, noise_threshold, second_moment_bound,
    FeasibleSet, NoiseKind, NoiseModel, ProxSetup, ReportPoints, SmoothingParams, StepRule, StochasticProblem,
    XiLaw,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub iterations: Iterations,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub report_points: ReportPoints,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub prox: ProxSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub step: StepSpec,
    #[serde(default)]
    pub smoothing: SmoothingSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_workers() -> usize {
    1
}

fn default_lipschitz() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub n: usize,
    #[serde(default = "default_lipschitz")]
    pub lipschitz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Replaces the problem's default law of ξ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_law: Option<XiLaw>,
    /// Moves the minimizer of the problem (where the family allows it).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimizer: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxChoice {
    /// `p = 2`, `d(x) = ½‖x − x⁰‖₂²`
    #[default]
    Euclidean,
    /// `p = 1` on the simplex, `d(x) = ln n + Σ x ln x`
    Entropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    /// Ball of the given radius around the origin.
    Ball { radius: f64 },
    /// The cube `[lower, upper]ⁿ`.
    Box { lower: f64, upper: f64 },
    Whole,
}

impl Default for SetSpec {
    fn default() -> Self {
        Self::Ball { radius: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxSpec {
    #[serde(default)]
    pub kind: ProxChoice,
    /// Ignored by the entropy prox, which always works on the simplex.
    #[serde(default)]
    pub set: SetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default = "default_noise_kind")]
    pub kind: NoiseKind,
    /// Absolute bound on `|δ(x, ξ)|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Bound as a multiple of the threshold `δ₀`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_multiple: Option<f64>,
}

fn default_noise_kind() -> NoiseKind {
    NoiseKind::None
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { kind: NoiseKind::None, delta: None, delta_multiple: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSpec {
    /// `h = (R/M̃)·√(2/N)`
    #[default]
    Auto,
    Constant { h: f64 },
    /// `h_k = 1/(γk)`; `gamma` defaults to the problem's.
    StronglyConvex {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[serde(alias = "N")]
    Iterations,
    /// Values are multiples of `δ₀`.
    Delta,
    #[serde(alias = "n")]
    Dim,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Iterations => "iterations",
            Self::Delta => "delta",
            Self::Dim => "dim",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "N" | "iterations" => Ok(Self::Iterations),
            "delta" => Ok(Self::Delta),
            "n" | "dim" => Ok(Self::Dim),
            other => Err(format!("unknown sweep axis '{other}' (expected N, delta or n)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<SweepAxis>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_samples")]
    pub samples: u64,
    /// Multiplies every bound; values below 1 make the suite stricter.
    #[serde(default = "default_bound_scale")]
    pub bound_scale: f64,
}

fn default_samples() -> u64 {
    100_000
}

fn default_bound_scale() -> f64 {
    1.0
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self { samples: default_samples(), bound_scale: default_bound_scale() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

/// Iteration budget: a fixed count or `"auto"` for the count that
/// guarantees accuracy `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Iterations {
    #[default]
    Auto,
    Fixed(u64),
}

impl Serialize for Iterations {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Auto => s.serialize_str("auto"),
            Self::Fixed(n) => s.serialize_u64(*n),
        }
    }
}

impl<'de> Deserialize<'de> for Iterations {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Iterations;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive integer or \"auto\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Iterations, E> {
                if v == 0 {
                    return Err(E::custom("iterations must be positive"));
                }
                Ok(Iterations::Fixed(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Iterations, E> {
                u64::try_from(v).map_err(|_| E::custom("iterations must be positive")).and_then(|v| self.visit_u64(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Iterations, E> {
                match v {
                    "auto" => Ok(Iterations::Auto),
                    _ => v.parse::<u64>().map_err(|_| E::custom(format!("bad iteration count '{v}'"))).and_then(|v| self.visit_u64(v)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

impl ExperimentConfig {
    /// Reads a config file and applies `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut tree = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut tree, item)?;
        }
        Self::from_table(tree)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let tree = toml::from_str::<toml::Table>(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_table(tree)
    }

    fn from_table(tree: toml::Table) -> Result<Self, CliError> {
        let config: Self = tree.try_into().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// The fully resolved config, defaults included, in TOML form.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if self.noise.delta.is_some() && self.noise.delta_multiple.is_some() {
            return Err(CliError::Config("give either noise.delta or noise.delta_multiple, not both".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(CliError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.verify.bound_scale > 0.0) {
            return Err(CliError::Config("verify.bound_scale must be positive".into()));
        }
        Ok(())
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, falling back to a
/// bare string.
fn apply_override(tree: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{item}' is not of the form key=value")))?;
    let value = parse_literal(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key '{key}'")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut table = tree;
    for part in parents {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override '{key}': '{part}' is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Everything a single run needs, derived from a config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub problem: StochasticProblem,
    pub prox: ProxSetup,
    pub params: SmoothingParams,
    pub noise: NoiseModel,
    pub step_rule: StepRule,
    pub iterations: u64,
    /// `R`, when the minimizer is known and feasible.
    pub radius: Option<f64>,
    pub delta0: Option<f64>,
    pub prescribed_iterations: Option<u64>,
}

impl ExperimentConfig {
    /// Builds problem, geometry, smoothing and step rule for dimension `n`.
    pub fn resolve_with(&self, n: usize, iterations: Option<u64>, delta_multiple: Option<f64>) -> Result<Resolved, CliError> {
        let spec = &self.problem;
        let mut problem = builtin_problem(&spec.name, n, spec.lipschitz, spec.gamma)?;
        if let Some(law) = spec.xi_law {
            problem = problem.with_law(law)?;
        }
        if let Some(x_star) = &spec.minimizer {
            problem = problem.with_minimizer(x_star.clone())?;
        }
        let prox = match self.prox.kind {
            ProxChoice::Euclidean => {
                let set = match self.prox.set {
                    SetSpec::Ball { radius } => FeasibleSet::ball(vec![0.0; n], radius)?,
                    SetSpec::Box { lower, upper } => FeasibleSet::boxed(vec![lower; n], vec![upper; n])?,
                    SetSpec::Whole => FeasibleSet::whole(n)?,
                };
                let setup = ProxSetup::euclidean(set)?;
                match &self.prox.center {
                    Some(c) => setup.with_center(c.clone())?,
                    None => setup,
                }
            }
            ProxChoice::Entropy => ProxSetup::entropy(n)?,
        };
        let mut params = choose_params(self.epsilon, problem.lipschitz(), n)?;
        if self.smoothing.tau.is_some() || self.smoothing.mu.is_some() {
            params = params.with_radii(
                self.smoothing.tau.unwrap_or(params.tau),
                self.smoothing.mu.unwrap_or(params.mu),
            )?;
        }
        let radius = match problem.minimizer() {
            Some(x_star) if prox.set().contains(x_star) => Some(initial_radius_sq(&prox, x_star)?.sqrt()),
            _ => None,
        };
        let delta0 = radius.map(|r| noise_threshold(self.epsilon, problem.lipschitz(), r, n));
        let prescribed_iterations = radius.map(|r| iteration_count(self.epsilon, problem.lipschitz(), r, n, prox.q()));

        let multiple = delta_multiple.or(self.noise.delta_multiple);
        let delta = match (multiple, self.noise.delta) {
            (Some(m), _) => {
                let d0 = delta0.ok_or_else(|| {
                    CliError::Config("delta as a multiple of delta0 needs a known feasible minimizer".into())
                })?;
                m * d0
            }
            (None, Some(d)) => d,
            (None, None) => 0.0,
        };
        let mut kind = self.noise.kind;
        if delta_multiple.is_some() && kind == NoiseKind::None {
            kind = NoiseKind::AdversarialAlign;
        }
        let noise = if kind == NoiseKind::None {
            if delta != 0.0 {
                return Err(CliError::Config("a nonzero delta needs a noise kind other than none".into()));
            }
            NoiseModel::none()
        } else {
            NoiseModel::new(kind, delta)?
        };

        let step_rule = match self.step {
            StepSpec::Auto => {
                let r = radius.ok_or_else(|| {
                    CliError::Config("the auto step rule needs a known feasible minimizer".into())
                })?;
                let m_tilde = second_moment_bound(prox.q(), n, problem.lipschitz()).sqrt();
                StepRule::AutoConstant { radius: r, m_tilde }
            }
            StepSpec::Constant { h } => StepRule::Constant { h },
            StepSpec::StronglyConvex { gamma } => {
                let gamma = gamma.or(problem.strong_convexity()).ok_or_else(|| {
                    CliError::Config("the strongly convex step rule needs gamma".into())
                })?;
                StepRule::StronglyConvex { gamma }
            }
        };
        let iterations = match (iterations, self.iterations) {
            (Some(n_iter), _) | (None, Iterations::Fixed(n_iter)) => n_iter,
            (None, Iterations::Auto) => prescribed_iterations.ok_or_else(|| {
                CliError::Config("iterations = \"auto\" needs a known feasible minimizer".into())
            })?,
        };
        if iterations == 0 {
            return Err(CliError::Config("iterations must be positive".into()));
        }
        Ok(Resolved { problem, prox, params, noise, step_rule, iterations, radius, delta0, prescribed_iterations })
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        self.resolve_with(self.problem.n, None, None)
    }
}

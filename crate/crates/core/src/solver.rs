//! Mirror descent driven by a stochastic gradient source.
//!
//! `x^{k+1} = Mirr_{x^k}(h_k · g^k)` for `k = 0..N−1`, starting from the prox
//! center, with either a constant step `h = (R/M̃)·√(2/N)` or the strongly
//! convex schedule `h_k = 1/(γ(k+1))`. Regret is always averaged over
//! `k = 0..N−1` against the closed-form optimum.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{ExtendedDomain, NoiseKind, NoiseModel, NoisyOracle, StochasticProblem, XiLaw};
use crate::prox::{bregman, dual_norm, initial_radius_sq, mirror_step, ProxKind, ProxSetup};
use crate::rng::{RunStreams, StreamIds};
use crate::smoothing::{
    bias_budget, iteration_count, noise_threshold, second_moment_bound, two_point_gradient, EstimatorDraw,
    SmoothingParams,
};

/// Header row of the trace CSV.
pub const TRACE_CSV_HEADER: &str = "k,F_xk,running_regret,dual_norm_g,V_to_xstar";

/// `h = (R/M̃)·√(2/N)`.
pub fn step_size_constant(radius: f64, m_tilde: f64, iterations: u64) -> f64 {
    radius / m_tilde * (2.0 / iterations as f64).sqrt()
}

/// `h_k = 1/(γk)` for `k ≥ 1`.
pub fn step_size_strongly_convex(gamma: f64, k: u64) -> f64 {
    1.0 / (gamma * k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    Constant { h: f64 },
    /// Constant step computed from `R` and `M̃` for the run length.
    AutoConstant { radius: f64, m_tilde: f64 },
    StronglyConvex { gamma: f64 },
}

impl StepRule {
    /// Constant rule with `R = √V(x*, x⁰)` and `M̃² = 12·c_q·n^{2/q}·M²`.
    pub fn auto_for(problem: &StochasticProblem, prox: &ProxSetup) -> Result<Self> {
        let x_star = problem
            .minimizer()
            .ok_or_else(|| Error::Config("the auto step rule needs a known minimizer".into()))?;
        let radius = initial_radius_sq(prox, x_star)?.sqrt();
        let m_tilde = second_moment_bound(prox.q(), problem.dim(), problem.lipschitz()).sqrt();
        Ok(Self::AutoConstant { radius, m_tilde })
    }

    /// Step used to move from `x^k` to `x^{k+1}` (`k` zero-based).
    pub fn step(&self, k: u64, iterations: u64) -> f64 {
        match *self {
            Self::Constant { h } => h,
            Self::AutoConstant { radius, m_tilde } => step_size_constant(radius, m_tilde, iterations),
            Self::StronglyConvex { gamma } => step_size_strongly_convex(gamma, k + 1),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { h } => h > 0.0 && h.is_finite(),
            Self::AutoConstant { radius, m_tilde } => radius > 0.0 && m_tilde > 0.0 && radius.is_finite(),
            Self::StronglyConvex { gamma } => gamma > 0.0 && gamma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid step rule {self:?}")))
        }
    }
}

/// Which points the objective column of a trace is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportPoints {
    /// The iterates `x^k`.
    #[default]
    Center,
    /// The probe points `x^k + τe₁ᵏ + μe₂ᵏ` actually queried.
    Perturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub step_rule: StepRule,
    pub iterations: u64,
    pub seed: u64,
    #[serde(default)]
    pub streams: StreamIds,
    #[serde(default)]
    pub record_iterates: bool,
    #[serde(default)]
    pub report_points: ReportPoints,
}

impl RunConfig {
    pub fn new(step_rule: StepRule, iterations: u64, seed: u64) -> Self {
        Self {
            step_rule,
            iterations,
            seed,
            streams: StreamIds::default(),
            record_iterates: false,
            report_points: ReportPoints::Center,
        }
    }

    pub fn with_iterates(mut self) -> Self {
        self.record_iterates = true;
        self
    }

    pub fn reporting(mut self, points: ReportPoints) -> Self {
        self.report_points = points;
        self
    }
}

/// One stochastic gradient together with the point it was probed around.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub gradient: Vec<f64>,
    /// `x + τe₁ + μe₂` for two-point sources.
    pub perturbed: Option<Vec<f64>>,
}

/// Anything that can hand the mirror-descent loop a stochastic gradient.
pub trait GradientSource {
    fn sample(&mut self, x: &[f64]) -> Result<GradientSample>;
}

/// The double-smoothing two-point estimator with fresh randomness per call.
pub struct TwoPointSource<'a> {
    oracle: NoisyOracle<'a>,
    params: SmoothingParams,
    streams: RunStreams,
}

impl<'a> TwoPointSource<'a> {
    pub fn new(oracle: NoisyOracle<'a>, params: SmoothingParams, streams: RunStreams) -> Self {
        Self { oracle, params, streams }
    }
}

impl GradientSource for TwoPointSource<'_> {
    fn sample(&mut self, x: &[f64]) -> Result<GradientSample> {
        let draw = EstimatorDraw::sample(self.oracle.problem, &mut self.streams);
        let gradient = two_point_gradient(&self.oracle, x, &self.params, &draw).map_err(|e| match e {
            Error::ProbeOutOfDomain { point, distance, margin, .. } => Error::ProbeOutOfDomain {
                point,
                distance,
                margin,
                tau: Some(self.params.tau),
                mu: Some(self.params.mu),
            },
            other => other,
        })?;
        let perturbed = draw.shifted_point(x, self.params.tau, self.params.mu);
        Ok(GradientSample { gradient, perturbed: Some(perturbed) })
    }
}

/// Exact subgradients of the mean objective; isolates the mirror-descent loop
/// from the estimator.
pub struct ExactGradientSource<'a> {
    problem: &'a StochasticProblem,
}

impl<'a> ExactGradientSource<'a> {
    pub fn new(problem: &'a StochasticProblem) -> Self {
        Self { problem }
    }
}

impl GradientSource for ExactGradientSource<'_> {
    fn sample(&mut self, x: &[f64]) -> Result<GradientSample> {
        Ok(GradientSample { gradient: self.problem.mean_subgradient(x), perturbed: None })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: u64,
    /// `F` at the reported point of iteration `k`.
    pub objective: f64,
    /// Prefix mean of `objective` minus `F*`.
    pub running_regret: Option<f64>,
    /// `‖g^k‖_q`
    pub dual_norm_g: f64,
    /// `V(x*, x^k)`
    pub bregman_to_minimizer: Option<f64>,
}

/// Everything needed to reproduce or audit a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub problem: String,
    pub n: usize,
    pub lipschitz: f64,
    pub gamma: Option<f64>,
    pub xi_law: XiLaw,
    pub noise_kind: NoiseKind,
    pub delta: f64,
    pub prox_kind: ProxKind,
    pub q: String,
    pub epsilon: Option<f64>,
    pub tau: Option<f64>,
    pub mu: Option<f64>,
    pub step_rule: StepRule,
    pub iterations: u64,
    pub seed: u64,
    pub streams: StreamIds,
    pub report_points: ReportPoints,
    pub optimal_value: Option<f64>,
    /// `R² = V(x*, x⁰)`
    pub radius_sq: Option<f64>,
    /// `M̃² = 12·c_q·n^{2/q}·M²`
    pub m_tilde_sq: f64,
    /// `δ₀`, when `R` is known.
    pub delta0: Option<f64>,
    /// Iteration count prescribed for accuracy `ε`, when `R` is known.
    pub prescribed_iterations: Option<u64>,
    /// `4δR√n/μ`, when `R` is known.
    pub sigma_budget: Option<f64>,
}

impl RunMetadata {
    /// True when two runs differ at most in their seeds.
    pub fn same_config(&self, other: &Self) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.seed = 0;
        b.seed = 0;
        a == b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// `x^0 .. x^N` when requested.
    pub iterates: Option<Vec<Vec<f64>>>,
    pub final_point: Vec<f64>,
    pub final_bregman_to_minimizer: Option<f64>,
    pub metadata: RunMetadata,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_regret(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.running_regret)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.k,
                r.objective,
                opt(r.running_regret),
                r.dual_norm_g,
                opt(r.bregman_to_minimizer)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(&self.metadata).expect("metadata serializes")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `(1/N)·Σ_{k<N} F(x^k) − F*`.
pub fn regret_of_trace(trace: &Trace, f_star: f64) -> f64 {
    let sum: f64 = trace.records.iter().map(|r| r.objective).sum();
    sum / trace.records.len() as f64 - f_star
}

/// Runs mirror descent with the two-point estimator.
///
/// Probes are confined to the `ε/M`-neighborhood of the feasible set; a probe
/// outside it aborts the run with [`Error::ProbeOutOfDomain`]. Adversarial
/// noise without an explicit anchor is anchored at the problem's minimizer.
pub fn run(
    problem: &StochasticProblem,
    noise: &NoiseModel,
    prox: &ProxSetup,
    params: &SmoothingParams,
    config: &RunConfig,
) -> Result<Trace> {
    if params.dim != problem.dim() {
        return Err(Error::Dimension { expected: problem.dim(), got: params.dim });
    }
    let anchored;
    let noise = match (noise.kind(), noise.anchor(), problem.minimizer()) {
        (NoiseKind::AdversarialAlign, None, Some(x_star)) => {
            anchored = noise.clone().with_anchor(x_star.to_vec());
            &anchored
        }
        _ => noise,
    };
    let domain = ExtendedDomain { set: prox.set().clone(), margin: params.probe_margin() };
    let oracle = NoisyOracle::new(problem, noise).with_domain(&domain);
    let mut source = TwoPointSource::new(oracle, *params, RunStreams::new(config.seed, config.streams));
    let mut metadata = base_metadata(problem, noise, prox, config)?;
    metadata.epsilon = Some(params.epsilon);
    metadata.tau = Some(params.tau);
    metadata.mu = Some(params.mu);
    if let Some(r2) = metadata.radius_sq {
        let r = r2.sqrt();
        metadata.delta0 = Some(noise_threshold(params.epsilon, params.lipschitz, r, problem.dim()));
        metadata.prescribed_iterations =
            Some(iteration_count(params.epsilon, params.lipschitz, r, problem.dim(), prox.q()));
        metadata.sigma_budget = Some(bias_budget(noise.bound(), r, problem.dim(), params.mu));
    }
    run_with_source(problem, prox, &mut source, config, metadata)
}

/// Runs mirror descent with exact mean subgradients in place of the estimator.
pub fn run_exact(problem: &StochasticProblem, prox: &ProxSetup, config: &RunConfig) -> Result<Trace> {
    let metadata = base_metadata(problem, &NoiseModel::none(), prox, config)?;
    run_with_source(problem, prox, &mut ExactGradientSource::new(problem), config, metadata)
}

fn base_metadata(
    problem: &StochasticProblem,
    noise: &NoiseModel,
    prox: &ProxSetup,
    config: &RunConfig,
) -> Result<RunMetadata> {
    let optimal_value = feasible_minimizer(problem, prox).and_then(|_| problem.optimal_value());
    let radius_sq = match feasible_minimizer(problem, prox) {
        Some(x_star) => Some(initial_radius_sq(prox, x_star)?),
        None => None,
    };
    Ok(RunMetadata {
        problem: problem.name().to_string(),
        n: problem.dim(),
        lipschitz: problem.lipschitz(),
        gamma: problem.strong_convexity(),
        xi_law: problem.law(),
        noise_kind: noise.kind(),
        delta: noise.bound(),
        prox_kind: prox.kind(),
        q: prox.q().to_string(),
        epsilon: None,
        tau: None,
        mu: None,
        step_rule: config.step_rule,
        iterations: config.iterations,
        seed: config.seed,
        streams: config.streams,
        report_points: config.report_points,
        optimal_value,
        radius_sq,
        m_tilde_sq: second_moment_bound(prox.q(), problem.dim(), problem.lipschitz()),
        delta0: None,
        prescribed_iterations: None,
        sigma_budget: None,
    })
}

fn feasible_minimizer<'p>(problem: &'p StochasticProblem, prox: &ProxSetup) -> Option<&'p [f64]> {
    problem.minimizer().filter(|x| prox.set().contains(x))
}

/// The mirror-descent loop over an arbitrary gradient source.
pub fn run_with_source<S: GradientSource>(
    problem: &StochasticProblem,
    prox: &ProxSetup,
    source: &mut S,
    config: &RunConfig,
    metadata: RunMetadata,
) -> Result<Trace> {
    if prox.dim() != problem.dim() {
        return Err(Error::Dimension { expected: problem.dim(), got: prox.dim() });
    }
    if config.iterations == 0 {
        return Err(Error::Config("a run needs at least one iteration".into()));
    }
    config.step_rule.validate()?;
    if matches!(config.step_rule, StepRule::StronglyConvex { .. }) && prox.kind() != ProxKind::Euclidean {
        return Err(Error::Config("the strongly convex step rule needs the Euclidean prox".into()));
    }
    if !prox.set().contains(prox.center()) {
        return Err(Error::Config("the prox center is not feasible".into()));
    }

    let f_star = metadata.optimal_value;
    let x_star = feasible_minimizer(problem, prox);
    let q = prox.q();
    let n_iter = config.iterations;

    let mut x = prox.center().to_vec();
    let mut records = Vec::with_capacity(n_iter as usize);
    let mut iterates = config.record_iterates.then(|| vec![x.clone()]);
    let mut objective_sum = 0.0;

    for k in 0..n_iter {
        let sample = source.sample(&x)?;
        let reported = match (config.report_points, &sample.perturbed) {
            (ReportPoints::Perturbed, Some(p)) => problem.exact_mean(p),
            _ => problem.exact_mean(&x),
        };
        objective_sum += reported;
        let bregman_to_minimizer = match x_star {
            Some(xs) => Some(bregman(prox, xs, &x)?),
            None => None,
        };
        records.push(TraceRecord {
            k,
            objective: reported,
            running_regret: f_star.map(|fs| objective_sum / (k + 1) as f64 - fs),
            dual_norm_g: dual_norm(&sample.gradient, q),
            bregman_to_minimizer,
        });
        let h = config.step_rule.step(k, n_iter);
        x = mirror_step(prox, &x, &sample.gradient, h)?;
        if let Some(its) = iterates.as_mut() {
            its.push(x.clone());
        }
    }

    let final_bregman_to_minimizer = match x_star {
        Some(xs) => Some(bregman(prox, xs, &x)?),
        None => None,
    };
    Ok(Trace { records, iterates, final_point: x, final_bregman_to_minimizer, metadata })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::builtin_problem;
    use crate::prox::FeasibleSet;
    use crate::smoothing::choose_params;

    fn ball(n: usize) -> ProxSetup {
        ProxSetup::euclidean(FeasibleSet::unit_ball(n).unwrap()).unwrap()
    }

    #[test]
    fn constant_step_examples() {
        assert!((step_size_constant(1.0, 1.0, 2) - 1.0).abs() < 1e-15);
        let h = step_size_constant(1.0, 48f64.sqrt(), 200);
        assert!((h - 0.1 / 48f64.sqrt()).abs() < 1e-15);
        assert!((h - 0.014434).abs() < 1e-6);
    }

    #[test]
    fn constant_step_minimizes_regret_bound() {
        let (r, m, n) = (0.7, 3.0, 500u64);
        let bound = |h: f64| h * m * m / 2.0 + r * r / (h * n as f64);
        let h = step_size_constant(r, m, n);
        for factor in [0.5, 0.9, 0.99, 1.01, 1.1, 2.0] {
            assert!(bound(h) <= bound(h * factor));
        }
    }

    #[test]
    fn strongly_convex_steps() {
        assert_eq!(step_size_strongly_convex(1.0, 1), 1.0);
        assert_eq!(step_size_strongly_convex(2.0, 10), 0.05);
        let steps: Vec<f64> = (1..100).map(|k| step_size_strongly_convex(0.7, k)).collect();
        assert!(steps.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn strongly_convex_rule_uses_one_based_index() {
        let rule = StepRule::StronglyConvex { gamma: 2.0 };
        assert_eq!(rule.step(0, 10), 0.5);
        assert_eq!(rule.step(9, 10), 0.05);
    }

    #[test]
    fn constant_problem_single_step_stays_put() {
        let p = crate::oracle::StochasticProblem::constant(2, 1.5).unwrap();
        let prox = ball(2);
        let params = choose_params(0.1, 1.0, 2).unwrap();
        let config = RunConfig::new(StepRule::Constant { h: 0.3 }, 1, 9).with_iterates();
        let trace = run(&p, &NoiseModel::none(), &prox, &params, &config).unwrap();
        assert_eq!(trace.final_point, prox.center().to_vec());
        assert_eq!(trace.records[0].dual_norm_g, 0.0);
        // a constant has no known minimizer, so no regret column
        assert_eq!(trace.records[0].running_regret, None);
        assert_eq!(trace.records[0].objective, 1.5);
    }

    #[test]
    fn single_iteration_regret_is_initial_gap() {
        let p = builtin_problem("l2_distance", 3, 1.0, None).unwrap();
        let prox = ball(3);
        let params = choose_params(0.1, 1.0, 3).unwrap();
        let config = RunConfig::new(StepRule::Constant { h: 0.01 }, 1, 1);
        let trace = run(&p, &NoiseModel::none(), &prox, &params, &config).unwrap();
        let expected = p.exact_mean(prox.center()) - p.optimal_value().unwrap();
        assert_eq!(trace.final_regret().unwrap(), expected);
    }

    #[test]
    fn exact_gradient_descent_converges_on_quadratic() {
        let p = builtin_problem("strongly_convex_quadratic", 2, 2.0, Some(1.0))
            .unwrap()
            .with_law(XiLaw::Degenerate)
            .unwrap();
        let prox = ball(2);
        let config = RunConfig::new(StepRule::StronglyConvex { gamma: 1.0 }, 50, 0);
        let trace = run_exact(&p, &prox, &config).unwrap();
        let v0 = trace.records[0].bregman_to_minimizer.unwrap();
        let v_final = trace.final_bregman_to_minimizer.unwrap();
        assert!(v_final < v0);
        assert!(v_final < 1e-20, "{v_final}");
    }

    #[test]
    fn strongly_convex_rule_rejects_entropy() {
        let p = builtin_problem("l1_weighted", 3, 1.0, None).unwrap();
        let prox = ProxSetup::entropy(3).unwrap();
        let config = RunConfig::new(StepRule::StronglyConvex { gamma: 1.0 }, 5, 0);
        assert!(matches!(run_exact(&p, &prox, &config), Err(Error::Config(_))));
    }

    #[test]
    fn oversized_radius_aborts_with_domain_error() {
        let p = builtin_problem("l2_distance", 2, 1.0, None).unwrap();
        let prox = ball(2);
        let params = choose_params(0.1, 1.0, 2).unwrap().with_radii(5.0, 0.01).unwrap();
        let config = RunConfig::new(StepRule::Constant { h: 0.01 }, 10, 0);
        match run(&p, &NoiseModel::none(), &prox, &params, &config) {
            Err(Error::ProbeOutOfDomain { tau, mu, .. }) => {
                assert_eq!(tau, Some(5.0));
                assert_eq!(mu, Some(0.01));
            }
            other => panic!("expected a domain error, got {other:?}"),
        }
    }

    #[test]
    fn regret_of_trace_arithmetic() {
        let p = builtin_problem("l2_distance", 2, 1.0, None).unwrap();
        let prox = ball(2);
        let params = choose_params(0.1, 1.0, 2).unwrap();
        let mut trace =
            run(&p, &NoiseModel::none(), &prox, &params, &RunConfig::new(StepRule::Constant { h: 0.1 }, 2, 0))
                .unwrap();
        trace.records[0].objective = 3.0;
        trace.records[1].objective = 2.0;
        assert_eq!(regret_of_trace(&trace, 2.0), 0.5);
        trace.records.iter_mut().for_each(|r| r.objective = 2.0);
        assert_eq!(regret_of_trace(&trace, 2.0), 0.0);
    }

    #[test]
    fn csv_has_stable_header_and_one_row_per_iteration() {
        let p = builtin_problem("l2_distance", 4, 1.0, None).unwrap();
        let prox = ball(4);
        let params = choose_params(0.1, 1.0, 4).unwrap();
        let rule = StepRule::auto_for(&p, &prox).unwrap();
        let trace = run(&p, &NoiseModel::none(), &prox, &params, &RunConfig::new(rule, 25, 3)).unwrap();
        let csv = trace.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_CSV_HEADER));
        assert_eq!(lines.count(), 25);
        let meta: serde_json::Value = serde_json::from_str(&trace.metadata_json()).unwrap();
        assert_eq!(meta["seed"], 3);
        assert_eq!(meta["q"], "2");
    }
}

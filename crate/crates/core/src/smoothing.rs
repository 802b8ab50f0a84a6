//! Double smoothing: parameter selection and the two-point gradient estimator.
//!
//! The estimator probes the noisy oracle at `x + τe₁ + μe₂` and `x + τe₁` with
//! one shared realization ξ, where `e₁` is uniform in the unit ball and `e₂`
//! uniform on the unit sphere:
//!
//! ```text
//! g = n/μ · ( f̃(x + τe₁ + μe₂, ξ) − f̃(x + τe₁, ξ) ) · e₂
//! ```
//!
//! It is an unbiased gradient of `f^{τ,μ}(x) = E f(x + τẽ₁ + μẽ₂, ξ)` when the
//! noise is zero. With `τ = ε/(4M)` and `μ = ε/(4Mn)` its squared dual norm has
//! expectation at most `12·c_q·n^{2/q}·M²` as long as the noise stays below
//! [`noise_threshold`].

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::oracle::{EvalContext, NoisyOracle, ProbeRole, StochasticProblem, Xi};
use crate::prox::DualExponent;
use crate::rng::{sample_ball_into, sample_sphere_into, sample_xi, RandomStream, RunStreams};
use crate::vector::MeanAccumulator;

/// Default first-branch constant of the noise threshold.
pub const THRESHOLD_CONSTANT: f64 = 56.0;
/// First-branch constant obtained by substituting `μ = ε/(4Mn)` into
/// `4δR√n/μ ≤ ε/4`.
pub const THRESHOLD_CONSTANT_CONSERVATIVE: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub epsilon: f64,
    pub lipschitz: f64,
    pub dim: usize,
    /// Outer (ball) smoothing radius.
    pub tau: f64,
    /// Inner (sphere) smoothing radius.
    pub mu: f64,
}

/// `τ = ε/(4M)`, `μ = ε/(4Mn)`.
pub fn choose_params(epsilon: f64, lipschitz: f64, n: usize) -> Result<SmoothingParams> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::Config(format!("Lipschitz constant must be positive, got {lipschitz}")));
    }
    if n == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    let tau = epsilon / (4.0 * lipschitz);
    let mu = epsilon / (4.0 * lipschitz * n as f64);
    Ok(SmoothingParams { epsilon, lipschitz, dim: n, tau, mu })
}

impl SmoothingParams {
    /// Replaces the radii, e.g. to reproduce a misconfigured run.
    pub fn with_radii(mut self, tau: f64, mu: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite() && mu > 0.0 && mu.is_finite()) {
            return Err(Error::Config(format!("need tau >= 0 and mu > 0, got tau = {tau}, mu = {mu}")));
        }
        self.tau = tau;
        self.mu = mu;
        Ok(self)
    }

    /// Radius of the neighborhood of the feasible set on which probes may land.
    pub fn probe_margin(&self) -> f64 {
        self.epsilon / self.lipschitz
    }
}

/// `δ₀ = min{ ε²/(56·M·R·n^{3/2}), ε/(7·n^{3/2}) }`.
pub fn noise_threshold(epsilon: f64, lipschitz: f64, radius: f64, n: usize) -> f64 {
    noise_threshold_with(epsilon, lipschitz, radius, n, THRESHOLD_CONSTANT)
}

/// [`noise_threshold`] with an explicit first-branch constant.
pub fn noise_threshold_with(epsilon: f64, lipschitz: f64, radius: f64, n: usize, first_constant: f64) -> f64 {
    let n32 = libm::pow(n as f64, 1.5);
    let bias_branch = epsilon * epsilon / (first_constant * lipschitz * radius * n32);
    let moment_branch = epsilon / (7.0 * n32);
    bias_branch.min(moment_branch)
}

/// `c_q = min{q − 1, 4 ln n}`, floored at 1 so the `n = 1` case (where
/// `E‖e₂‖² = 1`) stays a valid bound.
pub fn c_q_constant(q: DualExponent, n: usize) -> f64 {
    let log_branch = 4.0 * libm::log(n as f64);
    let value = match q {
        DualExponent::Finite(q) => (q - 1.0).min(log_branch),
        DualExponent::Infinity => log_branch,
    };
    value.max(1.0)
}

/// `n^{2/q}`, equal to 1 for `q = ∞`.
pub fn n_pow_two_over_q(q: DualExponent, n: usize) -> f64 {
    libm::pow(n as f64, q.two_over_q())
}

/// `M̃² = 12·c_q·n^{2/q}·M²`.
pub fn second_moment_bound(q: DualExponent, n: usize, lipschitz: f64) -> f64 {
    12.0 * c_q_constant(q, n) * n_pow_two_over_q(q, n) * lipschitz * lipschitz
}

/// `N = ⌈384·c_q·n^{2/q}·M²R²/ε²⌉`.
pub fn iteration_count(epsilon: f64, lipschitz: f64, radius: f64, n: usize, q: DualExponent) -> u64 {
    let raw = 384.0 * c_q_constant(q, n) * n_pow_two_over_q(q, n) * lipschitz * lipschitz * radius * radius
        / (epsilon * epsilon);
    raw.ceil().max(1.0) as u64
}

/// Upper bound `4δR√n/μ` on the bias term contributed by the noise.
pub fn bias_budget(delta: f64, radius: f64, n: usize, mu: f64) -> f64 {
    4.0 * delta * radius * (n as f64).sqrt() / mu
}

/// The composite randomness `η = (ξ, ẽ₁, e₂)` of one estimator call.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorDraw {
    pub xi: Xi,
    /// Uniform in the unit ball.
    pub e1: Vec<f64>,
    /// Uniform on the unit sphere.
    pub e2: Vec<f64>,
}

impl EstimatorDraw {
    /// Fresh draw, one value from each role's stream.
    pub fn sample(problem: &StochasticProblem, streams: &mut RunStreams) -> Self {
        let n = problem.dim();
        let xi = sample_xi(&problem.law(), problem.xi_len(), &mut streams.xi);
        let mut e1 = vec![0.0; n];
        sample_ball_into(&mut e1, &mut streams.ball);
        let mut e2 = vec![0.0; n];
        sample_sphere_into(&mut e2, &mut streams.sphere);
        Self { xi, e1, e2 }
    }

    /// Fresh draw taking ξ, `e₁` and `e₂` in turn from a single stream.
    pub fn sample_from(problem: &StochasticProblem, stream: &mut RandomStream) -> Self {
        let n = problem.dim();
        let xi = sample_xi(&problem.law(), problem.xi_len(), stream);
        let mut e1 = vec![0.0; n];
        sample_ball_into(&mut e1, stream);
        let mut e2 = vec![0.0; n];
        sample_sphere_into(&mut e2, stream);
        Self { xi, e1, e2 }
    }

    /// `x + τe₁`
    pub fn base_point(&self, x: &[f64], tau: f64) -> Vec<f64> {
        x.iter().zip(&self.e1).map(|(a, e)| a + tau * e).collect()
    }

    /// `x + τe₁ + μe₂`
    pub fn shifted_point(&self, x: &[f64], tau: f64, mu: f64) -> Vec<f64> {
        x.iter()
            .zip(self.e1.iter().zip(&self.e2))
            .map(|(a, (e1, e2))| a + tau * e1 + mu * e2)
            .collect()
    }
}

/// The two-point stochastic gradient.
pub fn two_point_gradient(
    oracle: &NoisyOracle<'_>,
    x: &[f64],
    params: &SmoothingParams,
    draw: &EstimatorDraw,
) -> Result<Vec<f64>> {
    let n = oracle.problem.dim();
    check_dim(n, x.len())?;
    check_dim(n, draw.e1.len())?;
    check_dim(n, draw.e2.len())?;
    Ok(two_point_parts(oracle, x, params, draw)?.0)
}

/// The estimator together with the larger of the two observed magnitudes,
/// which sets the rounding floor of the finite difference.
pub(crate) fn two_point_parts(
    oracle: &NoisyOracle<'_>,
    x: &[f64],
    params: &SmoothingParams,
    draw: &EstimatorDraw,
) -> Result<(Vec<f64>, f64)> {
    let n = oracle.problem.dim();
    let shifted = draw.shifted_point(x, params.tau, params.mu);
    let base = draw.base_point(x, params.tau);
    let high = oracle.observe(&shifted, &draw.xi, &EvalContext::pair(ProbeRole::Shifted, x, &draw.e2))?;
    let low = oracle.observe(&base, &draw.xi, &EvalContext::pair(ProbeRole::Base, x, &draw.e2))?;
    let scale = n as f64 / params.mu * (high - low);
    Ok((draw.e2.iter().map(|e| scale * e).collect(), high.abs().max(low.abs())))
}

/// Hard cap on any single estimator output: `n·(M + 2δ/μ)`.
pub fn estimator_norm_cap(params: &SmoothingParams, delta: f64) -> f64 {
    params.dim as f64 * (params.lipschitz + 2.0 * delta / params.mu)
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
}

impl From<&MeanAccumulator> for McEstimate {
    fn from(acc: &MeanAccumulator) -> Self {
        Self { mean: acc.mean(), std_err: acc.std_err(), samples: acc.count() }
    }
}

/// Monte-Carlo estimate of `f^{τ,μ}(x) = E f(x + τẽ₁ + μẽ₂, ξ)` with `ẽ₁, ẽ₂`
/// independent and uniform in the unit ball. `μ = 0` gives `f^τ`.
pub fn smoothed_value_mc(
    problem: &StochasticProblem,
    x: &[f64],
    tau: f64,
    mu: f64,
    samples: u64,
    stream: &mut RandomStream,
) -> Result<McEstimate> {
    let n = problem.dim();
    check_dim(n, x.len())?;
    if samples == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let mut e1 = vec![0.0; n];
    let mut e2 = vec![0.0; n];
    let mut point = vec![0.0; n];
    let mut acc = MeanAccumulator::default();
    for _ in 0..samples {
        sample_ball_into(&mut e1, stream);
        sample_ball_into(&mut e2, stream);
        let xi = sample_xi(&problem.law(), problem.xi_len(), stream);
        for i in 0..n {
            point[i] = x[i] + tau * e1[i] + mu * e2[i];
        }
        acc.push(problem.realize(&point, &xi));
    }
    Ok(McEstimate::from(&acc))
}

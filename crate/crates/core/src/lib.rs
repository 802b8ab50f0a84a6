//! Gradient-free stochastic convex optimization with a two-point oracle.
//!
//! The optimizer only sees noisy function values `f̃(x, ξ) = f(x, ξ) + δ(x, ξ)`
//! of a convex, `M`-Lipschitz, possibly nonsmooth `f`, two points at a time
//! and with the same realization ξ. Each iteration doubly smooths the problem
//! (a ball average of radius `τ` around the iterate, then a sphere finite
//! difference of radius `μ`), forms the stochastic gradient
//! `n/μ·(f̃(x + τe₁ + μe₂, ξ) − f̃(x + τe₁, ξ))·e₂` and takes a mirror-descent
//! step. With `τ = ε/(4M)`, `μ = ε/(4Mn)` and noise below [`noise_threshold`]
//! the average regret drops below `ε` after [`iteration_count`] steps.
//!
//! ```
//! use zomd::{builtin_problem, choose_params, run, FeasibleSet, NoiseModel, ProxSetup, RunConfig, StepRule};
//!
//! let n = 8;
//! let problem = builtin_problem("l2_distance", n, 1.0, None)?;
//! let prox = ProxSetup::euclidean(FeasibleSet::unit_ball(n)?)?;
//! let params = choose_params(0.1, problem.lipschitz(), n)?;
//! let rule = StepRule::auto_for(&problem, &prox)?;
//! let trace = run(&problem, &NoiseModel::none(), &prox, &params, &RunConfig::new(rule, 500, 7))?;
//! assert!(trace.final_regret().unwrap() >= 0.0);
//! # Ok::<(), zomd::Error>(())
//! ```
//!
//! Modules:
//! * [`prox`]: feasible sets, Bregman divergences, mirror step.
//! * [`rng`]: reproducible sphere, ball and ξ sampling.
//! * [`oracle`]: built-in test problems and the bounded noise layer.
//! * [`smoothing`]: parameter choices and the two-point estimator.
//! * [`solver`]: the mirror-descent loop and its trace.
//! * [`diagnostics`]: Monte-Carlo inequality checks and replicate aggregation.

pub mod diagnostics;
mod error;
pub mod oracle;
pub mod prox;
pub mod rng;
pub mod smoothing;
pub mod solver;
pub mod vector;

pub use error::{Error, Result};
pub use oracle::{
    builtin_problem, EvalContext, ExtendedDomain, NoiseKind, NoiseModel, NoisyOracle, ProbeRole,
    StochasticProblem, Xi, XiLaw, BUILTIN_NAMES,
};
pub use prox::{bregman, dual_norm, initial_radius_sq, mirror_step, DualExponent, FeasibleSet, ProxKind, ProxSetup};
pub use rng::{sample_ball, sample_sphere, sample_xi, RandomStream, RunStreams, StreamIds};
pub use smoothing::{
    bias_budget, c_q_constant, choose_params, iteration_count, noise_threshold, noise_threshold_with,
    second_moment_bound, smoothed_value_mc, two_point_gradient, EstimatorDraw, McEstimate, SmoothingParams,
};
pub use solver::{
    regret_of_trace, run, run_exact, run_with_source, step_size_constant, step_size_strongly_convex,
    GradientSource, ReportPoints, RunConfig, RunMetadata, StepRule, Trace, TraceRecord, TRACE_CSV_HEADER,
};

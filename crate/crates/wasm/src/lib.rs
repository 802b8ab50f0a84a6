//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function returns a JSON string; the page parses it and draws
//! on a canvas. The `*_data` functions hold the logic and run natively too.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use zomd::diagnostics::{aggregate_runs, verify_sphere_moment};
use zomd::{
    builtin_problem, choose_params, initial_radius_sq, noise_threshold, run, second_moment_bound, smoothed_value_mc,
    DualExponent, FeasibleSet, NoiseKind, NoiseModel, ProxSetup, RandomStream, RunConfig, StepRule,
    StochasticProblem, XiLaw,
};

const MAX_PLOT_POINTS: usize = 400;

#[derive(Debug, Serialize)]
pub struct RegretCurve {
    pub k: Vec<u64>,
    pub mean: Vec<f64>,
    /// `M̃R√(2/N)` for the whole run.
    pub bound: f64,
    pub delta: f64,
    pub delta0: f64,
    pub prescribed_iterations: u64,
}

/// Seed-mean running regret of the `l2_distance` problem on the unit ball.
pub fn regret_curve_data(
    n: usize,
    iterations: u64,
    seeds: u64,
    epsilon: f64,
    delta_multiple: f64,
) -> zomd::Result<RegretCurve> {
    if seeds == 0 || iterations == 0 {
        return Err(zomd::Error::Config("need at least one seed and one iteration".into()));
    }
    let problem = builtin_problem("l2_distance", n, 1.0, None)?;
    let prox = ProxSetup::euclidean(FeasibleSet::unit_ball(n)?)?;
    let params = choose_params(epsilon, 1.0, n)?;
    let radius = initial_radius_sq(&prox, problem.minimizer().expect("builtin has a minimizer"))?.sqrt();
    let delta0 = noise_threshold(epsilon, 1.0, radius, n);
    let delta = delta_multiple * delta0;
    let noise = if delta > 0.0 { NoiseModel::new(NoiseKind::AdversarialAlign, delta)? } else { NoiseModel::none() };
    let rule = StepRule::auto_for(&problem, &prox)?;
    let traces = (0..seeds)
        .map(|seed| run(&problem, &noise, &prox, &params, &RunConfig::new(rule, iterations, seed)))
        .collect::<zomd::Result<Vec<_>>>()?;
    let curve = aggregate_runs(&traces)?;
    let stride = (curve.mean.len() / MAX_PLOT_POINTS).max(1);
    let picked: Vec<usize> = (0..curve.mean.len()).filter(|k| k % stride == 0 || k + 1 == curve.mean.len()).collect();
    let m_tilde = second_moment_bound(prox.q(), n, 1.0).sqrt();
    Ok(RegretCurve {
        k: picked.iter().map(|&k| k as u64).collect(),
        mean: picked.iter().map(|&k| curve.mean[k]).collect(),
        bound: m_tilde * radius * (2.0 / iterations as f64).sqrt(),
        delta,
        delta0,
        prescribed_iterations: traces[0].metadata.prescribed_iterations.unwrap_or(0),
    })
}

#[derive(Debug, Serialize)]
pub struct MomentRow {
    pub n: usize,
    pub mean: f64,
    pub std_err: f64,
    pub bound: f64,
}

/// Monte-Carlo `E‖e‖_q²` on the unit sphere against its bound, for n = 2, 4, …, 256.
pub fn sphere_moments_data(q: f64, samples: u64, seed: u64) -> zomd::Result<Vec<MomentRow>> {
    let q = if q.is_infinite() { DualExponent::Infinity } else { DualExponent::new(q)? };
    let mut stream = RandomStream::new(seed, 1);
    (1..=8)
        .map(|p| {
            let n = 1usize << p;
            let r = verify_sphere_moment(n, q, samples, &mut stream)?;
            Ok(MomentRow { n, mean: r.lhs, std_err: r.std_err, bound: r.rhs })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct SmoothingProfile {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    /// Closed form of `E|x + τu|`, `u` uniform on `[−1, 1]`.
    pub exact: Vec<f64>,
    pub monte_carlo: Vec<f64>,
}

/// The ball-smoothed `|x|` on `[−1, 1]`, exact and estimated.
pub fn smoothed_abs_data(tau: f64, points: usize, samples: u64, seed: u64) -> zomd::Result<SmoothingProfile> {
    if points < 2 || !(tau > 0.0) {
        return Err(zomd::Error::Config("need tau > 0 and at least two points".into()));
    }
    let problem = StochasticProblem::l2_distance(vec![0.0], 1.0, XiLaw::Degenerate)?;
    let mut stream = RandomStream::new(seed, 2);
    let mut out = SmoothingProfile { x: vec![], f: vec![], exact: vec![], monte_carlo: vec![] };
    for i in 0..points {
        let x = -1.0 + 2.0 * i as f64 / (points - 1) as f64;
        out.x.push(x);
        out.f.push(x.abs());
        out.exact.push(if x.abs() >= tau { x.abs() } else { (x * x + tau * tau) / (2.0 * tau) });
        out.monte_carlo.push(smoothed_value_mc(&problem, &[x], tau, 0.0, samples, &mut stream)?.mean);
    }
    Ok(out)
}

fn to_js<T: Serialize>(result: zomd::Result<T>) -> Result<String, JsError> {
    match result {
        Ok(v) => Ok(serde_json::to_string(&v).expect("plain data serializes")),
        Err(e) => Err(JsError::new(&e.to_string())),
    }
}

#[wasm_bindgen]
pub fn regret_curve(n: usize, iterations: u32, seeds: u32, epsilon: f64, delta_multiple: f64) -> Result<String, JsError> {
    to_js(regret_curve_data(n, iterations as u64, seeds as u64, epsilon, delta_multiple))
}

#[wasm_bindgen]
pub fn sphere_moments(q: f64, samples: u32, seed: u32) -> Result<String, JsError> {
    to_js(sphere_moments_data(q, samples as u64, seed as u64))
}

#[wasm_bindgen]
pub fn smoothed_abs(tau: f64, points: usize, samples: u32, seed: u32) -> Result<String, JsError> {
    to_js(smoothed_abs_data(tau, points, samples as u64, seed as u64))
}

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde_json::json;

use zomd::diagnostics::{
    verify_distance_bound, verify_gradient_moment, verify_modulus_moment, verify_projected_moment,
    verify_smoothing_gap, verify_sphere_moment, verify_unbiasedness, VerificationReport,
};
use zomd::{
    builtin_problem, choose_params, run, sample_sphere, DualExponent, NoiseModel, RandomStream, RunConfig,
    StochasticProblem, Trace, XiLaw,
};

use crate::config::{ExperimentConfig, Resolved, SweepAxis};
use crate::CliError;

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn run_one(resolved: &Resolved, config: &ExperimentConfig, seed: u64) -> Result<Trace, CliError> {
    let run_config = RunConfig::new(resolved.step_rule, resolved.iterations, seed).reporting(config.report_points);
    Ok(run(&resolved.problem, &resolved.noise, &resolved.prox, &resolved.params, &run_config)?)
}

/// One trace per seed: `run_seed<s>.csv` plus `run_seed<s>.json`.
pub fn cmd_run(config: &ExperimentConfig) -> Result<(), CliError> {
    let resolved = config.resolve()?;
    let out = &config.output.dir;
    fs::create_dir_all(out)?;
    let traces: Vec<Result<Trace, CliError>> =
        pool(config.workers)?.install(|| config.seeds.par_iter().map(|&s| run_one(&resolved, config, s)).collect());
    let echo = config.to_toml();
    for (seed, trace) in config.seeds.iter().zip(traces) {
        let trace = trace?;
        write_file(&out.join(format!("run_seed{seed}.csv")), &trace.to_csv_string())?;
        let meta = json!({
            "config": echo,
            "run": trace.metadata,
            "final_regret": trace.final_regret(),
            "final_v_to_xstar": trace.final_bregman_to_minimizer,
            "generated_at_unix": unix_time(),
        });
        write_file(&out.join(format!("run_seed{seed}.json")), &serde_json::to_string_pretty(&meta).unwrap())?;
        match trace.final_regret() {
            Some(r) => println!("seed {seed}: N = {}, regret {r:.6e}", trace.len()),
            None => println!("seed {seed}: N = {}", trace.len()),
        }
    }
    Ok(())
}

pub const SUMMARY_HEADER: &str =
    "axis,value,seed,n,n_prescribed,n_used,epsilon,delta,delta0,tau,mu,final_regret,final_v_to_xstar";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs every `(value, seed)` pair and writes per-run traces plus `summary.csv`.
pub fn cmd_sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config("a sweep needs at least one value".into()));
    }
    let mut settings = Vec::with_capacity(values.len());
    for &v in values {
        let resolved = match axis {
            SweepAxis::Iterations => config.resolve_with(config.problem.n, Some(as_count(v, "N")?), None)?,
            SweepAxis::Delta => config.resolve_with(config.problem.n, None, Some(v))?,
            SweepAxis::Dim => config.resolve_with(as_count(v, "n")? as usize, None, None)?,
        };
        settings.push((v, resolved));
    }
    let jobs: Vec<(usize, u64)> =
        (0..settings.len()).flat_map(|i| config.seeds.iter().map(move |&s| (i, s))).collect();
    let out = &config.output.dir;
    fs::create_dir_all(out)?;
    let results: Vec<Result<(), CliError>> = pool(config.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(i, seed)| {
                let (value, resolved) = &settings[i];
                let trace = run_one(resolved, config, seed)?;
                let name = format!("sweep_{}_{value}_seed{seed}.csv", axis.as_str());
                write_file(&out.join(name), &trace.to_csv_string())
            })
            .collect()
    });
    results.into_iter().collect::<Result<Vec<()>, CliError>>()?;

    // summary is assembled from the files on disk after all workers joined
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for &(i, seed) in &jobs {
        let (value, r) = &settings[i];
        let name = format!("sweep_{}_{value}_seed{seed}.csv", axis.as_str());
        let last = last_record(&out.join(&name))?;
        writeln!(
            summary,
            "{},{value},{seed},{},{},{},{},{},{},{},{},{},{}",
            axis.as_str(),
            r.problem.dim(),
            opt(r.prescribed_iterations),
            r.iterations,
            r.params.epsilon,
            r.noise.bound(),
            opt(r.delta0),
            r.params.tau,
            r.params.mu,
            last.0,
            last.1,
        )
        .unwrap();
    }
    write_file(&out.join("summary.csv"), &summary)?;
    let meta = json!({
        "config": config.to_toml(),
        "axis": axis.as_str(),
        "values": values,
        "generated_at_unix": unix_time(),
    });
    write_file(&out.join("sweep_metadata.json"), &serde_json::to_string_pretty(&meta).unwrap())?;

    for (value, r) in &settings {
        let mut total = 0.0;
        let mut count = 0usize;
        for line in summary.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols[1] == value.to_string() {
                if let Ok(reg) = cols[11].parse::<f64>() {
                    total += reg;
                    count += 1;
                }
            }
        }
        if count > 0 {
            println!("{} = {value}: N = {}, seed-mean regret {:.6e}", axis.as_str(), r.iterations, total / count as f64);
        }
    }
    Ok(())
}

fn as_count(v: f64, what: &str) -> Result<u64, CliError> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(CliError::Config(format!("{what} values must be positive integers, got {v}")))
    }
}

/// Final running regret and `V(x*, x^N−1)` from a trace CSV (empty when unknown).
fn last_record(path: &Path) -> Result<(String, String), CliError> {
    let text = fs::read_to_string(path)?;
    let line = text.lines().last().unwrap_or_default();
    let cols: Vec<&str> = line.split(',').collect();
    if cols.len() != 5 {
        return Err(CliError::Runtime(format!("malformed trace {}", path.display())));
    }
    Ok((cols[2].to_string(), cols[4].to_string()))
}

/// Runs the Monte-Carlo suite. Returns whether every report passed.
pub fn cmd_verify(config: &ExperimentConfig) -> Result<bool, CliError> {
    let samples = config.verify.samples;
    let seed = config.seeds[0];
    let mut stream_id = 100;
    let mut next_stream = || {
        stream_id += 1;
        RandomStream::new(seed, stream_id)
    };
    let mut reports: Vec<VerificationReport> = Vec::new();

    let sphere_samples = samples.max(zomd::diagnostics::MIN_SPHERE_SAMPLES);
    for (n, q) in [
        (2usize, DualExponent::Finite(2.0)),
        (10, DualExponent::Finite(2.0)),
        (10, DualExponent::Finite(4.0)),
        (100, DualExponent::Infinity),
    ] {
        reports.push(verify_sphere_moment(n, q, sphere_samples, &mut next_stream())?);
        let c: Vec<f64> = (0..n).map(|j| 1.0 + (j % 3) as f64).collect();
        reports.push(verify_projected_moment(n, q, &c, sphere_samples, &mut next_stream())?);
    }
    for (m, tau, mu) in [(1.0, 0.1, 0.01), (2.0, 0.05, 0.005)] {
        reports.push(verify_modulus_moment(m, tau, mu, samples, &mut next_stream())?);
    }
    for n in [1usize, 4] {
        let quadratic = builtin_problem("strongly_convex_quadratic", n, 2.0, Some(1.0))?;
        let a: Vec<f64> = (0..n).map(|i| 0.5 - 0.3 * i as f64).collect();
        let linear = StochasticProblem::linear(a, 0.2, XiLaw::Gaussian { std: 0.1 })?;
        for problem in [quadratic, linear] {
            let x: Vec<f64> = (0..n).map(|i| 0.3 - 0.15 * i as f64).collect();
            let params = choose_params(0.1, problem.lipschitz(), n)?;
            reports.push(verify_unbiasedness(&problem, &NoiseModel::none(), &x, &params, samples, &mut next_stream())?);
        }
    }

    // checks on the configured problem
    let resolved = config.resolve()?;
    let x0 = resolved.prox.center().to_vec();
    reports.push(verify_gradient_moment(
        &resolved.problem,
        &resolved.noise,
        &x0,
        &resolved.params,
        resolved.prox.q(),
        samples,
        &mut next_stream(),
    )?);
    let mut points = vec![x0.clone()];
    let mut direction_stream = next_stream();
    for _ in 0..3 {
        let e = sample_sphere(resolved.problem.dim(), &mut direction_stream);
        let p: Vec<f64> = x0.iter().zip(&e).map(|(c, d)| c + 0.5 * d).collect();
        points.push(resolved.prox.set().project(&p));
    }
    reports.push(verify_smoothing_gap(&resolved.problem, &points, resolved.params.tau, samples, &mut next_stream())?);
    if resolved.radius.is_some() {
        let traces: Vec<Result<Trace, CliError>> = pool(config.workers)?
            .install(|| config.seeds.par_iter().map(|&s| run_one(&resolved, config, s)).collect());
        let traces = traces.into_iter().collect::<Result<Vec<_>, _>>()?;
        reports.push(verify_distance_bound(&traces)?);
    }

    for r in &mut reports {
        r.scale_bound(config.verify.bound_scale);
    }
    let all_passed = reports.iter().all(|r| r.passed);
    print_table(&reports);
    fs::create_dir_all(&config.output.dir)?;
    let doc = json!({
        "config": config.to_toml(),
        "all_passed": all_passed,
        "reports": reports,
        "generated_at_unix": unix_time(),
    });
    write_file(&config.output.dir.join("verify_report.json"), &serde_json::to_string_pretty(&doc).unwrap())?;
    Ok(all_passed)
}

fn print_table(reports: &[VerificationReport]) {
    println!("{:<30} {:>14} {:>12} {:>14}  result", "check", "lhs", "std_err", "rhs");
    for r in reports {
        let mut tag = r.id.as_str().to_string();
        for key in ["n", "q", "M"] {
            if let Some(v) = r.parameters.get(key) {
                write!(tag, " {key}={v}").unwrap();
            }
        }
        println!(
            "{:<30} {:>14.6e} {:>12.3e} {:>14.6e}  {}",
            tag,
            r.lhs,
            r.std_err,
            r.rhs,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
}

//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use opinf_schwarz::driver::config::RunConfig;
use opinf_schwarz::driver::metrics::error_metric;
use opinf_schwarz::driver::pipeline::{compare, run_fom, run_schwarz, stitch_run, Comparison, LambdaChoice, HYBRID, MONO};
use opinf_schwarz::fem::{constant_fn, MassMatrix};
use opinf_schwarz::rom::{compute_pod, fit_operators};
use opinf_schwarz::schwarz::{build_interfaces, run_coupled};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fe_correctness() -> Outcome {
    let clock = Instant::now();
    let mut affine: f64 = 0.0;
    let mut spatial = Vec::new();
    let mut temporal = Vec::new();
    for mass in MASSES {
        affine = affine.max(affine_steady_error(8, mass)).max(affine_transient_error(8, mass));
        spatial.push(smooth_steady_error(8, mass) / smooth_steady_error(16, mass));
        let e: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&dt| temporal_error(dt, mass)).collect();
        temporal.extend(e.windows(2).map(|w| w[0] / w[1]));
    }
    let seconds = clock.elapsed().as_secs_f64();
    let pass = affine <= 1e-10
        && spatial.iter().all(|r| (3.5..=4.5).contains(r))
        && temporal.iter().all(|r| (1.8..=2.2).contains(r))
        && seconds < 30.0;
    outcome(
        pass,
        format!("affine error {affine:.2e}, spatial ratios {spatial:.3?}, temporal ratios {temporal:.3?}, {seconds:.2} s"),
    )
}

fn schwarz_consistency() -> Outcome {
    let clock = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.schwarz.controls.tol = 1e-12;
    cfg.schwarz.controls.max_iters = 100;
    let run = || -> opinf_schwarz::Result<f64> {
        let fom = run_fom(&cfg)?;
        let schwarz = cfg.all_fe();
        let coupled = run_schwarz(&cfg, &schwarz, &[])?;
        let nodal = stitch_run(&cfg, &schwarz, &coupled)?;
        Ok(error_metric(&nodal, &coupled.trajectories[0].times, &fom.nodal, &fom.trajectory.times)?.value)
    };
    match run() {
        Ok(err) => {
            let seconds = clock.elapsed().as_secs_f64();
            outcome(err <= 1e-9 && seconds < 600.0, format!("error {err:.3e} (gate 1e-9), {seconds:.1} s"))
        }
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}

fn hybrid_error(c: &Comparison) -> f64 {
    c.report.model(HYBRID).expect("hybrid column").error.value
}

fn hybrid_accuracy(c: &Comparison) -> Outcome {
    let err = hybrid_error(c);
    let finite = c
        .hybrid
        .trajectories
        .iter()
        .all(|t| t.states.iter().all(|v| v.is_finite()));
    let reached = c.hybrid.trajectories[0].times.last().copied().unwrap_or(0.0);
    outcome(
        finite && err <= 1e-2 && (reached - 5.0).abs() < 1e-9,
        format!("error {err:.3e} (gate 1e-2), finite through t={reached}: {finite}"),
    )
}

fn beats_monolithic(c: &Comparison) -> Outcome {
    let hybrid = hybrid_error(c);
    let mono = c.report.model(MONO).expect("mono column").error.value;
    outcome(
        mono >= 5.0 * hybrid,
        format!("monolithic {mono:.3e} with lambda={:e} vs hybrid {hybrid:.3e}, ratio {:.1}", c.mono.lambda, mono / hybrid),
    )
}

fn speedup(c: &Comparison) -> Outcome {
    let hybrid = c.hybrid.solve_seconds;
    let fe = c.all_fe.solve_seconds;
    outcome(
        hybrid <= 0.7 * fe,
        format!("hybrid solve {hybrid:.3} s, all-FE solve {fe:.3} s, ratio {:.2} (gate 0.7)", hybrid / fe),
    )
}

fn unregularized(c: &Comparison, accuracy: &Outcome) -> Outcome {
    let lambdas: Vec<f64> = c
        .training
        .models
        .iter()
        .flatten()
        .map(|m| m.operators.lambda)
        .collect();
    let zero = lambdas.len() == 3 && lambdas.iter().all(|&l| l == 0.0);
    outcome(
        zero && accuracy.pass,
        format!("trained lambdas {lambdas:?}, hybrid accuracy criterion passed: {}", accuracy.pass),
    )
}

fn opinf_oracle() -> Outcome {
    let clock = Instant::now();
    let mut rng = StdRng::seed_from_u64(2024);
    let (mut recovery, mut residual, mut agreement): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..20 {
        let r = rng.random_range(2..=6);
        let m = rng.random_range(1..=8);
        let nt = r + m + 1 + rng.random_range(5..40);
        let (k, b, f) = random_stable_rom(&mut rng, r, m);
        let (y, g, ydot) = realizable_data(&mut rng, &k, &b, &f, nt);
        let ops = fit_operators(&y, &ydot, &g, 0.0).unwrap();
        let err = (&ops.khat - &k).norm() + (&ops.bhat - &b).norm() + (&ops.fhat - &f).norm();
        recovery = recovery.max(err / (k.norm() + b.norm() + f.norm()));

        let lambda = 10f64.powf(rng.random_range(-4.0..1.0));
        let noisy = &ydot + random_matrix(&mut rng, r, nt) * 0.1;
        let ops = fit_operators(&y, &noisy, &g, lambda).unwrap();
        let x = stacked(&ops.khat, &ops.bhat, &ops.fhat);
        residual = residual.max(normal_residual(&y, &noisy, &g, lambda, &x));
        let oracle = oracle_fit(&y, &noisy, &g, lambda);
        agreement = agreement.max((&x - &oracle).norm() / oracle.norm());
    }
    let seconds = clock.elapsed().as_secs_f64();
    outcome(
        recovery <= 1e-8 && residual <= 1e-10 && agreement <= 1e-9 && seconds < 10.0,
        format!(
            "worst recovery {recovery:.2e}, worst normal-equation residual {residual:.2e}, oracle difference {agreement:.2e}, {seconds:.3} s"
        ),
    )
}

fn pod_identity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let x = random_matrix(&mut rng, 200, 50);
        for r in [1, 10, 25, 49] {
            let basis = compute_pod(&x, r).unwrap();
            let residual = (&x - &basis.basis * basis.project(&x)).norm();
            let tail = basis.singular_values[r..].iter().map(|s| s * s).sum::<f64>().sqrt();
            worst = worst.max((residual - tail).abs());
        }
    }
    outcome(worst <= 1e-10, format!("worst |reconstruction error - tail| {worst:.2e}"))
}

fn interface_properties(c: &Comparison) -> Outcome {
    let cfg = RunConfig::default();
    let table = build_interfaces(&cfg.schwarz).unwrap();
    let top_left = table.entries[0]
        .iter()
        .filter(|e| (e.point[1] - 0.54).abs() < 1e-12 && e.point[0] < 0.46 - 1e-12)
        .all(|e| e.donor == 2);
    let right_bottom = table.entries[0]
        .iter()
        .filter(|e| (e.point[0] - 0.54).abs() < 1e-12 && e.point[1] < 0.46 - 1e-12)
        .all(|e| e.donor == 1);
    let no_self = table.entries.iter().enumerate().all(|(i, l)| l.iter().all(|e| e.donor != i));
    let donors = top_left && right_bottom && no_self;

    let mut strips = strip_config(0.6, 0.4, 0.05, 0.2, 0.05);
    strips.controls.max_iters = 1;
    let p = params(0.05, 0.0, [1.0, 0.0], constant_fn(1.0), constant_fn(0.0), MassMatrix::Lumped);
    let flagged = run_coupled(&strips, &mut fe_factory(p, strips.dt))
        .map(|run| run.window_iterations.iter().all(|&k| k == 1) && run.unconverged_windows == 4)
        .unwrap_or(false);

    let mut short = RunConfig::default();
    short.problem.t_final = 0.5;
    short.schwarz.t_final = 0.5;
    let a = run_schwarz(&short, &short.schwarz, &c.training.models).unwrap();
    let b = run_schwarz(&short, &short.schwarz, &c.training.models).unwrap();
    let bitwise = a.trajectories.iter().zip(&b.trajectories).all(|(x, y)| {
        x.states.iter().zip(y.states.iter()).all(|(p, q)| p.to_bits() == q.to_bits())
            && x.boundary_traces
                .iter()
                .zip(y.boundary_traces.iter())
                .all(|(p, q)| p.to_bits() == q.to_bits())
    }) && a.window_iterations == b.window_iterations;
    outcome(
        donors && flagged && bitwise,
        format!("donor table {donors}, max_iters=1 flagged {flagged}, repeated hybrid runs bitwise equal {bitwise}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "FE correctness", fe_correctness()));
    results.push((2, "Schwarz consistency", schwarz_consistency()));

    let cfg = RunConfig::default();
    match compare(&cfg, &LambdaChoice::Grid(cfg.training.lambda_grid.clone())) {
        Ok(c) => {
            println!("{}", c.report.table());
            let accuracy = hybrid_accuracy(&c);
            let unreg = unregularized(&c, &accuracy);
            results.push((3, "hybrid accuracy", accuracy));
            results.push((4, "hybrid beats monolithic OpInf", beats_monolithic(&c)));
            results.push((5, "speedup", speedup(&c)));
            results.push((6, "unregularized training", unreg));
            results.push((7, "OpInf oracle", opinf_oracle()));
            results.push((8, "POD identity", pod_identity()));
            results.push((9, "interface and iteration properties", interface_properties(&c)));
        }
        Err(e) => {
            for (n, name) in [(3, "hybrid accuracy"), (4, "hybrid beats monolithic OpInf"), (5, "speedup"), (6, "unregularized training"), (9, "interface and iteration properties")] {
                results.push((n, name, outcome(false, format!("comparison failed: {e}"))));
            }
            results.push((7, "OpInf oracle", opinf_oracle()));
            results.push((8, "POD identity", pod_identity()));
            results.sort_by_key(|r| r.0);
        }
    }

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} [{tag}] {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

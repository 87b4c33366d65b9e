mod common;

use std::sync::Arc;

use common::*;
use nalgebra::DMatrix;
use opinf_schwarz::driver::pipeline::simulate_rom;
use opinf_schwarz::fem::{assemble, constant_fn, MassMatrix, SpaceTimeFn};
use opinf_schwarz::rom::{compute_pod, train_opinf, train_opinf_transitions};
use opinf_schwarz::timestep::{run_transient, Trajectory};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn fe_run(mass: MassMatrix) -> Trajectory {
    let g: SpaceTimeFn = Arc::new(|t, x, y| (x + y) * (2.0 * t).sin());
    let p = params(0.1, 0.1, [1.0, 0.5], constant_fn(1.0), g, mass);
    let sys = assemble(&unit_mesh(16), &p).unwrap();
    let v0 = nalgebra::DVector::zeros(sys.num_interior());
    run_transient(&sys, 0.01, 0.0, 2.0, &v0, |t| sys.boundary_values(t)).unwrap()
}

fn energy_rank(states: &DMatrix<f64>, fraction: f64) -> usize {
    let full = compute_pod(states, 1).unwrap();
    let total: f64 = full.singular_values.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    for (k, s) in full.singular_values.iter().enumerate() {
        acc += s * s;
        if acc >= fraction * total {
            return k + 1;
        }
    }
    full.singular_values.len()
}

#[test]
fn resimulated_training_trajectory_is_reproduced() {
    for mass in MASSES {
        let traj = fe_run(mass);
        let r = energy_rank(&traj.states, 0.9999);
        let basis = compute_pod(&traj.states, r).unwrap();
        assert!(basis.retained_energy() >= 0.9999);
        let reduced = basis.project(&traj.states);
        let y0 = reduced.column(0).into_owned();
        let n = traj.len();

        let ops = train_opinf(&basis, &traj.states, &traj.boundary_traces, 0.01, 0.0).unwrap();
        let sim = simulate_rom(&ops, &y0, &traj.boundary_traces, 0.01).unwrap();
        let err = (&sim - &reduced).norm() / reduced.norm();
        assert!(err <= 0.05, "{mass:?} r={r}: central differences {err:e}");

        let from = traj.states.columns(0, n - 1).into_owned();
        let to = traj.states.columns(1, n - 1).into_owned();
        let inputs = traj.boundary_traces.columns(1, n - 1).into_owned();
        let ops = train_opinf_transitions(&basis, &from, &to, &inputs, 0.01, 0.0).unwrap();
        let sim = simulate_rom(&ops, &y0, &traj.boundary_traces, 0.01).unwrap();
        let err = (&sim - &reduced).norm() / reduced.norm();
        assert!(err <= 0.05, "{mass:?} r={r}: transitions {err:e}");
    }
}

#[test]
fn eckart_young_on_random_matrices() {
    let mut rng = StdRng::seed_from_u64(3);
    for _ in 0..5 {
        let x = random_matrix(&mut rng, 200, 50);
        for r in [1, 5, 17, 49, 50] {
            let basis = compute_pod(&x, r).unwrap();
            let residual = (&x - &basis.basis * basis.project(&x)).norm();
            let tail: f64 = basis.singular_values[r..].iter().map(|s| s * s).sum::<f64>().sqrt();
            assert!((residual - tail).abs() <= 1e-10, "r={r}: {residual} vs {tail}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eckart_young_identity(rows in 2usize..60, cols in 2usize..30, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, rows, cols);
        let r = 1 + ((rows.min(cols) - 1) as f64 * frac) as usize;
        let basis = compute_pod(&x, r).unwrap();
        let residual = (&x - &basis.basis * basis.project(&x)).norm();
        let tail: f64 = basis.singular_values[r..].iter().map(|s| s * s).sum::<f64>().sqrt();
        prop_assert!((residual - tail).abs() <= 1e-10);
    }
}

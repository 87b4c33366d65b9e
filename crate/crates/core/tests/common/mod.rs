#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use opinf_schwarz::fem::{assemble, CdrParams, MassMatrix, SpaceTimeFn};
use opinf_schwarz::mesh::{Rect, StructuredMesh};
use opinf_schwarz::schwarz::{
    fe_solver, SchwarzConfig, SchwarzControls, SubdomainModel, SubdomainSolver, SubdomainSpec,
};
use opinf_schwarz::timestep::run_transient;
use opinf_schwarz::Result;
use rand::rngs::StdRng;
use rand::Rng;

pub const MASSES: [MassMatrix; 2] = [MassMatrix::Lumped, MassMatrix::Consistent];

pub fn params(
    epsilon: f64,
    sigma: f64,
    b: [f64; 2],
    forcing: SpaceTimeFn,
    dirichlet: SpaceTimeFn,
    mass: MassMatrix,
) -> CdrParams {
    CdrParams::new(epsilon, sigma, b, forcing, dirichlet)
        .unwrap()
        .with_mass(mass)
}

pub fn unit_mesh(n: usize) -> StructuredMesh {
    StructuredMesh::new(Rect::unit_square(), n, n).unwrap()
}

/// L2 norm of `u_h - exact` with a 3-point Gauss rule per direction.
pub fn l2_error(mesh: &StructuredMesh, nodal: &[f64], exact: impl Fn(f64, f64) -> f64) -> f64 {
    let g = [0.5 - 0.5 * (0.6f64).sqrt(), 0.5, 0.5 + 0.5 * (0.6f64).sqrt()];
    let w = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let (hx, hy) = (mesh.hx(), mesh.hy());
    let mut sum = 0.0;
    for cj in 0..mesh.ny() {
        for ci in 0..mesh.nx() {
            let nodes = mesh.cell_nodes(ci, cj);
            let [x0, y0] = mesh.node_coords(nodes[0]);
            for (a, &xi) in g.iter().enumerate() {
                for (c, &eta) in g.iter().enumerate() {
                    let phi = [
                        (1.0 - xi) * (1.0 - eta),
                        xi * (1.0 - eta),
                        xi * eta,
                        (1.0 - xi) * eta,
                    ];
                    let uh: f64 = nodes.iter().zip(phi).map(|(&n, p)| nodal[n] * p).sum();
                    let e = uh - exact(x0 + xi * hx, y0 + eta * hy);
                    sum += w[a] * w[c] * hx * hy * e * e;
                }
            }
        }
    }
    sum.sqrt()
}

/// Max nodal error of the steady solve for `u = 1 + 2x + 3y`.
pub fn affine_steady_error(n: usize, mass: MassMatrix) -> f64 {
    let (eps, sigma, b) = (0.3, 0.5, [0.8, -0.4]);
    let u = |x: f64, y: f64| 1.0 + 2.0 * x + 3.0 * y;
    let f: SpaceTimeFn = Arc::new(move |_, x, y| b[0] * 2.0 + b[1] * 3.0 + sigma * u(x, y));
    let g: SpaceTimeFn = Arc::new(move |_, x, y| u(x, y));
    let mesh = unit_mesh(n);
    let sys = assemble(&mesh, &params(eps, sigma, b, f, g, mass)).unwrap();
    let v = sys.solve_steady(&sys.boundary_values(0.0), 0.0).unwrap();
    sys.interior_map()
        .iter()
        .zip(v.iter())
        .map(|(&id, &vi)| {
            let [x, y] = mesh.node_coords(id);
            (vi - u(x, y)).abs()
        })
        .fold(0.0, f64::max)
}

/// Max nodal error over all steps for `u = (1 + 2x + 3y)(1 + t)`, which
/// both the space and the time discretization reproduce exactly.
pub fn affine_transient_error(n: usize, mass: MassMatrix) -> f64 {
    let (eps, sigma, b) = (0.05, 0.2, [1.0, 0.5]);
    let s = |x: f64, y: f64| 1.0 + 2.0 * x + 3.0 * y;
    let f: SpaceTimeFn =
        Arc::new(move |t, x, y| s(x, y) + (1.0 + t) * (b[0] * 2.0 + b[1] * 3.0 + sigma * s(x, y)));
    let g: SpaceTimeFn = Arc::new(move |t, x, y| s(x, y) * (1.0 + t));
    let mesh = unit_mesh(n);
    let sys = assemble(&mesh, &params(eps, sigma, b, f, g, mass)).unwrap();
    let v0 = DVector::from_iterator(
        sys.num_interior(),
        sys.interior_map().iter().map(|&id| {
            let [x, y] = mesh.node_coords(id);
            s(x, y)
        }),
    );
    let traj = run_transient(&sys, 0.1, 0.0, 1.0, &v0, |t| sys.boundary_values(t)).unwrap();
    let mut worst: f64 = 0.0;
    for (j, &t) in traj.times.iter().enumerate() {
        for (k, &id) in sys.interior_map().iter().enumerate() {
            let [x, y] = mesh.node_coords(id);
            worst = worst.max((traj.states[(k, j)] - s(x, y) * (1.0 + t)).abs());
        }
    }
    worst
}

/// Steady L2 error for `u = sin(πx) sin(πy)` on an `n × n` mesh.
pub fn smooth_steady_error(n: usize, mass: MassMatrix) -> f64 {
    let (eps, sigma, b) = (1.0, 1.0, [1.0, 0.5]);
    let f: SpaceTimeFn = Arc::new(move |_, x, y| {
        let (sx, cx, sy, cy) = ((PI * x).sin(), (PI * x).cos(), (PI * y).sin(), (PI * y).cos());
        2.0 * PI * PI * eps * sx * sy + PI * (b[0] * cx * sy + b[1] * sx * cy) + sigma * sx * sy
    });
    let mesh = unit_mesh(n);
    let sys = assemble(&mesh, &params(eps, sigma, b, f, Arc::new(|_, _, _| 0.0), mass)).unwrap();
    let v = sys.solve_steady(&sys.boundary_values(0.0), 0.0).unwrap();
    let nodal = sys.compose_nodal(v.as_slice(), sys.boundary_values(0.0).as_slice());
    l2_error(&mesh, &nodal, |x, y| (PI * x).sin() * (PI * y).sin())
}

/// Max nodal error at `t = 1` for `u = (1 + x + 2y) sin t` with step `dt`.
/// The field is affine in space, so only the time discretization errs.
pub fn temporal_error(dt: f64, mass: MassMatrix) -> f64 {
    let (eps, sigma, b) = (0.1, 0.5, [1.0, 0.5]);
    let s = |x: f64, y: f64| 1.0 + x + 2.0 * y;
    let f: SpaceTimeFn = Arc::new(move |t, x, y| {
        s(x, y) * t.cos() + t.sin() * (b[0] + 2.0 * b[1]) + sigma * s(x, y) * t.sin()
    });
    let g: SpaceTimeFn = Arc::new(move |t, x, y| s(x, y) * t.sin());
    let mesh = unit_mesh(8);
    let sys = assemble(&mesh, &params(eps, sigma, b, f, g, mass)).unwrap();
    let v0 = DVector::zeros(sys.num_interior());
    let traj = run_transient(&sys, dt, 0.0, 1.0, &v0, |t| sys.boundary_values(t)).unwrap();
    let last = traj.len() - 1;
    sys.interior_map()
        .iter()
        .enumerate()
        .map(|(k, &id)| {
            let [x, y] = mesh.node_coords(id);
            (traj.states[(k, last)] - s(x, y) * 1f64.sin()).abs()
        })
        .fold(0.0, f64::max)
}

/// Rows `[Yᵀ Gᵀ 1]`, built directly from the definition.
pub fn oracle_data(y: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, nt) = y.shape();
    let m = g.nrows();
    DMatrix::from_fn(nt, r + m + 1, |i, c| {
        if c < r {
            y[(c, i)]
        } else if c < r + m {
            g[(c - r, i)]
        } else {
            1.0
        }
    })
}

/// Solution of `(DᵀD + λ²I) X = DᵀẎᵀ` by Cholesky.
pub fn oracle_fit(y: &DMatrix<f64>, ydot: &DMatrix<f64>, g: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let d = oracle_data(y, g);
    let p = d.ncols();
    let normal = d.transpose() * &d + DMatrix::identity(p, p) * (lambda * lambda);
    let rhs = d.transpose() * ydot.transpose();
    normal.cholesky().expect("normal matrix is SPD").solve(&rhs)
}

/// Relative residual of the regularized normal equations at `x = [K̂ B̂ f̂]ᵀ`.
pub fn normal_residual(
    y: &DMatrix<f64>,
    ydot: &DMatrix<f64>,
    g: &DMatrix<f64>,
    lambda: f64,
    x: &DMatrix<f64>,
) -> f64 {
    let d = oracle_data(y, g);
    let p = d.ncols();
    let normal = d.transpose() * &d + DMatrix::identity(p, p) * (lambda * lambda);
    let rhs = d.transpose() * ydot.transpose();
    (normal * x - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE)
}

pub fn stacked(k: &DMatrix<f64>, b: &DMatrix<f64>, f: &DVector<f64>) -> DMatrix<f64> {
    let r = k.nrows();
    let m = b.ncols();
    let mut x = DMatrix::zeros(r + m + 1, r);
    x.rows_mut(0, r).copy_from(&k.transpose());
    x.rows_mut(r, m).copy_from(&b.transpose());
    x.row_mut(r + m).copy_from(&f.transpose());
    x
}

pub fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Random reduced model with `K̂ = -(2I + AAᵀ/r) + skew`, which is stable.
pub fn random_stable_rom(rng: &mut StdRng, r: usize, m: usize) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let a = random_matrix(rng, r, r);
    let s = random_matrix(rng, r, r);
    let k = -(DMatrix::identity(r, r) * 2.0 + &a * a.transpose() / r as f64) + (&s - s.transpose()) * 0.5;
    let b = random_matrix(rng, r, m);
    let f = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
    (k, b, f)
}

/// Forward-simulates `ẏ = K̂y + B̂g + f̂` with small explicit substeps under
/// random piecewise-constant inputs, returning the visited states, the
/// inputs, and the exact right-hand side at every state.
pub fn realizable_data(
    rng: &mut StdRng,
    k: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: &DVector<f64>,
    nt: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (r, m) = (k.nrows(), b.ncols());
    let mut y = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
    let mut states = DMatrix::zeros(r, nt);
    let mut inputs = DMatrix::zeros(m, nt);
    let mut derivs = DMatrix::zeros(r, nt);
    for j in 0..nt {
        let g = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let rhs = k * &y + b * &g + f;
        states.set_column(j, &y);
        inputs.set_column(j, &g);
        derivs.set_column(j, &rhs);
        for _ in 0..5 {
            y += (k * &y + b * &g + f) * 0.01;
        }
    }
    (states, inputs, derivs)
}

pub fn strip_config(left_end: f64, right_start: f64, h: f64, t_final: f64, dt: f64) -> SchwarzConfig {
    let left = Rect::new(0.0, left_end, 0.0, 1.0).unwrap();
    let right = Rect::new(right_start, 1.0, 0.0, 1.0).unwrap();
    let spec = |rect: Rect| SubdomainSpec {
        rect,
        nx: (rect.width() / h).round() as usize,
        ny: (1.0 / h).round() as usize,
        model: SubdomainModel::Fe,
    };
    SchwarzConfig {
        domain: Rect::unit_square(),
        subdomains: vec![spec(left), spec(right)],
        dt,
        t_final,
        controls: SchwarzControls::default(),
        steps_per_window: 1,
    }
}

pub fn fe_factory(
    params: CdrParams,
    dt: f64,
) -> impl FnMut(usize, &SubdomainSpec, Vec<usize>) -> Result<Box<dyn SubdomainSolver>> {
    move |_, spec, gamma| fe_solver(assemble(&spec.mesh()?, &params)?, dt, gamma)
}

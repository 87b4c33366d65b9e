//! Implicit Euler integration of the lifted finite element system.
//!
//! One step solves
//!
//! `(M_II + dt A_II) v' = M_II v + M_IB (g - g') + dt (-A_IB g' + F(t'))`
//!
//! where primes denote the new time level. The boundary mass coupling keeps
//! a subdomain step identical to the corresponding rows of a monolithic step
//! when its Dirichlet data varies in time.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::SemiDiscreteSystem;
use crate::sparse::{BandedLu, CsrMatrix};

/// Relative tolerance for `(t1 - t0) / dt` to count as an integer.
pub const STEP_COUNT_TOLERANCE: f64 = 1e-9;

/// Number of uniform steps of size `dt` covering `[t0, t1]`.
pub fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t1 >= t0) {
        return Err(Error::Config(format!(
            "invalid time interval [{t0}, {t1}] with dt={dt}"
        )));
    }
    let q = (t1 - t0) / dt;
    let n = q.round();
    if (q - n).abs() > STEP_COUNT_TOLERANCE * n.max(1.0) {
        return Err(Error::Config(format!(
            "dt={dt} does not divide the interval [{t0}, {t1}] ({q} steps)"
        )));
    }
    Ok(n as usize)
}

/// Implicit Euler stepper with a factorization reused across steps.
#[derive(Debug, Clone)]
pub struct ImplicitEulerStepper {
    dt: f64,
    mass_ii: CsrMatrix,
    mass_ib: CsrMatrix,
    operator_ib: CsrMatrix,
    lu: BandedLu,
}

impl ImplicitEulerStepper {
    pub fn new(system: &SemiDiscreteSystem, dt: f64) -> Result<Self> {
        Self::from_parts(
            system.mass_ii.clone(),
            system.mass_ib.clone(),
            &system.operator_ii,
            system.operator_ib.clone(),
            dt,
        )
    }

    pub fn from_parts(
        mass_ii: CsrMatrix,
        mass_ib: CsrMatrix,
        operator_ii: &CsrMatrix,
        operator_ib: CsrMatrix,
        dt: f64,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("timestep must be positive, got {dt}")));
        }
        let lhs = mass_ii.linear_combination(1.0, operator_ii, dt);
        let lu = BandedLu::factorize(&lhs)?;
        Ok(ImplicitEulerStepper {
            dt,
            mass_ii,
            mass_ib,
            operator_ib,
            lu,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn num_interior(&self) -> usize {
        self.mass_ii.nrows()
    }

    pub fn num_boundary(&self) -> usize {
        self.mass_ib.ncols()
    }

    /// Advances `v_n` by one step. `g_prev` and `g_next` are the boundary
    /// values at the old and new time levels, `load_next` is `F(t_{n+1})`.
    pub fn step(
        &self,
        v_n: &DVector<f64>,
        g_prev: &DVector<f64>,
        g_next: &DVector<f64>,
        load_next: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let (n, m) = (self.num_interior(), self.num_boundary());
        check_len("step state", n, v_n.len())?;
        check_len("step previous boundary", m, g_prev.len())?;
        check_len("step next boundary", m, g_next.len())?;
        check_len("step load", n, load_next.len())?;

        let mut rhs = self.mass_ii.mul_vec(v_n.as_slice());
        let dg: Vec<f64> = g_prev.iter().zip(g_next.iter()).map(|(a, b)| a - b).collect();
        let coupling = self.mass_ib.mul_vec(&dg);
        let lifted = self.operator_ib.mul_vec(g_next.as_slice());
        for i in 0..n {
            rhs[i] += coupling[i] + self.dt * (load_next[i] - lifted[i]);
        }
        self.lu.solve_in_place(&mut rhs)?;
        Ok(DVector::from_vec(rhs))
    }
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

/// Time history of interior states and the boundary values imposed on them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `N × n_t` interior coefficients.
    pub states: DMatrix<f64>,
    /// `m × n_t`; column `j` is the boundary vector used to step into `times[j]`.
    pub boundary_traces: DMatrix<f64>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: DMatrix<f64>, boundary_traces: DMatrix<f64>) -> Result<Self> {
        check_len("trajectory state columns", times.len(), states.ncols())?;
        check_len("trajectory trace columns", times.len(), boundary_traces.ncols())?;
        Ok(Trajectory {
            times,
            states,
            boundary_traces,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Columns `[0, count)` as a new trajectory.
    pub fn truncated(&self, count: usize) -> Trajectory {
        let count = count.min(self.len());
        Trajectory {
            times: self.times[..count].to_vec(),
            states: self.states.columns(0, count).into_owned(),
            boundary_traces: self.boundary_traces.columns(0, count).into_owned(),
        }
    }
}

/// Integrates the lifted system from `t0` to `t1`, returning every state
/// including the initial one.
pub fn run_transient(
    system: &SemiDiscreteSystem,
    dt: f64,
    t0: f64,
    t1: f64,
    initial: &DVector<f64>,
    boundary_fn: impl Fn(f64) -> DVector<f64>,
) -> Result<Trajectory> {
    let steps = step_count(t0, t1, dt)?;
    let stepper = ImplicitEulerStepper::new(system, dt)?;
    check_len("initial state", system.num_interior(), initial.len())?;

    let times: Vec<f64> = (0..=steps).map(|j| t0 + j as f64 * dt).collect();
    let mut states = DMatrix::zeros(system.num_interior(), steps + 1);
    let mut traces = DMatrix::zeros(system.num_boundary(), steps + 1);

    let mut v = initial.clone();
    let mut g = boundary_fn(t0);
    check_len("boundary function output", system.num_boundary(), g.len())?;
    states.set_column(0, &v);
    traces.set_column(0, &g);
    for j in 1..=steps {
        let t = times[j];
        let g_next = boundary_fn(t);
        v = stepper.step(&v, &g, &g_next, &system.load_vector(t))?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence(format!("non-finite state at t={t}")));
        }
        states.set_column(j, &v);
        traces.set_column(j, &g_next);
        g = g_next;
    }
    Trajectory::new(times, states, traces)
}

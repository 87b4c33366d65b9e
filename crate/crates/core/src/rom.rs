//! POD compression and Operator Inference for linear systems with a
//! boundary input.
//!
//! The learned reduced model is `dv̂/dt = K̂ v̂ + B̂ g + f̂`, fitted by
//! (optionally Tikhonov-regularized) least squares on compressed snapshot
//! data. Snapshots are not centered; any constant offset is absorbed by `f̂`.

use nalgebra::{DMatrix, DVector, LU, SVD};

use crate::error::{Error, Result};

/// Relative singular-value cutoff for the least-squares pseudo-inverse.
pub const LSTSQ_RELATIVE_CUTOFF: f64 = 1e-13;

/// Orthonormal POD basis and the full singular spectrum of the snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// `N × r` with orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Non-increasing, length `min(N, n_t)`.
    pub singular_values: Vec<f64>,
}

impl PodBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn full_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Fraction of snapshot energy `Σσ²` captured by the retained modes.
    pub fn retained_energy(&self) -> f64 {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return 1.0;
        }
        let kept: f64 = self.singular_values[..self.dim()].iter().map(|s| s * s).sum();
        kept / total
    }

    /// `Ψᵀ X` for a matrix of full-order columns.
    pub fn project(&self, states: &DMatrix<f64>) -> DMatrix<f64> {
        self.basis.tr_mul(states)
    }

    pub fn project_vec(&self, state: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(state)
    }

    /// Lifts a reduced coordinate vector back to the full space, `Ψ v̂`.
    pub fn reconstruct(&self, vhat: &DVector<f64>) -> Result<DVector<f64>> {
        if vhat.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "reconstruct",
                expected: self.dim(),
                got: vhat.len(),
            });
        }
        Ok(&self.basis * vhat)
    }
}

/// Singular values (descending) and matching left singular vectors.
fn sorted_svd(matrix: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let svd = SVD::new(matrix.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let values = order.iter().map(|&k| svd.singular_values[k]).collect();
    let vectors = DMatrix::from_fn(u.nrows(), order.len(), |i, k| u[(i, order[k])]);
    (values, vectors)
}

pub fn compute_pod(states: &DMatrix<f64>, r: usize) -> Result<PodBasis> {
    let max_r = states.nrows().min(states.ncols());
    if r == 0 || r > max_r {
        return Err(Error::InvalidInput(format!(
            "POD dimension {r} outside [1, {max_r}]"
        )));
    }
    let (singular_values, vectors) = sorted_svd(states);
    Ok(PodBasis {
        basis: vectors.columns(0, r).into_owned(),
        singular_values,
    })
}

/// Second-order finite-difference time derivatives of uniformly sampled
/// columns: central in the interior, one-sided at both ends.
pub fn time_derivatives(reduced_states: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let nt = reduced_states.ncols();
    if nt < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 snapshots for time derivatives, got {nt}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("timestep must be positive, got {dt}")));
    }
    let y = reduced_states;
    let inv = 1.0 / (2.0 * dt);
    let mut d = DMatrix::zeros(y.nrows(), nt);
    for i in 0..y.nrows() {
        d[(i, 0)] = (-3.0 * y[(i, 0)] + 4.0 * y[(i, 1)] - y[(i, 2)]) * inv;
        for j in 1..nt - 1 {
            d[(i, j)] = (y[(i, j + 1)] - y[(i, j - 1)]) * inv;
        }
        d[(i, nt - 1)] =
            (3.0 * y[(i, nt - 1)] - 4.0 * y[(i, nt - 2)] + y[(i, nt - 3)]) * inv;
    }
    Ok(d)
}

/// Learned reduced operators `K̂ (r×r)`, `B̂ (r×m)` and `f̂ (r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpInfOperators {
    pub khat: DMatrix<f64>,
    pub bhat: DMatrix<f64>,
    pub fhat: DVector<f64>,
    pub lambda: f64,
}

impl OpInfOperators {
    pub fn new(khat: DMatrix<f64>, bhat: DMatrix<f64>, fhat: DVector<f64>, lambda: f64) -> Result<Self> {
        let r = khat.nrows();
        if khat.ncols() != r || bhat.nrows() != r || fhat.len() != r {
            return Err(Error::DimensionMismatch {
                context: "operator inference operators",
                expected: r,
                got: if khat.ncols() != r { khat.ncols() } else if bhat.nrows() != r { bhat.nrows() } else { fhat.len() },
            });
        }
        Ok(OpInfOperators {
            khat,
            bhat,
            fhat,
            lambda,
        })
    }

    pub fn r(&self) -> usize {
        self.khat.nrows()
    }

    pub fn m(&self) -> usize {
        self.bhat.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.khat.iter().chain(self.bhat.iter()).chain(self.fhat.iter()).all(|x| x.is_finite())
    }

    /// `‖K̂‖_F + ‖B̂‖_F + ‖f̂‖₂`.
    pub fn total_norm(&self) -> f64 {
        self.khat.norm() + self.bhat.norm() + self.fhat.norm()
    }

    /// Right-hand side `K̂ v̂ + B̂ g + f̂` of the learned ODE.
    pub fn rhs(&self, vhat: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        &self.khat * vhat + &self.bhat * g + &self.fhat
    }

    /// Value of the regularized training objective on the given data.
    pub fn objective(
        &self,
        reduced_states: &DMatrix<f64>,
        derivatives: &DMatrix<f64>,
        inputs: &DMatrix<f64>,
    ) -> f64 {
        let misfit: f64 = (0..reduced_states.ncols())
            .map(|j| {
                let pred = self.rhs(&reduced_states.column(j).into_owned(), &inputs.column(j).into_owned());
                (derivatives.column(j) - pred).norm_squared()
            })
            .sum();
        let reg = self.khat.norm_squared() + self.bhat.norm_squared() + self.fhat.norm_squared();
        misfit + self.lambda * self.lambda * reg
    }
}

/// Data matrix with rows `[y_jᵀ, g_jᵀ, 1]`.
pub fn regression_data_matrix(reduced_states: &DMatrix<f64>, inputs: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, m, nt) = (reduced_states.nrows(), inputs.nrows(), reduced_states.ncols());
    let mut data = DMatrix::zeros(nt, r + m + 1);
    for j in 0..nt {
        for i in 0..r {
            data[(j, i)] = reduced_states[(i, j)];
        }
        for i in 0..m {
            data[(j, r + i)] = inputs[(i, j)];
        }
        data[(j, r + m)] = 1.0;
    }
    data
}

/// Solves the (regularized) Operator Inference least-squares problem for
/// given reduced states, their time derivatives and boundary inputs.
///
/// The stacked unknown `[K̂ B̂ f̂]ᵀ` is obtained from an SVD of the data
/// matrix augmented with `λ I`; singular values below
/// [`LSTSQ_RELATIVE_CUTOFF`]` · σ_max` are discarded, giving the minimum-norm
/// solution in the rank-deficient case.
pub fn fit_operators(
    reduced_states: &DMatrix<f64>,
    derivatives: &DMatrix<f64>,
    inputs: &DMatrix<f64>,
    lambda: f64,
) -> Result<OpInfOperators> {
    let (r, nt) = reduced_states.shape();
    let m = inputs.nrows();
    if derivatives.shape() != (r, nt) {
        return Err(Error::DimensionMismatch {
            context: "derivative matrix columns",
            expected: nt,
            got: derivatives.ncols(),
        });
    }
    if inputs.ncols() != nt {
        return Err(Error::DimensionMismatch {
            context: "input matrix columns",
            expected: nt,
            got: inputs.ncols(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }

    let p = r + m + 1;
    let data = regression_data_matrix(reduced_states, inputs);
    let target = derivatives.transpose();
    let (lhs, rhs) = if lambda > 0.0 {
        let mut lhs = DMatrix::zeros(nt + p, p);
        lhs.rows_mut(0, nt).copy_from(&data);
        lhs.rows_mut(nt, p).copy_from(&(DMatrix::identity(p, p) * lambda));
        let mut rhs = DMatrix::zeros(nt + p, r);
        rhs.rows_mut(0, nt).copy_from(&target);
        (lhs, rhs)
    } else {
        (data, target)
    };

    let svd = SVD::new(lhs, true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = LSTSQ_RELATIVE_CUTOFF * sigma_max;

    // X = V Σ⁺ Uᵀ R
    let ut_r = u.tr_mul(&rhs);
    let mut scaled = DMatrix::zeros(svd.singular_values.len(), r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            scaled.set_row(k, &(ut_r.row(k) / s));
        }
    }
    let solution = v_t.tr_mul(&scaled);

    let khat = solution.rows(0, r).transpose();
    let bhat = solution.rows(r, m).transpose();
    let fhat = solution.row(r + m).transpose();
    OpInfOperators::new(khat, bhat, fhat, lambda)
}

/// Projects snapshots onto `basis`, differentiates in time and fits the
/// reduced operators against the recorded boundary traces.
pub fn train_opinf(
    basis: &PodBasis,
    states: &DMatrix<f64>,
    boundary_traces: &DMatrix<f64>,
    dt: f64,
    lambda: f64,
) -> Result<OpInfOperators> {
    if states.nrows() != basis.full_dim() {
        return Err(Error::DimensionMismatch {
            context: "training snapshot rows",
            expected: basis.full_dim(),
            got: states.nrows(),
        });
    }
    let reduced = basis.project(states);
    let derivs = time_derivatives(&reduced, dt)?;
    fit_operators(&reduced, &derivs, boundary_traces, lambda)
}

/// Fits the operators to one-step transitions `x_j -> x'_j` under inputs
/// `g'_j`, using the implicit Euler form `(y'_j - y_j) / dt = K̂ y'_j + B̂ g'_j + f̂`
/// in reduced coordinates. Data that a reduced implicit Euler model
/// generated exactly is recovered exactly.
pub fn train_opinf_transitions(
    basis: &PodBasis,
    from: &DMatrix<f64>,
    to: &DMatrix<f64>,
    inputs: &DMatrix<f64>,
    dt: f64,
    lambda: f64,
) -> Result<OpInfOperators> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    for (name, m) in [("transition start rows", from), ("transition end rows", to)] {
        if m.nrows() != basis.full_dim() {
            return Err(Error::DimensionMismatch {
                context: name,
                expected: basis.full_dim(),
                got: m.nrows(),
            });
        }
    }
    if from.ncols() != to.ncols() {
        return Err(Error::DimensionMismatch {
            context: "transition count",
            expected: from.ncols(),
            got: to.ncols(),
        });
    }
    let y0 = basis.project(from);
    let y1 = basis.project(to);
    let derivs = (&y1 - y0) / dt;
    fit_operators(&y1, &derivs, inputs, lambda)
}

/// Implicit Euler integrator for the learned ODE with a cached LU of
/// `I - dt K̂`.
#[derive(Debug, Clone)]
pub struct RomStepper {
    ops: OpInfOperators,
    dt: f64,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl RomStepper {
    pub fn new(ops: OpInfOperators, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("timestep must be positive, got {dt}")));
        }
        let r = ops.r();
        let lhs = DMatrix::identity(r, r) - &ops.khat * dt;
        let lu = lhs.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularMatrix(0));
        }
        // Near-singular systems slip through `is_invertible`; reject those too.
        let u = lu.u();
        let scale = u.amax().max(1.0);
        if let Some(k) = (0..r).find(|&k| u[(k, k)].abs() <= f64::EPSILON * scale * r as f64) {
            return Err(Error::SingularMatrix(k));
        }
        Ok(RomStepper { ops, dt, lu })
    }

    pub fn operators(&self) -> &OpInfOperators {
        &self.ops
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, vhat: &DVector<f64>, g_next: &DVector<f64>) -> Result<DVector<f64>> {
        if vhat.len() != self.ops.r() {
            return Err(Error::DimensionMismatch {
                context: "rom step state",
                expected: self.ops.r(),
                got: vhat.len(),
            });
        }
        if g_next.len() != self.ops.m() {
            return Err(Error::DimensionMismatch {
                context: "rom step boundary input",
                expected: self.ops.m(),
                got: g_next.len(),
            });
        }
        let rhs = vhat + (&self.ops.bhat * g_next + &self.ops.fhat) * self.dt;
        self.lu
            .solve(&rhs)
            .ok_or(Error::SingularMatrix(0))
    }
}

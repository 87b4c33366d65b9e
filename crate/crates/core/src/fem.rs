//! Q1 Galerkin discretization of the convection-diffusion-reaction equation
//!
//! `du/dt - eps * lap(u) + b . grad(u) + sigma * u = f`
//!
//! with Dirichlet data `g` on the whole mesh boundary. Nodes are split into
//! interior unknowns `v` and prescribed boundary values, giving the lifted
//! system
//!
//! `M_II dv/dt + M_IB dg/dt = -A_II v - A_IB g + F(t)`.
//!
//! The default row-sum lumped mass matrix is diagonal, so `M_IB = 0` and the
//! interior equations take the input form `dv/dt = K v + B g + f`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mesh::StructuredMesh;
use crate::sparse::{BandedLu, CsrMatrix};

/// Scalar field `(t, x, y) -> value`.
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Gauss points on `[0, 1]` for the 2-point rule; weights are 1/2 each.
const GAUSS_1D: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_9,
    0.5 + 0.288_675_134_594_812_9,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassMatrix {
    /// Row-sum lumped (diagonal).
    #[default]
    Lumped,
    Consistent,
}

#[derive(Clone)]
pub struct CdrParams {
    pub epsilon: f64,
    pub sigma: f64,
    pub b: [f64; 2],
    pub forcing: SpaceTimeFn,
    pub dirichlet: SpaceTimeFn,
    pub mass: MassMatrix,
}

impl fmt::Debug for CdrParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CdrParams")
            .field("epsilon", &self.epsilon)
            .field("sigma", &self.sigma)
            .field("b", &self.b)
            .field("mass", &self.mass)
            .finish_non_exhaustive()
    }
}

impl CdrParams {
    pub fn new(
        epsilon: f64,
        sigma: f64,
        b: [f64; 2],
        forcing: SpaceTimeFn,
        dirichlet: SpaceTimeFn,
    ) -> Result<Self> {
        let params = CdrParams {
            epsilon,
            sigma,
            b,
            forcing,
            dirichlet,
            mass: MassMatrix::default(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_mass(mut self, mass: MassMatrix) -> Self {
        self.mass = mass;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        if !(self.b[0].is_finite() && self.b[1].is_finite()) {
            return Err(Error::InvalidInput("convection vector must be finite".into()));
        }
        Ok(())
    }
}

pub fn constant_fn(value: f64) -> SpaceTimeFn {
    Arc::new(move |_, _, _| value)
}

/// Shape function values at local coordinates, counterclockwise corner order.
fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        xi * eta,
        (1.0 - xi) * eta,
    ]
}

/// Physical gradients of the shape functions on an `hx × hy` cell.
fn shape_gradients(xi: f64, eta: f64, hx: f64, hy: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - eta) / hx, -(1.0 - xi) / hy],
        [(1.0 - eta) / hx, -xi / hy],
        [eta / hx, xi / hy],
        [-eta / hx, (1.0 - xi) / hy],
    ]
}

/// Element mass matrix `∫ φ_i φ_j` by 2×2 Gauss quadrature.
pub fn element_mass(hx: f64, hy: f64) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    let w = 0.25 * hx * hy;
    for &xi in &GAUSS_1D {
        for &eta in &GAUSS_1D {
            let phi = shape(xi, eta);
            for a in 0..4 {
                for c in 0..4 {
                    m[a][c] += w * phi[a] * phi[c];
                }
            }
        }
    }
    m
}

/// Element operator `eps ∫ ∇φ_i·∇φ_j + ∫ (b·∇φ_j) φ_i + sigma ∫ φ_i φ_j`.
/// Row index is the test function.
pub fn element_operator(hx: f64, hy: f64, epsilon: f64, b: [f64; 2], sigma: f64) -> [[f64; 4]; 4] {
    let mut k = [[0.0; 4]; 4];
    let w = 0.25 * hx * hy;
    for &xi in &GAUSS_1D {
        for &eta in &GAUSS_1D {
            let phi = shape(xi, eta);
            let grad = shape_gradients(xi, eta, hx, hy);
            for a in 0..4 {
                for c in 0..4 {
                    let diffusion = grad[a][0] * grad[c][0] + grad[a][1] * grad[c][1];
                    let convection = b[0] * grad[c][0] + b[1] * grad[c][1];
                    k[a][c] += w
                        * (epsilon * diffusion + convection * phi[a] + sigma * phi[a] * phi[c]);
                }
            }
        }
    }
    k
}

/// Position of a mesh node in the lifted unknown layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSlot {
    Interior(usize),
    Boundary(usize),
}

/// Assembled and lifted finite element system on one mesh.
#[derive(Debug, Clone)]
pub struct SemiDiscreteSystem {
    mesh: StructuredMesh,
    params: CdrParams,
    interior_map: Vec<usize>,
    boundary_map: Vec<usize>,
    slots: Vec<NodeSlot>,
    pub mass_full: CsrMatrix,
    pub operator_full: CsrMatrix,
    pub mass_ii: CsrMatrix,
    pub mass_ib: CsrMatrix,
    pub operator_ii: CsrMatrix,
    pub operator_ib: CsrMatrix,
}

pub fn assemble(mesh: &StructuredMesh, params: &CdrParams) -> Result<SemiDiscreteSystem> {
    params.validate()?;
    let (hx, hy) = (mesh.hx(), mesh.hy());
    let me = element_mass(hx, hy);
    let ke = element_operator(hx, hy, params.epsilon, params.b, params.sigma);

    let mut mass_t = Vec::with_capacity(16 * mesh.num_cells());
    let mut op_t = Vec::with_capacity(16 * mesh.num_cells());
    for cj in 0..mesh.ny() {
        for ci in 0..mesh.nx() {
            let nodes = mesh.cell_nodes(ci, cj);
            for a in 0..4 {
                for c in 0..4 {
                    let col = match params.mass {
                        MassMatrix::Lumped => nodes[a],
                        MassMatrix::Consistent => nodes[c],
                    };
                    mass_t.push((nodes[a], col, me[a][c]));
                    op_t.push((nodes[a], nodes[c], ke[a][c]));
                }
            }
        }
    }
    let n = mesh.num_nodes();
    let mass_full = CsrMatrix::from_triplets(n, n, &mass_t);
    let operator_full = CsrMatrix::from_triplets(n, n, &op_t);

    let interior_map = mesh.interior_node_ids();
    let boundary_map = mesh.boundary_node_ids();
    let mut slots = vec![NodeSlot::Interior(0); n];
    for (k, &id) in interior_map.iter().enumerate() {
        slots[id] = NodeSlot::Interior(k);
    }
    for (k, &id) in boundary_map.iter().enumerate() {
        slots[id] = NodeSlot::Boundary(k);
    }

    let split = |full: &CsrMatrix| {
        let mut ii = Vec::new();
        let mut ib = Vec::new();
        for (r, c, v) in full.triplets() {
            if let NodeSlot::Interior(ri) = slots[r] {
                match slots[c] {
                    NodeSlot::Interior(ci) => ii.push((ri, ci, v)),
                    NodeSlot::Boundary(cb) => ib.push((ri, cb, v)),
                }
            }
        }
        (
            CsrMatrix::from_triplets(interior_map.len(), interior_map.len(), &ii),
            CsrMatrix::from_triplets(interior_map.len(), boundary_map.len(), &ib),
        )
    };
    let (mass_ii, mass_ib) = split(&mass_full);
    let (operator_ii, operator_ib) = split(&operator_full);

    Ok(SemiDiscreteSystem {
        mesh: mesh.clone(),
        params: params.clone(),
        interior_map,
        boundary_map,
        slots,
        mass_full,
        operator_full,
        mass_ii,
        mass_ib,
        operator_ii,
        operator_ib,
    })
}

impl SemiDiscreteSystem {
    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn params(&self) -> &CdrParams {
        &self.params
    }

    /// Number of interior unknowns `N`.
    pub fn num_interior(&self) -> usize {
        self.interior_map.len()
    }

    /// Number of prescribed boundary values `m`.
    pub fn num_boundary(&self) -> usize {
        self.boundary_map.len()
    }

    pub fn interior_map(&self) -> &[usize] {
        &self.interior_map
    }

    pub fn boundary_map(&self) -> &[usize] {
        &self.boundary_map
    }

    pub fn slot(&self, node: usize) -> NodeSlot {
        self.slots[node]
    }

    /// `F_i(t) = ∫ f(t, x, y) φ_i` over interior rows.
    pub fn load_vector(&self, t: f64) -> DVector<f64> {
        let mesh = &self.mesh;
        let (hx, hy) = (mesh.hx(), mesh.hy());
        let w = 0.25 * hx * hy;
        let forcing = &self.params.forcing;
        let mut load = DVector::zeros(self.num_interior());
        for cj in 0..mesh.ny() {
            for ci in 0..mesh.nx() {
                let nodes = mesh.cell_nodes(ci, cj);
                let [x0, y0] = mesh.node_coords(nodes[0]);
                for &xi in &GAUSS_1D {
                    for &eta in &GAUSS_1D {
                        let f = forcing(t, x0 + xi * hx, y0 + eta * hy);
                        if f == 0.0 {
                            continue;
                        }
                        let phi = shape(xi, eta);
                        for a in 0..4 {
                            if let NodeSlot::Interior(k) = self.slots[nodes[a]] {
                                load[k] += w * f * phi[a];
                            }
                        }
                    }
                }
            }
        }
        load
    }

    /// Dirichlet data `g(t)` at boundary nodes, in `boundary_map` order.
    pub fn boundary_values(&self, t: f64) -> DVector<f64> {
        let g = &self.params.dirichlet;
        DVector::from_iterator(
            self.num_boundary(),
            self.boundary_map.iter().map(|&id| {
                let [x, y] = self.mesh.node_coords(id);
                g(t, x, y)
            }),
        )
    }

    /// Scatters interior and boundary vectors into a full nodal field.
    pub fn compose_nodal(&self, interior: &[f64], boundary: &[f64]) -> Vec<f64> {
        debug_assert_eq!(interior.len(), self.num_interior());
        debug_assert_eq!(boundary.len(), self.num_boundary());
        let mut field = vec![0.0; self.mesh.num_nodes()];
        for (&id, &v) in self.interior_map.iter().zip(interior) {
            field[id] = v;
        }
        for (&id, &g) in self.boundary_map.iter().zip(boundary) {
            field[id] = g;
        }
        field
    }

    /// Solves the steady problem `A_II v = -A_IB g + F(t)`.
    pub fn solve_steady(&self, boundary: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        if boundary.len() != self.num_boundary() {
            return Err(Error::DimensionMismatch {
                context: "steady solve boundary vector",
                expected: self.num_boundary(),
                got: boundary.len(),
            });
        }
        let lu = BandedLu::factorize(&self.operator_ii)?;
        let rhs = self.load_vector(t) - self.operator_ib.mul_dvec(boundary);
        lu.solve(&rhs)
    }
}

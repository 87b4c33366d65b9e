//! Overlapping multiplicative Schwarz coupling of heterogeneous subdomain
//! models.
//!
//! Every subdomain owns a structured mesh whose boundary nodes split into
//! physical nodes (on the global boundary, value from `g`) and Schwarz
//! interface nodes (value sampled from a donor subdomain). Each time window
//! is iterated to a fixed point: subdomains are visited in ascending index
//! order, so a subdomain sees the donors' latest iterates, including those
//! already updated in the current sweep.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{SemiDiscreteSystem, SpaceTimeFn};
use crate::mesh::{Point, Rect, StructuredMesh, BOUNDARY_TOLERANCE};
use crate::rom::{OpInfOperators, PodBasis, RomStepper};
use crate::timestep::{step_count, ImplicitEulerStepper, Trajectory};

/// Which model runs on a subdomain.
#[derive(Debug, Clone, PartialEq)]
pub enum SubdomainModel {
    Fe,
    Rom {
        r: usize,
        lambda: f64,
        /// Directory holding trained operators; the driver picks a default
        /// location when absent.
        source: Option<PathBuf>,
    },
}

impl SubdomainModel {
    pub fn is_fe(&self) -> bool {
        matches!(self, SubdomainModel::Fe)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainSpec {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    pub model: SubdomainModel,
}

impl SubdomainSpec {
    pub fn mesh(&self) -> Result<StructuredMesh> {
        StructuredMesh::new(self.rect, self.nx, self.ny)
    }
}

/// Iteration controls for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchwarzControls {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SchwarzControls {
    fn default() -> Self {
        SchwarzControls {
            tol: 1e-9,
            max_iters: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchwarzConfig {
    pub domain: Rect,
    /// Processing order is the vector order.
    pub subdomains: Vec<SubdomainSpec>,
    pub dt: f64,
    pub t_final: f64,
    pub controls: SchwarzControls,
    pub steps_per_window: usize,
}

impl SchwarzConfig {
    /// Four overlapping quadrants of `domain`: lower-left, lower-right,
    /// upper-left, upper-right. Each quadrant extends `overlap / 2` past the
    /// midlines, and cell counts follow the global spacing `h`.
    pub fn quadrants(domain: Rect, overlap: f64, h: f64, models: [SubdomainModel; 4]) -> Result<Vec<SubdomainSpec>> {
        if !(overlap > 0.0) || !(h > 0.0) {
            return Err(Error::Config(format!("overlap ({overlap}) and h ({h}) must be positive")));
        }
        let xm = 0.5 * (domain.x0 + domain.x1);
        let ym = 0.5 * (domain.y0 + domain.y1);
        let half = 0.5 * overlap;
        let xs = [(domain.x0, xm + half), (xm - half, domain.x1)];
        let ys = [(domain.y0, ym + half), (ym - half, domain.y1)];
        let mut out = Vec::with_capacity(4);
        for (k, model) in models.into_iter().enumerate() {
            let (x0, x1) = xs[k % 2];
            let (y0, y1) = ys[k / 2];
            let rect = Rect::new(x0, x1, y0, y1)?;
            out.push(SubdomainSpec {
                rect,
                nx: cells_for(rect.width(), h)?,
                ny: cells_for(rect.height(), h)?,
                model,
            });
        }
        Ok(out)
    }

    pub fn num_steps(&self) -> Result<usize> {
        step_count(0.0, self.t_final, self.dt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.subdomains.is_empty() {
            return Err(Error::Config("at least one subdomain is required".into()));
        }
        if !(self.controls.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.controls.tol)));
        }
        if self.controls.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if self.steps_per_window == 0 {
            return Err(Error::Config("steps_per_window must be at least 1".into()));
        }
        let steps = self.num_steps()?;
        if steps % self.steps_per_window != 0 {
            return Err(Error::Config(format!(
                "{steps} steps are not divisible into windows of {}",
                self.steps_per_window
            )));
        }
        for (i, s) in self.subdomains.iter().enumerate() {
            if !self.domain.contains_rect(&s.rect) {
                return Err(Error::Config(format!("subdomain {i} extends outside the domain")));
            }
            if s.nx == 0 || s.ny == 0 {
                return Err(Error::Config(format!("subdomain {i} has zero cells")));
            }
        }
        check_coverage(&self.domain, &self.subdomains)
    }
}

/// Cell count for `length` at spacing `h`, which must divide it.
pub fn cells_for(length: f64, h: f64) -> Result<usize> {
    let q = length / h;
    let n = q.round();
    if n < 1.0 || (q - n).abs() > 1e-8 * n {
        return Err(Error::Config(format!(
            "spacing {h} does not divide length {length}"
        )));
    }
    Ok(n as usize)
}

fn check_coverage(domain: &Rect, subs: &[SubdomainSpec]) -> Result<()> {
    let mut xs = vec![domain.x0, domain.x1];
    let mut ys = vec![domain.y0, domain.y1];
    for s in subs {
        xs.extend([s.rect.x0, s.rect.x1]);
        ys.extend([s.rect.y0, s.rect.y1]);
    }
    let clean = |v: &mut Vec<f64>, lo: f64, hi: f64| {
        v.retain(|&c| c >= lo && c <= hi);
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= BOUNDARY_TOLERANCE);
    };
    clean(&mut xs, domain.x0, domain.x1);
    clean(&mut ys, domain.y0, domain.y1);
    for wx in xs.windows(2) {
        for wy in ys.windows(2) {
            let p = [0.5 * (wx[0] + wx[1]), 0.5 * (wy[0] + wy[1])];
            if !subs.iter().any(|s| s.rect.contains(p)) {
                return Err(Error::Config(format!(
                    "point ({:.6}, {:.6}) is not covered by any subdomain",
                    p[0], p[1]
                )));
            }
        }
    }
    Ok(())
}

/// One Schwarz interface node of a subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceEntry {
    /// Position in the subdomain's boundary vector.
    pub boundary_slot: usize,
    /// Local node id in the subdomain mesh.
    pub node: usize,
    pub donor: usize,
    pub point: Point,
}

/// Schwarz interface nodes and their donors, per subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceTable {
    pub entries: Vec<Vec<InterfaceEntry>>,
}

impl InterfaceTable {
    pub fn gamma_slots(&self, subdomain: usize) -> Vec<usize> {
        self.entries[subdomain].iter().map(|e| e.boundary_slot).collect()
    }
}

/// Identifies interface nodes (boundary nodes off the global boundary) and
/// assigns each the covering subdomain in which it lies deepest; ties go to
/// the lowest index.
pub fn build_interfaces(config: &SchwarzConfig) -> Result<InterfaceTable> {
    let mut entries = Vec::with_capacity(config.subdomains.len());
    for (i, spec) in config.subdomains.iter().enumerate() {
        let mesh = spec.mesh()?;
        let mut list = Vec::new();
        for (slot, node) in mesh.boundary_node_ids().into_iter().enumerate() {
            let p = mesh.node_coords(node);
            if config.domain.on_boundary(p) {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (j, other) in config.subdomains.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d = other.rect.interior_distance(p);
                if d <= BOUNDARY_TOLERANCE {
                    continue;
                }
                if best.is_none_or(|(_, bd)| d > bd + BOUNDARY_TOLERANCE) {
                    best = Some((j, d));
                }
            }
            let Some((donor, _)) = best else {
                return Err(Error::Config(format!(
                    "interface node ({:.6}, {:.6}) of subdomain {i} is not strictly inside another subdomain; increase the overlap",
                    p[0], p[1]
                )));
            };
            list.push(InterfaceEntry {
                boundary_slot: slot,
                node,
                donor,
                point: p,
            });
        }
        entries.push(list);
    }
    Ok(InterfaceTable { entries })
}

/// Checkpoint of a subdomain solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub time: f64,
    /// Interior coefficients (full-order for FE, reduced for ROM).
    pub coefficients: DVector<f64>,
    pub boundary: DVector<f64>,
}

/// State recorded at one substep of the current window.
#[derive(Debug, Clone)]
pub struct WindowSample {
    pub time: f64,
    pub coefficients: DVector<f64>,
    pub boundary: DVector<f64>,
    pub nodal: Vec<f64>,
}

/// Uniform contract over FE and ROM subdomain models.
pub trait SubdomainSolver: Send {
    fn label(&self) -> &'static str;

    fn mesh(&self) -> &StructuredMesh;

    fn snapshot_state(&self) -> SolverState;

    /// Restores a checkpoint and discards the current window history.
    fn restore_state(&mut self, state: &SolverState);

    /// Interface values for each substep of the next window, ordered like
    /// the subdomain's interface entries.
    fn set_interface_values(&mut self, values: Vec<Vec<f64>>);

    fn interface_values(&self) -> &[Vec<f64>];

    /// Advances through the given substep times.
    fn advance_window(&mut self, times: &[f64]) -> Result<()>;

    /// Nodal field at `substep` (1-based) of the current window, or the
    /// current state when that substep has not been computed.
    fn nodal_field(&self, substep: usize) -> &[f64];

    /// Full-order interior state and boundary vector for each substep of the
    /// current window.
    fn window_states(&self) -> Vec<(f64, DVector<f64>, DVector<f64>)>;

    /// Full-order interior state at the current time.
    fn interior_state(&self) -> DVector<f64>;

    fn sample(&self, points: &[Point], substep: usize) -> Result<Vec<f64>> {
        self.mesh().interpolate(self.nodal_field(substep), points)
    }
}

/// Ordered interior/boundary node ids of a mesh plus the physical Dirichlet
/// function, shared by both solver kinds.
#[derive(Clone)]
struct BoundaryLayout {
    mesh: StructuredMesh,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    gamma_slots: Vec<usize>,
    dirichlet: SpaceTimeFn,
    cached: Option<(u64, DVector<f64>)>,
}

impl BoundaryLayout {
    fn new(mesh: StructuredMesh, gamma_slots: Vec<usize>, dirichlet: SpaceTimeFn) -> Self {
        BoundaryLayout {
            interior: mesh.interior_node_ids(),
            boundary: mesh.boundary_node_ids(),
            mesh,
            gamma_slots,
            dirichlet,
            cached: None,
        }
    }

    fn physical(&mut self, t: f64) -> DVector<f64> {
        if let Some((bits, g)) = &self.cached {
            if *bits == t.to_bits() {
                return g.clone();
            }
        }
        let g = DVector::from_iterator(
            self.boundary.len(),
            self.boundary.iter().map(|&id| {
                let [x, y] = self.mesh.node_coords(id);
                (self.dirichlet)(t, x, y)
            }),
        );
        self.cached = Some((t.to_bits(), g.clone()));
        g
    }

    /// Physical values with interface slots overwritten.
    fn boundary_vector(&mut self, t: f64, interface: Option<&Vec<f64>>) -> DVector<f64> {
        let mut g = self.physical(t);
        for (q, &slot) in self.gamma_slots.iter().enumerate() {
            g[slot] = interface.map_or(0.0, |v| v[q]);
        }
        g
    }

    fn compose(&self, interior: &[f64], boundary: &[f64]) -> Vec<f64> {
        let mut field = vec![0.0; self.mesh.num_nodes()];
        for (&id, &v) in self.interior.iter().zip(interior) {
            field[id] = v;
        }
        for (&id, &g) in self.boundary.iter().zip(boundary) {
            field[id] = g;
        }
        field
    }
}

fn check_finite(label: &str, t: f64, values: &DVector<f64>) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence(format!("{label} subdomain state is not finite at t={t}")))
    }
}

/// Finite element subdomain model.
pub struct FeSolver {
    layout: BoundaryLayout,
    system: SemiDiscreteSystem,
    stepper: ImplicitEulerStepper,
    state: SolverState,
    nodal: Vec<f64>,
    interface: Vec<Vec<f64>>,
    history: Vec<WindowSample>,
    load_cache: Vec<(u64, DVector<f64>)>,
}

impl FeSolver {
    /// Builds the solver at `t0` with a zero interior state and zero
    /// interface values.
    pub fn new(system: SemiDiscreteSystem, dt: f64, gamma_slots: Vec<usize>, t0: f64) -> Result<Self> {
        let stepper = ImplicitEulerStepper::new(&system, dt)?;
        let mut layout = BoundaryLayout::new(
            system.mesh().clone(),
            gamma_slots,
            system.params().dirichlet.clone(),
        );
        let boundary = layout.boundary_vector(t0, None);
        let coefficients = DVector::zeros(system.num_interior());
        let nodal = layout.compose(coefficients.as_slice(), boundary.as_slice());
        Ok(FeSolver {
            layout,
            system,
            stepper,
            state: SolverState {
                time: t0,
                coefficients,
                boundary,
            },
            nodal,
            interface: Vec::new(),
            history: Vec::new(),
            load_cache: Vec::new(),
        })
    }

    pub fn system(&self) -> &SemiDiscreteSystem {
        &self.system
    }

    fn load(&mut self, t: f64) -> DVector<f64> {
        if let Some((_, f)) = self.load_cache.iter().find(|(bits, _)| *bits == t.to_bits()) {
            return f.clone();
        }
        let f = self.system.load_vector(t);
        if self.load_cache.len() >= 16 {
            self.load_cache.remove(0);
        }
        self.load_cache.push((t.to_bits(), f.clone()));
        f
    }
}

impl SubdomainSolver for FeSolver {
    fn label(&self) -> &'static str {
        "FE"
    }

    fn mesh(&self) -> &StructuredMesh {
        &self.layout.mesh
    }

    fn snapshot_state(&self) -> SolverState {
        self.state.clone()
    }

    fn restore_state(&mut self, state: &SolverState) {
        self.state = state.clone();
        self.nodal = self
            .layout
            .compose(state.coefficients.as_slice(), state.boundary.as_slice());
        self.history.clear();
    }

    fn set_interface_values(&mut self, values: Vec<Vec<f64>>) {
        self.interface = values;
    }

    fn interface_values(&self) -> &[Vec<f64>] {
        &self.interface
    }

    fn advance_window(&mut self, times: &[f64]) -> Result<()> {
        self.history.clear();
        for (s, &t) in times.iter().enumerate() {
            let g_next = self.layout.boundary_vector(t, self.interface.get(s));
            let load = self.load(t);
            let v = self
                .stepper
                .step(&self.state.coefficients, &self.state.boundary, &g_next, &load)?;
            check_finite("FE", t, &v)?;
            self.nodal = self.layout.compose(v.as_slice(), g_next.as_slice());
            self.state = SolverState {
                time: t,
                coefficients: v,
                boundary: g_next,
            };
            self.history.push(WindowSample {
                time: t,
                coefficients: self.state.coefficients.clone(),
                boundary: self.state.boundary.clone(),
                nodal: self.nodal.clone(),
            });
        }
        Ok(())
    }

    fn nodal_field(&self, substep: usize) -> &[f64] {
        match substep.checked_sub(1).and_then(|k| self.history.get(k)) {
            Some(sample) => &sample.nodal,
            None => &self.nodal,
        }
    }

    fn window_states(&self) -> Vec<(f64, DVector<f64>, DVector<f64>)> {
        self.history
            .iter()
            .map(|h| (h.time, h.coefficients.clone(), h.boundary.clone()))
            .collect()
    }

    fn interior_state(&self) -> DVector<f64> {
        self.state.coefficients.clone()
    }
}

/// Operator Inference subdomain model.
pub struct RomSolver {
    layout: BoundaryLayout,
    basis: PodBasis,
    stepper: RomStepper,
    state: SolverState,
    nodal: Vec<f64>,
    interface: Vec<Vec<f64>>,
    history: Vec<WindowSample>,
}

impl RomSolver {
    /// Builds the solver at `t0` from the zero full-order state.
    pub fn new(
        mesh: StructuredMesh,
        dirichlet: SpaceTimeFn,
        basis: PodBasis,
        operators: OpInfOperators,
        dt: f64,
        gamma_slots: Vec<usize>,
        t0: f64,
    ) -> Result<Self> {
        let layout = BoundaryLayout::new(mesh, gamma_slots, dirichlet);
        if basis.full_dim() != layout.interior.len() {
            return Err(Error::DimensionMismatch {
                context: "ROM basis rows vs subdomain interior nodes",
                expected: layout.interior.len(),
                got: basis.full_dim(),
            });
        }
        if operators.r() != basis.dim() {
            return Err(Error::DimensionMismatch {
                context: "ROM operator dimension vs basis",
                expected: basis.dim(),
                got: operators.r(),
            });
        }
        if operators.m() != layout.boundary.len() {
            return Err(Error::DimensionMismatch {
                context: "ROM input dimension vs subdomain boundary nodes",
                expected: layout.boundary.len(),
                got: operators.m(),
            });
        }
        let stepper = RomStepper::new(operators, dt)?;
        let mut layout = layout;
        let boundary = layout.boundary_vector(t0, None);
        let coefficients = DVector::zeros(basis.dim());
        let interior = DVector::<f64>::zeros(basis.full_dim());
        let nodal = layout.compose(interior.as_slice(), boundary.as_slice());
        Ok(RomSolver {
            layout,
            basis,
            stepper,
            state: SolverState {
                time: t0,
                coefficients,
                boundary,
            },
            nodal,
            interface: Vec::new(),
            history: Vec::new(),
        })
    }

    pub fn basis(&self) -> &PodBasis {
        &self.basis
    }

    fn nodal_from(&self, vhat: &DVector<f64>, boundary: &DVector<f64>) -> Vec<f64> {
        let interior = &self.basis.basis * vhat;
        self.layout.compose(interior.as_slice(), boundary.as_slice())
    }
}

impl SubdomainSolver for RomSolver {
    fn label(&self) -> &'static str {
        "ROM"
    }

    fn mesh(&self) -> &StructuredMesh {
        &self.layout.mesh
    }

    fn snapshot_state(&self) -> SolverState {
        self.state.clone()
    }

    fn restore_state(&mut self, state: &SolverState) {
        self.nodal = self.nodal_from(&state.coefficients, &state.boundary);
        self.state = state.clone();
        self.history.clear();
    }

    fn set_interface_values(&mut self, values: Vec<Vec<f64>>) {
        self.interface = values;
    }

    fn interface_values(&self) -> &[Vec<f64>] {
        &self.interface
    }

    fn advance_window(&mut self, times: &[f64]) -> Result<()> {
        self.history.clear();
        for (s, &t) in times.iter().enumerate() {
            let g_next = self.layout.boundary_vector(t, self.interface.get(s));
            let vhat = self.stepper.step(&self.state.coefficients, &g_next)?;
            check_finite("ROM", t, &vhat)?;
            self.nodal = self.nodal_from(&vhat, &g_next);
            self.state = SolverState {
                time: t,
                coefficients: vhat,
                boundary: g_next,
            };
            self.history.push(WindowSample {
                time: t,
                coefficients: self.state.coefficients.clone(),
                boundary: self.state.boundary.clone(),
                nodal: self.nodal.clone(),
            });
        }
        Ok(())
    }

    fn nodal_field(&self, substep: usize) -> &[f64] {
        match substep.checked_sub(1).and_then(|k| self.history.get(k)) {
            Some(sample) => &sample.nodal,
            None => &self.nodal,
        }
    }

    fn window_states(&self) -> Vec<(f64, DVector<f64>, DVector<f64>)> {
        self.history
            .iter()
            .map(|h| (h.time, &self.basis.basis * &h.coefficients, h.boundary.clone()))
            .collect()
    }

    fn interior_state(&self) -> DVector<f64> {
        &self.basis.basis * &self.state.coefficients
    }
}

type Stencil = ([usize; 4], [f64; 4]);

/// Interface entries grouped by donor, with precomputed interpolation
/// stencils in each donor mesh.
#[derive(Debug, Clone)]
pub struct CouplingPlan {
    groups: Vec<Vec<DonorGroup>>,
    gamma_counts: Vec<usize>,
}

#[derive(Debug, Clone)]
struct DonorGroup {
    donor: usize,
    entries: Vec<usize>,
    stencils: Vec<Stencil>,
}

impl CouplingPlan {
    pub fn new(table: &InterfaceTable, meshes: &[StructuredMesh]) -> Result<Self> {
        let mut groups = Vec::with_capacity(table.entries.len());
        let mut gamma_counts = Vec::with_capacity(table.entries.len());
        for list in &table.entries {
            let mut by_donor: Vec<DonorGroup> = Vec::new();
            for (q, e) in list.iter().enumerate() {
                let stencil = meshes[e.donor].interpolation_stencil(e.point)?;
                match by_donor.iter_mut().find(|g| g.donor == e.donor) {
                    Some(g) => {
                        g.entries.push(q);
                        g.stencils.push(stencil);
                    }
                    None => by_donor.push(DonorGroup {
                        donor: e.donor,
                        entries: vec![q],
                        stencils: vec![stencil],
                    }),
                }
            }
            by_donor.sort_by_key(|g| g.donor);
            gamma_counts.push(list.len());
            groups.push(by_donor);
        }
        Ok(CouplingPlan {
            groups,
            gamma_counts,
        })
    }

    pub fn num_subdomains(&self) -> usize {
        self.groups.len()
    }

    pub fn num_interface(&self, subdomain: usize) -> usize {
        self.gamma_counts[subdomain]
    }

    /// Interface values of `target` for each substep, sampled from the
    /// donors' current iterates.
    pub fn gather(&self, solvers: &[Box<dyn SubdomainSolver>], target: usize, substeps: usize) -> Vec<Vec<f64>> {
        (1..=substeps)
            .map(|s| {
                let mut values = vec![0.0; self.gamma_counts[target]];
                for g in &self.groups[target] {
                    let field = solvers[g.donor].nodal_field(s);
                    for (&q, (nodes, w)) in g.entries.iter().zip(&g.stencils) {
                        values[q] = nodes.iter().zip(w).map(|(&n, &wk)| wk * field[n]).sum();
                    }
                }
                values
            })
            .collect()
    }
}

/// Outcome of one Schwarz window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowOutcome {
    pub iterations: usize,
    pub converged: bool,
    /// Last relative interface change.
    pub change: f64,
}

fn relative_change(old: &[Vec<f64>], new: &[Vec<f64>]) -> f64 {
    let mut diff: f64 = 0.0;
    let mut size: f64 = 0.0;
    for (s, values) in new.iter().enumerate() {
        for (q, &v) in values.iter().enumerate() {
            let prev = old.get(s).and_then(|o| o.get(q)).copied().unwrap_or(0.0);
            diff = diff.max((v - prev).abs());
            size = size.max(v.abs());
        }
    }
    diff / (1.0 + size)
}

/// Iterates one window `[start, times.last()]` to convergence.
///
/// `start` holds each subdomain's checkpoint at the window start; every
/// subdomain is restored to it before re-advancing. Donor values are taken
/// from whatever iterate the donors currently hold. The change in the
/// first sweep is measured against the interface values the solvers held on
/// entry.
pub fn schwarz_window(
    solvers: &mut [Box<dyn SubdomainSolver>],
    plan: &CouplingPlan,
    times: &[f64],
    start: &[SolverState],
    controls: &SchwarzControls,
) -> Result<WindowOutcome> {
    if solvers.len() != plan.num_subdomains() || start.len() != solvers.len() {
        return Err(Error::DimensionMismatch {
            context: "schwarz window subdomain count",
            expected: plan.num_subdomains(),
            got: solvers.len().min(start.len()),
        });
    }
    let mut outcome = WindowOutcome {
        iterations: 0,
        converged: false,
        change: f64::INFINITY,
    };
    for k in 0..controls.max_iters {
        let mut change: f64 = 0.0;
        for i in 0..solvers.len() {
            let gathered = plan.gather(solvers, i, times.len());
            change = change.max(relative_change(solvers[i].interface_values(), &gathered));
            let solver = &mut solvers[i];
            solver.set_interface_values(gathered);
            solver.restore_state(&start[i]);
            solver.advance_window(times)?;
        }
        if change.is_nan() {
            return Err(Error::Divergence("interface values are not finite".into()));
        }
        outcome = WindowOutcome {
            iterations: k + 1,
            converged: change <= controls.tol,
            change,
        };
        if outcome.converged {
            break;
        }
    }
    Ok(outcome)
}

/// Result of a coupled run over `[0, t_final]`.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub trajectories: Vec<Trajectory>,
    pub labels: Vec<&'static str>,
    pub window_iterations: Vec<usize>,
    pub unconverged_windows: usize,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
}

impl CoupledRun {
    pub fn mean_iterations(&self) -> f64 {
        if self.window_iterations.is_empty() {
            return 0.0;
        }
        self.window_iterations.iter().sum::<usize>() as f64 / self.window_iterations.len() as f64
    }

    pub fn max_iterations(&self) -> usize {
        self.window_iterations.iter().copied().max().unwrap_or(0)
    }
}

/// Builds one solver for subdomain `index` given its spec and interface
/// boundary slots.
pub trait SolverFactory {
    fn build(&mut self, index: usize, spec: &SubdomainSpec, gamma_slots: Vec<usize>) -> Result<Box<dyn SubdomainSolver>>;
}

impl<F> SolverFactory for F
where
    F: FnMut(usize, &SubdomainSpec, Vec<usize>) -> Result<Box<dyn SubdomainSolver>>,
{
    fn build(&mut self, index: usize, spec: &SubdomainSpec, gamma_slots: Vec<usize>) -> Result<Box<dyn SubdomainSolver>> {
        self(index, spec, gamma_slots)
    }
}

/// Runs multiplicative Schwarz over all windows of `config`, recording each
/// subdomain's full-order interior state and imposed boundary vector at
/// every timestep. Setup (solver construction) and solve phases are timed
/// separately.
pub fn run_coupled(config: &SchwarzConfig, factory: &mut dyn SolverFactory) -> Result<CoupledRun> {
    config.validate()?;
    let setup_clock = Instant::now();
    let table = build_interfaces(config)?;
    let meshes = config
        .subdomains
        .iter()
        .map(SubdomainSpec::mesh)
        .collect::<Result<Vec<_>>>()?;
    let plan = CouplingPlan::new(&table, &meshes)?;
    let mut solvers = Vec::with_capacity(config.subdomains.len());
    for (i, spec) in config.subdomains.iter().enumerate() {
        let solver = factory.build(i, spec, table.gamma_slots(i))?;
        if solver.mesh() != &meshes[i] {
            return Err(Error::Config(format!("solver {i} mesh does not match its spec")));
        }
        solvers.push(solver);
    }
    let setup_seconds = setup_clock.elapsed().as_secs_f64();

    let solve_clock = Instant::now();
    let steps = config.num_steps()?;
    let per_window = config.steps_per_window;
    let n_sub = solvers.len();
    let mut times = Vec::with_capacity(steps + 1);
    times.push(0.0);
    let mut states: Vec<Vec<DVector<f64>>> = vec![Vec::with_capacity(steps + 1); n_sub];
    let mut traces: Vec<Vec<DVector<f64>>> = vec![Vec::with_capacity(steps + 1); n_sub];
    for (i, solver) in solvers.iter().enumerate() {
        states[i].push(solver.interior_state());
        traces[i].push(solver.snapshot_state().boundary);
    }

    let mut window_iterations = Vec::with_capacity(steps / per_window);
    let mut unconverged = 0;
    for w in 0..steps / per_window {
        let window_times: Vec<f64> = (1..=per_window)
            .map(|s| (w * per_window + s) as f64 * config.dt)
            .collect();
        let start: Vec<SolverState> = solvers.iter().map(|s| s.snapshot_state()).collect();
        for (solver, st) in solvers.iter_mut().zip(&start) {
            solver.restore_state(st);
        }
        let outcome = schwarz_window(&mut solvers, &plan, &window_times, &start, &config.controls)?;
        window_iterations.push(outcome.iterations);
        if !outcome.converged {
            unconverged += 1;
        }
        for (i, solver) in solvers.iter().enumerate() {
            for (_, interior, boundary) in solver.window_states() {
                states[i].push(interior);
                traces[i].push(boundary);
            }
        }
        times.extend(window_times);
    }

    let mut trajectories = Vec::with_capacity(n_sub);
    for i in 0..n_sub {
        let s = DMatrix::from_columns(&states[i]);
        let g = DMatrix::from_columns(&traces[i]);
        trajectories.push(Trajectory::new(times.clone(), s, g)?);
    }
    let solve_seconds = solve_clock.elapsed().as_secs_f64();
    Ok(CoupledRun {
        trajectories,
        labels: solvers.iter().map(|s| s.label()).collect(),
        window_iterations,
        unconverged_windows: unconverged,
        setup_seconds,
        solve_seconds,
    })
}

/// Averages overlapping subdomain fields onto a global mesh.
#[derive(Debug, Clone)]
pub struct StitchPlan {
    num_nodes: usize,
    contributions: Vec<Vec<(usize, Stencil)>>,
}

impl StitchPlan {
    pub fn new(subdomain_meshes: &[StructuredMesh], global: &StructuredMesh) -> Result<Self> {
        let mut contributions = Vec::with_capacity(global.num_nodes());
        for id in 0..global.num_nodes() {
            let p = global.node_coords(id);
            let list: Vec<(usize, Stencil)> = subdomain_meshes
                .iter()
                .enumerate()
                .filter(|(_, m)| m.rect().contains(p))
                .map(|(k, m)| Ok((k, m.interpolation_stencil(p)?)))
                .collect::<Result<_>>()?;
            if list.is_empty() {
                return Err(Error::Config(format!(
                    "global node ({:.6}, {:.6}) is covered by no subdomain",
                    p[0], p[1]
                )));
            }
            contributions.push(list);
        }
        Ok(StitchPlan {
            num_nodes: global.num_nodes(),
            contributions,
        })
    }

    /// Global nodal field from subdomain nodal fields at a common time.
    pub fn stitch(&self, fields: &[&[f64]]) -> Vec<f64> {
        self.contributions
            .iter()
            .map(|list| {
                let sum: f64 = list
                    .iter()
                    .map(|(k, (nodes, w))| nodes.iter().zip(w).map(|(&n, &wk)| wk * fields[*k][n]).sum::<f64>())
                    .sum();
                sum / list.len() as f64
            })
            .collect()
    }

    /// Stitches every column of per-subdomain trajectories into a
    /// `num_nodes × n_t` global matrix.
    pub fn stitch_trajectories(&self, meshes: &[StructuredMesh], trajectories: &[Trajectory]) -> Result<DMatrix<f64>> {
        let nt = trajectories.first().map_or(0, Trajectory::len);
        if trajectories.iter().any(|t| t.len() != nt) {
            return Err(Error::InvalidInput("subdomain trajectories have different lengths".into()));
        }
        let layouts: Vec<(Vec<usize>, Vec<usize>)> = meshes
            .iter()
            .map(|m| (m.interior_node_ids(), m.boundary_node_ids()))
            .collect();
        let mut out = DMatrix::zeros(self.num_nodes, nt);
        for j in 0..nt {
            let fields: Vec<Vec<f64>> = trajectories
                .iter()
                .zip(meshes)
                .zip(&layouts)
                .map(|((traj, mesh), (interior, boundary))| {
                    let mut f = vec![0.0; mesh.num_nodes()];
                    for (k, &id) in interior.iter().enumerate() {
                        f[id] = traj.states[(k, j)];
                    }
                    for (k, &id) in boundary.iter().enumerate() {
                        f[id] = traj.boundary_traces[(k, j)];
                    }
                    f
                })
                .collect();
            let refs: Vec<&[f64]> = fields.iter().map(Vec::as_slice).collect();
            out.set_column(j, &DVector::from_vec(self.stitch(&refs)));
        }
        Ok(out)
    }
}

/// Boxed [`FeSolver`] starting at `t = 0`.
pub fn fe_solver(
    system: SemiDiscreteSystem,
    dt: f64,
    gamma_slots: Vec<usize>,
) -> Result<Box<dyn SubdomainSolver>> {
    Ok(Box::new(FeSolver::new(system, dt, gamma_slots, 0.0)?))
}

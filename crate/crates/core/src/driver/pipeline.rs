//! Experiment pipeline: monolithic FE reference, Schwarz runs, subdomain
//! and monolithic Operator Inference training, and the model comparison.
//!
//! Timings use a monotonic wall clock, single process and single thread.
//! Solve phases exclude assembly, factorization and training, which are
//! timed separately. Each FE factorization is computed once per run and
//! reused for every step and Schwarz iteration.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::config::{RunConfig, TrainingData};
use super::io::{load_matrix, save_matrix};
use super::metrics::{error_metric, ErrorValue};
use crate::error::{Error, Result};
use crate::fem::{assemble, CdrParams, SemiDiscreteSystem};
use crate::mesh::{Point, StructuredMesh};
use crate::rom::{
    compute_pod, train_opinf, train_opinf_transitions, OpInfOperators, PodBasis, RomStepper,
};
use crate::schwarz::{
    fe_solver, run_coupled, CoupledRun, RomSolver, SchwarzConfig, SolverState, StitchPlan,
    SubdomainModel, SubdomainSolver, SubdomainSpec,
};
use crate::timestep::{run_transient, ImplicitEulerStepper, Trajectory};

/// Singular values below this fraction of the largest count as zero when
/// determining snapshot rank.
const RANK_TOLERANCE: f64 = 1e-13;

/// Full nodal fields (`num_nodes × n_t`) from interior states and traces.
pub fn nodal_trajectory(mesh: &StructuredMesh, traj: &Trajectory) -> DMatrix<f64> {
    let interior = mesh.interior_node_ids();
    let boundary = mesh.boundary_node_ids();
    let mut out = DMatrix::zeros(mesh.num_nodes(), traj.len());
    for j in 0..traj.len() {
        for (k, &id) in interior.iter().enumerate() {
            out[(id, j)] = traj.states[(k, j)];
        }
        for (k, &id) in boundary.iter().enumerate() {
            out[(id, j)] = traj.boundary_traces[(k, j)];
        }
    }
    out
}

/// Monolithic finite element reference run.
#[derive(Debug, Clone)]
pub struct FomRun {
    pub trajectory: Trajectory,
    pub nodal: DMatrix<f64>,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
}

impl FomRun {
    pub fn num_interior(&self) -> usize {
        self.trajectory.states.nrows()
    }
}

pub fn assemble_global(cfg: &RunConfig) -> Result<SemiDiscreteSystem> {
    assemble(&cfg.global_mesh, &cfg.problem.params()?)
}

pub fn run_fom(cfg: &RunConfig) -> Result<FomRun> {
    let clock = Instant::now();
    let system = assemble_global(cfg)?;
    let assembly_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let zero = DVector::zeros(system.num_interior());
    let trajectory = run_transient(
        &system,
        cfg.problem.dt,
        0.0,
        cfg.problem.t_final,
        &zero,
        |t| system.boundary_values(t),
    )?;
    let solve_seconds = clock.elapsed().as_secs_f64();
    let nodal = nodal_trajectory(&cfg.global_mesh, &trajectory);
    Ok(FomRun {
        trajectory,
        nodal,
        assembly_seconds,
        solve_seconds,
    })
}

/// POD basis plus learned operators for one reduced model.
#[derive(Debug, Clone, PartialEq)]
pub struct RomModel {
    pub basis: PodBasis,
    pub operators: OpInfOperators,
}

impl RomModel {
    pub fn save(&self, dir: &Path) -> Result<()> {
        save_matrix(&dir.join("basis.oifs"), &self.basis.basis)?;
        save_matrix(
            &dir.join("singular_values.oifs"),
            &DMatrix::from_column_slice(self.basis.singular_values.len(), 1, &self.basis.singular_values),
        )?;
        save_matrix(&dir.join("khat.oifs"), &self.operators.khat)?;
        save_matrix(&dir.join("bhat.oifs"), &self.operators.bhat)?;
        let f = &self.operators.fhat;
        save_matrix(&dir.join("fhat.oifs"), &DMatrix::from_column_slice(f.len(), 1, f.as_slice()))?;
        save_matrix(&dir.join("lambda.oifs"), &DMatrix::from_element(1, 1, self.operators.lambda))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let basis = load_matrix(&dir.join("basis.oifs"))?;
        let sv = load_matrix(&dir.join("singular_values.oifs"))?;
        let khat = load_matrix(&dir.join("khat.oifs"))?;
        let bhat = load_matrix(&dir.join("bhat.oifs"))?;
        let fhat = load_matrix(&dir.join("fhat.oifs"))?;
        let lambda = load_matrix(&dir.join("lambda.oifs"))?;
        if fhat.ncols() != 1 || lambda.shape() != (1, 1) || sv.ncols() != 1 {
            return Err(Error::Format(format!("malformed operator files in {}", dir.display())));
        }
        let operators = OpInfOperators::new(
            khat,
            bhat,
            DVector::from_column_slice(fhat.as_slice()),
            lambda[(0, 0)],
        )?;
        if basis.ncols() != operators.r() {
            return Err(Error::Format(format!("basis and operators disagree in {}", dir.display())));
        }
        Ok(RomModel {
            basis: PodBasis {
                basis,
                singular_values: sv.as_slice().to_vec(),
            },
            operators,
        })
    }
}

/// One implicit Euler step observed during a Schwarz sweep.
#[derive(Debug, Clone)]
pub struct Transition {
    /// Time at the end of the step.
    pub time: f64,
    pub from: DVector<f64>,
    pub boundary_from: DVector<f64>,
    pub to: DVector<f64>,
    pub boundary_to: DVector<f64>,
}

type TransitionLog = Arc<Mutex<Vec<Transition>>>;

/// Passes every call through and logs each substep of every sweep,
/// converged or not.
struct RecordingSolver {
    inner: Box<dyn SubdomainSolver>,
    log: TransitionLog,
}

impl SubdomainSolver for RecordingSolver {
    fn label(&self) -> &'static str {
        self.inner.label()
    }

    fn mesh(&self) -> &StructuredMesh {
        self.inner.mesh()
    }

    fn snapshot_state(&self) -> SolverState {
        self.inner.snapshot_state()
    }

    fn restore_state(&mut self, state: &SolverState) {
        self.inner.restore_state(state)
    }

    fn set_interface_values(&mut self, values: Vec<Vec<f64>>) {
        self.inner.set_interface_values(values)
    }

    fn interface_values(&self) -> &[Vec<f64>] {
        self.inner.interface_values()
    }

    fn advance_window(&mut self, times: &[f64]) -> Result<()> {
        let mut from = self.inner.interior_state();
        let mut boundary_from = self.inner.snapshot_state().boundary;
        self.inner.advance_window(times)?;
        let mut log = self.log.lock().expect("transition log poisoned");
        for (time, to, boundary_to) in self.inner.window_states() {
            log.push(Transition {
                time,
                from: std::mem::replace(&mut from, to.clone()),
                boundary_from: std::mem::replace(&mut boundary_from, boundary_to.clone()),
                to,
                boundary_to,
            });
        }
        Ok(())
    }

    fn nodal_field(&self, substep: usize) -> &[f64] {
        self.inner.nodal_field(substep)
    }

    fn window_states(&self) -> Vec<(f64, DVector<f64>, DVector<f64>)> {
        self.inner.window_states()
    }

    fn interior_state(&self) -> DVector<f64> {
        self.inner.interior_state()
    }

    fn sample(&self, points: &[Point], substep: usize) -> Result<Vec<f64>> {
        self.inner.sample(points, substep)
    }
}

fn build_solver(
    params: &CdrParams,
    dt: f64,
    spec: &SubdomainSpec,
    gamma: Vec<usize>,
    rom: Option<&RomModel>,
) -> Result<Box<dyn SubdomainSolver>> {
    let mesh = spec.mesh()?;
    match (&spec.model, rom) {
        (SubdomainModel::Fe, _) => fe_solver(assemble(&mesh, params)?, dt, gamma),
        (SubdomainModel::Rom { .. }, Some(model)) => Ok(Box::new(RomSolver::new(
            mesh,
            params.dirichlet.clone(),
            model.basis.clone(),
            model.operators.clone(),
            dt,
            gamma,
            0.0,
        )?)),
        (SubdomainModel::Rom { .. }, None) => Err(Error::Config("no trained operators for a ROM subdomain".into())),
    }
}

/// Coupled run on the given decomposition. `roms[i]` must be present for
/// every ROM subdomain.
pub fn run_schwarz(
    cfg: &RunConfig,
    schwarz: &SchwarzConfig,
    roms: &[Option<RomModel>],
) -> Result<CoupledRun> {
    let params = cfg.problem.params()?;
    let dt = schwarz.dt;
    let mut factory = |i: usize, spec: &SubdomainSpec, gamma: Vec<usize>| {
        let rom = roms.get(i).and_then(Option::as_ref);
        build_solver(&params, dt, spec, gamma, rom)
            .map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("subdomain {i}: {msg}")),
                other => other,
            })
    };
    run_coupled(schwarz, &mut factory)
}

/// Subdomain fields of a coupled run averaged onto the global mesh.
pub fn stitch_run(cfg: &RunConfig, schwarz: &SchwarzConfig, run: &CoupledRun) -> Result<DMatrix<f64>> {
    let meshes = schwarz
        .subdomains
        .iter()
        .map(SubdomainSpec::mesh)
        .collect::<Result<Vec<_>>>()?;
    let plan = StitchPlan::new(&meshes, &cfg.global_mesh)?;
    plan.stitch_trajectories(&meshes, &run.trajectories)
}

/// Snapshot energy summary of one POD basis.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub subdomain: usize,
    pub singular_values: Vec<f64>,
    pub r: usize,
    pub retained: f64,
}

impl EnergyReport {
    fn new(subdomain: usize, basis: &PodBasis) -> Self {
        EnergyReport {
            subdomain,
            singular_values: basis.singular_values.clone(),
            r: basis.dim(),
            retained: basis.retained_energy(),
        }
    }

    /// Rows `mode, sigma, energy, cumulative fraction`.
    pub fn rows(&self) -> Vec<Vec<String>> {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        let mut cumulative = 0.0;
        self.singular_values
            .iter()
            .enumerate()
            .map(|(k, s)| {
                cumulative += s * s;
                vec![
                    self.subdomain.to_string(),
                    (k + 1).to_string(),
                    format!("{s:.16e}"),
                    format!("{:.16e}", s * s),
                    format!("{:.16e}", if total > 0.0 { cumulative / total } else { 1.0 }),
                ]
            })
            .collect()
    }
}

fn numerical_rank(basis_sv: &[f64]) -> usize {
    let max = basis_sv.first().copied().unwrap_or(0.0);
    basis_sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

/// POD basis of dimension `r`. With `require_rank`, `r` may not exceed the
/// numerical rank of the snapshots.
fn build_pod(states: &DMatrix<f64>, r: usize, what: &str, require_rank: bool) -> Result<PodBasis> {
    let max_r = states.nrows().min(states.ncols());
    if r > max_r {
        return Err(Error::Config(format!(
            "{what}: r={r} exceeds the snapshot matrix size ({max_r})"
        )));
    }
    let basis = compute_pod(states, r)?;
    let rank = numerical_rank(&basis.singular_values);
    if require_rank && r > rank {
        return Err(Error::Config(format!(
            "{what}: r={r} exceeds the numerical snapshot rank {rank}"
        )));
    }
    Ok(basis)
}

/// Subdomain ROMs trained on an all-FE Schwarz run over the training window.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub models: Vec<Option<RomModel>>,
    pub energy: Vec<EnergyReport>,
    pub fe_run: CoupledRun,
    pub seconds: f64,
}

pub fn train_subdomain_roms(cfg: &RunConfig) -> Result<TrainingOutcome> {
    let clock = Instant::now();
    let params = cfg.problem.params()?;
    let dt = cfg.problem.dt;
    let mut training = cfg.all_fe();
    training.t_final = cfg.training.t_end;

    let record = cfg.training.data != TrainingData::Snapshots;
    let logs: Vec<Option<TransitionLog>> = cfg
        .schwarz
        .subdomains
        .iter()
        .map(|s| (record && !s.model.is_fe()).then(TransitionLog::default))
        .collect();
    let mut factory = |i: usize, spec: &SubdomainSpec, gamma: Vec<usize>| -> Result<Box<dyn SubdomainSolver>> {
        let inner = build_solver(&params, dt, spec, gamma, None)?;
        Ok(match &logs[i] {
            Some(log) => Box::new(RecordingSolver {
                inner,
                log: Arc::clone(log),
            }),
            None => inner,
        })
    };
    let fe_run = run_coupled(&training, &mut factory)?;

    let mut models = Vec::with_capacity(cfg.schwarz.subdomains.len());
    let mut energy = Vec::new();
    for (i, spec) in cfg.schwarz.subdomains.iter().enumerate() {
        let SubdomainModel::Rom { r, lambda, .. } = &spec.model else {
            models.push(None);
            continue;
        };
        let traj = &fe_run.trajectories[i];
        let basis = build_pod(&traj.states, *r, &format!("subdomain {i}"), true)?;
        let operators = match (cfg.training.data, &logs[i]) {
            (TrainingData::Snapshots, _) | (_, None) => {
                train_opinf(&basis, &traj.states, &traj.boundary_traces, dt, *lambda)?
            }
            (data, Some(log)) => {
                let log = log.lock().expect("transition log poisoned");
                let stepper = match data {
                    TrainingData::Reprojected => {
                        let system = assemble(&spec.mesh()?, &params)?;
                        let stepper = ImplicitEulerStepper::new(&system, dt)?;
                        Some((system, stepper))
                    }
                    _ => None,
                };
                fit_transitions(&basis, &log, stepper.as_ref().map(|(s, st)| (s, st)), dt, *lambda)?
            }
        };
        if !operators.is_finite() {
            return Err(Error::Divergence(format!("subdomain {i}: trained operators are not finite")));
        }
        energy.push(EnergyReport::new(i, &basis));
        models.push(Some(RomModel { basis, operators }));
    }
    Ok(TrainingOutcome {
        models,
        energy,
        fe_run,
        seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Regression on logged transitions. With a stepper, each end state is
/// recomputed by one full-order step from the projected start state.
fn fit_transitions(
    basis: &PodBasis,
    log: &[Transition],
    reproject: Option<(&SemiDiscreteSystem, &ImplicitEulerStepper)>,
    dt: f64,
    lambda: f64,
) -> Result<OpInfOperators> {
    let (n, count) = (basis.full_dim(), log.len());
    let m = log.first().map_or(0, |t| t.boundary_to.len());
    let mut from = DMatrix::zeros(n, count);
    let mut to = DMatrix::zeros(n, count);
    let mut inputs = DMatrix::zeros(m, count);
    for (j, t) in log.iter().enumerate() {
        inputs.set_column(j, &t.boundary_to);
        match reproject {
            Some((system, stepper)) => {
                let start = &basis.basis * basis.project_vec(&t.from);
                let end = stepper.step(&start, &t.boundary_from, &t.boundary_to, &system.load_vector(t.time))?;
                from.set_column(j, &start);
                to.set_column(j, &end);
            }
            None => {
                from.set_column(j, &t.from);
                to.set_column(j, &t.to);
            }
        }
    }
    train_opinf_transitions(basis, &from, &to, &inputs, dt, lambda)
}

/// Integrates a reduced model from `vhat0` with one boundary input column
/// per step (column 0 is the initial time and is not used for stepping).
pub fn simulate_rom(
    operators: &OpInfOperators,
    vhat0: &DVector<f64>,
    inputs: &DMatrix<f64>,
    dt: f64,
) -> Result<DMatrix<f64>> {
    let stepper = RomStepper::new(operators.clone(), dt)?;
    let nt = inputs.ncols();
    let mut out = DMatrix::zeros(operators.r(), nt);
    if nt == 0 {
        return Ok(out);
    }
    out.set_column(0, vhat0);
    let mut v = vhat0.clone();
    for j in 1..nt {
        v = stepper.step(&v, &inputs.column(j).into_owned())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence(format!("reduced state not finite at step {j}")));
        }
        out.set_column(j, &v);
    }
    Ok(out)
}

/// How the monolithic regularization weight is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    /// Pick the grid value with the smallest training-window error.
    Grid(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct MonoOutcome {
    pub model: RomModel,
    pub lambda: f64,
    /// `(lambda, training-window error)`; infinite when the candidate failed.
    pub grid: Vec<(f64, f64)>,
    pub nodal: DMatrix<f64>,
    pub training_seconds: f64,
    pub solve_seconds: f64,
}

/// Trains a monolithic Operator Inference model on the reference run's
/// training window and integrates it to the final time with the physical
/// boundary trace as input.
pub fn run_mono_opinf(cfg: &RunConfig, fom: &FomRun, choice: &LambdaChoice) -> Result<MonoOutcome> {
    let clock = Instant::now();
    let train = fom.trajectory.truncated(cfg.train_steps() + 1);
    let basis = build_pod(&train.states, cfg.training.mono_r, "monolithic model", false)?;
    let reduced = basis.project(&train.states);
    let vhat0 = reduced.column(0).into_owned();
    let candidates = match choice {
        LambdaChoice::Fixed(l) => vec![*l],
        LambdaChoice::Grid(g) => g.clone(),
    };

    let mut grid = Vec::with_capacity(candidates.len());
    let mut best: Option<(f64, f64, OpInfOperators)> = None;
    for &lambda in &candidates {
        let fitted = train_opinf(&basis, &train.states, &train.boundary_traces, cfg.problem.dt, lambda)
            .and_then(|ops| {
                let sim = simulate_rom(&ops, &vhat0, &train.boundary_traces, cfg.problem.dt)?;
                let recon = &basis.basis * sim;
                let err = error_metric(&recon, &train.times, &train.states, &train.times)?.value;
                Ok((ops, err))
            });
        let (ops, err) = match fitted {
            Ok(pair) => pair,
            Err(Error::Divergence(_)) | Err(Error::SingularMatrix(_)) => {
                grid.push((lambda, f64::INFINITY));
                continue;
            }
            Err(e) => return Err(e),
        };
        grid.push((lambda, err));
        if err.is_finite() && best.as_ref().is_none_or(|(_, e, _)| err < *e) {
            best = Some((lambda, err, ops));
        }
    }
    let (lambda, _, operators) = best.ok_or_else(|| {
        Error::Divergence("no regularization candidate produced a stable monolithic model".into())
    })?;
    let training_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let sim = simulate_rom(&operators, &vhat0, &fom.trajectory.boundary_traces, cfg.problem.dt)?;
    let states = &basis.basis * sim;
    let solve_seconds = clock.elapsed().as_secs_f64();

    let traj = Trajectory::new(fom.trajectory.times.clone(), states, fom.trajectory.boundary_traces.clone())?;
    let nodal = nodal_trajectory(&cfg.global_mesh, &traj);
    Ok(MonoOutcome {
        model: RomModel { basis, operators },
        lambda,
        grid,
        nodal,
        training_seconds,
        solve_seconds,
    })
}

/// One model column of the comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub name: String,
    pub error: ErrorValue,
    pub setup_seconds: f64,
    pub training_seconds: f64,
    pub solve_seconds: f64,
    pub mean_iterations: Option<f64>,
    pub max_iterations: Option<usize>,
    pub unconverged_windows: usize,
}

impl ModelReport {
    pub fn from_coupled(name: &str, run: &CoupledRun, error: ErrorValue, training_seconds: f64) -> Self {
        ModelReport {
            name: name.to_string(),
            error,
            setup_seconds: run.setup_seconds,
            training_seconds,
            solve_seconds: run.solve_seconds,
            mean_iterations: Some(run.mean_iterations()),
            max_iterations: Some(run.max_iterations()),
            unconverged_windows: run.unconverged_windows,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub models: Vec<ModelReport>,
    pub reference_solve_seconds: f64,
}

pub const TIMING_NOTE: &str = "wall clock, single process, single thread; solve phase excludes assembly, factorization and training; each FE factorization is computed once and reused";

impl ComparisonReport {
    pub fn model(&self, name: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.name == name)
    }

    /// Two-row table: solve time and error per model.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<14}", "");
        for m in &self.models {
            let _ = write!(out, " | {:>18}", m.name);
        }
        out.push('\n');
        let _ = write!(out, "{:<14}", "CPU time (s)");
        for m in &self.models {
            let _ = write!(out, " | {:>18.3}", m.solve_seconds);
        }
        out.push('\n');
        let _ = write!(out, "{:<14}", "Error");
        for m in &self.models {
            let flag = if m.error.absolute { " (abs)" } else { "" };
            let _ = write!(out, " | {:>18}", format!("{:.3e}{flag}", m.error.value));
        }
        out.push('\n');
        let _ = writeln!(out, "\nsetup / training seconds, Schwarz iterations (mean / max / unconverged windows):");
        for m in &self.models {
            let iters = match (m.mean_iterations, m.max_iterations) {
                (Some(mean), Some(max)) => format!("{mean:.2} / {max} / {}", m.unconverged_windows),
                _ => "-".into(),
            };
            let _ = writeln!(
                out,
                "  {:<18} setup {:.3}  training {:.3}  iterations {iters}",
                m.name, m.setup_seconds, m.training_seconds
            );
        }
        let _ = writeln!(out, "  reference FE solve {:.3} s", self.reference_solve_seconds);
        let _ = writeln!(out, "timing: {TIMING_NOTE}");
        out
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.models
            .iter()
            .map(|m| {
                vec![
                    m.name.clone(),
                    format!("{:.16e}", m.error.value),
                    m.error.absolute.to_string(),
                    format!("{:.6}", m.setup_seconds),
                    format!("{:.6}", m.training_seconds),
                    format!("{:.6}", m.solve_seconds),
                    m.mean_iterations.map_or(String::new(), |v| format!("{v:.4}")),
                    m.max_iterations.map_or(String::new(), |v| v.to_string()),
                    m.unconverged_windows.to_string(),
                ]
            })
            .collect()
    }

    pub const CSV_HEADER: [&'static str; 9] = [
        "model",
        "error",
        "error_is_absolute",
        "setup_seconds",
        "training_seconds",
        "solve_seconds",
        "mean_iterations",
        "max_iterations",
        "unconverged_windows",
    ];
}

pub const ALL_FE: &str = "All-FE Schwarz";
pub const HYBRID: &str = "OpInf-FE Schwarz";
pub const MONO: &str = "Mono. OpInf";

/// Everything produced by a full comparison.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub fom: FomRun,
    pub all_fe: CoupledRun,
    pub training: TrainingOutcome,
    pub hybrid: CoupledRun,
    pub mono: MonoOutcome,
    pub all_fe_nodal: DMatrix<f64>,
    pub hybrid_nodal: DMatrix<f64>,
}

/// Runs the monolithic FE reference, the all-FE and hybrid Schwarz models
/// and the monolithic OpInf model, and reports error against the reference
/// and timings.
pub fn compare(cfg: &RunConfig, lambda: &LambdaChoice) -> Result<Comparison> {
    let fom = run_fom(cfg)?;
    let times = &fom.trajectory.times;

    let all_fe_cfg = cfg.all_fe();
    let all_fe = run_schwarz(cfg, &all_fe_cfg, &[])?;
    let all_fe_nodal = stitch_run(cfg, &all_fe_cfg, &all_fe)?;
    let all_fe_err = error_metric(&all_fe_nodal, &all_fe.trajectories[0].times, &fom.nodal, times)?;

    let training = train_subdomain_roms(cfg)?;
    let hybrid = run_schwarz(cfg, &cfg.schwarz, &training.models)?;
    let hybrid_nodal = stitch_run(cfg, &cfg.schwarz, &hybrid)?;
    let hybrid_err = error_metric(&hybrid_nodal, &hybrid.trajectories[0].times, &fom.nodal, times)?;

    let mono = run_mono_opinf(cfg, &fom, lambda)?;
    let mono_err = error_metric(&mono.nodal, times, &fom.nodal, times)?;

    let report = ComparisonReport {
        models: vec![
            ModelReport::from_coupled(ALL_FE, &all_fe, all_fe_err, 0.0),
            ModelReport::from_coupled(HYBRID, &hybrid, hybrid_err, training.seconds),
            ModelReport {
                name: MONO.into(),
                error: mono_err,
                setup_seconds: 0.0,
                training_seconds: mono.training_seconds,
                solve_seconds: mono.solve_seconds,
                mean_iterations: None,
                max_iterations: None,
                unconverged_windows: 0,
            },
        ],
        reference_solve_seconds: fom.solve_seconds,
    };
    Ok(Comparison {
        report,
        fom,
        all_fe,
        training,
        hybrid,
        mono,
        all_fe_nodal,
        hybrid_nodal,
    })
}

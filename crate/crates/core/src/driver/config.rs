//! Run configuration.
//!
//! Files are TOML. Keys may be written either inside section tables or as
//! flat dotted keys (`problem.epsilon = 1e-2`); both spellings parse to the
//! same configuration. Unknown keys are rejected, and every omitted key
//! takes the default of the reference experiment.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fem::{constant_fn, CdrParams, MassMatrix, SpaceTimeFn};
use crate::mesh::{Rect, StructuredMesh};
use crate::schwarz::{cells_for, SchwarzConfig, SchwarzControls, SubdomainModel, SubdomainSpec};
use crate::timestep::step_count;

/// Default log grid for the monolithic regularization search: 0 and
/// `10^-6 … 10^0`.
pub const DEFAULT_LAMBDA_GRID: [f64; 8] = [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    problem: RawProblem,
    mesh: RawMesh,
    decomposition: RawDecomposition,
    training: RawTraining,
    schwarz: RawSchwarz,
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawProblem {
    epsilon: f64,
    sigma: f64,
    b: Option<[f64; 2]>,
    b_angle_deg: Option<f64>,
    forcing: String,
    dirichlet: String,
    mass: String,
    t_final: f64,
    dt: f64,
}

impl Default for RawProblem {
    fn default() -> Self {
        RawProblem {
            epsilon: 1e-2,
            sigma: 1e-3,
            b: None,
            b_angle_deg: None,
            forcing: "one".into(),
            dirichlet: "zero".into(),
            mass: "lumped".into(),
            t_final: 5.0,
            dt: 5e-3,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMesh {
    h: Option<f64>,
    nx: Option<usize>,
    ny: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawDecomposition {
    layout: String,
    overlap: f64,
    models: Vec<String>,
    subdomain: Vec<RawSubdomain>,
}

impl Default for RawDecomposition {
    fn default() -> Self {
        RawDecomposition {
            layout: "quadrants".into(),
            overlap: 0.08,
            models: vec!["rom".into(), "rom".into(), "rom".into(), "fe".into()],
            subdomain: Vec::new(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubdomain {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    nx: Option<usize>,
    ny: Option<usize>,
    #[serde(default = "default_model")]
    model: String,
    r: Option<usize>,
    lambda: Option<f64>,
    operators: Option<PathBuf>,
}

fn default_model() -> String {
    "fe".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawTraining {
    t_end: f64,
    r: usize,
    lambda: f64,
    mono_r: usize,
    mono_lambda: f64,
    lambda_grid: Option<Vec<f64>>,
    data: String,
}

impl Default for RawTraining {
    fn default() -> Self {
        RawTraining {
            t_end: 0.5,
            r: 10,
            lambda: 0.0,
            mono_r: 30,
            mono_lambda: 1e-1,
            lambda_grid: None,
            data: "reprojected".into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSchwarz {
    tol: f64,
    max_iters: usize,
    steps_per_window: usize,
}

impl Default for RawSchwarz {
    fn default() -> Self {
        RawSchwarz {
            tol: 1e-9,
            max_iters: 50,
            steps_per_window: 1,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: PathBuf,
    field_times: Vec<f64>,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput {
            dir: PathBuf::from("out"),
            field_times: vec![0.5, 1.0, 5.0],
        }
    }
}

/// Named analytic fields selectable for forcing and Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldKind {
    Zero,
    One,
    /// `x + y`
    Linear,
}

impl FieldKind {
    fn parse(name: &str, key: &str) -> Result<Self> {
        match name {
            "zero" => Ok(FieldKind::Zero),
            "one" => Ok(FieldKind::One),
            "x+y" | "linear" => Ok(FieldKind::Linear),
            other => Err(Error::Config(format!(
                "{key}: unknown field '{other}' (expected zero, one or x+y)"
            ))),
        }
    }

    pub fn to_fn(self) -> SpaceTimeFn {
        match self {
            FieldKind::Zero => constant_fn(0.0),
            FieldKind::One => constant_fn(1.0),
            FieldKind::Linear => Arc::new(|_, x, y| x + y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub epsilon: f64,
    pub sigma: f64,
    pub b: [f64; 2],
    pub forcing: FieldKind,
    pub dirichlet: FieldKind,
    pub mass: MassMatrix,
    pub t_final: f64,
    pub dt: f64,
}

impl ProblemConfig {
    pub fn params(&self) -> Result<CdrParams> {
        CdrParams::new(
            self.epsilon,
            self.sigma,
            self.b,
            self.forcing.to_fn(),
            self.dirichlet.to_fn(),
        )
        .map(|p| p.with_mass(self.mass))
    }
}

/// Which samples of the all-FE training run the subdomain regressions use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingData {
    /// Converged snapshots with central-difference time derivatives.
    Snapshots,
    /// Every Schwarz iterate as a one-step transition from the converged
    /// state at the start of its step.
    Iterates,
    /// Iterate transitions recomputed by one FE step from the projected
    /// start state, so the reduced data are closed under the basis.
    Reprojected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub t_end: f64,
    pub data: TrainingData,
    pub mono_r: usize,
    pub mono_lambda: f64,
    pub lambda_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub field_times: Vec<f64>,
}

/// Validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub global_mesh: StructuredMesh,
    /// Decomposition with the configured model assignment.
    pub schwarz: SchwarzConfig,
    pub training: TrainingConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config_str("").expect("defaults are valid")
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
    build(raw)
}

fn build(raw: RawConfig) -> Result<RunConfig> {
    let p = raw.problem;
    let b = match (p.b, p.b_angle_deg) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "give either problem.b or problem.b_angle_deg, not both".into(),
            ))
        }
        (Some(b), None) => b,
        (None, Some(deg)) => [deg.to_radians().cos(), deg.to_radians().sin()],
        (None, None) => {
            let a = std::f64::consts::PI / 3.0;
            [a.cos(), a.sin()]
        }
    };
    let problem = ProblemConfig {
        epsilon: p.epsilon,
        sigma: p.sigma,
        b,
        forcing: FieldKind::parse(&p.forcing, "problem.forcing")?,
        dirichlet: FieldKind::parse(&p.dirichlet, "problem.dirichlet")?,
        mass: match p.mass.as_str() {
            "lumped" => MassMatrix::Lumped,
            "consistent" => MassMatrix::Consistent,
            other => {
                return Err(Error::Config(format!(
                    "problem.mass: unknown value '{other}' (expected lumped or consistent)"
                )))
            }
        },
        t_final: p.t_final,
        dt: p.dt,
    };
    problem
        .params()
        .map_err(|e| Error::Config(format!("problem: {e}")))?;
    if !(problem.t_final > 0.0) {
        return Err(Error::Config(format!("problem.t_final must be positive, got {}", problem.t_final)));
    }
    step_count(0.0, problem.t_final, problem.dt)?;

    let domain = Rect::unit_square();
    let (nx, ny, h) = match (raw.mesh.h, raw.mesh.nx, raw.mesh.ny) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(Error::Config("give either mesh.h or mesh.nx/mesh.ny, not both".into()))
        }
        (None, Some(nx), Some(ny)) => (nx, ny, 1.0 / nx as f64),
        (None, Some(_), None) | (None, None, Some(_)) => {
            return Err(Error::Config("mesh.nx and mesh.ny must be given together".into()))
        }
        (h, None, None) => {
            let h = h.unwrap_or(0.02);
            if !(h > 0.0) {
                return Err(Error::Config(format!("mesh.h must be positive, got {h}")));
            }
            let n = cells_for(1.0, h)?;
            (n, n, h)
        }
    };
    if nx == 0 || ny == 0 {
        return Err(Error::Config("mesh cell counts must be positive".into()));
    }
    let global_mesh = StructuredMesh::new(domain, nx, ny)?;

    let t = raw.training;
    let rom_model = |r: Option<usize>, lambda: Option<f64>, source: Option<PathBuf>| SubdomainModel::Rom {
        r: r.unwrap_or(t.r),
        lambda: lambda.unwrap_or(t.lambda),
        source,
    };
    let parse_model = |name: &str, r, lambda, source| match name {
        "fe" => Ok(SubdomainModel::Fe),
        "rom" => Ok(rom_model(r, lambda, source)),
        other => Err(Error::Config(format!("unknown subdomain model '{other}' (expected fe or rom)"))),
    };

    let d = raw.decomposition;
    let subdomains = if !d.subdomain.is_empty() {
        d.subdomain
            .into_iter()
            .map(|s| {
                let rect = Rect::new(s.x0, s.x1, s.y0, s.y1).map_err(|e| Error::Config(e.to_string()))?;
                let nx = match s.nx {
                    Some(n) => n,
                    None => cells_for(rect.width(), global_mesh.hx())?,
                };
                let ny = match s.ny {
                    Some(n) => n,
                    None => cells_for(rect.height(), global_mesh.hy())?,
                };
                Ok(SubdomainSpec {
                    rect,
                    nx,
                    ny,
                    model: parse_model(&s.model, s.r, s.lambda, s.operators)?,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        if d.layout != "quadrants" {
            return Err(Error::Config(format!(
                "unknown decomposition.layout '{}' (expected quadrants, or list decomposition.subdomain entries)",
                d.layout
            )));
        }
        if d.models.len() != 4 {
            return Err(Error::Config(format!(
                "decomposition.models needs 4 entries for the quadrant layout, got {}",
                d.models.len()
            )));
        }
        if nx != ny {
            return Err(Error::Config("the quadrant layout requires a square global mesh".into()));
        }
        let models: Vec<SubdomainModel> = d
            .models
            .iter()
            .map(|m| parse_model(m, None, None, None))
            .collect::<Result<_>>()?;
        let models: [SubdomainModel; 4] = models.try_into().expect("length checked");
        SchwarzConfig::quadrants(domain, d.overlap, h, models)?
    };

    let schwarz = SchwarzConfig {
        domain,
        subdomains,
        dt: problem.dt,
        t_final: problem.t_final,
        controls: SchwarzControls {
            tol: raw.schwarz.tol,
            max_iters: raw.schwarz.max_iters,
        },
        steps_per_window: raw.schwarz.steps_per_window,
    };
    schwarz.validate()?;

    if !(t.t_end > 0.0 && t.t_end <= problem.t_final) {
        return Err(Error::Config(format!(
            "training.t_end must lie in (0, t_final], got {}",
            t.t_end
        )));
    }
    let train_steps = step_count(0.0, t.t_end, problem.dt)?;
    if train_steps < 2 {
        return Err(Error::Config("training window needs at least 3 snapshots".into()));
    }
    if train_steps % schwarz.steps_per_window != 0 {
        return Err(Error::Config("training window is not a whole number of Schwarz windows".into()));
    }
    for (i, s) in schwarz.subdomains.iter().enumerate() {
        if let SubdomainModel::Rom { r, lambda, .. } = &s.model {
            if *r == 0 {
                return Err(Error::Config(format!("subdomain {i}: r must be positive")));
            }
            if !(*lambda >= 0.0) {
                return Err(Error::Config(format!("subdomain {i}: lambda must be >= 0")));
            }
        }
    }
    if t.mono_r == 0 || !(t.mono_lambda >= 0.0) {
        return Err(Error::Config("training.mono_r must be positive and mono_lambda >= 0".into()));
    }
    let data = match t.data.as_str() {
        "snapshots" => TrainingData::Snapshots,
        "iterates" => TrainingData::Iterates,
        "reprojected" => TrainingData::Reprojected,
        other => {
            return Err(Error::Config(format!(
                "training.data: unknown value '{other}' (expected snapshots, iterates or reprojected)"
            )))
        }
    };
    let lambda_grid = t.lambda_grid.unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
    if lambda_grid.is_empty() || lambda_grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Config("training.lambda_grid must be non-empty with entries >= 0".into()));
    }

    for &ft in &raw.output.field_times {
        if !(ft >= 0.0 && ft <= problem.t_final) {
            return Err(Error::Config(format!("output.field_times entry {ft} outside [0, t_final]")));
        }
        step_count(0.0, ft, problem.dt)?;
    }

    Ok(RunConfig {
        problem,
        global_mesh,
        schwarz,
        training: TrainingConfig {
            t_end: t.t_end,
            data,
            mono_r: t.mono_r,
            mono_lambda: t.mono_lambda,
            lambda_grid,
        },
        output: OutputConfig {
            dir: raw.output.dir,
            field_times: raw.output.field_times,
        },
    })
}

impl RunConfig {
    /// The configured decomposition with every subdomain switched to FE.
    pub fn all_fe(&self) -> SchwarzConfig {
        let mut cfg = self.schwarz.clone();
        for s in &mut cfg.subdomains {
            s.model = SubdomainModel::Fe;
        }
        cfg
    }

    pub fn num_steps(&self) -> usize {
        step_count(0.0, self.problem.t_final, self.problem.dt).expect("validated")
    }

    pub fn train_steps(&self) -> usize {
        step_count(0.0, self.training.t_end, self.problem.dt).expect("validated")
    }
}

//! Command implementations behind the CLI. Each command writes its results
//! under the output directory and returns a short text summary.
//!
//! Output layout:
//! `fom/`, `schwarz/`, `hybrid/`, `mono/` hold trajectories (`times.oifs`,
//! `states*.oifs`, `traces*.oifs`) and `field_t<time>.csv` snapshots;
//! `rom/sub<i>/` holds trained subdomain operators with `rom/energy.csv`;
//! `compare/` holds `report.csv` and `report.txt`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::config::RunConfig;
use super::io::{export_field_csv, save_matrix, write_csv};
use super::metrics::error_metric;
use super::pipeline::{
    compare, run_fom, run_mono_opinf, run_schwarz, stitch_run, train_subdomain_roms, EnergyReport,
    ComparisonReport, FomRun, LambdaChoice, ModelReport, MonoOutcome, RomModel, ALL_FE, HYBRID,
};
use crate::error::{Error, Result};
use crate::schwarz::{CoupledRun, SchwarzConfig, SubdomainModel};
use crate::timestep::Trajectory;

fn column_matrix(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(values.len(), 1, values)
}

fn field_columns(cfg: &RunConfig, times: &[f64]) -> Result<Vec<(f64, usize)>> {
    cfg.output
        .field_times
        .iter()
        .map(|&t| {
            let j = (t / cfg.problem.dt).round();
            if !(j >= 0.0 && (j as usize) < times.len()) || (j * cfg.problem.dt - t).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "output.field_times entry {t} is not a step of [0, {}]",
                    cfg.problem.t_final
                )));
            }
            Ok((t, j as usize))
        })
        .collect()
}

fn export_fields(cfg: &RunConfig, dir: &Path, nodal: &DMatrix<f64>, times: &[f64]) -> Result<usize> {
    let cols = field_columns(cfg, times)?;
    for &(t, j) in &cols {
        let field: Vec<f64> = nodal.column(j).iter().copied().collect();
        export_field_csv(&dir.join(format!("field_t{t}.csv")), &cfg.global_mesh, &field)?;
    }
    Ok(cols.len())
}

fn save_trajectory(dir: &Path, suffix: &str, traj: &Trajectory) -> Result<()> {
    save_matrix(&dir.join(format!("states{suffix}.oifs")), &traj.states)?;
    save_matrix(&dir.join(format!("traces{suffix}.oifs")), &traj.boundary_traces)
}

fn save_fom(cfg: &RunConfig, out: &Path, fom: &FomRun) -> Result<()> {
    let dir = out.join("fom");
    save_matrix(&dir.join("times.oifs"), &column_matrix(&fom.trajectory.times))?;
    save_trajectory(&dir, "", &fom.trajectory)?;
    export_fields(cfg, &dir, &fom.nodal, &fom.trajectory.times)?;
    Ok(())
}

/// Monolithic FE reference, recomputed so it always matches the
/// configuration, and written to `fom/`.
fn reference(cfg: &RunConfig, out: &Path) -> Result<FomRun> {
    let fom = run_fom(cfg)?;
    save_fom(cfg, out, &fom)?;
    Ok(fom)
}

pub fn cmd_run_fom(cfg: &RunConfig, out: &Path) -> Result<String> {
    let fom = run_fom(cfg)?;
    save_fom(cfg, out, &fom)?;
    Ok(format!(
        "monolithic FE: {} nodes, {} steps, assembly {:.3} s, solve {:.3} s -> {}",
        cfg.global_mesh.num_nodes(),
        fom.trajectory.len() - 1,
        fom.assembly_seconds,
        fom.solve_seconds,
        out.join("fom").display()
    ))
}

fn save_coupled(
    cfg: &RunConfig,
    schwarz: &SchwarzConfig,
    dir: &Path,
    run: &CoupledRun,
) -> Result<DMatrix<f64>> {
    let times = &run.trajectories[0].times;
    save_matrix(&dir.join("times.oifs"), &column_matrix(times))?;
    for (i, traj) in run.trajectories.iter().enumerate() {
        save_trajectory(dir, &format!("_sub{i}"), traj)?;
    }
    let rows: Vec<Vec<String>> = run
        .window_iterations
        .iter()
        .enumerate()
        .map(|(w, it)| vec![(w + 1).to_string(), it.to_string()])
        .collect();
    write_csv(&dir.join("iterations.csv"), &["window", "iterations"], &rows)?;
    let nodal = stitch_run(cfg, schwarz, run)?;
    export_fields(cfg, dir, &nodal, times)?;
    Ok(nodal)
}

fn coupled_summary(name: &str, run: &CoupledRun, report: &ModelReport, dir: &Path) -> String {
    format!(
        "{name}: setup {:.3} s, solve {:.3} s, iterations mean {:.2} max {} ({} unconverged windows), error {:.3e}{} -> {}",
        run.setup_seconds,
        run.solve_seconds,
        run.mean_iterations(),
        run.max_iterations(),
        run.unconverged_windows,
        report.error.value,
        if report.error.absolute { " (absolute)" } else { "" },
        dir.display()
    )
}

pub fn cmd_run_schwarz(cfg: &RunConfig, out: &Path) -> Result<String> {
    let fom = reference(cfg, out)?;
    let schwarz = cfg.all_fe();
    let run = run_schwarz(cfg, &schwarz, &[])?;
    let dir = out.join("schwarz");
    let nodal = save_coupled(cfg, &schwarz, &dir, &run)?;
    let err = error_metric(&nodal, &run.trajectories[0].times, &fom.nodal, &fom.trajectory.times)?;
    let report = ModelReport::from_coupled(ALL_FE, &run, err, 0.0);
    Ok(coupled_summary(ALL_FE, &run, &report, &dir))
}

fn rom_dir(out: &Path, i: usize) -> PathBuf {
    out.join("rom").join(format!("sub{i}"))
}

fn save_energy(out: &Path, energy: &[EnergyReport]) -> Result<()> {
    let rows: Vec<Vec<String>> = energy.iter().flat_map(EnergyReport::rows).collect();
    write_csv(
        &out.join("rom").join("energy.csv"),
        &["subdomain", "mode", "sigma", "energy", "cumulative"],
        &rows,
    )
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<String> {
    let outcome = train_subdomain_roms(cfg)?;
    for (i, model) in outcome.models.iter().enumerate() {
        if let Some(model) = model {
            model.save(&rom_dir(out, i))?;
        }
    }
    save_energy(out, &outcome.energy)?;
    let mut text = format!(
        "trained {} subdomain models on [0, {}] in {:.3} s",
        outcome.energy.len(),
        cfg.training.t_end,
        outcome.seconds
    );
    for e in &outcome.energy {
        let _ = write!(text, "\n  subdomain {}: r={} retained energy {:.12}", e.subdomain, e.r, e.retained);
    }
    Ok(text)
}

/// Trained models for every ROM subdomain, from the configured operator
/// directory or the default `rom/sub<i>` location.
fn load_roms(cfg: &RunConfig, out: &Path) -> Result<Vec<Option<RomModel>>> {
    cfg.schwarz
        .subdomains
        .iter()
        .enumerate()
        .map(|(i, spec)| match &spec.model {
            SubdomainModel::Fe => Ok(None),
            SubdomainModel::Rom { r, lambda, source } => {
                let dir = source.clone().unwrap_or_else(|| rom_dir(out, i));
                let model = RomModel::load(&dir).map_err(|e| {
                    Error::Config(format!(
                        "subdomain {i}: cannot load trained operators from {} ({e}); run `train` first",
                        dir.display()
                    ))
                })?;
                if model.basis.dim() != *r || model.operators.lambda != *lambda {
                    return Err(Error::Config(format!(
                        "subdomain {i}: stored operators have r={} lambda={}, configuration asks for r={r} lambda={lambda}",
                        model.basis.dim(),
                        model.operators.lambda
                    )));
                }
                if model.basis.full_dim() != spec.mesh()?.interior_node_ids().len() {
                    return Err(Error::Config(format!("subdomain {i}: stored basis does not match the mesh")));
                }
                Ok(Some(model))
            }
        })
        .collect()
}

pub fn cmd_run_hybrid(cfg: &RunConfig, out: &Path) -> Result<String> {
    let roms = load_roms(cfg, out)?;
    let fom = reference(cfg, out)?;
    let run = run_schwarz(cfg, &cfg.schwarz, &roms)?;
    let dir = out.join("hybrid");
    let nodal = save_coupled(cfg, &cfg.schwarz, &dir, &run)?;
    let err = error_metric(&nodal, &run.trajectories[0].times, &fom.nodal, &fom.trajectory.times)?;
    let report = ModelReport::from_coupled(HYBRID, &run, err, 0.0);
    Ok(coupled_summary(HYBRID, &run, &report, &dir))
}

fn lambda_choice(cfg: &RunConfig, grid: bool) -> LambdaChoice {
    if grid {
        LambdaChoice::Grid(cfg.training.lambda_grid.clone())
    } else {
        LambdaChoice::Fixed(cfg.training.mono_lambda)
    }
}

fn save_mono(cfg: &RunConfig, out: &Path, mono: &MonoOutcome, times: &[f64]) -> Result<PathBuf> {
    let dir = out.join("mono");
    mono.model.save(&dir)?;
    save_matrix(&dir.join("times.oifs"), &column_matrix(times))?;
    save_matrix(&dir.join("nodal.oifs"), &mono.nodal)?;
    let rows: Vec<Vec<String>> = mono
        .grid
        .iter()
        .map(|(l, e)| vec![format!("{l:e}"), format!("{e:.16e}")])
        .collect();
    write_csv(&dir.join("lambda_grid.csv"), &["lambda", "training_error"], &rows)?;
    export_fields(cfg, &dir, &mono.nodal, times)?;
    Ok(dir)
}

pub fn cmd_run_mono_opinf(cfg: &RunConfig, out: &Path, grid: bool) -> Result<String> {
    let fom = reference(cfg, out)?;
    let mono = run_mono_opinf(cfg, &fom, &lambda_choice(cfg, grid))?;
    let dir = save_mono(cfg, out, &mono, &fom.trajectory.times)?;
    let err = error_metric(&mono.nodal, &fom.trajectory.times, &fom.nodal, &fom.trajectory.times)?;
    Ok(format!(
        "monolithic OpInf: r={} lambda={:e}, training {:.3} s, solve {:.3} s, error {:.3e} -> {}",
        cfg.training.mono_r,
        mono.lambda,
        mono.training_seconds,
        mono.solve_seconds,
        err.value,
        dir.display()
    ))
}

pub fn write_report(out: &Path, report: &ComparisonReport) -> Result<String> {
    let dir = out.join("compare");
    write_csv(&dir.join("report.csv"), &ComparisonReport::CSV_HEADER, &report.csv_rows())?;
    let table = report.table();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("report.txt");
    std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
    Ok(table)
}

pub fn cmd_compare(cfg: &RunConfig, out: &Path, grid: bool) -> Result<String> {
    let result = compare(cfg, &lambda_choice(cfg, grid))?;
    save_fom(cfg, out, &result.fom)?;
    save_coupled(cfg, &cfg.all_fe(), &out.join("schwarz"), &result.all_fe)?;
    for (i, model) in result.training.models.iter().enumerate() {
        if let Some(model) = model {
            model.save(&rom_dir(out, i))?;
        }
    }
    save_energy(out, &result.training.energy)?;
    save_coupled(cfg, &cfg.schwarz, &out.join("hybrid"), &result.hybrid)?;
    save_mono(cfg, out, &result.mono, &result.fom.trajectory.times)?;
    let mut table = write_report(out, &result.report)?;
    let _ = write!(table, "monolithic lambda: {:e}", result.mono.lambda);
    Ok(table)
}

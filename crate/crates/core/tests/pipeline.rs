use opinf_schwarz::driver::config::{parse_config_str, FieldKind, RunConfig};
use opinf_schwarz::driver::metrics::error_metric;
use opinf_schwarz::driver::pipeline::{
    compare, run_fom, run_mono_opinf, run_schwarz, stitch_run, train_subdomain_roms, ComparisonReport,
    LambdaChoice, RomModel, ALL_FE, HYBRID, MONO,
};

fn short(t_final: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.problem.t_final = t_final;
    cfg.schwarz.t_final = t_final;
    cfg.output.field_times.clear();
    cfg
}

#[test]
fn default_reference_dimensions() {
    let cfg = RunConfig::default();
    let fom = run_fom(&cfg).unwrap();
    assert_eq!(fom.num_interior(), 2401);
    assert_eq!(fom.trajectory.len(), 1001);
    assert_eq!(fom.nodal.shape(), (2601, 1001));
    let self_err = error_metric(&fom.nodal, &fom.trajectory.times, &fom.nodal, &fom.trajectory.times).unwrap();
    assert_eq!(self_err.value, 0.0);
    assert_eq!(run_fom(&cfg).unwrap().trajectory, fom.trajectory);
}

#[test]
fn zero_data_gives_zero_fields_and_absolute_error() {
    let mut cfg = short(0.1);
    cfg.problem.forcing = FieldKind::Zero;
    cfg.problem.dirichlet = FieldKind::Zero;
    let fom = run_fom(&cfg).unwrap();
    assert!(fom.nodal.iter().all(|&v| v == 0.0));
    let schwarz = cfg.all_fe();
    let run = run_schwarz(&cfg, &schwarz, &[]).unwrap();
    let nodal = stitch_run(&cfg, &schwarz, &run).unwrap();
    let err = error_metric(&nodal, &run.trajectories[0].times, &fom.nodal, &fom.trajectory.times).unwrap();
    assert!(err.absolute);
    assert_eq!(err.value, 0.0);
}

#[test]
fn trained_models_round_trip_and_report_energy() {
    let mut cfg = short(0.5);
    cfg.training.t_end = 0.2;
    let outcome = train_subdomain_roms(&cfg).unwrap();
    assert_eq!(outcome.models.iter().filter(|m| m.is_some()).count(), 3);
    assert!(outcome.models[3].is_none());
    assert_eq!(outcome.energy.len(), 3);

    let dir = tempfile::tempdir().unwrap();
    for (i, model) in outcome.models.iter().enumerate() {
        let Some(model) = model else { continue };
        assert_eq!(model.basis.dim(), 10);
        assert_eq!(model.operators.lambda, 0.0);
        let path = dir.path().join(format!("sub{i}"));
        model.save(&path).unwrap();
        assert_eq!(&RomModel::load(&path).unwrap(), model);
    }

    for report in &outcome.energy {
        let states = &outcome.fe_run.trajectories[report.subdomain].states;
        let total: f64 = report.rows().iter().map(|row| row[3].parse::<f64>().unwrap()).sum();
        let frob = states.norm_squared();
        assert!((total - frob).abs() <= 1e-10 * frob, "{total} vs {frob}");
        let last = report.rows().last().unwrap()[4].parse::<f64>().unwrap();
        assert!((last - 1.0).abs() < 1e-12);
    }
}

#[test]
fn lambda_grid_picks_the_smallest_training_error() {
    let mut cfg = short(1.0);
    cfg.training.mono_r = 12;
    let fom = run_fom(&cfg).unwrap();
    let grid = cfg.training.lambda_grid.clone();
    let searched = run_mono_opinf(&cfg, &fom, &LambdaChoice::Grid(grid.clone())).unwrap();
    assert_eq!(searched.grid.len(), grid.len());
    let best = searched
        .grid
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |acc, (l, e)| if e < acc.1 { (l, e) } else { acc });
    assert_eq!(searched.lambda, best.0);
    for &(lambda, err) in &searched.grid {
        let fixed = run_mono_opinf(&cfg, &fom, &LambdaChoice::Fixed(lambda));
        match fixed {
            Ok(f) if err.is_finite() => {
                let e = &f.grid[0];
                assert_eq!(e.1, err);
            }
            _ => assert!(!err.is_finite()),
        }
    }
    assert!(grid.contains(&0.0) && grid.contains(&1.0));
}

#[test]
fn comparison_is_deterministic_and_table_shaped() {
    let cfg = parse_config_str("[problem]\nt_final = 1.0\n[output]\nfield_times = []\n").unwrap();
    let choice = LambdaChoice::Fixed(cfg.training.mono_lambda);
    let a = compare(&cfg, &choice).unwrap();
    let b = compare(&cfg, &choice).unwrap();
    for name in [ALL_FE, HYBRID, MONO] {
        assert_eq!(a.report.model(name).unwrap().error, b.report.model(name).unwrap().error);
    }
    assert_eq!(a.report.models.len(), 3);
    let table = a.report.table();
    let lines: Vec<&str> = table.lines().filter(|l| l.starts_with("CPU time") || l.starts_with("Error")).collect();
    assert_eq!(lines.len(), 2, "{table}");
    assert_eq!(a.report.csv_rows().len(), 3);
    assert_eq!(ComparisonReport::CSV_HEADER.len(), a.report.csv_rows()[0].len());

    let fe = a.report.model(ALL_FE).unwrap().error.value;
    let hybrid = a.report.model(HYBRID).unwrap().error.value;
    let mono = a.report.model(MONO).unwrap().error.value;
    assert!(fe < hybrid && hybrid < mono, "{fe:e} {hybrid:e} {mono:e}");
}

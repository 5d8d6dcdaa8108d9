//! Batch front end: config ingestion, pipeline orchestration and
//! plot-ready CSV emission. All commands are idempotent and produce
//! byte-identical files when rerun with the same config.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sgph::freq::{bode_grid, h2_error_norm, h2_norm, siso_restriction, TransferEvaluator};
use sgph::mor::{complete_basis, reduce, soar, structure_report, ProjectionBasis};
use sgph::paramodel::Definiteness;
use sgph::pcbasis::PcBasis;
use sgph::phform::{embed_second_order, hamiltonian_second_order, validate_ph, Provenance};
use sgph::sgalerkin::{assemble, matrix_to_csv, GalerkinSecondOrderSystem};
use sgph::simulate::{
    ensemble_expected_hamiltonian, galerkin_hamiltonian_on_grid, integrate_rk45, run_galerkin,
    sample_statistics_on_grid, to_first_order, uniform_grid,
};

pub use config::RunConfig;

/// Exit codes: distinct classes so scripts can react to the failure kind.
pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CERTIFICATION: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(sgph::Error),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl From<sgph::Error> for CliError {
    fn from(e: sgph::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use sgph::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_OTHER,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) | E::BasisTooLarge { .. } | E::NodeBudgetExceeded { .. } => {
                    EXIT_CONFIG
                }
                E::Certification { .. } | E::LyapunovResidual { .. } | E::Unstable { .. } => {
                    EXIT_CERTIFICATION
                }
                E::SingularPencil { .. } => EXIT_CERTIFICATION,
                E::Solver { .. } | E::NodeEvaluation { .. } | E::Factorization(_) => EXIT_SOLVER,
                _ => EXIT_OTHER,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Assemble,
    Simulate,
    Mor,
    Bode,
    H2Sweep,
    ValidatePh,
}

/// Runtime options from flags.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub threads: usize,
    pub degree_override: Option<usize>,
    pub quiet: bool,
}

pub fn run_command(cmd: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<(), CliError> {
    std::fs::create_dir_all(&opts.out_dir)?;
    let sys = cfg.build_model()?;
    let degree = opts.degree_override.unwrap_or(cfg.basis.degree);
    let basis = PcBasis::new(sys.domain.clone(), degree)?;
    match cmd {
        Command::Assemble => cmd_assemble(cfg, opts, &sys, &basis),
        Command::Simulate => cmd_simulate(cfg, opts, &sys, &basis),
        Command::Mor => cmd_mor(cfg, opts, &sys, &basis, true),
        Command::Bode => cmd_bode(cfg, opts, &sys, &basis),
        Command::H2Sweep => cmd_mor(cfg, opts, &sys, &basis, false),
        Command::ValidatePh => cmd_validate_ph(cfg, opts, &sys, &basis),
    }
}

fn say(opts: &RunOptions, msg: &str) {
    if !opts.quiet {
        println!("{msg}");
    }
}

fn write_file(opts: &RunOptions, name: &str, contents: &str) -> Result<(), CliError> {
    let path = opts.out_dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(())
}

fn csv_series(header: &str, columns: &[&[f64]]) -> String {
    let rows = columns[0].len();
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for i in 0..rows {
        for (j, col) in columns.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", col[i]);
        }
        out.push('\n');
    }
    out
}

fn definiteness_name(c: Definiteness) -> &'static str {
    match c {
        Definiteness::Spd => "spd",
        Definiteness::Spsd => "spsd",
        Definiteness::Indefinite => "indefinite",
        Definiteness::Unsymmetric => "unsymmetric",
    }
}

fn assemble_system(
    sys: &sgph::paramodel::ParametricSecondOrderSystem,
    basis: &PcBasis,
) -> Result<GalerkinSecondOrderSystem, CliError> {
    Ok(assemble(sys, basis)?)
}

fn cmd_assemble(
    cfg: &RunConfig,
    opts: &RunOptions,
    sys: &sgph::paramodel::ParametricSecondOrderSystem,
    basis: &PcBasis,
) -> Result<(), CliError> {
    let gal = assemble_system(sys, basis)?;
    let (cm, cd, ck) = gal.certificates();
    let (mm, md, mk) = gal.margins();
    let summary = serde_json::json!({
        "q": basis.q(),
        "degree": basis.index_set().degree(),
        "n": gal.n(),
        "s": gal.s(),
        "ns": gal.ns(),
        "definiteness": {
            "m": definiteness_name(cm),
            "d": definiteness_name(cd),
            "k": definiteness_name(ck),
        },
        "lambda_min": { "m": mm, "d": md, "k": mk },
    });
    write_file(opts, "assemble_summary.json", &format!("{summary:#}\n"))?;
    if cfg.export_matrices {
        write_file(opts, "mhat.csv", &matrix_to_csv(gal.mhat(), gal.n(), gal.s()))?;
        write_file(opts, "dhat.csv", &matrix_to_csv(gal.dhat(), gal.n(), gal.s()))?;
        write_file(opts, "khat.csv", &matrix_to_csv(gal.khat(), gal.n(), gal.s()))?;
        write_file(opts, "bhat.csv", &matrix_to_csv(gal.bhat(), gal.n(), gal.s()))?;
    }
    say(
        opts,
        &format!("assembled: s = {}, ns = {}", gal.s(), gal.ns()),
    );
    Ok(())
}

fn cmd_simulate(
    cfg: &RunConfig,
    opts: &RunOptions,
    sys: &sgph::paramodel::ParametricSecondOrderSystem,
    basis: &PcBasis,
) -> Result<(), CliError> {
    let gal = assemble_system(sys, basis)?;
    let sim = &cfg.simulation;
    let signal = cfg.input_signal();
    let run = run_galerkin(&gal, &signal, sim.t_end, sim.eps_rel, sim.eps_abs)?;
    let grid = uniform_grid(sim.t_end, sim.grid_points);
    let (mean, std) = sample_statistics_on_grid(&gal, &run, &grid);
    let ham = galerkin_hamiltonian_on_grid(&gal, &run, &grid);
    write_file(
        opts,
        "galerkin_qoi.csv",
        &csv_series("t,mean,std,hamiltonian", &[&grid, &mean, &std, &ham]),
    )?;
    write_file(
        opts,
        "galerkin_hamiltonian.csv",
        &csv_series("t,hamiltonian", &[&grid, &ham]),
    )?;

    // deterministic run at the center of the parameter box
    let center = sys.at_center();
    let n = center.n();
    let n_in = center.n_in();
    let det_signal = signal.clone();
    let ev = to_first_order(&center, move |t| {
        let mut u = nalgebra::DVector::zeros(n_in);
        u[0] = det_signal.eval(t);
        u
    })?;
    let det_traj = integrate_rk45(
        &ev,
        nalgebra::DVector::zeros(2 * n),
        sim.t_end,
        sim.eps_rel,
        sim.eps_abs,
    )?;
    let det_ham: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let x = det_traj.interpolate(t);
            let v = x.rows(0, n).clone_owned();
            let p = x.rows(n, n).clone_owned();
            hamiltonian_second_order(&center.m, &center.k, &v, &p)
        })
        .collect();
    write_file(
        opts,
        "deterministic_hamiltonian.csv",
        &csv_series("t,hamiltonian", &[&grid, &det_ham]),
    )?;

    let mut max_gap = None;
    if sim.ensemble {
        let rule = match sim.ensemble_gauss_points {
            Some(m) => sgph::quadrature::gauss_tensor(basis.q(), m)?,
            None => sgph::quadrature::stroud5(basis.q())?,
        };
        let series = ensemble_expected_hamiltonian(
            sys,
            &rule,
            &signal,
            sim.t_end,
            sim.eps_rel,
            sim.eps_abs,
            sim.grid_points,
            opts.threads,
        )?;
        write_file(
            opts,
            "ensemble_hamiltonian.csv",
            &csv_series("t,expected_hamiltonian", &[&series.times, &series.values]),
        )?;
        let scale = series.values.iter().fold(0.0_f64, |a, &x| a.max(x)).max(1e-300);
        let gap = ham
            .iter()
            .zip(&series.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max)
            / scale;
        max_gap = Some(gap);
    }
    let summary = serde_json::json!({
        "t_end": sim.t_end,
        "grid_points": sim.grid_points,
        "steps_accepted": run.trajectory.steps_accepted,
        "steps_rejected": run.trajectory.steps_rejected,
        "ensemble_vs_galerkin_hamiltonian_max_rel_gap": max_gap,
    });
    write_file(opts, "simulate_summary.json", &format!("{summary:#}\n"))?;
    say(opts, "simulation finished");
    Ok(())
}

fn rom_input_column(gal: &GalerkinSecondOrderSystem) -> usize {
    // deterministic excitation occupies PC mode 1
    let _ = gal;
    0
}

fn build_rom_basis(
    gal: &GalerkinSecondOrderSystem,
    r_needed: usize,
    defl_tol: f64,
) -> Result<ProjectionBasis, CliError> {
    let b = gal.bhat().column(rom_input_column(gal)).clone_owned();
    let pb = soar(gal.khat(), gal.dhat(), gal.mhat(), &b, r_needed.min(gal.ns()), defl_tol)?;
    if pb.rank() < r_needed.min(gal.ns()) {
        // Krylov space saturated; pad with orthonormal complements
        let full = complete_basis(&pb, gal.ns());
        return Ok(ProjectionBasis::from_matrix(
            full.truncated(r_needed.min(gal.ns())),
            true,
        ));
    }
    Ok(pb)
}

fn cmd_mor(
    cfg: &RunConfig,
    opts: &RunOptions,
    sys: &sgph::paramodel::ParametricSecondOrderSystem,
    basis: &PcBasis,
    full: bool,
) -> Result<(), CliError> {
    let gal = assemble_system(sys, basis)?;
    let ns = gal.ns();
    let mc = &cfg.mor;
    let mut r_list: Vec<usize> = if mc.r_list.is_empty() {
        (5..=mc.r_max.min(ns)).collect()
    } else {
        mc.r_list.iter().cloned().filter(|&r| r <= ns).collect()
    };
    r_list.sort_unstable();
    r_list.dedup();
    if r_list.is_empty() {
        return Err(CliError::Config("mor r list is empty after clamping".into()));
    }
    let r_traj = mc.r_trajectory.min(ns);
    let r_needed = r_list.iter().cloned().max().unwrap().max(r_traj);
    let pb = build_rom_basis(&gal, r_needed, mc.defl_tol)?;

    let fom_siso = siso_restriction(gal.as_constant(), 0, rom_input_column(&gal))?;
    let fom_h2 = h2_norm(&fom_siso)?;
    let mut sweep_r = Vec::new();
    let mut sweep_err = Vec::new();
    let mut reports = Vec::new();
    for &r in &r_list {
        let rom = reduce(&gal, &pb, r)?;
        let report = structure_report(&rom);
        if report.class_m != Definiteness::Spd || report.class_k != Definiteness::Spd {
            return Err(CliError::Core(sgph::Error::Certification {
                matrix: format!("ROM at r = {r}"),
                lambda_min: report.lambda_min_m.min(report.lambda_min_k),
            }));
        }
        let rom_siso = siso_restriction(rom.as_constant(), 0, rom_input_column(&gal))?;
        let err = h2_error_norm(&fom_siso, &rom_siso)? / fom_h2;
        sweep_r.push(r as f64);
        sweep_err.push(err);
        reports.push(serde_json::json!({
            "r": r,
            "rel_h2_error": err,
            "class_m": definiteness_name(report.class_m),
            "class_d": definiteness_name(report.class_d),
            "class_k": definiteness_name(report.class_k),
            "lambda_min_m": report.lambda_min_m,
            "lambda_min_k": report.lambda_min_k,
        }));
    }
    write_file(
        opts,
        "h2_sweep.csv",
        &csv_series("r,rel_h2_error", &[&sweep_r, &sweep_err]),
    )?;
    write_file(
        opts,
        "mor_structure.json",
        &format!("{:#}\n", serde_json::Value::Array(reports)),
    )?;

    if full {
        let sim = &cfg.simulation;
        let grid = uniform_grid(sim.t_end, sim.grid_points);
        let rom = reduce(&gal, &pb, r_traj)?;
        let rsys = rom.as_constant().clone();
        let signal = cfg.input_signal();
        let n_in = rsys.n_in();
        let sig = signal.clone();
        let ev = to_first_order(&rsys, move |t| {
            let mut u = nalgebra::DVector::zeros(n_in);
            u[0] = sig.eval(t);
            u
        })?;
        let traj = integrate_rk45(
            &ev,
            nalgebra::DVector::zeros(2 * r_traj),
            sim.t_end,
            sim.eps_rel,
            sim.eps_abs,
        )?;
        let ham: Vec<f64> = grid
            .iter()
            .map(|&t| {
                let x = traj.interpolate(t);
                let v = x.rows(0, r_traj).clone_owned();
                let p = x.rows(r_traj, r_traj).clone_owned();
                hamiltonian_second_order(&rsys.m, &rsys.k, &v, &p)
            })
            .collect();
        write_file(
            opts,
            &format!("rom_hamiltonian_r{r_traj}.csv"),
            &csv_series("t,hamiltonian", &[&grid, &ham]),
        )?;

        let fc = &cfg.freq;
        let fom_bode = bode_grid(
            &TransferEvaluator::new(&fom_siso),
            fc.omega_min,
            fc.omega_max,
            fc.points,
        )?;
        write_file(opts, "bode_fom.csv", &bode_csv(&fom_bode))?;
        let rom_siso = siso_restriction(rom.as_constant(), 0, rom_input_column(&gal))?;
        let rom_bode = bode_grid(
            &TransferEvaluator::new(&rom_siso),
            fc.omega_min,
            fc.omega_max,
            fc.points,
        )?;
        write_file(opts, &format!("bode_rom_r{r_traj}.csv"), &bode_csv(&rom_bode))?;
        if cfg.export_matrices {
            let r = rom.as_constant();
            write_file(opts, "mbar.csv", &matrix_to_csv(&r.m, r_traj, 1))?;
            write_file(opts, "dbar.csv", &matrix_to_csv(&r.d, r_traj, 1))?;
            write_file(opts, "kbar.csv", &matrix_to_csv(&r.k, r_traj, 1))?;
        }
    }
    say(opts, &format!("mor sweep over {} dimensions done", r_list.len()));
    Ok(())
}

fn bode_csv(points: &[sgph::freq::BodePoint]) -> String {
    let omega: Vec<f64> = points.iter().map(|p| p.omega).collect();
    let mag: Vec<f64> = points.iter().map(|p| p.mag_db).collect();
    let phase: Vec<f64> = points.iter().map(|p| p.phase_deg).collect();
    csv_series("omega,mag_db,phase_deg", &[&omega, &mag, &phase])
}

fn cmd_bode(
    cfg: &RunConfig,
    opts: &RunOptions,
    sys: &sgph::paramodel::ParametricSecondOrderSystem,
    basis: &PcBasis,
) -> Result<(), CliError> {
    let gal = assemble_system(sys, basis)?;
    let fom_siso = siso_restriction(gal.as_constant(), 0, rom_input_column(&gal))?;
    let fc = &cfg.freq;
    let data = bode_grid(
        &TransferEvaluator::new(&fom_siso),
        fc.omega_min,
        fc.omega_max,
        fc.points,
    )?;
    write_file(opts, "bode_fom.csv", &bode_csv(&data))?;
    say(opts, &format!("bode data over {} points written", fc.points));
    Ok(())
}

fn cmd_validate_ph(
    _cfg: &RunConfig,
    opts: &RunOptions,
    sys: &sgph::paramodel::ParametricSecondOrderSystem,
    basis: &PcBasis,
) -> Result<(), CliError> {
    let gal = assemble_system(sys, basis)?;
    let ph = embed_second_order(gal.as_constant(), Provenance::Galerkin)?;
    let report = validate_ph(&ph, sgph::phform::default_validation_tol(ph.dim()));
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Config(e.to_string()))?;
    write_file(opts, "ph_validation.json", &format!("{json}\n"))?;
    if !report.pass {
        return Err(CliError::Core(sgph::Error::Certification {
            matrix: "port-Hamiltonian structure".into(),
            lambda_min: report.lambda_min_w,
        }));
    }
    say(opts, "port-Hamiltonian structure validated");
    Ok(())
}

/// Parse a command name as given on the command line.
pub fn parse_command(name: &str) -> Option<Command> {
    match name {
        "assemble" => Some(Command::Assemble),
        "simulate" => Some(Command::Simulate),
        "mor" => Some(Command::Mor),
        "bode" => Some(Command::Bode),
        "h2sweep" => Some(Command::H2Sweep),
        "validate-ph" => Some(Command::ValidatePh),
        _ => None,
    }
}

/// Full pipeline used by the determinism check: assemble, simulate, mor.
pub fn run_pipeline(cfg: &RunConfig, opts: &RunOptions) -> Result<(), CliError> {
    run_command(Command::Assemble, cfg, opts)?;
    run_command(Command::Simulate, cfg, opts)?;
    run_command(Command::Mor, cfg, opts)?;
    run_command(Command::ValidatePh, cfg, opts)?;
    Ok(())
}

pub fn default_out_dir(cfg: &RunConfig, flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    cfg.output
        .as_deref()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

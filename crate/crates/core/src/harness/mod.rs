//! Experiment orchestration: configuration, the offline phase (full-order
//! trajectories, snapshots, POD build), the online phase (full-order
//! benchmark against the plain and Leray reduced ensembles), diagnostics
//! and the CSV outputs.
//!
//! Everything runs single-threaded, so outputs are bit-identical across
//! repeated runs and machine thread counts. Wall-clock timings are printed
//! to stderr and never written into the CSVs; `timing.csv` holds the
//! deterministic work counters instead.

use crate::fem::{ForceField, SparseOperator, TaylorHoodSpace};
use crate::fom::{
    build_fom_operators, run_backward_euler, solve_steady_stokes, FomError, FomOperators,
    SnapshotRecorder, SnapshotSet,
};
use crate::linsolve::SolveLedger;
use crate::mesh::{generate_offset_annulus, AnnulusGeometry, Mesh, MeshError, Point2};
use crate::pod::{
    build_reduced_operators, compute_pod_basis, project_l2, PodBasis, PodError, ReducedOperators,
};
use crate::rom::{
    build_filter, step_ensemble_pod, step_leray_ensemble_pod, FilterOperator, RomEnsembleState,
    RomError, StabilityMonitor, StabilityRecord,
};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("phase mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("phase fom: {0}")]
    Fom(#[from] FomError),
    #[error("phase pod: {0}")]
    Pod(#[from] PodError),
    #[error("phase rom: {0}")]
    Rom(#[from] RomError),
    #[error("phase io: {0}")]
    Io(#[from] std::io::Error),
    #[error("phase config: {0}")]
    Config(String),
}

/// Flat key = value experiment configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub r1: f64,
    pub r2: f64,
    pub center: Point2,
    pub h_target: f64,
    pub mesh_file: Option<PathBuf>,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_start: f64,
    pub snapshot_interval: f64,
    pub viscosities: Vec<f64>,
    pub r_modes: usize,
    pub delta: f64,
    pub out_dir: PathBuf,
    /// Optional shared viscosity for the steady Stokes initializer;
    /// defaults to each realization's own viscosity.
    pub stokes_nu: Option<f64>,
    /// Accepted and recorded; execution is single-threaded by design.
    pub threads: usize,
    pub desk: bool,
}

impl ExperimentConfig {
    /// Desk-scale defaults: ~3k velocity dofs, window [3, 4.5].
    pub fn desk() -> Self {
        ExperimentConfig {
            r1: 1.0,
            r2: 0.1,
            center: Point2::new(0.5, 0.0),
            h_target: 0.11,
            mesh_file: None,
            dt: 0.01,
            t_end: 4.5,
            snapshot_start: 3.0,
            snapshot_interval: 0.04,
            viscosities: vec![0.0016, 0.002],
            r_modes: 10,
            delta: 0.025,
            out_dir: PathBuf::from("out"),
            stokes_nu: None,
            threads: 1,
            desk: true,
        }
    }

    /// The experiment's original resolution: finer mesh, window [0, 6].
    pub fn paper() -> Self {
        ExperimentConfig {
            h_target: 0.055,
            t_end: 6.0,
            desk: false,
            ..ExperimentConfig::desk()
        }
    }

    pub fn geometry(&self) -> AnnulusGeometry {
        AnnulusGeometry {
            r1: self.r1,
            r2: self.r2,
            center: self.center,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.dt > 0.0) {
            return Err(HarnessError::Config("dt must be positive".into()));
        }
        if self.viscosities.is_empty() || self.viscosities.iter().any(|&v| !(v > 0.0)) {
            return Err(HarnessError::Config(
                "viscosities must be a nonempty list of positive values".into(),
            ));
        }
        if self.r_modes == 0 {
            return Err(HarnessError::Config("r_modes must be at least 1".into()));
        }
        if self.delta < 0.0 {
            return Err(HarnessError::Config("delta must be nonnegative".into()));
        }
        let ratio = self.snapshot_interval / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio < 0.5 {
            return Err(HarnessError::Config(format!(
                "snapshot_interval {} is not a multiple of dt {}",
                self.snapshot_interval, self.dt
            )));
        }
        if self.snapshot_start >= self.t_end {
            return Err(HarnessError::Config(
                "snapshot_start must precede t_end".into(),
            ));
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::desk();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected key = value", no + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| HarnessError::Config(format!("line {}: {e}", no + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let parse_f64 =
            |v: &str| -> Result<f64, String> { v.parse().map_err(|_| format!("bad number `{v}`")) };
        match key {
            "r1" => self.r1 = parse_f64(value)?,
            "r2" => self.r2 = parse_f64(value)?,
            "center_x" => self.center.x = parse_f64(value)?,
            "center_y" => self.center.y = parse_f64(value)?,
            "h_target" => self.h_target = parse_f64(value)?,
            "mesh_file" => {
                self.mesh_file = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "dt" => self.dt = parse_f64(value)?,
            "t_end" => self.t_end = parse_f64(value)?,
            "snapshot_start" => self.snapshot_start = parse_f64(value)?,
            "snapshot_interval" => self.snapshot_interval = parse_f64(value)?,
            "viscosities" => {
                let vs: Result<Vec<f64>, String> =
                    value.split(',').map(|s| parse_f64(s.trim())).collect();
                self.viscosities = vs?;
            }
            "r_modes" => {
                self.r_modes = value.parse().map_err(|_| format!("bad integer `{value}`"))?
            }
            "delta" => self.delta = parse_f64(value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "stokes_nu" => {
                self.stokes_nu = if value.is_empty() {
                    None
                } else {
                    Some(parse_f64(value)?)
                }
            }
            "threads" => {
                self.threads = value.parse().map_err(|_| format!("bad integer `{value}`"))?
            }
            "desk" => self.desk = value.parse().map_err(|_| format!("bad bool `{value}`"))?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "r1 = {}", self.r1).unwrap();
        writeln!(out, "r2 = {}", self.r2).unwrap();
        writeln!(out, "center_x = {}", self.center.x).unwrap();
        writeln!(out, "center_y = {}", self.center.y).unwrap();
        writeln!(out, "h_target = {}", self.h_target).unwrap();
        writeln!(
            out,
            "mesh_file = {}",
            self.mesh_file
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        )
        .unwrap();
        writeln!(out, "dt = {}", self.dt).unwrap();
        writeln!(out, "t_end = {}", self.t_end).unwrap();
        writeln!(out, "snapshot_start = {}", self.snapshot_start).unwrap();
        writeln!(out, "snapshot_interval = {}", self.snapshot_interval).unwrap();
        let viscs: Vec<String> = self.viscosities.iter().map(|v| v.to_string()).collect();
        writeln!(out, "viscosities = {}", viscs.join(", ")).unwrap();
        writeln!(out, "r_modes = {}", self.r_modes).unwrap();
        writeln!(out, "delta = {}", self.delta).unwrap();
        writeln!(out, "out_dir = {}", self.out_dir.display()).unwrap();
        writeln!(
            out,
            "stokes_nu = {}",
            self.stokes_nu.map(|v| v.to_string()).unwrap_or_default()
        )
        .unwrap();
        writeln!(out, "threads = {}", self.threads).unwrap();
        writeln!(out, "desk = {}", self.desk).unwrap();
        out
    }
}

/// Everything the offline phase produces.
pub struct OfflineProducts {
    pub space: Arc<TaylorHoodSpace>,
    pub fom_ops: Arc<FomOperators>,
    pub mass: Arc<SparseOperator>,
    pub snapshots: SnapshotSet,
    pub basis: Arc<PodBasis>,
    pub reduced: ReducedOperators,
    pub ledger: SolveLedger,
    pub fom_steps: u64,
}

fn forces_for(config: &ExperimentConfig) -> Vec<ForceField> {
    vec![ForceField::Rotational; config.viscosities.len()]
}

fn obtain_mesh(config: &ExperimentConfig) -> Result<Mesh, HarnessError> {
    let mesh = match &config.mesh_file {
        Some(path) => crate::mesh::load_mesh(&std::fs::read_to_string(path)?)?,
        None => generate_offset_annulus(config.r1, config.r2, config.center, config.h_target)?,
    };
    mesh.validate(Some(&config.geometry()))?;
    Ok(mesh)
}

/// Offline phase: steady Stokes start per realization, backward Euler to
/// `t_end` with snapshot recording, then the POD basis and the reduced
/// operators.
pub fn run_offline(config: &ExperimentConfig) -> Result<OfflineProducts, HarnessError> {
    config.validate()?;
    let started = std::time::Instant::now();
    let mesh = obtain_mesh(config)?;
    let space = Arc::new(TaylorHoodSpace::new(mesh));
    let fom_ops = Arc::new(build_fom_operators(&space));
    let mass = Arc::new(fom_ops.mass.clone());
    eprintln!(
        "offline: mesh with {} velocity dofs, {} pressure dofs ({:.2?})",
        space.n_vel(),
        space.n_pr(),
        started.elapsed()
    );

    let mut ledger = SolveLedger::new();
    let mut per_real = Vec::new();
    let mut fom_steps = 0u64;
    for &nu in &config.viscosities {
        let stokes_nu = config.stokes_nu.unwrap_or(nu);
        let (u0, _) = solve_steady_stokes(&space, &fom_ops, stokes_nu, &ForceField::Rotational, &mut ledger)?;
        let mut recorder = SnapshotRecorder::new(
            0.0,
            config.dt,
            config.snapshot_start,
            config.snapshot_interval,
        )?;
        run_backward_euler(
            &space,
            &fom_ops,
            u0,
            nu,
            &ForceField::Rotational,
            0.0,
            config.t_end,
            config.dt,
            &mut ledger,
            |step, _t, u| recorder.offer(step, u),
        )?;
        fom_steps += ((config.t_end) / config.dt).round() as u64;
        let n_per = recorder.columns.len();
        per_real.push(SnapshotSet {
            n_vel: space.n_vel(),
            j_s: 1,
            n_per,
            t0: config.snapshot_start,
            dt_snap: config.snapshot_interval,
            columns: recorder.columns,
        });
        eprintln!(
            "offline: realization nu = {nu} done, {n_per} snapshots ({:.2?})",
            started.elapsed()
        );
    }
    let snapshots = SnapshotSet::merge(per_real)?;

    let basis = Arc::new(compute_pod_basis(
        &snapshots,
        &mass,
        &space,
        config.r_modes,
    )?);
    let reduced = build_reduced_operators(&basis, &forces_for(config));
    eprintln!(
        "offline: POD basis R = {} of rank-{} spectrum ({:.2?})",
        basis.r,
        basis.eigenvalues.len(),
        started.elapsed()
    );
    Ok(OfflineProducts {
        space,
        fom_ops,
        mass,
        snapshots,
        basis,
        reduced,
        ledger,
        fom_steps,
    })
}

/// Full-order benchmark over the online window: each realization continues
/// by backward Euler from its state at the window start.
pub struct BenchmarkData {
    pub times: Vec<f64>,
    /// velocities[j][step]
    pub velocities: Vec<Vec<Vec<f64>>>,
    pub ledger: SolveLedger,
    pub steps: u64,
}

pub fn run_benchmark(
    config: &ExperimentConfig,
    products: &OfflineProducts,
) -> Result<BenchmarkData, HarnessError> {
    let n_steps = ((config.t_end - config.snapshot_start) / config.dt).round() as usize;
    let times: Vec<f64> = (0..=n_steps)
        .map(|k| config.snapshot_start + k as f64 * config.dt)
        .collect();
    let mut velocities = Vec::new();
    let mut ledger = SolveLedger::new();
    for (j, &nu) in config.viscosities.iter().enumerate() {
        let mut series: Vec<Vec<f64>> = Vec::with_capacity(n_steps + 1);
        run_backward_euler(
            &products.space,
            &products.fom_ops,
            products.snapshots.column(j, 0).to_vec(),
            nu,
            &ForceField::Rotational,
            config.snapshot_start,
            config.t_end,
            config.dt,
            &mut ledger,
            |_step, _t, u| series.push(u.to_vec()),
        )?;
        velocities.push(series);
    }
    Ok(BenchmarkData {
        times,
        velocities,
        ledger,
        steps: n_steps as u64,
    })
}

/// One reduced-ensemble online run (plain when `delta` is `None`).
pub struct RomRunData {
    /// ensemble-averaged reduced coordinates per step
    pub mean_coords: Vec<Vec<f64>>,
    /// coords[step][j]
    pub coords: Vec<Vec<Vec<f64>>>,
    pub stability: Vec<StabilityRecord>,
    pub ledger: SolveLedger,
    pub steps: u64,
}

pub fn run_rom(
    config: &ExperimentConfig,
    products: &OfflineProducts,
    delta: Option<f64>,
) -> Result<RomRunData, HarnessError> {
    let n_steps = ((config.t_end - config.snapshot_start) / config.dt).round() as usize;
    let mut ledger = SolveLedger::new();
    let filter: Option<FilterOperator> = match delta {
        Some(d) => Some(build_filter(&products.reduced, d, &mut ledger)?),
        None => None,
    };

    let coords0: Vec<Vec<f64>> = (0..config.viscosities.len())
        .map(|j| project_l2(&products.basis, products.snapshots.column(j, 0)))
        .collect();
    let mut state = RomEnsembleState {
        t: config.snapshot_start,
        coords: coords0,
        viscosities: config.viscosities.clone(),
    };
    let forces = forces_for(config);
    let mut monitor = StabilityMonitor::new(&products.reduced, &forces, &state, config.dt, &mut ledger)?;
    let identity_filter = build_filter(&products.reduced, 0.0, &mut ledger)?;

    let mut coords = vec![state.coords.clone()];
    let mut mean_coords = vec![state.mean_coords()];
    let mut stability = Vec::new();
    for step in 0..n_steps {
        let next = match &filter {
            Some(f) => step_leray_ensemble_pod(&state, &products.reduced, config.dt, f, &mut ledger, step)?,
            None => step_ensemble_pod(&state, &products.reduced, config.dt, &mut ledger, step)?,
        };
        // the monitor's condition uses the run's own advecting filter
        // (identity for the plain scheme)
        let records = monitor.on_step(
            &state,
            &next,
            filter.as_ref().unwrap_or(&identity_filter),
            &mut ledger,
        )?;
        stability.extend(records);
        mean_coords.push(next.mean_coords());
        coords.push(next.coords.clone());
        state = next;
    }
    Ok(RomRunData {
        mean_coords,
        coords,
        stability,
        ledger,
        steps: n_steps as u64,
    })
}

/// Kinetic energy 1/2 u^T M u.
pub fn kinetic_energy(mass: &SparseOperator, u: &[f64]) -> f64 {
    0.5 * mass.bilinear(u, u)
}

/// Kinetic energy of reduced coordinates (modes are M-orthonormal).
pub fn kinetic_energy_reduced(a: &[f64]) -> f64 {
    0.5 * crate::linsolve::dot(a, a)
}

/// || u_ref - Phi a ||_{L2}.
pub fn l2_error(mass: &SparseOperator, u_ref: &[f64], basis: &PodBasis, a: &[f64]) -> f64 {
    let recon = basis.reconstruct(a);
    let diff: Vec<f64> = u_ref.iter().zip(&recon).map(|(x, y)| x - y).collect();
    mass.bilinear(&diff, &diff).sqrt()
}

/// The assembled diagnostics of one online comparison.
pub struct RunReport {
    pub times: Vec<f64>,
    pub ke_bench_avg: Vec<f64>,
    pub ke_pod_avg: Vec<f64>,
    pub ke_leray_avg: Vec<f64>,
    /// per-realization kinetic energies: [j][step]
    pub ke_bench: Vec<Vec<f64>>,
    pub ke_pod: Vec<Vec<f64>>,
    pub ke_leray: Vec<Vec<f64>>,
    /// ensemble-average errors per step
    pub err_pod_avg: Vec<f64>,
    pub err_leray_avg: Vec<f64>,
    /// per-realization errors: [j][step]
    pub err_pod: Vec<Vec<f64>>,
    pub err_leray: Vec<Vec<f64>>,
    /// ensemble-averaged mode coefficients per step
    pub modes_pod: Vec<Vec<f64>>,
    pub modes_leray: Vec<Vec<f64>>,
    pub stability_leray: Vec<StabilityRecord>,
    pub stability_pod: Vec<StabilityRecord>,
    pub bench_ledger: SolveLedger,
    pub pod_ledger: SolveLedger,
    pub leray_ledger: SolveLedger,
    pub bench_steps: u64,
    pub rom_steps: u64,
}

/// Online phase: benchmark plus both reduced runs from the same projected
/// initial data, with kinetic energy, error and stability diagnostics.
pub fn run_online(
    config: &ExperimentConfig,
    products: &OfflineProducts,
) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let started = std::time::Instant::now();
    let bench = run_benchmark(config, products)?;
    eprintln!("online: benchmark done ({:.2?})", started.elapsed());
    let plain = run_rom(config, products, None)?;
    eprintln!("online: ensemble-POD done ({:.2?})", started.elapsed());
    let leray = run_rom(config, products, Some(config.delta))?;
    eprintln!("online: Leray ensemble-POD done ({:.2?})", started.elapsed());

    let j_count = config.viscosities.len();
    let n_times = bench.times.len();
    let mass = &products.mass;
    let basis = &products.basis;

    let mut report = RunReport {
        times: bench.times.clone(),
        ke_bench_avg: Vec::with_capacity(n_times),
        ke_pod_avg: Vec::with_capacity(n_times),
        ke_leray_avg: Vec::with_capacity(n_times),
        ke_bench: vec![Vec::with_capacity(n_times); j_count],
        ke_pod: vec![Vec::with_capacity(n_times); j_count],
        ke_leray: vec![Vec::with_capacity(n_times); j_count],
        err_pod_avg: Vec::with_capacity(n_times),
        err_leray_avg: Vec::with_capacity(n_times),
        err_pod: vec![Vec::with_capacity(n_times); j_count],
        err_leray: vec![Vec::with_capacity(n_times); j_count],
        modes_pod: plain.mean_coords.clone(),
        modes_leray: leray.mean_coords.clone(),
        stability_leray: leray.stability,
        stability_pod: plain.stability,
        bench_ledger: bench.ledger,
        pod_ledger: plain.ledger,
        leray_ledger: leray.ledger,
        bench_steps: bench.steps,
        rom_steps: plain.steps,
    };

    for step in 0..n_times {
        let bench_cols: Vec<Vec<f64>> = (0..j_count)
            .map(|j| bench.velocities[j][step].clone())
            .collect();
        let bench_mean = crate::linsolve::permutation_invariant_mean(&bench_cols);
        report
            .ke_bench_avg
            .push(kinetic_energy(mass, &bench_mean));
        report
            .ke_pod_avg
            .push(kinetic_energy_reduced(&plain.mean_coords[step]));
        report
            .ke_leray_avg
            .push(kinetic_energy_reduced(&leray.mean_coords[step]));
        report
            .err_pod_avg
            .push(l2_error(mass, &bench_mean, basis, &plain.mean_coords[step]));
        report
            .err_leray_avg
            .push(l2_error(mass, &bench_mean, basis, &leray.mean_coords[step]));
        for j in 0..j_count {
            report.ke_bench[j].push(kinetic_energy(mass, &bench.velocities[j][step]));
            report.ke_pod[j].push(kinetic_energy_reduced(&plain.coords[step][j]));
            report.ke_leray[j].push(kinetic_energy_reduced(&leray.coords[step][j]));
            report.err_pod[j].push(l2_error(
                mass,
                &bench.velocities[j][step],
                basis,
                &plain.coords[step][j],
            ));
            report.err_leray[j].push(l2_error(
                mass,
                &bench.velocities[j][step],
                basis,
                &leray.coords[step][j],
            ));
        }
    }
    Ok(report)
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, content: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

/// Writes the offline artifacts: mesh, snapshots, basis, eigenvalue decay.
pub fn write_offline_outputs(
    config: &ExperimentConfig,
    products: &OfflineProducts,
) -> Result<(), HarnessError> {
    let dir = &config.out_dir;
    write_file(&dir.join("mesh.txt"), &products.space.mesh().save())?;
    write_file(
        &dir.join("snapshots.txt"),
        &crate::fom::save_snapshots(&products.snapshots),
    )?;
    write_file(&dir.join("basis.txt"), &crate::pod::save_basis(&products.basis))?;
    let mut eigs = String::from("i,lambda\n");
    for (i, l) in products.basis.eigenvalues.iter().enumerate() {
        writeln!(eigs, "{},{}", i + 1, fmt(*l)).unwrap();
    }
    write_file(&dir.join("eigs.csv"), &eigs)?;
    Ok(())
}

/// Writes the online diagnostics CSVs.
pub fn write_online_outputs(
    config: &ExperimentConfig,
    products: &OfflineProducts,
    report: &RunReport,
) -> Result<(), HarnessError> {
    let dir = &config.out_dir;
    let j_count = config.viscosities.len();

    let mut energy = String::from("t,ke_benchmark,ke_pod,ke_leray");
    for j in 1..=j_count {
        write!(energy, ",ke_benchmark_j{j},ke_pod_j{j},ke_leray_j{j}").unwrap();
    }
    energy.push('\n');
    for (s, t) in report.times.iter().enumerate() {
        write!(
            energy,
            "{},{},{},{}",
            fmt(*t),
            fmt(report.ke_bench_avg[s]),
            fmt(report.ke_pod_avg[s]),
            fmt(report.ke_leray_avg[s])
        )
        .unwrap();
        for j in 0..j_count {
            write!(
                energy,
                ",{},{},{}",
                fmt(report.ke_bench[j][s]),
                fmt(report.ke_pod[j][s]),
                fmt(report.ke_leray[j][s])
            )
            .unwrap();
        }
        energy.push('\n');
    }
    write_file(&dir.join("energy.csv"), &energy)?;

    let mut error = String::from("t,err_pod,err_leray");
    for j in 1..=j_count {
        write!(error, ",err_pod_j{j},err_leray_j{j}").unwrap();
    }
    error.push('\n');
    for (s, t) in report.times.iter().enumerate() {
        write!(
            error,
            "{},{},{}",
            fmt(*t),
            fmt(report.err_pod_avg[s]),
            fmt(report.err_leray_avg[s])
        )
        .unwrap();
        for j in 0..j_count {
            write!(
                error,
                ",{},{}",
                fmt(report.err_pod[j][s]),
                fmt(report.err_leray[j][s])
            )
            .unwrap();
        }
        error.push('\n');
    }
    write_file(&dir.join("error.csv"), &error)?;

    for (name, series) in [
        ("modes_pod.csv", &report.modes_pod),
        ("modes_leray.csv", &report.modes_leray),
    ] {
        let r = products.basis.r;
        let mut out = String::from("t");
        for i in 1..=r {
            write!(out, ",a{i}").unwrap();
        }
        out.push('\n');
        for (s, t) in report.times.iter().enumerate() {
            write!(out, "{}", fmt(*t)).unwrap();
            for v in &series[s] {
                write!(out, ",{}", fmt(*v)).unwrap();
            }
            out.push('\n');
        }
        write_file(&dir.join(name), &out)?;
    }

    for (name, records) in [
        ("stability.csv", &report.stability_leray),
        ("stability_pod.csv", &report.stability_pod),
    ] {
        let mut out =
            String::from("step,t,j,eps,condition_lhs,condition_rhs,energy_lhs,c_stab\n");
        for r in records.iter() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.step,
                fmt(r.t),
                r.j + 1,
                fmt(r.eps),
                fmt(r.condition_lhs),
                fmt(r.condition_rhs),
                fmt(r.energy_lhs),
                fmt(r.c_stab)
            )
            .unwrap();
        }
        write_file(&dir.join(name), &out)?;
    }

    // deterministic work counters; wall times go to stderr only
    let mut timing = String::from("phase,steps,factorizations,solves,factorizations_per_step\n");
    let phase_row = |name: &str, steps: u64, ledger: &SolveLedger, timing: &mut String| {
        let per_step = if steps > 0 {
            ledger.factorizations as f64 / steps as f64
        } else {
            0.0
        };
        writeln!(
            timing,
            "{name},{steps},{},{},{per_step}",
            ledger.factorizations, ledger.solves
        )
        .unwrap();
    };
    phase_row(
        "offline_fom",
        products.fom_steps,
        &products.ledger,
        &mut timing,
    );
    phase_row(
        "online_benchmark",
        report.bench_steps * config.viscosities.len() as u64,
        &report.bench_ledger,
        &mut timing,
    );
    phase_row("online_pod", report.rom_steps, &report.pod_ledger, &mut timing);
    phase_row(
        "online_leray",
        report.rom_steps,
        &report.leray_ledger,
        &mut timing,
    );
    write_file(&dir.join("timing.csv"), &timing)?;
    Ok(())
}

/// delta sweep: time-averaged |KE - KE_benchmark| and L2 error of the Leray
/// run per filtering radius (the selection diagnostic for delta).
pub fn sweep_delta(
    config: &ExperimentConfig,
    products: &OfflineProducts,
    deltas: &[f64],
) -> Result<Vec<(f64, f64, f64)>, HarnessError> {
    let bench = run_benchmark(config, products)?;
    let j_count = config.viscosities.len();
    let mass = &products.mass;
    let mut rows = Vec::new();
    for &delta in deltas {
        let run = run_rom(config, products, Some(delta))?;
        let mut ke_gap = 0.0;
        let mut err = 0.0;
        for step in 0..bench.times.len() {
            let bench_cols: Vec<Vec<f64>> = (0..j_count)
                .map(|j| bench.velocities[j][step].clone())
                .collect();
            let bench_mean = crate::linsolve::permutation_invariant_mean(&bench_cols);
            let ke_b = kinetic_energy(mass, &bench_mean);
            let ke_r = kinetic_energy_reduced(&run.mean_coords[step]);
            ke_gap += (ke_b - ke_r).abs();
            err += l2_error(mass, &bench_mean, &products.basis, &run.mean_coords[step]);
        }
        let n = bench.times.len() as f64;
        rows.push((delta, ke_gap / n, err / n));
    }
    Ok(rows)
}

/// Time average of a series.
pub fn time_average(series: &[f64]) -> f64 {
    series.iter().sum::<f64>() / series.len() as f64
}

/// Total variation sum |x_{k+1} - x_k| of a series.
pub fn total_variation(series: &[f64]) -> f64 {
    series.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

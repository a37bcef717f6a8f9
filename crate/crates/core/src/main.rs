//! Command-line driver for the offset-cylinder ensemble experiment.

use clap::{Parser, Subcommand};
use enspod::fem::TaylorHoodSpace;
use enspod::harness::{
    run_offline, run_online, sweep_delta, write_offline_outputs, write_online_outputs,
    ExperimentConfig, HarnessError,
};
use enspod::mesh::load_mesh;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "enspod",
    about = "2D Navier-Stokes ensembles with POD reduction and Leray regularization"
)]
struct Cli {
    /// Configuration file (flat key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. --set h_target=0.15 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Start from the paper-scale defaults instead of the desk-scale ones.
    #[arg(long, global = true)]
    paper: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or load) the mesh, validate it and write mesh.txt.
    Mesh,
    /// Full-order runs, snapshots, POD basis, eigenvalue export.
    Offline,
    /// Benchmark + ensemble-POD + Leray ensemble-POD with diagnostics CSVs.
    Online,
    /// Run the invariant suites against the configured setup.
    Verify,
    /// Sweep the filtering radius and report kinetic-energy mismatch.
    SweepDelta {
        /// Comma-separated list of filter radii.
        #[arg(long, default_value = "0,0.01,0.025,0.05,0.1")]
        deltas: String,
    },
    /// Print the effective configuration.
    PrintConfig,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None if cli.paper => ExperimentConfig::paper(),
        None => ExperimentConfig::desk(),
    };
    for item in &cli.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("--set expects KEY=VALUE, got `{item}`")))?;
        cfg.set(key.trim(), value.trim())
            .map_err(HarnessError::Config)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_products(
    cfg: &ExperimentConfig,
) -> Result<enspod::harness::OfflineProducts, HarnessError> {
    // rebuild the offline products from the artifacts written by `offline`
    let mesh_text = std::fs::read_to_string(cfg.out_dir.join("mesh.txt"))?;
    let mesh = load_mesh(&mesh_text)?;
    mesh.validate(Some(&cfg.geometry()))?;
    let space = Arc::new(TaylorHoodSpace::new(mesh));
    let fom_ops = Arc::new(enspod::fom::build_fom_operators(&space));
    let mass = Arc::new(fom_ops.mass.clone());
    let snapshots =
        enspod::fom::load_snapshots(&std::fs::read_to_string(cfg.out_dir.join("snapshots.txt"))?)?;
    let basis = Arc::new(enspod::pod::load_basis(
        &std::fs::read_to_string(cfg.out_dir.join("basis.txt"))?,
        &mass,
        &space,
    )?);
    let reduced = enspod::pod::build_reduced_operators(
        &basis,
        &vec![enspod::fem::ForceField::Rotational; cfg.viscosities.len()],
    );
    Ok(enspod::harness::OfflineProducts {
        space,
        fom_ops,
        mass,
        snapshots,
        basis,
        reduced,
        ledger: enspod::linsolve::SolveLedger::new(),
        fom_steps: 0,
    })
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let cfg = build_config(&cli)?;
    match cli.command {
        Command::Mesh => {
            let mesh = match &cfg.mesh_file {
                Some(path) => load_mesh(&std::fs::read_to_string(path)?)?,
                None => enspod::mesh::generate_offset_annulus(
                    cfg.r1, cfg.r2, cfg.center, cfg.h_target,
                )?,
            };
            mesh.validate(Some(&cfg.geometry()))?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            std::fs::write(cfg.out_dir.join("mesh.txt"), mesh.save())?;
            let space = TaylorHoodSpace::new(mesh);
            println!(
                "mesh ok: {} vertices, {} triangles, {} boundary edges, {} velocity dofs",
                space.mesh().n_vertices(),
                space.mesh().n_triangles(),
                space.mesh().boundary_edges().len(),
                space.n_vel()
            );
        }
        Command::Offline => {
            let products = run_offline(&cfg)?;
            write_offline_outputs(&cfg, &products)?;
            println!(
                "offline done: {} snapshot columns, POD basis R = {} written to {}",
                products.snapshots.n_columns(),
                products.basis.r,
                cfg.out_dir.display()
            );
        }
        Command::Online => {
            let products = load_products(&cfg)?;
            let report = run_online(&cfg, &products)?;
            write_online_outputs(&cfg, &products, &report)?;
            let avg = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            println!(
                "online done: time-averaged L2 error pod = {:.6e}, leray = {:.6e}",
                avg(&report.err_pod_avg),
                avg(&report.err_leray_avg)
            );
        }
        Command::Verify => {
            let failures = verify(&cfg)?;
            if failures > 0 {
                return Err(HarnessError::Config(format!(
                    "{failures} invariant check(s) failed"
                )));
            }
        }
        Command::SweepDelta { deltas } => {
            let deltas: Result<Vec<f64>, _> =
                deltas.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let deltas =
                deltas.map_err(|_| HarnessError::Config("bad --deltas list".to_string()))?;
            let products = load_products(&cfg)?;
            let rows = sweep_delta(&cfg, &products, &deltas)?;
            println!("delta,avg_ke_gap,avg_l2_err");
            for (d, gap, err) in rows {
                println!("{d},{gap:.6e},{err:.6e}");
            }
        }
        Command::PrintConfig => {
            print!("{}", cfg.to_config_string());
        }
    }
    Ok(())
}

/// Fast invariant battery over the configured mesh and operators. Prints a
/// PASS/FAIL line per check and returns the failure count.
fn verify(cfg: &ExperimentConfig) -> Result<usize, HarnessError> {
    use enspod::fem::assembly;
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("{} {}", if ok { "PASS" } else { "FAIL" }, name);
        if !ok {
            failures += 1;
        }
    };

    let mesh =
        enspod::mesh::generate_offset_annulus(cfg.r1, cfg.r2, cfg.center, cfg.h_target)?;
    check(
        "mesh invariants (areas, edge sharing, Euler, boundary circles)",
        mesh.validate(Some(&cfg.geometry())).is_ok(),
    );
    check(
        "mesh resolution bound (max diameter <= 2 h_target)",
        mesh.max_diameter() <= 2.0 * cfg.h_target + 1e-12,
    );

    let space = Arc::new(TaylorHoodSpace::new(mesh));
    let m = assembly::assemble_mass(&space);
    let a = assembly::assemble_stiffness(&space);
    check("mass symmetry", m.max_asymmetry() == 0.0);
    check("stiffness symmetry", a.max_asymmetry() == 0.0);
    let constant = space.interpolate_velocity(|_, _| [1.0, -2.0]);
    let ac = a.matvec(&constant);
    check(
        "stiffness annihilates constants",
        ac.iter().all(|v| v.abs() <= 1e-12 * a.max_abs()),
    );

    let mut state = 0x2545f4914f6cdd1du64;
    let mut next_rand = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let w: Vec<f64> = (0..space.n_vel()).map(|_| next_rand()).collect();
    let n = assembly::assemble_convection(&space, &enspod::fem::FieldFunction::velocity(w));
    let mut skew_ok = true;
    for (r, c, v) in n.iter() {
        if v + n.get(c, r) != 0.0 {
            skew_ok = false;
            break;
        }
    }
    check("convection skew-symmetry (exact)", skew_ok);
    let v: Vec<f64> = (0..space.n_vel()).map(|_| next_rand()).collect();
    check(
        "convection energy neutrality",
        n.bilinear(&v, &v).abs() <= 1e-12 * n.max_abs().max(1.0),
    );

    // basis-level checks when offline artifacts exist
    let basis_path = cfg.out_dir.join("basis.txt");
    if basis_path.exists() {
        let mass = Arc::new(m.clone());
        let basis = enspod::pod::load_basis(
            &std::fs::read_to_string(&basis_path)?,
            &mass,
            &space,
        )?;
        let mut ortho = 0.0f64;
        for (i, phi) in basis.modes.iter().enumerate() {
            for (j, psi) in basis.modes.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                ortho = ortho.max((mass.bilinear(phi, psi) - want).abs());
            }
        }
        check("POD basis M-orthonormality (1e-10)", ortho <= 1e-10);
        let b = assembly::assemble_divergence(&space);
        let div_worst = basis
            .modes
            .iter()
            .map(|phi| enspod::linsolve::norm2(&b.matvec(phi)))
            .fold(0.0f64, f64::max);
        check("POD basis discrete divergence (1e-8)", div_worst <= 1e-8);
        let snap_path = cfg.out_dir.join("snapshots.txt");
        if snap_path.exists() {
            let snapshots = enspod::fom::load_snapshots(&std::fs::read_to_string(&snap_path)?)?;
            let id = enspod::pod::projection_error_identity(&snapshots, &basis);
            check(
                "projection-error identity (L2, 1e-8 of total energy)",
                (id.lhs_l2 - id.rhs_l2).abs() <= 1e-8 * id.scale_l2,
            );
            check(
                "projection-error identity (H1, 1e-6 of total energy)",
                (id.lhs_h1 - id.rhs_h1).abs() <= 1e-6 * id.scale_h1,
            );
        }
    } else {
        println!("SKIP POD basis checks (no {} yet)", basis_path.display());
    }
    Ok(failures)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

//! Full-order solvers: the steady Stokes initializer, the linearly implicit
//! backward Euler reference stepper, and the ensemble scheme in which all
//! realizations share one coefficient matrix per step built from the lagged
//! ensemble mean and the maximum viscosity, with the per-realization
//! viscosity gap and fluctuation convection treated explicitly.

use crate::fem::assembly::{
    assemble_convection_scalar, assemble_divergence, assemble_load, assemble_mass,
    assemble_mass_scalar, assemble_stiffness, assemble_stiffness_scalar, build_saddle,
    constrain_matrix, pressure_integral_vector,
};
use crate::fem::{ForceField, SparseOperator, TaylorHoodSpace};
use crate::linsolve::{factorize_cached, LinSolveError, SolveLedger, SymbolicCache};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FomError {
    #[error("solver failure at step {step}: {source}")]
    Solver {
        step: usize,
        source: LinSolveError,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One ensemble realization at a time level.
#[derive(Clone, Debug)]
pub struct EnsembleMember {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub viscosity: f64,
    pub force: ForceField,
}

/// All realizations at one time level, on a shared space.
#[derive(Clone, Debug)]
pub struct EnsembleState {
    pub t: f64,
    pub members: Vec<EnsembleMember>,
}

impl EnsembleState {
    pub fn nu_max(&self) -> f64 {
        self.members
            .iter()
            .map(|m| m.viscosity)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Ensemble mean of the velocities, bit-invariant under member
    /// permutations.
    pub fn mean_velocity(&self) -> Vec<f64> {
        let rows: Vec<Vec<f64>> = self.members.iter().map(|m| m.velocity.clone()).collect();
        crate::linsolve::permutation_invariant_mean(&rows)
    }
}

/// Time-independent operators of a space, assembled once.
pub struct FomOperators {
    pub mass: SparseOperator,
    pub mass_scalar: SparseOperator,
    pub stiffness: SparseOperator,
    pub stiffness_scalar: SparseOperator,
    pub divergence: SparseOperator,
    /// (chi_p, 1) integrals for the zero-mean pressure multiplier.
    pub pressure_ones: Vec<f64>,
}

pub fn build_fom_operators(space: &TaylorHoodSpace) -> FomOperators {
    FomOperators {
        mass: assemble_mass(space),
        mass_scalar: assemble_mass_scalar(space),
        stiffness: assemble_stiffness(space),
        stiffness_scalar: assemble_stiffness_scalar(space),
        divergence: assemble_divergence(space),
        pressure_ones: pressure_integral_vector(space),
    }
}

fn split_saddle_solution(space: &TaylorHoodSpace, x: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let n_vel = space.n_vel();
    let n_pr = space.n_pr();
    let mut vel = x;
    let pr = vel[n_vel..n_vel + n_pr].to_vec();
    vel.truncate(n_vel);
    space.zero_constrained(&mut vel);
    (vel, pr)
}

/// Steady Stokes solve nu (grad u, grad v) - (p, div v) = (f, v),
/// (div u, q) = 0, with no-slip velocity and zero-mean pressure.
pub fn solve_steady_stokes(
    space: &TaylorHoodSpace,
    ops: &FomOperators,
    nu: f64,
    force: &ForceField,
    ledger: &mut SolveLedger,
) -> Result<(Vec<f64>, Vec<f64>), FomError> {
    let load = assemble_load(space, force, 0.0);
    solve_stokes_with_load(space, ops, nu, &load, ledger)
}

/// Steady Stokes against a raw load vector over the velocity dofs.
pub fn solve_stokes_with_load(
    space: &TaylorHoodSpace,
    ops: &FomOperators,
    nu: f64,
    load: &[f64],
    ledger: &mut SolveLedger,
) -> Result<(Vec<f64>, Vec<f64>), FomError> {
    let k = SparseOperator::linear_combination(&[(nu, &ops.stiffness)]);
    let saddle = build_saddle(&k, &ops.divergence, &ops.pressure_ones);
    let constrained = constrain_matrix(&saddle, space.constrained_dofs());
    let mut rhs = load.to_vec();
    rhs.resize(saddle.nrows(), 0.0);
    for &d in space.constrained_dofs() {
        rhs[d] = 0.0;
    }
    let mut cache = SymbolicCache::new();
    let fact = factorize_cached(&constrained, &mut cache, ledger)
        .map_err(|source| FomError::Solver { step: 0, source })?;
    let x = fact
        .solve(&rhs, ledger)
        .map_err(|source| FomError::Solver { step: 0, source })?;
    Ok(split_saddle_solution(space, x))
}

/// Advances all realizations by one step of the shared-matrix ensemble
/// scheme. Exactly one factorization happens per call; all right-hand
/// sides go through the same factorization.
pub fn step_ensemble(
    space: &TaylorHoodSpace,
    ops: &FomOperators,
    state: &EnsembleState,
    dt: f64,
    cache: &mut SymbolicCache,
    ledger: &mut SolveLedger,
    step_index: usize,
) -> Result<EnsembleState, FomError> {
    let nu_max = state.nu_max();
    let mean = state.mean_velocity();
    let t_next = state.t + dt;

    let n_mean = assemble_convection_scalar(space, &mean);
    let k_scalar = SparseOperator::linear_combination(&[
        (1.0 / dt, &ops.mass_scalar),
        (1.0, &n_mean),
        (nu_max, &ops.stiffness_scalar),
    ]);
    let k = crate::fem::assembly::expand_vector(&k_scalar);
    let saddle = build_saddle(&k, &ops.divergence, &ops.pressure_ones);
    let constrained = constrain_matrix(&saddle, space.constrained_dofs());
    let fact = factorize_cached(&constrained, cache, ledger).map_err(|source| FomError::Solver {
        step: step_index,
        source,
    })?;

    let n_total = saddle.nrows();
    let mut rhs_block: Vec<Vec<f64>> = Vec::with_capacity(state.members.len());
    for member in &state.members {
        let u = &member.velocity;
        let mut rhs = ops.mass.matvec(u);
        for v in rhs.iter_mut() {
            *v /= dt;
        }
        let load = assemble_load(space, &member.force, t_next);
        for (r, l) in rhs.iter_mut().zip(&load) {
            *r += l;
        }
        // explicit fluctuation convection: -b*(u^j - <u>, u^j, .)
        let fluct: Vec<f64> = u.iter().zip(&mean).map(|(a, b)| a - b).collect();
        let n_fluct = assemble_convection_scalar(space, &fluct);
        let nn = space.n_nodes();
        for c in 0..2 {
            let part = n_fluct.matvec(&u[c * nn..(c + 1) * nn]);
            for (i, v) in part.iter().enumerate() {
                rhs[c * nn + i] -= v;
            }
        }
        // explicit viscosity correction: -(nu_j - nu_max) (grad u^j, grad .)
        let gap = member.viscosity - nu_max;
        let au = ops.stiffness.matvec(u);
        for (r, a) in rhs.iter_mut().zip(&au) {
            *r -= gap * a;
        }
        rhs.resize(n_total, 0.0);
        for &d in space.constrained_dofs() {
            rhs[d] = 0.0;
        }
        rhs_block.push(rhs);
    }

    let solutions = fact
        .solve_many(&rhs_block, ledger)
        .map_err(|source| FomError::Solver {
            step: step_index,
            source,
        })?;

    let members = state
        .members
        .iter()
        .zip(solutions)
        .map(|(m, x)| {
            let (velocity, pressure) = split_saddle_solution(space, x);
            EnsembleMember {
                velocity,
                pressure,
                viscosity: m.viscosity,
                force: m.force.clone(),
            }
        })
        .collect();
    Ok(EnsembleState {
        t: t_next,
        members,
    })
}

/// One linearly implicit backward Euler step: the convecting field is the
/// lagged velocity. Implemented as the single-member ensemble step, which
/// it equals term by term.
#[allow(clippy::too_many_arguments)]
pub fn step_backward_euler(
    space: &TaylorHoodSpace,
    ops: &FomOperators,
    velocity: &[f64],
    nu: f64,
    force: &ForceField,
    t: f64,
    dt: f64,
    cache: &mut SymbolicCache,
    ledger: &mut SolveLedger,
    step_index: usize,
) -> Result<(Vec<f64>, Vec<f64>), FomError> {
    let state = EnsembleState {
        t,
        members: vec![EnsembleMember {
            velocity: velocity.to_vec(),
            pressure: vec![0.0; space.n_pr()],
            viscosity: nu,
            force: force.clone(),
        }],
    };
    let next = step_ensemble(space, ops, &state, dt, cache, ledger, step_index)?;
    let m = next.members.into_iter().next().unwrap();
    Ok((m.velocity, m.pressure))
}

/// Runs backward Euler from `t0` to `t_end`, invoking the callback after
/// every accepted step (and once for the initial state).
#[allow(clippy::too_many_arguments)]
pub fn run_backward_euler(
    space: &TaylorHoodSpace,
    ops: &FomOperators,
    initial: Vec<f64>,
    nu: f64,
    force: &ForceField,
    t0: f64,
    t_end: f64,
    dt: f64,
    ledger: &mut SolveLedger,
    mut on_state: impl FnMut(usize, f64, &[f64]),
) -> Result<Vec<f64>, FomError> {
    let n_steps = ((t_end - t0) / dt).round() as usize;
    if ((t_end - t0) - n_steps as f64 * dt).abs() > 1e-9 * dt {
        return Err(FomError::Config(format!(
            "time window [{t0}, {t_end}] is not a multiple of dt = {dt}"
        )));
    }
    let mut cache = SymbolicCache::new();
    let mut u = initial;
    on_state(0, t0, &u);
    for step in 0..n_steps {
        let t = t0 + step as f64 * dt;
        let (next, _) = step_backward_euler(
            space, ops, &u, nu, force, t, dt, &mut cache, ledger, step,
        )?;
        u = next;
        on_state(step + 1, t0 + (step + 1) as f64 * dt, &u);
    }
    Ok(u)
}

/// Velocity snapshots of one or more realizations at uniformly spaced
/// times, stored realization-major exactly as the snapshot matrix columns.
#[derive(Clone, Debug)]
pub struct SnapshotSet {
    pub n_vel: usize,
    pub j_s: usize,
    /// snapshots per realization (N_S + 1)
    pub n_per: usize,
    pub t0: f64,
    pub dt_snap: f64,
    pub columns: Vec<Vec<f64>>,
}

impl SnapshotSet {
    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize, m: usize) -> &[f64] {
        &self.columns[j * self.n_per + m]
    }

    /// Concatenates per-realization sets (j-major order).
    pub fn merge(sets: Vec<SnapshotSet>) -> Result<SnapshotSet, FomError> {
        let first = sets
            .first()
            .ok_or_else(|| FomError::Config("no snapshot sets to merge".into()))?;
        let (n_vel, n_per, t0, dt_snap) = (first.n_vel, first.n_per, first.t0, first.dt_snap);
        let mut columns = Vec::new();
        let mut j_s = 0;
        for s in sets {
            if s.n_vel != n_vel || s.n_per != n_per {
                return Err(FomError::Config(
                    "snapshot sets have mismatched shapes".into(),
                ));
            }
            j_s += s.j_s;
            columns.extend(s.columns);
        }
        Ok(SnapshotSet {
            n_vel,
            j_s,
            n_per,
            t0,
            dt_snap,
            columns,
        })
    }
}

/// Extracts the snapshots at `start, start + interval, ...` from a stored
/// trajectory sampled at uniform solver steps.
pub fn record_snapshots(
    trajectory: &[(f64, Vec<f64>)],
    start: f64,
    interval: f64,
) -> Result<SnapshotSet, FomError> {
    if trajectory.len() < 2 {
        return Err(FomError::Config("trajectory needs at least two states".into()));
    }
    let dt = trajectory[1].0 - trajectory[0].0;
    if dt <= 0.0 {
        return Err(FomError::Config("trajectory times must increase".into()));
    }
    let ratio = interval / dt;
    let every = ratio.round();
    if every < 1.0 || (ratio - every).abs() > 1e-9 * ratio.max(1.0) {
        return Err(FomError::Config(format!(
            "snapshot interval {interval} is not a multiple of dt = {dt}"
        )));
    }
    let every = every as usize;
    let t_first = trajectory[0].0;
    let start_ratio = (start - t_first) / dt;
    let start_step = start_ratio.round();
    if (start_ratio - start_step).abs() > 1e-9 * start_ratio.abs().max(1.0) || start_step < 0.0 {
        return Err(FomError::Config(format!(
            "snapshot start {start} is not on the dt = {dt} grid"
        )));
    }
    let start_step = start_step as usize;
    if start_step >= trajectory.len() {
        return Err(FomError::Config(format!(
            "snapshot start {start} lies past the trajectory end"
        )));
    }
    let columns: Vec<Vec<f64>> = trajectory[start_step..]
        .iter()
        .step_by(every)
        .map(|(_, u)| u.clone())
        .collect();
    Ok(SnapshotSet {
        n_vel: trajectory[0].1.len(),
        j_s: 1,
        n_per: columns.len(),
        t0: trajectory[start_step].0,
        dt_snap: interval,
        columns,
    })
}

/// Streaming counterpart of [`record_snapshots`] for the run loops.
pub struct SnapshotRecorder {
    every: usize,
    start_step: usize,
    pub columns: Vec<Vec<f64>>,
}

impl SnapshotRecorder {
    pub fn new(t0: f64, dt: f64, start: f64, interval: f64) -> Result<SnapshotRecorder, FomError> {
        let ratio = interval / dt;
        let every = ratio.round();
        if every < 1.0 || (ratio - every).abs() > 1e-9 * ratio.max(1.0) {
            return Err(FomError::Config(format!(
                "snapshot interval {interval} is not a multiple of dt = {dt}"
            )));
        }
        let sratio = (start - t0) / dt;
        let start_step = sratio.round();
        if (sratio - start_step).abs() > 1e-9 * sratio.abs().max(1.0) || start_step < 0.0 {
            return Err(FomError::Config(format!(
                "snapshot start {start} is not on the dt = {dt} grid"
            )));
        }
        Ok(SnapshotRecorder {
            every: every as usize,
            start_step: start_step as usize,
            columns: Vec::new(),
        })
    }

    pub fn offer(&mut self, step: usize, u: &[f64]) {
        if step >= self.start_step && (step - self.start_step) % self.every == 0 {
            self.columns.push(u.to_vec());
        }
    }
}

/// Snapshot container file:
/// `snapshots <K> <J_S> <N_S+1> <t0> <dt_snap>` then one column per line.
pub fn save_snapshots(set: &SnapshotSet) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    writeln!(
        out,
        "snapshots {} {} {} {:.16e} {:.16e}",
        set.n_vel, set.j_s, set.n_per, set.t0, set.dt_snap
    )
    .unwrap();
    for col in &set.columns {
        let mut first = true;
        for v in col {
            if !first {
                out.push(' ');
            }
            write!(out, "{v:.16e}").unwrap();
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn load_snapshots(text: &str) -> Result<SnapshotSet, FomError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(FomError::Parse {
        line: 1,
        msg: "empty snapshot file".into(),
    })?;
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 6 || f[0] != "snapshots" {
        return Err(FomError::Parse {
            line: 1,
            msg: "expected `snapshots <K> <J_S> <Np> <t0> <dt>`".into(),
        });
    }
    let parse =
        |s: &str, line: usize| -> Result<f64, FomError> {
            s.parse().map_err(|_| FomError::Parse {
                line: line + 1,
                msg: format!("bad number `{s}`"),
            })
        };
    let n_vel = parse(f[1], 0)? as usize;
    let j_s = parse(f[2], 0)? as usize;
    let n_per = parse(f[3], 0)? as usize;
    let t0 = parse(f[4], 0)?;
    let dt_snap = parse(f[5], 0)?;
    let mut columns = Vec::with_capacity(j_s * n_per);
    for _ in 0..j_s * n_per {
        let (no, line) = lines.next().ok_or(FomError::Parse {
            line: j_s * n_per + 1,
            msg: "missing snapshot column".into(),
        })?;
        let col: Result<Vec<f64>, FomError> =
            line.split_whitespace().map(|s| parse(s, no)).collect();
        let col = col?;
        if col.len() != n_vel {
            return Err(FomError::Parse {
                line: no + 1,
                msg: format!("column has {} values, expected {n_vel}", col.len()),
            });
        }
        columns.push(col);
    }
    Ok(SnapshotSet {
        n_vel,
        j_s,
        n_per,
        t0,
        dt_snap,
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::oracle;
    use crate::linsolve::norm2;
    use crate::mesh::{generate_offset_annulus, Point2};
    use rand::prelude::*;

    fn desk_space(h: f64) -> TaylorHoodSpace {
        let mesh = generate_offset_annulus(1.0, 0.1, Point2::new(0.5, 0.0), h).unwrap();
        TaylorHoodSpace::new(mesh)
    }

    #[test]
    fn stokes_zero_force_gives_zero() {
        let space = desk_space(0.3);
        let ops = build_fom_operators(&space);
        let mut ledger = SolveLedger::new();
        let (u, p) = solve_steady_stokes(&space, &ops, 0.002, &ForceField::Zero, &mut ledger).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stokes_gradient_force_absorbed_by_pressure() {
        let space = desk_space(0.3);
        let ops = build_fom_operators(&space);
        let mut ledger = SolveLedger::new();
        // f = grad(2x + 3y) = (2, 3)
        let (u, p) =
            solve_steady_stokes(&space, &ops, 0.01, &ForceField::Constant(2.0, 3.0), &mut ledger)
                .unwrap();
        let u_norm = norm2(&u);
        assert!(u_norm <= 1e-9, "velocity norm {u_norm:e}");
        let phi = space.interpolate_pressure(|x, y| 2.0 * x + 3.0 * y);
        let total: f64 = ops.pressure_ones.iter().sum();
        let mean: f64 = ops
            .pressure_ones
            .iter()
            .zip(&phi)
            .map(|(c, v)| c * v)
            .sum::<f64>()
            / total;
        let worst = p
            .iter()
            .zip(&phi)
            .map(|(got, want)| (got - (want - mean)).abs())
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-8, "pressure error {worst:e}");
    }

    #[test]
    fn stokes_rotational_force_is_discretely_divergence_free() {
        let space = desk_space(0.25);
        let ops = build_fom_operators(&space);
        let mut ledger = SolveLedger::new();
        let (u, _) =
            solve_steady_stokes(&space, &ops, 0.002, &ForceField::Rotational, &mut ledger).unwrap();
        let bu = ops.divergence.matvec(&u);
        assert!(norm2(&bu) <= 1e-9, "||Bu|| = {:e}", norm2(&bu));
        for &d in space.constrained_dofs() {
            assert_eq!(u[d], 0.0);
        }
    }

    #[test]
    fn backward_euler_zero_stays_zero() {
        let space = desk_space(0.3);
        let ops = build_fom_operators(&space);
        let mut ledger = SolveLedger::new();
        let mut cache = SymbolicCache::new();
        let zero = space.zero_velocity();
        let (u1, _) = step_backward_euler(
            &space, &ops, &zero, 0.002, &ForceField::Zero, 0.0, 0.01, &mut cache, &mut ledger, 0,
        )
        .unwrap();
        assert!(u1.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_euler_energy_decays_without_forcing() {
        let space = desk_space(0.3);
        let ops = build_fom_operators(&space);
        let mut ledger = SolveLedger::new();
        let mut cache = SymbolicCache::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut u: Vec<f64> = (0..space.n_vel()).map(|_| rng.gen::<f64>() - 0.5).collect();
        space.zero_constrained(&mut u);
        let mut energy = 0.5 * ops.mass.bilinear(&u, &u);
        for step in 0..5 {
            let (next, _) = step_backward_euler(
                &space, &ops, &u, 0.002, &ForceField::Zero, 0.0, 0.01, &mut cache, &mut ledger,
                step,
            )
            .unwrap();
            u = next;
            let e_next = 0.5 * ops.mass.bilinear(&u, &u);
            assert!(e_next <= energy * (1.0 + 1e-12), "{e_next} > {energy}");
            energy = e_next;
        }
    }

    #[test]
    fn backward_euler_local_error_is_second_order() {
        let space = desk_space(0.3);
        let ops = build_fom_operators(&space);
        let mut ledger = SolveLedger::new();
        let mut cache = SymbolicCache::new();
        let (u0, _) =
            solve_steady_stokes(&space, &ops, 0.02, &ForceField::Rotational, &mut ledger).unwrap();
        let nu = 0.02;
        let f = ForceField::Rotational;
        let local_error = |dt: f64, cache: &mut SymbolicCache, ledger: &mut SolveLedger| {
            let (full, _) =
                step_backward_euler(&space, &ops, &u0, nu, &f, 0.0, dt, cache, ledger, 0).unwrap();
            let (half1, _) = step_backward_euler(
                &space, &ops, &u0, nu, &f, 0.0, dt / 2.0, cache, ledger, 0,
            )
            .unwrap();
            let (half2, _) = step_backward_euler(
                &space, &ops, &half1, nu, &f, dt / 2.0, dt / 2.0, cache, ledger, 0,
            )
            .unwrap();
            let diff: Vec<f64> = full.iter().zip(&half2).map(|(a, b)| a - b).collect();
            norm2(&diff)
        };
        let e1 = local_error(0.08, &mut cache, &mut ledger);
        let e2 = local_error(0.04, &mut cache, &mut ledger);
        let ratio = e1 / e2;
        assert!(
            (2.5..6.0).contains(&ratio),
            "local error ratio {ratio} (e1 = {e1:e}, e2 = {e2:e})"
        );
    }

    #[test]
    fn ensemble_j1_equals_backward_euler_bitwise() {
        let space = desk_space(0.3);
        let ops = build_fom_operators(&space);
        let mut ledger = SolveLedger::new();
        let (u0, _) =
            solve_steady_stokes(&space, &ops, 0.002, &ForceField::Rotational, &mut ledger).unwrap();
        let state = EnsembleState {
            t: 0.0,
            members: vec![EnsembleMember {
                velocity: u0.clone(),
                pressure: vec![0.0; space.n_pr()],
                viscosity: 0.002,
                force: ForceField::Rotational,
            }],
        };
        let mut cache1 = SymbolicCache::new();
        let next = step_ensemble(&space, &ops, &state, 0.01, &mut cache1, &mut ledger, 0).unwrap();
        let mut cache2 = SymbolicCache::new();
        let (be, _) = step_backward_euler(
            &space,
            &ops,
            &u0,
            0.002,
            &ForceField::Rotational,
            0.0,
            0.01,
            &mut cache2,
            &mut ledger,
            0,
        )
        .unwrap();
        for (a, b) in next.members[0].velocity.iter().zip(&be) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn ensemble_identical_members_stay_identical() {
        let space = desk_space(0.3);
        let ops = build_fom_operators(&space);
        let mut ledger = SolveLedger::new();
        let (u0, _) =
            solve_steady_stokes(&space, &ops, 0.002, &ForceField::Rotational, &mut ledger).unwrap();
        let member = EnsembleMember {
            velocity: u0,
            pressure: vec![0.0; space.n_pr()],
            viscosity: 0.002,
            force: ForceField::Rotational,
        };
        let mut state = EnsembleState {
            t: 0.0,
            members: vec![member.clone(), member],
        };
        let mut cache = SymbolicCache::new();
        for step in 0..3 {
            state = step_ensemble(&space, &ops, &state, 0.01, &mut cache, &mut ledger, step).unwrap();
            for (a, b) in state.members[0]
                .velocity
                .iter()
                .zip(&state.members[1].velocity)
            {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn ensemble_counts_one_factorization_per_step() {
        let space = desk_space(0.3);
        let ops = build_fom_operators(&space);
        let mut ledger = SolveLedger::new();
        let (u1, _) =
            solve_steady_stokes(&space, &ops, 0.0016, &ForceField::Rotational, &mut ledger).unwrap();
        let (u2, _) =
            solve_steady_stokes(&space, &ops, 0.002, &ForceField::Rotational, &mut ledger).unwrap();
        let mut state = EnsembleState {
            t: 0.0,
            members: vec![
                EnsembleMember {
                    velocity: u1,
                    pressure: vec![0.0; space.n_pr()],
                    viscosity: 0.0016,
                    force: ForceField::Rotational,
                },
                EnsembleMember {
                    velocity: u2,
                    pressure: vec![0.0; space.n_pr()],
                    viscosity: 0.002,
                    force: ForceField::Rotational,
                },
            ],
        };
        let mut cache = SymbolicCache::new();
        let before = ledger;
        let n_steps = 3;
        for step in 0..n_steps {
            state = step_ensemble(&space, &ops, &state, 0.01, &mut cache, &mut ledger, step).unwrap();
        }
        assert_eq!(ledger.factorizations - before.factorizations, n_steps as u64);
        assert_eq!(ledger.solves - before.solves, 2 * n_steps as u64);
        // iterates stay discretely divergence-free with exact boundary zeros
        for m in &state.members {
            let bu = ops.divergence.matvec(&m.velocity);
            assert!(norm2(&bu) <= 1e-8);
            for &d in space.constrained_dofs() {
                assert_eq!(m.velocity[d], 0.0);
            }
        }
    }

    #[test]
    fn ensemble_member_permutation_permutes_outputs() {
        let space = desk_space(0.35);
        let ops = build_fom_operators(&space);
        let mut ledger = SolveLedger::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        let mut members = Vec::new();
        for nu in [0.0016, 0.002, 0.0024] {
            let mut v: Vec<f64> = (0..space.n_vel()).map(|_| rng.gen::<f64>() - 0.5).collect();
            space.zero_constrained(&mut v);
            members.push(EnsembleMember {
                velocity: v,
                pressure: vec![0.0; space.n_pr()],
                viscosity: nu,
                force: ForceField::Rotational,
            });
        }
        let fwd = EnsembleState {
            t: 0.0,
            members: members.clone(),
        };
        let rev = EnsembleState {
            t: 0.0,
            members: members.into_iter().rev().collect(),
        };
        let mut c1 = SymbolicCache::new();
        let mut c2 = SymbolicCache::new();
        let a = step_ensemble(&space, &ops, &fwd, 0.01, &mut c1, &mut ledger, 0).unwrap();
        let b = step_ensemble(&space, &ops, &rev, 0.01, &mut c2, &mut ledger, 0).unwrap();
        for j in 0..3 {
            for (x, y) in a.members[j]
                .velocity
                .iter()
                .zip(&b.members[2 - j].velocity)
            {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn ensemble_scheme_satisfies_weak_form() {
        // one step of the J = 2 scheme, residual-checked against the weak
        // form evaluated by independent quadrature on interior test fields
        let space = desk_space(0.35);
        let ops = build_fom_operators(&space);
        let mut ledger = SolveLedger::new();
        let (u1, _) =
            solve_steady_stokes(&space, &ops, 0.0016, &ForceField::Rotational, &mut ledger).unwrap();
        let (u2, _) =
            solve_steady_stokes(&space, &ops, 0.002, &ForceField::Rotational, &mut ledger).unwrap();
        let state = EnsembleState {
            t: 0.0,
            members: vec![
                EnsembleMember {
                    velocity: u1.clone(),
                    pressure: vec![0.0; space.n_pr()],
                    viscosity: 0.0016,
                    force: ForceField::Rotational,
                },
                EnsembleMember {
                    velocity: u2.clone(),
                    pressure: vec![0.0; space.n_pr()],
                    viscosity: 0.002,
                    force: ForceField::Rotational,
                },
            ],
        };
        let dt = 0.01;
        let mut cache = SymbolicCache::new();
        let next = step_ensemble(&space, &ops, &state, dt, &mut cache, &mut ledger, 0).unwrap();

        let mean = state.mean_velocity();
        let nu_max = 0.002f64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for (j, (old, nu)) in [(u1, 0.0016), (u2, 0.002)].into_iter().enumerate() {
            let new = &next.members[j].velocity;
            let p_new = &next.members[j].pressure;
            for _ in 0..3 {
                // random discretely admissible test function (zero on the boundary)
                let mut v: Vec<f64> =
                    (0..space.n_vel()).map(|_| rng.gen::<f64>() - 0.5).collect();
                space.zero_constrained(&mut v);
                let dudt: Vec<f64> = new
                    .iter()
                    .zip(&old)
                    .map(|(a, b)| (a - b) / dt)
                    .collect();
                let fluct: Vec<f64> = old.iter().zip(&mean).map(|(a, b)| a - b).collect();
                let mut residual = oracle::l2_inner(&space, &dudt, &v);
                residual += oracle::trilinear_bstar(&space, &mean, new, &v);
                residual += oracle::trilinear_bstar(&space, &fluct, &old, &v);
                residual += nu_max * oracle::h1_inner(&space, new, &v);
                residual += (nu - nu_max) * oracle::h1_inner(&space, &old, &v);
                // -(p, div v) via the assembled divergence acting on v
                let bv = ops.divergence.matvec(&v);
                residual -= crate::linsolve::dot(p_new, &bv);
                residual -= oracle::force_inner(&space, &ForceField::Rotational, dt, &v);
                let scale = norm2(&v) * (1.0 / dt);
                assert!(
                    residual.abs() <= 1e-8 * scale.max(1.0),
                    "weak-form residual {residual:e} for member {j}"
                );
            }
        }
    }

    #[test]
    fn snapshot_counts_match_experiment_arithmetic() {
        // start 3, interval 0.04, T 6, dt 0.01 -> 76 snapshots
        let dt = 0.01;
        let n_steps = 600;
        let traj: Vec<(f64, Vec<f64>)> = (0..=n_steps)
            .map(|k| (k as f64 * dt, vec![k as f64]))
            .collect();
        let set = record_snapshots(&traj, 3.0, 0.04).unwrap();
        assert_eq!(set.n_per, 76);
        let merged = SnapshotSet::merge(vec![set.clone(), set]).unwrap();
        assert_eq!(merged.j_s, 2);
        assert_eq!(merged.n_columns(), 152);
    }

    #[test]
    fn snapshot_interval_must_divide() {
        let traj: Vec<(f64, Vec<f64>)> = (0..=10)
            .map(|k| (k as f64 * 0.02, vec![0.0]))
            .collect();
        assert!(matches!(
            record_snapshots(&traj, 0.0, 0.03),
            Err(FomError::Config(_))
        ));
    }

    #[test]
    fn snapshot_file_round_trip() {
        let set = SnapshotSet {
            n_vel: 3,
            j_s: 2,
            n_per: 2,
            t0: 3.0,
            dt_snap: 0.04,
            columns: vec![
                vec![1.0, 2.0, 3.0],
                vec![0.1, -0.25, 1.0 / 3.0],
                vec![4.0, 5.0, 6.0],
                vec![7.0, 8.0, 9.0],
            ],
        };
        let text = save_snapshots(&set);
        let again = load_snapshots(&text).unwrap();
        assert_eq!(again.j_s, 2);
        assert_eq!(again.n_per, 2);
        for (a, b) in set.columns.iter().zip(&again.columns) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}

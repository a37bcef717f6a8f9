//! Reduced-order machinery: the differential spatial filter on the POD
//! space, the ensemble-POD time stepper, its Leray-regularized variant in
//! which both advecting fields are filtered, and the discrete energy
//! stability monitor.

use crate::fem::{ForceField, TaylorHoodSpace};
use crate::linsolve::{
    dot, factorize, factorize_dense, norm2, Factorization, LinSolveError, SolveLedger,
};
use crate::pod::{PodBasis, ReducedOperators};
use faer::Mat;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RomError {
    #[error("solver failure at step {step}: {source}")]
    Solver {
        step: usize,
        source: LinSolveError,
    },
    #[error("degenerate viscosity uncertainty (epsilon = 0)")]
    DegenerateEpsilon,
    #[error("invariant violated on sample {sample}: {what}")]
    InvariantViolation { sample: usize, what: String },
}

/// The ROM differential filter: v |-> (delta^2 S_R + I)^{-1} v in reduced
/// coordinates. With delta = 0 it is the identity map on the POD space.
pub struct FilterOperator {
    pub delta: f64,
    fact: Option<Factorization>,
    basis: Arc<PodBasis>,
}

pub fn build_filter(
    ops: &ReducedOperators,
    delta: f64,
    ledger: &mut SolveLedger,
) -> Result<FilterOperator, RomError> {
    let fact = if delta == 0.0 {
        None
    } else {
        let r = ops.r;
        let d2 = delta * delta;
        let m = Mat::from_fn(r, r, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            d2 * ops.s_r[(i, j)] + id
        });
        Some(
            factorize_dense(&m, ledger)
                .map_err(|source| RomError::Solver { step: 0, source })?,
        )
    };
    Ok(FilterOperator {
        delta,
        fact,
        basis: Arc::clone(&ops.basis),
    })
}

impl FilterOperator {
    /// Filters reduced coordinates.
    pub fn apply(&self, a: &[f64], ledger: &mut SolveLedger) -> Result<Vec<f64>, RomError> {
        match &self.fact {
            None => Ok(a.to_vec()),
            Some(f) => f
                .solve(a, ledger)
                .map_err(|source| RomError::Solver { step: 0, source }),
        }
    }

    /// Filters a full-order field: (delta^2 S_R + I)^{-1} Phi^T M v.
    pub fn apply_full(&self, v: &[f64], ledger: &mut SolveLedger) -> Result<Vec<f64>, RomError> {
        let coords = crate::pod::project_l2(&self.basis, v);
        self.apply(&coords, ledger)
    }

    pub fn basis(&self) -> &Arc<PodBasis> {
        &self.basis
    }
}

/// Reduced coordinates of all realizations at one time level.
#[derive(Clone, Debug)]
pub struct RomEnsembleState {
    pub t: f64,
    pub coords: Vec<Vec<f64>>,
    pub viscosities: Vec<f64>,
}

impl RomEnsembleState {
    pub fn nu_max(&self) -> f64 {
        self.viscosities.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Permutation-invariant ensemble mean (entries summed in value order).
    pub fn mean_coords(&self) -> Vec<f64> {
        crate::linsolve::permutation_invariant_mean(&self.coords)
    }
}

/// Shared stepper for the plain and Leray variants: `filter = None` leaves
/// the advecting fields unfiltered, which coincides bit for bit with a
/// delta = 0 filter.
fn step_filtered(
    state: &RomEnsembleState,
    ops: &ReducedOperators,
    dt: f64,
    filter: Option<&FilterOperator>,
    ledger: &mut SolveLedger,
    step_index: usize,
) -> Result<RomEnsembleState, RomError> {
    let r = ops.r;
    let j_count = state.coords.len();
    let nu_max = state.nu_max();
    let t_next = state.t + dt;
    let mean = state.mean_coords();

    let advect_mean = match filter {
        Some(f) => f.apply(&mean, ledger)?,
        None => mean.clone(),
    };
    let b_mean = ops.convection_matrix(&advect_mean);
    let system = Mat::from_fn(r, r, |i, j| {
        let id = if i == j { 1.0 / dt } else { 0.0 };
        id + b_mean[(i, j)] + nu_max * ops.s_r[(i, j)]
    });
    let fact = factorize_dense(&system, ledger).map_err(|source| RomError::Solver {
        step: step_index,
        source,
    })?;

    let mut rhs_block = Vec::with_capacity(j_count);
    for (j, a) in state.coords.iter().enumerate() {
        let fluct: Vec<f64> = a.iter().zip(&mean).map(|(x, m)| x - m).collect();
        let advect_fluct = match filter {
            Some(f) => f.apply(&fluct, ledger)?,
            None => fluct,
        };
        let b_fluct = ops.convection_matrix(&advect_fluct);
        let gap = state.viscosities[j] - nu_max;
        let f_r = ops.force_at(j, t_next);
        let mut rhs = vec![0.0; r];
        for i in 0..r {
            let mut conv = 0.0;
            let mut visc = 0.0;
            for l in 0..r {
                conv += b_fluct[(i, l)] * a[l];
                visc += ops.s_r[(i, l)] * a[l];
            }
            rhs[i] = a[i] / dt - conv - gap * visc + f_r[i];
        }
        rhs_block.push(rhs);
    }
    let coords = fact
        .solve_many(&rhs_block, ledger)
        .map_err(|source| RomError::Solver {
            step: step_index,
            source,
        })?;
    Ok(RomEnsembleState {
        t: t_next,
        coords,
        viscosities: state.viscosities.clone(),
    })
}

/// One step of the ensemble-POD scheme: the shared R x R matrix carries the
/// lagged ensemble mean and the maximum viscosity; per-realization
/// fluctuation convection and the viscosity gap stay explicit.
pub fn step_ensemble_pod(
    state: &RomEnsembleState,
    ops: &ReducedOperators,
    dt: f64,
    ledger: &mut SolveLedger,
    step_index: usize,
) -> Result<RomEnsembleState, RomError> {
    step_filtered(state, ops, dt, None, ledger, step_index)
}

/// One step of the Leray ensemble-POD scheme: identical to
/// [`step_ensemble_pod`] except both advecting fields (the ensemble mean and
/// each fluctuation) pass through the differential filter.
pub fn step_leray_ensemble_pod(
    state: &RomEnsembleState,
    ops: &ReducedOperators,
    dt: f64,
    filter: &FilterOperator,
    ledger: &mut SolveLedger,
    step_index: usize,
) -> Result<RomEnsembleState, RomError> {
    step_filtered(state, ops, dt, Some(filter), ledger, step_index)
}

/// Checks the filter stability inequalities on reduced and general
/// full-order samples: the filter never increases the L2 norm, never
/// increases the gradient norm on the POD space, and obeys the inverse
/// estimate bound on general fields.
pub struct FilterStabilityReport {
    pub reduced_checked: usize,
    pub full_checked: usize,
}

pub fn filter_stability_check(
    filter: &FilterOperator,
    ops: &ReducedOperators,
    reduced_samples: &[Vec<f64>],
    full_samples: &[Vec<f64>],
    ledger: &mut SolveLedger,
) -> Result<FilterStabilityReport, RomError> {
    let slack = 1.0 + 1e-12;
    for (k, a) in reduced_samples.iter().enumerate() {
        let filtered = filter.apply(a, ledger)?;
        let l2_in = norm2(a);
        let l2_out = norm2(&filtered);
        if l2_out > l2_in * slack {
            return Err(RomError::InvariantViolation {
                sample: k,
                what: format!("||filtered|| = {l2_out} > ||u|| = {l2_in}"),
            });
        }
        let g_in = ops.grad_norm_sq(a);
        let g_out = ops.grad_norm_sq(&filtered);
        if g_out > g_in * slack * slack {
            return Err(RomError::InvariantViolation {
                sample: k,
                what: format!("||grad filtered||^2 = {g_out} > ||grad u||^2 = {g_in}"),
            });
        }
    }
    let mass = &ops.basis.mass;
    for (k, v) in full_samples.iter().enumerate() {
        let filtered = filter.apply_full(v, ledger)?;
        let l2_in = mass.bilinear(v, v).sqrt();
        let l2_out = norm2(&filtered);
        if l2_out > l2_in * slack {
            return Err(RomError::InvariantViolation {
                sample: k,
                what: format!("full sample: ||filtered|| = {l2_out} > ||u|| = {l2_in}"),
            });
        }
        let g_out = ops.grad_norm_sq(&filtered).sqrt();
        if g_out > ops.s_norm.sqrt() * l2_in * slack {
            return Err(RomError::InvariantViolation {
                sample: k,
                what: format!(
                    "full sample: ||grad filtered|| = {g_out} > |S_R|_2^(1/2) ||u|| = {}",
                    ops.s_norm.sqrt() * l2_in
                ),
            });
        }
    }
    Ok(FilterStabilityReport {
        reduced_checked: reduced_samples.len(),
        full_checked: full_samples.len(),
    })
}

/// Per-step, per-realization record of the stability condition and energy
/// bound. `condition_lhs` is the computable factor
/// (dt / nu_max) |S_R|_2^(1/2) ||grad(filtered fluctuation)||^2 with the
/// form constant set to one; the condition holds when it is at most
/// `condition_rhs` = epsilon.
#[derive(Clone, Copy, Debug)]
pub struct StabilityRecord {
    pub step: usize,
    pub t: f64,
    pub j: usize,
    pub eps: f64,
    pub condition_lhs: f64,
    pub condition_rhs: f64,
    pub energy_lhs: f64,
    pub c_stab: f64,
}

/// Accumulates the discrete energy inequality over a run:
///
/// 1/2 ||u^N||^2 + (nu_max dt / 2) ||grad u^N||^2
///   + (eps nu_max dt / 4) sum ||u^{n+1}||^2
///   <= sum dt/(nu_max eps) ||f^{n+1}||_{-1,h}^2
///      + 1/2 ||u^0||^2 + (nu_max dt / 2) ||grad u^0||^2
///
/// with the discrete dual norm ||f||_{-1,h}^2 = l^T A^+ l evaluated through
/// the constrained stiffness matrix.
pub struct StabilityMonitor {
    eps: f64,
    nu_max: f64,
    dt: f64,
    s_norm: f64,
    s_r: Mat<f64>,
    forces: Vec<ForceField>,
    stiff_fact: Factorization,
    constrained: Vec<usize>,
    space: Arc<TaylorHoodSpace>,
    init_terms: Vec<f64>,
    sum_a_sq: Vec<f64>,
    dual_sum: Vec<f64>,
    static_dual: Vec<Option<f64>>,
    step: usize,
}

impl StabilityMonitor {
    pub fn new(
        ops: &ReducedOperators,
        forces: &[ForceField],
        initial: &RomEnsembleState,
        dt: f64,
        ledger: &mut SolveLedger,
    ) -> Result<StabilityMonitor, RomError> {
        let nu_max = initial.nu_max();
        let nu_min = initial
            .viscosities
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !(nu_min > 0.0) || !(nu_max > 0.0) {
            return Err(RomError::DegenerateEpsilon);
        }
        // Eq. (4.1) rearranged: eps = 1 - max_j |nu_j - nu_max| / nu_max,
        // which equals nu_min / nu_max
        let eps = nu_min / nu_max;
        if eps == 0.0 {
            return Err(RomError::DegenerateEpsilon);
        }
        let space = Arc::clone(&ops.basis.space);
        let stiffness = crate::fem::assembly::assemble_stiffness(&space);
        let constrained_stiffness =
            crate::fem::assembly::constrain_matrix(&stiffness, space.constrained_dofs());
        let stiff_fact = factorize(&constrained_stiffness, ledger)
            .map_err(|source| RomError::Solver { step: 0, source })?;

        let grad_sq = |a: &[f64]| -> f64 {
            let r = ops.r;
            let mut acc = 0.0;
            for i in 0..r {
                let mut row = 0.0;
                for jj in 0..r {
                    row += ops.s_r[(i, jj)] * a[jj];
                }
                acc += a[i] * row;
            }
            acc
        };
        let init_terms = initial
            .coords
            .iter()
            .map(|a| {
                let l2 = dot(a, a);
                0.5 * l2 + 0.5 * nu_max * dt * grad_sq(a)
            })
            .collect();

        Ok(StabilityMonitor {
            eps,
            nu_max,
            dt,
            s_norm: ops.s_norm,
            s_r: ops.s_r.clone(),
            forces: forces.to_vec(),
            stiff_fact,
            constrained: space.constrained_dofs().to_vec(),
            space,
            init_terms,
            sum_a_sq: vec![0.0; initial.coords.len()],
            dual_sum: vec![0.0; initial.coords.len()],
            static_dual: vec![None; initial.coords.len()],
            step: 0,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn grad_norm_sq(&self, a: &[f64]) -> f64 {
        let r = self.s_r.nrows();
        let mut acc = 0.0;
        for i in 0..r {
            let mut row = 0.0;
            for j in 0..r {
                row += self.s_r[(i, j)] * a[j];
            }
            acc += a[i] * row;
        }
        acc
    }

    /// Discrete dual norm squared of the load at time t.
    fn dual_norm_sq(
        &mut self,
        j: usize,
        t: f64,
        ledger: &mut SolveLedger,
    ) -> Result<f64, RomError> {
        if let Some(v) = self.static_dual[j] {
            if !self.forces[j].time_dependent() {
                return Ok(v);
            }
        }
        let mut load = crate::fem::assembly::assemble_load(&self.space, &self.forces[j], t);
        for &d in &self.constrained {
            load[d] = 0.0;
        }
        let z = self
            .stiff_fact
            .solve(&load, ledger)
            .map_err(|source| RomError::Solver { step: self.step, source })?;
        let v = dot(&load, &z);
        if !self.forces[j].time_dependent() {
            self.static_dual[j] = Some(v);
        }
        Ok(v)
    }

    /// Records one accepted step `prev -> next`, returning a record per
    /// realization. The condition factor uses the filtered fluctuation at
    /// the previous level, matching the scheme's advecting field.
    pub fn on_step(
        &mut self,
        prev: &RomEnsembleState,
        next: &RomEnsembleState,
        filter: &FilterOperator,
        ledger: &mut SolveLedger,
    ) -> Result<Vec<StabilityRecord>, RomError> {
        self.step += 1;
        let mean_prev = prev.mean_coords();
        let t_next = next.t;
        let mut records = Vec::with_capacity(prev.coords.len());
        for j in 0..prev.coords.len() {
            let fluct: Vec<f64> = prev.coords[j]
                .iter()
                .zip(&mean_prev)
                .map(|(a, m)| a - m)
                .collect();
            let filtered = filter.apply(&fluct, ledger)?;
            let condition_lhs =
                self.dt / self.nu_max * self.s_norm.sqrt() * self.grad_norm_sq(&filtered);

            self.sum_a_sq[j] += dot(&next.coords[j], &next.coords[j]);
            let dual = self.dual_norm_sq(j, t_next, ledger)?;
            self.dual_sum[j] += self.dt / (self.nu_max * self.eps) * dual;

            let a_n = &next.coords[j];
            let energy_lhs = 0.5 * dot(a_n, a_n)
                + 0.5 * self.nu_max * self.dt * self.grad_norm_sq(a_n)
                + 0.25 * self.eps * self.nu_max * self.dt * self.sum_a_sq[j];
            let c_stab = self.dual_sum[j] + self.init_terms[j];
            records.push(StabilityRecord {
                step: self.step,
                t: t_next,
                j,
                eps: self.eps,
                condition_lhs,
                condition_rhs: self.eps,
                energy_lhs,
                c_stab,
            });
        }
        Ok(records)
    }
}

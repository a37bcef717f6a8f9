//! Desk-scale toolkit for 2D incompressible Navier-Stokes ensembles:
//! a Taylor-Hood full-order solver with a shared-matrix ensemble time
//! stepper, POD model reduction built from trajectory snapshots, and the
//! Leray-regularized ensemble-POD method with its differential filter and
//! energy-stability monitor.
//!
//! The `harness` module and the `enspod` binary reproduce the offset-
//! cylinder experiment end to end: a steady Stokes start, backward Euler
//! trajectories per viscosity, snapshot collection, POD basis and reduced
//! operators, and the online comparison of the plain and Leray reduced
//! ensembles against the full-order benchmark.

pub mod fem;
pub mod fom;
pub mod harness;
pub mod linsolve;
pub mod mesh;
pub mod pod;
pub mod rom;

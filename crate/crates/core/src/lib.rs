//! Saddle-node bifurcation toolkit.
//!
//! Locates and characterises saddle-node (fold) bifurcations of scalar and
//! planar ODE systems. Beyond the classical genericity checks it computes the
//! two numbers that pin down the local dynamics quantitatively: the speed
//! coefficient `p0² = ½|f_μ f_xx|` and Takens' coefficient
//! `a0 = 2 f_xxx / (3 f_xx²)`, matches the extended normal form
//! `ẏ = ν(μ) − y² + a(μ) y³` to a given family by equating multipliers on the
//! two local equilibria, constructs the differentiable conjugacy between the
//! family and its matched normal form numerically, reduces planar folds to the
//! centre manifold, and continues fold branches in two parameters.
//!
//! The crate is organised bottom-up:
//!
//! - [`jets`]: truncated Taylor arithmetic (exact higher derivatives),
//! - [`exprlang`]: the ODE right-hand-side expression language,
//! - [`models`]: built-in and user-defined models, derivative bundles,
//! - [`flow`]: adaptive Runge-Kutta flows and time-of-flight queries,
//! - [`sn_core`]: equilibrium and fold location, bifurcation numbers,
//! - [`formal_nf`]: formal reduction of polynomial vector fields to
//!   `−y² + a y³`,
//! - [`nf_match`]: the ν(μ), a(μ) matching equations,
//! - [`conjugacy`]: numerical conjugacies and their defect,
//! - [`centre_manifold`]: planar-to-scalar reduction at a fold,
//! - [`continuation`]: pseudo-arclength fold-branch continuation,
//! - [`cli`]: the command-line front end (see the `takens` binary).

pub mod centre_manifold;
pub mod cli;
pub mod conjugacy;
pub mod continuation;
pub mod exprlang;
pub mod flow;
pub mod formal_nf;
pub mod jets;
pub mod models;
pub mod nf_match;
mod numerics;
pub mod sn_core;
mod svg;

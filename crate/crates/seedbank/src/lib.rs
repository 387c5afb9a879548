//! Wright–Fisher models with a seed bank, the Lyapunov–Schmidt reduction of
//! their deterministic flows onto the attracting diagonal, and the resulting
//! one-dimensional diffusion limits.
//!
//! Module map:
//!
//! * [`model`] — germination distributions and environment parameters;
//! * [`numerics`] — matrix exponential, quadrature, ODE and tridiagonal solvers;
//! * [`reduction`] — the generic manifold-reduction engine;
//! * [`flows`] — the concrete seed-bank flows and their closed forms;
//! * [`branching`] — the multitype branching phase and the ψ_B splice map;
//! * [`diffusion`] — limiting SDEs, Euler–Maruyama, scale functions, `Ψ` and `g`;
//! * [`pde`] — the backward Kolmogorov solver for the logistic environment;
//! * [`wf`] — exact discrete-generation Wright–Fisher simulators;
//! * [`rng`] — reproducible per-replicate random streams.

pub mod branching;
pub mod diffusion;
pub mod flows;
pub mod model;
pub mod numerics;
pub mod pde;
pub mod reduction;
pub mod rng;
pub mod wf;

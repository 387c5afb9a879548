//! Small numerical kernels used by the model code: matrix exponential,
//! quadrature, adaptive ODE stepping, Chebyshev interpolation and a
//! tridiagonal solver.

pub mod cheb;
pub mod expm;
pub mod ode;
pub mod quad;
pub mod tridiag;

//! Backward Kolmogorov equation for the fixation probability of the
//! proportion `ρ₀` in a deterministic logistic environment.
//!
//! With `ξ(t)` solving `dξ/dt = rξ(ξ∞ − ξ)`, `ξ(0) = 1`, the function
//! `u(t, ρ) = P(fixation | ρ₀(t) = ρ)` satisfies
//! `∂u/∂t + μ(ρ, ξ(t))∂u/∂ρ + ½σ²(ρ, ξ(t))∂²u/∂ρ² = 0` with `u(t, 0) = 0` and
//! `u(t, 1) = 1`, where `μ` and `σ` are the coefficients of the proportion
//! form of the slow-environment diffusion with `η ≡ 0`. Once `ξ` has settled
//! the problem is autonomous and its solution is the scale-function solution
//! at `ξ∞`; the solver closes the infinite horizon there and marches back to
//! `t = 0` with Crank–Nicolson.

use serde::{Deserialize, Serialize};

use crate::diffusion::{curvature_fn, DiffusionError};
use crate::model::GerminationDistribution;
use crate::numerics::tridiag::solve_tridiagonal;

/// `|ξ(t) − ξ∞|` below which the environment counts as settled.
pub const XI_SETTLE_TOL: f64 = 1e-8;
/// Largest accepted rate of change `‖∂u/∂t‖∞` at the closing time.
pub const CHANGE_RATE_TOL: f64 = 1e-8;
/// Cell Péclet number above which the first-order term is upwinded.
pub const PECLET_LIMIT: f64 = 2.0;

/// Space-time discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeGrid {
    /// Grid points on `[0, 1]`, endpoints included.
    pub n_space: usize,
    pub dt: f64,
    /// Largest closing time searched before giving up.
    pub t_end: f64,
    /// Implicitness weight (`0.5` is Crank–Nicolson, `1` backward Euler).
    pub theta: f64,
}

impl Default for PdeGrid {
    fn default() -> Self {
        Self { n_space: 401, dt: 1e-3, t_end: 1e3, theta: 0.5 }
    }
}

impl PdeGrid {
    pub fn validate(&self) -> Result<(), DiffusionError> {
        if self.n_space < 51 {
            return Err(DiffusionError::InvalidArgument(format!("n_space must be at least 51, got {}", self.n_space)));
        }
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(DiffusionError::InvalidArgument(format!("dt must lie in (0, 0.01], got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(DiffusionError::InvalidArgument(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(DiffusionError::InvalidArgument(format!("theta must lie in [0.5, 1], got {}", self.theta)));
        }
        Ok(())
    }
}

/// Logistic environment `dξ/dt = rξ(ξ∞ − ξ)` with `ξ(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub r: f64,
    pub xi_inf: f64,
}

impl Logistic {
    /// `ξ(t) = ξ∞/(1 + (ξ∞ − 1)e^{−rξ∞t})`.
    pub fn xi(&self, t: f64) -> f64 {
        self.xi_inf / (1.0 + (self.xi_inf - 1.0) * (-self.r * self.xi_inf * t).exp())
    }

    /// `α(ξ) = rξ(ξ∞ − ξ)`.
    pub fn alpha(&self, xi: f64) -> f64 {
        self.r * xi * (self.xi_inf - xi)
    }
}

/// Solution of the backward problem on the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KolmogorovSolution {
    pub rho: Vec<f64>,
    /// `u(0, ·)` on the grid.
    pub u0: Vec<f64>,
    /// Autonomous solution at `ξ∞` used as the closing condition.
    pub u_closing: Vec<f64>,
    /// Time at which the horizon was closed.
    pub closing_time: f64,
    /// Whether every time slice was non-decreasing in `ρ`.
    pub monotone: bool,
}

impl KolmogorovSolution {
    /// Linear interpolation of `u(0, ·)`.
    pub fn value_at(&self, rho: f64) -> f64 {
        interpolate(&self.rho, &self.u0, rho)
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let h = xs[1] - xs[0];
    let k = ((x - xs[0]) / h).floor().clamp(0.0, (n - 2) as f64) as usize;
    let w = (x - xs[k]) / h;
    (1.0 - w) * ys[k] + w * ys[k + 1]
}

/// Spatial operator at one value of `ξ`: interior rows `(lower, diag, upper)`.
struct Operator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

/// Per-node data independent of time.
struct Nodes {
    h: f64,
    rho: Vec<f64>,
    var: Vec<f64>,
    half_phi2: Vec<f64>,
    c: Vec<f64>,
    big_b: f64,
}

impl Nodes {
    fn operator(&self, xi: f64, alpha: f64) -> Operator {
        let m = self.rho.len() - 2;
        let h = self.h;
        let mut op = Operator { lower: vec![0.0; m], diag: vec![0.0; m], upper: vec![0.0; m] };
        for j in 0..m {
            let i = j + 1;
            let mu = self.var[i] / xi * (self.half_phi2[i] - self.big_b * alpha / self.c[i]);
            let a = 0.5 * self.var[i] / (self.c[i] * self.c[i] * xi);
            let (mut l, mut d, mut u) = (a / (h * h), -2.0 * a / (h * h), a / (h * h));
            if mu.abs() * h > PECLET_LIMIT * a {
                if mu > 0.0 {
                    u += mu / h;
                    d -= mu / h;
                } else {
                    l -= mu / h;
                    d += mu / h;
                }
            } else {
                l -= mu / (2.0 * h);
                u += mu / (2.0 * h);
            }
            op.lower[j] = l;
            op.diag[j] = d;
            op.upper[j] = u;
        }
        op
    }
}

impl Operator {
    /// `(Lu)` on interior nodes for the full vector `u` (boundaries included).
    fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.diag.len())
            .map(|j| self.lower[j] * u[j] + self.diag[j] * u[j + 1] + self.upper[j] * u[j + 2])
            .collect()
    }

    /// Solve `Lu = 0` with `u(0) = 0`, `u(1) = 1`.
    fn steady_state(&self) -> Option<Vec<f64>> {
        let m = self.diag.len();
        let mut rhs = vec![0.0; m];
        rhs[m - 1] = -self.upper[m - 1];
        let inner = solve_tridiagonal(&self.lower, &self.diag, &self.upper, &rhs)?;
        let mut u = Vec::with_capacity(m + 2);
        u.push(0.0);
        u.extend(inner);
        u.push(1.0);
        Some(u)
    }
}

fn is_monotone(u: &[f64]) -> bool {
    u.windows(2).all(|w| w[1] >= w[0] - 1e-12)
}

/// Solve the backward problem on the whole grid.
pub fn kolmogorov_solve(
    d: &GerminationDistribution,
    logistic: Logistic,
    grid: &PdeGrid,
) -> Result<KolmogorovSolution, DiffusionError> {
    grid.validate()?;
    if !(logistic.r > 0.0 && logistic.xi_inf > 0.0) {
        return Err(DiffusionError::InvalidArgument(format!(
            "need r > 0 and xi_inf > 0 (got {}, {})",
            logistic.r, logistic.xi_inf
        )));
    }
    let phi2 = curvature_fn(d)?;
    let n = grid.n_space;
    let h = 1.0 / (n - 1) as f64;
    let rho: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let big_b = d.mean_germination_time();
    let nodes = Nodes {
        h,
        var: rho.iter().map(|r| r * (1.0 - r)).collect(),
        half_phi2: rho.iter().map(|&r| 0.5 * phi2(r)).collect(),
        c: rho.iter().map(|r| big_b * (1.0 - r) + 1.0).collect(),
        rho,
        big_b,
    };
    let op_at = |t: f64| {
        let xi = logistic.xi(t);
        nodes.operator(xi, logistic.alpha(xi))
    };

    let xi_inf = logistic.xi_inf;
    let closing = nodes.operator(xi_inf, 0.0);
    let u_closing = closing.steady_state().ok_or(DiffusionError::NoConvergence { t_end: grid.t_end })?;

    // Closing time: ξ settled and the closing profile (almost) stationary.
    let mut steps = 0usize;
    loop {
        let t = steps as f64 * grid.dt;
        if t > grid.t_end {
            return Err(DiffusionError::NoConvergence { t_end: grid.t_end });
        }
        if (logistic.xi(t) - xi_inf).abs() < XI_SETTLE_TOL {
            let rate = op_at(t).apply(&u_closing).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if rate < CHANGE_RATE_TOL {
                break;
            }
        }
        steps += 1;
    }

    let m = n - 2;
    let th = grid.theta;
    let dt = grid.dt;
    let mut u = u_closing.clone();
    let mut monotone = is_monotone(&u);
    let mut op_next = op_at(steps as f64 * dt);
    for k in (0..steps).rev() {
        let op_now = op_at(k as f64 * dt);
        let lu = op_next.apply(&u);
        let mut rhs: Vec<f64> = (0..m).map(|j| u[j + 1] + (1.0 - th) * dt * lu[j]).collect();
        // Boundary value u(1) = 1 moves to the right-hand side.
        rhs[m - 1] += th * dt * op_now.upper[m - 1];
        let lower: Vec<f64> = op_now.lower.iter().map(|v| -th * dt * v).collect();
        let diag: Vec<f64> = op_now.diag.iter().map(|v| 1.0 - th * dt * v).collect();
        let upper: Vec<f64> = op_now.upper.iter().map(|v| -th * dt * v).collect();
        let inner = solve_tridiagonal(&lower, &diag, &upper, &rhs)
            .ok_or(DiffusionError::NoConvergence { t_end: grid.t_end })?;
        u[1..=m].copy_from_slice(&inner);
        monotone &= is_monotone(&u);
        op_next = op_now;
    }
    Ok(KolmogorovSolution { rho: nodes.rho, u0: u, u_closing, closing_time: steps as f64 * dt, monotone })
}

/// `P(fixation | ρ₀(0) = start_rho)` in the logistic environment.
pub fn kolmogorov_fixation(
    d: &GerminationDistribution,
    logistic: Logistic,
    start_rho: f64,
    grid: &PdeGrid,
) -> Result<f64, DiffusionError> {
    if !(start_rho > 0.0 && start_rho < 1.0) {
        return Err(DiffusionError::InvalidArgument(format!("start_rho must lie in (0, 1), got {start_rho}")));
    }
    Ok(kolmogorov_solve(d, logistic, grid)?.value_at(start_rho))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_validated() {
        let g = PdeGrid { n_space: 21, ..PdeGrid::default() };
        assert!(g.validate().is_err());
        let g = PdeGrid { dt: 0.1, ..PdeGrid::default() };
        assert!(g.validate().is_err());
    }

    #[test]
    fn logistic_starts_at_one_and_settles() {
        let l = Logistic { r: 20.0, xi_inf: 1.2 };
        assert!((l.xi(0.0) - 1.0).abs() < 1e-15);
        assert!((l.xi(10.0) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn neutral_solution_is_linear() {
        let d = GerminationDistribution::k1(1.0).unwrap();
        let s = kolmogorov_solve(&d, Logistic { r: 5.0, xi_inf: 0.8 }, &PdeGrid::default()).unwrap();
        assert!(s.u0.iter().zip(&s.rho).all(|(u, r)| (u - r).abs() < 1e-12));
    }
}

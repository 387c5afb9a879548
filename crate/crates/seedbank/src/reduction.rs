//! Reduction of a flow with a one-dimensional attracting manifold of
//! equilibria.
//!
//! Given a vector field `F` whose zero set `Γ` is a curve parametrised by its
//! first coordinate, this module computes at a point of `Γ`:
//!
//! * the null eigenpair `(u, v)` of the Jacobian `J` (`Ju = 0`, `Jᵀv = 0`,
//!   `⟨u, v⟩ = 1`) and the centre/stable projections `P_c = u vᵀ`,
//!   `P_s = I − P_c`;
//! * the curvature matrix `Θ`: the unique symmetric solution of the
//!   semistable Lyapunov equation `JᵀΘ + ΘJ = P_sᵀ(Σ v_i Hess F_i)P_s` with
//!   `Θu = 0`, either by a dense constrained linear solve or by the integral
//!   representation `Θ = −∫₀^∞ e^{Jᵀt} P_sᵀ(Σ v_i Hess F_i)P_s e^{Jt} dt`;
//! * the first and second derivatives of the first coordinate `Φ₀` of the
//!   projection map `Φ(x) = lim_{t→∞} φ(x, t)`;
//! * `Φ(x)` itself, by integrating the flow.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::numerics::expm::expm;
use crate::numerics::ode::{integrate_until, OdeOptions};
use crate::numerics::quad::gauss_legendre;

/// Eigenvalues with modulus below this are treated as zero.
pub const NULL_TOL: f64 = 1e-8;
/// Central-difference step for Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-6;
/// Central-difference step for Hessians.
pub const HESSIAN_STEP: f64 = 1e-4;
/// Central-difference step for the left eigenvector along the chart.
pub const EIGVEC_STEP: f64 = 1e-5;
/// Ratio of smallest to largest singular value below which the Lyapunov
/// system is declared singular.
pub const RANK_TOL: f64 = 1e-12;
/// Integrand max-norm below which the Θ integral is truncated.
pub const TAIL_TOL: f64 = 1e-12;
/// Zero threshold for eigenvalue signs in [`definiteness_of`].
pub const DEFINITENESS_TOL: f64 = 1e-10;

/// Failures of the reduction engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error("point outside the flow domain: coordinate {coord} = {value} not in [{lo}, {hi}]")]
    DomainViolation { coord: usize, value: f64, lo: f64, hi: f64 },
    #[error("point outside the flow domain: {0}")]
    DomainConstraint(String),
    #[error("Jacobian has no eigenvalue within {NULL_TOL:e} of zero; spectrum {eigenvalues:?}")]
    NoNullEigenvalue { eigenvalues: Vec<(f64, f64)> },
    #[error("Jacobian has {count} eigenvalues within {NULL_TOL:e} of zero")]
    MultipleNullEigenvalues { count: usize },
    #[error("spectrum assumption violated (need one zero eigenvalue, the rest in |λ+1| < 1): {eigenvalues:?}")]
    SpectrumViolation { eigenvalues: Vec<(f64, f64)> },
    #[error("Lyapunov system is rank deficient (singular value ratio {ratio:e})")]
    SingularSystem { ratio: f64 },
    #[error("Θ integral did not decay below {TAIL_TOL:e} by t = {t_max}")]
    TruncationNotConverged { t_max: f64 },
    #[error("flow did not settle on the manifold within {steps} steps")]
    NoConvergence { steps: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

// ---------------------------------------------------------------------------
// FlowField
// ---------------------------------------------------------------------------

/// Vector field evaluation (may reject points, e.g. `x₀ > ξ`).
pub type FieldFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>, ReductionError> + Send + Sync>;
/// Analytic Jacobian.
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
/// Analytic Hessians of every component.
pub type HessiansFn = Arc<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;

/// A smooth vector field on an axis-aligned box with optional analytic first
/// and second derivatives.
#[derive(Clone)]
pub struct FlowField {
    dim: usize,
    domain: Vec<(f64, f64)>,
    field: FieldFn,
    jac: Option<JacobianFn>,
    hess: Option<HessiansFn>,
}

impl fmt::Debug for FlowField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlowField")
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("analytic_jacobian", &self.jac.is_some())
            .field("analytic_hessians", &self.hess.is_some())
            .finish()
    }
}

/// Slack allowed on the box when checking the domain.
const DOMAIN_SLACK: f64 = 1e-12;

impl FlowField {
    pub fn new(domain: Vec<(f64, f64)>, field: FieldFn) -> Self {
        Self { dim: domain.len(), domain, field, jac: None, hess: None }
    }

    pub fn with_jacobian(mut self, jac: JacobianFn) -> Self {
        self.jac = Some(jac);
        self
    }

    pub fn with_hessians(mut self, hess: HessiansFn) -> Self {
        self.hess = Some(hess);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jac.is_some()
    }

    pub fn has_analytic_hessians(&self) -> bool {
        self.hess.is_some()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ReductionError> {
        if x.len() != self.dim {
            return Err(ReductionError::Dimension(format!("expected {} coordinates, got {}", self.dim, x.len())));
        }
        Ok(())
    }

    /// Evaluate `F(x)`, rejecting points outside the box.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, ReductionError> {
        self.check_dim(x)?;
        for (coord, (&value, &(lo, hi))) in x.iter().zip(&self.domain).enumerate() {
            if !(value >= lo - DOMAIN_SLACK && value <= hi + DOMAIN_SLACK) {
                return Err(ReductionError::DomainViolation { coord, value, lo, hi });
            }
        }
        (self.field)(x)
    }

    /// Evaluate the defining formula without the box check (used by finite
    /// differences at the edge of the box, where the formulas extend
    /// smoothly).
    pub fn eval_unchecked(&self, x: &[f64]) -> Result<Vec<f64>, ReductionError> {
        self.check_dim(x)?;
        (self.field)(x)
    }

    /// Jacobian: analytic when available, otherwise central differences.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, ReductionError> {
        self.check_dim(x)?;
        match &self.jac {
            Some(j) => Ok(j(x)),
            None => self.fd_jacobian(x),
        }
    }

    /// Central-difference Jacobian with step [`JACOBIAN_STEP`].
    pub fn fd_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, ReductionError> {
        let n = self.dim;
        let h = JACOBIAN_STEP;
        let mut jac = DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        for j in 0..n {
            xp[j] = x[j] + h;
            let fp = self.eval_unchecked(&xp)?;
            xp[j] = x[j] - h;
            let fm = self.eval_unchecked(&xp)?;
            xp[j] = x[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    /// Hessians of every component: analytic when available, otherwise
    /// central differences.
    pub fn hessians(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>, ReductionError> {
        self.check_dim(x)?;
        match &self.hess {
            Some(h) => Ok(h(x)),
            None => self.fd_hessians(x),
        }
    }

    /// Central-difference Hessians with step [`HESSIAN_STEP`].
    pub fn fd_hessians(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>, ReductionError> {
        let n = self.dim;
        let h = HESSIAN_STEP;
        let mut out = vec![DMatrix::zeros(n, n); n];
        let mut xp = x.to_vec();
        let mut shifted = |di: (usize, f64), dj: (usize, f64)| -> Result<Vec<f64>, ReductionError> {
            xp.copy_from_slice(x);
            xp[di.0] += di.1;
            xp[dj.0] += dj.1;
            self.eval_unchecked(&xp)
        };
        for a in 0..n {
            for b in a..n {
                let fpp = shifted((a, h), (b, h))?;
                let fpm = shifted((a, h), (b, -h))?;
                let fmp = shifted((a, -h), (b, h))?;
                let fmm = shifted((a, -h), (b, -h))?;
                for (c, m) in out.iter_mut().enumerate() {
                    let v = (fpp[c] - fpm[c] - fmp[c] + fmm[c]) / (4.0 * h * h);
                    m[(a, b)] = v;
                    m[(b, a)] = v;
                }
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// ManifoldChart
// ---------------------------------------------------------------------------

/// Point-valued curve parametrisation.
pub type CurveFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Parametrisation `γ` of the manifold by its first coordinate.
#[derive(Clone)]
pub struct ManifoldChart {
    pub gamma: CurveFn,
    pub gamma_prime: CurveFn,
    pub gamma_second: CurveFn,
    /// `γ` is a straight line with `γ′` equal to the right null vector, so
    /// `γ″ = 0` and `Σ v_l γ′_l = 1` hold exactly.
    pub straight: bool,
}

impl fmt::Debug for ManifoldChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManifoldChart").field("straight", &self.straight).finish_non_exhaustive()
    }
}

impl ManifoldChart {
    /// `γ(x) = (x, …, x, 0, …, 0)` with `ones` copies of `x` followed by
    /// `zeros` zeros.
    pub fn diagonal(ones: usize, zeros: usize) -> Self {
        let n = ones + zeros;
        let prime: Vec<f64> = (0..n).map(|i| if i < ones { 1.0 } else { 0.0 }).collect();
        let prime_clone = prime.clone();
        Self {
            gamma: Arc::new(move |x| (0..n).map(|i| if i < ones { x } else { 0.0 }).collect()),
            gamma_prime: Arc::new(move |_| prime_clone.clone()),
            gamma_second: Arc::new(move |_| vec![0.0; n]),
            straight: true,
        }
    }

    pub fn point(&self, x0: f64) -> Vec<f64> {
        (self.gamma)(x0)
    }

    /// `‖x − γ(x₀)‖_∞ ≤ tol`.
    pub fn on_manifold(&self, x: &[f64], tol: f64) -> bool {
        let g = (self.gamma)(x[0]);
        g.len() == x.len() && x.iter().zip(&g).all(|(a, b)| (a - b).abs() <= tol)
    }
}

// ---------------------------------------------------------------------------
// Spectral analysis
// ---------------------------------------------------------------------------

fn eigenvalues(j: &DMatrix<f64>) -> Vec<(f64, f64)> {
    j.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect()
}

/// Eigenvalue report from [`spectrum_gate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    /// All eigenvalues as `(re, im)`.
    pub eigenvalues: Vec<(f64, f64)>,
}

/// Check that `j` has exactly one eigenvalue within [`NULL_TOL`] of zero and
/// all others in the disc `|λ + 1| < 1`.
pub fn spectrum_gate(j: &DMatrix<f64>) -> Result<SpectrumReport, ReductionError> {
    if !j.is_square() {
        return Err(ReductionError::Dimension("Jacobian must be square".into()));
    }
    let eigenvalues = eigenvalues(j);
    let null = eigenvalues.iter().filter(|(re, im)| re.hypot(*im) < NULL_TOL).count();
    let rest_ok = eigenvalues
        .iter()
        .filter(|(re, im)| re.hypot(*im) >= NULL_TOL)
        .all(|(re, im)| (re + 1.0).hypot(*im) < 1.0);
    if null == 1 && rest_ok {
        Ok(SpectrumReport { eigenvalues })
    } else {
        Err(ReductionError::SpectrumViolation { eigenvalues })
    }
}

/// Right and left null vectors of `j`, normalised so that `u₀ = 1` (when
/// `u₀ ≠ 0`) and `⟨u, v⟩ = 1`.
pub fn null_eigenpair(j: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>), ReductionError> {
    if !j.is_square() {
        return Err(ReductionError::Dimension("Jacobian must be square".into()));
    }
    let eigenvalues = eigenvalues(j);
    let count = eigenvalues.iter().filter(|(re, im)| re.hypot(*im) < NULL_TOL).count();
    match count {
        0 => return Err(ReductionError::NoNullEigenvalue { eigenvalues }),
        1 => {}
        _ => return Err(ReductionError::MultipleNullEigenvalues { count }),
    }
    let svd = j.clone().svd(true, true);
    let idx = svd.singular_values.imin();
    let left = svd.u.as_ref().expect("left singular vectors requested");
    let right = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut u: DVector<f64> = right.row(idx).transpose();
    let mut v: DVector<f64> = left.column(idx).into_owned();
    if u[0].abs() > 1e-12 {
        u /= u[0];
    } else {
        let norm = u.norm();
        let pivot = u.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
        u *= pivot.signum() / norm;
    }
    let dot = u.dot(&v);
    if dot.abs() < 1e-14 {
        return Err(ReductionError::SpectrumViolation { eigenvalues });
    }
    v /= dot;
    Ok((u, v))
}

/// `P_c = u vᵀ` and `P_s = I − P_c`.
pub fn projections(u: &DVector<f64>, v: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let p_c = u * v.transpose();
    let p_s = DMatrix::identity(u.len(), u.len()) - &p_c;
    (p_c, p_s)
}

/// Right-hand side `P_sᵀ(Σ v_i H_i)P_s`, symmetrised.
pub fn lyapunov_rhs(hessians: &[DMatrix<f64>], v: &DVector<f64>, p_s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p_s.nrows();
    let mut weighted = DMatrix::zeros(n, n);
    for (vi, h) in v.iter().zip(hessians) {
        if *vi != 0.0 {
            weighted += h * *vi;
        }
    }
    let c = p_s.transpose() * weighted * p_s;
    (&c + c.transpose()) * 0.5
}

// ---------------------------------------------------------------------------
// Θ: linear solve and integral formula
// ---------------------------------------------------------------------------

fn sym_index(n: usize, a: usize, b: usize) -> usize {
    let (i, j) = if a <= b { (a, b) } else { (b, a) };
    // Row-major packing of the upper triangle.
    i * n - i * (i + 1) / 2 + j
}

/// Solve `JᵀΘ + ΘJ = P_sᵀ(Σ v_i H_i)P_s` with `Θ = Θᵀ` and `Θu = 0` as a dense
/// least-squares system over the free entries of a symmetric matrix.
pub fn solve_theta(
    j: &DMatrix<f64>,
    hessians: &[DMatrix<f64>],
    v: &DVector<f64>,
    p_s: &DMatrix<f64>,
    u: &DVector<f64>,
) -> Result<DMatrix<f64>, ReductionError> {
    let n = j.nrows();
    if hessians.len() != n || v.len() != n || u.len() != n || p_s.nrows() != n {
        return Err(ReductionError::Dimension(format!("inconsistent sizes for a {n}-dimensional Lyapunov system")));
    }
    let c = lyapunov_rhs(hessians, v, p_s);
    let unknowns = n * (n + 1) / 2;
    let rows = unknowns + n;
    let mut a = DMatrix::<f64>::zeros(rows, unknowns);
    let mut rhs = DVector::<f64>::zeros(rows);
    let mut row = 0;
    for i in 0..n {
        for jj in i..n {
            // (JᵀΘ)_{i,jj} = Σ_k J_{k,i} Θ_{k,jj};  (ΘJ)_{i,jj} = Σ_k Θ_{i,k} J_{k,jj}.
            for k in 0..n {
                a[(row, sym_index(n, k, jj))] += j[(k, i)];
                a[(row, sym_index(n, i, k))] += j[(k, jj)];
            }
            rhs[row] = c[(i, jj)];
            row += 1;
        }
    }
    let scale = j.amax().max(1.0);
    for i in 0..n {
        for k in 0..n {
            a[(row, sym_index(n, i, k))] += scale * u[k];
        }
        row += 1;
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if ratio < RANK_TOL {
        return Err(ReductionError::SingularSystem { ratio });
    }
    let x = svd.solve(&rhs, 0.0).map_err(|_| ReductionError::SingularSystem { ratio })?;
    let mut theta = DMatrix::zeros(n, n);
    for i in 0..n {
        for jj in i..n {
            let val = x[sym_index(n, i, jj)];
            theta[(i, jj)] = val;
            theta[(jj, i)] = val;
        }
    }
    Ok(theta)
}

/// Nodes per Gauss–Legendre panel in [`theta_integral`].
const PANEL_NODES: usize = 8;
/// Maximum number of horizon doublings in [`theta_integral`].
const MAX_DOUBLINGS: u32 = 12;

/// `Θ = −∫₀^∞ e^{Jᵀt} P_sᵀ(Σ v_i H_i)P_s e^{Jt} dt` by panel Gauss–Legendre
/// quadrature. The horizon starts at `t_max` and doubles until the integrand
/// max-norm at the horizon falls below [`TAIL_TOL`].
pub fn theta_integral(
    j: &DMatrix<f64>,
    hessians: &[DMatrix<f64>],
    v: &DVector<f64>,
    p_s: &DMatrix<f64>,
    t_max: f64,
    quad_step: f64,
) -> Result<DMatrix<f64>, ReductionError> {
    let n = j.nrows();
    if hessians.len() != n || v.len() != n || p_s.nrows() != n {
        return Err(ReductionError::Dimension(format!("inconsistent sizes for a {n}-dimensional integral")));
    }
    if !(t_max > 0.0 && quad_step > 0.0) {
        return Err(ReductionError::Dimension("t_max and quad_step must be positive".into()));
    }
    let c = lyapunov_rhs(hessians, v, p_s);
    let (nodes, weights) = gauss_legendre(PANEL_NODES);
    let offsets: Vec<DMatrix<f64>> = nodes.iter().map(|xk| expm(&(j * (0.5 * quad_step * (1.0 + xk))))).collect();
    let step = expm(&(j * quad_step));
    let mut propagator = DMatrix::<f64>::identity(n, n);
    let mut acc = DMatrix::<f64>::zeros(n, n);
    let mut t = 0.0;
    let mut horizon = t_max;
    let integrand = |e: &DMatrix<f64>| e.transpose() * &c * e;
    for _ in 0..=MAX_DOUBLINGS {
        while t < horizon - 1e-12 {
            for (off, w) in offsets.iter().zip(&weights) {
                let e = &propagator * off;
                acc += integrand(&e) * (0.5 * quad_step * w);
            }
            propagator = &propagator * &step;
            t += quad_step;
        }
        if integrand(&propagator).amax() < TAIL_TOL {
            let theta = -acc;
            return Ok((&theta + theta.transpose()) * 0.5);
        }
        horizon *= 2.0;
    }
    Err(ReductionError::TruncationNotConverged { t_max: horizon })
}

// ---------------------------------------------------------------------------
// Definiteness
// ---------------------------------------------------------------------------

/// Sign class of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DefiniteClass {
    /// Every eigenvalue within the zero tolerance.
    Zero,
    PositiveSemidefinite,
    NegativeSemidefinite,
    Indefinite,
}

/// Classification together with the eigenvalues (ascending).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Definiteness {
    pub class: DefiniteClass,
    pub eigenvalues: Vec<f64>,
}

impl Definiteness {
    pub fn is_psd(&self) -> bool {
        matches!(self.class, DefiniteClass::PositiveSemidefinite | DefiniteClass::Zero)
    }

    pub fn is_nsd(&self) -> bool {
        matches!(self.class, DefiniteClass::NegativeSemidefinite | DefiniteClass::Zero)
    }
}

/// Classify a symmetric matrix by the signs of its eigenvalues.
pub fn definiteness_of(m: &DMatrix<f64>) -> Definiteness {
    let sym = (m + m.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let pos = eigenvalues.iter().any(|&l| l > DEFINITENESS_TOL);
    let neg = eigenvalues.iter().any(|&l| l < -DEFINITENESS_TOL);
    let class = match (pos, neg) {
        (false, false) => DefiniteClass::Zero,
        (true, false) => DefiniteClass::PositiveSemidefinite,
        (false, true) => DefiniteClass::NegativeSemidefinite,
        (true, true) => DefiniteClass::Indefinite,
    };
    Definiteness { class, eigenvalues }
}

// ---------------------------------------------------------------------------
// Derivatives of Φ₀
// ---------------------------------------------------------------------------

/// Left null vector along the chart, normalised so that `⟨γ′, v⟩ = 1`.
pub type EigvecAlong<'a> = &'a dyn Fn(f64) -> Result<DVector<f64>, ReductionError>;

/// First and second derivatives of `Φ₀` at a point of the manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct Phi0Derivatives {
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// Projection-map derivatives at `γ(x₀)`:
///
/// * `∂Φ₀/∂x_i = v_i / Σ_l v_l γ′_l`;
/// * `∂²Φ₀/∂x_i∂x_j = (v′_i Φ_j + v′_j Φ_i − θ_ij − Φ_i Φ_j Σ_l(2v′_l γ′_l + v_l γ″_l)) / Σ_l v_l γ′_l`,
///
/// where `Φ_i = ∂Φ₀/∂x_i` and `v′` is the derivative of the left null vector
/// along the chart (central difference of `v_along` with step
/// [`EIGVEC_STEP`]).
pub fn phi0_derivatives(
    chart: &ManifoldChart,
    x0: f64,
    v: &DVector<f64>,
    theta: &DMatrix<f64>,
    v_along: EigvecAlong<'_>,
) -> Result<Phi0Derivatives, ReductionError> {
    let n = v.len();
    let gp = DVector::from_vec((chart.gamma_prime)(x0));
    let gpp = if chart.straight { DVector::zeros(n) } else { DVector::from_vec((chart.gamma_second)(x0)) };
    let norm = if chart.straight { 1.0 } else { v.dot(&gp) };
    let h = EIGVEC_STEP;
    let v_prime = (v_along(x0 + h)? - v_along(x0 - h)?) / (2.0 * h);
    let grad = v / norm;
    let curvature: f64 = (0..n).map(|l| 2.0 * v_prime[l] * gp[l] + v[l] * gpp[l]).sum();
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let val = (v_prime[i] * grad[j] + v_prime[j] * grad[i] - theta[(i, j)] - grad[i] * grad[j] * curvature) / norm;
            hess[(i, j)] = val;
            hess[(j, i)] = val;
        }
    }
    Ok(Phi0Derivatives { grad, hess })
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

fn ser_vector<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

fn ser_matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    s.collect_seq(rows)
}

/// Everything the reduction computes at one point of the manifold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionResult {
    pub point: Vec<f64>,
    #[serde(serialize_with = "ser_vector")]
    pub u: DVector<f64>,
    #[serde(serialize_with = "ser_vector")]
    pub v: DVector<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub p_c: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub p_s: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub theta: DMatrix<f64>,
    #[serde(serialize_with = "ser_vector")]
    pub phi0_grad: DVector<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub phi0_hess: DMatrix<f64>,
}

/// Left null vector of the flow's Jacobian at `γ(x₀)`, normalised against `γ′`.
pub fn left_null_along(flow: &FlowField, chart: &ManifoldChart, x0: f64) -> Result<DVector<f64>, ReductionError> {
    let j = flow.jacobian(&chart.point(x0))?;
    let (_, v) = null_eigenpair(&j)?;
    let gp = DVector::from_vec((chart.gamma_prime)(x0));
    Ok(&v / v.dot(&gp))
}

/// Run the complete reduction at `γ(x₀)`. `v_along` overrides the numerical
/// left null vector along the chart (e.g. with a closed form).
pub fn reduce(
    flow: &FlowField,
    chart: &ManifoldChart,
    x0: f64,
    v_along: Option<EigvecAlong<'_>>,
) -> Result<ReductionResult, ReductionError> {
    let point = chart.point(x0);
    let j = flow.jacobian(&point)?;
    spectrum_gate(&j)?;
    let (u, v) = null_eigenpair(&j)?;
    let (p_c, p_s) = projections(&u, &v);
    let hessians = flow.hessians(&point)?;
    let theta = solve_theta(&j, &hessians, &v, &p_s, &u)?;
    let numeric = |x: f64| left_null_along(flow, chart, x);
    let along: EigvecAlong<'_> = match v_along {
        Some(f) => f,
        None => &numeric,
    };
    let d = phi0_derivatives(chart, x0, &v, &theta, along)?;
    Ok(ReductionResult { point, u, v, p_c, p_s, theta, phi0_grad: d.grad, phi0_hess: d.hess })
}

/// `Φ(x)`: integrate `ẋ = F(x)` from `x` until `‖F‖_∞ ≤ tol/dim` and the chart
/// predicate holds within `tol`.
pub fn project_to_manifold(
    flow: &FlowField,
    chart: &ManifoldChart,
    x: &[f64],
    tol: f64,
) -> Result<Vec<f64>, ReductionError> {
    flow.eval(x)?;
    let opts = OdeOptions { abs_tol: (tol * 1e-2).max(1e-15), rel_tol: 1e-13, ..OdeOptions::default() };
    let field_tol = tol / flow.dim() as f64;
    let outcome = integrate_until(
        |y| flow.eval_unchecked(y),
        x,
        |y, fy| fy.iter().all(|f| f.abs() <= field_tol) && chart.on_manifold(y, tol),
        &opts,
    )?;
    outcome
        .map(|o| o.state)
        .ok_or(ReductionError::NoConvergence { steps: opts.max_steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_packing_is_a_bijection() {
        let n = 5;
        let mut seen = vec![false; n * (n + 1) / 2];
        for a in 0..n {
            for b in a..n {
                let k = sym_index(n, a, b);
                assert!(!seen[k]);
                seen[k] = true;
                assert_eq!(k, sym_index(n, b, a));
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn identity_fails_the_gate() {
        assert!(matches!(
            spectrum_gate(&DMatrix::identity(3, 3)),
            Err(ReductionError::SpectrumViolation { .. })
        ));
    }

    #[test]
    fn rank_one_perturbation_kernel() {
        // J = −(I − e₁e₁ᵀ) has kernel e₁ on both sides.
        let mut j = -DMatrix::<f64>::identity(3, 3);
        j[(0, 0)] = 0.0;
        let (u, v) = null_eigenpair(&j).unwrap();
        assert!((u - DVector::from_vec(vec![1.0, 0.0, 0.0])).amax() < 1e-14);
        assert!((v - DVector::from_vec(vec![1.0, 0.0, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn definiteness_classes() {
        assert_eq!(definiteness_of(&DMatrix::identity(2, 2)).class, DefiniteClass::PositiveSemidefinite);
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(definiteness_of(&d).class, DefiniteClass::Indefinite);
        assert_eq!(definiteness_of(&DMatrix::zeros(3, 3)).class, DefiniteClass::Zero);
    }
}

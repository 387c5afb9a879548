//! The seed-bank flow fields and their closed-form quantities on the diagonal
//! manifold `Γ = {x₀ = x₁ = ⋯ = x_K}`.
//!
//! Four flows are provided:
//!
//! * `constant` — `F₀ = (1−x₀)(Σ_{i≥1} b_i x_i − (1−b₀)x₀) / ((1−x₀) + Σ_{i≥0} b_i x_i)`,
//!   `F_i = x_{i−1} − x_i`;
//! * `linearized` — `G₀ = (1−x₀)(Σ_{i≥1} b_i x_i − (1−b₀)x₀)`, same ageing terms;
//! * `slow_env` — the constant flow with `1` replaced by the population size
//!   `ξ`, which is an extra coordinate with zero velocity;
//! * `fast_env` — the constant flow with the weights `b_i` modulated by
//!   `1 + υ_{i−1}` and `K` environment marks that shift `υ_i ← υ_{i−1}`.
//!
//! Writing `N = Σ_{i≥1} b_i x_i − (1−b₀)x₀` (with the modulated weights in
//! the fast case), the denominator of `F₀` is `1 + N` and `F₀ = (1−x₀)N/(1+N)`;
//! `N` vanishes on `Γ`. The analytic Jacobians and Hessians below are
//! derived from that representation, while the displayed on-`Γ` closed forms
//! are kept as separate functions so that they can serve as independent
//! checks.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::model::{GerminationDistribution, SlowEnvSpec};
use crate::reduction::{
    null_eigenpair, projections, reduce, solve_theta, FlowField, ManifoldChart, ReductionError,
};

/// The four flow fields.
#[derive(Debug, Clone)]
pub enum FlowKind {
    Constant(GerminationDistribution),
    Linearized(GerminationDistribution),
    SlowEnv(GerminationDistribution, SlowEnvSpec),
    FastEnv(GerminationDistribution),
}

impl FlowKind {
    pub fn distribution(&self) -> &GerminationDistribution {
        match self {
            FlowKind::Constant(d) | FlowKind::Linearized(d) | FlowKind::FastEnv(d) | FlowKind::SlowEnv(d, _) => d,
        }
    }

    /// State dimension: `K+1`, `K+1`, `K+2`, `2K+1`.
    pub fn dim(&self) -> usize {
        let k = self.distribution().k();
        match self {
            FlowKind::Constant(_) | FlowKind::Linearized(_) => k + 1,
            FlowKind::SlowEnv(..) => k + 2,
            FlowKind::FastEnv(_) => 2 * k + 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::Constant(_) => "constant",
            FlowKind::Linearized(_) => "linearized",
            FlowKind::SlowEnv(..) => "slow_env",
            FlowKind::FastEnv(_) => "fast_env",
        }
    }
}

// ---------------------------------------------------------------------------
// Flow construction
// ---------------------------------------------------------------------------

/// Gradient of `N` with respect to `(x₀, …, x_K)` for the unmodulated flows.
fn n_gradient(b: &[f64]) -> DVector<f64> {
    let mut n = DVector::from_column_slice(b);
    n[0] = -(1.0 - b[0]);
    n
}

fn ageing(x: &[f64], out: &mut [f64], k: usize) {
    for i in 1..=k {
        out[i] = x[i - 1] - x[i];
    }
}

fn ageing_jacobian(j: &mut DMatrix<f64>, k: usize) {
    for i in 1..=k {
        j[(i, i - 1)] = 1.0;
        j[(i, i)] = -1.0;
    }
}

/// The constant-environment field `F` evaluated directly from its defining
/// rational form.
pub fn constant_field(b: &[f64], x: &[f64]) -> Vec<f64> {
    let k = b.len() - 1;
    let x0 = x[0];
    let seeds: f64 = (1..=k).map(|i| b[i] * x[i]).sum();
    let pool: f64 = (0..=k).map(|i| b[i] * x[i]).sum();
    let mut out = vec![0.0; k + 1];
    out[0] = (1.0 - x0) * (seeds - (1.0 - b[0]) * x0) / ((1.0 - x0) + pool);
    ageing(x, &mut out, k);
    out
}

/// The linearized field `G`.
pub fn linearized_field(b: &[f64], x: &[f64]) -> Vec<f64> {
    let k = b.len() - 1;
    let x0 = x[0];
    let seeds: f64 = (1..=k).map(|i| b[i] * x[i]).sum();
    let mut out = vec![0.0; k + 1];
    out[0] = (1.0 - x0) * (seeds - (1.0 - b[0]) * x0);
    ageing(x, &mut out, k);
    out
}

/// The slowly-changing-environment field on `(x₀, …, x_K, ξ)`.
pub fn slow_field(b: &[f64], z: &[f64]) -> Vec<f64> {
    let k = b.len() - 1;
    let x0 = z[0];
    let xi = z[k + 1];
    let seeds: f64 = (1..=k).map(|i| b[i] * z[i]).sum();
    let pool: f64 = (0..=k).map(|i| b[i] * z[i]).sum();
    let mut out = vec![0.0; k + 2];
    out[0] = (xi - x0) * (seeds - (1.0 - b[0]) * x0) / ((xi - x0) + pool);
    ageing(z, &mut out, k);
    out[k + 1] = 0.0;
    out
}

/// The fast-environment field on `(x₀, …, x_K, υ₀, …, υ_{K−1})`.
pub fn fast_field(b: &[f64], z: &[f64]) -> Vec<f64> {
    let k = b.len() - 1;
    let x0 = z[0];
    let ups = &z[k + 1..];
    let seeds: f64 = (1..=k).map(|i| b[i] * (1.0 + ups[i - 1]) * z[i]).sum();
    let mut out = vec![0.0; 2 * k + 1];
    out[0] = (1.0 - x0) * (seeds - (1.0 - b[0]) * x0) / ((1.0 - x0) + b[0] * x0 + seeds);
    ageing(z, &mut out, k);
    for i in 0..k {
        let prev = if i == 0 { 0.0 } else { ups[i - 1] };
        out[k + 1 + i] = prev - ups[i];
    }
    out
}

fn constant_jacobian(b: &[f64], x: &[f64]) -> DMatrix<f64> {
    let k = b.len() - 1;
    let n = n_gradient(b);
    let big_n = n.dot(&DVector::from_column_slice(x));
    let a = 1.0 - x[0];
    let mut j = DMatrix::zeros(k + 1, k + 1);
    for c in 0..=k {
        j[(0, c)] = a * n[c] / (1.0 + big_n).powi(2);
    }
    j[(0, 0)] -= big_n / (1.0 + big_n);
    ageing_jacobian(&mut j, k);
    j
}

fn constant_hessians(b: &[f64], x: &[f64]) -> Vec<DMatrix<f64>> {
    let k = b.len() - 1;
    let n = n_gradient(b);
    let big_n = n.dot(&DVector::from_column_slice(x));
    let a = 1.0 - x[0];
    let q = 1.0 + big_n;
    let mut h0 = &n * n.transpose() * (-2.0 * a / q.powi(3));
    for c in 0..=k {
        h0[(0, c)] -= n[c] / (q * q);
        h0[(c, 0)] -= n[c] / (q * q);
    }
    let mut out = vec![DMatrix::zeros(k + 1, k + 1); k + 1];
    out[0] = h0;
    out
}

fn linearized_jacobian(b: &[f64], x: &[f64]) -> DMatrix<f64> {
    let k = b.len() - 1;
    let n = n_gradient(b);
    let big_n = n.dot(&DVector::from_column_slice(x));
    let a = 1.0 - x[0];
    let mut j = DMatrix::zeros(k + 1, k + 1);
    for c in 0..=k {
        j[(0, c)] = a * n[c];
    }
    j[(0, 0)] -= big_n;
    ageing_jacobian(&mut j, k);
    j
}

fn linearized_hessians(b: &[f64]) -> Vec<DMatrix<f64>> {
    let k = b.len() - 1;
    let n = n_gradient(b);
    let mut h0 = DMatrix::zeros(k + 1, k + 1);
    for c in 0..=k {
        h0[(0, c)] -= n[c];
        h0[(c, 0)] -= n[c];
    }
    let mut out = vec![DMatrix::zeros(k + 1, k + 1); k + 1];
    out[0] = h0;
    out
}

/// `N`, its gradient and its Hessian for the fast flow.
fn fast_n(b: &[f64], z: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let k = b.len() - 1;
    let dim = 2 * k + 1;
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);
    grad[0] = -(1.0 - b[0]);
    let mut value = -(1.0 - b[0]) * z[0];
    for i in 1..=k {
        let ups = z[k + i];
        value += b[i] * (1.0 + ups) * z[i];
        grad[i] = b[i] * (1.0 + ups);
        grad[k + i] = b[i] * z[i];
        hess[(i, k + i)] = b[i];
        hess[(k + i, i)] = b[i];
    }
    (value, grad, hess)
}

fn fast_jacobian(b: &[f64], z: &[f64]) -> DMatrix<f64> {
    let k = b.len() - 1;
    let dim = 2 * k + 1;
    let (big_n, n, _) = fast_n(b, z);
    let a = 1.0 - z[0];
    let q = 1.0 + big_n;
    let mut j = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        j[(0, c)] = a * n[c] / (q * q);
    }
    j[(0, 0)] -= big_n / q;
    ageing_jacobian(&mut j, k);
    for i in 0..k {
        j[(k + 1 + i, k + 1 + i)] = -1.0;
        if i > 0 {
            j[(k + 1 + i, k + i)] = 1.0;
        }
    }
    j
}

fn fast_hessians(b: &[f64], z: &[f64]) -> Vec<DMatrix<f64>> {
    let k = b.len() - 1;
    let dim = 2 * k + 1;
    let (big_n, n, hn) = fast_n(b, z);
    let a = 1.0 - z[0];
    let q = 1.0 + big_n;
    let grad_f = &n / (q * q);
    let hess_f = &hn / (q * q) - &n * n.transpose() * (2.0 / q.powi(3));
    let mut h0 = hess_f * a;
    for c in 0..dim {
        h0[(0, c)] -= grad_f[c];
        h0[(c, 0)] -= grad_f[c];
    }
    let mut out = vec![DMatrix::zeros(dim, dim); dim];
    out[0] = h0;
    out
}

/// Build the [`FlowField`] of a flow kind. The constant, linearized and fast
/// flows carry analytic Jacobians and Hessians; the slowly-changing-
/// environment flow relies on finite differences.
pub fn build_flow(kind: &FlowKind) -> FlowField {
    let d = kind.distribution();
    let k = d.k();
    let b: Arc<[f64]> = Arc::from(d.b());
    let unit = vec![(0.0, 1.0); k + 1];
    match kind {
        FlowKind::Constant(_) => {
            let (b1, b2, b3) = (b.clone(), b.clone(), b.clone());
            FlowField::new(unit, Arc::new(move |x| Ok(constant_field(&b1, x))))
                .with_jacobian(Arc::new(move |x| constant_jacobian(&b2, x)))
                .with_hessians(Arc::new(move |x| constant_hessians(&b3, x)))
        }
        FlowKind::Linearized(_) => {
            let (b1, b2, b3) = (b.clone(), b.clone(), b.clone());
            FlowField::new(unit, Arc::new(move |x| Ok(linearized_field(&b1, x))))
                .with_jacobian(Arc::new(move |x| linearized_jacobian(&b2, x)))
                .with_hessians(Arc::new(move |_| linearized_hessians(&b3)))
        }
        FlowKind::SlowEnv(_, env) => {
            let mut domain = vec![(0.0, env.xi_max); k + 1];
            domain.push((env.xi_min, env.xi_max));
            FlowField::new(
                domain,
                Arc::new(move |z| {
                    let xi = z[k + 1];
                    if z[0] > xi + 1e-12 {
                        return Err(ReductionError::DomainConstraint(format!(
                            "mature mutant mass x0 = {} exceeds population size xi = {xi}",
                            z[0]
                        )));
                    }
                    Ok(slow_field(&b, z))
                }),
            )
        }
        FlowKind::FastEnv(_) => {
            let mut domain = unit;
            domain.extend(std::iter::repeat_n((-1.0, 1.0), k));
            let (b1, b2, b3) = (b.clone(), b.clone(), b.clone());
            FlowField::new(domain, Arc::new(move |z| Ok(fast_field(&b1, z))))
                .with_jacobian(Arc::new(move |z| fast_jacobian(&b2, z)))
                .with_hessians(Arc::new(move |z| fast_hessians(&b3, z)))
        }
    }
}

/// Chart of the attracting manifold: the diagonal (padded with zero marks for
/// the fast flow).
pub fn chart_for(kind: &FlowKind) -> Result<ManifoldChart, ReductionError> {
    let k = kind.distribution().k();
    match kind {
        FlowKind::Constant(_) | FlowKind::Linearized(_) => Ok(ManifoldChart::diagonal(k + 1, 0)),
        FlowKind::FastEnv(_) => Ok(ManifoldChart::diagonal(k + 1, k)),
        FlowKind::SlowEnv(..) => Err(ReductionError::Dimension(
            "the slowly-changing-environment manifold is two-dimensional".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Closed forms on Γ
// ---------------------------------------------------------------------------

/// `B(1−x₀) + 1`.
fn denom(d: &GerminationDistribution, x0: f64) -> f64 {
    d.mean_germination_time() * (1.0 - x0) + 1.0
}

/// Closed-form Jacobian on the manifold. Constant and linearized flows share
/// it: first row `(1−x₀)(−(1−b₀), b₁, …, b_K)`, ageing rows `e_{i−1} − e_i`.
/// The fast flow adds `b_i x₀(1−x₀)` in the mark columns of the first row and
/// a lower-bidiagonal `(+1, −1)` block for the marks.
pub fn jacobian_on_gamma(kind: &FlowKind, x0: f64) -> Result<DMatrix<f64>, ReductionError> {
    let d = kind.distribution();
    let b = d.b();
    let k = d.k();
    let dim = match kind {
        FlowKind::SlowEnv(..) => {
            return Err(ReductionError::Dimension("use slow_jacobian_on_gamma for the slow-env flow".into()))
        }
        _ => kind.dim(),
    };
    let mut j = DMatrix::zeros(dim, dim);
    j[(0, 0)] = -(1.0 - b[0]) * (1.0 - x0);
    for i in 1..=k {
        j[(0, i)] = b[i] * (1.0 - x0);
        j[(i, i - 1)] = 1.0;
        j[(i, i)] = -1.0;
    }
    if let FlowKind::FastEnv(_) = kind {
        for i in 1..=k {
            j[(0, k + i)] = b[i] * x0 * (1.0 - x0);
            j[(k + i, k + i)] = -1.0;
            if i > 1 {
                j[(k + i, k + i - 1)] = 1.0;
            }
        }
    }
    Ok(j)
}

/// Closed-form Jacobian of the slow-env flow at `(x₀, …, x₀, ξ)`.
pub fn slow_jacobian_on_gamma(d: &GerminationDistribution, x0: f64, xi: f64) -> DMatrix<f64> {
    let b = d.b();
    let k = d.k();
    let mut j = DMatrix::zeros(k + 2, k + 2);
    let scale = (xi - x0) / xi;
    j[(0, 0)] = -(1.0 - b[0]) * scale;
    for i in 1..=k {
        j[(0, i)] = b[i] * scale;
        j[(i, i - 1)] = 1.0;
        j[(i, i)] = -1.0;
    }
    j
}

/// Closed-form left null vector on `Γ` of the constant flow:
/// `v = (1, (1−b₀)(1−x₀), (Σ_{i≥2} b_i)(1−x₀), …, b_K(1−x₀)) / (B(1−x₀)+1)`.
pub fn constant_left_eigvec(d: &GerminationDistribution, x0: f64) -> DVector<f64> {
    let k = d.k();
    let den = denom(d, x0);
    DVector::from_iterator(k + 1, (0..=k).map(|i| if i == 0 { 1.0 } else { d.tail(i) * (1.0 - x0) } / den))
}

/// Closed-form left null vector of the fast flow on `Γ × {0}`: the constant
/// vector followed by `x₀(1−x₀)(Σ_{l≥i} b_l)/(B(1−x₀)+1)` for `i = 1..K`.
pub fn fast_left_eigvec(d: &GerminationDistribution, x0: f64) -> DVector<f64> {
    let k = d.k();
    let den = denom(d, x0);
    let head = constant_left_eigvec(d, x0);
    DVector::from_iterator(
        2 * k + 1,
        (0..=2 * k).map(|i| if i <= k { head[i] } else { d.tail(i - k) * x0 * (1.0 - x0) / den }),
    )
}

/// Closed-form null eigenvectors `(u, v)` on the manifold.
pub fn eigvecs_on_gamma(kind: &FlowKind, x0: f64) -> Result<(DVector<f64>, DVector<f64>), ReductionError> {
    let d = kind.distribution();
    let k = d.k();
    match kind {
        FlowKind::Constant(_) | FlowKind::Linearized(_) => {
            Ok((DVector::from_element(k + 1, 1.0), constant_left_eigvec(d, x0)))
        }
        FlowKind::FastEnv(_) => {
            let u = DVector::from_iterator(2 * k + 1, (0..=2 * k).map(|i| if i <= k { 1.0 } else { 0.0 }));
            Ok((u, fast_left_eigvec(d, x0)))
        }
        FlowKind::SlowEnv(..) => Err(ReductionError::Dimension(
            "the slowly-changing-environment manifold is two-dimensional".into(),
        )),
    }
}

/// Displayed second derivatives of `F₀` on `Γ`:
/// `[0][0] = 2(1−b₀) − 2(1−b₀)²(1−x)`, `[0][j] = 2b_j(1−b₀)(1−x) − b_j`,
/// `[i][j] = −2b_i b_j(1−x)`.
pub fn hess_f0_on_gamma(d: &GerminationDistribution, x0: f64) -> DMatrix<f64> {
    let b = d.b();
    let k = d.k();
    let c = 1.0 - b[0];
    let mut h = DMatrix::zeros(k + 1, k + 1);
    h[(0, 0)] = 2.0 * c - 2.0 * c * c * (1.0 - x0);
    for j in 1..=k {
        let v = 2.0 * b[j] * c * (1.0 - x0) - b[j];
        h[(0, j)] = v;
        h[(j, 0)] = v;
        for i in 1..=k {
            h[(i, j)] = -2.0 * b[i] * b[j] * (1.0 - x0);
        }
    }
    h
}

/// Displayed mixed and mark blocks of the fast-flow `Hess F₀` on `Γ × {0}`:
/// `H_{x,υ}` (`(K+1) × K`) and `H_{υ,υ}` (`K × K`).
pub fn fast_hessian_blocks_on_gamma(d: &GerminationDistribution, x0: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = d.b();
    let k = d.k();
    let c = 1.0 - b[0];
    let mut hxu = DMatrix::zeros(k + 1, k);
    let mut huu = DMatrix::zeros(k, k);
    for j in 1..=k {
        hxu[(0, j - 1)] = 2.0 * b[j] * c * x0 * (1.0 - x0) - b[j] * x0;
        for i in 1..=k {
            let diag = if i == j { b[j] * (1.0 - x0) } else { 0.0 };
            hxu[(i, j - 1)] = diag - 2.0 * b[i] * b[j] * x0 * (1.0 - x0);
            huu[(i - 1, j - 1)] = -2.0 * x0 * x0 * (1.0 - x0) * b[i] * b[j];
        }
    }
    (hxu, huu)
}

/// Closed form of the curvature matrix of the linearized flow:
/// `θ₀₀ = −B²(1−x)/D³`, `θ₀ᵢ = B·tail_i·(1−x)/D³`,
/// `θᵢⱼ = −tail_i·tail_j·(1−x)/D³` with `D = B(1−x)+1`.
pub fn theta_g_closed(d: &GerminationDistribution, x0: f64) -> DMatrix<f64> {
    let k = d.k();
    let big_b = d.mean_germination_time();
    let scale = (1.0 - x0) / denom(d, x0).powi(3);
    // θ = −scale · w wᵀ with w = (B, −tail₁, …, −tail_K).
    let w = DVector::from_iterator(k + 1, (0..=k).map(|i| if i == 0 { big_b } else { -d.tail(i) }));
    &w * w.transpose() * (-scale)
}

/// The matrix `Δ` of the decomposition `Hess F₀ = Hess G₀ + 2(1−x₀)Δ` on `Γ`,
/// with its closed-form spectrum `{0 (×K), −((1−b₀)² + Σ_{i≥1} b_i²)}`.
pub fn delta_matrix(d: &GerminationDistribution) -> (DMatrix<f64>, Vec<f64>) {
    let b = d.b();
    let k = d.k();
    // Δ = −n nᵀ with n = (−(1−b₀), b₁, …, b_K).
    let n = n_gradient(b);
    let delta = -(&n * n.transpose());
    let mut spectrum = vec![0.0; k];
    spectrum.push(-n.norm_squared());
    spectrum.sort_by(f64::total_cmp);
    (delta, spectrum)
}

// ---------------------------------------------------------------------------
// Drift of the constant-environment diffusion
// ---------------------------------------------------------------------------

/// `B(B(1−x₀)+2)/(B(1−x₀)+1)³`.
pub fn drift_bound(big_b: f64, x0: f64) -> f64 {
    let y = big_b * (1.0 - x0);
    big_b * (y + 2.0) / (y + 1.0).powi(3)
}

/// `θ^Δ`: the curvature matrix for the right-hand side `v₀·2(1−x₀)Δ`.
pub fn theta_delta(d: &GerminationDistribution, x0: f64) -> Result<DMatrix<f64>, ReductionError> {
    let kind = FlowKind::Constant(d.clone());
    let j = jacobian_on_gamma(&kind, x0)?;
    let (u, v) = null_eigenpair(&j)?;
    let (_, p_s) = projections(&u, &v);
    let (delta, _) = delta_matrix(d);
    let k = d.k();
    let mut hessians = vec![DMatrix::zeros(k + 1, k + 1); k + 1];
    hessians[0] = delta * (2.0 * (1.0 - x0));
    solve_theta(&j, &hessians, &v, &p_s, &u)
}

/// `∂²Φ₀/∂x₀²` on `Γ` for any `K`: the bound term minus `θ^Δ₀₀`.
pub fn drift_second_derivative(d: &GerminationDistribution, x0: f64) -> Result<f64, ReductionError> {
    let theta = theta_delta(d, x0)?;
    Ok(drift_bound(d.mean_germination_time(), x0) - theta[(0, 0)])
}

/// Closed form of `∂²Φ₀/∂x₀²` for `K = 1`.
pub fn drift_k1(b0: f64, x0: f64) -> f64 {
    let c = 1.0 - b0;
    let y = 1.0 - x0;
    c * (2.0 - c * c * y * y) / (c * y + 1.0).powi(3)
}

/// Closed form of `∂²Φ₀/∂x₀²` for `K = 2`, with `B = b₁ + 2b₂`:
///
/// `{(1−x)[B(1−b₀)(1−(1−b₀)(1−x))(B(1−x)+2) + b₂(2b₁+3b₂)] + B(4 − B²(1−x)²)}
///  / ((B(1−x)+1)³((1−b₀)(1−x)+2))`.
pub fn drift_k2(b: [f64; 3], x0: f64) -> f64 {
    let [b0, b1, b2] = b;
    let big_b = b1 + 2.0 * b2;
    let c = 1.0 - b0;
    let y = 1.0 - x0;
    let num = y * (big_b * c * (1.0 - c * y) * (big_b * y + 2.0) + b2 * (2.0 * b1 + 3.0 * b2))
        + big_b * (4.0 - big_b * big_b * y * y);
    num / ((big_b * y + 1.0).powi(3) * (c * y + 2.0))
}

/// First integral of the `K = 1` constant-environment flow:
/// `((1−b₀)x₁ + b₀)/(1−x₀) − (1−b₀)log(1−x₀)` is constant along trajectories,
/// so it takes the same value at `x` and at its projection `(Φ₀, Φ₀)`.
pub fn characteristic_invariant_k1(b0: f64, x0: f64, x1: f64) -> f64 {
    let c = 1.0 - b0;
    (c * x1 + b0) / (1.0 - x0) - c * (1.0 - x0).ln()
}

// ---------------------------------------------------------------------------
// Fast environment
// ---------------------------------------------------------------------------

/// Stated closed-form `K = 1` second derivatives of `Φ₀` in the fast
/// environment at `(x₀, x₀, 0)`: returns `(∂²Φ₀/∂x₀∂υ₀, ∂²Φ₀/∂υ₀²)`.
///
/// These are the rational expressions exactly as stated for the model; they
/// do **not** agree with the projection map of the fast flow (compare
/// [`fast_second_derivatives_k1_exact`]), and are kept as the reference
/// against which that discrepancy is measured.
pub fn fast_second_derivatives_k1(b0: f64, x0: f64) -> (f64, f64) {
    let c = 1.0 - b0;
    let y = 1.0 - x0;
    let d1 = c * y + 1.0;
    let e = c * y + 2.0;
    let mixed = (c * c * y + c * (1.0 - 2.0 * x0)) / d1.powi(3)
        - c * c * y * y * (c * c * x0 * x0 - c * (4.0 - b0) * x0 + (2.0 - b0)) / (d1.powi(3) * e);
    let second = 2.0 * c * c * x0 * y * (c * y * y + (1.0 - 2.0 * x0)) / d1.powi(3)
        + c * c * x0 * y * y * (c * c * x0 * x0 - c * (5.0 - b0) * x0 + (4.0 - b0)) / (d1.powi(3) * e);
    (mixed, second)
}

/// `∂²Φ₀/∂υ₀² / (x₀(1−x₀))` for `K = 1` with the factor cancelled
/// algebraically, so that it is finite at `x₀ ∈ {0, 1}`.
fn fast_second_ups_reduced_k1(b0: f64, x0: f64) -> f64 {
    let c = 1.0 - b0;
    let y = 1.0 - x0;
    let d1 = c * y + 1.0;
    let e = c * y + 2.0;
    2.0 * c * c * (c * y * y + (1.0 - 2.0 * x0)) / d1.powi(3)
        + c * c * y * (c * c * x0 * x0 - c * (5.0 - b0) * x0 + (4.0 - b0)) / (d1.powi(3) * e)
}

/// Exact `K = 1` second derivatives of the fast-environment projection map at
/// `(x₀, x₀, 0)`, obtained by solving the curvature system of the fast flow in
/// closed form: returns `(∂²Φ₀/∂x₀∂υ₀, ∂²Φ₀/∂υ₀²)`.
///
/// With `c = 1−b₀`, `y = 1−x₀`, `D = cy+1`, `E = cy+2`:
///
/// * `∂²Φ₀/∂x₀∂υ₀ = [−c⁴y⁴ + (c⁴−2c³)y³ + (3c³+c²)y² + (c²+3c)y − 2c] / (D³E)`;
/// * `∂²Φ₀/∂υ₀² = x₀(1−x₀)[2c⁴y³ + (6c³−c⁴)y² + (5c²−4c³)y − 4c²] / (D³E)`.
///
/// These agree with finite differences of the integrated flow and with the
/// generic reduction pipeline. They differ from
/// [`fast_second_derivatives_k1`]; both are kept so the discrepancy stays
/// visible.
pub fn fast_second_derivatives_k1_exact(b0: f64, x0: f64) -> (f64, f64) {
    let c = 1.0 - b0;
    let y = 1.0 - x0;
    let den = (c * y + 1.0).powi(3) * (c * y + 2.0);
    let mixed = (-c.powi(4) * y.powi(4) + (c.powi(4) - 2.0 * c.powi(3)) * y.powi(3)
        + (3.0 * c.powi(3) + c * c) * y * y
        + (c * c + 3.0 * c) * y
        - 2.0 * c)
        / den;
    (mixed, x0 * y * fast_second_ups_reduced_k1_exact(b0, x0))
}

fn fast_second_ups_reduced_k1_exact(b0: f64, x0: f64) -> f64 {
    let c = 1.0 - b0;
    let y = 1.0 - x0;
    let den = (c * y + 1.0).powi(3) * (c * y + 2.0);
    (2.0 * c.powi(4) * y.powi(3) + (6.0 * c.powi(3) - c.powi(4)) * y * y + (5.0 * c * c - 4.0 * c.powi(3)) * y
        - 4.0 * c * c)
        / den
}

/// The same two derivatives for any `K` from the generic reduction engine
/// applied to the fast flow (closed-form left eigenvector along the chart).
pub fn fast_second_derivatives(d: &GerminationDistribution, x0: f64) -> Result<(f64, f64), ReductionError> {
    let kind = FlowKind::FastEnv(d.clone());
    let flow = build_flow(&kind);
    let chart = chart_for(&kind)?;
    let along = |x: f64| Ok(fast_left_eigvec(d, x));
    let r = reduce(&flow, &chart, x0, Some(&along))?;
    let k = d.k();
    Ok((r.phi0_hess[(0, k + 1)], r.phi0_hess[(k + 1, k + 1)]))
}

/// The fast-environment drift modifier
/// `h = (1−b₀)²x(1−x)Φ″ + Φ_υυ/(x(1−x)) − 2(1−b₀)Φ_xυ + 2(1−b₀)((1−x)+b₀x)/((1−b₀)(1−x)+1)`
/// for `K = 1`, assembled from the stated derivatives
/// ([`fast_second_derivatives_k1`]); `h(0, 0) = 4/3`. See
/// [`h_function_exact`] for the version built from the exact derivatives.
pub fn h_function(x0: f64, b0: f64) -> f64 {
    let c = 1.0 - b0;
    let y = 1.0 - x0;
    let (mixed, _) = fast_second_derivatives_k1(b0, x0);
    c * c * x0 * y * drift_k1(b0, x0) + fast_second_ups_reduced_k1(b0, x0) - 2.0 * c * mixed
        + 2.0 * c * (y + b0 * x0) / (c * y + 1.0)
}

/// The drift modifier `h` assembled from the exact derivatives
/// ([`fast_second_derivatives_k1_exact`]). It simplifies to
///
/// `h = (1−b₀)[c⁴y³ + (4c³−c⁴)y² + (5c²−4c³)y − 4c² + 4c] / ((cy+1)(cy+2))`
///
/// with `c = 1−b₀`, `y = 1−x₀`; in particular `h(0, 0) = 5/6`.
pub fn h_function_exact(x0: f64, b0: f64) -> f64 {
    let c = 1.0 - b0;
    let y = 1.0 - x0;
    let (mixed, _) = fast_second_derivatives_k1_exact(b0, x0);
    c * c * x0 * y * drift_k1(b0, x0) + fast_second_ups_reduced_k1_exact(b0, x0) - 2.0 * c * mixed
        + 2.0 * c * (y + b0 * x0) / (c * y + 1.0)
}

// ---------------------------------------------------------------------------
// Slow environment
// ---------------------------------------------------------------------------

/// Derivatives of the slow-environment projection `Φ₀^{sl}(x, ξ) = ξΦ₀(x/ξ)`
/// at a point `(x₀, …, x₀, ξ)` of its manifold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowPhiDerivatives {
    /// `∂Φ₀/∂x₀ = ξ/(B(ξ−x₀)+ξ)`.
    pub d_x0: f64,
    /// `∂Φ₀/∂ξ = 0`.
    pub d_xi: f64,
    /// `∂²Φ₀/∂ξ² = 0`.
    pub d2_xi_xi: f64,
    /// `∂²Φ₀/∂ξ∂x₀ = −Bx₀/(B(ξ−x₀)+ξ)²`.
    pub d2_xi_x0: f64,
}

pub fn slow_phi_derivatives(d: &GerminationDistribution, x0: f64, xi: f64) -> SlowPhiDerivatives {
    let big_b = d.mean_germination_time();
    let den = big_b * (xi - x0) + xi;
    SlowPhiDerivatives { d_x0: xi / den, d_xi: 0.0, d2_xi_xi: 0.0, d2_xi_x0: -big_b * x0 / (den * den) }
}

//! The branching phase: a `(K+1)`-type critical branching process that
//! approximates the mutant while it is rare.
//!
//! Each type-0 particle has `Poiss(b₀)` type-0 offspring and `Poiss(M·b_i)`
//! type-`i` offspring; a type-`i` particle (`i ≥ 2`) becomes type `i−1`; a
//! type-1 particle becomes type 0 with probability `1/M` and dies otherwise.
//! The process is critical, `t·P(Z(t) ≠ 0) → 2(B+1)` and, conditionally on
//! survival, `Z₀(t)/t` is asymptotically exponential with tail
//! `exp(−2y(B+1)²)`.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{GerminationDistribution, ModelError};
use crate::rng::stream_rng;

/// Default Poisson scale `M`.
pub const DEFAULT_POISSON_SCALE: f64 = 10.0;
/// Default cap on the total number of particle-steps of one simulation call.
pub const DEFAULT_PARTICLE_STEP_BUDGET: u64 = 100_000_000;
/// Smallest accepted horizon.
pub const MIN_HORIZON: u64 = 10;
/// Smallest accepted number of replicates.
pub const MIN_REPLICATES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BranchingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation request: {0}")]
    InvalidInput(String),
    #[error("particle-step budget exhausted: more than {budget} particle-steps requested")]
    BudgetExceeded { budget: u64 },
}

/// Germination distribution together with the Poisson scale `M > 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingSpec {
    pub d: GerminationDistribution,
    poisson_scale: f64,
}

impl BranchingSpec {
    pub fn new(d: GerminationDistribution, poisson_scale: f64) -> Result<Self, ModelError> {
        if !(poisson_scale > 1.0 && poisson_scale.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "Poisson scale M must exceed 1, got {poisson_scale}"
            )));
        }
        Ok(Self { d, poisson_scale })
    }

    /// Spec with the default scale `M = 10`.
    pub fn with_default_scale(d: GerminationDistribution) -> Self {
        Self { d, poisson_scale: DEFAULT_POISSON_SCALE }
    }

    pub fn poisson_scale(&self) -> f64 {
        self.poisson_scale
    }
}

// ---------------------------------------------------------------------------
// Analytics
// ---------------------------------------------------------------------------

/// Mean matrix: first row `(b₀, Mb₁, …, Mb_K)`, subdiagonal `(1/M, 1, …, 1)`.
pub fn mean_matrix(spec: &BranchingSpec) -> DMatrix<f64> {
    let b = spec.d.b();
    let k = spec.d.k();
    let m = spec.poisson_scale;
    let mut out = DMatrix::zeros(k + 1, k + 1);
    out[(0, 0)] = b[0];
    for i in 1..=k {
        out[(0, i)] = m * b[i];
        out[(i, i - 1)] = if i == 1 { 1.0 / m } else { 1.0 };
    }
    out
}

/// Largest eigenvalue modulus of the mean matrix.
pub fn spectral_radius(spec: &BranchingSpec) -> f64 {
    mean_matrix(spec)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Perron eigenvectors of the mean matrix for the eigenvalue 1, normalised
/// so that `⟨u, 1⟩ = ⟨u, v⟩ = 1`:
/// `u = (M, 1, …, 1)/(M+K)`, `v = (M+K)/(M(B+1))·(1, M·Σ_{l≥1} b_l, …, M·b_K)`.
pub fn frobenius_eigenvectors(spec: &BranchingSpec) -> (DVector<f64>, DVector<f64>) {
    let k = spec.d.k();
    let m = spec.poisson_scale;
    let big_b = spec.d.mean_germination_time();
    let kf = k as f64;
    let u = DVector::from_iterator(k + 1, (0..=k).map(|i| if i == 0 { m } else { 1.0 } / (m + kf)));
    let scale = (m + kf) / (m * (big_b + 1.0));
    let v = DVector::from_iterator(k + 1, (0..=k).map(|i| scale * if i == 0 { 1.0 } else { m * spec.d.tail(i) }));
    (u, v)
}

/// `lim t·P(Z(t) ≠ 0) = 2(B+1)`.
pub fn survival_constant(d: &GerminationDistribution) -> f64 {
    2.0 * (d.mean_germination_time() + 1.0)
}

/// `lim P(Z₀(t)/t ≥ y | Z(t) ≠ 0) = exp(−2y(B+1)²)`.
pub fn conditional_tail(d: &GerminationDistribution, y: f64) -> f64 {
    let b1 = d.mean_germination_time() + 1.0;
    (-2.0 * y * b1 * b1).exp()
}

/// The splice map `ψ_B(y) = log((B+1)/(B+e^{−2y})) / (2(B+1)²)`.
pub fn psi(big_b: f64, y: f64) -> f64 {
    let b1 = big_b + 1.0;
    // log((B+1)/(B+e^{−2y})) = −log1p((e^{−2y}−1)/(B+1)), accurate for small y.
    -((-2.0 * y).exp_m1() / b1).ln_1p() / (2.0 * b1 * b1)
}

/// Exact `P(Z(t) ≠ 0 | Z(0) = e₀)` for `t = 0..=horizon`, by iterating the
/// offspring generating functions from `s = 0`.
pub fn exact_survival(spec: &BranchingSpec, horizon: u64) -> Vec<f64> {
    let b = spec.d.b();
    let k = spec.d.k();
    let m = spec.poisson_scale;
    // q[i] = P(extinct by step t | one particle of type i).
    let mut q = vec![0.0; k + 1];
    let mut out = vec![1.0];
    for _ in 0..horizon {
        let mut next = vec![0.0; k + 1];
        let exponent: f64 = b[0] * (q[0] - 1.0) + (1..=k).map(|i| m * b[i] * (q[i] - 1.0)).sum::<f64>();
        next[0] = exponent.exp();
        next[1] = 1.0 - 1.0 / m + q[0] / m;
        for i in 2..=k {
            next[i] = q[i - 1];
        }
        q = next;
        out.push(1.0 - q[0]);
    }
    out
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Monte Carlo summary of the branching process started from one type-0
/// particle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchingSimulation {
    pub horizon: u64,
    pub replicates: usize,
    pub seed: u64,
    /// `(t, t·P̂(Z(t) ≠ 0), standard error of t·P̂)` for `t = 1..=horizon`.
    pub survival_curve: Vec<(u64, f64, f64)>,
    /// `Z₀(horizon)/horizon` for every replicate alive at the horizon.
    pub tail_samples: Vec<f64>,
    /// Total particle-steps simulated.
    pub particle_steps: u64,
}

impl BranchingSimulation {
    /// `t·P̂` and its standard error at time `t`.
    pub fn scaled_survival_at(&self, t: u64) -> Option<(f64, f64)> {
        self.survival_curve.iter().find(|(s, _, _)| *s == t).map(|&(_, p, se)| (p, se))
    }
}

struct ReplicateOutcome {
    /// Last time at which the process was alive.
    last_alive: u64,
    z0_final: u64,
}

fn poisson_draw<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // The rate is positive and finite here, so construction cannot fail.
    Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

fn binomial_draw<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 {
        return 0;
    }
    Binomial::new(n, p).map(|d| d.sample(rng)).unwrap_or(0)
}

fn run_replicate(
    spec: &BranchingSpec,
    horizon: u64,
    seed: u64,
    index: u64,
    used: &AtomicU64,
    budget: u64,
) -> Result<ReplicateOutcome, BranchingError> {
    let b = spec.d.b();
    let k = spec.d.k();
    let m = spec.poisson_scale;
    let mut rng = stream_rng(seed, index);
    let mut z = vec![0u64; k + 1];
    z[0] = 1;
    let mut last_alive = 0;
    for t in 1..=horizon {
        let total: u64 = z.iter().sum();
        if used.fetch_add(total, Ordering::Relaxed) + total > budget {
            return Err(BranchingError::BudgetExceeded { budget });
        }
        let z0 = z[0] as f64;
        let mut next = vec![0u64; k + 1];
        next[0] = poisson_draw(&mut rng, b[0] * z0) + binomial_draw(&mut rng, z[1], 1.0 / m);
        for i in 1..=k {
            let carried = if i < k { z[i + 1] } else { 0 };
            next[i] = poisson_draw(&mut rng, m * b[i] * z0) + carried;
        }
        z = next;
        if z.iter().all(|&c| c == 0) {
            break;
        }
        last_alive = t;
    }
    Ok(ReplicateOutcome { last_alive, z0_final: if last_alive == horizon { z[0] } else { 0 } })
}

/// Simulate `replicates` independent copies up to `horizon` with the default
/// particle-step budget.
pub fn simulate_branching(
    spec: &BranchingSpec,
    horizon: u64,
    replicates: usize,
    seed: u64,
) -> Result<BranchingSimulation, BranchingError> {
    simulate_branching_with_budget(spec, horizon, replicates, seed, DEFAULT_PARTICLE_STEP_BUDGET)
}

/// Simulate with an explicit cap on the total number of particle-steps.
/// Offspring numbers of a generation are drawn in aggregate (sums of
/// independent Poisson laws are Poisson, independent thinnings are binomial),
/// which is equal in law to the particle-by-particle description.
pub fn simulate_branching_with_budget(
    spec: &BranchingSpec,
    horizon: u64,
    replicates: usize,
    seed: u64,
    budget: u64,
) -> Result<BranchingSimulation, BranchingError> {
    if replicates < MIN_REPLICATES {
        return Err(BranchingError::InvalidInput(format!(
            "at least {MIN_REPLICATES} replicates are required, got {replicates}"
        )));
    }
    if horizon < MIN_HORIZON {
        return Err(BranchingError::InvalidInput(format!(
            "horizon must be at least {MIN_HORIZON}, got {horizon}"
        )));
    }
    let used = AtomicU64::new(0);
    let outcomes: Vec<ReplicateOutcome> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| run_replicate(spec, horizon, seed, i, &used, budget))
        .collect::<Result<_, _>>()?;
    let mut alive_count = vec![0u64; horizon as usize + 1];
    let mut tail_samples = Vec::new();
    for o in &outcomes {
        alive_count[o.last_alive as usize] += 1;
        if o.last_alive == horizon {
            tail_samples.push(o.z0_final as f64 / horizon as f64);
        }
    }
    // Convert "last alive at" counts into "alive at t" counts.
    for t in (0..horizon as usize).rev() {
        alive_count[t] += alive_count[t + 1];
    }
    let n = replicates as f64;
    let survival_curve = (1..=horizon)
        .map(|t| {
            let p = alive_count[t as usize] as f64 / n;
            let tf = t as f64;
            (t, tf * p, tf * (p * (1.0 - p) / n).sqrt())
        })
        .collect();
    Ok(BranchingSimulation {
        horizon,
        replicates,
        seed,
        survival_curve,
        tail_samples,
        particle_steps: used.load(Ordering::Relaxed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(b: &[f64]) -> BranchingSpec {
        BranchingSpec::with_default_scale(GerminationDistribution::new(b.to_vec()).unwrap())
    }

    #[test]
    fn mean_matrix_pattern() {
        let m = mean_matrix(&spec(&[0.5, 0.5]));
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.5, 5.0, 0.1, 0.0]));
    }

    #[test]
    fn eigenvectors_are_eigenvectors() {
        let s = spec(&[0.4, 0.3, 0.2, 0.1]);
        let m = mean_matrix(&s);
        let (u, v) = frobenius_eigenvectors(&s);
        assert!((&m * &u - &u).amax() < 1e-14);
        assert!((m.transpose() * &v - &v).amax() < 1e-13);
        assert!((u.sum() - 1.0).abs() < 1e-15);
        assert!((u.dot(&v) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn psi_edge_values() {
        assert_eq!(psi(1.3, 0.0), 0.0);
        assert!((psi(0.0, 0.37) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn exact_survival_monotype() {
        // Poisson(1) Galton–Watson: q_{t+1} = exp(q_t − 1).
        let s = exact_survival(&spec(&[1.0, 0.0]), 3);
        let q1 = (-1.0f64).exp();
        let q2 = (q1 - 1.0).exp();
        assert!((s[1] - (1.0 - q1)).abs() < 1e-15);
        assert!((s[2] - (1.0 - q2)).abs() < 1e-15);
    }

    #[test]
    fn rejects_too_few_replicates() {
        assert!(matches!(
            simulate_branching(&spec(&[0.5, 0.5]), 50, 0, 1),
            Err(BranchingError::InvalidInput(_))
        ));
    }

    #[test]
    fn tiny_budget_is_reported() {
        assert_eq!(
            simulate_branching_with_budget(&spec(&[0.5, 0.5]), 50, MIN_REPLICATES, 1, 10),
            Err(BranchingError::BudgetExceeded { budget: 10 })
        );
    }
}

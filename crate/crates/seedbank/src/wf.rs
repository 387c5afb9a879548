//! Exact discrete-generation Wright–Fisher chains with a seed bank in the
//! constant, slowly changing and rapidly fluctuating environments, their
//! one-step conditional means, and a replicate-parallel fixation harness.
//!
//! The state holds the mutant counts `(X₀, …, X_K)`: `X₀` mature plants of the
//! current generation and `X_i` those of `i` generations ago, whose seeds may
//! still germinate. One generation draws the new `X₀` binomially and shifts
//! the history by one slot.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{FastEnvSpec, GerminationDistribution, ModelError, ScalarFn, SlowEnvSpec};
use crate::rng::stream_rng;

/// Smallest accepted number of replicates of [`run_fixation`].
pub const MIN_WF_REPLICATES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WfError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation request: {0}")]
    InvalidInput(String),
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

/// Regime-specific part of the state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EnvState {
    None,
    /// Current population-size factor `Ξ(t)`.
    Xi(f64),
    /// Environment marks `(Υ₀(t), …, Υ_{K−1}(t))`, newest first.
    Marks(Vec<i8>),
}

/// Mutant counts plus environment state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WfState {
    pub x_counts: Vec<u64>,
    pub env: EnvState,
}

impl WfState {
    /// Constant-environment state with every slot at `count`.
    pub fn diagonal(k: usize, count: u64) -> Self {
        Self { x_counts: vec![count; k + 1], env: EnvState::None }
    }

    /// All mutant counts zero.
    pub fn is_lost(&self) -> bool {
        self.x_counts.iter().all(|&c| c == 0)
    }
}

/// Number of mature individuals `⌊ΞN⌋`.
pub fn population(xi: f64, n: u64) -> u64 {
    (xi * n as f64).floor() as u64
}

// ---------------------------------------------------------------------------
// Transition kernels
// ---------------------------------------------------------------------------

/// Success probability
/// `[b₀w₀X₀ + Σ_{i≥1} b_i w_i X_i] / [(P − X₀ + b₀X₀)w₀ + Σ_{i≥1} b_i w_i X_i]`
/// with `P` mature individuals and selection weights `w_i`; all three regimes
/// share this expression so that unit weights reproduce the constant regime
/// bit for bit.
fn success_probability(b: &[f64], x: &[u64], pop: u64, w0: f64, w: impl Fn(usize) -> f64) -> f64 {
    let x0 = x[0] as f64;
    let mut rest = 0.0;
    for i in 1..b.len() {
        rest += b[i] * w(i) * x[i] as f64;
    }
    let num = b[0] * w0 * x0 + rest;
    let den = ((pop as f64 - x0) + b[0] * x0) * w0 + rest;
    if den <= 0.0 {
        return 0.0;
    }
    (num / den).clamp(0.0, 1.0)
}

fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    // `p ∈ (0, 1)` here, so construction cannot fail.
    Binomial::new(n, p).map(|d| d.sample(rng)).unwrap_or(0)
}

/// Shift the history one slot and insert the new mature count.
fn age(x: &mut [u64], new0: u64) {
    x.rotate_right(1);
    x[0] = new0;
}

fn constant_in_place<R: Rng>(x: &mut [u64], b: &[f64], n: u64, rng: &mut R) {
    let p = success_probability(b, x, n, 1.0, |_| 1.0);
    let new0 = binomial(rng, n, p);
    age(x, new0);
}

/// One generation of the constant environment:
/// `X₀(t+1) ~ Bin(N, Σb_iX_i/((N−X₀)+Σb_iX_i))`, `X_i(t+1) = X_{i−1}(t)`.
pub fn step_constant<R: Rng>(state: &WfState, d: &GerminationDistribution, n: u64, rng: &mut R) -> WfState {
    let mut x = state.x_counts.clone();
    constant_in_place(&mut x, d.b(), n, rng);
    WfState { x_counts: x, env: EnvState::None }
}

fn slow_in_place<R: Rng>(x: &mut [u64], xi: &mut f64, b: &[f64], n: u64, env: &EnvProcess, rng: &mut R) {
    let xi_next = env.next(*xi, rng);
    let p = success_probability(b, x, population(*xi, n), 1.0, |_| 1.0);
    let new0 = binomial(rng, population(xi_next, n), p);
    age(x, new0);
    *xi = xi_next;
}

/// One generation of the slowly changing environment: draw `Ξ(t+1)`, then
/// `X₀(t+1) ~ Bin(⌊Ξ(t+1)N⌋, Σb_iX_i/((⌊Ξ(t)N⌋−X₀)+Σb_iX_i))`.
pub fn step_slow<R: Rng>(
    state: &WfState,
    d: &GerminationDistribution,
    n: u64,
    env: &EnvProcess,
    rng: &mut R,
) -> Result<WfState, WfError> {
    let EnvState::Xi(mut xi) = state.env else {
        return Err(WfError::InvalidInput("slow-environment step needs a Ξ state".into()));
    };
    let mut x = state.x_counts.clone();
    slow_in_place(&mut x, &mut xi, d.b(), n, env, rng);
    Ok(WfState { x_counts: x, env: EnvState::Xi(xi) })
}

fn draw_mark<R: Rng>(p: f64, rng: &mut R) -> i8 {
    if p <= 0.0 {
        return 0;
    }
    let u: f64 = rng.random();
    if u < p {
        1
    } else if u < 2.0 * p {
        -1
    } else {
        0
    }
}

fn fast_in_place<R: Rng>(x: &mut [u64], marks: &mut [i8], b: &[f64], n: u64, fenv: &FastEnvSpec, rng: &mut R) {
    let s = fenv.s_of_n(n);
    let new_mark = draw_mark(fenv.p, rng);
    let w0 = 1.0 + s * new_mark as f64;
    let p = success_probability(b, x, n, w0, |i| 1.0 + s * marks[i - 1] as f64);
    let new0 = binomial(rng, n, p);
    age(x, new0);
    if !marks.is_empty() {
        marks.rotate_right(1);
        marks[0] = new_mark;
    }
}

/// One generation of the rapidly fluctuating environment: draw
/// `Υ₀(t+1) ∈ {−1, 0, +1}` with `P(±1) = p`, then
/// `X₀(t+1) ~ Bin(N, [b₀(1+s_NΥ₀(t+1))X₀ + Σ_{i≥1}b_i(1+s_NΥ_{i−1}(t))X_i] /
/// [(N−X₀+b₀X₀)(1+s_NΥ₀(t+1)) + Σ_{i≥1}b_i(1+s_NΥ_{i−1}(t))X_i])`,
/// and shift both the counts and the marks.
pub fn step_fast<R: Rng>(
    state: &WfState,
    d: &GerminationDistribution,
    n: u64,
    fenv: &FastEnvSpec,
    rng: &mut R,
) -> Result<WfState, WfError> {
    let EnvState::Marks(marks) = &state.env else {
        return Err(WfError::InvalidInput("fast-environment step needs a mark history".into()));
    };
    if marks.len() != d.k() {
        return Err(WfError::InvalidInput(format!("expected {} marks, got {}", d.k(), marks.len())));
    }
    let mut x = state.x_counts.clone();
    let mut m = marks.clone();
    fast_in_place(&mut x, &mut m, d.b(), n, fenv, rng);
    Ok(WfState { x_counts: x, env: EnvState::Marks(m) })
}

// ---------------------------------------------------------------------------
// Conditional means
// ---------------------------------------------------------------------------

/// `E[x₀(t+1) − x₀(t) | x] = (1−x₀)(Σ_{i≥1}b_ix_i − (1−b₀)x₀)/((1−x₀)+Σb_ix_i)`
/// for proportions `x_i = X_i/N`.
pub fn expected_increment_constant(b: &[f64], x: &[f64]) -> f64 {
    let tail: f64 = (1..b.len()).map(|i| b[i] * x[i]).sum();
    let all = b[0] * x[0] + tail;
    (1.0 - x[0]) * (tail - (1.0 - b[0]) * x[0]) / ((1.0 - x[0]) + all)
}

/// `E[x₀(t+1) − x₀(t) | x, ξ(t), ξ(t+1)] = ξ(t+1)Σb_ix_i/((ξ(t)−x₀)+Σb_ix_i) − x₀`
/// with `ξ(·) = ⌊Ξ(·)N⌋/N`.
pub fn expected_increment_slow(b: &[f64], x: &[f64], xi_now: f64, xi_next: f64) -> f64 {
    let all: f64 = b.iter().zip(x).map(|(bi, xi)| bi * xi).sum();
    xi_next * all / ((xi_now - x[0]) + all) - x[0]
}

/// The two-term conditional mean of the fast environment given the mark
/// history `(Υ₀(t), …, Υ_{K−1}(t))`: with `S = Σ_{i≥1}b_i(1+s_NΥ_{i−1})x_i`,
/// `h = 1−x₀+b₀x₀+S` and `f = (1−x₀)+b₀x₀`,
///
/// `E[Δx₀] = (1−x₀)(S−(1−b₀)x₀)/h + 2p s_N²(1−x₀) f S / ((h² − s_N²f²)h)`.
pub fn expected_increment_fast(b: &[f64], x: &[f64], marks: &[i8], p: f64, s_n: f64) -> f64 {
    let s: f64 = (1..b.len()).map(|i| b[i] * (1.0 + s_n * marks[i - 1] as f64) * x[i]).sum();
    let f = (1.0 - x[0]) + b[0] * x[0];
    let h = f + s;
    (1.0 - x[0]) * (s - (1.0 - b[0]) * x[0]) / h
        + 2.0 * p * s_n * s_n * (1.0 - x[0]) * f * s / ((h * h - s_n * s_n * f * f) * h)
}

// ---------------------------------------------------------------------------
// Environment processes
// ---------------------------------------------------------------------------

/// Concrete discrete environment processes.
#[derive(Clone)]
pub enum EnvKind {
    /// `ΔΞ = rΞ(ξ∞ − Ξ)/N` exactly.
    DeterministicLogistic { r: f64, xi_inf: f64 },
    /// `ΔΞ = α(Ξ)/N ± η(Ξ)/√N` with equal probability, reflected into the box.
    ReflectedWalk { alpha: ScalarFn, eta: ScalarFn },
}

impl std::fmt::Debug for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::DeterministicLogistic { r, xi_inf } => {
                f.debug_struct("DeterministicLogistic").field("r", r).field("xi_inf", xi_inf).finish()
            }
            Self::ReflectedWalk { .. } => f.write_str("ReflectedWalk"),
        }
    }
}

/// Discrete environment process on `[xi_min, xi_max]` for population scale `N`.
#[derive(Debug, Clone)]
pub struct EnvProcess {
    pub kind: EnvKind,
    pub xi_min: f64,
    pub xi_max: f64,
    pub n: u64,
}

impl EnvProcess {
    fn reflect(&self, v: f64) -> f64 {
        let v = if v > self.xi_max { 2.0 * self.xi_max - v } else { v };
        let v = if v < self.xi_min { 2.0 * self.xi_min - v } else { v };
        v.clamp(self.xi_min, self.xi_max)
    }

    /// Draw `Ξ(t+1)` given `Ξ(t) = xi`. No randomness is consumed when the
    /// step is deterministic.
    pub fn next<R: Rng>(&self, xi: f64, rng: &mut R) -> f64 {
        let n = self.n as f64;
        match &self.kind {
            EnvKind::DeterministicLogistic { r, xi_inf } => self.reflect(xi + r * xi * (xi_inf - xi) / n),
            EnvKind::ReflectedWalk { alpha, eta } => {
                let e = eta(xi);
                let jump = if e == 0.0 {
                    0.0
                } else if rng.random::<bool>() {
                    e / n.sqrt()
                } else {
                    -e / n.sqrt()
                };
                self.reflect(xi + alpha(xi) / n + jump)
            }
        }
    }

    /// The reflected walk realising the diffusion limit of `env`.
    pub fn from_spec(env: &SlowEnvSpec, n: u64) -> Result<Self, ModelError> {
        make_env_process(
            EnvKind::ReflectedWalk { alpha: env.alpha.clone(), eta: env.eta.clone() },
            env.xi_min,
            env.xi_max,
            n,
        )
    }
}

/// Validate and build an environment process. The drift must point into the
/// box at its ends and the noise must vanish there.
pub fn make_env_process(kind: EnvKind, xi_min: f64, xi_max: f64, n: u64) -> Result<EnvProcess, ModelError> {
    if n == 0 {
        return Err(ModelError::InvalidParameter("population scale N must be positive".into()));
    }
    match &kind {
        EnvKind::DeterministicLogistic { r, xi_inf } => {
            let (r, xi_inf) = (*r, *xi_inf);
            SlowEnvSpec::new(
                xi_min,
                xi_max,
                std::sync::Arc::new(move |xi| r * xi * (xi_inf - xi)),
                std::sync::Arc::new(|_| 0.0),
            )?;
        }
        EnvKind::ReflectedWalk { alpha, eta } => {
            SlowEnvSpec::new(xi_min, xi_max, alpha.clone(), eta.clone())?;
        }
    }
    Ok(EnvProcess { kind, xi_min, xi_max, n })
}

// ---------------------------------------------------------------------------
// Fixation harness
// ---------------------------------------------------------------------------

/// Monte Carlo fixation estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixationEstimate {
    /// Fraction of non-censored replicates that fixed (`NaN` if none ended).
    pub p_hat: f64,
    pub std_err: f64,
    pub replicates: usize,
    pub fixed_count: usize,
    pub lost_count: usize,
    pub censored_count: usize,
    pub master_seed: u64,
}

impl FixationEstimate {
    /// Aggregate per-replicate outcomes (`Some(true)` fixed, `Some(false)`
    /// lost, `None` censored).
    pub fn from_outcomes(outcomes: &[Option<bool>], master_seed: u64) -> Self {
        let fixed_count = outcomes.iter().filter(|o| **o == Some(true)).count();
        let lost_count = outcomes.iter().filter(|o| **o == Some(false)).count();
        let ended = fixed_count + lost_count;
        let (p_hat, std_err) = if ended == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let p = fixed_count as f64 / ended as f64;
            (p, (p * (1.0 - p) / ended as f64).sqrt())
        };
        Self {
            p_hat,
            std_err,
            replicates: outcomes.len(),
            fixed_count,
            lost_count,
            censored_count: outcomes.len() - ended,
            master_seed,
        }
    }
}

/// Which chain [`run_fixation`] simulates.
#[derive(Debug, Clone)]
pub enum Regime {
    Constant,
    /// Slow environment started from `Ξ(0) = xi0`.
    Slow { env: EnvProcess, xi0: f64 },
    /// Fast environment with all initial marks `0`.
    Fast(FastEnvSpec),
}

fn run_one(regime: &Regime, b: &[f64], n: u64, count: u64, max_generations: u64, seed: u64, index: u64) -> Option<bool> {
    let mut rng = stream_rng(seed, index);
    let k = b.len() - 1;
    let mut x = vec![count; k + 1];
    let mut marks = vec![0i8; k];
    let mut xi = match regime {
        Regime::Slow { xi0, .. } => *xi0,
        _ => 1.0,
    };
    for _ in 0..=max_generations {
        if x.iter().all(|&c| c == 0) {
            return Some(false);
        }
        let pop = population(xi, n);
        if x[0] == pop {
            return Some(true);
        }
        match regime {
            Regime::Constant => constant_in_place(&mut x, b, n, &mut rng),
            Regime::Slow { env, .. } => slow_in_place(&mut x, &mut xi, b, n, env, &mut rng),
            Regime::Fast(f) => fast_in_place(&mut x, &mut marks, b, n, f, &mut rng),
        }
    }
    None
}

/// Estimate the probability that the mutant fixes (`X₀` reaches the whole
/// mature population, an absorbing state) rather than being lost (every
/// count zero, also absorbing).
///
/// `start` is the mutant proportion on the diagonal: every slot starts at
/// `round(start·P₀)` with `P₀ = N` (or `⌊Ξ(0)N⌋` in the slow regime). Runs
/// still undecided after `max_generations` are censored. Replicate `i` uses
/// random stream `i` of `seed`, so results do not depend on thread count.
pub fn run_fixation(
    regime: &Regime,
    d: &GerminationDistribution,
    n: u64,
    start: f64,
    replicates: usize,
    max_generations: u64,
    seed: u64,
) -> Result<FixationEstimate, WfError> {
    if replicates < MIN_WF_REPLICATES {
        return Err(WfError::InvalidInput(format!(
            "at least {MIN_WF_REPLICATES} replicates are required, got {replicates}"
        )));
    }
    if !(0.0..=1.0).contains(&start) || n == 0 {
        return Err(WfError::InvalidInput(format!("need start in [0, 1] and N > 0 (got {start}, {n})")));
    }
    let pop0 = match regime {
        Regime::Slow { env, xi0 } => {
            if !(env.xi_min..=env.xi_max).contains(xi0) {
                return Err(WfError::InvalidInput(format!("Ξ(0) = {xi0} lies outside the environment box")));
            }
            population(*xi0, n)
        }
        Regime::Fast(_) | Regime::Constant => n,
    };
    let count = (start * pop0 as f64).round() as u64;
    let b = d.b();
    let outcomes: Vec<Option<bool>> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| run_one(regime, b, n, count, max_generations, seed, i))
        .collect();
    Ok(FixationEstimate::from_outcomes(&outcomes, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ageing_shifts_history() {
        let mut x = vec![5, 6, 7];
        age(&mut x, 9);
        assert_eq!(x, vec![9, 5, 6]);
    }

    #[test]
    fn all_mutant_probability_is_one() {
        assert_eq!(success_probability(&[0.4, 0.6], &[10, 10], 10, 1.0, |_| 1.0), 1.0);
    }

    #[test]
    fn fast_mean_matches_direct_average() {
        // Average the success probability over the three values of Υ₀(t+1).
        let (b, x, marks, p, s) = ([0.3, 0.5, 0.2], [0.4, 0.25, 0.6], [1i8, -1], 0.2, 0.3);
        let prob = |u: f64| {
            let w = |i: usize| 1.0 + s * marks[i - 1] as f64;
            let rest: f64 = (1..3).map(|i| b[i] * w(i) * x[i]).sum();
            (b[0] * x[0] * (1.0 + s * u) + rest) / ((1.0 - x[0] + b[0] * x[0]) * (1.0 + s * u) + rest)
        };
        let direct = (1.0 - 2.0 * p) * prob(0.0) + p * (prob(1.0) + prob(-1.0)) - x[0];
        assert!((expected_increment_fast(&b, &x, &marks, p, s) - direct).abs() < 1e-15);
    }

    #[test]
    fn estimate_counts_add_up() {
        let e = FixationEstimate::from_outcomes(&[Some(true), Some(false), None, Some(false)], 3);
        assert_eq!((e.fixed_count, e.lost_count, e.censored_count, e.replicates), (1, 2, 1, 4));
        assert!((e.p_hat - 1.0 / 3.0).abs() < 1e-15);
    }
}

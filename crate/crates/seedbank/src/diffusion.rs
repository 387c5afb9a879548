//! Diffusion limits of the three regimes, an Euler–Maruyama integrator with
//! absorbing boundaries, scale-function fixation probabilities, the bound
//! `Ψ(B, y)` and the diagnostic `g` of the slowly changing environment.
//!
//! States are fixed-size pairs so that the Monte Carlo inner loop does not
//! allocate; one-dimensional specifications leave the second coordinate at
//! zero. Diffusion matrices have one column per independent Brownian motion.

use std::cell::RefCell;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::branching::psi;
use crate::flows::{drift_k1, drift_k2, drift_second_derivative, h_function_exact};
use crate::model::{FastEnvSpec, GerminationDistribution, SlowEnvSpec};
use crate::numerics::cheb::Chebyshev;
use crate::numerics::quad::integrate;
use crate::reduction::ReductionError;
use crate::rng::stream_rng;
use crate::wf::FixationEstimate;

/// Distance below which a coordinate is snapped onto an absorbing value.
pub const ABSORPTION_SNAP: f64 = 1e-9;
/// Chebyshev degree used to tabulate `∂²Φ₀/∂x₀²` for `K ≥ 3`.
pub const CURVATURE_DEGREE: usize = 48;
/// Number of panels of the cumulative scale-function quadrature.
const SCALE_PANELS: usize = 64;
const SCALE_ABS_TOL: f64 = 1e-14;
const SCALE_REL_TOL: f64 = 1e-12;
const SCALE_MAX_DEPTH: u32 = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("invalid step size: dt = {dt}, t_end = {t_end}")]
    StepSizeInvalid { dt: f64, t_end: f64 },
    #[error("diffusion coefficient vanishes or is not finite at x = {at}")]
    DegenerateDiffusion { at: f64 },
    #[error("closed-form fast-environment drift is only available for K = 1 (got K = {0})")]
    UnsupportedK(usize),
    #[error("initial state {0:?} lies outside the domain")]
    InvalidState(Vec<f64>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature did not converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },
    #[error("backward equation did not settle before t_end = {t_end}")]
    NoConvergence { t_end: f64 },
    #[error(transparent)]
    Reduction(#[from] ReductionError),
}

// ---------------------------------------------------------------------------
// Specifications
// ---------------------------------------------------------------------------

/// State vector (the second entry is unused for one-dimensional SDEs).
pub type State = [f64; 2];
/// Diffusion matrix: row `i` is coordinate `i`, column `j` is noise `j`.
pub type NoiseMatrix = [[f64; 2]; 2];
pub type DriftFn = Arc<dyn Fn(&State, f64) -> State + Send + Sync>;
pub type NoiseFn = Arc<dyn Fn(&State, f64) -> NoiseMatrix + Send + Sync>;
/// Scalar coefficient `x ↦ f(x)` on `[0, 1]`.
pub type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Absorbing value of a coordinate: a constant, or the current value of
/// another coordinate (the count form absorbs `x₀` at `ξ`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Boundary {
    Value(f64),
    Coordinate(usize),
}

/// A one- or two-dimensional Itô SDE `dX = μ(X,t)dt + Σ(X,t)dW`.
#[derive(Clone)]
pub struct SdeSpec {
    pub dim: usize,
    pub drift: DriftFn,
    pub diffusion: NoiseFn,
    /// Box `[lo, hi]` per coordinate.
    pub domain: [(f64, f64); 2],
    /// `upper_link[i] = Some(j)` additionally constrains `X_i ≤ X_j`.
    pub upper_link: [Option<usize>; 2],
    /// Absorbing boundaries per coordinate.
    pub absorbing: [Vec<Boundary>; 2],
    pub name: &'static str,
}

impl std::fmt::Debug for SdeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("upper_link", &self.upper_link)
            .field("absorbing", &self.absorbing)
            .finish_non_exhaustive()
    }
}

impl SdeSpec {
    /// Drift at `(x, t)`.
    pub fn drift_at(&self, x: &State, t: f64) -> State {
        (self.drift)(x, t)
    }

    /// Diffusion matrix at `(x, t)`.
    pub fn diffusion_at(&self, x: &State, t: f64) -> NoiseMatrix {
        (self.diffusion)(x, t)
    }

    fn boundary_value(&self, b: Boundary, x: &State) -> f64 {
        match b {
            Boundary::Value(v) => v,
            Boundary::Coordinate(j) => x[j],
        }
    }

    fn contains(&self, x: &State) -> bool {
        (0..self.dim).all(|i| {
            let (lo, hi) = self.domain[i];
            let upper_ok = self.upper_link[i].is_none_or(|j| x[i] <= x[j]);
            x[i].is_finite() && x[i] >= lo && x[i] <= hi && upper_ok
        })
    }

    fn clamp(&self, x: &mut State) {
        for i in 0..self.dim {
            let (lo, hi) = self.domain[i];
            x[i] = x[i].clamp(lo, hi);
        }
        for i in 0..self.dim {
            if let Some(j) = self.upper_link[i] {
                x[i] = x[i].min(x[j]);
            }
        }
    }
}

/// `∂²Φ₀/∂x₀²` of the constant environment as a cheap function on `[0, 1]`:
/// closed forms for `K ≤ 2`, a Chebyshev table of the reduction pipeline
/// otherwise.
pub fn curvature_fn(d: &GerminationDistribution) -> Result<Coefficient, DiffusionError> {
    let b = d.b().to_vec();
    match d.k() {
        1 => Ok(Arc::new(move |x| drift_k1(b[0], x))),
        2 => Ok(Arc::new(move |x| drift_k2([b[0], b[1], b[2]], x))),
        _ => {
            let mut failure = None;
            let table = Chebyshev::fit(
                |x| match drift_second_derivative(d, x) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                },
                0.0,
                1.0,
                CURVATURE_DEGREE,
            );
            match failure {
                Some(e) => Err(e.into()),
                None => Ok(Arc::new(move |x| table.eval(x))),
            }
        }
    }
}

/// `∂²Φ₀/∂x₀²` at a single point (closed forms for `K ≤ 2`).
pub fn curvature_at(d: &GerminationDistribution, x: f64) -> Result<f64, DiffusionError> {
    let b = d.b();
    Ok(match d.k() {
        1 => drift_k1(b[0], x),
        2 => drift_k2([b[0], b[1], b[2]], x),
        _ => drift_second_derivative(d, x)?,
    })
}

fn sqrt_pos(v: f64) -> f64 {
    v.max(0.0).sqrt()
}

/// Constant-environment diffusion
/// `dx = ½x(1−x)∂²Φ₀/∂x₀² dt + √(x(1−x))/(B(1−x)+1) dW`.
pub fn sde_constant(d: &GerminationDistribution) -> Result<SdeSpec, DiffusionError> {
    let phi2 = curvature_fn(d)?;
    let big_b = d.mean_germination_time();
    Ok(one_dimensional(
        "constant",
        Arc::new(move |x| 0.5 * x * (1.0 - x) * phi2(x)),
        Arc::new(move |x| sqrt_pos(x * (1.0 - x)) / (big_b * (1.0 - x) + 1.0)),
    ))
}

/// Fast-environment diffusion for `K = 1`: the constant-environment drift plus
/// `p·s²·x(1−x)·h(x, b₀)`, with `h` assembled from the exact second
/// derivatives of the fast projection map ([`h_function_exact`]).
pub fn sde_fast_env(d: &GerminationDistribution, fenv: &FastEnvSpec) -> Result<SdeSpec, DiffusionError> {
    if d.k() != 1 {
        return Err(DiffusionError::UnsupportedK(d.k()));
    }
    let b0 = d.b0();
    let big_b = d.mean_germination_time();
    let extra = fenv.p * fenv.s * fenv.s;
    Ok(one_dimensional(
        "fast-environment",
        Arc::new(move |x| x * (1.0 - x) * (0.5 * drift_k1(b0, x) + extra * h_function_exact(x, b0))),
        Arc::new(move |x| sqrt_pos(x * (1.0 - x)) / (big_b * (1.0 - x) + 1.0)),
    ))
}

/// Autonomous one-dimensional SDE on `[0, 1]` absorbed at both ends.
pub fn one_dimensional(name: &'static str, drift: Coefficient, noise: Coefficient) -> SdeSpec {
    SdeSpec {
        dim: 1,
        drift: Arc::new(move |x, _| [drift(x[0]), 0.0]),
        diffusion: Arc::new(move |x, _| [[noise(x[0]), 0.0], [0.0, 0.0]]),
        domain: [(0.0, 1.0), (0.0, 0.0)],
        upper_link: [None, None],
        absorbing: [vec![Boundary::Value(0.0), Boundary::Value(1.0)], vec![]],
        name,
    }
}

/// Which mutant coordinate the slow-environment SDE is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SlowVariable {
    /// Count `x₀ ∈ [0, ξ]`.
    Count,
    /// Proportion `ρ₀ = x₀/ξ ∈ [0, 1]`.
    Proportion,
}

/// Slowly-changing-environment diffusion for the pair `(x₀ or ρ₀, ξ)`.
///
/// Columns of the diffusion matrix are `(W₀, W_env)`. With `ρ = x₀/ξ`,
/// `c = B(1−ρ)+1` and `Φ″ = ∂²Φ₀/∂x₀²(ρ)`:
///
/// * count form: drift `½Φ″(x(ξ−x)+η²x²)/ξ² + xα/(B(ξ−x)+ξ) − Bx²η²/(ξ(B(ξ−x)+ξ)²)`,
///   noise `(√(ξx(ξ−x))/(B(ξ−x)+ξ), xη/(B(ξ−x)+ξ))`;
/// * proportion form: the Itô transform of the count form,
///   drift `½Φ″ρ(1−ρ)/ξ + ½Φ″ρ²η²/ξ − Bρ(1−ρ)α/(cξ) + Bρη²((1−ρ)c−ρ)/(ξ²c²)`,
///   noise `(√(ρ(1−ρ))/(c√ξ), −Bρ(1−ρ)η/(cξ))`;
/// * environment: `dξ = α(ξ)dt + η(ξ)dW_env`.
pub fn sde_slow_env(
    d: &GerminationDistribution,
    env: &SlowEnvSpec,
    variable: SlowVariable,
) -> Result<SdeSpec, DiffusionError> {
    let phi2 = curvature_fn(d)?;
    let big_b = d.mean_germination_time();
    let (alpha, eta) = (env.alpha.clone(), env.eta.clone());
    let eta2 = env.eta.clone();
    let xi_dom = (env.xi_min, env.xi_max);
    let spec = match variable {
        SlowVariable::Count => SdeSpec {
            dim: 2,
            drift: Arc::new(move |s, _| {
                let [x, xi] = *s;
                let (a, e) = (alpha(xi), eta(xi));
                let den = big_b * (xi - x) + xi;
                let rho = (x / xi).clamp(0.0, 1.0);
                let mu = 0.5 * phi2(rho) * (x * (xi - x) + e * e * x * x) / (xi * xi) + x * a / den
                    - big_b * x * x * e * e / (xi * den * den);
                [mu, a]
            }),
            diffusion: Arc::new(move |s, _| {
                let [x, xi] = *s;
                let den = big_b * (xi - x) + xi;
                [[sqrt_pos(xi * x * (xi - x)) / den, x * eta2(xi) / den], [0.0, eta2(xi)]]
            }),
            domain: [(0.0, env.xi_max), xi_dom],
            upper_link: [Some(1), None],
            absorbing: [vec![Boundary::Value(0.0), Boundary::Coordinate(1)], vec![]],
            name: "slow-environment (count)",
        },
        SlowVariable::Proportion => SdeSpec {
            dim: 2,
            drift: Arc::new(move |s, _| {
                let [r, xi] = *s;
                let (a, e) = (alpha(xi), eta(xi));
                let c = big_b * (1.0 - r) + 1.0;
                let p2 = phi2(r);
                let mu = 0.5 * p2 * r * (1.0 - r) / xi + 0.5 * p2 * r * r * e * e / xi
                    - big_b * r * (1.0 - r) * a / (c * xi)
                    + big_b * r * e * e * ((1.0 - r) * c - r) / (xi * xi * c * c);
                [mu, a]
            }),
            diffusion: Arc::new(move |s, _| {
                let [r, xi] = *s;
                let c = big_b * (1.0 - r) + 1.0;
                let e = eta2(xi);
                [[sqrt_pos(r * (1.0 - r)) / (c * xi.sqrt()), -big_b * r * (1.0 - r) * e / (c * xi)], [0.0, e]]
            }),
            domain: [(0.0, 1.0), xi_dom],
            upper_link: [None, None],
            absorbing: [vec![Boundary::Value(0.0), Boundary::Value(1.0)], vec![]],
            name: "slow-environment (proportion)",
        },
    };
    Ok(spec)
}

// ---------------------------------------------------------------------------
// Euler–Maruyama
// ---------------------------------------------------------------------------

/// Absorption of a coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Absorption {
    /// Index of the absorbing boundary in `SdeSpec::absorbing[coordinate]`.
    pub boundary: usize,
    pub time: f64,
}

/// Recorded Euler–Maruyama path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdePath {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub absorption: [Option<Absorption>; 2],
}

fn check_step(dt: f64, t_end: f64) -> Result<usize, DiffusionError> {
    if !(dt > 0.0 && dt.is_finite() && t_end.is_finite() && t_end >= dt) {
        return Err(DiffusionError::StepSizeInvalid { dt, t_end });
    }
    Ok((t_end / dt).round().max(1.0) as usize)
}

fn initial_state(spec: &SdeSpec, x0: &[f64]) -> Result<State, DiffusionError> {
    if x0.len() != spec.dim {
        return Err(DiffusionError::InvalidState(x0.to_vec()));
    }
    let mut x = [0.0; 2];
    x[..spec.dim].copy_from_slice(x0);
    if !spec.contains(&x) {
        return Err(DiffusionError::InvalidState(x0.to_vec()));
    }
    Ok(x)
}

/// One Euler–Maruyama step with clamping, freezing and absorption detection.
fn em_step<R: Rng>(
    spec: &SdeSpec,
    x: &mut State,
    t: f64,
    dt: f64,
    absorbed: &mut [Option<Absorption>; 2],
    rng: &mut R,
) {
    let mu = spec.drift_at(x, t);
    let sigma = spec.diffusion_at(x, t);
    let sq = dt.sqrt();
    let z: [f64; 2] = [rng.sample(StandardNormal), if spec.dim == 2 { rng.sample(StandardNormal) } else { 0.0 }];
    let mut next = *x;
    for i in 0..spec.dim {
        if absorbed[i].is_none() {
            next[i] = x[i] + mu[i] * dt + sq * (sigma[i][0] * z[0] + sigma[i][1] * z[1]);
        }
    }
    spec.clamp(&mut next);
    let t_next = t + dt;
    for i in 0..spec.dim {
        match absorbed[i] {
            Some(a) => next[i] = spec.boundary_value(spec.absorbing[i][a.boundary], &next),
            None => {
                for (k, &b) in spec.absorbing[i].iter().enumerate() {
                    let v = spec.boundary_value(b, &next);
                    if (next[i] - v).abs() <= ABSORPTION_SNAP {
                        next[i] = v;
                        absorbed[i] = Some(Absorption { boundary: k, time: t_next });
                        break;
                    }
                }
            }
        }
    }
    *x = next;
}

/// Euler–Maruyama path of `spec` from `x0` on `[0, t_end]` with step `dt`.
/// Coordinates are clamped to the domain after every step; a coordinate
/// within [`ABSORPTION_SNAP`] of one of its absorbing boundaries is frozen
/// there and its absorption time recorded. Deterministic given `seed`.
pub fn integrate_sde(spec: &SdeSpec, x0: &[f64], t_end: f64, dt: f64, seed: u64) -> Result<SdePath, DiffusionError> {
    let steps = check_step(dt, t_end)?;
    let mut x = initial_state(spec, x0)?;
    let mut rng = stream_rng(seed, 0);
    let mut absorbed = [None, None];
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(x);
    for n in 0..steps {
        let t = n as f64 * dt;
        em_step(spec, &mut x, t, dt, &mut absorbed, &mut rng);
        times.push(t + dt);
        states.push(x);
    }
    Ok(SdePath { times, states, absorption: absorbed })
}

/// Run one replicate until coordinate 0 is absorbed or `t_max` is reached.
fn absorb_first<R: Rng>(spec: &SdeSpec, x0: State, t_max: f64, dt: f64, rng: &mut R) -> Option<Absorption> {
    let steps = (t_max / dt).ceil() as usize;
    let mut x = x0;
    let mut absorbed = [None, None];
    for n in 0..steps {
        em_step(spec, &mut x, n as f64 * dt, dt, &mut absorbed, rng);
        if absorbed[0].is_some() {
            break;
        }
    }
    absorbed[0]
}

/// Monte Carlo probability that coordinate 0 is absorbed at boundary
/// `fix_boundary` (an index into `spec.absorbing[0]`) rather than at another
/// one. Replicate `i` uses stream `i` of `seed`; runs still unabsorbed at
/// `t_max` are censored.
pub fn mc_fixation(
    spec: &SdeSpec,
    x0: &[f64],
    fix_boundary: usize,
    t_max: f64,
    dt: f64,
    replicates: usize,
    seed: u64,
) -> Result<FixationEstimate, DiffusionError> {
    check_step(dt, t_max)?;
    let start = initial_state(spec, x0)?;
    if fix_boundary >= spec.absorbing[0].len() {
        return Err(DiffusionError::InvalidArgument(format!("no absorbing boundary with index {fix_boundary}")));
    }
    let outcomes: Vec<Option<bool>> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            absorb_first(spec, start, t_max, dt, &mut rng).map(|a| a.boundary == fix_boundary)
        })
        .collect();
    Ok(FixationEstimate::from_outcomes(&outcomes, seed))
}

// ---------------------------------------------------------------------------
// Scale function
// ---------------------------------------------------------------------------

/// Scale function `S(v) = ∫₀^v exp(−∫₀^w 2μ/σ² dz) dw` of an autonomous
/// diffusion on `[0, 1]`, tabulated on panel boundaries so that evaluation at
/// any point costs one panel of adaptive quadrature.
pub struct ScaleFunction<R: Fn(f64) -> f64> {
    ratio: R,
    knots: Vec<f64>,
    /// `∫₀^{knot} 2μ/σ²`.
    inner: Vec<f64>,
    /// `S(knot)`.
    outer: Vec<f64>,
}

fn quad<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<f64, DiffusionError> {
    if a == b {
        return Ok(0.0);
    }
    integrate(f, a, b, SCALE_ABS_TOL, SCALE_REL_TOL, SCALE_MAX_DEPTH)
        .map(|q| q.value)
        .ok_or(DiffusionError::Quadrature { a, b })
}

impl<R: Fn(f64) -> f64> ScaleFunction<R> {
    /// Build from the ratio `2μ(x)/σ²(x)`, which must be finite on `(0, 1)`.
    pub fn from_ratio(ratio: R) -> Result<Self, DiffusionError> {
        let knots: Vec<f64> = (0..=SCALE_PANELS).map(|k| k as f64 / SCALE_PANELS as f64).collect();
        let mut inner = vec![0.0; knots.len()];
        let mut outer = vec![0.0; knots.len()];
        for k in 1..knots.len() {
            let (a, b) = (knots[k - 1], knots[k]);
            inner[k] = inner[k - 1] + quad(&ratio, a, b)?;
            let base = inner[k - 1];
            let err = RefCell::new(None);
            let density = |w: f64| match quad(&ratio, a, w) {
                Ok(i) => (-(base + i)).exp(),
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            };
            let panel = quad(&density, a, b);
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
            outer[k] = outer[k - 1] + panel?;
        }
        Ok(Self { ratio, knots, inner, outer })
    }

    /// `S(v)` for `v ∈ [0, 1]`.
    pub fn eval(&self, v: f64) -> Result<f64, DiffusionError> {
        let v = v.clamp(0.0, 1.0);
        let k = ((v * SCALE_PANELS as f64).floor() as usize).min(SCALE_PANELS - 1);
        let a = self.knots[k];
        let base = self.inner[k];
        let ratio = &self.ratio;
        let err = RefCell::new(None);
        let density = |w: f64| match quad(ratio, a, w) {
            Ok(i) => (-(base + i)).exp(),
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        };
        let part = quad(&density, a, v);
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        Ok(self.outer[k] + part?)
    }

    /// `P(hit 1 before 0 | start) = S(start)/S(1)`.
    pub fn fixation(&self, start: f64) -> Result<f64, DiffusionError> {
        Ok(self.eval(start)? / self.outer[SCALE_PANELS])
    }
}

/// Scale function of the diffusion with drift `μ` and diffusion coefficient
/// `σ` (so the generator is `μ∂ + ½σ²∂²`).
pub fn scale_function<'a>(
    drift: impl Fn(f64) -> f64 + 'a,
    diffusion: impl Fn(f64) -> f64 + 'a,
) -> Result<ScaleFunction<impl Fn(f64) -> f64 + 'a>, DiffusionError> {
    // Probe the open interval for degeneracy before integrating.
    for i in 1..200 {
        let x = i as f64 / 200.0;
        let s = diffusion(x);
        if !(s.is_finite() && s * s > 0.0) {
            return Err(DiffusionError::DegenerateDiffusion { at: x });
        }
    }
    ScaleFunction::from_ratio(move |x| {
        let s = diffusion(x);
        2.0 * drift(x) / (s * s)
    })
}

/// `P(hit 1 before 0)` from `start` for an autonomous diffusion on `[0, 1]`.
pub fn scale_fixation(
    drift: impl Fn(f64) -> f64,
    diffusion: impl Fn(f64) -> f64,
    start: f64,
) -> Result<f64, DiffusionError> {
    if !(0.0..=1.0).contains(&start) {
        return Err(DiffusionError::InvalidArgument(format!("start must lie in [0, 1], got {start}")));
    }
    scale_function(drift, diffusion)?.fixation(start)
}

/// Fixation probability of the constant-environment diffusion of `d`.
pub fn constant_fixation(d: &GerminationDistribution, start: f64) -> Result<f64, DiffusionError> {
    let spec = sde_constant(d)?;
    scale_fixation(|x| spec.drift_at(&[x, 0.0], 0.0)[0], |x| spec.diffusion_at(&[x, 0.0], 0.0)[0][0], start)
}

/// Closed-form scale function `(1 − e^{−Bv} + ve^{−Bv})/(B+1)` of the
/// bounding diffusion with drift `½x(1−x)·B(B(1−x)+2)/(B(1−x)+1)³`.
pub fn bounding_scale_closed(big_b: f64, v: f64) -> f64 {
    let e = (-big_b * v).exp();
    (1.0 - e + v * e) / (big_b + 1.0)
}

// ---------------------------------------------------------------------------
// Ψ and g
// ---------------------------------------------------------------------------

/// `Ψ(B, y) = 1 − e^{−Bψ} + ψe^{−Bψ}` with `ψ = ψ_B(y)`: the bounding
/// diffusion's fixation probability from `ψ_B(y)`.
pub fn psi_cap(big_b: f64, y: f64) -> f64 {
    let p = psi(big_b, y);
    let e = (-big_b * p).exp();
    -(-big_b * p).exp_m1() + p * e
}

/// `g(ρ₀, ξ) = ρ₀[B(1−ρ₀)/((B(1−ρ₀)+1)ξ) + (ρ₀/2)(∂²Φ₀/∂x₀²(ρ₀) − 2B/(B(1−ρ₀)+1))]`.
pub fn g_function(d: &GerminationDistribution, rho0: f64, xi: f64) -> Result<f64, DiffusionError> {
    if !(0.0..=1.0).contains(&rho0) || !(xi > 0.0) {
        return Err(DiffusionError::InvalidArgument(format!("need rho0 in [0, 1] and xi > 0 (got {rho0}, {xi})")));
    }
    if rho0 == 0.0 {
        return Ok(0.0);
    }
    let big_b = d.mean_germination_time();
    let c = big_b * (1.0 - rho0) + 1.0;
    let phi2 = curvature_at(d, rho0)?;
    Ok(rho0 * (big_b * (1.0 - rho0) / (c * xi) + 0.5 * rho0 * (phi2 - 2.0 * big_b / c)))
}

/// `ρ_c = (4+ξ_min)/(4+3ξ_min)`: below it `g > 0` for small `B`.
pub fn g_rho_critical(xi_min: f64) -> f64 {
    (4.0 + xi_min) / (4.0 + 3.0 * xi_min)
}

/// `B_c = 2/ξ_min`: above it `g < 0` on `(ρ_c, 1)`.
pub fn g_b_critical(xi_min: f64) -> f64 {
    2.0 / xi_min
}

//! Germination distributions and the environment parameter records shared by
//! every model in the crate.
//!
//! A [`GerminationDistribution`] is a point `b = (b₀, …, b_K)` of the simplex
//! with `b₀ > 0`: `b_i` is the probability that a seed germinates exactly `i`
//! generations after it was produced. The mean germination time
//! `B = Σ i·b_i` is cached at construction because nearly every downstream
//! formula depends on it.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on `Σ b_i = 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Validation failures for model parameters.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("germination probabilities sum to {sum}, not 1 (tolerance {SIMPLEX_TOL:e})")]
    NotOnSimplex { sum: f64 },
    #[error("b0 must be strictly positive (got {0})")]
    ZeroB0(f64),
    #[error("germination probability b[{index}] = {value} is negative or not finite")]
    NegativeEntry { index: usize, value: f64 },
    #[error("at least two germination probabilities (K >= 1) are required, got {0}")]
    TooShort(usize),
    #[error("could not parse germination distribution: {0}")]
    Parse(String),
    #[error("environment specification invalid: {0}")]
    BoundaryConditionViolated(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

// ---------------------------------------------------------------------------
// GerminationDistribution
// ---------------------------------------------------------------------------

/// Germination distribution `b = (b₀, …, b_K)` with cached mean germination
/// time and tail sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct GerminationDistribution {
    b: Vec<f64>,
    mean: f64,
    tails: Vec<f64>,
}

/// Wire format: `{"b": [..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawDistribution {
    pub b: Vec<f64>,
}

impl TryFrom<RawDistribution> for GerminationDistribution {
    type Error = ModelError;
    fn try_from(raw: RawDistribution) -> Result<Self, ModelError> {
        Self::new(raw.b)
    }
}

impl From<GerminationDistribution> for RawDistribution {
    fn from(d: GerminationDistribution) -> Self {
        RawDistribution { b: d.b }
    }
}

/// Tail sums of a germination distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailSums {
    /// `tail[i-1] = Σ_{l=i}^{K} b_l` for `i = 1..K`.
    pub tail: Vec<f64>,
    /// `b_j[j-1] = B − Σ_{q=j}^{K} b_q` for `j = 1..K`.
    pub b_j: Vec<f64>,
}

impl GerminationDistribution {
    /// Validate a raw probability vector (this is the `validate_distribution`
    /// operation). The vector must have length `K + 1 ≥ 2`.
    pub fn new(b: Vec<f64>) -> Result<Self, ModelError> {
        if b.len() < 2 {
            return Err(ModelError::TooShort(b.len()));
        }
        for (index, &value) in b.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::NegativeEntry { index, value });
            }
        }
        if b[0] <= 0.0 {
            return Err(ModelError::ZeroB0(b[0]));
        }
        let sum: f64 = b.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(ModelError::NotOnSimplex { sum });
        }
        let mean = b.iter().enumerate().map(|(i, bi)| i as f64 * bi).sum();
        let k = b.len() - 1;
        let mut tails = vec![0.0; k];
        let mut acc = 0.0;
        for i in (1..=k).rev() {
            acc += b[i];
            tails[i - 1] = acc;
        }
        Ok(Self { b, mean, tails })
    }

    /// Two-point distribution `(b₀, 1 − b₀)` (the `K = 1` model).
    pub fn k1(b0: f64) -> Result<Self, ModelError> {
        Self::new(vec![b0, 1.0 - b0])
    }

    /// Maximum dormancy `K`.
    pub fn k(&self) -> usize {
        self.b.len() - 1
    }

    /// The probability vector.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// `b₀`.
    pub fn b0(&self) -> f64 {
        self.b[0]
    }

    /// Mean germination time `B = Σ i·b_i`.
    pub fn mean_germination_time(&self) -> f64 {
        self.mean
    }

    /// `Σ_{l=i}^{K} b_l` for `i ≥ 1` (zero beyond `K`).
    pub fn tail(&self, i: usize) -> f64 {
        assert!(i >= 1, "tail sums are indexed from 1");
        self.tails.get(i - 1).copied().unwrap_or(0.0)
    }

    /// Tail sums and the associated `B_j` values.
    pub fn tail_sums(&self) -> TailSums {
        TailSums {
            tail: self.tails.clone(),
            b_j: self.tails.iter().map(|t| self.mean - t).collect(),
        }
    }
}

impl fmt::Display for GerminationDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.b.iter().map(|x| format!("{x}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for GerminationDistribution {
    type Err = ModelError;

    /// Parse either a comma-separated list (`0.6,0.2,0.2`) or a JSON-style
    /// object `{"b": [0.6, 0.2, 0.2]}`.
    fn from_str(s: &str) -> Result<Self, ModelError> {
        let trimmed = s.trim();
        let list = if trimmed.starts_with('{') {
            let open = trimmed
                .find('[')
                .ok_or_else(|| ModelError::Parse(format!("missing '[' in {trimmed}")))?;
            let close = trimmed
                .rfind(']')
                .ok_or_else(|| ModelError::Parse(format!("missing ']' in {trimmed}")))?;
            if !trimmed[..open].contains("\"b\"") {
                return Err(ModelError::Parse(format!("expected key \"b\" in {trimmed}")));
            }
            &trimmed[open + 1..close]
        } else {
            trimmed.trim_start_matches('[').trim_end_matches(']')
        };
        let b = parse_f64_list(list).map_err(ModelError::Parse)?;
        Self::new(b)
    }
}

/// Parse a comma-separated list of reals.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect()
}

// ---------------------------------------------------------------------------
// Environments
// ---------------------------------------------------------------------------

/// Scalar coefficient function of the environment diffusion.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Diffusion limit `dξ = α(ξ)dt + η(ξ)dW` of a slowly changing population
/// size, confined to `[xi_min, xi_max]`.
#[derive(Clone)]
pub struct SlowEnvSpec {
    pub xi_min: f64,
    pub xi_max: f64,
    pub alpha: ScalarFn,
    pub eta: ScalarFn,
}

impl fmt::Debug for SlowEnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SlowEnvSpec")
            .field("xi_min", &self.xi_min)
            .field("xi_max", &self.xi_max)
            .finish_non_exhaustive()
    }
}

impl SlowEnvSpec {
    /// Build and validate the boundary behaviour: `α(ξ_min) ≥ 0`,
    /// `α(ξ_max) ≤ 0` and `η(ξ_min) = η(ξ_max) = 0`.
    pub fn new(xi_min: f64, xi_max: f64, alpha: ScalarFn, eta: ScalarFn) -> Result<Self, ModelError> {
        if !(xi_min > 0.0 && xi_max > xi_min && xi_max.is_finite()) {
            return Err(ModelError::BoundaryConditionViolated(format!(
                "need 0 < xi_min < xi_max, got [{xi_min}, {xi_max}]"
            )));
        }
        let (a_lo, a_hi) = (alpha(xi_min), alpha(xi_max));
        if a_lo < 0.0 || a_hi > 0.0 {
            return Err(ModelError::BoundaryConditionViolated(format!(
                "alpha must point inwards: alpha(xi_min) = {a_lo}, alpha(xi_max) = {a_hi}"
            )));
        }
        let (e_lo, e_hi) = (eta(xi_min), eta(xi_max));
        if e_lo.abs() > 1e-12 || e_hi.abs() > 1e-12 {
            return Err(ModelError::BoundaryConditionViolated(format!(
                "eta must vanish at both ends: eta(xi_min) = {e_lo}, eta(xi_max) = {e_hi}"
            )));
        }
        Ok(Self { xi_min, xi_max, alpha, eta })
    }

    /// Deterministic logistic environment `dξ/dt = rξ(ξ∞ − ξ)` started from
    /// `ξ(0) = 1`; the box is wide enough to contain the whole trajectory.
    pub fn logistic(r: f64, xi_inf: f64) -> Result<Self, ModelError> {
        if !(r > 0.0 && xi_inf > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "logistic environment needs r > 0 and xi_inf > 0 (got r = {r}, xi_inf = {xi_inf})"
            )));
        }
        let xi_min = 0.5 * xi_inf.min(1.0);
        let xi_max = 2.0 * xi_inf.max(1.0);
        Self::new(
            xi_min,
            xi_max,
            Arc::new(move |xi| r * xi * (xi_inf - xi)),
            Arc::new(|_| 0.0),
        )
    }

    /// `α(ξ)`.
    pub fn alpha(&self, xi: f64) -> f64 {
        (self.alpha)(xi)
    }

    /// `η(ξ)`.
    pub fn eta(&self, xi: f64) -> f64 {
        (self.eta)(xi)
    }
}

/// Fast environment: marks `Υ ∈ {−1, 0, +1}` with `P(±1) = p`, selection
/// strength `s_N = s/√N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastEnvSpec {
    pub p: f64,
    pub s: f64,
}

impl FastEnvSpec {
    pub fn new(p: f64, s: f64) -> Result<Self, ModelError> {
        if !(0.0..=0.5).contains(&p) {
            return Err(ModelError::InvalidParameter(format!("p must lie in [0, 1/2], got {p}")));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(ModelError::InvalidParameter(format!("s must be positive, got {s}")));
        }
        Ok(Self { p, s })
    }

    /// `s_N = s·N^{-1/2}`, clipped to `[0, 1)` so that `1 ± s_N > 0`.
    pub fn s_of_n(&self, n: u64) -> f64 {
        let raw = self.s / (n as f64).sqrt();
        raw.clamp(0.0, 1.0 - f64::EPSILON)
    }
}

//! `seedbank` command-line tool: figure data, Monte Carlo comparisons and the
//! generic reduction, written as CSV (grids) or JSON (single results).
//!
//! Every CSV starts with `#` comment lines naming the tool version, the
//! subcommand, the fully resolved parameters and the master seed; all
//! computations are deterministic given those, so re-running the header's
//! parameters reproduces the file byte for byte.
//!
//! Exit codes: `0` success, `2` invalid input, `3` numerical failure.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use seedbank::branching::{psi, BranchingError};
use seedbank::diffusion::{
    constant_fixation, curvature_at, g_function, psi_cap, scale_fixation, sde_fast_env, DiffusionError,
};
use seedbank::flows::{build_flow, chart_for, drift_bound, fast_left_eigvec, h_function, h_function_exact, FlowKind};
use seedbank::model::{FastEnvSpec, GerminationDistribution, ModelError, SlowEnvSpec};
use seedbank::pde::{kolmogorov_fixation, Logistic, PdeGrid};
use seedbank::reduction::{reduce, ReductionError};
use seedbank::wf::{make_env_process, run_fixation, EnvKind, Regime, WfError};

const VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CliError {
    /// Bad flag values or parameters outside the model's domain.
    Validation(String),
    /// A numerical routine failed to converge or hit a budget.
    Numerical(String),
    Io(io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 2,
            Self::Numerical(_) | Self::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "invalid input: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<ReductionError> for CliError {
    fn from(e: ReductionError) -> Self {
        match e {
            ReductionError::DomainViolation { .. } | ReductionError::DomainConstraint(_) | ReductionError::Dimension(_) => {
                Self::Validation(e.to_string())
            }
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<DiffusionError> for CliError {
    fn from(e: DiffusionError) -> Self {
        match e {
            DiffusionError::StepSizeInvalid { .. }
            | DiffusionError::UnsupportedK(_)
            | DiffusionError::InvalidState(_)
            | DiffusionError::InvalidArgument(_) => Self::Validation(e.to_string()),
            DiffusionError::Reduction(r) => r.into(),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<WfError> for CliError {
    fn from(e: WfError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<BranchingError> for CliError {
    fn from(e: BranchingError) -> Self {
        match e {
            BranchingError::BudgetExceeded { .. } => Self::Numerical(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(e.into())
    }
}

type CliResult<T> = Result<T, CliError>;

// ---------------------------------------------------------------------------
// Arguments
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(name = "seedbank", version, about = "Seed-bank Wright–Fisher models and their diffusion limits")]
struct Cli {
    /// Output file (standard output if omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads for Monte Carlo (all cores if omitted).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// ψ_B(y) for several B: rows (B, y, psi).
    PsiCurve(PsiCurveArgs),
    /// ∂²Φ₀/∂x₀² and its upper bound on a grid.
    DriftSurface(DriftSurfaceArgs),
    /// Scale-function fixation probability from ψ_B(y) against the bound Ψ(B, y).
    FixationHeatmap(HeatmapArgs),
    /// Fixation probability against b₀ in logistic environments (K = 1).
    FixationVsB0(VsB0Args),
    /// The function g(ρ₀, ξ) for several B and ξ.
    GPlot(GPlotArgs),
    /// The fast-environment drift modifier h(x₀, b₀) on a grid.
    HContour(HContourArgs),
    /// Discrete Monte Carlo fixation estimate plus the diffusion prediction (JSON).
    McCompare(McCompareArgs),
    /// Full manifold reduction at one point of the diagonal (JSON).
    Reduce(ReduceArgs),
}

#[derive(Args, Debug, Serialize)]
struct PsiCurveArgs {
    /// Values of B.
    #[arg(long = "B", value_delimiter = ',', default_value = "0,0.1,0.5,1,2")]
    big_b: Vec<f64>,
    /// Number of y values in [0, 1).
    #[arg(long, default_value_t = 100)]
    points: usize,
}

#[derive(Args, Debug, Serialize)]
struct DriftSurfaceArgs {
    /// Number of seed-bank generations K (1 or 2) for the (b₀, x₀) surface.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Grid intervals per axis.
    #[arg(long, default_value_t = 50)]
    grid: usize,
    /// For K = 2: share b₁/(1−b₀).
    #[arg(long, default_value_t = 0.5)]
    share: f64,
    /// Explicit distribution (overrides --k): rows over x₀ only.
    #[arg(long)]
    b: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct HeatmapArgs {
    /// K ∈ {1, 2}; for K = 2 the grid runs over (b₀, b₁/(1−b₀)).
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Grid intervals per axis.
    #[arg(long, default_value_t = 50)]
    grid: usize,
    /// Neutral reference value y; the diffusion starts at ψ_B(y).
    #[arg(long, default_value_t = 0.01)]
    y: f64,
}

#[derive(Args, Debug, Serialize)]
struct VsB0Args {
    /// Limiting population sizes ξ∞.
    #[arg(long = "xi-inf", value_delimiter = ',', default_value = "0.7,0.8,0.9,1.0,1.1,1.2")]
    xi_inf: Vec<f64>,
    /// Logistic growth rate.
    #[arg(long, default_value_t = 20.0)]
    r: f64,
    /// Number of b₀ values in (0, 1].
    #[arg(long, default_value_t = 20)]
    points: usize,
    /// Neutral reference value y; ρ₀(0) = ψ_B(y).
    #[arg(long, default_value_t = 0.01)]
    y: f64,
    #[arg(long = "n-space", default_value_t = 401)]
    n_space: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
}

#[derive(Args, Debug, Serialize)]
struct GPlotArgs {
    /// Population sizes ξ.
    #[arg(long, value_delimiter = ',', default_value = "0.8,1.2")]
    xi: Vec<f64>,
    /// Mean germination times B (each realised with the smallest K > B).
    #[arg(long = "B", value_delimiter = ',', default_value = "0.1,0.5,1.0")]
    big_b: Vec<f64>,
    /// Grid intervals on [0, 1] for ρ₀.
    #[arg(long, default_value_t = 100)]
    points: usize,
}

#[derive(Args, Debug, Serialize)]
struct HContourArgs {
    /// Grid intervals per axis on [0, 1]².
    #[arg(long, default_value_t = 100)]
    grid: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum RegimeName {
    Constant,
    Slow,
    Fast,
}

#[derive(Args, Debug, Serialize)]
struct McCompareArgs {
    #[arg(long, value_enum, default_value = "constant")]
    regime: RegimeName,
    /// Germination distribution, e.g. 0.5,0.5.
    #[arg(long, default_value = "0.5,0.5")]
    b: String,
    /// Population scale N.
    #[arg(long = "N", default_value_t = 300)]
    n: u64,
    /// Initial mutant proportion on the diagonal.
    #[arg(long, default_value_t = 0.2)]
    start: f64,
    #[arg(long, default_value_t = 20_000)]
    replicates: usize,
    #[arg(long = "max-generations", default_value_t = 10_000_000)]
    max_generations: u64,
    /// Fast regime: probability of each of the marks ±1.
    #[arg(long, default_value_t = 0.25)]
    p: f64,
    /// Fast regime: selection strength s (s_N = s/√N).
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    /// Slow regime: logistic rate r.
    #[arg(long, default_value_t = 20.0)]
    r: f64,
    /// Slow regime: limiting population size ξ∞ (Ξ(0) = 1).
    #[arg(long = "xi-inf", default_value_t = 1.2)]
    xi_inf: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FlowName {
    Constant,
    Linearized,
    Fast,
}

#[derive(Args, Debug, Serialize)]
struct ReduceArgs {
    #[arg(long, value_enum, default_value = "constant")]
    flow: FlowName,
    /// Germination distribution, e.g. 0.5,0.3,0.2.
    #[arg(long)]
    b: String,
    /// Point of the diagonal.
    #[arg(long, default_value_t = 0.5)]
    x0: f64,
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// CSV document with a reproducibility header.
struct Csv {
    text: String,
}

impl Csv {
    fn new<P: Serialize>(command: &str, params: &P, seed: u64, columns: &[&str]) -> CliResult<Self> {
        let mut text = String::new();
        let _ = writeln!(text, "# seedbank {VERSION}");
        let _ = writeln!(text, "# command: {command}");
        let _ = writeln!(text, "# params: {}", serde_json::to_string(params)?);
        let _ = writeln!(text, "# seed: {seed}");
        let _ = writeln!(text, "{}", columns.join(","));
        Ok(Self { text })
    }

    fn row(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(self.text, "{}", cells.join(","));
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => File::create(path)?.write_all(text.as_bytes())?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json_doc<P: Serialize>(command: &str, params: &P, seed: u64, result: serde_json::Value) -> CliResult<String> {
    let doc = json!({
        "tool": format!("seedbank {VERSION}"),
        "command": command,
        "params": params,
        "seed": seed,
        "result": result,
    });
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

fn require(cond: bool, msg: impl Into<String>) -> CliResult<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Validation(msg.into()))
    }
}

fn grid(n: usize) -> impl Iterator<Item = f64> {
    (0..=n).map(move |i| i as f64 / n as f64)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_psi_curve(a: &PsiCurveArgs, seed: u64) -> CliResult<String> {
    require(a.points >= 1, "--points must be positive")?;
    require(a.big_b.iter().all(|&b| b >= 0.0 && b.is_finite()), "B values must be non-negative")?;
    let mut csv = Csv::new("psi-curve", a, seed, &["B", "y", "psi"])?;
    for &big_b in &a.big_b {
        for i in 0..a.points {
            let y = i as f64 / a.points as f64;
            csv.row(&[big_b, y, psi(big_b, y)]);
        }
    }
    Ok(csv.text)
}

fn cmd_drift_surface(a: &DriftSurfaceArgs, seed: u64) -> CliResult<String> {
    require(a.grid >= 1, "--grid must be positive")?;
    if let Some(b) = &a.b {
        let d: GerminationDistribution = b.parse()?;
        let big_b = d.mean_germination_time();
        let mut csv = Csv::new("drift-surface", a, seed, &["x0", "drift", "bound"])?;
        for x in grid(a.grid) {
            csv.row(&[x, curvature_at(&d, x)?, drift_bound(big_b, x)]);
        }
        return Ok(csv.text);
    }
    require(a.k == 1 || a.k == 2, "--k must be 1 or 2 (use --b for other distributions)")?;
    require((0.0..=1.0).contains(&a.share), "--share must lie in [0, 1]")?;
    let mut csv = Csv::new("drift-surface", a, seed, &["b0", "x0", "B", "drift", "bound"])?;
    for i in 1..=a.grid {
        let b0 = i as f64 / a.grid as f64;
        let d = if a.k == 1 {
            GerminationDistribution::k1(b0)?
        } else {
            GerminationDistribution::new(vec![b0, (1.0 - b0) * a.share, (1.0 - b0) * (1.0 - a.share)])?
        };
        let big_b = d.mean_germination_time();
        for x in grid(a.grid) {
            csv.row(&[b0, x, big_b, curvature_at(&d, x)?, drift_bound(big_b, x)]);
        }
    }
    Ok(csv.text)
}

fn cmd_fixation_heatmap(a: &HeatmapArgs, seed: u64) -> CliResult<String> {
    require(a.k == 1 || a.k == 2, "--k must be 1 or 2")?;
    require(a.grid >= 1, "--grid must be positive")?;
    require(a.y > 0.0 && a.y < 1.0, "--y must lie in (0, 1)")?;
    let mut csv = Csv::new(
        "fixation-heatmap",
        a,
        seed,
        &["b0", "share", "B", "start", "fixation", "psi_bound", "difference"],
    )?;
    let shares: Vec<f64> = if a.k == 1 { vec![1.0] } else { grid(a.grid).collect() };
    for i in 1..=a.grid {
        let b0 = i as f64 / a.grid as f64;
        for &share in &shares {
            let d = if a.k == 1 {
                GerminationDistribution::k1(b0)?
            } else {
                GerminationDistribution::new(vec![b0, (1.0 - b0) * share, (1.0 - b0) * (1.0 - share)])?
            };
            let big_b = d.mean_germination_time();
            let start = psi(big_b, a.y);
            let fix = constant_fixation(&d, start)?;
            let bound = psi_cap(big_b, a.y);
            csv.row(&[b0, share, big_b, start, fix, bound, bound - fix]);
        }
    }
    Ok(csv.text)
}

fn cmd_fixation_vs_b0(a: &VsB0Args, seed: u64) -> CliResult<String> {
    require(a.points >= 1, "--points must be positive")?;
    require(a.y > 0.0 && a.y < 1.0, "--y must lie in (0, 1)")?;
    let pde = PdeGrid { n_space: a.n_space, dt: a.dt, ..PdeGrid::default() };
    pde.validate()?;
    let mut csv = Csv::new("fixation-vs-b0", a, seed, &["xi_inf", "b0", "B", "start", "fixation"])?;
    for &xi_inf in &a.xi_inf {
        for i in 1..=a.points {
            let b0 = i as f64 / a.points as f64;
            let d = GerminationDistribution::k1(b0)?;
            let big_b = d.mean_germination_time();
            let start = psi(big_b, a.y);
            let fix = kolmogorov_fixation(&d, Logistic { r: a.r, xi_inf }, start, &pde)?;
            csv.row(&[xi_inf, b0, big_b, start, fix]);
        }
    }
    Ok(csv.text)
}

/// Distribution with mean germination time `B` on the smallest `K > B`:
/// `b₀ = 1 − B/K`, `b_K = B/K`.
fn distribution_with_mean(big_b: f64) -> CliResult<GerminationDistribution> {
    require(big_b >= 0.0 && big_b.is_finite() && big_b <= 50.0, format!("B must lie in [0, 50], got {big_b}"))?;
    let k = (big_b.floor() as usize + 1).max(1);
    let mut b = vec![0.0; k + 1];
    b[0] = 1.0 - big_b / k as f64;
    b[k] += big_b / k as f64;
    Ok(GerminationDistribution::new(b)?)
}

fn cmd_g_plot(a: &GPlotArgs, seed: u64) -> CliResult<String> {
    require(a.points >= 1, "--points must be positive")?;
    require(a.xi.iter().all(|&x| x > 0.0), "ξ values must be positive")?;
    let mut csv = Csv::new("g-plot", a, seed, &["B", "K", "xi", "rho0", "g"])?;
    for &big_b in &a.big_b {
        let d = distribution_with_mean(big_b)?;
        for &xi in &a.xi {
            for rho in grid(a.points) {
                csv.row(&[big_b, d.k() as f64, xi, rho, g_function(&d, rho, xi)?]);
            }
        }
    }
    Ok(csv.text)
}

fn cmd_h_contour(a: &HContourArgs, seed: u64) -> CliResult<String> {
    require(a.grid >= 1, "--grid must be positive")?;
    let mut csv = Csv::new("h-contour", a, seed, &["x0", "b0", "h_stated", "h_exact"])?;
    for x in grid(a.grid) {
        for b0 in grid(a.grid) {
            csv.row(&[x, b0, h_function(x, b0), h_function_exact(x, b0)]);
        }
    }
    Ok(csv.text)
}

fn cmd_mc_compare(a: &McCompareArgs, seed: u64) -> CliResult<String> {
    let d: GerminationDistribution = a.b.parse()?;
    require(a.n >= 2, "--N must be at least 2")?;
    let (regime, prediction, method) = match a.regime {
        RegimeName::Constant => (Regime::Constant, Some(constant_fixation(&d, a.start)?), "scale function"),
        RegimeName::Fast => {
            let fenv = FastEnvSpec::new(a.p, a.s)?;
            let prediction = match sde_fast_env(&d, &fenv) {
                Ok(spec) => Some(scale_fixation(
                    |x| spec.drift_at(&[x, 0.0], 0.0)[0],
                    |x| spec.diffusion_at(&[x, 0.0], 0.0)[0][0],
                    a.start,
                )?),
                Err(DiffusionError::UnsupportedK(_)) => None,
                Err(e) => return Err(e.into()),
            };
            (Regime::Fast(fenv), prediction, "scale function (K = 1 only)")
        }
        RegimeName::Slow => {
            let env = SlowEnvSpec::logistic(a.r, a.xi_inf)?;
            let process = make_env_process(
                EnvKind::DeterministicLogistic { r: a.r, xi_inf: a.xi_inf },
                env.xi_min,
                env.xi_max,
                a.n,
            )?;
            let prediction = if a.start > 0.0 && a.start < 1.0 {
                Some(kolmogorov_fixation(&d, Logistic { r: a.r, xi_inf: a.xi_inf }, a.start, &PdeGrid::default())?)
            } else {
                Some(a.start)
            };
            (Regime::Slow { env: process, xi0: 1.0 }, prediction, "backward Kolmogorov equation")
        }
    };
    let estimate = run_fixation(&regime, &d, a.n, a.start, a.replicates, a.max_generations, seed)?;
    let z = prediction.map(|p| (estimate.p_hat - p) / estimate.std_err);
    json_doc(
        "mc-compare",
        a,
        seed,
        json!({
            "estimate": estimate,
            "prediction": prediction,
            "prediction_method": method,
            "z_score": z.filter(|v| v.is_finite()),
        }),
    )
}

fn cmd_reduce(a: &ReduceArgs, seed: u64) -> CliResult<String> {
    let d: GerminationDistribution = a.b.parse()?;
    require((0.0..=1.0).contains(&a.x0), "--x0 must lie in [0, 1]")?;
    let kind = match a.flow {
        FlowName::Constant => FlowKind::Constant(d.clone()),
        FlowName::Linearized => FlowKind::Linearized(d.clone()),
        FlowName::Fast => FlowKind::FastEnv(d.clone()),
    };
    let flow = build_flow(&kind);
    let chart = chart_for(&kind)?;
    let result = if a.flow == FlowName::Fast {
        let along = |x: f64| Ok(fast_left_eigvec(&d, x));
        reduce(&flow, &chart, a.x0, Some(&along))?
    } else {
        reduce(&flow, &chart, a.x0, None)?
    };
    json_doc("reduce", a, seed, serde_json::to_value(result)?)
}

fn run(cli: &Cli) -> CliResult<String> {
    if let Some(n) = cli.threads {
        require(n >= 1, "--threads must be positive")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let seed = cli.seed;
    match &cli.command {
        Command::PsiCurve(a) => cmd_psi_curve(a, seed),
        Command::DriftSurface(a) => cmd_drift_surface(a, seed),
        Command::FixationHeatmap(a) => cmd_fixation_heatmap(a, seed),
        Command::FixationVsB0(a) => cmd_fixation_vs_b0(a, seed),
        Command::GPlot(a) => cmd_g_plot(a, seed),
        Command::HContour(a) => cmd_h_contour(a, seed),
        Command::McCompare(a) => cmd_mc_compare(a, seed),
        Command::Reduce(a) => cmd_reduce(a, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).and_then(|text| emit(&cli.out, &text)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("seedbank: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

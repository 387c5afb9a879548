//! Discrete Wright–Fisher chains: conditional means, absorption, exchangeable
//! timing, determinism and the environment processes.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seedbank::model::{FastEnvSpec, GerminationDistribution, SlowEnvSpec};
use seedbank::pde::Logistic;
use seedbank::rng::stream_rng;
use seedbank::wf::{
    expected_increment_constant, expected_increment_fast, expected_increment_slow, make_env_process, population,
    run_fixation, step_constant, step_fast, step_slow, EnvKind, EnvProcess, EnvState, Regime, WfState,
};

const DRAWS: u64 = 1_000_000;

fn dist(b: &[f64]) -> GerminationDistribution {
    GerminationDistribution::new(b.to_vec()).unwrap()
}

/// Mean and standard error of `X₀(t+1)/N − x₀` over [`DRAWS`] one-step draws.
fn one_step_mean(mut step: impl FnMut(&mut ChaCha8Rng) -> u64, n: u64, x0: f64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..DRAWS {
        let inc = step(&mut rng) as f64 / n as f64 - x0;
        sum += inc;
        sum_sq += inc * inc;
    }
    let mean = sum / DRAWS as f64;
    let var = sum_sq / DRAWS as f64 - mean * mean;
    (mean, (var / DRAWS as f64).sqrt())
}

fn proportions(counts: &[u64], n: u64) -> Vec<f64> {
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

/// Five interior states of a `K = 2` chain with population scale 400.
const STATES: [[u64; 3]; 5] = [[40, 10, 80], [200, 200, 200], [120, 300, 60], [350, 100, 390], [10, 390, 5]];

// ---------------------------------------------------------------------------
// One-step conditional means
// ---------------------------------------------------------------------------

#[test]
fn constant_one_step_mean_matches_expectation() {
    let d = dist(&[0.45, 0.35, 0.2]);
    let n = 400;
    for (i, counts) in STATES.iter().enumerate() {
        let state = WfState { x_counts: counts.to_vec(), env: EnvState::None };
        let x = proportions(counts, n);
        let (mean, se) = one_step_mean(|r| step_constant(&state, &d, n, r).x_counts[0], n, x[0], 10 + i as u64);
        let expected = expected_increment_constant(d.b(), &x);
        assert!((mean - expected).abs() <= 4.0 * se, "state {counts:?}: {mean} vs {expected} (se {se})");
    }
}

#[test]
fn slow_one_step_mean_matches_expectation() {
    let d = dist(&[0.45, 0.35, 0.2]);
    let n = 400;
    let env = make_env_process(EnvKind::DeterministicLogistic { r: 3.0, xi_inf: 1.6 }, 0.5, 2.0, n).unwrap();
    // Ξ(t)·N = 500 exactly; the mean uses the realised population sizes.
    let xi = 1.25;
    let mut probe = ChaCha8Rng::seed_from_u64(0);
    let xi_next = env.next(xi, &mut probe);
    let xi_now_eff = population(xi, n) as f64 / n as f64;
    let xi_next_eff = population(xi_next, n) as f64 / n as f64;
    for (i, counts) in STATES.iter().enumerate() {
        let state = WfState { x_counts: counts.to_vec(), env: EnvState::Xi(xi) };
        let x = proportions(counts, n);
        let (mean, se) =
            one_step_mean(|r| step_slow(&state, &d, n, &env, r).unwrap().x_counts[0], n, x[0], 20 + i as u64);
        let expected = expected_increment_slow(d.b(), &x, xi_now_eff, xi_next_eff);
        assert!((mean - expected).abs() <= 4.0 * se, "state {counts:?}: {mean} vs {expected} (se {se})");
    }
}

#[test]
fn fast_one_step_mean_matches_expectation() {
    let d = dist(&[0.45, 0.35, 0.2]);
    let fenv = FastEnvSpec::new(0.3, 1.5).unwrap();
    let n = 400;
    let marks: [[i8; 2]; 5] = [[1, -1], [0, 0], [-1, 1], [1, 1], [-1, 0]];
    for (i, (counts, m)) in STATES.iter().zip(marks).enumerate() {
        let state = WfState { x_counts: counts.to_vec(), env: EnvState::Marks(m.to_vec()) };
        let x = proportions(counts, n);
        let (mean, se) =
            one_step_mean(|r| step_fast(&state, &d, n, &fenv, r).unwrap().x_counts[0], n, x[0], 30 + i as u64);
        let expected = expected_increment_fast(d.b(), &x, &m, fenv.p, fenv.s_of_n(n));
        assert!((mean - expected).abs() <= 4.0 * se, "state {counts:?}: {mean} vs {expected} (se {se})");
    }
}

// ---------------------------------------------------------------------------
// Absorption
// ---------------------------------------------------------------------------

#[test]
fn boundary_states_are_absorbing_in_every_regime() {
    let d = dist(&[0.3, 0.3, 0.4]);
    let n = 250;
    let fenv = FastEnvSpec::new(0.5, 3.0).unwrap();
    let env = EnvProcess::from_spec(
        &SlowEnvSpec::new(
            0.5,
            2.0,
            Arc::new(|xi| 1.0 - xi),
            Arc::new(|xi: f64| 0.8 * (xi - 0.5) * (2.0 - xi)),
        )
        .unwrap(),
        n,
    )
    .unwrap();
    let mut rng = stream_rng(5, 0);
    for _ in 0..200 {
        let lost = WfState { x_counts: vec![0; 3], env: EnvState::None };
        assert!(step_constant(&lost, &d, n, &mut rng).is_lost());
        let lost_fast = WfState { x_counts: vec![0; 3], env: EnvState::Marks(vec![1, -1]) };
        assert!(step_fast(&lost_fast, &d, n, &fenv, &mut rng).unwrap().is_lost());
        let lost_slow = WfState { x_counts: vec![0; 3], env: EnvState::Xi(1.3) };
        assert!(step_slow(&lost_slow, &d, n, &env, &mut rng).unwrap().is_lost());

        let fixed = WfState::diagonal(2, n);
        assert_eq!(step_constant(&fixed, &d, n, &mut rng).x_counts[0], n);
        let fixed_fast = WfState { x_counts: vec![n; 3], env: EnvState::Marks(vec![-1, 1]) };
        assert_eq!(step_fast(&fixed_fast, &d, n, &fenv, &mut rng).unwrap().x_counts[0], n);
        let pop = population(1.3, n);
        let fixed_slow = WfState { x_counts: vec![pop; 3], env: EnvState::Xi(1.3) };
        let next = step_slow(&fixed_slow, &d, n, &env, &mut rng).unwrap();
        let EnvState::Xi(xi_next) = next.env else { panic!("slow step lost its environment") };
        assert_eq!(next.x_counts[0], population(xi_next, n));
    }
}

// ---------------------------------------------------------------------------
// Exchangeable timing and determinism
// ---------------------------------------------------------------------------

#[test]
fn neutral_environments_reproduce_the_constant_chain_bit_for_bit() {
    let d = dist(&[0.5, 0.2, 0.3]);
    let n = 300;
    let still = make_env_process(
        EnvKind::ReflectedWalk { alpha: Arc::new(|_| 0.0), eta: Arc::new(|_| 0.0) },
        0.5,
        2.0,
        n,
    )
    .unwrap();
    let silent = FastEnvSpec::new(0.0, 2.0).unwrap();
    let mut constant = WfState::diagonal(2, 90);
    let mut slow = WfState { x_counts: vec![90; 3], env: EnvState::Xi(1.0) };
    let mut fast = WfState { x_counts: vec![90; 3], env: EnvState::Marks(vec![0, 0]) };
    let (mut r1, mut r2, mut r3) = (stream_rng(8, 1), stream_rng(8, 1), stream_rng(8, 1));
    for _ in 0..2_000 {
        constant = step_constant(&constant, &d, n, &mut r1);
        slow = step_slow(&slow, &d, n, &still, &mut r2).unwrap();
        fast = step_fast(&fast, &d, n, &silent, &mut r3).unwrap();
        assert_eq!(constant.x_counts, slow.x_counts);
        assert_eq!(constant.x_counts, fast.x_counts);
    }
    assert_eq!(slow.env, EnvState::Xi(1.0));

    let base = run_fixation(&Regime::Constant, &d, n, 0.3, 300, 1_000_000, 12).unwrap();
    let via_slow = run_fixation(&Regime::Slow { env: still, xi0: 1.0 }, &d, n, 0.3, 300, 1_000_000, 12).unwrap();
    let via_fast = run_fixation(&Regime::Fast(silent), &d, n, 0.3, 300, 1_000_000, 12).unwrap();
    assert_eq!(base, via_slow);
    assert_eq!(base, via_fast);
}

#[test]
fn fixation_estimate_is_independent_of_thread_count() {
    let d = dist(&[0.6, 0.4]);
    let fenv = FastEnvSpec::new(0.25, 1.0).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_fixation(&Regime::Fast(fenv), &d, 120, 0.25, 400, 1_000_000, 2024).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(1));
    assert_eq!(one.fixed_count + one.lost_count + one.censored_count, 400);
}

#[test]
fn too_few_replicates_are_rejected() {
    let d = dist(&[0.6, 0.4]);
    assert!(run_fixation(&Regime::Constant, &d, 100, 0.5, 99, 1000, 1).is_err());
    assert!(run_fixation(&Regime::Constant, &d, 100, 1.5, 100, 1000, 1).is_err());
}

// ---------------------------------------------------------------------------
// Environment processes
// ---------------------------------------------------------------------------

#[test]
fn reflected_walk_step_has_the_diffusion_moments() {
    let n = 500u64;
    let alpha = |xi: f64| 2.0 * (1.2 - xi);
    let eta = |xi: f64| (xi - 0.5) * (2.0 - xi);
    let env = make_env_process(EnvKind::ReflectedWalk { alpha: Arc::new(alpha), eta: Arc::new(eta) }, 0.5, 2.0, n)
        .unwrap();
    let xi = 1.0;
    let draws = 200_000;
    let mut rng = stream_rng(77, 0);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let inc = env.next(xi, &mut rng) - xi;
        sum += inc;
        sum_sq += inc * inc;
    }
    let mean = sum / draws as f64;
    let var = sum_sq / draws as f64 - mean * mean;
    let (mu, sigma2) = (alpha(xi) / n as f64, eta(xi).powi(2) / n as f64);
    let se = (sigma2 / draws as f64).sqrt();
    assert!((mean - mu).abs() <= 4.0 * se, "mean {mean} vs {mu}");
    // A ±η/√N coin has variance exactly η²/N.
    assert!((var - sigma2).abs() <= 0.01 * sigma2, "variance {var} vs {sigma2}");
}

#[test]
fn deterministic_logistic_tracks_the_ode() {
    let (r, xi_inf) = (20.0, 1.2);
    let ode = Logistic { r, xi_inf };
    let error_at = |n: u64| {
        let env = make_env_process(EnvKind::DeterministicLogistic { r, xi_inf }, 0.5, 2.4, n).unwrap();
        let mut rng = stream_rng(0, 0);
        let mut xi = 1.0;
        let mut worst = 0.0f64;
        for g in 1..=n / 2 {
            xi = env.next(xi, &mut rng);
            worst = worst.max((xi - ode.xi(g as f64 / n as f64)).abs());
        }
        worst
    };
    let (coarse, fine) = (error_at(10_000), error_at(100_000));
    assert!(fine < 1e-4, "N = 1e5: max deviation {fine}");
    assert!(fine < coarse / 5.0, "deviation does not shrink with N: {coarse} → {fine}");
}

#[test]
fn environment_noise_must_vanish_at_the_box_ends() {
    let bad_eta = EnvKind::ReflectedWalk { alpha: Arc::new(|_| 0.0), eta: Arc::new(|_| 0.1) };
    assert!(make_env_process(bad_eta, 0.5, 2.0, 100).is_err());
    let outward = EnvKind::ReflectedWalk { alpha: Arc::new(|xi| xi - 1.0), eta: Arc::new(|_| 0.0) };
    assert!(make_env_process(outward, 0.5, 2.0, 100).is_err());
    assert!(SlowEnvSpec::new(0.5, 2.0, Arc::new(|_| 0.0), Arc::new(|xi| xi - 0.5)).is_err());
}

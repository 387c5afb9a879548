//! Manifold reduction on the seed-bank flows: closed-form Jacobians and
//! Hessians, agreement of the two Θ routes, derivatives of the projection map
//! and the sign transfer from the Hessian term to Θ.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seedbank::flows::{
    build_flow, chart_for, constant_field, fast_hessian_blocks_on_gamma, fast_left_eigvec, hess_f0_on_gamma,
    jacobian_on_gamma, slow_field, FlowKind,
};
use seedbank::model::GerminationDistribution;
use seedbank::reduction::{
    definiteness_of, lyapunov_rhs, null_eigenpair, project_to_manifold, projections, reduce, solve_theta,
    theta_integral, ReductionError,
};

fn random_distribution(r: &mut ChaCha8Rng, k: usize, b0_min: f64) -> GerminationDistribution {
    let w: Vec<f64> = (0..=k).map(|_| -r.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = w.iter().sum();
    let mut b: Vec<f64> = w.iter().map(|x| x / total * (1.0 - b0_min)).collect();
    b[0] += b0_min;
    let s: f64 = b.iter().sum();
    b.iter_mut().for_each(|x| *x /= s);
    GerminationDistribution::new(b).unwrap()
}

// ---------------------------------------------------------------------------
// Flow fields
// ---------------------------------------------------------------------------

#[test]
fn slow_flow_is_the_rescaled_constant_flow() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let k = r.random_range(1..=4);
        let d = random_distribution(&mut r, k, 0.05);
        let xi = r.random_range(0.3..3.0);
        let mut z: Vec<f64> = (0..=k).map(|_| r.random_range(0.0..xi)).collect();
        z.push(xi);
        let scaled: Vec<f64> = z[..=k].iter().map(|v| v / xi).collect();
        let slow = slow_field(d.b(), &z);
        let constant = constant_field(d.b(), &scaled);
        for i in 0..=k {
            assert!((slow[i] - xi * constant[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn closed_form_jacobians_and_hessians_on_the_manifold() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..15 {
        let k = r.random_range(1..=4);
        let d = random_distribution(&mut r, k, 0.05);
        let x0 = r.random_range(0.05..0.95);
        for kind in [FlowKind::Constant(d.clone()), FlowKind::Linearized(d.clone()), FlowKind::FastEnv(d.clone())] {
            let flow = build_flow(&kind);
            let point = chart_for(&kind).unwrap().point(x0);
            let closed = jacobian_on_gamma(&kind, x0).unwrap();
            let fd = flow.fd_jacobian(&point).unwrap();
            assert!((&closed - &fd).amax() < 1e-6, "{}: jacobian mismatch {:.2e}", kind.name(), (&closed - &fd).amax());
            assert!((&closed - flow.jacobian(&point).unwrap()).amax() < 1e-12);
        }
        let constant = build_flow(&FlowKind::Constant(d.clone()));
        let h = &constant.hessians(&vec![x0; k + 1]).unwrap()[0];
        assert!((h - hess_f0_on_gamma(&d, x0)).amax() < 1e-6);

        let fast = build_flow(&FlowKind::FastEnv(d.clone()));
        let point = chart_for(&FlowKind::FastEnv(d.clone())).unwrap().point(x0);
        let hf = &fast.hessians(&point).unwrap()[0];
        let (hxu, huu) = fast_hessian_blocks_on_gamma(&d, x0);
        assert!((hf.view((0, k + 1), (k + 1, k)) - hxu).amax() < 1e-6);
        assert!((hf.view((k + 1, k + 1), (k, k)) - huu).amax() < 1e-6);
        assert!((hf.view((0, 0), (k + 1, k + 1)) - hess_f0_on_gamma(&d, x0)).amax() < 1e-6);
    }
}

// ---------------------------------------------------------------------------
// Θ
// ---------------------------------------------------------------------------

#[test]
fn lyapunov_and_integral_routes_agree_for_four_generations() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let d = random_distribution(&mut r, 4, 0.1);
        let x0 = r.random_range(0.0..1.0);
        for kind in [FlowKind::Constant(d.clone()), FlowKind::Linearized(d.clone())] {
            let flow = build_flow(&kind);
            let point = chart_for(&kind).unwrap().point(x0);
            let j = flow.jacobian(&point).unwrap();
            let (u, v) = null_eigenpair(&j).unwrap();
            let (_, p_s) = projections(&u, &v);
            let h = flow.hessians(&point).unwrap();
            let a = solve_theta(&j, &h, &v, &p_s, &u).unwrap();
            let b = theta_integral(&j, &h, &v, &p_s, 20.0, 0.05).unwrap();
            assert!((a - b).amax() < 1e-7);
        }
    }
}

#[test]
fn fast_theta_contains_the_constant_theta() {
    for b in [vec![0.5, 0.5], vec![0.2, 0.5, 0.3]] {
        let d = GerminationDistribution::new(b).unwrap();
        let k = d.k();
        for x0 in [0.1, 0.4, 0.8] {
            let constant = FlowKind::Constant(d.clone());
            let base = reduce(&build_flow(&constant), &chart_for(&constant).unwrap(), x0, None).unwrap();
            let fast = FlowKind::FastEnv(d.clone());
            let along = |x: f64| Ok::<_, ReductionError>(fast_left_eigvec(&d, x));
            let res = reduce(&build_flow(&fast), &chart_for(&fast).unwrap(), x0, Some(&along)).unwrap();
            assert!((res.theta.view((0, 0), (k + 1, k + 1)) - &base.theta).amax() < 1e-9);
        }
    }
}

#[test]
fn hessian_sign_transfers_to_theta() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let mut definite = 0;
    for _ in 0..40 {
        let k = r.random_range(1..=3);
        let d = random_distribution(&mut r, k, 0.05);
        let x0 = r.random_range(0.0..1.0);
        for kind in [FlowKind::Constant(d.clone()), FlowKind::Linearized(d.clone())] {
            let flow = build_flow(&kind);
            let point = chart_for(&kind).unwrap().point(x0);
            let j = flow.jacobian(&point).unwrap();
            let (u, v) = null_eigenpair(&j).unwrap();
            let (_, p_s) = projections(&u, &v);
            let h = flow.hessians(&point).unwrap();
            let rhs = definiteness_of(&lyapunov_rhs(&h, &v, &p_s));
            let theta = definiteness_of(&solve_theta(&j, &h, &v, &p_s, &u).unwrap());
            if rhs.is_psd() {
                assert!(theta.is_nsd(), "{rhs:?} but Θ {theta:?}");
                definite += 1;
            }
            if rhs.is_nsd() {
                assert!(theta.is_psd(), "{rhs:?} but Θ {theta:?}");
                definite += 1;
            }
        }
    }
    assert!(definite > 0, "no semidefinite right-hand side encountered");
}

// ---------------------------------------------------------------------------
// Projection map
// ---------------------------------------------------------------------------

#[test]
fn null_vectors_are_normalised_on_the_diagonal() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let k = r.random_range(1..=4);
        let d = random_distribution(&mut r, k, 0.05);
        let kind = FlowKind::Constant(d);
        let res = reduce(&build_flow(&kind), &chart_for(&kind).unwrap(), r.random_range(0.0..1.0), None).unwrap();
        assert!((res.u.dot(&res.v) - 1.0).abs() < 1e-12);
        assert!((res.v.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn projection_derivatives_match_finite_differences() {
    for b in [vec![0.5, 0.5], vec![0.4, 0.35, 0.25], vec![0.3, 0.2, 0.3, 0.2]] {
        let d = GerminationDistribution::new(b).unwrap();
        let k = d.k();
        let kind = FlowKind::Constant(d);
        let flow = build_flow(&kind);
        let chart = chart_for(&kind).unwrap();
        for x0 in [0.2, 0.5, 0.75] {
            let res = reduce(&flow, &chart, x0, None).unwrap();
            let phi = |x: &[f64]| project_to_manifold(&flow, &chart, x, 1e-13).unwrap()[0];
            let base = chart.point(x0);
            let h = 1e-4;
            for i in 0..=k {
                let (mut up, mut down) = (base.clone(), base.clone());
                up[i] += h;
                down[i] -= h;
                let fd = (phi(&up) - phi(&down)) / (2.0 * h);
                assert!((fd - res.phi0_grad[i]).abs() < 1e-5, "∂Φ₀/∂x_{i}: {fd} vs {}", res.phi0_grad[i]);
            }
            let h = 1e-3;
            let (mut up, mut down) = (base.clone(), base.clone());
            up[0] += h;
            down[0] -= h;
            let fd2 = (phi(&up) - 2.0 * phi(&base) + phi(&down)) / (h * h);
            assert!((fd2 - res.phi0_hess[(0, 0)]).abs() < 1e-3, "∂²Φ₀/∂x₀²: {fd2} vs {}", res.phi0_hess[(0, 0)]);
        }
    }
}

//! Adaptive Dormand–Prince 5(4) integration of autonomous ODEs `ẋ = f(x)`.

/// Step-size control settings.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-13, rel_tol: 1e-12, initial_step: 1e-3, max_step: 1.0, max_steps: 1_000_000 }
    }
}

/// Outcome of [`integrate_until`].
#[derive(Debug, Clone)]
pub struct OdeOutcome {
    pub state: Vec<f64>,
    pub time: f64,
    pub steps: usize,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(x: &[f64], terms: &[(f64, &[f64])], h: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    for (coef, k) in terms {
        for (o, ki) in out.iter_mut().zip(k.iter()) {
            *o += h * coef * ki;
        }
    }
    out
}

/// Integrate `ẋ = f(x)` from `x0` until `stop(x, f(x))` holds (checked after
/// every accepted step and at the start). `f` may fail (e.g. leave its
/// domain); the failure is propagated. Returns `Ok(None)` if `max_steps` is
/// exhausted.
pub fn integrate_until<F, S, E>(f: F, x0: &[f64], stop: S, opts: &OdeOptions) -> Result<Option<OdeOutcome>, E>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, E>,
    S: Fn(&[f64], &[f64]) -> bool,
{
    let mut x = x0.to_vec();
    let mut k1 = f(&x)?;
    let mut t = 0.0;
    let mut h = opts.initial_step;
    if stop(&x, &k1) {
        return Ok(Some(OdeOutcome { state: x, time: t, steps: 0 }));
    }
    let mut steps = 0;
    while steps < opts.max_steps {
        steps += 1;
        let k2 = f(&axpy(&x, &[(A21, &k1)], h))?;
        let k3 = f(&axpy(&x, &[(A31, &k1), (A32, &k2)], h))?;
        let k4 = f(&axpy(&x, &[(A41, &k1), (A42, &k2), (A43, &k3)], h))?;
        let k5 = f(&axpy(&x, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h))?;
        let k6 = f(&axpy(&x, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h))?;
        let x_new = axpy(&x, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
        let k7 = f(&x_new)?;
        let mut err: f64 = 0.0;
        for i in 0..x.len() {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = opts.abs_tol + opts.rel_tol * x[i].abs().max(x_new[i].abs());
            err = err.max((e / scale).abs());
        }
        if err <= 1.0 {
            t += h;
            x = x_new;
            k1 = k7;
            if stop(&x, &k1) {
                return Ok(Some(OdeOutcome { state: x, time: t, steps }));
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * factor).min(opts.max_step);
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_to_fixed_point() {
        let f = |x: &[f64]| -> Result<Vec<f64>, ()> { Ok(vec![-(x[0] - 2.0), -3.0 * x[1]]) };
        let out = integrate_until(f, &[5.0, 1.0], |_, fx| fx.iter().all(|v| v.abs() < 1e-12), &OdeOptions::default())
            .unwrap()
            .unwrap();
        assert!((out.state[0] - 2.0).abs() < 1e-11);
        assert!(out.state[1].abs() < 1e-12);
    }

    #[test]
    fn tracks_analytic_solution() {
        // ẋ = −x², x(0) = 1 ⇒ x(t) = 1/(1+t); stop when x ≤ 0.25 (t = 3).
        let f = |x: &[f64]| -> Result<Vec<f64>, ()> { Ok(vec![-x[0] * x[0]]) };
        let out = integrate_until(f, &[1.0], |x, _| x[0] <= 0.25, &OdeOptions::default()).unwrap().unwrap();
        assert!((out.state[0] - 1.0 / (1.0 + out.time)).abs() < 1e-11);
    }
}

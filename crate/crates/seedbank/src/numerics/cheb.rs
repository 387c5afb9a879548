//! Chebyshev interpolation on an interval with barycentric evaluation.
//!
//! Used to tabulate smooth coefficient functions that are expensive to
//! evaluate (each value of the general-`K` drift needs a Lyapunov solve) so
//! that Monte Carlo and PDE inner loops stay cheap.

/// Interpolant through the Chebyshev–Lobatto points of `[a, b]`.
#[derive(Debug, Clone)]
pub struct Chebyshev {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl Chebyshev {
    /// Sample `f` at `n + 1` Chebyshev–Lobatto points.
    pub fn fit<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> Self {
        assert!(n >= 1 && b > a);
        let nodes: Vec<f64> = (0..=n)
            .map(|j| {
                let t = (std::f64::consts::PI * j as f64 / n as f64).cos();
                0.5 * (a + b) + 0.5 * (b - a) * t
            })
            .collect();
        let values = nodes.iter().map(|&x| f(x)).collect();
        let weights = (0..=n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();
        Self { a, b, nodes, values, weights }
    }

    /// Evaluate the interpolant (clamped to the fitted interval).
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(self.a, self.b);
        let mut num = 0.0;
        let mut den = 0.0;
        for ((xj, fj), wj) in self.nodes.iter().zip(&self.values).zip(&self.weights) {
            let d = x - xj;
            if d == 0.0 {
                return *fj;
            }
            let c = wj / d;
            num += c * fj;
            den += c;
        }
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_analytic_function() {
        let c = Chebyshev::fit(|x| (3.0 * x).sin() / (1.0 + x), 0.0, 1.0, 40);
        for i in 0..=100 {
            let x = i as f64 / 100.0 + 0.0013;
            let x = x.min(1.0);
            assert!((c.eval(x) - (3.0 * x).sin() / (1.0 + x)).abs() < 1e-14);
        }
    }
}

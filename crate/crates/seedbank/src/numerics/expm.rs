//! Matrix exponential by scaling and squaring with a diagonal Padé
//! approximant.

use nalgebra::DMatrix;

/// Degree of the diagonal Padé approximant.
const PADE_DEGREE: usize = 6;

/// The 1-norm of the scaled matrix is brought below this threshold before the
/// Padé approximant is applied; at degree 6 the truncation error is then below
/// double-precision roundoff.
const SCALED_NORM: f64 = 0.5;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Padé coefficients `c_j = (2q−j)! q! / ((2q)! j! (q−j)!)`.
fn pade_coefficients(q: usize) -> Vec<f64> {
    let mut c = vec![1.0; q + 1];
    for j in 1..=q {
        c[j] = c[j - 1] * (q + 1 - j) as f64 / (j as f64 * (2 * q + 1 - j) as f64);
    }
    c
}

/// `e^A` for a square matrix `A`.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > SCALED_NORM {
        (norm / SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);
    let c = pade_coefficients(PADE_DEGREE);
    let mut numer = DMatrix::<f64>::identity(n, n) * c[0];
    let mut denom = numer.clone();
    let mut power = DMatrix::<f64>::identity(n, n);
    for (j, cj) in c.iter().enumerate().skip(1) {
        power = &power * &scaled;
        numer += &power * *cj;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        denom += &power * (sign * cj);
    }
    let mut result = denom
        .lu()
        .solve(&numer)
        .expect("Padé denominator is nonsingular for a scaled matrix of norm <= 1/2");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_exponentiates_entrywise() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-3.0, 0.0, 1.5]));
        let e = expm(&a);
        for (i, x) in [-3.0f64, 0.0, 1.5].iter().enumerate() {
            assert!((e[(i, i)] - x.exp()).abs() < 1e-13 * x.exp().max(1.0));
        }
    }

    #[test]
    fn rotation_generator_gives_rotation() {
        let t = 2.7;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&a);
        let want = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        assert!((e - want).amax() < 1e-13);
    }

    #[test]
    fn nilpotent_matrix_series_terminates() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 4.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 4.0, 1.0 + 4.0, 0.0, 1.0, 2.0, 0.0, 0.0, 1.0]);
        assert!((expm(&a) - want).amax() < 1e-12);
    }
}

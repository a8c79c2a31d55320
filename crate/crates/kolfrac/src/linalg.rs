//! Dense linear algebra for small constant-coefficient operators.
//!
//! Everything here works on `nalgebra` dynamic matrices; the design envelope
//! is N ≤ 6, so no attempt is made at blocking or sparsity.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Padé(13) numerator coefficients for the matrix exponential
/// (Higham 2005, "The Scaling and Squaring Method Revisited").
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Padé(13) scaling threshold theta_13 from Higham's error analysis.
const THETA13: f64 = 5.371920351148152;

/// Compute `exp(s * a)` by scaling-and-squaring with a diagonal Padé(13)
/// approximant.
///
/// Backward stable for any real square matrix; no spectral assumptions on
/// `a`. Errors on non-finite entries.
pub fn mat_exp(a: &DMatrix<f64>, s: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if !s.is_finite() || a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "mat_exp requires finite matrix entries and scale".into(),
        ));
    }
    let m = a * s;
    let norm = one_norm(&m);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let scaled = &m / 2f64.powi(squarings as i32);

    let mut result = pade13(&scaled)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

fn pade13(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * PADE13[13] + &a4 * PADE13[11] + &a2 * PADE13[9];
    let u = a * (&a6 * &u_inner + &a6 * PADE13[7] + &a4 * PADE13[5] + &a2 * PADE13[3] + &eye * PADE13[1]);
    let v_inner = &a6 * PADE13[12] + &a4 * PADE13[10] + &a2 * PADE13[8];
    let v = &a6 * &v_inner + &a6 * PADE13[6] + &a4 * PADE13[4] + &a2 * PADE13[2] + &eye * PADE13[0];

    // exp(A) ≈ (V - U)^{-1} (V + U)
    let denom = &v - &u;
    let numer = &v + &u;
    denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::InvalidInput("Padé denominator is singular".into()))
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Cholesky factorization of a symmetric positive-definite matrix with the
/// log-determinant.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    /// Lower-triangular factor, `l * l^T = m`.
    pub l: DMatrix<f64>,
    /// `log det(m)`.
    pub logdet: f64,
}

impl SpdFactor {
    /// Solve `m x = b` through the factor.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self.solve_lower(b);
        self.solve_lower_transpose(&y)
    }

    /// Solve `l y = b` (forward substitution).
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.l[(i, j)] * y[j];
            }
            y[i] = acc / self.l[(i, i)];
        }
        y
    }

    fn solve_lower_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        let mut x = DVector::zeros(n);
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in (i + 1)..n {
                acc -= self.l[(j, i)] * x[j];
            }
            x[i] = acc / self.l[(i, i)];
        }
        x
    }

    /// `<m^{-1} r, r>` through the factor, without forming the inverse.
    pub fn inv_quad_form(&self, r: &DVector<f64>) -> f64 {
        let y = self.solve_lower(r);
        y.norm_squared()
    }
}

/// Relative asymmetry tolerance accepted by [`spd_factorize`].
pub const TOL_SYM: f64 = 1e-12;

/// Factor a symmetric positive-definite matrix, reporting the failing pivot
/// on indefinite input.
pub fn spd_factorize(m: &DMatrix<f64>) -> Result<SpdFactor> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.ncols(),
        });
    }
    let scale = one_norm(m).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > TOL_SYM * scale {
                return Err(Error::InvalidInput(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut l = DMatrix::zeros(n, n);
    let mut logdet = 0.0;
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotSpd { pivot: j });
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        logdet += 2.0 * root.ln();
        for i in (j + 1)..n {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / root;
        }
    }
    Ok(SpdFactor { l, logdet })
}

/// Eigenvalues of a symmetric matrix, sorted ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eigs: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| a.total_cmp(b));
    eigs
}

/// Spectral-norm relative distance between two matrices, `|a - b| / max(1, |a|)`,
/// with the Frobenius norm as a cheap spectral surrogate.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = a.norm().max(1.0);
    (a - b).norm() / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn taylor_exp(a: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = a.nrows();
        let mut sum = DMatrix::identity(n, n);
        let mut pow = DMatrix::identity(n, n);
        let mut fact = 1.0;
        for k in 1..=terms {
            pow = &pow * a;
            fact *= k as f64;
            sum += &pow / fact;
        }
        sum
    }

    #[test]
    fn exp_of_zero_scale_is_identity() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let e = mat_exp(&a, 0.0).unwrap();
        assert!(rel_diff(&e, &DMatrix::identity(3, 3)) < 1e-15);
    }

    #[test]
    fn exp_of_nilpotent_terminates() {
        // [[0,0],[1,0]] is nilpotent, so exp(sB) = I + sB exactly.
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        for &s in &[0.3, -1.7, 25.0] {
            let e = mat_exp(&b, s).unwrap();
            assert_relative_eq!(e[(0, 0)], 1.0, epsilon = 1e-14);
            assert_relative_eq!(e[(1, 0)], s, epsilon = 1e-13 * s.abs().max(1.0));
            assert_relative_eq!(e[(0, 1)], 0.0, epsilon = 1e-14);
            assert_relative_eq!(e[(1, 1)], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn exp_matches_taylor_oracle() {
        // Frozen random 2x2; the truncated series is an independent route.
        let a = DMatrix::from_row_slice(2, 2, &[0.31, -0.74, 1.12, 0.05]);
        let e = mat_exp(&a, 0.7).unwrap();
        let oracle = taylor_exp(&(&a * 0.7), 30);
        assert!(rel_diff(&oracle, &e) < 1e-12, "diff {}", rel_diff(&oracle, &e));
    }

    #[test]
    fn exp_handles_large_norm() {
        let a = DMatrix::from_row_slice(2, 2, &[-3.0, 1.0, 0.0, -2.0]);
        // |sA| ~ 100 exercises the squaring phase.
        let e = mat_exp(&a, 30.0).unwrap();
        assert!(e[(0, 0)] > 0.0 && e[(0, 0)] < 1e-38);
    }

    #[test]
    fn exp_rejects_non_finite() {
        let a = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(mat_exp(&a, 1.0).is_err());
    }

    #[test]
    fn spd_factorize_identity() {
        let f = spd_factorize(&DMatrix::identity(3, 3)).unwrap();
        assert_relative_eq!(f.logdet, 0.0, epsilon = 1e-15);
        assert!(rel_diff(&(&f.l * f.l.transpose()), &DMatrix::identity(3, 3)) < 1e-15);
    }

    #[test]
    fn spd_factorize_logdet_oracle() {
        // det [[4,2],[2,3]] = 8 by cofactor expansion.
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let f = spd_factorize(&m).unwrap();
        assert_relative_eq!(f.logdet, 8f64.ln(), epsilon = 1e-14);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let x = f.solve(&b);
        assert!((&m * &x - &b).norm() < 1e-13);
    }

    #[test]
    fn spd_factorize_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match spd_factorize(&m) {
            Err(Error::NotSpd { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected NotSpd, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn exp_semigroup_property(
            entries in proptest::collection::vec(-1.0f64..1.0, 9),
            s1 in -2.0f64..2.0,
            s2 in -2.0f64..2.0,
        ) {
            let b = DMatrix::from_row_slice(3, 3, &entries);
            let lhs = mat_exp(&b, s1 + s2).unwrap();
            let rhs = mat_exp(&b, s1).unwrap() * mat_exp(&b, s2).unwrap();
            prop_assert!(rel_diff(&lhs, &rhs) < 1e-12);
        }
    }
}

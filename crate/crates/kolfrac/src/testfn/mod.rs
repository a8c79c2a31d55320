//! The closed test-function class: finite sums of polynomial-times-Gaussian
//! terms.
//!
//! A term is `P(x) exp(-(x-mu)^T A (x-mu))` with `A` symmetric positive
//! semidefinite and `P` a polynomial of total degree at most
//! [`poly::MAX_DEGREE`]. The class is closed under sums, products, affine
//! shifts, time slices and Gaussian convolution, which is what makes every
//! semigroup in the crate exactly integrable against it. Functions with all
//! shape matrices strictly positive definite are Schwartz class.
//!
//! Space-time functions live on `R^{N+1}` with the *last* coordinate playing
//! the role of time.

pub mod poly;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spd_factorize, sym_eigenvalues};
pub use poly::MultiPoly;

/// Relative tolerance for symmetry / positive-semidefiniteness checks.
const TOL_PSD: f64 = 1e-12;

/// A point of `R^{N+1}` split into position and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub x: Vec<f64>,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        SpaceTimePoint { x, t }
    }

    pub fn position(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    /// Flattened `(X, t)` coordinates.
    pub fn coords(&self) -> Vec<f64> {
        let mut c = self.x.clone();
        c.push(self.t);
        c
    }
}

/// One polynomial-times-Gaussian term.
#[derive(Debug, Clone)]
pub struct GaussianTerm {
    pub poly: MultiPoly,
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
}

impl GaussianTerm {
    fn quad_form(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.center;
        (&self.shape * &d).dot(&d)
    }

    fn is_pure_poly(&self) -> bool {
        self.shape.iter().all(|&v| v == 0.0)
    }

    fn eval(&self, x: &DVector<f64>) -> f64 {
        self.poly.eval(x.as_slice()) * (-self.quad_form(x)).exp()
    }
}

/// Isotropic Gaussian envelope `N(center, sigma^2 I)` covering the localized
/// features of a function; used by quadrature engines to pivot their grids.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub center: DVector<f64>,
    pub sigma: f64,
}

/// A finite sum of polynomial-times-Gaussian terms on `R^d`.
#[derive(Debug, Clone)]
pub struct TestFunction {
    dim: usize,
    terms: Vec<GaussianTerm>,
}

impl TestFunction {
    // ------------------------------------------------------------------
    // constructors
    // ------------------------------------------------------------------

    pub fn zero(dim: usize) -> Self {
        TestFunction { dim, terms: vec![] }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut f = TestFunction::zero(dim);
        if c != 0.0 {
            f.terms.push(GaussianTerm {
                poly: MultiPoly::constant(dim, c),
                center: DVector::zeros(dim),
                shape: DMatrix::zeros(dim, dim),
            });
        }
        f
    }

    /// `amplitude * exp(-(x-center)^T shape (x-center))`.
    pub fn gaussian(amplitude: f64, center: &[f64], shape: DMatrix<f64>) -> Result<Self> {
        let dim = center.len();
        TestFunction::poly_times_gaussian(
            MultiPoly::constant(dim, amplitude),
            center,
            shape,
        )
    }

    /// Isotropic Gaussian `amplitude * exp(-alpha |x - center|^2)`.
    pub fn isotropic_gaussian(amplitude: f64, center: &[f64], alpha: f64) -> Result<Self> {
        let dim = center.len();
        TestFunction::gaussian(amplitude, center, DMatrix::identity(dim, dim) * alpha)
    }

    /// `poly(x) * exp(-(x-center)^T shape (x-center))`.
    pub fn poly_times_gaussian(
        poly: MultiPoly,
        center: &[f64],
        shape: DMatrix<f64>,
    ) -> Result<Self> {
        let dim = center.len();
        if poly.dim() != dim || shape.nrows() != dim || shape.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: poly.dim(),
            });
        }
        let scale = shape.norm().max(1.0);
        if (&shape - shape.transpose()).norm() > TOL_PSD * scale {
            return Err(Error::InvalidInput("shape matrix must be symmetric".into()));
        }
        let is_zero = shape.iter().all(|&v| v == 0.0);
        if !is_zero {
            let eigs = sym_eigenvalues(&shape);
            if eigs[0] < -TOL_PSD * eigs[eigs.len() - 1].abs().max(1.0) {
                return Err(Error::InvalidInput(
                    "shape matrix must be positive semidefinite".into(),
                ));
            }
        }
        let center_vec = if is_zero {
            DVector::zeros(dim)
        } else {
            DVector::from_column_slice(center)
        };
        Ok(TestFunction {
            dim,
            terms: vec![GaussianTerm {
                poly,
                center: center_vec,
                shape,
            }],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[GaussianTerm] {
        &self.terms
    }

    /// True when every term has a strictly positive-definite shape matrix in
    /// its spatial block (first `n` coordinates), so that every fixed-time
    /// slice decays in space.
    pub fn is_spatially_schwartz(&self, n: usize) -> bool {
        self.terms.iter().all(|t| {
            let axx = t.shape.view((0, 0), (n, n)).into_owned();
            spd_factorize(&axx).is_ok()
        })
    }

    // ------------------------------------------------------------------
    // pointwise evaluation and derivatives (all analytic)
    // ------------------------------------------------------------------

    pub fn eval(&self, x: &[f64]) -> f64 {
        if x.len() != self.dim {
            // hot path: keep the check cheap
            debug_assert_eq!(x.len(), self.dim);
        }
        let xv = DVector::from_column_slice(x);
        self.terms.iter().map(|t| t.eval(&xv)).sum()
    }

    pub fn eval_vec(&self, x: &DVector<f64>) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    /// Evaluate a space-time function at `(y, sigma)` without slicing.
    pub fn eval_spacetime(&self, y: &DVector<f64>, sigma: f64) -> f64 {
        debug_assert_eq!(y.len() + 1, self.dim);
        let mut buf = Vec::with_capacity(self.dim);
        buf.extend_from_slice(y.as_slice());
        buf.push(sigma);
        self.eval(&buf)
    }

    pub fn grad(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let xv = DVector::from_column_slice(x);
        let mut g = DVector::zeros(self.dim);
        for term in &self.terms {
            let e = (-term.quad_form(&xv)).exp();
            let p = term.poly.eval(x);
            let dq = (&term.shape * (&xv - &term.center)) * 2.0;
            for i in 0..self.dim {
                let dp = term.poly.partial(i).eval(x);
                g[i] += (dp - p * dq[i]) * e;
            }
        }
        Ok(g)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let xv = DVector::from_column_slice(x);
        let d = self.dim;
        let mut h = DMatrix::zeros(d, d);
        for term in &self.terms {
            let e = (-term.quad_form(&xv)).exp();
            let p = term.poly.eval(x);
            let dq = (&term.shape * (&xv - &term.center)) * 2.0;
            let dp: Vec<f64> = (0..d).map(|i| term.poly.partial(i).eval(x)).collect();
            for i in 0..d {
                for j in 0..d {
                    let ddp = term.poly.partial(i).partial(j).eval(x);
                    let v = ddp - dp[i] * dq[j] - dq[i] * dp[j]
                        + p * (dq[i] * dq[j] - 2.0 * term.shape[(i, j)]);
                    h[(i, j)] += v * e;
                }
            }
        }
        Ok(h)
    }

    pub fn laplacian(&self, x: &[f64]) -> Result<f64> {
        Ok(self.hessian(x)?.trace())
    }

    /// Analytic partial derivative as a class member. Raises the polynomial
    /// degree by one, so it can fail near the degree cap.
    pub fn partial(&self, i: usize) -> Result<TestFunction> {
        let mut out = TestFunction::zero(self.dim);
        for term in &self.terms {
            // d/dx_i (P e^{-q}) = (dP/dx_i - P dq/dx_i) e^{-q}
            let mut lin = MultiPoly::constant(self.dim, 0.0);
            for j in 0..self.dim {
                let a = term.shape[(i, j)];
                if a != 0.0 {
                    lin = lin.add(&MultiPoly::var(self.dim, j).scale(2.0 * a));
                }
            }
            let shift = (&term.shape * &term.center)[i] * 2.0;
            lin = lin.add(&MultiPoly::constant(self.dim, -shift));
            let new_poly = term.poly.partial(i).add(&term.poly.mul(&lin)?.scale(-1.0));
            if !new_poly.is_zero() {
                out.terms.push(GaussianTerm {
                    poly: new_poly,
                    center: term.center.clone(),
                    shape: term.shape.clone(),
                });
            }
        }
        Ok(out)
    }

    // ------------------------------------------------------------------
    // closed-class algebra
    // ------------------------------------------------------------------

    pub fn add(&self, other: &TestFunction) -> TestFunction {
        debug_assert_eq!(self.dim, other.dim);
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        TestFunction {
            dim: self.dim,
            terms,
        }
    }

    pub fn scale(&self, a: f64) -> TestFunction {
        if a == 0.0 {
            return TestFunction::zero(self.dim);
        }
        TestFunction {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| GaussianTerm {
                    poly: t.poly.scale(a),
                    center: t.center.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        }
    }

    pub fn add_constant(&self, c: f64) -> TestFunction {
        self.add(&TestFunction::constant(self.dim, c))
    }

    /// Pointwise product; fails if the polynomial degree cap is exceeded or
    /// the combined Gaussian centers are inconsistent.
    pub fn mul(&self, other: &TestFunction) -> Result<TestFunction> {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = TestFunction::zero(self.dim);
        for a in &self.terms {
            for b in &other.terms {
                out.terms.push(mul_terms(a, b)?);
            }
        }
        Ok(out)
    }

    /// Integer power through repeated products.
    pub fn powi(&self, k: usize) -> Result<TestFunction> {
        let mut out = TestFunction::constant(self.dim, 1.0);
        for _ in 0..k {
            out = out.mul(self)?;
        }
        Ok(out)
    }

    /// `x -> f(x + v)`.
    pub fn shift(&self, v: &DVector<f64>) -> TestFunction {
        let eye = DMatrix::identity(self.dim, self.dim);
        TestFunction {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| GaussianTerm {
                    poly: t.poly.affine_compose(&eye, v),
                    center: if t.is_pure_poly() {
                        DVector::zeros(self.dim)
                    } else {
                        &t.center - v
                    },
                    shape: t.shape.clone(),
                })
                .collect(),
        }
    }

    /// Slice a space-time function at time `t0`, producing a spatial
    /// function of one dimension less (the last coordinate is time).
    pub fn time_slice(&self, t0: f64) -> Result<TestFunction> {
        if self.dim < 2 {
            return Err(Error::UnsupportedKind(
                "time_slice needs a space-time function".into(),
            ));
        }
        let n = self.dim - 1;
        let mut out = TestFunction::zero(n);
        for term in &self.terms {
            let axx = term.shape.view((0, 0), (n, n)).into_owned();
            let a_cross = term.shape.view((0, n), (n, 1)).into_owned();
            let att = term.shape[(n, n)];
            let delta = t0 - term.center[n];
            let sliced_poly = term.poly.substitute_last(t0);
            let mu_x = term.center.rows(0, n).into_owned();

            let (center, log_factor) = if a_cross.norm() == 0.0 {
                (mu_x, -att * delta * delta)
            } else {
                let f = spd_factorize(&axx).map_err(|_| {
                    Error::UnsupportedKind(
                        "time slice needs a strictly positive-definite spatial block \
                         when space and time are coupled"
                            .into(),
                    )
                })?;
                let w = f.solve(&DVector::from_column_slice(a_cross.as_slice()));
                let schur = att - a_cross.dot(&w);
                (mu_x - &w * delta, -schur * delta * delta)
            };
            let poly = sliced_poly.scale(log_factor.exp());
            if !poly.is_zero() {
                let is_zero_shape = axx.iter().all(|&v| v == 0.0);
                out.terms.push(GaussianTerm {
                    poly,
                    center: if is_zero_shape {
                        DVector::zeros(n)
                    } else {
                        center
                    },
                    shape: axx,
                });
            }
        }
        Ok(out)
    }

    /// Lift a spatial function `v(X)` to the time-independent space-time
    /// function `u(X, t) = v(X)`.
    pub fn promote_time_independent(&self) -> TestFunction {
        let n = self.dim;
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let mut shape = DMatrix::zeros(n + 1, n + 1);
            shape.view_mut((0, 0), (n, n)).copy_from(&t.shape);
            let mut center = DVector::zeros(n + 1);
            center.rows_mut(0, n).copy_from(&t.center);
            // embed the polynomial with zero exponent on the time axis
            let mut m = DMatrix::zeros(n, n + 1);
            for i in 0..n {
                m[(i, i)] = 1.0;
            }
            let poly = t.poly.affine_compose(&m, &DVector::zeros(n));
            terms.push(GaussianTerm {
                poly,
                center,
                shape,
            });
        }
        TestFunction {
            dim: n + 1,
            terms,
        }
    }

    // ------------------------------------------------------------------
    // exact Gaussian integrals
    // ------------------------------------------------------------------

    /// `E[f(Y)]` for `Y ~ N(mean, cov)`, exact for the whole class.
    pub fn gaussian_expectation(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
        let cov_factor = spd_factorize(cov)?;
        self.gaussian_expectation_chol(mean, &cov_factor.l)
    }

    /// `E[f(Y)]` for `Y = mean + l ζ`, `ζ` standard normal (`l l^T` is the
    /// covariance). Works entirely in the whitened variable, so it stays
    /// accurate for covariances that are many orders of magnitude
    /// anisotropic.
    pub fn gaussian_expectation_chol(
        &self,
        mean: &DVector<f64>,
        l: &DMatrix<f64>,
    ) -> Result<f64> {
        if mean.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: mean.len(),
            });
        }
        let mut total = 0.0;
        for term in &self.terms {
            total += expectation_term(term, mean, l)?;
        }
        Ok(total)
    }

    /// `∫_{R^d} f(x) dx`; every term must have a strictly positive-definite
    /// shape matrix.
    pub fn total_integral(&self) -> Result<f64> {
        let d = self.dim;
        let mut total = 0.0;
        for term in &self.terms {
            if term.is_pure_poly() {
                return Err(Error::UnsupportedKind(
                    "total integral of a pure polynomial term diverges".into(),
                ));
            }
            let f = spd_factorize(&term.shape)?;
            // ∫ P e^{-q} = pi^{d/2} det(A)^{-1/2} E_{N(mu, (2A)^{-1})}[P]
            let norm = std::f64::consts::PI.powf(d as f64 / 2.0) * (-0.5 * f.logdet).exp();
            // factor for (2A)^{-1}: chol(A) = L => (2A)^{-1} = (L^{-T}/sqrt2)(...)^T
            let linv_t = lower_inverse_transpose(&f.l);
            let moment = term
                .poly
                .gaussian_moment(&term.center, &(&linv_t / 2f64.sqrt()));
            total += norm * moment;
        }
        Ok(total)
    }

    // ------------------------------------------------------------------
    // structure queries used by quadrature engines
    // ------------------------------------------------------------------

    /// Limit of `f` at spatial infinity, when it exists: the sum of the
    /// constant pure-polynomial terms. `None` when some pure-polynomial term
    /// is non-constant (the function is unbounded).
    pub fn far_field(&self) -> Option<f64> {
        let mut c = 0.0;
        for t in &self.terms {
            if t.is_pure_poly() {
                if t.poly.degree() > 0 {
                    return None;
                }
                c += t.poly.eval(vec![0.0; self.dim].as_slice());
            }
        }
        Some(c)
    }

    /// An isotropic Gaussian covering all localized (Gaussian) terms;
    /// `None` when the function has no Gaussian term.
    pub fn envelope(&self) -> Option<Envelope> {
        let gauss: Vec<&GaussianTerm> = self.terms.iter().filter(|t| !t.is_pure_poly()).collect();
        if gauss.is_empty() {
            return None;
        }
        let d = self.dim;
        let mut center = DVector::zeros(d);
        for t in &gauss {
            center += &t.center;
        }
        center /= gauss.len() as f64;
        let mut sigma: f64 = 0.0;
        for t in &gauss {
            let eigs = sym_eigenvalues(&t.shape);
            let lam_min = eigs[0].max(1e-300);
            let width = (1.0 / (2.0 * lam_min)).sqrt();
            let off = (&t.center - &center).norm();
            sigma = sigma.max(width + off);
        }
        // The factor 2 keeps the envelope strictly wider than every term, so
        // density ratios taken against it still decay.
        Some(Envelope {
            center,
            sigma: 2.0 * sigma,
        })
    }
}

fn mul_terms(a: &GaussianTerm, b: &GaussianTerm) -> Result<GaussianTerm> {
    let d = a.center.len();
    let shape = &a.shape + &b.shape;
    let poly = a.poly.mul(&b.poly)?;
    if shape.iter().all(|&v| v == 0.0) {
        return Ok(GaussianTerm {
            poly,
            center: DVector::zeros(d),
            shape,
        });
    }
    let rhs = &a.shape * &a.center + &b.shape * &b.center;
    // combined center solves (A1 + A2) mu = A1 mu1 + A2 mu2; use the spectral
    // pseudo-inverse so that semidefinite blocks (e.g. a flat time direction)
    // are handled.
    let sym = (&shape + shape.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut center = DVector::zeros(d);
    for k in 0..d {
        let lam = eig.eigenvalues[k];
        if lam.abs() > 1e-13 * max_eig {
            let v = eig.eigenvectors.column(k);
            center += v * (v.dot(&rhs) / lam);
        }
    }
    let resid = (&shape * &center - &rhs).norm();
    if resid > 1e-9 * rhs.norm().max(1.0) {
        return Err(Error::UnsupportedKind(
            "product of Gaussian terms has inconsistent degenerate centers".into(),
        ));
    }
    let c_resid = a.quad_form(&center) + b.quad_form(&center);
    Ok(GaussianTerm {
        poly: poly.scale((-c_resid).exp()),
        center,
        shape,
    })
}

fn expectation_term(term: &GaussianTerm, mean: &DVector<f64>, l: &DMatrix<f64>) -> Result<f64> {
    // Substitute Y = mean + L ζ and complete the square in ζ:
    //   E = exp(-r^T A r + 2 b^T C^{-1} b) det(C)^{-1/2}
    //       E_{N(ζ0, C^{-1})}[P(mean + L ζ)],
    // with r = mean - mu, b = L^T A r, C = I + 2 L^T A L, ζ0 = -2 C^{-1} b.
    // C is at least the identity, so nothing here is ill-conditioned no
    // matter how anisotropic or tiny the covariance is.
    let d = mean.len();
    let r = mean - &term.center;
    let a_r = &term.shape * &r;
    let b = l.transpose() * &a_r;
    let m_mat = l.transpose() * &term.shape * l;
    let c_mat = DMatrix::identity(d, d) + (&m_mat + m_mat.transpose());
    let c_factor = spd_factorize(&c_mat)?;
    let c_inv_b = c_factor.solve(&b);
    let exponent = -r.dot(&a_r) + 2.0 * b.dot(&c_inv_b);
    let zeta0 = -&c_inv_b * 2.0;
    // P(mean + L ζ) as a polynomial in ζ, then its Gaussian moment.
    let composed = term.poly.affine_compose(l, mean);
    let linv_t = lower_inverse_transpose(&c_factor.l);
    let moment = composed.gaussian_moment(&zeta0, &linv_t);
    let log_scale = -0.5 * c_factor.logdet + exponent;
    Ok(log_scale.exp() * moment)
}

/// `(L^{-1})^T` for lower-triangular `L`; satisfies `X X^T = (L L^T)^{-1}`.
fn lower_inverse_transpose(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut col = DVector::zeros(n);
        col[j] = 1.0;
        for i in 0..n {
            let mut acc = col[i];
            for k in 0..i {
                acc -= l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = acc / l[(i, i)];
        }
    }
    inv.transpose()
}

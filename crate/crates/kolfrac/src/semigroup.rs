//! The Gaussian kernel, the stationary semigroup `P_t`, and the evolutive
//! semigroup acting on space-time functions.
//!
//! The kernel of the operator class is the Gaussian with mean `e^{tB} X` and
//! covariance `2 t K(t)`:
//!
//! `p(X,Y,t) = (4π)^{-N/2} det(t K(t))^{-1/2}
//!             exp(-<K(t)^{-1}(Y - e^{tB}X), Y - e^{tB}X> / 4t)`.
//!
//! Three interchangeable integration engines evaluate `∫ p(X,Y,t) f(Y) dY`:
//!
//! * `Exact`     — closed-form Gaussian expectation; only for integrands in
//!                 the closed function class;
//! * `Hermite`   — tensor Gauss–Hermite in a whitened variable. The grid is
//!                 pivoted onto the product of the kernel Gaussian and an
//!                 envelope of the integrand, so that late-time applications
//!                 (kernel much wider than the integrand) keep full accuracy.
//!                 Bounded integrands are split as `f = f(∞) + (f - f(∞))`
//!                 first, since only the deviation is localized;
//! * `MonteCarlo`— plain sampling of the kernel Gaussian with a deterministic
//!                 per-call stream.

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hormander::{covariance_k, CovarianceMatrix, HormanderPair};
use crate::phi::PhiFunction;
use crate::quadrature::{gauss_hermite, tensor_grid, QuadratureSpec};
use crate::testfn::{Envelope, TestFunction};

/// Hermite tensor grids are capped at this dimension; beyond it the Monte
/// Carlo engine is mandatory.
pub const HERMITE_DIM_CAP: usize = 4;

/// Which integration engine evaluates semigroup applications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Exact,
    Hermite,
    MonteCarlo,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Engine::Exact => write!(f, "exact"),
            Engine::Hermite => write!(f, "hermite"),
            Engine::MonteCarlo => write!(f, "monte_carlo"),
        }
    }
}

/// One kernel evaluation in log form.
#[derive(Debug, Clone)]
pub struct KernelEval {
    pub log_density: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Evaluate the fundamental solution `p(X, Y, t)`.
pub fn kernel(
    pair: &HormanderPair,
    x: &DVector<f64>,
    y: &DVector<f64>,
    t: f64,
    quad: &QuadratureSpec,
) -> Result<KernelEval> {
    let node = SemigroupNode::new(pair, t, quad)?;
    Ok(node.kernel_at(x, y))
}

/// Prepared data for one application time: drift flow and covariance factor.
#[derive(Debug, Clone)]
pub struct SemigroupNode {
    pub tau: f64,
    pub flow: DMatrix<f64>,
    pub cov: CovarianceMatrix,
}

impl SemigroupNode {
    pub fn new(pair: &HormanderPair, tau: f64, quad: &QuadratureSpec) -> Result<Self> {
        let cov = covariance_k(pair, tau, quad.cov_gl_order)?;
        Ok(SemigroupNode {
            tau,
            flow: pair.drift_flow(tau)?,
            cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.flow.nrows()
    }

    pub fn mean(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.flow * x
    }

    pub fn kernel_at(&self, x: &DVector<f64>, y: &DVector<f64>) -> KernelEval {
        let n = self.dim() as f64;
        let mean = self.mean(x);
        let r = y - &mean;
        let quad_form = self.cov.inv_quad_form_tk(&r);
        let log_density = -0.5 * n * (4.0 * std::f64::consts::PI).ln()
            - 0.5 * self.cov.logdet_tk
            - 0.25 * quad_form;
        KernelEval {
            log_density,
            mean,
            covariance: self.cov.kernel_cov(),
        }
    }
}

// ---------------------------------------------------------------------
// integrand abstraction
// ---------------------------------------------------------------------

/// A pointwise-evaluable spatial integrand with the structure hints the
/// engines need.
pub trait SpatialField: Sync {
    fn eval(&self, y: &DVector<f64>) -> f64;
    /// Limit at spatial infinity, when it exists.
    fn far_field(&self) -> Option<f64>;
    /// Gaussian envelope of the localized part.
    fn envelope(&self) -> Option<Envelope>;
    /// Closed-class representation, when one exists (enables `Engine::Exact`).
    fn as_class(&self) -> Option<TestFunction>;
}

impl SpatialField for TestFunction {
    fn eval(&self, y: &DVector<f64>) -> f64 {
        self.eval_vec(y)
    }

    fn far_field(&self) -> Option<f64> {
        TestFunction::far_field(self)
    }

    fn envelope(&self) -> Option<Envelope> {
        TestFunction::envelope(self)
    }

    fn as_class(&self) -> Option<TestFunction> {
        Some(self.clone())
    }
}

/// Pointwise scalar maps applied on top of a class function.
#[derive(Debug, Clone)]
pub enum PointMap {
    Identity,
    /// `phi(v)`
    Phi(PhiFunction),
    /// `phi(v) - phi(base)`
    PhiDeviation { phi: PhiFunction, base: f64 },
    /// `(v - base)^2`
    SquaredDeviation { base: f64 },
    /// `|v - base|^p`
    AbsPowerDeviation { base: f64, p: f64 },
    /// Third-order Taylor defect of `phi` around `base`:
    /// `phi(v) - phi(base) - phi'(base)(v-base) - phi''(base)/2 (v-base)^2`.
    TaylorDefect { phi: PhiFunction, base: f64 },
}

impl PointMap {
    fn apply(&self, v: f64) -> f64 {
        match self {
            PointMap::Identity => v,
            PointMap::Phi(phi) => phi.eval(v),
            PointMap::PhiDeviation { phi, base } => phi.eval(v) - phi.eval(*base),
            PointMap::SquaredDeviation { base } => (v - base) * (v - base),
            PointMap::AbsPowerDeviation { base, p } => (v - base).abs().powf(*p),
            PointMap::TaylorDefect { phi, base } => {
                let d = v - base;
                phi.eval(v) - phi.eval(*base) - phi.d1(*base) * d - 0.5 * phi.d2(*base) * d * d
            }
        }
    }

    fn phi(&self) -> Option<&PhiFunction> {
        match self {
            PointMap::Phi(phi)
            | PointMap::PhiDeviation { phi, .. }
            | PointMap::TaylorDefect { phi, .. } => Some(phi),
            _ => None,
        }
    }

    /// Symbolic composition with a class function, when representable.
    fn compose_class(&self, inner: &TestFunction) -> Option<TestFunction> {
        match self {
            PointMap::Identity => Some(inner.clone()),
            PointMap::Phi(phi) => phi.compose_class(inner),
            PointMap::PhiDeviation { phi, base } => {
                Some(phi.compose_class(inner)?.add_constant(-phi.eval(*base)))
            }
            PointMap::SquaredDeviation { base } => {
                let dev = inner.add_constant(-base);
                dev.mul(&dev).ok()
            }
            PointMap::AbsPowerDeviation { base, p } => {
                if *p == 2.0 {
                    let dev = inner.add_constant(-base);
                    dev.mul(&dev).ok()
                } else {
                    None
                }
            }
            PointMap::TaylorDefect { phi, base } => {
                let composed = phi.compose_class(inner)?;
                let dev = inner.add_constant(-base);
                let sq = dev.mul(&dev).ok()?;
                Some(
                    composed
                        .add_constant(-phi.eval(*base))
                        .add(&dev.scale(-phi.d1(*base)))
                        .add(&sq.scale(-0.5 * phi.d2(*base))),
                )
            }
        }
    }
}

/// A class function composed with a pointwise map; the workhorse integrand
/// for the nonlocal operators.
pub struct MappedField {
    pub inner: TestFunction,
    pub map: PointMap,
    range_violated: AtomicBool,
}

impl MappedField {
    pub fn new(inner: TestFunction, map: PointMap) -> Self {
        MappedField {
            inner,
            map,
            range_violated: AtomicBool::new(false),
        }
    }

    pub fn identity(inner: TestFunction) -> Self {
        MappedField::new(inner, PointMap::Identity)
    }

    /// Whether any evaluation so far fell outside the nonlinearity interval.
    pub fn range_violated(&self) -> bool {
        self.range_violated.load(Ordering::Relaxed)
    }

    pub fn check_range(&self) -> Result<()> {
        if self.range_violated() {
            let (lo, hi) = self
                .map
                .phi()
                .map(|p| p.interval_bounds())
                .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
            return Err(Error::RangeViolation {
                value: f64::NAN,
                lo,
                hi,
            });
        }
        Ok(())
    }
}

impl SpatialField for MappedField {
    fn eval(&self, y: &DVector<f64>) -> f64 {
        let v = self.inner.eval_vec(y);
        if let Some(phi) = self.map.phi() {
            if !phi.contains(v) {
                self.range_violated.store(true, Ordering::Relaxed);
            }
        }
        self.map.apply(v)
    }

    fn far_field(&self) -> Option<f64> {
        self.inner.far_field().map(|ff| self.map.apply(ff))
    }

    fn envelope(&self) -> Option<Envelope> {
        self.inner.envelope()
    }

    fn as_class(&self) -> Option<TestFunction> {
        self.map.compose_class(&self.inner)
    }
}

// ---------------------------------------------------------------------
// engines
// ---------------------------------------------------------------------

/// Tensor Gauss–Hermite grid in the standardized variable.
#[derive(Debug, Clone)]
pub struct HermiteGrid {
    pub dim: usize,
    pub nodes: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

impl HermiteGrid {
    pub fn new(order: usize, dim: usize) -> Result<Self> {
        if dim > HERMITE_DIM_CAP {
            return Err(Error::UnsupportedDimension {
                n: dim,
                reason: format!(
                    "Hermite tensor grids are capped at N = {HERMITE_DIM_CAP}; use Monte Carlo"
                ),
            });
        }
        let rule = gauss_hermite(order);
        let (nodes, weights) = tensor_grid(&rule, dim);
        Ok(HermiteGrid {
            dim,
            nodes: nodes.into_iter().map(DVector::from_vec).collect(),
            weights,
        })
    }
}

/// `∫ p(X, ·, τ) f dY` with the exact engine.
pub fn apply_exact(node: &SemigroupNode, x: &DVector<f64>, field: &dyn SpatialField) -> Result<f64> {
    let class = field.as_class().ok_or_else(|| {
        Error::UnsupportedKind(
            "integrand is not representable in the closed class; use hermite or monte_carlo"
                .into(),
        )
    })?;
    class.gaussian_expectation_chol(&node.mean(x), &node.cov.kernel_chol())
}

/// `∫ p(X, ·, τ) f dY` with the (pivoted) Gauss–Hermite engine.
pub fn apply_hermite(
    node: &SemigroupNode,
    x: &DVector<f64>,
    field: &dyn SpatialField,
    grid: &HermiteGrid,
) -> Result<f64> {
    let n = node.dim();
    if grid.dim != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: grid.dim,
        });
    }
    let mean = node.mean(x);
    let lk = node.cov.kernel_chol();

    // Pivot the grid only when the kernel is wider than the integrand's
    // envelope. In the narrow-kernel regime plain whitening both suffices
    // (the integrand is smooth on the grid scale) and avoids solving against
    // a possibly ill-conditioned small-time covariance.
    let kernel_spread = lk.norm();
    match (field.far_field(), field.envelope()) {
        (Some(ff), Some(env)) if kernel_spread > env.sigma => {
            // Pivot the grid onto kernel x envelope and integrate f - ff
            // against the kernel through a density ratio.
            let sigma2 = env.sigma * env.sigma;
            let lam_k = kernel_precision(&lk);
            let mut lam_rho = lam_k.clone();
            for i in 0..n {
                lam_rho[(i, i)] += 1.0 / sigma2;
            }
            let rho_factor = crate::linalg::spd_factorize(&lam_rho)?;
            // Sigma_rho = lam_rho^{-1}; m_rho = Sigma_rho (Lam_k m + c/sigma^2)
            let rhs = &lam_k * &mean + &env.center / sigma2;
            let m_rho = rho_factor.solve(&rhs);
            // chol(Sigma_rho) = (chol(Lam_rho))^{-T}
            let l_rho = lower_inv_transpose(&rho_factor.l);
            let logdet_sigma_rho = -rho_factor.logdet;
            // logdet(2 t K) = logdet(t K) + n log 2
            let logdet_sigma_k = node.cov.logdet_tk + n as f64 * 2f64.ln();

            let kf = crate::linalg::SpdFactor {
                l: lk.clone(),
                logdet: logdet_sigma_k,
            };
            let sqrt2 = 2f64.sqrt();
            let mut acc = 0.0;
            for (z, &w) in grid.nodes.iter().zip(&grid.weights) {
                let y = &m_rho + &l_rho * (z * sqrt2);
                let qf_k = kf.inv_quad_form(&(&y - &mean));
                // <Sigma_rho^{-1}(y - m_rho), (y - m_rho)> = 2 |z|^2
                let log_ratio =
                    -0.5 * (logdet_sigma_k - logdet_sigma_rho) - 0.5 * qf_k + z.norm_squared();
                acc += w * log_ratio.exp() * (field.eval(&y) - ff);
            }
            Ok(ff + acc / std::f64::consts::PI.powf(n as f64 / 2.0))
        }
        _ => {
            // Plain whitened grid on the kernel Gaussian; exact for
            // polynomial integrands.
            let sqrt2 = 2f64.sqrt();
            let mut acc = 0.0;
            for (z, &w) in grid.nodes.iter().zip(&grid.weights) {
                let y = &mean + &lk * (z * sqrt2);
                acc += w * field.eval(&y);
            }
            Ok(acc / std::f64::consts::PI.powf(n as f64 / 2.0))
        }
    }
}

/// `∫ p(X, ·, τ) f dY` by Monte Carlo: mean and standard error.
pub fn apply_monte_carlo(
    node: &SemigroupNode,
    x: &DVector<f64>,
    field: &dyn SpatialField,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let n = node.dim();
    let mean = node.mean(x);
    let lk = node.cov.kernel_chol();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut zeta = DVector::zeros(n);
    for _ in 0..samples {
        for i in 0..n {
            zeta[i] = StandardNormal.sample(&mut rng);
        }
        let y = &mean + &lk * &zeta;
        let v = field.eval(&y);
        sum += v;
        sum_sq += v * v;
    }
    let m = samples as f64;
    let avg = sum / m;
    let var = ((sum_sq - sum * sum / m) / (m - 1.0)).max(0.0);
    (avg, (var / m).sqrt())
}

/// Dispatch on the engine; Monte Carlo uses the spec seed directly.
pub fn apply_engine(
    node: &SemigroupNode,
    x: &DVector<f64>,
    field: &dyn SpatialField,
    quad: &QuadratureSpec,
    engine: Engine,
) -> Result<f64> {
    match engine {
        Engine::Exact => apply_exact(node, x, field),
        Engine::Hermite => {
            let grid = HermiteGrid::new(quad.hermite_order, node.dim())?;
            apply_hermite(node, x, field, &grid)
        }
        Engine::MonteCarlo => {
            Ok(apply_monte_carlo(node, x, field, quad.mc_samples, quad.mc_seed).0)
        }
    }
}

fn kernel_precision(lk: &DMatrix<f64>) -> DMatrix<f64> {
    // (L L^T)^{-1} = L^{-T} L^{-1}
    let linv_t = lower_inv_transpose(lk);
    let out = &linv_t * linv_t.transpose();
    (&out + out.transpose()) * 0.5
}

fn lower_inv_transpose(l: &DMatrix<f64>) -> DMatrix<f64> {
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

// ---------------------------------------------------------------------
// semigroup front doors
// ---------------------------------------------------------------------

/// Stationary semigroup `P_t f(X) = ∫ p(X,Y,t) f(Y) dY` on spatial
/// functions.
pub fn apply_pt(
    pair: &HormanderPair,
    f: &TestFunction,
    x: &DVector<f64>,
    t: f64,
    quad: &QuadratureSpec,
    engine: Engine,
) -> Result<f64> {
    if f.dim() != pair.dim() {
        return Err(Error::DimensionMismatch {
            expected: pair.dim(),
            got: f.dim(),
        });
    }
    let node = SemigroupNode::new(pair, t, quad)?;
    apply_engine(&node, x, f, quad, engine)
}

/// Evolutive semigroup
/// `P^K_tau u(X, t) = ∫ p(X,Y,tau) u(Y, t - tau) dY`; the time slice may be
/// negative, the class is globally defined.
pub fn apply_pk(
    pair: &HormanderPair,
    u: &TestFunction,
    x: &DVector<f64>,
    t: f64,
    tau: f64,
    quad: &QuadratureSpec,
    engine: Engine,
) -> Result<f64> {
    let node = SemigroupNode::new(pair, tau, quad)?;
    let slice = u.time_slice(t - tau)?;
    apply_engine(&node, x, &slice, quad, engine)
}

/// Monte Carlo evolutive semigroup: `(estimate, standard error)` with a
/// deterministic stream.
pub fn mc_apply_pk(
    pair: &HormanderPair,
    u: &TestFunction,
    x: &DVector<f64>,
    t: f64,
    tau: f64,
    quad: &QuadratureSpec,
) -> Result<(f64, f64)> {
    quad.validate()?;
    let node = SemigroupNode::new(pair, tau, quad)?;
    let slice = u.time_slice(t - tau)?;
    Ok(apply_monte_carlo(
        &node,
        x,
        &slice,
        quad.mc_samples,
        quad.mc_seed,
    ))
}

/// Residual of the Cauchy problem: `|d/dtau U - K U|` at one `(X, t, tau)`,
/// with the time derivative by central differences and the generator applied
/// through the quadrature (spatial derivatives are pushed inside the
/// integral: `∇_X U = M^T E[∇u]`, `∇^2_X U = M^T E[∇^2 u] M`, `M = e^{tau B}`).
pub fn cauchy_residual(
    pair: &HormanderPair,
    u: &TestFunction,
    x: &DVector<f64>,
    t: f64,
    tau: f64,
    h: f64,
    quad: &QuadratureSpec,
    engine: Engine,
) -> Result<f64> {
    if !(h > 0.0) || h > tau / 2.0 {
        return Err(Error::InvalidInput(format!(
            "difference step must satisfy 0 < h <= tau/2, got h = {h}, tau = {tau}"
        )));
    }
    let up = apply_pk(pair, u, x, t, tau + h, quad, engine)?;
    let dn = apply_pk(pair, u, x, t, tau - h, quad, engine)?;
    let dtau = (up - dn) / (2.0 * h);

    let n = pair.dim();
    let node = SemigroupNode::new(pair, tau, quad)?;
    let sigma = t - tau;

    // E[∂_i u], E[∂_ij u], E[∂_t u] over the kernel Gaussian.
    let mut e_grad = DVector::zeros(n);
    let mut e_hess = DMatrix::zeros(n, n);
    let e_time;
    match engine {
        Engine::Exact => {
            let slice = u.time_slice(sigma)?;
            for i in 0..n {
                let di = slice.partial(i)?;
                e_grad[i] = apply_exact(&node, x, &di)?;
                for j in 0..n {
                    let dij = di.partial(j)?;
                    e_hess[(i, j)] = apply_exact(&node, x, &dij)?;
                }
            }
            let dt_slice = u.partial(n)?.time_slice(sigma)?;
            e_time = apply_exact(&node, x, &dt_slice)?;
        }
        _ => {
            // One Hermite pass accumulating all derivative moments.
            let grid = HermiteGrid::new(quad.hermite_order, n)?;
            let mean = node.mean(x);
            let lk = node.cov.kernel_chol();
            let sqrt2 = 2f64.sqrt();
            let norm = std::f64::consts::PI.powf(n as f64 / 2.0);
            let mut e_t = 0.0;
            for (z, &w) in grid.nodes.iter().zip(&grid.weights) {
                let y = &mean + &lk * (z * sqrt2);
                let mut coords: Vec<f64> = y.as_slice().to_vec();
                coords.push(sigma);
                let g = u.grad(&coords)?;
                let hess = u.hessian(&coords)?;
                for i in 0..n {
                    e_grad[i] += w * g[i];
                    for j in 0..n {
                        e_hess[(i, j)] += w * hess[(i, j)];
                    }
                }
                e_t += w * g[n];
            }
            e_grad /= norm;
            e_hess /= norm;
            e_time = e_t / norm;
        }
    }

    let m = &node.flow;
    let grad_x = m.transpose() * &e_grad;
    let hess_x = m.transpose() * &e_hess * m;
    let q = pair.q();
    let mut ku = 0.0;
    for i in 0..n {
        for j in 0..n {
            ku += q[(i, j)] * hess_x[(i, j)];
        }
    }
    let bx = pair.b() * x;
    ku += bx.dot(&grad_x);
    ku -= e_time;

    Ok((dtau - ku).abs())
}

/// Symbolic image `P_t f` of a spatial class function under the stationary
/// semigroup: the Gaussian convolution stays in the class, so the result is
/// again a [`TestFunction`]. Primarily an oracle for semigroup identities.
pub fn pt_image(
    pair: &HormanderPair,
    f: &TestFunction,
    t: f64,
    quad: &QuadratureSpec,
) -> Result<TestFunction> {
    use crate::testfn::poly::MultiPoly;

    let n = pair.dim();
    if f.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: f.dim(),
        });
    }
    let node = SemigroupNode::new(pair, t, quad)?;
    let m = node.flow.clone();
    let sigma = node.cov.kernel_cov();
    let sig_factor = crate::linalg::spd_factorize(&sigma)?;
    let lambda = {
        let inv_t = lower_inv_transpose(&sig_factor.l);
        let lam = &inv_t * inv_t.transpose();
        (&lam + lam.transpose()) * 0.5
    };

    let mut out = TestFunction::zero(n);
    for term in f.terms() {
        let a = &term.shape;
        let mu = &term.center;
        let c_mat = &lambda + a * 2.0;
        let c_factor = crate::linalg::spd_factorize(&c_mat)?;
        let c_inv = {
            let inv_t = lower_inv_transpose(&c_factor.l);
            let ci = &inv_t * inv_t.transpose();
            (&ci + ci.transpose()) * 0.5
        };
        let g = &c_inv * &lambda * &m;
        let h = (&c_inv * (a * mu)) * 2.0;

        // Quadratic part of the exponent in X:
        // W = M^T (Lambda - Lambda C^{-1} Lambda) M / 2 = M^T Lambda C^{-1} A M,
        // PSD by construction; the product form avoids cancellation between
        // the two Lambda-sized factors when the kernel covariance is tiny.
        let w_mat = {
            let core = &lambda * &c_inv * a;
            let w = m.transpose() * core * &m;
            (&w + w.transpose()) * 0.5
        };
        // Linear part: v = (M^T Lambda h + 2 G^T A mu)/2; constant:
        // k0 = (A mu)^T h - mu^T A mu.
        let v = (m.transpose() * &lambda * &h + (g.transpose() * (a * mu)) * 2.0) * 0.5;
        let k0 = (a * mu).dot(&h) - (a * mu).dot(mu);

        // exponent(X) = -X^T W X + 2 v~... complete the square against W.
        let (center, k1) = if w_mat.iter().all(|&e| e == 0.0) {
            if v.norm() > 1e-13 {
                return Err(Error::UnsupportedKind(
                    "semigroup image of a degenerate term is outside the class".into(),
                ));
            }
            (DVector::zeros(n), k0)
        } else {
            let eig = w_mat.clone().symmetric_eigen();
            let max_eig = eig.eigenvalues.iter().fold(0.0f64, |mm, &e| mm.max(e.abs()));
            let mut mu_hat = DVector::zeros(n);
            for k in 0..n {
                let lam_k = eig.eigenvalues[k];
                if lam_k.abs() > 1e-13 * max_eig {
                    let col = eig.eigenvectors.column(k);
                    mu_hat += col * (col.dot(&v) / (2.0 * lam_k));
                }
            }
            let resid = (&w_mat * &mu_hat * 2.0 - &v).norm();
            if resid > 1e-9 * v.norm().max(1.0) {
                return Err(Error::UnsupportedKind(
                    "semigroup image has inconsistent degenerate exponent".into(),
                ));
            }
            let k1 = k0 + (&w_mat * &mu_hat).dot(&mu_hat);
            (mu_hat, k1)
        };

        let log_scale = -0.5 * (sig_factor.logdet + c_factor.logdet) + k1;
        // Moment blur: Q(c) = E_{N(0, C^{-1})}[P(c + zeta)], then c = G X + h.
        let l_cinv = lower_inv_transpose(&c_factor.l);
        let blurred: MultiPoly = term.poly.gaussian_blur(&l_cinv);
        let poly_x = blurred.affine_compose(&g, &h).scale(log_scale.exp());

        if !poly_x.is_zero() {
            out = out.add(&TestFunction::poly_times_gaussian(
                poly_x,
                center.as_slice(),
                w_mat,
            )?);
        }
    }
    Ok(out)
}

/// Derive a per-node Monte Carlo seed from the spec seed and a stable index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 step on seed xor golden-ratio-scaled index
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn heat_kernel_closed_form() {
        // Q = I, B = 0: p(X,Y,t) = (4 pi t)^{-N/2} exp(-|X-Y|^2/(4t))
        let pair = HormanderPair::heat(2);
        let x = DVector::from_vec(vec![0.3, -0.5]);
        let y = DVector::from_vec(vec![1.0, 0.2]);
        let t = 0.7;
        let k = kernel(&pair, &x, &y, t, &quad()).unwrap();
        let expected = -(2.0 / 2.0) * (4.0 * std::f64::consts::PI * t).ln()
            - (&x - &y).norm_squared() / (4.0 * t);
        assert_relative_eq!(k.log_density, expected, epsilon = 1e-12);
        assert_relative_eq!(k.mean[0], 0.3, epsilon = 1e-14);
        assert_relative_eq!(k.covariance[(0, 0)], 2.0 * t, epsilon = 1e-13);
    }

    #[test]
    fn kernel_at_drifted_center() {
        // Y = e^{tB} X makes the quadratic form vanish, so log p reduces to
        // -(N/2) log(4 pi) - logdet(t K(t))/2, and logdet(t K(t)) = log(1/12)
        // at t = 1 for the Kolmogorov pair.
        let pair = HormanderPair::kolmogorov();
        let x = DVector::from_vec(vec![0.4, -1.2]);
        let t = 1.0;
        let flow = pair.drift_flow(t).unwrap();
        let y = &flow * &x;
        let k = kernel(&pair, &x, &y, t, &quad()).unwrap();
        let expected = -(4.0 * std::f64::consts::PI).ln() - 0.5 * (1.0f64 / 12.0).ln();
        assert_relative_eq!(k.log_density, expected, epsilon = 1e-11);
    }

    #[test]
    fn pt_of_constant_is_constant() {
        let pair = HormanderPair::kolmogorov();
        let f = TestFunction::constant(2, 3.5);
        let x = DVector::from_vec(vec![0.1, 0.9]);
        for engine in [Engine::Exact, Engine::Hermite] {
            let v = apply_pt(&pair, &f, &x, 0.8, &quad(), engine).unwrap();
            assert_relative_eq!(v, 3.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn pt_heat_gaussian_closed_form() {
        // P_t e^{-a|x|^2} = (1+4at)^{-N/2} exp(-a|x|^2/(1+4at)) for the heat
        // pair; independent closed-form oracle.
        let pair = HormanderPair::heat(1);
        let a = 1.0;
        let f = TestFunction::isotropic_gaussian(1.0, &[0.0], a).unwrap();
        let t = 0.6;
        let x = DVector::from_vec(vec![0.8]);
        let expected = (1.0 + 4.0 * a * t).powf(-0.5) * (-a * 0.64 / (1.0 + 4.0 * a * t)).exp();
        for engine in [Engine::Exact, Engine::Hermite] {
            let v = apply_pt(&pair, &f, &x, t, &quad(), engine).unwrap();
            assert_relative_eq!(v, expected, epsilon = 1e-10);
        }
        let (mc, se) = {
            let node = SemigroupNode::new(&pair, t, &quad()).unwrap();
            apply_monte_carlo(&node, &x, &f, 200_000, 42)
        };
        assert!((mc - expected).abs() < 4.0 * se + 1e-12, "mc {mc} vs {expected} (se {se})");
    }

    #[test]
    fn pt_small_time_recovers_function_value() {
        let pair = HormanderPair::heat(2);
        let f = TestFunction::isotropic_gaussian(1.0, &[0.2, -0.4], 1.3).unwrap();
        let x = DVector::from_vec(vec![0.5, 0.1]);
        let v = apply_pt(&pair, &f, &x, 1e-6, &quad(), Engine::Exact).unwrap();
        assert!((v - f.eval(&[0.5, 0.1])).abs() < 1e-5);
    }

    #[test]
    fn pk_time_independent_reduces_to_pt() {
        let pair = HormanderPair::kolmogorov();
        let v = TestFunction::isotropic_gaussian(1.0, &[0.0, 0.0], 1.0).unwrap();
        let u = v.promote_time_independent();
        let x = DVector::from_vec(vec![0.3, -0.2]);
        let tau = 0.9;
        let via_pk = apply_pk(&pair, &u, &x, 5.0, tau, &quad(), Engine::Exact).unwrap();
        let via_pt = apply_pt(&pair, &v, &x, tau, &quad(), Engine::Exact).unwrap();
        assert_relative_eq!(via_pk, via_pt, epsilon = 1e-12);
    }

    #[test]
    fn pk_linear_time_slice() {
        // u(Y, sigma) = sigma: P^K_tau u (X, t) = t - tau by kernel mass one.
        let pair = HormanderPair::heat(2);
        let u = TestFunction::poly_times_gaussian(
            crate::testfn::poly::MultiPoly::var(3, 2),
            &[0.0, 0.0, 0.0],
            DMatrix::zeros(3, 3),
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.0, 0.0]);
        for engine in [Engine::Exact, Engine::Hermite] {
            let v = apply_pk(&pair, &u, &x, 2.0, 0.75, &quad(), engine).unwrap();
            assert_relative_eq!(v, 1.25, epsilon = 1e-10);
        }
    }

    #[test]
    fn hermite_matches_exact_at_late_times() {
        // Late-time applications are where the pivoted grid earns its keep:
        // the kernel is much wider than the integrand.
        let pair = HormanderPair::heat(1);
        let f = TestFunction::isotropic_gaussian(1.0, &[0.4], 2.0).unwrap();
        let x = DVector::from_vec(vec![0.0]);
        for t in [0.01, 1.0, 100.0, 1e6] {
            let node = SemigroupNode::new(&pair, t, &quad()).unwrap();
            let exact = apply_exact(&node, &x, &f).unwrap();
            let grid = HermiteGrid::new(40, 1).unwrap();
            let hermite = apply_hermite(&node, &x, &f, &grid).unwrap();
            assert_relative_eq!(hermite, exact, max_relative = 1e-8, epsilon = 1e-14);
        }
    }

    #[test]
    fn mapped_field_matches_pointwise_composition() {
        let u = TestFunction::isotropic_gaussian(0.7, &[0.1], 1.0).unwrap();
        let field = MappedField::new(u.clone(), PointMap::Phi(PhiFunction::exponential()));
        let y = DVector::from_vec(vec![0.25]);
        assert_relative_eq!(
            SpatialField::eval(&field, &y),
            u.eval(&[0.25]).exp(),
            epsilon = 1e-14
        );
        assert_eq!(SpatialField::far_field(&field), Some(1.0));
        assert!(field.as_class().is_none());

        let sq = MappedField::new(u.clone(), PointMap::SquaredDeviation { base: 0.3 });
        let class = sq.as_class().unwrap();
        assert_relative_eq!(
            class.eval(&[0.25]),
            (u.eval(&[0.25]) - 0.3).powi(2),
            epsilon = 1e-13
        );
    }

    #[test]
    fn pt_image_matches_pointwise_application() {
        let pair = HormanderPair::kolmogorov();
        let f = TestFunction::poly_times_gaussian(
            crate::testfn::poly::MultiPoly::var(2, 0),
            &[0.3, -0.1],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.6]),
        )
        .unwrap();
        let t = 0.8;
        let image = pt_image(&pair, &f, t, &quad()).unwrap();
        for x in [[0.0, 0.0], [0.7, -0.4], [-1.1, 0.5]] {
            let xv = DVector::from_column_slice(&x);
            let direct = apply_pt(&pair, &f, &xv, t, &quad(), Engine::Exact).unwrap();
            assert_relative_eq!(image.eval(&x), direct, epsilon = 1e-11, max_relative = 1e-11);
        }
    }

    #[test]
    fn semigroup_law_through_symbolic_images() {
        // P_{t1+t2} = P_{t1} P_{t2} on the closed class, to 1e-7.
        let pair = HormanderPair::kolmogorov();
        let f = TestFunction::isotropic_gaussian(1.0, &[0.2, 0.4], 1.0).unwrap();
        let (t1, t2) = (0.3, 0.5);
        let one_step = pt_image(&pair, &f, t1 + t2, &quad()).unwrap();
        let inner = pt_image(&pair, &f, t2, &quad()).unwrap();
        let two_step = pt_image(&pair, &inner, t1, &quad()).unwrap();
        for x in [[0.0, 0.0], [0.6, -0.3], [-0.9, 1.1]] {
            assert_relative_eq!(one_step.eval(&x), two_step.eval(&x), epsilon = 1e-7);
        }
    }

    #[test]
    fn cauchy_residual_small_for_heat_gaussian() {
        let pair = HormanderPair::heat(1);
        let u = TestFunction::isotropic_gaussian(1.0, &[0.0, 0.0], 1.0).unwrap();
        let x = DVector::from_vec(vec![0.4]);
        let r = cauchy_residual(&pair, &u, &x, 1.5, 0.5, 1e-3, &quad(), Engine::Exact).unwrap();
        assert!(r < 1e-4, "residual {r}");
    }

    #[test]
    fn cauchy_residual_zero_for_constants() {
        let pair = HormanderPair::kolmogorov();
        let u = TestFunction::constant(3, 2.0);
        let x = DVector::from_vec(vec![0.1, 0.2]);
        let r = cauchy_residual(&pair, &u, &x, 1.0, 0.4, 1e-3, &quad(), Engine::Exact).unwrap();
        assert!(r < 1e-10);
    }

    #[test]
    fn cauchy_residual_rejects_large_step() {
        let pair = HormanderPair::heat(1);
        let u = TestFunction::isotropic_gaussian(1.0, &[0.0, 0.0], 1.0).unwrap();
        let x = DVector::from_vec(vec![0.0]);
        assert!(
            cauchy_residual(&pair, &u, &x, 1.0, 0.1, 0.09, &quad(), Engine::Exact).is_err()
        );
    }

    #[test]
    fn mc_constant_has_zero_standard_error() {
        let pair = HormanderPair::heat(2);
        let u = TestFunction::constant(3, 1.0);
        let x = DVector::from_vec(vec![0.0, 0.0]);
        let (est, se) = mc_apply_pk(&pair, &u, &x, 1.0, 0.5, &quad()).unwrap();
        assert_relative_eq!(est, 1.0, epsilon = 1e-14);
        assert_relative_eq!(se, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn mc_is_deterministic_given_seed() {
        let pair = HormanderPair::kolmogorov();
        let u = TestFunction::isotropic_gaussian(1.0, &[0.0, 0.0, 0.0], 1.0).unwrap();
        let x = DVector::from_vec(vec![0.2, -0.1]);
        let a = mc_apply_pk(&pair, &u, &x, 1.0, 0.3, &quad()).unwrap();
        let b = mc_apply_pk(&pair, &u, &x, 1.0, 0.3, &quad()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mc_agrees_with_exact_within_standard_errors() {
        let pair = HormanderPair::kolmogorov();
        let v = TestFunction::isotropic_gaussian(1.0, &[0.1, -0.2], 0.9).unwrap();
        let u = v.promote_time_independent();
        let x = DVector::from_vec(vec![0.4, 0.3]);
        let (est, se) = mc_apply_pk(&pair, &u, &x, 1.0, 0.6, &quad()).unwrap();
        let exact = apply_pk(&pair, &u, &x, 1.0, 0.6, &quad(), Engine::Exact).unwrap();
        assert!((est - exact).abs() < 4.0 * se, "{est} vs {exact}, se {se}");
    }

    #[test]
    fn hermite_cap_enforced() {
        assert!(HermiteGrid::new(10, 5).is_err());
    }

    #[test]
    fn derive_seed_is_stable() {
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(7, 4));
    }
}

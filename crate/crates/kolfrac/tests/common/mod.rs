#![allow(dead_code)]

//! Shared helpers for the integration and acceptance suites: the
//! Fourier-multiplier oracle for the fractional Laplacian (test-only; the
//! production path is always the real-space/semigroup definition) and small
//! reporting utilities.

use kolfrac::quadrature::gauss_legendre_on;

/// `(-Δ)^s` of the 1-d Gaussian `a exp(-alpha (y - mu)^2)` at `x`, via the
/// Fourier symbol `|ξ|^{2s}`:
///
/// `value = (a / 2π) sqrt(π/alpha) ∫ |ξ|^{2s} e^{-ξ²/(4 alpha)} e^{iξ(x-mu)} dξ`.
///
/// The frequency integral runs on composite panels, geometrically refined
/// toward `ξ = 0` to absorb the fractional power.
pub fn fourier_frac_laplacian_gaussian(a: f64, mu: f64, alpha: f64, x: f64, s: f64) -> f64 {
    let b = x - mu;
    let scale = alpha.sqrt();
    let integrand = |xi: f64| xi.powf(2.0 * s) * (-xi * xi / (4.0 * alpha)).exp() * (b * xi).cos();

    let mut total = 0.0;
    // geometric panels on (0, scale]
    for k in 0..24 {
        let hi = scale * 0.5f64.powi(k);
        let lo = 0.5 * hi;
        total += gauss_legendre_on(24, lo, hi).integrate(integrand);
    }
    // unit-ish panels out to where the Gaussian factor is below 1e-20
    let xi_max = scale * 14.0;
    let mut lo = scale;
    while lo < xi_max {
        let hi = (lo + scale).min(xi_max);
        total += gauss_legendre_on(24, lo, hi).integrate(integrand);
        lo = hi;
    }
    a * (std::f64::consts::PI / alpha).sqrt() * 2.0 * total / (2.0 * std::f64::consts::PI)
}

/// Print one acceptance line and return the verdict unchanged.
pub fn criterion(num: u32, name: &str, pass: bool, detail: &str) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {num:2} {verdict}: {name} — {detail}");
    pass
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// `∫ p(X, y, t) dX` over a whitened Hermite grid: importance quadrature
/// against the Gaussian shape of the kernel in its *first* argument (mean
/// `e^{-tB} y`, covariance `e^{-tB} 2tK(t) e^{-tB^T}`).
pub fn dual_mass(
    pair: &kolfrac::HormanderPair,
    y: &nalgebra::DVector<f64>,
    t: f64,
    quad: &kolfrac::QuadratureSpec,
) -> f64 {
    use kolfrac::hormander::covariance_k;
    use kolfrac::linalg::spd_factorize;
    use kolfrac::quadrature::{gauss_hermite, tensor_grid};
    use kolfrac::semigroup::kernel;
    use nalgebra::DVector;

    let n = pair.dim();
    let cov = covariance_k(pair, t, quad.cov_gl_order).unwrap();
    let back_flow = pair.drift_flow(-t).unwrap();
    let mean_x = &back_flow * y;
    let sigma_x = &back_flow * cov.kernel_cov() * back_flow.transpose();
    let sigma_x = (&sigma_x + sigma_x.transpose()) * 0.5;
    let factor = spd_factorize(&sigma_x).unwrap();

    let rule = gauss_hermite(quad.hermite_order);
    let (zs, ws) = tensor_grid(&rule, n);
    let sqrt2 = 2f64.sqrt();
    let norm = std::f64::consts::PI.powf(n as f64 / 2.0);
    let mut total = 0.0;
    for (z, w) in zs.iter().zip(&ws) {
        let zv = DVector::from_column_slice(z);
        let x = &mean_x + &factor.l * (&zv * sqrt2);
        let k = kernel(pair, &x, y, t, quad).unwrap();
        let log_rho = -0.5 * (n as f64) * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * factor.logdet
            - zv.norm_squared();
        total += w * (k.log_density - log_rho).exp();
    }
    total / norm
}

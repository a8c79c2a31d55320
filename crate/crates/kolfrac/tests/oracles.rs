//! Independent-oracle tests: every quadrature engine is certified against a
//! route that does not share its implementation.

mod common;

use common::{dual_mass, fourier_frac_laplacian_gaussian, rel_err};
use kolfrac::fractional::{frac_laplacian_direct, FracOrder};
use kolfrac::linalg::spd_factorize;
use kolfrac::testfn::poly::MultiPoly;
use kolfrac::{HormanderPair, QuadratureSpec, TestFunction};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn direct_fractional_laplacian_matches_fourier_symbol() {
    let quad = QuadratureSpec::default();
    let (a, mu, alpha) = (1.0, 0.2, 1.3);
    let v = TestFunction::gaussian(a, &[mu], DMatrix::from_row_slice(1, 1, &[alpha])).unwrap();
    for s in [0.3, 0.5, 0.7] {
        let order = FracOrder::new(s).unwrap();
        for x in [-0.8, 0.0, 0.45, 1.2] {
            let real_space = frac_laplacian_direct(&v, &[x], order, &quad).unwrap();
            let fourier = fourier_frac_laplacian_gaussian(a, mu, alpha, x, s);
            assert!(
                rel_err(real_space, fourier) < 1e-5,
                "s = {s}, x = {x}: {real_space} vs {fourier}"
            );
        }
    }
}

#[test]
fn gaussian_expectation_agrees_with_monte_carlo() {
    // 20 random (f, m, S) triples in d = 1 and 2; closed form within four
    // standard errors of a 10^6-sample average.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0ac1e5);
    let samples = 1_000_000usize;
    for trial in 0..20 {
        let d = 1 + (trial % 2);
        // random SPD shape and covariance via Gram matrices
        let shape = random_spd(&mut rng, d, 0.4, 1.8);
        let cov = random_spd(&mut rng, d, 0.3, 1.2);
        let center: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.6..0.6)).collect();
        let mean = DVector::from_vec((0..d).map(|_| rng.gen_range(-0.6..0.6)).collect());
        let mut poly = MultiPoly::constant(d, rng.gen_range(0.5..1.5));
        if trial % 3 == 0 {
            poly = poly.add(&MultiPoly::var(d, 0).scale(rng.gen_range(-1.0..1.0)));
        }
        let f = TestFunction::poly_times_gaussian(poly, &center, shape).unwrap();

        let exact = f.gaussian_expectation(&mean, &cov).unwrap();

        let l = spd_factorize(&cov).unwrap().l;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut zeta = DVector::zeros(d);
        for _ in 0..samples {
            for i in 0..d {
                zeta[i] = StandardNormal.sample(&mut rng);
            }
            let y = &mean + &l * &zeta;
            let v = f.eval(y.as_slice());
            sum += v;
            sum_sq += v * v;
        }
        let m = samples as f64;
        let avg = sum / m;
        let se = (((sum_sq - sum * sum / m) / (m - 1.0)).max(0.0) / m).sqrt();
        assert!(
            (exact - avg).abs() <= 4.0 * se + 1e-12,
            "trial {trial}: exact {exact} vs mc {avg} (se {se})"
        );
    }
}

#[test]
fn dual_kernel_mass_matches_drift_trace() {
    // ∫ p(X, Y, t) dX = e^{-t tr B}, integrated over a whitened Hermite grid
    // in the first argument.
    let quad = QuadratureSpec::default();
    for (pair, name) in [
        (HormanderPair::kolmogorov(), "kolmogorov"),
        (
            HormanderPair::new(
                DMatrix::identity(2, 2),
                DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, 0.0]),
            )
            .unwrap(),
            "drifted",
        ),
    ] {
        let t = 0.7;
        let y = DVector::from_vec(vec![0.4, -0.2]);
        let mass = dual_mass(&pair, &y, t, &quad);
        let expected = (-t * pair.trace_b()).exp();
        assert!(
            (mass - expected).abs() < 1e-6,
            "{name}: {mass} vs {expected}"
        );
    }
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-0.7..0.7));
    &g * g.transpose() + DMatrix::identity(d, d) * rng.gen_range(lo..hi)
}

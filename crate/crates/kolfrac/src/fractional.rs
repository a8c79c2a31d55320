//! Nonlocal operators: fractional powers by subordination, the direct
//! fractional Laplacian, carré du champ in integral and semigroup form,
//! Besov seminorms, the Aronszajn energy, and the chain-rule remainder.
//!
//! The subordination integrals all share the form
//! `∫_0^∞ τ^{-1-θ} g(τ) dτ` with `g(τ)` a semigroup deviation that vanishes
//! linearly at `τ = 0` and is bounded at infinity; [`Subordinator`] owns the
//! graded mesh and the per-node kernel data (drift flow, covariance factor)
//! so that repeated evaluations across points, orders `s` and integrand maps
//! reuse the expensive part.
//!
//! The remainder of the nonlocal chain rule is assembled *per mesh node* from
//! the third-order Taylor defect of the nonlinearity. This keeps the three
//! constituent integrals on one mesh, where their common near-field
//! truncation cancels algebraically, and makes the remainder vanish
//! identically (to roundoff) for quadratic nonlinearities.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hormander::HormanderPair;
use crate::phi::PhiFunction;
use crate::quadrature::{gauss_legendre_on, tensor_grid, unit_sphere, QuadratureSpec, SingularMesh};
use crate::semigroup::{
    apply_exact, apply_hermite, apply_monte_carlo, derive_seed, Engine, HermiteGrid, MappedField,
    PointMap, SemigroupNode,
};
use crate::testfn::TestFunction;

/// Largest admissible fractional order; conditioning of `Γ(1-s)` and the
/// near-field weight degrade beyond it, and limit claims are taken by
/// extrapolation instead.
pub const S_MAX: f64 = 1.0 - 1e-3;

/// A fractional order `s` in `(0, 1)`, capped at [`S_MAX`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= S_MAX) {
            return Err(Error::InvalidInput(format!(
                "fractional order must lie in (0, {S_MAX}], got {s}"
            )));
        }
        Ok(FracOrder(s))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

// ---------------------------------------------------------------------
// special functions
// ---------------------------------------------------------------------

/// Lanczos coefficients, g = 7, n = 9 (GSL set).
const LANCZOS: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

/// Gamma function by Lanczos approximation, for positive arguments.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidInput(format!(
            "gamma_fn requires x > 0, got {x}"
        )));
    }
    Ok(lanczos_gamma(x))
}

fn lanczos_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection keeps full accuracy near zero
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * lanczos_gamma(1.0 - x))
    } else {
        let z = x - 1.0;
        let mut acc = LANCZOS[0];
        for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + 7.5;
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc
    }
}

/// Normalization constant of the fractional Laplacian:
/// `γ(n, s) = s 2^{2s} Γ((n + 2s)/2) / (π^{n/2} Γ(1 - s))`.
pub fn gamma_ns(n: usize, s: FracOrder) -> f64 {
    let s = s.value();
    let num = s * 2f64.powf(2.0 * s) * lanczos_gamma((n as f64 + 2.0 * s) / 2.0);
    let den = std::f64::consts::PI.powf(n as f64 / 2.0) * lanczos_gamma(1.0 - s);
    num / den
}

// ---------------------------------------------------------------------
// direct (integral-form) operators on R^n
// ---------------------------------------------------------------------

fn radial_mesh(s: FracOrder, quad: &QuadratureSpec) -> Result<SingularMesh> {
    // weight r^{-1-2s}; the spherical second difference vanishes like r^2
    SingularMesh::new(
        2.0 * s.value(),
        Some(2.0),
        quad.tau_panels,
        quad.tau_panel_order,
        quad.tail_order,
    )
}

/// Direct fractional Laplacian on a pointwise-evaluable function:
/// `(γ(n,s)/2) ∫ (2f(x) - f(x+y) - f(x-y)) |y|^{-n-2s} dy` in
/// radial-angular form. `n` must be 1, 2 or 3.
pub fn frac_laplacian_direct_fn(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    s: FracOrder,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let n = x.len();
    let sphere = unit_sphere(n, quad.angular_order)?;
    let mesh = radial_mesh(s, quad)?;
    let f_x = f(x);
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let radial = |r: f64, plus: &mut [f64], minus: &mut [f64]| -> f64 {
        let mut acc = 0.0;
        for (dir, w) in &sphere {
            for i in 0..n {
                plus[i] = x[i] + r * dir[i];
                minus[i] = x[i] - r * dir[i];
            }
            acc += w * (2.0 * f_x - f(plus) - f(minus));
        }
        acc
    };
    let integral: f64 = mesh
        .nodes
        .iter()
        .zip(&mesh.weights)
        .map(|(&r, &w)| w * radial(r, &mut plus, &mut minus))
        .sum();
    Ok(0.5 * gamma_ns(n, s) * integral)
}

/// Direct fractional Laplacian of a class function.
pub fn frac_laplacian_direct(
    v: &TestFunction,
    x: &[f64],
    s: FracOrder,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if v.dim() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: v.dim(),
            got: x.len(),
        });
    }
    frac_laplacian_direct_fn(&|y| v.eval(y), x, s, quad)
}

/// Integral-form carré du champ
/// `Γ_(s)(v)(x) = (γ(n,s)/2) ∫ (v(x) - v(y))^2 |x-y|^{-n-2s} dy ≥ 0`.
pub fn carre_direct(
    v: &TestFunction,
    x: &[f64],
    s: FracOrder,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let n = v.dim();
    if n != x.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let sphere = unit_sphere(n, quad.angular_order)?;
    let mesh = radial_mesh(s, quad)?;
    let v_x = v.eval(x);
    let mut buf = vec![0.0; n];
    let integral: f64 = mesh
        .nodes
        .iter()
        .zip(&mesh.weights)
        .map(|(&r, &w)| {
            let mut acc = 0.0;
            for (dir, ws) in &sphere {
                for i in 0..n {
                    buf[i] = x[i] + r * dir[i];
                }
                let d = v_x - v.eval(&buf);
                acc += ws * d * d;
            }
            w * acc
        })
        .sum();
    Ok(0.5 * gamma_ns(n, s) * integral)
}

// ---------------------------------------------------------------------
// subordination driver
// ---------------------------------------------------------------------

/// Reference exponent used only to generate node *positions*, which do not
/// depend on the exponent.
const MESH_POSITION_REF: f64 = 0.5;

/// Shared machinery for every `∫_0^∞ τ^{-1-θ} g(τ) dτ` evaluation against
/// one operator pair: mesh node positions, per-node kernel data, and an
/// optional Hermite grid.
pub struct Subordinator<'a> {
    pair: &'a HormanderPair,
    quad: &'a QuadratureSpec,
    taus: Vec<f64>,
    nodes: Vec<SemigroupNode>,
    grid: Option<HermiteGrid>,
}

impl<'a> Subordinator<'a> {
    pub fn new(pair: &'a HormanderPair, quad: &'a QuadratureSpec) -> Result<Self> {
        quad.validate()?;
        let mesh = SingularMesh::new(
            MESH_POSITION_REF,
            Some(1.0),
            quad.tau_panels,
            quad.tau_panel_order,
            quad.tail_order,
        )?;
        let taus = mesh.nodes.clone();
        let nodes: Vec<Result<SemigroupNode>> = taus
            .par_iter()
            .map(|&t| SemigroupNode::new(pair, t, quad))
            .collect();
        let nodes = nodes.into_iter().collect::<Result<Vec<_>>>()?;
        let grid = if pair.dim() <= crate::semigroup::HERMITE_DIM_CAP {
            Some(HermiteGrid::new(quad.hermite_order, pair.dim())?)
        } else {
            None
        };
        Ok(Subordinator {
            pair,
            quad,
            taus,
            nodes,
            grid,
        })
    }

    pub fn pair(&self) -> &HormanderPair {
        self.pair
    }

    pub fn quad(&self) -> &QuadratureSpec {
        self.quad
    }

    fn weights_for(&self, theta: f64, near_power: Option<f64>) -> Result<Vec<f64>> {
        let mesh = SingularMesh::new(
            theta,
            near_power,
            self.quad.tau_panels,
            self.quad.tau_panel_order,
            self.quad.tail_order,
        )?;
        debug_assert_eq!(mesh.nodes, self.taus);
        Ok(mesh.weights)
    }

    /// `∫_0^∞ τ^{-1-θ} g(τ) dτ` with `g(τ) = ∫ p(x, ·, τ) field_τ dY`,
    /// deterministic engines.
    pub fn integrate(
        &self,
        x: &DVector<f64>,
        theta: f64,
        near_power: Option<f64>,
        engine: Engine,
        field_at: &(dyn Fn(f64) -> Result<MappedField> + Sync),
    ) -> Result<f64> {
        let weights = self.weights_for(theta, near_power)?;
        let contributions: Vec<Result<f64>> = self
            .nodes
            .par_iter()
            .zip(weights.par_iter())
            .map(|(node, &w)| {
                if w == 0.0 {
                    return Ok(0.0);
                }
                let field = field_at(node.tau)?;
                let value = match engine {
                    Engine::Exact => apply_exact(node, x, &field)?,
                    Engine::Hermite => {
                        let grid = self.grid.as_ref().ok_or(Error::UnsupportedDimension {
                            n: self.pair.dim(),
                            reason: "Hermite engine unavailable beyond the dimension cap".into(),
                        })?;
                        apply_hermite(node, x, &field, grid)?
                    }
                    Engine::MonteCarlo => {
                        return Err(Error::InvalidInput(
                            "use integrate_mc for the Monte Carlo engine".into(),
                        ))
                    }
                };
                field.check_range()?;
                Ok(w * value)
            })
            .collect();
        let mut total = 0.0;
        for c in contributions {
            total += c?;
        }
        Ok(total)
    }

    /// Monte Carlo version, returning `(value, standard error)`. Node seeds
    /// derive from the spec seed, the node index and a caller-chosen salt, so
    /// results are reproducible regardless of thread schedule.
    pub fn integrate_mc(
        &self,
        x: &DVector<f64>,
        theta: f64,
        near_power: Option<f64>,
        salt: u64,
        field_at: &(dyn Fn(f64) -> Result<MappedField> + Sync),
    ) -> Result<(f64, f64)> {
        let weights = self.weights_for(theta, near_power)?;
        let stream = derive_seed(self.quad.mc_seed, salt);
        let contributions: Vec<Result<(f64, f64)>> = self
            .nodes
            .par_iter()
            .zip(weights.par_iter())
            .enumerate()
            .map(|(i, (node, &w))| {
                if w == 0.0 {
                    return Ok((0.0, 0.0));
                }
                let field = field_at(node.tau)?;
                let (est, se) = apply_monte_carlo(
                    node,
                    x,
                    &field,
                    self.quad.mc_samples,
                    derive_seed(stream, i as u64),
                );
                field.check_range()?;
                Ok((w * est, w * se))
            })
            .collect();
        let mut total = 0.0;
        let mut var = 0.0;
        for c in contributions {
            let (v, se) = c?;
            total += v;
            var += se * se;
        }
        Ok((total, var.sqrt()))
    }

    // -----------------------------------------------------------------
    // the nonlocal operators
    // -----------------------------------------------------------------

    /// Fractional power by subordination:
    /// `(-K)^s u = -(s/Γ(1-s)) ∫_0^∞ τ^{-1-s} (P^K_τ u - u) dτ`.
    pub fn frac_k(
        &self,
        u: &TestFunction,
        x: &DVector<f64>,
        t: f64,
        s: FracOrder,
        engine: Engine,
    ) -> Result<f64> {
        require_schwartz_plus_constant(u, self.pair.dim())?;
        let u0 = self.base_value(u, x, t);
        let sv = s.value();
        let integral = self.integrate(x, sv, Some(1.0), engine, &|tau| {
            let slice = u.time_slice(t - tau)?.add_constant(-u0);
            Ok(MappedField::identity(slice))
        })?;
        Ok(-sv / lanczos_gamma(1.0 - sv) * integral)
    }

    /// Monte Carlo fractional power with standard error.
    pub fn frac_k_mc(
        &self,
        u: &TestFunction,
        x: &DVector<f64>,
        t: f64,
        s: FracOrder,
        salt: u64,
    ) -> Result<(f64, f64)> {
        require_schwartz_plus_constant(u, self.pair.dim())?;
        let u0 = self.base_value(u, x, t);
        let sv = s.value();
        let pref = -sv / lanczos_gamma(1.0 - sv);
        let (integral, se) = self.integrate_mc(x, sv, Some(1.0), salt, &|tau| {
            let slice = u.time_slice(t - tau)?.add_constant(-u0);
            Ok(MappedField::identity(slice))
        })?;
        Ok((pref * integral, pref.abs() * se))
    }

    /// Evolutive carré du champ:
    /// `Γ^K_(s)(u) = (s / 2Γ(1-s)) ∫_0^∞ τ^{-1-s} P^K_τ((u - u(X,t))^2) dτ`.
    pub fn carre_evolutive(
        &self,
        u: &TestFunction,
        x: &DVector<f64>,
        t: f64,
        s: FracOrder,
        engine: Engine,
    ) -> Result<f64> {
        require_schwartz_plus_constant(u, self.pair.dim())?;
        let u0 = self.base_value(u, x, t);
        let sv = s.value();
        let integral = self.integrate(x, sv, Some(1.0), engine, &|tau| {
            let slice = u.time_slice(t - tau)?;
            Ok(MappedField::new(
                slice,
                PointMap::SquaredDeviation { base: u0 },
            ))
        })?;
        Ok(sv / (2.0 * lanczos_gamma(1.0 - sv)) * integral)
    }

    /// Chain-rule remainder, assembled per node from the third-order Taylor
    /// defect:
    /// `R = (-K)^s φ(u) - φ'(u)(-K)^s u + φ''(u) Γ^K_(s)(u)`.
    pub fn remainder(
        &self,
        u: &TestFunction,
        phi: &PhiFunction,
        x: &DVector<f64>,
        t: f64,
        s: FracOrder,
        engine: Engine,
    ) -> Result<f64> {
        require_schwartz_plus_constant(u, self.pair.dim())?;
        let u0 = self.base_value(u, x, t);
        if !phi.contains(u0) {
            let (lo, hi) = phi.interval_bounds();
            return Err(Error::RangeViolation { value: u0, lo, hi });
        }
        let sv = s.value();
        let integral = self.integrate(x, sv, Some(1.0), engine, &|tau| {
            let slice = u.time_slice(t - tau)?;
            Ok(MappedField::new(
                slice,
                PointMap::TaylorDefect {
                    phi: phi.clone(),
                    base: u0,
                },
            ))
        })?;
        Ok(-sv / lanczos_gamma(1.0 - sv) * integral)
    }

    /// Monte Carlo remainder with standard error.
    pub fn remainder_mc(
        &self,
        u: &TestFunction,
        phi: &PhiFunction,
        x: &DVector<f64>,
        t: f64,
        s: FracOrder,
        salt: u64,
    ) -> Result<(f64, f64)> {
        require_schwartz_plus_constant(u, self.pair.dim())?;
        let u0 = self.base_value(u, x, t);
        let sv = s.value();
        let pref = -sv / lanczos_gamma(1.0 - sv);
        let (integral, se) = self.integrate_mc(x, sv, Some(1.0), salt, &|tau| {
            let slice = u.time_slice(t - tau)?;
            Ok(MappedField::new(
                slice,
                PointMap::TaylorDefect {
                    phi: phi.clone(),
                    base: u0,
                },
            ))
        })?;
        Ok((pref * integral, pref.abs() * se))
    }

    /// `(-K)^s (φ∘u)(X, t)` without requiring `φ∘u` to stay inside the
    /// class; the exact engine still works when it does.
    pub fn frac_k_composed(
        &self,
        u: &TestFunction,
        phi: &PhiFunction,
        x: &DVector<f64>,
        t: f64,
        s: FracOrder,
        engine: Engine,
    ) -> Result<f64> {
        require_schwartz_plus_constant(u, self.pair.dim())?;
        let u0 = self.base_value(u, x, t);
        if !phi.contains(u0) {
            let (lo, hi) = phi.interval_bounds();
            return Err(Error::RangeViolation { value: u0, lo, hi });
        }
        let sv = s.value();
        let integral = self.integrate(x, sv, Some(1.0), engine, &|tau| {
            let slice = u.time_slice(t - tau)?;
            Ok(MappedField::new(
                slice,
                PointMap::PhiDeviation {
                    phi: phi.clone(),
                    base: u0,
                },
            ))
        })?;
        Ok(-sv / lanczos_gamma(1.0 - sv) * integral)
    }

    fn base_value(&self, u: &TestFunction, x: &DVector<f64>, t: f64) -> f64 {
        let mut coords: Vec<f64> = x.as_slice().to_vec();
        coords.push(t);
        u.eval(&coords)
    }
}

fn require_schwartz_plus_constant(u: &TestFunction, n: usize) -> Result<()> {
    if u.dim() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: u.dim(),
        });
    }
    for term in u.terms() {
        let spatial = term.shape.view((0, 0), (n, n)).into_owned();
        if spatial.iter().all(|&v| v == 0.0) {
            if term.poly.degree() > 0 {
                return Err(Error::UnsupportedKind(
                    "nonlocal operators need spatial decay; found a non-constant \
                     term with no spatial Gaussian factor"
                        .into(),
                ));
            }
        } else if crate::linalg::spd_factorize(&spatial).is_err() {
            return Err(Error::UnsupportedKind(
                "nonlocal operators need a strictly positive-definite spatial \
                 Gaussian block in every term"
                    .into(),
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// spec-shaped front doors
// ---------------------------------------------------------------------

/// `(-K)^s u (X, t)`; builds a one-shot [`Subordinator`].
pub fn frac_k(
    pair: &HormanderPair,
    u: &TestFunction,
    x: &DVector<f64>,
    t: f64,
    s: FracOrder,
    quad: &QuadratureSpec,
    engine: Engine,
) -> Result<f64> {
    Subordinator::new(pair, quad)?.frac_k(u, x, t, s, engine)
}

/// `Γ^K_(s)(u)(X, t)`; builds a one-shot [`Subordinator`].
pub fn carre_evolutive(
    pair: &HormanderPair,
    u: &TestFunction,
    x: &DVector<f64>,
    t: f64,
    s: FracOrder,
    quad: &QuadratureSpec,
    engine: Engine,
) -> Result<f64> {
    Subordinator::new(pair, quad)?.carre_evolutive(u, x, t, s, engine)
}

/// Chain-rule remainder `R^K_(s)(u; φ)(X, t)`; builds a one-shot
/// [`Subordinator`].
pub fn remainder(
    pair: &HormanderPair,
    u: &TestFunction,
    phi: &PhiFunction,
    x: &DVector<f64>,
    t: f64,
    s: FracOrder,
    quad: &QuadratureSpec,
    engine: Engine,
) -> Result<f64> {
    Subordinator::new(pair, quad)?.remainder(u, phi, x, t, s, engine)
}

/// Evolutive Besov seminorm
/// `(∫_0^∞ τ^{-αp/2-1} ∫∫ P^K_τ(|u - u(X,t)|^p) dX dt dτ)^{1/p}`
/// over a centered box; the box is doubled once and the result must move by
/// less than 1%.
pub fn besov_seminorm(
    pair: &HormanderPair,
    u: &TestFunction,
    alpha: f64,
    p: f64,
    quad: &QuadratureSpec,
    engine: Engine,
) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::InvalidInput(format!("besov needs p >= 1, got {p}")));
    }
    let theta = alpha * p / 2.0;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "besov exponent alpha*p/2 = {theta} must lie in (0, 1) for a finite seminorm \
             on this class"
        )));
    }
    let sub = Subordinator::new(pair, quad)?;
    let base = besov_on_box(&sub, u, theta, p, quad.box_half_width, engine)?.powf(1.0 / p);
    let doubled =
        besov_on_box(&sub, u, theta, p, 2.0 * quad.box_half_width, engine)?.powf(1.0 / p);
    if doubled == 0.0 && base == 0.0 {
        return Ok(0.0);
    }
    let drift = (doubled - base).abs() / base.abs().max(1e-300);
    if drift > 0.01 {
        return Err(Error::NonConvergence(format!(
            "box doubling moved the Besov seminorm by {:.2}% (> 1%)",
            100.0 * drift
        )));
    }
    Ok(doubled)
}

fn besov_on_box(
    sub: &Subordinator,
    u: &TestFunction,
    theta: f64,
    p: f64,
    half_width: f64,
    engine: Engine,
) -> Result<f64> {
    require_schwartz_plus_constant(u, sub.pair.dim())?;
    let n = sub.pair.dim();
    let rule = gauss_legendre_on(sub.quad.box_order, -half_width, half_width);
    let (pts, wts) = tensor_grid(&rule, n + 1);
    let cells: Vec<Result<f64>> = pts
        .par_iter()
        .zip(wts.par_iter())
        .map(|(pt, &w)| {
            let x = DVector::from_column_slice(&pt[..n]);
            let t = pt[n];
            let u0 = u.eval(pt);
            let inner = sub.integrate(&x, theta, Some(p / 2.0), engine, &|tau| {
                let slice = u.time_slice(t - tau)?;
                Ok(MappedField::new(
                    slice,
                    PointMap::AbsPowerDeviation { base: u0, p },
                ))
            })?;
            Ok(w * inner)
        })
        .collect();
    let mut total = 0.0;
    for c in cells {
        total += c?;
    }
    Ok(total)
}

/// Aronszajn–Gagliardo–Slobodeckij energy on the line:
/// `E_(s)(v) = (γ(1,s)/4) ∬ (v(x)-v(y))^2 |x-y|^{-1-2s} dy dx`.
///
/// The inner integral `G(z) = ∫ (v(x) - v(x+z))^2 dx` is exact on the class
/// (shift and product stay inside), the outer one runs on the graded radial
/// mesh; `G(z) = O(z^2)` at the diagonal.
pub fn aronszajn_energy(v: &TestFunction, s: FracOrder, quad: &QuadratureSpec) -> Result<f64> {
    if v.dim() != 1 {
        return Err(Error::UnsupportedDimension {
            n: v.dim(),
            reason: "the double-integral energy is implemented on R^1".into(),
        });
    }
    let mesh = radial_mesh(s, quad)?;
    let mut total = 0.0;
    for (&z, &w) in mesh.nodes.iter().zip(&mesh.weights) {
        let shifted = v.shift(&DVector::from_vec(vec![z]));
        let diff = v.add(&shifted.scale(-1.0));
        let g = diff.mul(&diff)?.total_integral()?;
        total += w * g;
    }
    // ∫_R |z|^{-1-2s} G(z) dz = 2 ∫_0^∞ (G even), so E = (γ/4) * 2 * total
    Ok(0.5 * gamma_ns(1, s) * total)
}

/// The profile integral from the time-independent reduction:
/// `∫_0^∞ τ^{-1-s-N/2} exp(-r^2/(4τ)) dτ`, which equals
/// `2^{N+2s} Γ((N+2s)/2) / r^{N+2s}`.
pub fn subordination_profile_integral(
    n: usize,
    s: FracOrder,
    r: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidInput("profile radius must be positive".into()));
    }
    let theta = s.value() + n as f64 / 2.0;
    let mesh = SingularMesh::new(
        theta,
        None,
        quad.tau_panels,
        quad.tau_panel_order,
        quad.tail_order,
    )?;
    Ok(mesh.integrate(|t| (-r * r / (4.0 * t)).exp()))
}

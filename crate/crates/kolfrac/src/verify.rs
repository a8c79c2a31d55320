//! Executable checks of the nonlocal chain-rule identities, inequalities and
//! `s -> 1` limits, each producing a structured residual report.
//!
//! Every check evaluates its two sides through different quadrature routes
//! wherever the identity would otherwise hold term-by-term on a shared mesh
//! (which would only test the algebra, not the analysis).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fractional::{
    carre_direct, frac_laplacian_direct_fn, FracOrder, Subordinator,
};
use crate::hormander::HormanderPair;
use crate::phi::PhiFunction;
use crate::quadrature::QuadratureSpec;
use crate::semigroup::Engine;
use crate::testfn::{SpaceTimePoint, TestFunction};

pub use crate::phi::PhiKind;

/// One evaluation cell of a check.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualRow {
    pub label: String,
    pub s: f64,
    pub point: SpaceTimePoint,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Structured result of one check at one configuration.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub digest: String,
    pub rows: Vec<ResidualRow>,
    pub pass: bool,
}

impl CheckReport {
    fn new(name: &str, digest: String, rows: Vec<ResidualRow>) -> Self {
        let pass = rows.iter().all(|r| r.pass);
        CheckReport {
            name: name.to_string(),
            digest,
            rows,
            pass,
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

/// FNV-1a over a canonical description; stable across runs of the same
/// build, used to key reports.
pub fn config_digest(parts: &[String]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0x1f;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

fn digest_of(pieces: &[&str]) -> String {
    config_digest(&pieces.iter().map(|s| s.to_string()).collect::<Vec<_>>())
}

fn describe_pair(pair: &HormanderPair) -> String {
    format!("pair(n={},q={:?},b={:?})", pair.dim(), pair.q(), pair.b())
}

fn describe_fn(u: &TestFunction) -> String {
    format!("fn(dim={},terms={})", u.dim(), u.terms().len())
}

fn row(
    label: impl Into<String>,
    s: f64,
    point: &SpaceTimePoint,
    lhs: f64,
    rhs: f64,
    residual: f64,
    tolerance: f64,
) -> ResidualRow {
    ResidualRow {
        label: label.into(),
        s,
        point: point.clone(),
        lhs,
        rhs,
        residual,
        tolerance,
        pass: residual <= tolerance,
    }
}

/// Chain rule for squares: `(-K)^s(u^2) = 2u(-K)^s u - 2 Γ^K_(s)(u)`.
///
/// The left side runs on `lhs_engine` and the right side on `rhs_engine`
/// (different routes by default), so the residual reflects genuine
/// quadrature error rather than shared-mesh algebra.
#[allow(clippy::too_many_arguments)]
pub fn check_square_rule(
    pair: &HormanderPair,
    u: &TestFunction,
    points: &[SpaceTimePoint],
    s: FracOrder,
    quad: &QuadratureSpec,
    lhs_engine: Engine,
    rhs_engine: Engine,
) -> Result<CheckReport> {
    let sub = Subordinator::new(pair, quad)?;
    let u_squared = u.mul(u)?;
    let mut rows = Vec::with_capacity(points.len());
    for pt in points {
        let x = pt.position();
        let u0 = u.eval(&pt.coords());
        let lhs = sub.frac_k(&u_squared, &x, pt.t, s, lhs_engine)?;
        let frac_u = sub.frac_k(u, &x, pt.t, s, rhs_engine)?;
        let carre = sub.carre_evolutive(u, &x, pt.t, s, rhs_engine)?;
        let rhs = 2.0 * u0 * frac_u - 2.0 * carre;
        let residual = (lhs - rhs).abs();
        let tolerance = (1e-4 * lhs.abs()).max(1e-6);
        rows.push(row("square_rule", s.value(), pt, lhs, rhs, residual, tolerance));
    }
    let digest = digest_of(&[
        "square_rule",
        &describe_pair(pair),
        &describe_fn(u),
        &format!("s={}", s.value()),
        &format!("engines={lhs_engine}/{rhs_engine}"),
    ]);
    Ok(CheckReport::new("square_rule", digest, rows))
}

/// Convexity inequality: `(-K)^s φ(u) <= φ'(u)(-K)^s u` for convex `φ`,
/// with slack `1e-6 (1 + |rhs|)`.
pub fn check_convexity_inequality(
    pair: &HormanderPair,
    u: &TestFunction,
    phi: &PhiFunction,
    points: &[SpaceTimePoint],
    s: FracOrder,
    quad: &QuadratureSpec,
    engine: Engine,
) -> Result<CheckReport> {
    if !phi.convex() {
        return Err(Error::InvalidInput(
            "convexity check needs a convex nonlinearity".into(),
        ));
    }
    let sub = Subordinator::new(pair, quad)?;
    let mut rows = Vec::with_capacity(points.len());
    for pt in points {
        let x = pt.position();
        let u0 = u.eval(&pt.coords());
        let lhs = sub.frac_k_composed(u, phi, &x, pt.t, s, engine)?;
        let rhs = phi.d1(u0) * sub.frac_k(u, &x, pt.t, s, engine)?;
        let slack = 1e-6 * (1.0 + rhs.abs());
        // violation magnitude; zero when the inequality holds
        let residual = (lhs - rhs).max(0.0);
        rows.push(row(
            format!("convexity[{:?}]", phi.kind),
            s.value(),
            pt,
            lhs,
            rhs,
            residual,
            slack,
        ));
    }
    let digest = digest_of(&[
        "convexity",
        &describe_pair(pair),
        &describe_fn(u),
        &format!("{:?}", phi),
        &format!("s={}", s.value()),
    ]);
    Ok(CheckReport::new("convexity", digest, rows))
}

/// Time-independent reduction: for the heat pair and `u(X,t) = v(X)`, the
/// evolutive carré du champ matches the integral form,
/// `|Γ^K_(s)(u) - Γ_(s)(v)| <= 1e-4 (1 + |Γ_(s)(v)|)`.
pub fn check_tind_reduction(
    v: &TestFunction,
    points: &[SpaceTimePoint],
    s: FracOrder,
    quad: &QuadratureSpec,
) -> Result<CheckReport> {
    let n = v.dim();
    let pair = HormanderPair::heat(n);
    let sub = Subordinator::new(&pair, quad)?;
    let u = v.promote_time_independent();
    let mut rows = Vec::with_capacity(points.len());
    for pt in points {
        let x = pt.position();
        let evolutive = sub.carre_evolutive(&u, &x, pt.t, s, Engine::Exact)?;
        let direct = carre_direct(v, &pt.x, s, quad)?;
        let residual = (evolutive - direct).abs();
        let tolerance = 1e-4 * (1.0 + direct.abs());
        rows.push(row(
            "tind_reduction",
            s.value(),
            pt,
            evolutive,
            direct,
            residual,
            tolerance,
        ));
    }
    let digest = digest_of(&[
        "tind_reduction",
        &describe_fn(v),
        &format!("n={n}"),
        &format!("s={}", s.value()),
    ]);
    Ok(CheckReport::new("tind_reduction", digest, rows))
}

/// Linear Richardson extrapolation of `g(s)` to `s = 1` in the variable
/// `h = 1 - s`, from the two grid values closest to 1.
pub fn richardson_extrapolate(s_grid: &[f64], values: &[f64]) -> f64 {
    let m = s_grid.len();
    assert!(m >= 2 && values.len() == m);
    let (h1, h2) = (1.0 - s_grid[m - 2], 1.0 - s_grid[m - 1]);
    let (g1, g2) = (values[m - 2], values[m - 1]);
    // g(h) = L + C h: eliminate C
    (h1 * g2 - h2 * g1) / (h1 - h2)
}

/// The `s -> 1^-` limit checks:
/// (a) extrapolated `Γ_(s)(v) -> |∇v|^2`;
/// (b) extrapolated `-(-Δ)^s φ(v) -> φ'(v) Δv + φ''(v) |∇v|^2`;
/// (c) `|R^K_(s)(u; φ)|` strictly decreasing along the grid, `u = v` lifted.
///
/// Limits are taken by extrapolation in `1 - s`; the operators themselves
/// are never evaluated at `s = 1`.
pub fn check_s_limits(
    pair: &HormanderPair,
    v: &TestFunction,
    phi: &PhiFunction,
    points: &[SpaceTimePoint],
    s_grid: &[f64],
    quad: &QuadratureSpec,
) -> Result<CheckReport> {
    if s_grid.len() < 2 || s_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "s grid must be increasing with at least two entries".into(),
        ));
    }
    let orders: Vec<FracOrder> = s_grid
        .iter()
        .map(|&sv| FracOrder::new(sv))
        .collect::<Result<_>>()?;
    let sub = Subordinator::new(pair, quad)?;
    let u = v.promote_time_independent();
    let mut rows = Vec::new();

    for pt in points {
        let grad = v.grad(&pt.x)?;
        let grad_sq = grad.norm_squared();
        let lap = v.laplacian(&pt.x)?;
        let v0 = v.eval(&pt.x);

        // (a) carré du champ limit
        let gammas: Vec<f64> = orders
            .iter()
            .map(|&sv| carre_direct(v, &pt.x, sv, quad))
            .collect::<Result<_>>()?;
        let extrap = richardson_extrapolate(s_grid, &gammas);
        let tol = 0.05 * grad_sq.abs() + 1e-3;
        rows.push(row(
            "limit_carre",
            *s_grid.last().unwrap(),
            pt,
            extrap,
            grad_sq,
            (extrap - grad_sq).abs(),
            tol,
        ));

        // (b) local chain-rule limit of the direct operator
        let composed: Vec<f64> = orders
            .iter()
            .map(|&sv| {
                frac_laplacian_direct_fn(&|y| phi.eval(v.eval(y)), &pt.x, sv, quad)
                    .map(|val| -val)
            })
            .collect::<Result<_>>()?;
        let extrap_local = richardson_extrapolate(s_grid, &composed);
        let target = phi.d1(v0) * lap + phi.d2(v0) * grad_sq;
        let tol = 0.05 * target.abs() + 1e-3;
        rows.push(row(
            "limit_local_chain",
            *s_grid.last().unwrap(),
            pt,
            extrap_local,
            target,
            (extrap_local - target).abs(),
            tol,
        ));

        // (c) remainder decay along the grid
        let x = pt.position();
        let remainders: Vec<f64> = orders
            .iter()
            .map(|&sv| {
                sub.remainder(&u, phi, &x, pt.t, sv, Engine::Exact)
                    .or_else(|_| sub.remainder(&u, phi, &x, pt.t, sv, Engine::Hermite))
                    .map(f64::abs)
            })
            .collect::<Result<_>>()?;
        for w in remainders.windows(2).zip(s_grid.windows(2)) {
            let (vals, ss) = w;
            rows.push(row(
                "remainder_decay",
                ss[1],
                pt,
                vals[0],
                vals[1],
                (vals[1] - vals[0]).max(0.0),
                0.0,
            ));
        }
    }

    let digest = digest_of(&[
        "s_limits",
        &describe_pair(pair),
        &describe_fn(v),
        &format!("{:?}", phi),
        &format!("{s_grid:?}"),
    ]);
    Ok(CheckReport::new("s_limits", digest, rows))
}

/// Cross-engine consistency of the chain-rule remainder: the deterministic
/// route must agree with Monte Carlo within four standard errors, and the
/// remainder must vanish for quadratic nonlinearities.
pub fn check_general_chain_rule(
    pair: &HormanderPair,
    u: &TestFunction,
    phi: &PhiFunction,
    points: &[SpaceTimePoint],
    s: FracOrder,
    quad: &QuadratureSpec,
) -> Result<CheckReport> {
    let sub = Subordinator::new(pair, quad)?;
    let is_quadratic = matches!(phi.kind, PhiKind::Quadratic { .. });
    let mut rows = Vec::new();
    for (i, pt) in points.iter().enumerate() {
        let x = pt.position();
        let deterministic = sub
            .remainder(u, phi, &x, pt.t, s, Engine::Hermite)
            .or_else(|_| sub.remainder(u, phi, &x, pt.t, s, Engine::Exact))?;
        let (mc, se) = sub.remainder_mc(u, phi, &x, pt.t, s, i as u64)?;
        let tol = 4.0 * se + 1e-9;
        rows.push(row(
            "remainder_engines",
            s.value(),
            pt,
            deterministic,
            mc,
            (deterministic - mc).abs(),
            tol,
        ));
        if is_quadratic {
            rows.push(row(
                "remainder_quadratic_zero",
                s.value(),
                pt,
                deterministic,
                0.0,
                deterministic.abs(),
                1e-6,
            ));
        }
    }
    let digest = digest_of(&[
        "general_chain_rule",
        &describe_pair(pair),
        &describe_fn(u),
        &format!("{:?}", phi),
        &format!("s={}", s.value()),
    ]);
    Ok(CheckReport::new("general_chain_rule", digest, rows))
}

/// Default space-time evaluation points: origin, one step along each axis,
/// one generic point. Deterministic by construction.
pub fn default_points(n: usize) -> Vec<SpaceTimePoint> {
    let mut pts = vec![SpaceTimePoint::new(vec![0.0; n], 0.0)];
    for i in 0..n {
        let mut x = vec![0.0; n];
        x[i] = 0.6;
        pts.push(SpaceTimePoint::new(x, 0.0));
    }
    pts.push(SpaceTimePoint::new(
        (0..n).map(|i| 0.35 - 0.2 * i as f64).collect(),
        0.4,
    ));
    while pts.len() < 5 {
        let k = pts.len() as f64;
        pts.push(SpaceTimePoint::new(vec![0.15 * k; n], -0.1 * k));
    }
    pts
}

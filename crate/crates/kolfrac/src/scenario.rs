//! Batch front end: scenario configs, the check runner, convergence sweeps
//! and deterministic report serialization.
//!
//! Configs are TOML trees (see `configs/` in the repository for commented
//! examples). A scenario names an operator (preset or explicit matrices), a
//! list of space-time test functions, nonlinearities, fractional orders,
//! evaluation points and checks. Every `(check, s, point)` cell runs
//! independently; failures and errors are captured per row and never abort
//! the batch. Re-running an identical config byte-reproduces the report.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional::{FracOrder, Subordinator};
use crate::hormander::HormanderPair;
use crate::phi::PhiFunction;
use crate::quadrature::QuadratureSpec;
use crate::semigroup::Engine;
use crate::testfn::{poly::MultiPoly, SpaceTimePoint, TestFunction};
use crate::verify::{
    check_convexity_inequality, check_general_chain_rule, check_s_limits, check_square_rule,
    check_tind_reduction, config_digest, CheckReport,
};

/// Check names accepted in a scenario.
pub const CHECK_NAMES: [&str; 5] = [
    "square_rule",
    "convexity",
    "tind_reduction",
    "s_limits",
    "general_chain_rule",
];

/// Operator presets exposed to configs and the CLI.
pub fn presets() -> Vec<(&'static str, &'static str)> {
    vec![
        ("heat", "Q = I, B = 0 (heat operator; n configurable, default 2)"),
        (
            "kolmogorov",
            "n = 2, Q = [[1,0],[0,0]], B = [[0,0],[1,0]] (degenerate Kolmogorov operator)",
        ),
        (
            "drifted",
            "n = 2, Q = I, B = [[-1,0],[1,0]] (nonzero-trace drift, tr B = -1)",
        ),
    ]
}

pub fn preset_pair(name: &str, n: Option<usize>) -> Result<HormanderPair> {
    match name {
        "heat" => Ok(HormanderPair::heat(n.unwrap_or(2))),
        "kolmogorov" => Ok(HormanderPair::kolmogorov()),
        "drifted" => HormanderPair::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, 0.0]),
        ),
        other => Err(Error::Config {
            path: "operator.preset".into(),
            message: format!("unknown preset '{other}' (try: heat, kolmogorov, drifted)"),
        }),
    }
}

// ---------------------------------------------------------------------
// raw config schema
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialSpec {
    pub exponents: Vec<u8>,
    pub coeff: f64,
}

/// One test function on `R^{N+1}` (space-time; the last coordinate is time).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub kind: String,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Isotropic inverse scale `alpha` (value `exp(-alpha |x - center|^2)`).
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Full inverse-scale matrix, row-major; overrides `alpha`.
    #[serde(default)]
    pub inv_scale: Option<Vec<Vec<f64>>>,
    /// Constant value for `kind = "constant"`.
    #[serde(default)]
    pub value: Option<f64>,
    /// Polynomial factor for `kind = "polynomial_gaussian"`.
    #[serde(default)]
    pub monomials: Option<Vec<MonomialSpec>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSpec {
    #[serde(default = "hermite")]
    pub lhs: Engine,
    #[serde(default = "exact")]
    pub rhs: Engine,
}

fn hermite() -> Engine {
    Engine::Hermite
}

fn exact() -> Engine {
    Engine::Exact
}

impl Default for EngineSpec {
    fn default() -> Self {
        EngineSpec {
            lhs: Engine::Hermite,
            rhs: Engine::Exact,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: String,
    #[serde(default = "csv_format")]
    pub format: String,
}

fn csv_format() -> String {
    "csv".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub operator: OperatorSpec,
    pub functions: Vec<FunctionSpec>,
    #[serde(default)]
    pub phis: Vec<PhiFunction>,
    pub s_values: Vec<f64>,
    pub points: Vec<SpaceTimePoint>,
    pub checks: Vec<String>,
    #[serde(default)]
    pub s_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub engines: EngineSpec,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

impl ScenarioConfig {
    pub fn pair(&self) -> Result<HormanderPair> {
        if let Some(name) = &self.operator.preset {
            return preset_pair(name, self.operator.n);
        }
        let n = self.operator.n.ok_or_else(|| Error::Config {
            path: "operator.n".into(),
            message: "explicit operators need n, q and b".into(),
        })?;
        let q = matrix_from(self.operator.q.as_ref(), n, "operator.q")?;
        let b = matrix_from(self.operator.b.as_ref(), n, "operator.b")?;
        HormanderPair::new(q, b)
    }

    pub fn digest(&self) -> String {
        config_digest(&[toml::to_string(self).unwrap_or_default()])
    }

    /// Validate everything that does not require running checks; returns all
    /// problems found, not only the first.
    pub fn validate(&self) -> Vec<Error> {
        let mut errs = Vec::new();
        let pair = match self.pair() {
            Ok(p) => Some(p),
            Err(e) => {
                errs.push(e);
                None
            }
        };
        let n = pair.as_ref().map(|p| p.dim());

        if self.functions.is_empty() {
            errs.push(Error::Config {
                path: "functions".into(),
                message: "at least one test function is required".into(),
            });
        }
        if let Some(n) = n {
            for (i, f) in self.functions.iter().enumerate() {
                if let Err(e) = f.build(n) {
                    errs.push(Error::Config {
                        path: format!("functions[{i}]"),
                        message: e.to_string(),
                    });
                }
            }
            for (i, p) in self.points.iter().enumerate() {
                if p.x.len() != n {
                    errs.push(Error::Config {
                        path: format!("points[{i}].x"),
                        message: format!("expected {n} coordinates, got {}", p.x.len()),
                    });
                }
            }
        }
        if self.points.is_empty() {
            errs.push(Error::Config {
                path: "points".into(),
                message: "at least one evaluation point is required".into(),
            });
        }
        if self.s_values.is_empty() {
            errs.push(Error::Config {
                path: "s_values".into(),
                message: "at least one fractional order is required".into(),
            });
        }
        for (i, &s) in self.s_values.iter().enumerate() {
            if let Err(e) = FracOrder::new(s) {
                errs.push(Error::Config {
                    path: format!("s_values[{i}]"),
                    message: e.to_string(),
                });
            }
        }
        if self.checks.is_empty() {
            errs.push(Error::Config {
                path: "checks".into(),
                message: "at least one check is required".into(),
            });
        }
        for (i, c) in self.checks.iter().enumerate() {
            if !CHECK_NAMES.contains(&c.as_str()) {
                errs.push(Error::Config {
                    path: format!("checks[{i}]"),
                    message: format!("unknown check '{c}' (known: {})", CHECK_NAMES.join(", ")),
                });
            }
        }
        if self.checks.iter().any(|c| c == "convexity" || c == "general_chain_rule")
            && self.phis.is_empty()
        {
            errs.push(Error::Config {
                path: "phis".into(),
                message: "the requested checks need at least one nonlinearity".into(),
            });
        }
        if self.checks.iter().any(|c| c == "convexity")
            && !self.phis.is_empty()
            && !self.phis.iter().any(|p| p.convex())
        {
            errs.push(Error::Config {
                path: "phis".into(),
                message: "the convexity check needs at least one convex nonlinearity".into(),
            });
        }
        if let Some(grid) = &self.s_grid {
            if grid.len() < 2 || grid.windows(2).any(|w| w[0] >= w[1]) {
                errs.push(Error::Config {
                    path: "s_grid".into(),
                    message: "s_grid must be strictly increasing with >= 2 entries".into(),
                });
            }
        }
        if let Err(e) = self.quadrature.validate() {
            errs.push(Error::Config {
                path: "quadrature".into(),
                message: e.to_string(),
            });
        }
        if let Some(out) = &self.output {
            if out.format != "csv" && out.format != "json" {
                errs.push(Error::Config {
                    path: "output.format".into(),
                    message: format!("unknown format '{}' (csv or json)", out.format),
                });
            }
        }
        errs
    }
}

fn matrix_from(rows: Option<&Vec<Vec<f64>>>, n: usize, path: &str) -> Result<DMatrix<f64>> {
    let rows = rows.ok_or_else(|| Error::Config {
        path: path.into(),
        message: "matrix is required for explicit operators".into(),
    })?;
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config {
            path: path.into(),
            message: format!("expected a {n}x{n} row-major matrix"),
        });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl FunctionSpec {
    /// Build the space-time function on `R^{n+1}`.
    pub fn build(&self, n: usize) -> Result<TestFunction> {
        let dim = n + 1;
        match self.kind.as_str() {
            "constant" => Ok(TestFunction::constant(dim, self.value.unwrap_or(1.0))),
            "gaussian" | "polynomial_gaussian" => {
                let center = self.center.clone().unwrap_or_else(|| vec![0.0; dim]);
                if center.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: center.len(),
                    });
                }
                let shape = if let Some(m) = &self.inv_scale {
                    if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                        return Err(Error::InvalidInput(format!(
                            "inv_scale must be {dim}x{dim} (space-time)"
                        )));
                    }
                    DMatrix::from_fn(dim, dim, |i, j| m[i][j])
                } else {
                    DMatrix::identity(dim, dim) * self.alpha.unwrap_or(1.0)
                };
                let poly = if self.kind == "polynomial_gaussian" {
                    let monomials = self.monomials.as_ref().ok_or_else(|| {
                        Error::InvalidInput("polynomial_gaussian needs monomials".into())
                    })?;
                    let mut p = MultiPoly::zero(dim);
                    for m in monomials {
                        p = p.add(&MultiPoly::monomial(dim, &m.exponents, m.coeff)?);
                    }
                    p.scale(self.amplitude)
                } else {
                    MultiPoly::constant(dim, self.amplitude)
                };
                TestFunction::poly_times_gaussian(poly, &center, shape)
            }
            other => Err(Error::UnsupportedKind(format!(
                "unknown function kind '{other}'"
            ))),
        }
    }
}

/// Parse a TOML scenario; returns either the validated config or every
/// problem found (syntax errors carry line/column from the parser).
pub fn parse_config(text: &str) -> std::result::Result<ScenarioConfig, Vec<Error>> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
        vec![Error::Config {
            path: "<syntax>".into(),
            message: e.to_string(),
        }]
    })?;
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(errs)
    }
}

// ---------------------------------------------------------------------
// runner
// ---------------------------------------------------------------------

/// One output row of a scenario run.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub check: String,
    pub label: String,
    pub s: f64,
    pub point: SpaceTimePoint,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: String,
    pub engine: String,
    /// Wall time of the cell; excluded from reports unless timings are
    /// requested, to keep outputs byte-reproducible.
    #[serde(skip)]
    pub wall_time_ms: f64,
}

/// Full scenario result.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub config_digest: String,
    pub all_pass: bool,
    pub rows: Vec<ReportRow>,
}

struct Cell {
    check: String,
    function_index: usize,
    phi_index: Option<usize>,
    s: f64,
    point_index: usize,
}

/// Run every `(check, s, point)` cell of a validated config. Cells run in a
/// parallel pool; output ordering is restored afterwards so parallelism never
/// changes bytes. Per-cell failures become `error` rows.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let errs = cfg.validate();
    if let Some(first) = errs.into_iter().next() {
        return Err(first);
    }
    let pair = cfg.pair()?;
    let functions: Vec<TestFunction> = cfg
        .functions
        .iter()
        .map(|f| f.build(pair.dim()))
        .collect::<Result<_>>()?;
    let s_grid = cfg
        .s_grid
        .clone()
        .unwrap_or_else(|| vec![0.9, 0.95, 0.99]);

    // enumerate cells in deterministic order: check, function, phi, s, point
    let mut cells = Vec::new();
    for check in &cfg.checks {
        let phi_indices: Vec<Option<usize>> = match check.as_str() {
            // the convexity inequality only applies to convex nonlinearities
            "convexity" => (0..cfg.phis.len())
                .filter(|&i| cfg.phis[i].convex())
                .map(Some)
                .collect(),
            "general_chain_rule" | "s_limits" => (0..cfg.phis.len()).map(Some).collect(),
            _ => vec![None],
        };
        let s_list: Vec<f64> = if check == "s_limits" {
            vec![*s_grid.last().unwrap()]
        } else {
            let mut s = cfg.s_values.clone();
            s.sort_by(f64::total_cmp);
            s
        };
        for fi in 0..functions.len() {
            for &pi in &phi_indices {
                for &s in &s_list {
                    for point_index in 0..cfg.points.len() {
                        cells.push(Cell {
                            check: check.clone(),
                            function_index: fi,
                            phi_index: pi,
                            s,
                            point_index,
                        });
                    }
                }
            }
        }
    }

    let rows: Vec<Vec<ReportRow>> = cells
        .par_iter()
        .map(|cell| run_cell(cfg, &pair, &functions, &s_grid, cell))
        .collect();

    let rows: Vec<ReportRow> = rows.into_iter().flatten().collect();
    let all_pass = rows.iter().all(|r| r.verdict == "pass");
    Ok(ScenarioReport {
        config_digest: cfg.digest(),
        all_pass,
        rows,
    })
}

fn run_cell(
    cfg: &ScenarioConfig,
    pair: &HormanderPair,
    functions: &[TestFunction],
    s_grid: &[f64],
    cell: &Cell,
) -> Vec<ReportRow> {
    let start = Instant::now();
    let u = &functions[cell.function_index];
    let point = cfg.points[cell.point_index].clone();
    let pts = std::slice::from_ref(&point);
    let phi = cell.phi_index.map(|i| &cfg.phis[i]);
    let engine_desc = match cell.check.as_str() {
        "square_rule" => format!("{}/{}", cfg.engines.lhs, cfg.engines.rhs),
        "general_chain_rule" => "hermite/monte_carlo".to_string(),
        "convexity" => cfg.engines.lhs.to_string(),
        _ => "exact".to_string(),
    };

    let outcome: Result<CheckReport> = (|| {
        let s = FracOrder::new(cell.s)?;
        match cell.check.as_str() {
            "square_rule" => check_square_rule(
                pair,
                u,
                pts,
                s,
                &cfg.quadrature,
                cfg.engines.lhs,
                cfg.engines.rhs,
            ),
            "convexity" => check_convexity_inequality(
                pair,
                u,
                phi.expect("validated"),
                pts,
                s,
                &cfg.quadrature,
                cfg.engines.lhs,
            ),
            "tind_reduction" => {
                // heat pair forced internally on the spatial restriction
                let v = u.time_slice(0.0)?;
                check_tind_reduction(&v, pts, s, &cfg.quadrature)
            }
            "s_limits" => {
                let v = u.time_slice(0.0)?;
                check_s_limits(pair, &v, phi.expect("validated"), pts, s_grid, &cfg.quadrature)
            }
            "general_chain_rule" => {
                check_general_chain_rule(pair, u, phi.expect("validated"), pts, s, &cfg.quadrature)
            }
            other => Err(Error::Config {
                path: "checks".into(),
                message: format!("unknown check '{other}'"),
            }),
        }
    })();

    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(report) => report
            .rows
            .into_iter()
            .map(|r| ReportRow {
                check: cell.check.clone(),
                label: r.label,
                s: r.s,
                point: r.point,
                lhs: r.lhs,
                rhs: r.rhs,
                residual: r.residual,
                tolerance: r.tolerance,
                verdict: if r.pass { "pass".into() } else { "fail".into() },
                engine: engine_desc.clone(),
                wall_time_ms: elapsed,
            })
            .collect(),
        Err(e) => vec![ReportRow {
            check: cell.check.clone(),
            label: format!("error: {e}"),
            s: cell.s,
            point,
            lhs: f64::NAN,
            rhs: f64::NAN,
            residual: f64::NAN,
            tolerance: f64::NAN,
            verdict: "error".into(),
            engine: engine_desc,
            wall_time_ms: elapsed,
        }],
    }
}

// ---------------------------------------------------------------------
// convergence sweeps
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    HermiteOrder,
    TauPanels,
    S,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hermite_order" => Ok(SweepAxis::HermiteOrder),
            "tau_panels" => Ok(SweepAxis::TauPanels),
            "s" => Ok(SweepAxis::S),
            other => Err(Error::InvalidInput(format!(
                "unknown sweep axis '{other}' (hermite_order, tau_panels, s)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub observable: f64,
    pub residual: f64,
    pub observed_order: Option<f64>,
}

/// Convergence sweep along one quadrature axis (self-comparison of
/// successive refinements) or along `s` (remainder magnitude). Needs at
/// least three axis values, strictly increasing.
pub fn convergence_sweep(
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    if values.len() < 3 {
        return Err(Error::InvalidInput(
            "convergence sweeps need at least three axis values".into(),
        ));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "sweep axis values must be strictly increasing".into(),
        ));
    }
    let pair = cfg.pair()?;
    let u = cfg
        .functions
        .first()
        .ok_or_else(|| Error::Config {
            path: "functions".into(),
            message: "sweep needs a function".into(),
        })?
        .build(pair.dim())?;
    let point = cfg.points.first().ok_or_else(|| Error::Config {
        path: "points".into(),
        message: "sweep needs a point".into(),
    })?;
    let x = point.position();

    let observables: Vec<f64> = match axis {
        SweepAxis::S => {
            let phi = cfg.phis.first().cloned().unwrap_or(PhiFunction::power(3)?);
            values
                .iter()
                .map(|&sv| {
                    let sub = Subordinator::new(&pair, &cfg.quadrature)?;
                    let s = FracOrder::new(sv)?;
                    sub.remainder(&u, &phi, &x, point.t, s, Engine::Exact)
                        .or_else(|_| sub.remainder(&u, &phi, &x, point.t, s, Engine::Hermite))
                        .map(f64::abs)
                })
                .collect::<Result<_>>()?
        }
        SweepAxis::HermiteOrder | SweepAxis::TauPanels => {
            let s = FracOrder::new(*cfg.s_values.first().unwrap_or(&0.5))?;
            values
                .iter()
                .map(|&v| {
                    let mut quad = cfg.quadrature.clone();
                    let engine = match axis {
                        SweepAxis::HermiteOrder => {
                            quad.hermite_order = v as usize;
                            Engine::Hermite
                        }
                        _ => {
                            quad.tau_panels = v as usize;
                            Engine::Exact
                        }
                    };
                    let sub = Subordinator::new(&pair, &quad)?;
                    sub.frac_k(&u, &x, point.t, s, engine)
                })
                .collect::<Result<_>>()?
        }
    };

    let m = values.len();
    let mut rows = Vec::with_capacity(m);
    for k in 0..m {
        let residual = match axis {
            SweepAxis::S => observables[k].abs(),
            _ => {
                if k + 1 < m {
                    (observables[k] - observables[k + 1]).abs()
                } else {
                    0.0
                }
            }
        };
        rows.push(SweepRow {
            axis_value: values[k],
            observable: observables[k],
            residual,
            observed_order: None,
        });
    }
    // observed order from log-ratios of successive residuals
    for k in 1..m {
        let (r0, r1) = (rows[k - 1].residual, rows[k].residual);
        if r0 > 0.0 && r1 > 0.0 {
            let scale = match axis {
                SweepAxis::S => ((1.0 - values[k - 1]) / (1.0 - values[k])).ln(),
                _ => (values[k] / values[k - 1]).ln(),
            };
            if scale != 0.0 {
                rows[k].observed_order = Some((r0 / r1).ln() / scale);
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------

/// Stable CSV header; `wall_time_ms` is appended only when timings are
/// requested.
pub fn csv_header(with_timings: bool) -> String {
    let base = "check,label,s,point_x,point_t,lhs,rhs,residual,tolerance,verdict,engine";
    if with_timings {
        format!("{base},wall_time_ms")
    } else {
        base.to_string()
    }
}

/// Render rows as CSV; deterministic float formatting (shortest
/// round-trip).
pub fn to_csv(report: &ScenarioReport, with_timings: bool) -> String {
    let mut out = String::new();
    out.push_str(&csv_header(with_timings));
    out.push('\n');
    for r in &report.rows {
        let xs = r
            .point
            .x
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(";");
        let mut line = format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.check,
            r.label.replace(',', ";"),
            r.s,
            xs,
            r.point.t,
            r.lhs,
            r.rhs,
            r.residual,
            r.tolerance,
            r.verdict,
            r.engine
        );
        if with_timings {
            line.push_str(&format!(",{:.3}", r.wall_time_ms));
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Render the report as pretty JSON.
pub fn to_json(report: &ScenarioReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))
}

/// Serialize in the requested format and write to disk.
pub fn write_report(report: &ScenarioReport, out: &OutputSpec, with_timings: bool) -> Result<()> {
    let body = match out.format.as_str() {
        "csv" => to_csv(report, with_timings),
        "json" => to_json(report)?,
        other => {
            return Err(Error::Config {
                path: "output.format".into(),
                message: format!("unknown format '{other}'"),
            })
        }
    };
    std::fs::write(&out.path, body)?;
    Ok(())
}

/// Render sweep rows as CSV.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("axis_value,observable,residual,observed_order\n");
    for r in rows {
        let order = r
            .observed_order
            .map(|o| format!("{o}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.axis_value, r.observable, r.residual, order
        ));
    }
    out
}

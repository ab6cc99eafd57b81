//! Problem-file schema and assembly into a runnable [`ProblemSpec`].
//!
//! The file is a sectioned text document ([space], [time], [generator],
//! [nonlinearity], [nonlocal], [envelope], [tube], [solver], optional
//! [kamke]); every scalar field is an expression in the language documented in
//! the README. The schema is validated before any numerics run and all
//! validation failures carry the offending section/key.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use nle_core::certificates::{KamkeFunction, TubeRadius};
use nle_core::evolution::{CoefficientFamily, TimeGrid};
use nle_core::expr::Expr;
use nle_core::nonlinearity::{EvalFailure, GrowthEnvelope, Nonlinearity, StateFn, TimeFn};
use nle_core::nonlocal::{BlockPartition, NonlocalMap, PointTerm};
use nle_core::numerics::{Matrix, NormKind};
use nle_core::solver::{PicardConfig, ProblemSpec};

/// Configuration failure with its location in the file.
#[derive(Clone, Debug)]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error at {}: {}", self.location, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(location: impl Into<String>, message: impl std::fmt::Display) -> ConfigError {
    ConfigError {
        location: location.into(),
        message: message.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Raw schema
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    space: RawSpace,
    time: RawTime,
    generator: RawGenerator,
    nonlinearity: RawNonlinearity,
    #[serde(default)]
    nonlocal: RawNonlocal,
    envelope: RawEnvelope,
    tube: RawTube,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    kamke: Option<RawKamke>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    dim: usize,
    norm: String,
    components: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    horizon: f64,
    n_steps: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    matrix: Option<Vec<Vec<String>>>,
    blocks: Option<Vec<Vec<Vec<String>>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNonlinearity {
    variant: String,
    f: Vec<String>,
    kernel: Option<String>,
    theta: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNonlocal {
    #[serde(default)]
    points: Vec<RawPoint>,
    #[serde(default)]
    quadrature: Vec<RawWeight>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    t: f64,
    coeff: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeight {
    node: usize,
    weight: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvelope {
    delta: Vec<String>,
    psi: Vec<String>,
    gamma: Vec<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTube {
    radius: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    tol: Option<f64>,
    max_iter: Option<usize>,
    damping: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKamke {
    omega: String,
    eta: Option<String>,
    max_iter: Option<usize>,
}

// ---------------------------------------------------------------------------
// Loaded problem
// ---------------------------------------------------------------------------

/// Command-line overrides applied on top of the file.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub n_steps: Option<usize>,
    pub tol: Option<f64>,
    pub damping: Option<f64>,
}

pub struct LoadedProblem {
    pub spec: ProblemSpec,
    pub grid: TimeGrid,
    pub picard: PicardConfig,
    pub kamke: Option<(KamkeFunction, usize)>,
    /// Whether every tube radius expression is time-independent (enables the
    /// constant-radius certificate).
    pub tube_constant: bool,
    pub constant_radii: Vec<f64>,
}

impl std::fmt::Debug for LoadedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadedProblem")
            .field("grid", &self.grid)
            .field("picard", &self.picard)
            .finish_non_exhaustive()
    }
}

/// Parses, validates, and assembles a problem file.
pub fn load(path: &Path, overrides: &Overrides) -> Result<LoadedProblem, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| err(path.display().to_string(), format!("cannot read file: {e}")))?;
    load_str(&text, overrides)
}

pub fn load_str(text: &str, overrides: &Overrides) -> Result<LoadedProblem, ConfigError> {
    let raw: RawFile =
        toml::from_str(text).map_err(|e| err("file", format!("invalid document: {e}")))?;

    // [space]
    let d = raw.space.dim;
    if d == 0 || d > 64 {
        return Err(err("space.dim", "dimension must lie in 1..=64"));
    }
    let norm_kind = match raw.space.norm.as_str() {
        "l1" => NormKind::L1,
        "l2" => NormKind::L2,
        "linf" => NormKind::LInf,
        other => {
            return Err(err(
                "space.norm",
                format!("unknown norm '{other}' (expected l1, l2, or linf)"),
            ))
        }
    };
    let sizes = raw.space.components.clone().unwrap_or_else(|| vec![d]);
    if sizes.iter().sum::<usize>() != d {
        return Err(err(
            "space.components",
            format!("component sizes must sum to dim = {d}"),
        ));
    }
    let partition = BlockPartition::new(sizes).map_err(|e| err("space.components", e))?;
    let n = partition.n_components();

    // [time]
    let n_steps = overrides.n_steps.unwrap_or(raw.time.n_steps);
    let grid = TimeGrid::new(raw.time.horizon, n_steps).map_err(|e| err("time", e))?;
    let horizon = grid.horizon();

    // [generator]
    let coeff = build_generator(&raw.generator, d, &partition, horizon)?;

    // [nonlinearity]
    let phi = build_nonlinearity(&raw.nonlinearity, d, horizon)?;

    // [nonlocal]
    if !raw.nonlocal.points.is_empty() && !raw.nonlocal.quadrature.is_empty() {
        return Err(err(
            "nonlocal",
            "give either multi-point terms or quadrature weights, not both",
        ));
    }
    if !raw.nonlocal.quadrature.is_empty() && overrides.n_steps.is_some() {
        return Err(err(
            "nonlocal.quadrature",
            "quadrature weights are bound to the file's grid; --n-steps cannot override it",
        ));
    }
    let map = build_nonlocal(&raw.nonlocal, d, &partition, grid)?;

    // [envelope]
    let (envelopes, psi_exprs) = build_envelopes(&raw.envelope, n, horizon, grid)?;

    // [tube]
    let (tube, tube_constant, constant_radii) = build_tube(&raw.tube, n, grid)?;

    // psi monotonicity and positivity, sampled against the tube ceiling.
    let mut s_max = 1.0_f64;
    for comp in 0..n {
        for t in grid.nodes() {
            let r = tube
                .eval(comp, t)
                .map_err(|e| err(format!("tube.radius[{comp}]"), e))?;
            s_max = s_max.max(2.0 * r);
        }
    }
    for (comp, expr) in psi_exprs.iter().enumerate() {
        validate_psi(expr, comp, s_max)?;
    }

    // [solver]
    let picard = PicardConfig {
        tol: overrides.tol.or(raw.solver.tol).unwrap_or(1e-10),
        max_iter: raw.solver.max_iter.unwrap_or(500),
        damping: overrides.damping.or(raw.solver.damping).unwrap_or(1.0),
    };
    picard.validate().map_err(|e| err("solver", e))?;

    // [kamke]
    let kamke = match &raw.kamke {
        None => None,
        Some(k) => {
            if n > 1 {
                return Err(err(
                    "kamke",
                    "the comparison iteration is scalar; systems use the spectral-radius condition",
                ));
            }
            Some(build_kamke(k, &tube, grid)?)
        }
    };

    let spec = ProblemSpec {
        coeff,
        phi,
        map,
        envelopes,
        tube,
        norm_kind,
        partition,
    };
    spec.validate().map_err(|e| err("file", e))?;

    Ok(LoadedProblem {
        spec,
        grid,
        picard,
        kamke,
        tube_constant,
        constant_radii,
    })
}

// ---------------------------------------------------------------------------
// Section builders
// ---------------------------------------------------------------------------

fn parse_expr(text: &str, vars: &[&str], location: &str) -> Result<Expr, ConfigError> {
    Expr::parse(text, vars).map_err(|e| err(location, e))
}

/// Wraps an expression of t into an infallible TimeFn (NaN on failure; the
/// numerics reject non-finite values downstream). Finiteness over the grid is
/// pre-checked at load time.
fn time_fn(expr: Expr) -> TimeFn {
    Arc::new(move |t| expr.eval(&[t]).unwrap_or(f64::NAN))
}

fn check_time_samples(
    expr: &Expr,
    grid: TimeGrid,
    location: &str,
    nonnegative: bool,
) -> Result<(), ConfigError> {
    let n = grid.n_steps();
    for i in 0..=2 * n {
        let t = grid.horizon() * (i as f64) / (2 * n) as f64;
        let v = expr.eval(&[t]).map_err(|e| err(location, e))?;
        if !v.is_finite() {
            return Err(err(location, format!("non-finite value {v} at t = {t}")));
        }
        if nonnegative && v < 0.0 {
            return Err(err(
                location,
                format!("must be nonnegative; sampled {v} at t = {t}"),
            ));
        }
    }
    Ok(())
}

fn build_generator(
    raw: &RawGenerator,
    d: usize,
    partition: &BlockPartition,
    horizon: f64,
) -> Result<CoefficientFamily, ConfigError> {
    let rows: Vec<Vec<Expr>> = match (&raw.matrix, &raw.blocks) {
        (Some(_), Some(_)) => {
            return Err(err(
                "generator",
                "give either 'matrix' or 'blocks', not both",
            ))
        }
        (None, None) => {
            return Err(err(
                "generator",
                "missing: give 'matrix' (d x d expressions) or 'blocks'",
            ))
        }
        (Some(matrix), None) => {
            if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                return Err(err(
                    "generator.matrix",
                    format!("must be {d}x{d} expressions in t"),
                ));
            }
            let mut rows = Vec::with_capacity(d);
            for (i, row) in matrix.iter().enumerate() {
                let mut out = Vec::with_capacity(d);
                for (j, cell) in row.iter().enumerate() {
                    out.push(parse_expr(
                        cell,
                        &["t"],
                        &format!("generator.matrix[{i}][{j}]"),
                    )?);
                }
                rows.push(out);
            }
            rows
        }
        (None, Some(blocks)) => {
            if blocks.len() != partition.n_components() {
                return Err(err(
                    "generator.blocks",
                    format!(
                        "expected one block per component ({}), got {}",
                        partition.n_components(),
                        blocks.len()
                    ),
                ));
            }
            // Assemble the block-diagonal matrix of expressions.
            let mut rows: Vec<Vec<Option<Expr>>> = vec![vec![None; d]; d];
            for (b, block) in blocks.iter().enumerate() {
                let range = partition.range(b);
                let size = range.len();
                if block.len() != size || block.iter().any(|r| r.len() != size) {
                    return Err(err(
                        format!("generator.blocks[{b}]"),
                        format!("must be {size}x{size} expressions in t"),
                    ));
                }
                for (i, row) in block.iter().enumerate() {
                    for (j, cell) in row.iter().enumerate() {
                        rows[range.start + i][range.start + j] = Some(parse_expr(
                            cell,
                            &["t"],
                            &format!("generator.blocks[{b}][{i}][{j}]"),
                        )?);
                    }
                }
            }
            rows.into_iter()
                .map(|row| {
                    row.into_iter()
                        .map(|cell| {
                            cell.unwrap_or_else(|| Expr::parse("0", &["t"]).expect("literal zero"))
                        })
                        .collect()
                })
                .collect()
        }
    };
    // Sample for finiteness before handing the closure to the integrator.
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            for k in 0..=8 {
                let t = horizon * k as f64 / 8.0;
                let v = e
                    .eval(&[t])
                    .map_err(|e| err(format!("generator[{i}][{j}]"), e))?;
                if !v.is_finite() {
                    return Err(err(
                        format!("generator[{i}][{j}]"),
                        format!("non-finite value at t = {t}"),
                    ));
                }
            }
        }
    }
    let rows = Arc::new(rows);
    Ok(CoefficientFamily::from_fn(d, horizon, move |t| {
        Matrix::from_fn(d, d, |i, j| rows[i][j].eval(&[t]).unwrap_or(f64::NAN))
    }))
}

fn state_fn_from_exprs(exprs: Vec<Expr>, d: usize) -> StateFn {
    Arc::new(move |t, x: &[f64]| {
        let mut bindings = Vec::with_capacity(1 + d);
        bindings.push(t);
        bindings.extend_from_slice(x);
        exprs
            .iter()
            .map(|e| {
                e.eval(&bindings)
                    .map_err(|er| EvalFailure::new(er.to_string()))
            })
            .collect()
    })
}

fn build_nonlinearity(
    raw: &RawNonlinearity,
    d: usize,
    horizon: f64,
) -> Result<Nonlinearity, ConfigError> {
    if raw.f.len() != d {
        return Err(err(
            "nonlinearity.f",
            format!("expected {d} expressions, got {}", raw.f.len()),
        ));
    }
    let state_vars: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=d).map(|i| format!("x{i}")))
        .collect();
    let state_var_refs: Vec<&str> = state_vars.iter().map(|s| s.as_str()).collect();
    let mut f_exprs = Vec::with_capacity(d);
    for (i, text) in raw.f.iter().enumerate() {
        f_exprs.push(parse_expr(
            text,
            &state_var_refs,
            &format!("nonlinearity.f[{i}]"),
        )?);
    }
    let f = state_fn_from_exprs(f_exprs, d);
    match raw.variant.as_str() {
        "superposition" => {
            if raw.kernel.is_some() || raw.theta.is_some() {
                return Err(err(
                    "nonlinearity",
                    "superposition takes neither 'kernel' nor 'theta'",
                ));
            }
            Ok(Nonlinearity::superposition_fallible(f))
        }
        "integro-volterra" => {
            let kernel_text = raw.kernel.as_ref().ok_or_else(|| {
                err(
                    "nonlinearity.kernel",
                    "integro-volterra needs a kernel k(t,s)",
                )
            })?;
            if raw.theta.is_some() {
                return Err(err("nonlinearity", "integro-volterra takes no 'theta'"));
            }
            let kernel = parse_expr(kernel_text, &["t", "s"], "nonlinearity.kernel")?;
            Ok(Nonlinearity::integro_volterra_fallible(
                f,
                Arc::new(move |t, s| {
                    kernel
                        .eval(&[t, s])
                        .map_err(|e| EvalFailure::new(e.to_string()))
                }),
            ))
        }
        "deviated-argument" => {
            let theta_text = raw
                .theta
                .as_ref()
                .ok_or_else(|| err("nonlinearity.theta", "deviated-argument needs theta(t)"))?;
            if raw.kernel.is_some() {
                return Err(err("nonlinearity", "deviated-argument takes no 'kernel'"));
            }
            let theta = parse_expr(theta_text, &["t"], "nonlinearity.theta")?;
            // theta must map [0, a] into [0, a]; sample it now.
            for k in 0..=64 {
                let t = horizon * k as f64 / 64.0;
                let v = theta.eval(&[t]).map_err(|e| err("nonlinearity.theta", e))?;
                if !(0.0 - 1e-9..=horizon + 1e-9).contains(&v) {
                    return Err(err(
                        "nonlinearity.theta",
                        format!("theta({t}) = {v} leaves [0, {horizon}]"),
                    ));
                }
            }
            Ok(Nonlinearity::deviated_argument_fallible(
                f,
                Arc::new(move |t| {
                    theta
                        .eval(&[t])
                        .map_err(|e| EvalFailure::new(e.to_string()))
                }),
            ))
        }
        other => Err(err(
            "nonlinearity.variant",
            format!(
                "unknown variant '{other}' (superposition, integro-volterra, deviated-argument)"
            ),
        )),
    }
}

fn numeric_matrix(rows: &[Vec<f64>], d: usize, location: &str) -> Result<Matrix, ConfigError> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(err(location, format!("must be a {d}x{d} numeric matrix")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(err(location, "entries must be finite"));
    }
    Ok(Matrix::from_rows(rows))
}

fn build_nonlocal(
    raw: &RawNonlocal,
    d: usize,
    partition: &BlockPartition,
    grid: TimeGrid,
) -> Result<NonlocalMap, ConfigError> {
    if !raw.points.is_empty() {
        let mut terms = Vec::with_capacity(raw.points.len());
        for (k, p) in raw.points.iter().enumerate() {
            let loc = format!("nonlocal.points[{k}]");
            grid.find_node(p.t)
                .map_err(|_| err(&loc, format!("t = {} must be a grid node", p.t)))?;
            terms.push(PointTerm {
                t: p.t,
                coeff: numeric_matrix(&p.coeff, d, &format!("{loc}.coeff"))?,
            });
        }
        return NonlocalMap::multi_point(terms, partition.clone())
            .map_err(|e| err("nonlocal.points", e));
    }
    if !raw.quadrature.is_empty() {
        let mut weights = vec![Matrix::zeros(d, d); grid.num_nodes()];
        for (k, w) in raw.quadrature.iter().enumerate() {
            let loc = format!("nonlocal.quadrature[{k}]");
            if w.node >= grid.num_nodes() {
                return Err(err(
                    &loc,
                    format!("node {} outside the grid (0..={})", w.node, grid.n_steps()),
                ));
            }
            if weights[w.node].max_abs() != 0.0 {
                return Err(err(&loc, format!("node {} given twice", w.node)));
            }
            weights[w.node] = numeric_matrix(&w.weight, d, &format!("{loc}.weight"))?;
        }
        return NonlocalMap::quadrature(weights, grid, partition.clone())
            .map_err(|e| err("nonlocal.quadrature", e));
    }
    Ok(NonlocalMap::zero(partition.clone()))
}

fn build_envelopes(
    raw: &RawEnvelope,
    n: usize,
    _horizon: f64,
    grid: TimeGrid,
) -> Result<(Vec<GrowthEnvelope>, Vec<Expr>), ConfigError> {
    if raw.delta.len() != n {
        return Err(err(
            "envelope.delta",
            format!("expected {n} expressions, got {}", raw.delta.len()),
        ));
    }
    if raw.psi.len() != n {
        return Err(err(
            "envelope.psi",
            format!("expected {n} expressions, got {}", raw.psi.len()),
        ));
    }
    if raw.gamma.len() != n || raw.gamma.iter().any(|row| row.len() != n) {
        return Err(err(
            "envelope.gamma",
            format!("expected an {n}x{n} matrix of expressions"),
        ));
    }
    let mut envelopes = Vec::with_capacity(n);
    let mut psi_exprs = Vec::with_capacity(n);
    for i in 0..n {
        let delta_loc = format!("envelope.delta[{i}]");
        let delta = parse_expr(&raw.delta[i], &["t"], &delta_loc)?;
        check_time_samples(&delta, grid, &delta_loc, true)?;
        let psi = parse_expr(&raw.psi[i], &["r"], &format!("envelope.psi[{i}]"))?;
        let mut gamma_row = Vec::with_capacity(n);
        for j in 0..n {
            let loc = format!("envelope.gamma[{i}][{j}]");
            let g = parse_expr(&raw.gamma[i][j], &["t"], &loc)?;
            check_time_samples(&g, grid, &loc, true)?;
            gamma_row.push(time_fn(g));
        }
        let psi_captured = psi.clone();
        envelopes.push(GrowthEnvelope {
            delta: time_fn(delta),
            psi: Arc::new(move |s| psi_captured.eval(&[s]).unwrap_or(f64::NAN)),
            gamma_row,
        });
        psi_exprs.push(psi);
    }
    Ok((envelopes, psi_exprs))
}

/// psi must be continuous nondecreasing with psi(s) > 0 for s > 0; checked by
/// dense sampling at load time (10 000 points over the tube ceiling).
fn validate_psi(psi: &Expr, component: usize, s_max: f64) -> Result<(), ConfigError> {
    let location = format!("envelope.psi[{component}]");
    let samples = 10_000usize;
    let mut prev = f64::NEG_INFINITY;
    for k in 0..=samples {
        let s = s_max * k as f64 / samples as f64;
        let v = psi.eval(&[s]).map_err(|e| err(&location, e))?;
        if !v.is_finite() {
            return Err(err(&location, format!("non-finite value at s = {s}")));
        }
        if s > 0.0 && v <= 0.0 {
            return Err(err(
                &location,
                format!("psi must be positive for s > 0; sampled psi({s}) = {v}"),
            ));
        }
        if v < prev - 1e-12 {
            return Err(err(
                &location,
                format!("psi must be nondecreasing; decrease detected at s = {s}"),
            ));
        }
        prev = prev.max(v);
    }
    Ok(())
}

fn build_tube(
    raw: &RawTube,
    n: usize,
    grid: TimeGrid,
) -> Result<(TubeRadius, bool, Vec<f64>), ConfigError> {
    if raw.radius.len() != n {
        return Err(err(
            "tube.radius",
            format!("expected {n} expressions, got {}", raw.radius.len()),
        ));
    }
    let mut fns: Vec<TimeFn> = Vec::with_capacity(n);
    let mut constant = true;
    let mut constant_radii = Vec::with_capacity(n);
    for (i, text) in raw.radius.iter().enumerate() {
        let location = format!("tube.radius[{i}]");
        let expr = parse_expr(text, &["t"], &location)?;
        for t in grid.nodes() {
            let v = expr.eval(&[t]).map_err(|e| err(&location, e))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(err(
                    &location,
                    format!("radius must be positive and finite; R({t}) = {v}"),
                ));
            }
        }
        if expr.uses_var(0) {
            constant = false;
            constant_radii.push(f64::NAN);
        } else {
            constant_radii.push(expr.eval(&[0.0]).map_err(|e| err(&location, e))?);
        }
        fns.push(time_fn(expr));
    }
    Ok((TubeRadius::new(fns), constant, constant_radii))
}

fn build_kamke(
    raw: &RawKamke,
    tube: &TubeRadius,
    grid: TimeGrid,
) -> Result<(KamkeFunction, usize), ConfigError> {
    let omega = parse_expr(&raw.omega, &["t", "s"], "kamke.omega")?;
    let eta = match &raw.eta {
        None => None,
        Some(text) => Some(parse_expr(text, &["t"], "kamke.eta")?),
    };
    // Sample omega over the undergraph 0 <= s <= 2R(t); enforce nonnegativity
    // and (when given) the Caratheodory bound omega(t, s) <= eta(t).
    for (i, t) in grid.nodes().enumerate() {
        let ceiling = 2.0 * tube.eval(0, t).map_err(|e| err("tube.radius", e))?;
        let eta_t = match &eta {
            None => f64::INFINITY,
            Some(e) => {
                let v = e.eval(&[t]).map_err(|e| err("kamke.eta", e))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(err("kamke.eta", format!("eta({t}) = {v} must be >= 0")));
                }
                v
            }
        };
        for k in 0..=16 {
            let s = ceiling * k as f64 / 16.0;
            let v = omega.eval(&[t, s]).map_err(|e| err("kamke.omega", e))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(err(
                    "kamke.omega",
                    format!("omega({t}, {s}) = {v} must be finite and nonnegative"),
                ));
            }
            if v > eta_t + 1e-12 {
                return Err(err(
                    "kamke.omega",
                    format!(
                        "omega({t}, {s}) = {v} exceeds the Caratheodory bound eta = {eta_t} (node {i})"
                    ),
                ));
            }
        }
    }
    let max_iter = raw.max_iter.unwrap_or(100);
    if max_iter == 0 {
        return Err(err("kamke.max_iter", "must be at least 1"));
    }
    let eta_fn = eta.map(|e| -> TimeFn { Arc::new(move |t| e.eval(&[t]).unwrap_or(f64::NAN)) });
    let omega_fn = KamkeFunction {
        omega: Arc::new(move |t, s| omega.eval(&[t, s]).unwrap_or(f64::NAN)),
        eta: eta_fn,
    };
    Ok((omega_fn, max_iter))
}

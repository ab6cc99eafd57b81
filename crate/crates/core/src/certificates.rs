//! Numeric evaluation of the sufficient existence conditions, producing a
//! margin ledger.
//!
//! Every L1 norm is a composite trapezoid on the problem grid. The declared
//! quadrature tolerance comes from one midpoint refinement (Richardson error
//! estimate); margins within +/- that tolerance are reported as marginal,
//! never as passes. Strict inequalities of the conditions mean a pass always
//! requires margin > tolerance.

use crate::error::{Error, Result};
use crate::evolution::TimeGrid;
use crate::nonlinearity::{GrowthEnvelope, TimeFn};
use crate::numerics::{spectral_radius, Matrix};

/// Time-dependent tube radius, one entry per component.
#[derive(Clone)]
pub struct TubeRadius {
    radii: Vec<TimeFn>,
}

impl TubeRadius {
    pub fn new(radii: Vec<TimeFn>) -> Self {
        assert!(!radii.is_empty(), "tube needs at least one component");
        Self { radii }
    }

    pub fn constant(r: f64, n_components: usize) -> Self {
        assert!(r > 0.0);
        Self::new(
            (0..n_components)
                .map(|_| -> TimeFn { std::sync::Arc::new(move |_| r) })
                .collect(),
        )
    }

    pub fn n_components(&self) -> usize {
        self.radii.len()
    }

    /// R_i(t); must be finite and positive.
    pub fn eval(&self, component: usize, t: f64) -> Result<f64> {
        let r = (self.radii[component])(t);
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::NonFinite {
                context: format!(
                    "tube radius R_{}({t}) = {r} must be positive",
                    component + 1
                ),
            });
        }
        Ok(r)
    }

    /// min over grid nodes of R_i.
    pub fn min_on_grid(&self, component: usize, grid: TimeGrid) -> Result<f64> {
        let mut best = f64::INFINITY;
        for t in grid.nodes() {
            best = best.min(self.eval(component, t)?);
        }
        Ok(best)
    }
}

impl std::fmt::Debug for TubeRadius {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TubeRadius")
            .field("n_components", &self.radii.len())
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionId {
    H2,
    Rem21,
    C7,
    C8,
    C9,
    C13,
    Rr1,
    H3Sys,
    Mm,
    Kamke,
}

impl std::fmt::Display for ConditionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ConditionId::H2 => "h2",
            ConditionId::Rem21 => "rem21",
            ConditionId::C7 => "c7",
            ConditionId::C8 => "c8",
            ConditionId::C9 => "c9",
            ConditionId::C13 => "c13",
            ConditionId::Rr1 => "rr1",
            ConditionId::H3Sys => "h3sys",
            ConditionId::Mm => "mm",
            ConditionId::Kamke => "kamke",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Marginal,
    Fail,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Pass => "pass",
            Verdict::Marginal => "marginal",
            Verdict::Fail => "fail",
        };
        f.write_str(s)
    }
}

/// One line of the certificate ledger.
#[derive(Clone, Debug)]
pub struct CertEntry {
    pub condition: ConditionId,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub quad_tol: f64,
    pub verdict: Verdict,
    pub notes: String,
}

impl CertEntry {
    /// Builds an entry with the verdict derived from the margin and the
    /// declared quadrature tolerance: a pass needs margin > tolerance, a fail
    /// margin < -tolerance, anything in between is marginal.
    pub fn classify(
        condition: ConditionId,
        lhs: f64,
        rhs: f64,
        margin: f64,
        quad_tol: f64,
        notes: impl Into<String>,
    ) -> Self {
        let verdict = if margin > quad_tol {
            Verdict::Pass
        } else if margin < -quad_tol {
            Verdict::Fail
        } else {
            Verdict::Marginal
        };
        Self {
            condition,
            lhs,
            rhs,
            margin,
            quad_tol,
            verdict,
            notes: notes.into(),
        }
    }

    /// Machine-readable line: condition,lhs,rhs,margin,verdict,notes.
    pub fn serialize(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.condition,
            fmt17(self.lhs),
            fmt17(self.rhs),
            fmt17(self.margin),
            self.verdict,
            self.notes.replace(',', ";")
        )
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, Default)]
pub struct CertificateReport {
    pub entries: Vec<CertEntry>,
}

impl CertificateReport {
    pub fn push(&mut self, entry: CertEntry) {
        self.entries.push(entry);
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.verdict == Verdict::Pass)
    }

    pub fn any_fail(&self) -> bool {
        self.entries.iter().any(|e| e.verdict == Verdict::Fail)
    }

    pub fn any_marginal(&self) -> bool {
        self.entries.iter().any(|e| e.verdict == Verdict::Marginal)
    }

    pub fn find(&self, id: ConditionId) -> Option<&CertEntry> {
        self.entries.iter().find(|e| e.condition == id)
    }
}

// ---------------------------------------------------------------------------
// Quadrature helpers (composite trapezoid on the problem grid, with a one-level
// midpoint refinement supplying the declared error tolerance).
// ---------------------------------------------------------------------------

/// L1 norm of |f| over the first `upto` grid intervals, with error estimate.
fn trap_l1(f: &dyn Fn(f64) -> f64, grid: TimeGrid, upto: usize) -> Result<(f64, f64)> {
    let cums = trap_l1_cumulative(f, grid, upto)?;
    Ok(*cums.last().expect("at least node 0"))
}

/// Cumulative L1 norms: entry i is (integral over [0, t_i], error estimate).
fn trap_l1_cumulative(
    f: &dyn Fn(f64) -> f64,
    grid: TimeGrid,
    upto: usize,
) -> Result<Vec<(f64, f64)>> {
    debug_assert!(upto <= grid.n_steps());
    let h = grid.h();
    let sample = |t: f64| -> Result<f64> {
        let v = f(t);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: format!("integrand at t = {t}"),
            });
        }
        Ok(v.abs())
    };
    let mut out = Vec::with_capacity(upto + 1);
    let mut coarse = 0.0_f64;
    let mut fine = 0.0_f64;
    let mut prev = sample(grid.node(0))?;
    out.push((0.0, 0.0));
    for i in 0..upto {
        let mid = sample(0.5 * (grid.node(i) + grid.node(i + 1)))?;
        let next = sample(grid.node(i + 1))?;
        coarse += 0.5 * h * (prev + next);
        fine += 0.25 * h * (prev + 2.0 * mid + next);
        // Richardson estimate of the coarse-trapezoid error on [0, t_{i+1}].
        let tol = (4.0 / 3.0) * (fine - coarse).abs() + 1e-15 * coarse.abs();
        out.push((coarse, tol));
        prev = next;
    }
    Ok(out)
}

/// Signed integral of `f` on [lo, hi] by adaptive composite trapezoid;
/// returns the Richardson-extrapolated value and an error estimate.
///
/// Intervals spanning a large dynamic range (the improper tube integrals run
/// from 1e-12 up) are split into dyadic segments first, so that integrands
/// like 1/tau stay resolvable with uniform panels per segment.
fn adaptive_integral(
    f: &dyn Fn(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    if lo == hi {
        return Ok((0.0, 0.0));
    }
    let (a, b, sign) = if lo < hi {
        (lo, hi, 1.0)
    } else {
        (hi, lo, -1.0)
    };
    let mut total = 0.0_f64;
    let mut err = 0.0_f64;
    if a > 0.0 && b / a > 16.0 {
        let mut left = a;
        while left < b {
            let right = (left * 2.0).min(b);
            let (v, e) = trapezoid_doubling(f, left, right, rel_tol)?;
            total += v;
            err += e;
            left = right;
        }
    } else {
        let (v, e) = trapezoid_doubling(f, a, b, rel_tol)?;
        total = v;
        err = e;
    }
    Ok((sign * total, err))
}

/// Doubling composite trapezoid on one segment with Richardson extrapolation.
fn trapezoid_doubling(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    let mut n = 8usize;
    let mut prev = {
        let h = (b - a) / n as f64;
        let mut s = 0.5 * (f(a)? + f(b)?);
        for i in 1..n {
            s += f(a + i as f64 * h)?;
        }
        s * h
    };
    for _ in 0..24 {
        // Double the panel count, reusing previous nodes.
        let h = (b - a) / (2 * n) as f64;
        let mut mids = 0.0;
        for i in 0..n {
            mids += f(a + (2 * i + 1) as f64 * h)?;
        }
        let current = 0.5 * prev + h * mids;
        n *= 2;
        let diff = (current - prev).abs();
        if diff <= rel_tol * current.abs().max(1e-300) || diff == 0.0 {
            let extrapolated = current + (current - prev) / 3.0;
            return Ok((extrapolated, diff / 3.0 + 1e-15 * current.abs()));
        }
        prev = current;
    }
    Err(Error::Quadrature {
        reason: format!("adaptive trapezoid did not converge on [{a}, {b}]"),
    })
}

const ADAPTIVE_REL_TOL: f64 = 1e-8;
/// Lower cutoff replacing tau = 0 in the improper case of the tube condition.
const IMPROPER_EPS: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Scalar certificates
// ---------------------------------------------------------------------------

/// Conditions (7) and (8) for one component: returns the c7 entry, the c8
/// entry, and the computed radius floor r.
///
/// r := M^2 |BF| * |delta(.) psi(R(.))|_{L1(0,a_F)} must stay below min R, and
/// `int_r^{R(t)} dtau/psi(tau) >= M |delta|_{L1(0,t)}` must hold at every node.
pub fn check_c7_c8(
    env: &GrowthEnvelope,
    tube: &TubeRadius,
    component: usize,
    m: f64,
    bf_norm: f64,
    a_f: f64,
    grid: TimeGrid,
) -> Result<(CertEntry, CertEntry, f64)> {
    let a_f_node = grid.find_node(a_f)?;
    let delta = &env.delta;
    let psi = &env.psi;
    let growth = |t: f64| (delta)(t) * (psi)(tube_eval_unchecked(tube, component, t));
    let (l1_growth, tol_growth) = trap_l1(&growth, grid, a_f_node)?;
    let r = m * m * bf_norm * l1_growth;
    let r_tol = m * m * bf_norm * tol_growth;
    let min_r = tube.min_on_grid(component, grid)?;
    let c7 = CertEntry::classify(
        ConditionId::C7,
        r,
        min_r,
        min_r - r,
        r_tol,
        format!("r={}", fmt17(r)),
    );

    // Condition (8): the tau-integral against the cumulative L1 of delta.
    let delta_cums = trap_l1_cumulative(&|t| (delta)(t), grid, grid.n_steps())?;
    let psi_integrand = |tau: f64| -> Result<f64> {
        let p = (psi)(tau);
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::PsiNotPositive { tau, value: p });
        }
        Ok(1.0 / p)
    };
    let improper = r == 0.0;
    let lower = if improper { IMPROPER_EPS } else { r };
    let mut margin = f64::INFINITY;
    let mut tol_c8 = 0.0_f64;
    let mut worst_lhs = f64::INFINITY;
    let mut worst_rhs = 0.0_f64;
    let mut all_exceed = true;
    for (i, t) in grid.nodes().enumerate() {
        let r_t = tube.eval(component, t)?;
        let (lhs, lhs_tol) = adaptive_integral(&psi_integrand, lower, r_t, ADAPTIVE_REL_TOL)?;
        let (d_l1, d_tol) = delta_cums[i];
        let rhs = m * d_l1;
        let node_margin = lhs - rhs;
        if node_margin < margin {
            margin = node_margin;
            worst_lhs = lhs;
            worst_rhs = rhs;
            tol_c8 = lhs_tol + m * d_tol;
        }
        if lhs < rhs {
            all_exceed = false;
        }
    }
    // With r = 0 the integral may diverge favorably near zero: once the
    // partial integral from IMPROPER_EPS already exceeds the requirement
    // everywhere, report a pass with the +infinity sentinel.
    let (margin, notes) = if improper && all_exceed {
        (
            f64::INFINITY,
            "r=0; partial integral from 1e-12 already exceeds requirement".to_string(),
        )
    } else if improper {
        (
            margin,
            "r=0; lower limit truncated at 1e-12 (lower bound of the true integral)".to_string(),
        )
    } else {
        (margin, String::new())
    };
    let c8 = CertEntry::classify(ConditionId::C8, worst_lhs, worst_rhs, margin, tol_c8, notes);
    Ok((c7, c8, r))
}

fn tube_eval_unchecked(tube: &TubeRadius, component: usize, t: f64) -> f64 {
    tube.eval(component, t).unwrap_or(f64::NAN)
}

/// Condition (9), constant-radius corollary:
/// R/psi(R) >= M^2 |BF| |delta|_{L1(0,a_F)} + M |delta|_{L1(0,a)}.
pub fn check_c9(
    env: &GrowthEnvelope,
    r_const: f64,
    m: f64,
    bf_norm: f64,
    a_f: f64,
    grid: TimeGrid,
) -> Result<CertEntry> {
    let a_f_node = grid.find_node(a_f)?;
    let psi_r = (env.psi)(r_const);
    if !(psi_r.is_finite() && psi_r > 0.0) {
        return Err(Error::PsiNotPositive {
            tau: r_const,
            value: psi_r,
        });
    }
    let lhs = r_const / psi_r;
    let (l1_af, tol_af) = trap_l1(&|t| (env.delta)(t), grid, a_f_node)?;
    let (l1_a, tol_a) = trap_l1(&|t| (env.delta)(t), grid, grid.n_steps())?;
    let rhs = m * m * bf_norm * l1_af + m * l1_a;
    let tol = m * m * bf_norm * tol_af + m * tol_a;
    Ok(CertEntry::classify(
        ConditionId::C9,
        lhs,
        rhs,
        lhs - rhs,
        tol,
        "",
    ))
}

/// Condition (13): (2 M^2 |BF| + 2 M) |gamma|_{L1(0,a_F)} < 1.
pub fn check_c13(
    gamma: &TimeFn,
    m: f64,
    bf_norm: f64,
    a_f: f64,
    grid: TimeGrid,
) -> Result<CertEntry> {
    let a_f_node = grid.find_node(a_f)?;
    let (l1, tol) = trap_l1(&|t| (gamma)(t), grid, a_f_node)?;
    let factor = 2.0 * m * m * bf_norm + 2.0 * m;
    let lhs = factor * l1;
    Ok(CertEntry::classify(
        ConditionId::C13,
        lhs,
        1.0,
        1.0 - lhs,
        factor * tol,
        "",
    ))
}

// ---------------------------------------------------------------------------
// System certificates
// ---------------------------------------------------------------------------

/// Conditions (rr1) and the per-component tube integral for systems. Produces
/// one rr1 entry and one h3sys entry per component, and the radius floors r_i.
///
/// r_i := M_i sum_j |G_ij| M_j |delta_j psi_j(R_j)|_{L1(0,a_j)}.
pub fn check_system(
    envelopes: &[GrowthEnvelope],
    tube: &TubeRadius,
    m_i: &[f64],
    g_norms: &Matrix,
    supports: &[f64],
    grid: TimeGrid,
) -> Result<(Vec<CertEntry>, Vec<f64>)> {
    let n = envelopes.len();
    if tube.n_components() != n
        || m_i.len() != n
        || g_norms.rows() != n
        || g_norms.cols() != n
        || supports.len() != n
    {
        return Err(Error::Dimension {
            context: "system certificate inputs must agree on the component count".into(),
        });
    }
    // Per-variable growth integrals |delta_j psi_j(R_j)|_{L1(0,a_j)}.
    let mut growth_l1 = Vec::with_capacity(n);
    for j in 0..n {
        let node = grid.find_node(supports[j])?;
        let env = &envelopes[j];
        let f = |t: f64| (env.delta)(t) * (env.psi)(tube_eval_unchecked(tube, j, t));
        growth_l1.push(trap_l1(&f, grid, node)?);
    }
    let mut entries = Vec::with_capacity(2 * n);
    let mut radii = Vec::with_capacity(n);
    for i in 0..n {
        let mut r_i = 0.0;
        let mut tol_i = 0.0;
        for j in 0..n {
            let (v, tol) = growth_l1[j];
            r_i += m_i[i] * g_norms.get(i, j) * m_i[j] * v;
            tol_i += m_i[i] * g_norms.get(i, j) * m_i[j] * tol;
        }
        let min_r = tube.min_on_grid(i, grid)?;
        entries.push(CertEntry::classify(
            ConditionId::Rr1,
            r_i,
            min_r,
            min_r - r_i,
            tol_i,
            format!("component {}; r_i={}", i + 1, fmt17(r_i)),
        ));
        radii.push(r_i);
    }
    // Per-component tube integral, same quadrature rules as condition (8).
    for i in 0..n {
        let env = &envelopes[i];
        let delta_cums = trap_l1_cumulative(&|t| (env.delta)(t), grid, grid.n_steps())?;
        let psi = &env.psi;
        let psi_integrand = |tau: f64| -> Result<f64> {
            let p = (psi)(tau);
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::PsiNotPositive { tau, value: p });
            }
            Ok(1.0 / p)
        };
        let improper = radii[i] == 0.0;
        let lower = if improper { IMPROPER_EPS } else { radii[i] };
        let mut margin = f64::INFINITY;
        let mut tol = 0.0;
        let mut worst_lhs = f64::INFINITY;
        let mut worst_rhs = 0.0;
        let mut all_exceed = true;
        for (k, t) in grid.nodes().enumerate() {
            let r_t = tube.eval(i, t)?;
            let (lhs, lhs_tol) = adaptive_integral(&psi_integrand, lower, r_t, ADAPTIVE_REL_TOL)?;
            let rhs = m_i[i] * delta_cums[k].0;
            if lhs - rhs < margin {
                margin = lhs - rhs;
                worst_lhs = lhs;
                worst_rhs = rhs;
                tol = lhs_tol + m_i[i] * delta_cums[k].1;
            }
            if lhs < rhs {
                all_exceed = false;
            }
        }
        let (margin, notes) = if improper && all_exceed {
            (f64::INFINITY, format!("component {}; r_i=0", i + 1))
        } else {
            (margin, format!("component {}", i + 1))
        };
        entries.push(CertEntry::classify(
            ConditionId::H3Sys,
            worst_lhs,
            worst_rhs,
            margin,
            tol,
            notes,
        ));
    }
    Ok((entries, radii))
}

/// The comparison matrix H = 2(|G| |gamma~| + |gamma|) and its spectral-radius
/// entry (mm). |G| is [M_i |G_ij|]; the |gamma| matrices carry the M_i row
/// scaling; gamma~ is gamma cut off at the per-variable support of its row.
///
/// When all per-variable supports equal a_F the construction collapses to
/// H = 2(|G| + I)|gamma|; both routes are computed and must agree to 1e-12.
pub fn build_h(
    g_norms: &Matrix,
    envelopes: &[GrowthEnvelope],
    supports: &[f64],
    a_f: f64,
    m_i: &[f64],
    grid: TimeGrid,
) -> Result<(Matrix, CertEntry)> {
    let n = envelopes.len();
    if g_norms.rows() != n || g_norms.cols() != n || supports.len() != n || m_i.len() != n {
        return Err(Error::Dimension {
            context: "comparison-matrix inputs must agree on the component count".into(),
        });
    }
    for env in envelopes {
        if env.gamma_row.len() != n {
            return Err(Error::Dimension {
                context: "each envelope needs one gamma per component".into(),
            });
        }
    }
    let a_f_node = grid.find_node(a_f)?;
    let mut gamma_mat = Matrix::zeros(n, n);
    let mut gamma_tilde = Matrix::zeros(n, n);
    let mut tol_total = 0.0_f64;
    for i in 0..n {
        let cut = grid.find_node(supports[i].min(a_f))?;
        for j in 0..n {
            let gamma_ij = &envelopes[i].gamma_row[j];
            let (full, tol_full) = trap_l1(&|t| (gamma_ij)(t), grid, a_f_node)?;
            let (tilde, tol_tilde) = trap_l1(&|t| (gamma_ij)(t), grid, cut)?;
            gamma_mat.set(i, j, m_i[i] * full);
            gamma_tilde.set(i, j, m_i[i] * tilde);
            tol_total += m_i[i] * (tol_full + tol_tilde);
        }
    }
    let g_scaled = Matrix::from_fn(n, n, |i, j| m_i[i] * g_norms.get(i, j));
    let h = g_scaled.mul(&gamma_tilde).add(&gamma_mat).scaled(2.0);
    let mut notes = String::new();
    if supports
        .iter()
        .all(|&a| (a - a_f).abs() <= 1e-12 * a_f.max(1.0))
    {
        // Remark-style collapse: gamma~ equals gamma, so H = 2(|G| + I)|gamma|.
        let collapsed = g_scaled
            .add(&Matrix::identity(n))
            .mul(&gamma_mat)
            .scaled(2.0);
        let diff = h.sub(&collapsed).max_abs();
        if diff > 1e-12 {
            return Err(Error::NonFinite {
                context: format!(
                    "comparison-matrix collapse mismatch: {diff:e} (uniform supports)"
                ),
            });
        }
        notes = "uniform supports; collapsed form verified".to_string();
    }
    let rho = spectral_radius(&h)?;
    // The spectral radius itself carries the power-iteration tolerance.
    let tol = tol_total + crate::numerics::POWER_REL_TOL * rho.abs() + f64::EPSILON;
    let entry = CertEntry::classify(ConditionId::Mm, rho, 1.0, 1.0 - rho, tol, notes);
    Ok((h, entry))
}

// ---------------------------------------------------------------------------
// Kamke comparison iteration
// ---------------------------------------------------------------------------

/// Comparison function omega on the undergraph V_R = {(t, s): 0 <= s <= 2R(t)}
/// together with its Caratheodory bound eta (omega(t, s) <= eta(t)).
#[derive(Clone)]
pub struct KamkeFunction {
    pub omega: std::sync::Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub eta: Option<TimeFn>,
}

impl KamkeFunction {
    pub fn linear(gamma: f64) -> Self {
        Self {
            omega: std::sync::Arc::new(move |_, s| gamma * s),
            eta: None,
        }
    }
}

impl std::fmt::Debug for KamkeFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KamkeFunction").finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub struct KamkeOutcome {
    pub converged_to_zero: bool,
    pub final_sup: f64,
    pub sup_history: Vec<f64>,
    pub final_phi: Vec<f64>,
    /// Whether omega had to be clamped back onto the undergraph.
    pub clamped: bool,
}

const KAMKE_ZERO_TOL: f64 = 1e-10;

/// Monotone functional iteration of the comparison inequality, starting from
/// the ceiling phi = 2R (the alpha-diameter bound of the tube):
///
/// phi_{k+1}(t) = min(phi_k(t),
///                    2 M^2 |BF| int_0^{a_F} omega(s, phi_k(s)) ds
///                    + 2 M int_0^t omega(s, phi_k(s)) ds).
///
/// Convergence to zero supports the uniqueness hypothesis; non-convergence is
/// inconclusive for nonlinear omega (one-sided check).
pub fn kamke_decay(
    w: &KamkeFunction,
    tube: &TubeRadius,
    m: f64,
    bf_norm: f64,
    a_f: f64,
    grid: TimeGrid,
    max_iter: usize,
) -> Result<KamkeOutcome> {
    assert!(max_iter >= 1);
    let a_f_node = grid.find_node(a_f)?;
    let n_nodes = grid.num_nodes();
    let h = grid.h();
    let mut phi: Vec<f64> = grid
        .nodes()
        .map(|t| tube.eval(0, t).map(|r| 2.0 * r))
        .collect::<Result<_>>()?;
    let mut clamped = false;
    let mut sup_history = Vec::new();
    for _ in 0..max_iter {
        // omega along the current iterate, clamped to the undergraph.
        let mut g = Vec::with_capacity(n_nodes);
        for (i, t) in grid.nodes().enumerate() {
            let ceiling = 2.0 * tube.eval(0, t)?;
            let mut s = phi[i];
            if s > ceiling {
                s = ceiling;
                clamped = true;
            }
            if s < 0.0 {
                s = 0.0;
                clamped = true;
            }
            let v = (w.omega)(t, s);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NonFinite {
                    context: format!("omega({t}, {s}) = {v} must be finite and nonnegative"),
                });
            }
            g.push(v);
        }
        // Cumulative trapezoid of g and its value at a_F.
        let mut cum = vec![0.0_f64; n_nodes];
        for i in 1..n_nodes {
            cum[i] = cum[i - 1] + 0.5 * h * (g[i - 1] + g[i]);
        }
        let head = 2.0 * m * m * bf_norm * cum[a_f_node];
        let mut sup = 0.0_f64;
        for i in 0..n_nodes {
            let next = (head + 2.0 * m * cum[i]).min(phi[i]);
            phi[i] = next;
            sup = sup.max(next);
        }
        sup_history.push(sup);
        if sup <= KAMKE_ZERO_TOL {
            break;
        }
    }
    let final_sup = *sup_history.last().expect("at least one iteration");
    Ok(KamkeOutcome {
        converged_to_zero: final_sup <= KAMKE_ZERO_TOL,
        final_sup,
        sup_history,
        final_phi: phi,
        clamped,
    })
}

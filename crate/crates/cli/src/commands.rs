//! The four batch commands: check, solve, sweep, oracle-compare.
//!
//! Every command returns (exit code, stdout text). CSV output uses '.'
//! decimals, comma separators, LF line endings, and 17 significant digits, so
//! identical inputs produce byte-identical files.

use std::path::Path;

use nle_core::certificates::{
    build_h, check_c13, check_c7_c8, check_c9, check_system, kamke_decay, CertEntry,
    CertificateReport, ConditionId, Verdict,
};
use nle_core::error::Error;
use nle_core::evolution::{build_evolution, EvolutionTable};
use nle_core::nonlocal::{build_resolvent, g_block_norms, NonlocalVariant, Resolvent, Support};
use nle_core::numerics::{op_norm, Matrix};
use nle_core::oracle::shooting_solve;
use nle_core::solver::{picard_solve_with, SolveResult};

use crate::problem::{load, ConfigError, LoadedProblem, Overrides};

pub mod exit_code {
    pub const OK: i32 = 0;
    pub const CERT_FAIL: i32 = 2;
    pub const MARGINAL: i32 = 3;
    pub const NO_CONVERGENCE: i32 = 4;
    pub const ORACLE_DEVIATION: i32 = 5;
    pub const ORACLE_REFUSAL: i32 = 6;
    pub const CONFIG: i32 = 64;
}

/// 17 significant digits, locale-independent.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Evolution table, resolvent, and the derived certificate inputs.
pub struct Engine {
    pub tab: EvolutionTable,
    pub res: Resolvent,
    pub support: Support,
    pub m_full: f64,
    pub m_blocks: Vec<f64>,
    pub g_norms: Matrix,
}

pub fn build_engine(problem: &LoadedProblem) -> Result<Engine, Error> {
    problem.spec.validate()?;
    let tab = build_evolution(&problem.spec.coeff, problem.grid, problem.spec.norm_kind)?;
    let res = build_resolvent(&problem.spec.map, &tab)?;
    let support = problem.spec.map.support();
    let n = problem.spec.partition.n_components();
    let mut m_blocks = Vec::with_capacity(n);
    if n == 1 {
        m_blocks.push(tab.m_bound());
    } else {
        for i in 0..n {
            let range = problem.spec.partition.range(i);
            m_blocks.push(tab.block_bound(range.start, range.end)?);
        }
    }
    let g_norms = g_block_norms(&problem.spec.map, &res.matrix, problem.spec.norm_kind)?;
    Ok(Engine {
        m_full: tab.m_bound(),
        tab,
        res,
        support,
        m_blocks,
        g_norms,
    })
}

/// Assembles the full certificate ledger for a loaded problem.
pub fn run_certificates(
    problem: &LoadedProblem,
    engine: &Engine,
) -> Result<CertificateReport, Error> {
    let spec = &problem.spec;
    let grid = problem.grid;
    let n = spec.partition.n_components();
    let a_f = engine.support.total;
    let mut report = CertificateReport::default();

    // h2: the resolvent exists; ledger carries the identity defect.
    let eye = Matrix::identity(spec.partition.dim());
    let defect = op_norm(
        &engine
            .res
            .matrix
            .mul(&eye.sub(&engine.res.f_of_t0))
            .sub(&eye),
        spec.norm_kind,
    )?;
    report.push(manual_entry(
        ConditionId::H2,
        defect,
        1e-10,
        1e-10 - defect,
        0.0,
        "resolvent exists; lhs is the identity defect",
    ));

    // Sufficient contraction check: M * sum |C_k| < 1.
    let coeff_sum = spec.map.coeff_norm_sum(spec.norm_kind)?;
    let rem_lhs = engine.m_full * coeff_sum;
    report.push(manual_entry(
        ConditionId::Rem21,
        rem_lhs,
        1.0,
        1.0 - rem_lhs,
        0.0,
        "sufficient check only; B may exist regardless",
    ));

    if n == 1 {
        let env = &spec.envelopes[0];
        let bf = engine.res.bf_norm_upper;
        let (c7, c8, _r) = check_c7_c8(env, &spec.tube, 0, engine.m_full, bf, a_f, grid)?;
        report.push(c7);
        report.push(c8);
        if problem.tube_constant {
            report.push(check_c9(
                env,
                problem.constant_radii[0],
                engine.m_full,
                bf,
                a_f,
                grid,
            )?);
        }
        report.push(check_c13(&env.gamma_row[0], engine.m_full, bf, a_f, grid)?);
        // 1x1 comparison matrix: equals the c13 left-hand side when the
        // per-variable support coincides with a_F (always true for n = 1).
        let (_h, mm) = build_h(
            &Matrix::scalar(bf),
            &spec.envelopes,
            &engine.support.per_variable,
            a_f,
            &[engine.m_full],
            grid,
        )?;
        report.push(mm);
        if let Some((kamke, max_iter)) = &problem.kamke {
            let outcome = kamke_decay(kamke, &spec.tube, engine.m_full, bf, a_f, grid, *max_iter)?;
            let mut note = String::from(if outcome.converged_to_zero {
                "one-sided heuristic; decay to zero supports uniqueness"
            } else {
                "one-sided heuristic; no decay observed (inconclusive for nonlinear omega)"
            });
            if outcome.clamped {
                note.push_str("; omega clamped to the undergraph");
            }
            report.push(manual_entry(
                ConditionId::Kamke,
                outcome.final_sup,
                1e-10,
                1e-10 - outcome.final_sup,
                0.0,
                &note,
            ));
        }
    } else {
        let (entries, _radii) = check_system(
            &spec.envelopes,
            &spec.tube,
            &engine.m_blocks,
            &engine.g_norms,
            &engine.support.per_variable,
            grid,
        )?;
        for e in entries {
            report.push(e);
        }
        let (_h, mm) = build_h(
            &engine.g_norms,
            &spec.envelopes,
            &engine.support.per_variable,
            a_f,
            &engine.m_blocks,
            grid,
        )?;
        report.push(mm);
    }
    Ok(report)
}

fn manual_entry(
    condition: ConditionId,
    lhs: f64,
    rhs: f64,
    margin: f64,
    quad_tol: f64,
    notes: &str,
) -> CertEntry {
    CertEntry::classify(condition, lhs, rhs, margin, quad_tol, notes)
}

fn report_lines(report: &CertificateReport) -> String {
    let mut out = String::from("condition,lhs,rhs,margin,verdict,notes\n");
    for e in &report.entries {
        out.push_str(&e.serialize());
        out.push('\n');
    }
    let pass = report
        .entries
        .iter()
        .filter(|e| e.verdict == Verdict::Pass)
        .count();
    let marginal = report
        .entries
        .iter()
        .filter(|e| e.verdict == Verdict::Marginal)
        .count();
    let fail = report.entries.len() - pass - marginal;
    out.push_str(&format!(
        "summary: {pass} pass; {marginal} marginal; {fail} fail\n"
    ));
    out
}

fn report_exit(report: &CertificateReport) -> i32 {
    if report.any_fail() {
        exit_code::CERT_FAIL
    } else if report.any_marginal() {
        exit_code::MARGINAL
    } else {
        exit_code::OK
    }
}

fn config_failure(e: &ConfigError) -> (i32, String) {
    (exit_code::CONFIG, format!("{e}\n"))
}

fn engine_failure(e: &Error) -> (i32, String) {
    match e {
        // A missing resolvent is a certificate outcome, not a config error.
        Error::ResolventSingular | Error::ResolventDefect { .. } => (
            exit_code::CERT_FAIL,
            format!(
                "condition,lhs,rhs,margin,verdict,notes\nh2,inf,{},{},fail,{}\nsummary: 0 pass; 0 marginal; 1 fail\n",
                fmt17(1e-10),
                fmt17(f64::NEG_INFINITY),
                e.to_string().replace(',', ";")
            ),
        ),
        other => (exit_code::CONFIG, format!("error: {other}\n")),
    }
}

/// `check`: print the certificate ledger. Exit 0 when everything passes, 2 on
/// any fail, 3 on marginal-only.
pub fn cmd_check(path: &Path, overrides: &Overrides) -> (i32, String) {
    let problem = match load(path, overrides) {
        Ok(p) => p,
        Err(e) => return config_failure(&e),
    };
    let engine = match build_engine(&problem) {
        Ok(e) => e,
        Err(e) => return engine_failure(&e),
    };
    let report = match run_certificates(&problem, &engine) {
        Ok(r) => r,
        Err(e) => return engine_failure(&e),
    };
    (report_exit(&report), report_lines(&report))
}

fn solve_csv(problem: &LoadedProblem, result: &SolveResult) -> String {
    let spec = &problem.spec;
    let d = spec.partition.dim();
    let n = spec.partition.n_components();
    let mut out = String::from("t");
    for c in 0..d {
        out.push_str(&format!(",u{}", c + 1));
    }
    for i in 0..n {
        out.push_str(&format!(",R{}", i + 1));
    }
    for i in 0..n {
        out.push_str(&format!(",norm{}", i + 1));
    }
    out.push('\n');
    for (i, t) in problem.grid.nodes().enumerate() {
        out.push_str(&fmt17(t));
        let u = result.trajectory.value(i);
        for v in u {
            out.push(',');
            out.push_str(&fmt17(*v));
        }
        for comp in 0..n {
            out.push(',');
            let r = spec.tube.eval(comp, t).unwrap_or(f64::NAN);
            out.push_str(&fmt17(r));
        }
        for comp in 0..n {
            out.push(',');
            out.push_str(&fmt17(spec.partition.component_norm(
                u,
                comp,
                spec.norm_kind,
            )));
        }
        out.push('\n');
    }
    let residual = result.residual_history.last().copied().unwrap_or(f64::NAN);
    out.push_str(&format!("residual,{}\n", fmt17(residual)));
    out
}

/// `solve`: run the fixed-point iteration and emit the trajectory CSV. Exit 0
/// on convergence, 4 otherwise.
pub fn cmd_solve(path: &Path, overrides: &Overrides, csv_path: Option<&Path>) -> (i32, String) {
    let problem = match load(path, overrides) {
        Ok(p) => p,
        Err(e) => return config_failure(&e),
    };
    let engine = match build_engine(&problem) {
        Ok(e) => e,
        Err(e) => return engine_failure(&e),
    };
    let result = match picard_solve_with(&problem.spec, &engine.tab, &engine.res, &problem.picard) {
        Ok(r) => r,
        Err(Error::Diverged { initial, last, .. }) => {
            return (
                exit_code::NO_CONVERGENCE,
                format!(
                    "diverged: residual grew from {} to {}\n",
                    fmt17(initial),
                    fmt17(last)
                ),
            )
        }
        Err(e) => return (exit_code::CONFIG, format!("error: {e}\n")),
    };
    let mut out = String::new();
    out.push_str(&format!("converged,{}\n", result.converged));
    out.push_str(&format!("iterations,{}\n", result.iterations));
    out.push_str(&format!(
        "residual,{}\n",
        fmt17(result.residual_history.last().copied().unwrap_or(f64::NAN))
    ));
    out.push_str(&format!(
        "boundary_defect,{}\n",
        fmt17(result.boundary_defect)
    ));
    out.push_str(&format!("tube_ok,{}\n", result.tube_ok));
    let csv = solve_csv(&problem, &result);
    match csv_path {
        Some(p) => {
            if let Err(e) = std::fs::write(p, &csv) {
                return (
                    exit_code::CONFIG,
                    format!("error: cannot write {}: {e}\n", p.display()),
                );
            }
        }
        None => out.push_str(&csv),
    }
    let code = if result.converged {
        exit_code::OK
    } else {
        exit_code::NO_CONVERGENCE
    };
    (code, out)
}

struct SweepRow {
    a_f: f64,
    r: f64,
    margin_c7: f64,
    margin_c8: f64,
    margin_c13: f64,
    rho_h: f64,
    iterations: Option<usize>,
    residual: f64,
    boundary_defect: f64,
    status: String,
}

impl SweepRow {
    fn failed(a_f: f64, status: String) -> Self {
        Self {
            a_f,
            r: f64::NAN,
            margin_c7: f64::NAN,
            margin_c8: f64::NAN,
            margin_c13: f64::NAN,
            rho_h: f64::NAN,
            iterations: None,
            residual: f64::NAN,
            boundary_defect: f64::NAN,
            status,
        }
    }

    fn serialize(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            fmt17(self.a_f),
            fmt17(self.r),
            fmt17(self.margin_c7),
            fmt17(self.margin_c8),
            fmt17(self.margin_c13),
            fmt17(self.rho_h),
            self.iterations
                .map(|i| i.to_string())
                .unwrap_or_else(|| "NaN".into()),
            fmt17(self.residual),
            fmt17(self.boundary_defect),
            self.status
        )
    }
}

fn sweep_one(problem: &LoadedProblem, node: usize) -> SweepRow {
    let grid = problem.grid;
    let t_new = grid.node(node);
    // Move the last multi-point term to the candidate node, coefficients fixed.
    let mut spec = problem.spec.clone();
    let points = match problem.spec.map.variant() {
        NonlocalVariant::MultiPoint(points) => {
            let mut points = points.clone();
            points.last_mut().expect("validated nonempty").t = t_new;
            points
        }
        _ => unreachable!("sweep requires a multi-point map"),
    };
    spec.map = match nle_core::nonlocal::NonlocalMap::multi_point(points, spec.partition.clone()) {
        Ok(m) => m,
        Err(e) => return SweepRow::failed(t_new, short_status(&e.to_string())),
    };
    let shifted = LoadedProblem {
        spec,
        grid,
        picard: problem.picard,
        kamke: None,
        tube_constant: problem.tube_constant,
        constant_radii: problem.constant_radii.clone(),
    };
    let engine = match build_engine(&shifted) {
        Ok(en) => en,
        Err(e) => return SweepRow::failed(t_new, short_status(&e.to_string())),
    };
    let report = match run_certificates(&shifted, &engine) {
        Ok(r) => r,
        Err(e) => return SweepRow::failed(t_new, short_status(&e.to_string())),
    };
    let margin = |id: ConditionId| -> f64 {
        report
            .entries
            .iter()
            .filter(|e| e.condition == id)
            .map(|e| e.margin)
            .fold(f64::INFINITY, f64::min)
    };
    let n = shifted.spec.partition.n_components();
    let (r_val, c7_margin, c8_margin) = if n == 1 {
        let c7 = report.find(ConditionId::C7);
        (
            c7.map(|e| e.lhs).unwrap_or(f64::NAN),
            margin(ConditionId::C7),
            margin(ConditionId::C8),
        )
    } else {
        let r_max = report
            .entries
            .iter()
            .filter(|e| e.condition == ConditionId::Rr1)
            .map(|e| e.lhs)
            .fold(0.0_f64, f64::max);
        (r_max, margin(ConditionId::Rr1), margin(ConditionId::H3Sys))
    };
    let c13_margin = if n == 1 {
        margin(ConditionId::C13)
    } else {
        f64::NAN
    };
    let rho_h = report
        .find(ConditionId::Mm)
        .map(|e| e.lhs)
        .unwrap_or(f64::NAN);
    match picard_solve_with(&shifted.spec, &engine.tab, &engine.res, &shifted.picard) {
        Ok(result) => SweepRow {
            a_f: engine.support.total,
            r: r_val,
            margin_c7: c7_margin,
            margin_c8: c8_margin,
            margin_c13: c13_margin,
            rho_h,
            iterations: Some(result.iterations),
            residual: result.residual_history.last().copied().unwrap_or(f64::NAN),
            boundary_defect: result.boundary_defect,
            status: if result.converged {
                "ok".into()
            } else {
                "no-convergence".into()
            },
        },
        Err(e) => SweepRow {
            a_f: engine.support.total,
            r: r_val,
            margin_c7: c7_margin,
            margin_c8: c8_margin,
            margin_c13: c13_margin,
            rho_h,
            iterations: None,
            residual: f64::NAN,
            boundary_defect: f64::NAN,
            status: short_status(&e.to_string()),
        },
    }
}

fn short_status(message: &str) -> String {
    let cleaned: String = message
        .chars()
        .map(|c| match c {
            ',' | '\n' => ';',
            c => c,
        })
        .collect();
    if cleaned.chars().count() > 60 {
        let head: String = cleaned.chars().take(57).collect();
        format!("{head}...")
    } else {
        cleaned
    }
}

/// `sweep`: move the last nonlocal point across the grid and tabulate the
/// certificates and solver outcomes per support value.
pub fn cmd_sweep(
    path: &Path,
    overrides: &Overrides,
    points: usize,
    csv_path: Option<&Path>,
) -> (i32, String) {
    let problem = match load(path, overrides) {
        Ok(p) => p,
        Err(e) => return config_failure(&e),
    };
    if points == 0 {
        return (
            exit_code::CONFIG,
            "config error at --points: must be at least 1\n".into(),
        );
    }
    let fixed_prefix_node = match problem.spec.map.variant() {
        NonlocalVariant::MultiPoint(pts) => {
            if pts.len() == 1 {
                0
            } else {
                match problem.grid.find_node(pts[pts.len() - 2].t) {
                    Ok(n) => n,
                    Err(e) => return (exit_code::CONFIG, format!("error: {e}\n")),
                }
            }
        }
        _ => {
            return (
                exit_code::CONFIG,
                "config error at nonlocal: sweep needs a multi-point condition with a movable last point\n"
                    .into(),
            )
        }
    };
    let n = problem.grid.n_steps();
    let span = n - fixed_prefix_node;
    if points > span {
        return (
            exit_code::CONFIG,
            format!(
                "config error at --points: {points} requested but only {span} grid nodes available after the fixed points\n"
            ),
        );
    }
    let nodes: Vec<usize> = (1..=points)
        .map(|k| fixed_prefix_node + k * span / points)
        .collect();
    let rows: Vec<SweepRow> = run_parallel(&nodes, |&node| sweep_one(&problem, node));
    let mut out = String::from(
        "a_F,r,margin_c7,margin_c8,margin_c13,rho_H,iterations,residual,boundary_defect,status\n",
    );
    for row in &rows {
        out.push_str(&row.serialize());
    }
    match csv_path {
        Some(p) => {
            if let Err(e) = std::fs::write(p, &out) {
                return (
                    exit_code::CONFIG,
                    format!("error: cannot write {}: {e}\n", p.display()),
                );
            }
            (exit_code::OK, String::new())
        }
        None => (exit_code::OK, out),
    }
}

/// Runs row jobs through a rayon pool sized by NLE_THREADS (when set);
/// output order follows input order regardless of completion order.
fn run_parallel<T, U, F>(items: &[T], job: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    use rayon::prelude::*;
    let threads = std::env::var("NLE_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&t| t >= 1);
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .expect("thread pool")
            .install(|| items.par_iter().map(&job).collect()),
        None => items.par_iter().map(&job).collect(),
    }
}

/// `oracle-compare`: solve by fixed point and by shooting, compare sup-node
/// distance against 10 h^2 (1 + sup|u|). Exit 0 within the bound, 5 beyond it,
/// 6 when the oracle refuses the nonlinearity.
pub fn cmd_oracle_compare(path: &Path, overrides: &Overrides) -> (i32, String) {
    let problem = match load(path, overrides) {
        Ok(p) => p,
        Err(e) => return config_failure(&e),
    };
    if !problem.spec.phi.is_causal() {
        return (
            exit_code::ORACLE_REFUSAL,
            "oracle refuses: deviated-argument nonlinearities are not causal; only the fixed-point solver handles them\n"
                .into(),
        );
    }
    let engine = match build_engine(&problem) {
        Ok(e) => e,
        Err(e) => return engine_failure(&e),
    };
    let picard = match picard_solve_with(&problem.spec, &engine.tab, &engine.res, &problem.picard) {
        Ok(r) if r.converged => r,
        Ok(_) => {
            return (
                exit_code::NO_CONVERGENCE,
                "fixed-point iteration did not converge; nothing to compare\n".into(),
            )
        }
        Err(e) => return (exit_code::NO_CONVERGENCE, format!("error: {e}\n")),
    };
    let newton_tol = problem.picard.tol.min(1e-10);
    let shot = match shooting_solve(&problem.spec, problem.grid, newton_tol) {
        Ok(t) => t,
        Err(Error::OracleRefusal { reason }) => {
            return (
                exit_code::ORACLE_REFUSAL,
                format!("oracle refuses: {reason}\n"),
            )
        }
        Err(e) => return (exit_code::CONFIG, format!("error: {e}\n")),
    };
    let deviation = picard
        .trajectory
        .sup_distance(&shot, problem.spec.norm_kind);
    let h = problem.grid.h();
    let scale = 1.0 + picard.trajectory.sup_norm(problem.spec.norm_kind);
    let bound = 10.0 * h * h * scale;
    let out = format!("deviation,{}\nbound,{}\n", fmt17(deviation), fmt17(bound));
    if deviation <= bound {
        (exit_code::OK, out)
    } else {
        (exit_code::ORACLE_DEVIATION, out)
    }
}

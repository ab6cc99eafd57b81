//! Acceptance suite: one test per criterion, each printing a pass line with
//! its measured quantities.
//!
//! Run with `cargo test -p nle-cli --test acceptance -- --nocapture` to see
//! the per-criterion lines.

use std::path::{Path, PathBuf};

use nle_cli::commands::{build_engine, cmd_check, cmd_solve, cmd_sweep, run_certificates};
use nle_cli::problem::{load, Overrides};
use nle_core::certificates::{
    check_c13, check_c7_c8, check_c9, check_system, kamke_decay, ConditionId, KamkeFunction,
    TubeRadius, Verdict,
};
use nle_core::evolution::{build_evolution, cocycle_defect, CoefficientFamily, TimeGrid};
use nle_core::expr::{Expr, ExprErrorKind};
use nle_core::nonlinearity::GrowthEnvelope;
use nle_core::nonlocal::{build_resolvent, BlockPartition, NonlocalMap, PointTerm};
use nle_core::numerics::{check_radius_trio, op_norm, Matrix, NormKind};
use nle_core::oracle::{expm, ivp_solve, shooting_solve};
use nle_core::solver::picard_solve_with;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Deterministic local generator for the randomized criteria.
struct Rng(u64);

impl Rng {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    fn index(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

const CURATED: [&str; 10] = [
    "zero_phi.toml",
    "closed_form.toml",
    "curated_sin.toml",
    "curated_integro.toml",
    "curated_nonconst_tube.toml",
    "curated_rotation.toml",
    "curated_system.toml",
    "curated_timevar.toml",
    "curated_quadrature.toml",
    "curated_growing.toml",
];

#[test]
fn criterion_01_evolution_accuracy() {
    let matrices = vec![
        Matrix::scalar(-1.0),
        Matrix::diagonal(&[-5.0, -1.0]),
        Matrix::from_rows(&[vec![0.0, 5.0], vec![-5.0, 0.0]]),
        Matrix::from_rows(&[vec![-1.0, 2.0], vec![-2.0, -1.0]]),
        Matrix::from_rows(&[vec![-0.5, 1.0], vec![0.0, -0.25]]),
        Matrix::from_rows(&[
            vec![-1.0, 0.5, 0.0],
            vec![0.0, -2.0, 0.5],
            vec![0.3, 0.0, -0.5],
        ]),
    ];
    let mut worst = 0.0_f64;
    for a in &matrices {
        assert!(op_norm(a, NormKind::LInf).unwrap() <= 5.0);
        let fam = CoefficientFamily::constant(a.clone(), 1.0);
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let tab = build_evolution(&fam, grid, NormKind::LInf).unwrap();
        for (i, t) in grid.nodes().enumerate() {
            let exact = expm(&a.scaled(t));
            let err = op_norm(&tab.u(i).sub(&exact), NormKind::LInf).unwrap();
            worst = worst.max(err);
        }
    }
    assert!(worst <= 1e-7, "worst propagator error {worst}");

    // Observed convergence order across three grids.
    let a = Matrix::from_rows(&[vec![0.0, 2.0], vec![-2.0, 0.0]]);
    let fam = CoefficientFamily::constant(a.clone(), 1.0);
    let mut errs = Vec::new();
    for n in [50usize, 100, 200] {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let tab = build_evolution(&fam, grid, NormKind::LInf).unwrap();
        let mut e = 0.0_f64;
        for (i, t) in grid.nodes().enumerate() {
            let exact = expm(&a.scaled(t));
            e = e.max(op_norm(&tab.u(i).sub(&exact), NormKind::LInf).unwrap());
        }
        errs.push(e);
    }
    let s1 = (errs[0] / errs[1]).log2();
    let s2 = (errs[1] / errs[2]).log2();
    assert!((s1 - 4.0).abs() <= 0.3, "order slope {s1}");
    assert!((s2 - 4.0).abs() <= 0.3, "order slope {s2}");
    println!(
        "criterion 01 evolution accuracy: PASS (max error {worst:.3e}, slopes {s1:.2}, {s2:.2})"
    );
}

#[test]
fn criterion_02_cocycle_exactness() {
    let mut rng = Rng(0xc0cc_1e5e);
    let mut worst_ratio = 0.0_f64;
    for case in 0..20 {
        let d = 1 + rng.index(4);
        let mut coeffs = Vec::new();
        for _ in 0..3 {
            coeffs.push(Matrix::from_fn(d, d, |_, _| rng.range(-0.8, 0.8)));
        }
        let (a0, a1, a2) = (coeffs[0].clone(), coeffs[1].clone(), coeffs[2].clone());
        let fam = CoefficientFamily::from_fn(d, 1.0, move |t| {
            a0.add(&a1.scaled((2.0 * t).sin())).add(&a2.scaled(t))
        });
        // n <= 64 exercises every grid triple.
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let tab = build_evolution(&fam, grid, NormKind::LInf).unwrap();
        let defect = cocycle_defect(&tab).unwrap();
        let bound = 1e-10 * tab.m_bound() * tab.m_bound();
        assert!(
            defect <= bound,
            "case {case}: defect {defect} exceeds {bound}"
        );
        worst_ratio = worst_ratio.max(defect / bound);
    }
    println!("criterion 02 cocycle exactness: PASS (worst defect at {worst_ratio:.2e} of bound)");
}

#[test]
fn criterion_03_resolvent_identity() {
    let mut rng = Rng(0x00b1_f01d);
    let mut worst = 0.0_f64;
    for case in 0..50 {
        let d = 1 + rng.index(2);
        let a_entry = rng.range(-1.0, 0.3);
        let fam = CoefficientFamily::constant(
            Matrix::from_fn(d, d, |i, j| if i == j { a_entry } else { 0.0 }),
            1.0,
        );
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let tab = build_evolution(&fam, grid, NormKind::LInf).unwrap();
        let n_points = 1 + rng.index(3);
        let mut raw_points = Vec::new();
        let mut node = 0usize;
        for _ in 0..n_points {
            node = (node + 1 + rng.index(20)).min(64);
            raw_points.push((
                grid.node(node),
                Matrix::from_fn(d, d, |_, _| rng.range(-1.0, 1.0)),
            ));
        }
        // Scale coefficients so the sufficient check M sum|C_k| <= 0.9 holds.
        let sum: f64 = raw_points
            .iter()
            .map(|(_, c)| op_norm(c, NormKind::LInf).unwrap())
            .sum();
        let scale = 0.9 * rng.range(0.3, 1.0) / (tab.m_bound() * sum.max(1e-9));
        let points: Vec<PointTerm> = raw_points
            .into_iter()
            .map(|(t, c)| PointTerm {
                t,
                coeff: c.scaled(scale),
            })
            .collect();
        let map = NonlocalMap::multi_point(points, BlockPartition::scalar(d)).unwrap();
        assert!(tab.m_bound() * map.coeff_norm_sum(NormKind::LInf).unwrap() <= 0.9 + 1e-12);
        let res = build_resolvent(&map, &tab)
            .unwrap_or_else(|e| panic!("case {case}: resolvent failed: {e}"));
        let eye = Matrix::identity(d);
        let defect = op_norm(
            &res.matrix.mul(&eye.sub(&res.f_of_t0)).sub(&eye),
            NormKind::LInf,
        )
        .unwrap();
        assert!(defect <= 1e-10, "case {case}: defect {defect}");
        worst = worst.max(defect);
    }
    println!("criterion 03 resolvent identity: PASS (worst defect {worst:.3e} over 50 maps)");
}

#[test]
fn criterion_04_spectral_radius_trio() {
    let mut rng = Rng(0x7210_5eed);
    let mut checked = 0usize;
    for case in 0..500 {
        let d = 1 + case % 5;
        let h = Matrix::from_fn(d, d, |_, _| rng.range(0.0, 0.6));
        let trio = check_radius_trio(&h, 32768).unwrap();
        if (trio.rho - 1.0).abs() > 1e-3 {
            let expect = trio.rho < 1.0;
            assert_eq!(
                trio.powers_vanish, expect,
                "case {case}: powers flag disagrees at rho = {}",
                trio.rho
            );
            assert_eq!(
                trio.inverse_nonneg, expect,
                "case {case}: inverse flag disagrees at rho = {}",
                trio.rho
            );
            checked += 1;
        }
    }
    println!(
        "criterion 04 spectral-radius trio: PASS ({checked}/500 samples away from 1, zero disagreements)"
    );
}

#[test]
fn criterion_05_closed_form_nonlocal_fixture() {
    let problem = load(&fixture("closed_form.toml"), &Overrides::default()).unwrap();
    assert_eq!(problem.grid.n_steps(), 400);
    let engine = build_engine(&problem).unwrap();
    let result =
        picard_solve_with(&problem.spec, &engine.tab, &engine.res, &problem.picard).unwrap();
    assert!(result.converged);
    // Pre-built oracle: affine fixed point in the single unknown u0.
    let e1 = (-1.0_f64).exp();
    let u0 = 0.5 * (1.0 - e1) / (1.0 - 0.5 * e1);
    let mut sup_err = 0.0_f64;
    for (i, t) in problem.grid.nodes().enumerate() {
        let expect = (-t).exp() * u0 + 1.0 - (-t).exp();
        sup_err = sup_err.max((result.trajectory.value(i)[0] - expect).abs());
    }
    assert!(sup_err <= 1e-5, "sup error {sup_err}");
    assert!(
        result.boundary_defect <= 1e-8,
        "boundary defect {}",
        result.boundary_defect
    );
    println!(
        "criterion 05 closed-form fixture: PASS (sup error {sup_err:.3e}, boundary defect {:.3e})",
        result.boundary_defect
    );
}

#[test]
fn criterion_06_oracle_agreement_on_curated_suite() {
    let mut worst_ratio = 0.0_f64;
    for name in CURATED {
        let problem = load(&fixture(name), &Overrides::default()).unwrap();
        let engine = build_engine(&problem).unwrap();
        let report = run_certificates(&problem, &engine).unwrap();
        assert!(report.all_pass(), "{name}: certificates must pass");
        assert!(
            problem.spec.phi.is_causal(),
            "{name}: curated problems are causal"
        );
        let picard =
            picard_solve_with(&problem.spec, &engine.tab, &engine.res, &problem.picard).unwrap();
        assert!(picard.converged, "{name}: fixed point must converge");
        let shot = shooting_solve(&problem.spec, problem.grid, 1e-12).unwrap();
        let dist = picard
            .trajectory
            .sup_distance(&shot, problem.spec.norm_kind);
        let h = problem.grid.h();
        let bound = 10.0 * h * h * (1.0 + picard.trajectory.sup_norm(problem.spec.norm_kind));
        assert!(dist <= bound, "{name}: distance {dist} exceeds {bound}");
        worst_ratio = worst_ratio.max(dist / bound);
    }
    println!(
        "criterion 06 oracle agreement: PASS (10 problems, worst at {worst_ratio:.2e} of bound)"
    );
}

#[test]
fn criterion_07_tube_localization_echo() {
    let mut violations = 0usize;
    for name in CURATED {
        let problem = load(&fixture(name), &Overrides::default()).unwrap();
        let engine = build_engine(&problem).unwrap();
        let report = run_certificates(&problem, &engine).unwrap();
        assert!(report.all_pass(), "{name}: certificates must pass");
        let picard =
            picard_solve_with(&problem.spec, &engine.tab, &engine.res, &problem.picard).unwrap();
        assert!(picard.converged, "{name}");
        assert!(
            picard.boundary_defect <= 10.0 * problem.picard.tol,
            "{name}: boundary defect {}",
            picard.boundary_defect
        );
        if !picard.tube_ok {
            violations += 1;
            eprintln!("{name}: trajectory leaves the tube");
        }
    }
    assert_eq!(violations, 0);
    println!(
        "criterion 07 tube localization echo: PASS (10/10 certified solutions inside the tube)"
    );
}

#[test]
fn criterion_08_certificate_arithmetic() {
    let grid = TimeGrid::new(1.0, 100).unwrap();
    // Worked pair for the radius floor and the log integral.
    let env = GrowthEnvelope::scalar(|_| 1.0, |s| s, |_| 0.0);
    let tube = TubeRadius::constant(2.0, 1);
    let (c7, c8, r) = check_c7_c8(&env, &tube, 0, 1.0, 1.0, 0.25, grid).unwrap();
    assert!((r - 0.5).abs() <= 1e-12, "r = {r}");
    assert!((c7.margin - 1.5).abs() <= 1e-12);
    let expect_margin = 4.0_f64.ln() - 1.0;
    assert!(
        (c8.margin - expect_margin).abs() <= 1e-12,
        "c8 margin {} vs ln4 - 1",
        c8.margin
    );
    // Boundary case: delta = 4 pushes r to exactly min R.
    let env4 = GrowthEnvelope::scalar(|_| 4.0, |s| s, |_| 0.0);
    let (c7b, _, rb) = check_c7_c8(&env4, &tube, 0, 1.0, 1.0, 0.25, grid).unwrap();
    assert!((rb - 2.0).abs() <= 1e-12);
    assert!(c7b.margin.abs() <= 1e-12);
    assert_ne!(c7b.verdict, Verdict::Pass);
    // Constant-radius pair.
    let env_c9a = GrowthEnvelope::scalar(|_| 0.4, |s| s, |_| 0.0);
    let pass = check_c9(&env_c9a, 1.0, 1.0, 1.0, 0.5, grid).unwrap();
    assert!((pass.lhs - 1.0).abs() <= 1e-12);
    assert!((pass.rhs - 0.6).abs() <= 1e-12);
    assert_eq!(pass.verdict, Verdict::Pass);
    let env_c9b = GrowthEnvelope::scalar(|_| 1.0, |s| s, |_| 0.0);
    let fail = check_c9(&env_c9b, 1.0, 1.0, 1.0, 0.5, grid).unwrap();
    assert!((fail.rhs - 1.5).abs() <= 1e-12);
    assert_eq!(fail.verdict, Verdict::Fail);
    // Compactness-coefficient pair.
    let g_pass: nle_core::nonlinearity::TimeFn = std::sync::Arc::new(|_| 0.1);
    let e = check_c13(&g_pass, 1.0, 1.0, 1.0, grid).unwrap();
    assert!((e.lhs - 0.4).abs() <= 1e-12);
    assert_eq!(e.verdict, Verdict::Pass);
    let g_fail: nle_core::nonlinearity::TimeFn = std::sync::Arc::new(|_| 0.3);
    let e = check_c13(&g_fail, 1.0, 1.0, 1.0, grid).unwrap();
    assert!((e.lhs - 1.2).abs() <= 1e-12);
    assert_eq!(e.verdict, Verdict::Fail);
    // Two-component radius floors.
    let mk = || {
        let mut env = GrowthEnvelope::scalar(|_| 1.0, |s| s, |_| 0.0);
        env.gamma_row.push(std::sync::Arc::new(|_| 0.0));
        env
    };
    let envs = vec![mk(), mk()];
    let tubes = TubeRadius::constant(1.0, 2);
    let g_norms = Matrix::from_rows(&[vec![0.5, 0.2], vec![0.1, 0.5]]);
    let (_, radii) = check_system(&envs, &tubes, &[1.0, 1.0], &g_norms, &[0.2, 0.4], grid).unwrap();
    assert!((radii[0] - 0.18).abs() <= 1e-12, "r1 = {}", radii[0]);
    assert!((radii[1] - 0.22).abs() <= 1e-12, "r2 = {}", radii[1]);
    println!("criterion 08 certificate arithmetic: PASS (all worked values within 1e-12)");
}

#[test]
fn criterion_09_kamke_decay() {
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let tube = TubeRadius::constant(1.0, 1);
    // Headline quantity (2 M^2 |BF| + 2 M) |gamma| L1 = 0.4 with M=1, |BF|=10.
    let bf = 10.0;
    let gamma_low = 0.4 / (2.0 * bf + 2.0);
    let w = KamkeFunction::linear(gamma_low);
    let out = kamke_decay(&w, &tube, 1.0, bf, 1.0, grid, 100).unwrap();
    assert!(
        out.converged_to_zero && out.sup_history.len() <= 100,
        "final sup {} after {} iterations",
        out.final_sup,
        out.sup_history.len()
    );
    let decayed_in = out.sup_history.len();
    // Same construction at quantity 1.2: the comparison operator is expansive
    // and the iterate settles above zero on the support.
    let gamma_high = 1.2 / (2.0 * bf + 2.0);
    let w = KamkeFunction::linear(gamma_high);
    let out = kamke_decay(&w, &tube, 1.0, bf, 1.0, grid, 100).unwrap();
    assert!(!out.converged_to_zero);
    let a_f_node = grid.find_node(1.0).unwrap();
    let sup_on_support = out.final_phi[..=a_f_node]
        .iter()
        .fold(0.0_f64, |m, &v| m.max(v));
    assert!(
        sup_on_support >= 0.1,
        "sup over the support {sup_on_support}"
    );
    println!(
        "criterion 09 Kamke decay: PASS (decayed below 1e-10 in {decayed_in} iterations; supercritical sup {sup_on_support:.3})"
    );
}

#[test]
fn criterion_10_support_sweep_monotonicity() {
    let dir = std::env::temp_dir().join("nle_acceptance_sweep");
    std::fs::create_dir_all(&dir).unwrap();
    let csv_path = dir.join("sweep.csv");
    let (code, _) = cmd_sweep(
        &fixture("sweep_scalar.toml"),
        &Overrides::default(),
        20,
        Some(&csv_path),
    );
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut r_prev = f64::NEG_INFINITY;
    let mut c13_prev = f64::INFINITY;
    let mut rows = 0usize;
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 10, "row: {line}");
        assert_eq!(cols[9], "ok");
        let r: f64 = cols[1].parse().unwrap();
        let c13: f64 = cols[4].parse().unwrap();
        assert!(
            r >= r_prev - 1e-12,
            "r not nondecreasing: {r} after {r_prev}"
        );
        assert!(
            c13 <= c13_prev + 1e-12,
            "c13 margin not nonincreasing: {c13} after {c13_prev}"
        );
        r_prev = r;
        c13_prev = c13;
        rows += 1;
    }
    assert_eq!(rows, 20);
    println!("criterion 10 sweep monotonicity: PASS (20 rows, exact within 1e-12)");
}

#[test]
fn criterion_11_classical_limit_collapse() {
    let path = fixture("classical_limit.toml");
    let (code, output) = cmd_check(&path, &Overrides::default());
    assert_eq!(code, 0, "check output:\n{output}");
    let problem = load(&path, &Overrides::default()).unwrap();
    let engine = build_engine(&problem).unwrap();
    let report = run_certificates(&problem, &engine).unwrap();
    assert!(report.all_pass());
    let c7 = report.find(ConditionId::C7).unwrap();
    assert_eq!(c7.lhs, 0.0, "r must be exactly 0 with F = 0");
    let c13 = report.find(ConditionId::C13).unwrap();
    assert_eq!(c13.lhs, 0.0);
    let mm = report.find(ConditionId::Mm).unwrap();
    assert_eq!(mm.lhs, 0.0, "comparison matrix must vanish");
    // The solver collapses to the classical initial-value problem with u0 = 0.
    let picard =
        picard_solve_with(&problem.spec, &engine.tab, &engine.res, &problem.picard).unwrap();
    assert!(picard.converged);
    let reference =
        ivp_solve(&problem.spec.coeff, &problem.spec.phi, &[0.0], problem.grid).unwrap();
    let dist = picard
        .trajectory
        .sup_distance(&reference, problem.spec.norm_kind);
    let h = problem.grid.h();
    assert!(
        dist <= 10.0 * h * h,
        "distance to classical solution {dist}"
    );
    println!(
        "criterion 11 classical-limit collapse: PASS (r = 0, rho(H) = 0, solver-vs-IVP distance {dist:.3e})"
    );
}

#[test]
fn criterion_12_dsl_suite_and_determinism() {
    let vars: [&str; 3] = ["t", "s", "r"];
    // 20 value cases: (input, bindings for (t, s, r), expected).
    let value_cases: [(&str, [f64; 3], f64); 20] = [
        ("1+2*3", [0.0; 3], 7.0),
        ("(1+2)*3", [0.0; 3], 9.0),
        ("2^3^2", [0.0; 3], 512.0),
        ("(2^3)^2", [0.0; 3], 64.0),
        ("-2^2", [0.0; 3], -4.0),
        ("(-2)^2", [0.0; 3], 4.0),
        ("2^-1", [0.0; 3], 0.5),
        ("10-4-3", [0.0; 3], 3.0),
        ("10-(4-3)", [0.0; 3], 9.0),
        ("12/4/3", [0.0; 3], 1.0),
        ("-t*s", [2.0, 3.0, 0.0], -6.0),
        ("t-s-r", [10.0, 4.0, 3.0], 3.0),
        ("min(t,max(s,r))", [5.0, 1.0, 2.0], 2.0),
        ("abs(-3.5)", [0.0; 3], 3.5),
        ("sqrt(16)", [0.0; 3], 4.0),
        ("2e3+1.5e-2", [0.0; 3], 2000.015),
        ("tanh(0)", [0.0; 3], 0.0),
        ("log(exp(2))", [0.0; 3], 2.0),
        ("sin(t)^2+cos(t)^2", [0.7, 0.0, 0.0], 1.0),
        ("  1 +\t2 ", [0.0; 3], 3.0),
    ];
    for (text, bindings, expect) in &value_cases {
        let e = Expr::parse(text, &vars).unwrap();
        let got = e.eval(bindings).unwrap();
        assert!(
            (got - expect).abs() <= 1e-12 * expect.abs().max(1.0),
            "{text}: {got} vs {expect}"
        );
        // The canonical print must re-parse to the same AST, bit for bit.
        let printed = e.to_string();
        let reparsed = Expr::parse(&printed, &vars).unwrap();
        assert!(e.structurally_eq(&reparsed), "{text} -> {printed}");
    }
    // 10 error cases: (input, expected offset, expected kind).
    let error_cases: [(&str, usize, ExprErrorKind); 10] = [
        ("2*", 2, ExprErrorKind::UnexpectedEnd),
        ("3 + * 4", 4, ExprErrorKind::UnexpectedToken),
        ("(1+2", 4, ExprErrorKind::UnexpectedEnd),
        ("1+2)", 3, ExprErrorKind::TrailingInput),
        ("2*q", 2, ExprErrorKind::UnknownVariable("q".into())),
        ("1+foo(2)", 2, ExprErrorKind::UnknownFunction("foo".into())),
        (
            "min(1)",
            0,
            ExprErrorKind::ArityMismatch {
                name: "min".into(),
                expected: 2,
                found: 1,
            },
        ),
        (
            "sin(1,2)",
            0,
            ExprErrorKind::ArityMismatch {
                name: "sin".into(),
                expected: 1,
                found: 2,
            },
        ),
        ("4 # 2", 2, ExprErrorKind::UnexpectedChar('#')),
        ("t ~ s", 2, ExprErrorKind::UnexpectedChar('~')),
    ];
    for (text, offset, kind) in &error_cases {
        let e1 = Expr::parse(text, &vars).unwrap_err();
        let e2 = Expr::parse(text, &vars).unwrap_err();
        assert_eq!(e1, e2, "error must be deterministic for {text}");
        assert_eq!(&e1.kind, kind, "{text}");
        assert_eq!(e1.offset, *offset, "{text}: offset {}", e1.offset);
    }

    // Determinism of command output: identical file, byte-identical CSV.
    let dir = std::env::temp_dir().join("nle_acceptance_determinism");
    std::fs::create_dir_all(&dir).unwrap();
    let csv_a = dir.join("a.csv");
    let csv_b = dir.join("b.csv");
    let (code_a, out_a) = cmd_solve(
        &fixture("closed_form.toml"),
        &Overrides::default(),
        Some(&csv_a),
    );
    let (code_b, out_b) = cmd_solve(
        &fixture("closed_form.toml"),
        &Overrides::default(),
        Some(&csv_b),
    );
    assert_eq!(code_a, 0);
    assert_eq!(code_a, code_b);
    assert_eq!(out_a, out_b);
    assert_eq!(
        std::fs::read(&csv_a).unwrap(),
        std::fs::read(&csv_b).unwrap(),
        "solve CSV must be byte-identical"
    );
    let sweep_a = dir.join("sa.csv");
    let sweep_b = dir.join("sb.csv");
    let (sc_a, _) = cmd_sweep(
        &fixture("sweep_scalar.toml"),
        &Overrides::default(),
        12,
        Some(&sweep_a),
    );
    let (sc_b, _) = cmd_sweep(
        &fixture("sweep_scalar.toml"),
        &Overrides::default(),
        12,
        Some(&sweep_b),
    );
    assert_eq!(sc_a, 0);
    assert_eq!(sc_a, sc_b);
    assert_eq!(
        std::fs::read(&sweep_a).unwrap(),
        std::fs::read(&sweep_b).unwrap(),
        "sweep CSV must be byte-identical"
    );
    println!("criterion 12 DSL suite and determinism: PASS (30 parser cases, byte-identical CSV)");
}

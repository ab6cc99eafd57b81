//! Independent reference solvers: classical initial-value integration,
//! shooting for the nonlocal condition, and a matrix exponential.
//!
//! These deliberately duplicate their quadrature and stepping logic rather
//! than reusing the evolution/solver code paths, so that agreement between the
//! two routes is evidence rather than tautology.

use crate::error::{Error, Result};
use crate::evolution::{CoefficientFamily, TimeGrid};
use crate::nonlinearity::Nonlinearity;
use crate::numerics::{inv, op_norm, vec_norm, Matrix, NormKind};
use crate::solver::{ProblemSpec, Trajectory};

const BLOW_UP: f64 = 1e12;

/// Classical fourth-order integration of u' = A(t)u + Phi(u)(t) from u(0) = u0.
///
/// Only causal nonlinearities are accepted (superposition and
/// integro-Volterra); the Volterra term is accumulated by trapezoid over the
/// already-computed history plus the partial current interval.
pub fn ivp_solve(
    coeff: &CoefficientFamily,
    phi: &Nonlinearity,
    u0: &[f64],
    grid: TimeGrid,
) -> Result<Trajectory> {
    if !phi.is_causal() {
        return Err(Error::OracleRefusal {
            reason: "deviated-argument nonlinearities are not causal; only the fixed-point solver handles them"
                .into(),
        });
    }
    let d = coeff.dim();
    if u0.len() != d {
        return Err(Error::Dimension {
            context: format!("initial value has {} entries for dimension {d}", u0.len()),
        });
    }
    let n = grid.n_steps();
    let h = grid.h();
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    values.push(u0.to_vec());

    // Right-hand side at stage time tau with stage state y, given the node
    // history values[0..=i] (node i is the step start).
    let rhs = |tau: f64,
               y: &[f64],
               hist: &[Vec<f64>],
               i: usize,
               coeff: &CoefficientFamily|
     -> Result<Vec<f64>> {
        let a = coeff.eval_at(tau)?;
        let mut out = a.matvec(y);
        match phi {
            Nonlinearity::Superposition { f } => {
                let fv = f(tau, y).map_err(|e| Error::NonlinearityEval {
                    t: tau,
                    message: e.message,
                })?;
                for (o, v) in out.iter_mut().zip(&fv) {
                    *o += v;
                }
            }
            Nonlinearity::IntegroVolterra { f, kernel } => {
                let fv = f(tau, y).map_err(|e| Error::NonlinearityEval {
                    t: tau,
                    message: e.message,
                })?;
                let mut integral = vec![0.0_f64; y.len()];
                // Trapezoid over completed nodes [0, t_i] ...
                if i > 0 {
                    for j in 0..=i {
                        let w = if j == 0 || j == i { 0.5 * h } else { h };
                        let k = kernel(tau, grid.node(j)).map_err(|e| Error::NonlinearityEval {
                            t: tau,
                            message: e.message,
                        })?;
                        for (slot, v) in integral.iter_mut().zip(&hist[j]) {
                            *slot += w * k * v;
                        }
                    }
                }
                // ... plus the partial interval [t_i, tau] with the stage state.
                let dt = tau - grid.node(i);
                if dt > 0.0 {
                    let k_start =
                        kernel(tau, grid.node(i)).map_err(|e| Error::NonlinearityEval {
                            t: tau,
                            message: e.message,
                        })?;
                    let k_end = kernel(tau, tau).map_err(|e| Error::NonlinearityEval {
                        t: tau,
                        message: e.message,
                    })?;
                    for (slot, (ui, yi)) in integral.iter_mut().zip(hist[i].iter().zip(y)) {
                        *slot += 0.5 * dt * (k_start * ui + k_end * yi);
                    }
                }
                for (o, (fv, iv)) in out.iter_mut().zip(fv.iter().zip(&integral)) {
                    *o += fv + iv;
                }
            }
            Nonlinearity::DeviatedArgument { .. } => unreachable!("checked causal above"),
        }
        Ok(out)
    };

    for i in 0..n {
        let t = grid.node(i);
        let y = values[i].clone();
        let k1 = rhs(t, &y, &values, i, coeff)?;
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(u, k)| u + 0.5 * h * k).collect();
        let k2 = rhs(t + 0.5 * h, &y2, &values, i, coeff)?;
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(u, k)| u + 0.5 * h * k).collect();
        let k3 = rhs(t + 0.5 * h, &y3, &values, i, coeff)?;
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(u, k)| u + h * k).collect();
        let k4 = rhs(t + h, &y4, &values, i, coeff)?;
        let next: Vec<f64> = (0..d)
            .map(|c| y[c] + h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]))
            .collect();
        if next.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP) {
            return Err(Error::IvpBlowUp {
                t: grid.node(i + 1),
            });
        }
        values.push(next);
    }
    Trajectory::from_values(grid, values)
}

/// Finds u0 with u0 = F(ivp(u0)) by damped Newton with a finite-difference
/// Jacobian (absolute step 1e-6), then returns the trajectory at the root.
pub fn shooting_solve(spec: &ProblemSpec, grid: TimeGrid, newton_tol: f64) -> Result<Trajectory> {
    const FD_STEP: f64 = 1e-6;
    const MAX_STEPS: usize = 50;
    let d = spec.partition.dim();
    let g_of = |u0: &[f64]| -> Result<(Vec<f64>, Trajectory)> {
        let traj = ivp_solve(&spec.coeff, &spec.phi, u0, grid)?;
        let fu = spec.map.apply(&traj);
        let g: Vec<f64> = u0.iter().zip(&fu).map(|(a, b)| a - b).collect();
        Ok((g, traj))
    };
    let mut u0 = vec![0.0_f64; d];
    let (mut g, mut traj) = g_of(&u0)?;
    let mut g_norm = vec_norm(&g, NormKind::LInf);
    for _ in 0..MAX_STEPS {
        if g_norm <= newton_tol {
            return Ok(traj);
        }
        // Finite-difference Jacobian, one IVP solve per column.
        let mut jac = Matrix::zeros(d, d);
        for j in 0..d {
            let mut pert = u0.clone();
            pert[j] += FD_STEP;
            let (g_pert, _) = g_of(&pert)?;
            for i in 0..d {
                jac.set(i, j, (g_pert[i] - g[i]) / FD_STEP);
            }
        }
        let jac_inv = match inv(&jac) {
            Ok(m) => m,
            Err(_) => {
                return Err(Error::NewtonStalled {
                    residual: g_norm,
                    steps: MAX_STEPS,
                })
            }
        };
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = jac_inv.matvec(&neg_g);
        // Backtracking: halve until the residual decreases.
        let mut lambda = 1.0_f64;
        let mut accepted = false;
        while lambda >= 1.0 / 64.0 {
            let candidate: Vec<f64> = u0.iter().zip(&step).map(|(x, s)| x + lambda * s).collect();
            match g_of(&candidate) {
                Ok((g_new, traj_new)) => {
                    let n_new = vec_norm(&g_new, NormKind::LInf);
                    if n_new < g_norm {
                        u0 = candidate;
                        g = g_new;
                        traj = traj_new;
                        g_norm = n_new;
                        accepted = true;
                        break;
                    }
                }
                Err(Error::IvpBlowUp { .. }) => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonStalled {
                residual: g_norm,
                steps: MAX_STEPS,
            });
        }
    }
    if g_norm <= newton_tol {
        Ok(traj)
    } else {
        Err(Error::NewtonStalled {
            residual: g_norm,
            steps: MAX_STEPS,
        })
    }
}

/// Matrix exponential by scaling and squaring around a degree-6 Taylor core.
/// The argument is scaled until its norm is at most 1/32, which keeps the
/// total error within 1e-10 for op_norm(A) <= 10.
pub fn expm(a: &Matrix) -> Matrix {
    assert!(a.is_square(), "expm needs a square matrix");
    let norm = op_norm(a, NormKind::LInf).expect("linf norm is total");
    let mut squarings = 0u32;
    let mut scale = 1.0_f64;
    while norm * scale > 1.0 / 32.0 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled = a.scaled(scale);
    // Degree-6 Taylor core by Horner evaluation.
    let n = a.rows();
    let mut core = Matrix::identity(n);
    for k in (1..=6u32).rev() {
        core = Matrix::identity(n).add(&scaled.mul(&core).scaled(1.0 / k as f64));
    }
    let mut result = core;
    for _ in 0..squarings {
        result = result.mul(&result);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::TubeRadius;
    use crate::nonlinearity::GrowthEnvelope;
    use crate::nonlocal::{BlockPartition, NonlocalMap, PointTerm};

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn ivp_constant_state_for_zero_field() {
        let fam = CoefficientFamily::zero(1, 1.0);
        let phi = Nonlinearity::zero(1);
        let traj = ivp_solve(&fam, &phi, &[1.0], grid(50)).unwrap();
        for i in 0..=50 {
            assert_eq!(traj.value(i)[0], 1.0);
        }
    }

    #[test]
    fn ivp_exponential_decay() {
        let fam = CoefficientFamily::constant(Matrix::scalar(-1.0), 1.0);
        let phi = Nonlinearity::zero(1);
        let traj = ivp_solve(&fam, &phi, &[1.0], grid(100)).unwrap();
        for (i, t) in grid(100).nodes().enumerate() {
            assert!((traj.value(i)[0] - (-t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn ivp_logistic_closed_form() {
        // u' = u(1-u), u(0) = 1/2: u(t) = 1/(1+e^{-t}).
        let fam = CoefficientFamily::zero(1, 1.0);
        let phi = Nonlinearity::superposition(|_, x| vec![x[0] * (1.0 - x[0])]);
        let traj = ivp_solve(&fam, &phi, &[0.5], grid(100)).unwrap();
        for (i, t) in grid(100).nodes().enumerate() {
            let expect = 1.0 / (1.0 + (-t).exp());
            assert!((traj.value(i)[0] - expect).abs() < 1e-6, "node {i}");
        }
    }

    #[test]
    fn ivp_order_four_on_smooth_problem() {
        let fam = CoefficientFamily::constant(Matrix::scalar(-1.0), 1.0);
        let phi = Nonlinearity::superposition(|t: f64, _: &[f64]| vec![t.sin()]);
        // Closed form: u' = -u + sin t, u(0)=1:
        // u = (1 + 1/2) e^{-t} + (sin t - cos t)/2.
        let exact = |t: f64| 1.5 * (-t).exp() + 0.5 * (t.sin() - t.cos());
        let mut errs = Vec::new();
        for n in [50usize, 100, 200] {
            let traj = ivp_solve(&fam, &phi, &[1.0], grid(n)).unwrap();
            let mut worst = 0.0_f64;
            for (i, t) in grid(n).nodes().enumerate() {
                worst = worst.max((traj.value(i)[0] - exact(t)).abs());
            }
            errs.push(worst);
        }
        let s1 = (errs[0] / errs[1]).log2();
        let s2 = (errs[1] / errs[2]).log2();
        assert!((s1 - 4.0).abs() < 0.3, "slope {s1}");
        assert!((s2 - 4.0).abs() < 0.3, "slope {s2}");
    }

    #[test]
    fn ivp_refuses_deviated_argument() {
        let fam = CoefficientFamily::zero(1, 1.0);
        let phi = Nonlinearity::deviated_argument(|_, x| x.to_vec(), |t| t);
        assert!(matches!(
            ivp_solve(&fam, &phi, &[0.0], grid(10)),
            Err(Error::OracleRefusal { .. })
        ));
    }

    #[test]
    fn ivp_detects_blow_up() {
        let fam = CoefficientFamily::zero(1, 1.0);
        let phi = Nonlinearity::superposition(|_, x: &[f64]| vec![x[0] * x[0]]);
        // u' = u^2 from u(0) = 2 blows up at t = 1/2.
        assert!(matches!(
            ivp_solve(&fam, &phi, &[2.0], grid(100)),
            Err(Error::IvpBlowUp { .. })
        ));
    }

    fn closed_form_spec() -> ProblemSpec {
        let partition = BlockPartition::scalar(1);
        ProblemSpec {
            coeff: CoefficientFamily::constant(Matrix::scalar(-1.0), 1.0),
            phi: Nonlinearity::superposition(|_, _| vec![1.0]),
            map: NonlocalMap::multi_point(
                vec![PointTerm {
                    t: 1.0,
                    coeff: Matrix::scalar(0.5),
                }],
                partition.clone(),
            )
            .unwrap(),
            envelopes: vec![GrowthEnvelope::scalar(|_| 1.0, |s| s + 1.0, |_| 0.0)],
            tube: TubeRadius::constant(2.0, 1),
            norm_kind: NormKind::LInf,
            partition,
        }
    }

    #[test]
    fn shooting_zero_problem_returns_zero() {
        let partition = BlockPartition::scalar(1);
        let spec = ProblemSpec {
            coeff: CoefficientFamily::zero(1, 1.0),
            phi: Nonlinearity::zero(1),
            map: NonlocalMap::zero(partition.clone()),
            envelopes: vec![GrowthEnvelope::scalar(|_| 0.0, |s| s + 1.0, |_| 0.0)],
            tube: TubeRadius::constant(1.0, 1),
            norm_kind: NormKind::LInf,
            partition,
        };
        let traj = shooting_solve(&spec, grid(50), 1e-12).unwrap();
        assert_eq!(traj.sup_norm(NormKind::LInf), 0.0);
    }

    #[test]
    fn shooting_matches_affine_closed_form() {
        let spec = closed_form_spec();
        let traj = shooting_solve(&spec, grid(100), 1e-12).unwrap();
        let e1 = (-1.0_f64).exp();
        let u0 = 0.5 * (1.0 - e1) / (1.0 - 0.5 * e1);
        for (i, t) in grid(100).nodes().enumerate() {
            let expect = (-t).exp() * u0 + 1.0 - (-t).exp();
            assert!(
                (traj.value(i)[0] - expect).abs() < 1e-8,
                "node {i}: {} vs {expect}",
                traj.value(i)[0]
            );
        }
    }

    #[test]
    fn shooting_solution_has_small_fixed_point_residual() {
        // The oracle trajectory, pushed through the discrete mild-solution
        // operator, stays within the quadrature floor.
        let spec = closed_form_spec();
        let g = grid(100);
        let shot = shooting_solve(&spec, g, 1e-12).unwrap();
        let tab = crate::evolution::build_evolution(&spec.coeff, g, spec.norm_kind).unwrap();
        let res = crate::nonlocal::build_resolvent(&spec.map, &tab).unwrap();
        let r = crate::solver::residual(&spec, &tab, &res, &shot).unwrap();
        let h = g.h();
        assert!(r <= 5.0 * h * h, "residual {r} vs {}", 5.0 * h * h);
    }

    #[test]
    fn shooting_and_picard_agree_on_linear_problem() {
        let spec = closed_form_spec();
        let g = grid(200);
        let shot = shooting_solve(&spec, g, 1e-12).unwrap();
        let picard =
            crate::solver::picard_solve(&spec, g, &crate::solver::PicardConfig::default()).unwrap();
        let h = g.h();
        let dist = shot.sup_distance(&picard.trajectory, NormKind::LInf);
        assert!(dist <= 10.0 * h * h, "distance {dist}");
    }

    #[test]
    fn expm_zero_and_diagonal() {
        assert_eq!(expm(&Matrix::zeros(3, 3)), Matrix::identity(3));
        let d = expm(&Matrix::diagonal(&[1.0, -2.0]));
        assert!((d.get(0, 0) - 1.0_f64.exp()).abs() < 1e-12);
        assert!((d.get(1, 1) - (-2.0_f64).exp()).abs() < 1e-12);
        assert_eq!(d.get(0, 1), 0.0);
    }

    #[test]
    fn expm_rotation_by_pi() {
        let a = Matrix::from_rows(&[
            vec![0.0, std::f64::consts::PI],
            vec![-std::f64::consts::PI, 0.0],
        ]);
        let e = expm(&a);
        let expect = Matrix::identity(2).scaled(-1.0);
        assert!(e.sub(&expect).max_abs() < 1e-9);
    }

    #[test]
    fn expm_matches_series_for_moderate_norms() {
        // Cross-check against a long Taylor sum on a norm-10 matrix.
        let a = Matrix::from_rows(&[vec![3.0, -7.0], vec![2.0, -5.0]]);
        let mut series = Matrix::identity(2);
        let mut term = Matrix::identity(2);
        for k in 1..60 {
            term = term.mul(&a).scaled(1.0 / k as f64);
            series = series.add(&term);
        }
        let e = expm(&a);
        let rel = e.sub(&series).max_abs() / series.max_abs();
        assert!(rel < 1e-10, "relative error {rel}");
    }
}

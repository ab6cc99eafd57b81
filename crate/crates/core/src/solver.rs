//! The mild-solution operator N = N1 + N2 on discretized trajectories and its
//! fixed points by damped Picard iteration.
//!
//! N2(u)(t) = int_0^t T(t,s) Phi(u)(s) ds  (composite trapezoid),
//! N1(u)(t) = T(t,0) B F(chi(N2(u)))       (per-variable truncation chi),
//!
//! and a mild solution is a fixed point u = N(u) with u(0) = F(u) holding
//! automatically through the resolvent algebra. Picard starts from u = 0 and
//! reports non-convergence instead of retrying.

use crate::error::{Error, Result};
use crate::evolution::{build_evolution, CoefficientFamily, EvolutionTable, TimeGrid};
use crate::nonlinearity::{GrowthEnvelope, Nonlinearity};
use crate::nonlocal::{
    build_resolvent, truncate_per_variable, BlockPartition, NonlocalMap, Resolvent,
};
use crate::numerics::{vec_norm, NormKind};

/// Grid-sampled path t -> u(t) in R^d with linear interpolation between nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    values: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn zero(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            values: vec![vec![0.0; dim]; grid.num_nodes()],
        }
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Result<Self> {
        Self::from_values(grid, vec![value.to_vec(); grid.num_nodes()])
    }

    pub fn from_values(grid: TimeGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::Dimension {
                context: format!(
                    "trajectory has {} rows for {} grid nodes",
                    values.len(),
                    grid.num_nodes()
                ),
            });
        }
        let dim = values[0].len();
        if dim == 0 || values.iter().any(|v| v.len() != dim) {
            return Err(Error::Dimension {
                context: "trajectory rows must share a positive dimension".into(),
            });
        }
        if values.iter().any(|row| row.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite {
                context: "trajectory values".into(),
            });
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    #[inline]
    pub fn value(&self, node: usize) -> &[f64] {
        &self.values[node]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// u(t) by piecewise-linear interpolation, clamped to [0, a].
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let n = self.grid.n_steps();
        let h = self.grid.h();
        let clamped = t.clamp(0.0, self.grid.horizon());
        let pos = clamped / h;
        let lo = (pos.floor() as usize).min(n.saturating_sub(1));
        let w = (pos - lo as f64).clamp(0.0, 1.0);
        let a = &self.values[lo];
        let b = &self.values[lo + 1];
        a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect()
    }

    /// max over nodes of |u(t_i)|.
    pub fn sup_norm(&self, kind: NormKind) -> f64 {
        self.values
            .iter()
            .map(|v| vec_norm(v, kind))
            .fold(0.0, f64::max)
    }

    /// max over nodes of |u(t_i) - v(t_i)|.
    pub fn sup_distance(&self, other: &Trajectory, kind: NormKind) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                vec_norm(&diff, kind)
            })
            .fold(0.0, f64::max)
    }

    fn add(&self, other: &Trajectory) -> Trajectory {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Trajectory {
            grid: self.grid,
            values,
        }
    }

    fn blend(&self, other: &Trajectory, theta: f64) -> Trajectory {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (1.0 - theta) * x + theta * y)
                    .collect()
            })
            .collect();
        Trajectory {
            grid: self.grid,
            values,
        }
    }
}

/// Full problem statement: generator, nonlinearity, nonlocal condition, growth
/// data, tube, norm, and the component partition.
#[derive(Clone)]
pub struct ProblemSpec {
    pub coeff: CoefficientFamily,
    pub phi: Nonlinearity,
    pub map: NonlocalMap,
    pub envelopes: Vec<GrowthEnvelope>,
    pub tube: crate::certificates::TubeRadius,
    pub norm_kind: NormKind,
    pub partition: BlockPartition,
}

impl ProblemSpec {
    /// Dimension and count consistency; for systems the generator must be
    /// block-diagonal across the partition (sampled at a few nodes).
    pub fn validate(&self) -> Result<()> {
        let d = self.partition.dim();
        let n = self.partition.n_components();
        if self.coeff.dim() != d {
            return Err(Error::Dimension {
                context: format!("generator dimension {} vs partition {d}", self.coeff.dim()),
            });
        }
        if self.map.partition() != &self.partition {
            return Err(Error::Dimension {
                context: "nonlocal map partition differs from the problem partition".into(),
            });
        }
        if self.envelopes.len() != n || self.tube.n_components() != n {
            return Err(Error::Dimension {
                context: format!(
                    "{} envelopes and {} tube components for {n} components",
                    self.envelopes.len(),
                    self.tube.n_components()
                ),
            });
        }
        for (i, env) in self.envelopes.iter().enumerate() {
            if env.gamma_row.len() != n {
                return Err(Error::Dimension {
                    context: format!(
                        "envelope {} has {} gamma entries",
                        i + 1,
                        env.gamma_row.len()
                    ),
                });
            }
        }
        if n > 1 {
            let a = self.coeff.horizon();
            for frac in [0.0, 0.37, 0.5, 1.0] {
                let m = self.coeff.eval_at(frac * a)?;
                for bi in 0..n {
                    for bj in 0..n {
                        if bi == bj {
                            continue;
                        }
                        let ri = self.partition.range(bi);
                        let rj = self.partition.range(bj);
                        for r in ri.clone() {
                            for c in rj.clone() {
                                if m.get(r, c).abs() > 1e-12 {
                                    return Err(Error::Config {
                                        reason: format!(
                                            "generator couples components {} and {} at t = {} (entry ({r},{c}))",
                                            bi + 1,
                                            bj + 1,
                                            frac * a
                                        ),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dim", &self.partition.dim())
            .field("components", &self.partition.n_components())
            .field("norm_kind", &self.norm_kind)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Damping theta in (0, 1]: u <- (1-theta) u + theta N(u).
    pub damping: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            damping: 1.0,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config {
                reason: format!("tolerance must be positive, got {}", self.tol),
            });
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config {
                reason: format!("damping must lie in (0, 1], got {}", self.damping),
            });
        }
        if self.max_iter == 0 {
            return Err(Error::Config {
                reason: "max_iter must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub trajectory: Trajectory,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub boundary_defect: f64,
    pub tube_ok: bool,
}

/// N2(u)(t_i): cumulative trapezoid of T(t_i, s) Phi(u)(s). Exactly zero at
/// t = 0. Internally uses T(t_i,s_j) = U_i (U_j^{-1} phi_j), which turns the
/// node sums into one running accumulation.
pub fn apply_n2(spec: &ProblemSpec, tab: &EvolutionTable, u: &Trajectory) -> Result<Trajectory> {
    let grid = tab.grid();
    if u.grid() != grid {
        return Err(Error::Grid {
            reason: "trajectory grid differs from the propagator grid".into(),
        });
    }
    let d = spec.partition.dim();
    let n = grid.n_steps();
    let h = grid.h();
    // q_j = U_j^{-1} Phi(u)(t_j)
    let mut q = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let phi = spec.phi.eval(u, j)?;
        q.push(tab.u_inv(j).matvec(&phi));
    }
    let mut values = Vec::with_capacity(n + 1);
    values.push(vec![0.0; d]);
    let mut acc = vec![0.0_f64; d];
    for i in 1..=n {
        for c in 0..d {
            acc[c] += 0.5 * h * (q[i - 1][c] + q[i][c]);
        }
        values.push(tab.u(i).matvec(&acc));
    }
    Trajectory::from_values(grid, values)
}

/// N1(u)(t_i) = T(t_i,0) * B * F(chi(N2(u))) with per-variable truncation at
/// the supports of F.
pub fn apply_n1(
    spec: &ProblemSpec,
    tab: &EvolutionTable,
    res: &Resolvent,
    u: &Trajectory,
) -> Result<Trajectory> {
    let v = apply_n2(spec, tab, u)?;
    n1_from_inner(spec, tab, res, &v)
}

fn n1_from_inner(
    spec: &ProblemSpec,
    tab: &EvolutionTable,
    res: &Resolvent,
    v: &Trajectory,
) -> Result<Trajectory> {
    let grid = tab.grid();
    let support = spec.map.support();
    let truncated = truncate_per_variable(v, &support.per_variable, &spec.partition)?;
    let fv = spec.map.apply(&truncated);
    let c = res.matrix.matvec(&fv);
    let mut values = Vec::with_capacity(grid.num_nodes());
    for i in 0..grid.num_nodes() {
        values.push(tab.u(i).matvec(&c));
    }
    Trajectory::from_values(grid, values)
}

/// N(u) = N1(u) + N2(u), evaluating the inner integral once.
pub fn apply_n(
    spec: &ProblemSpec,
    tab: &EvolutionTable,
    res: &Resolvent,
    u: &Trajectory,
) -> Result<Trajectory> {
    let v = apply_n2(spec, tab, u)?;
    let n1 = n1_from_inner(spec, tab, res, &v)?;
    Ok(n1.add(&v))
}

/// Fixed-point residual max_i |u(t_i) - N(u)(t_i)| in the problem norm.
pub fn residual(
    spec: &ProblemSpec,
    tab: &EvolutionTable,
    res: &Resolvent,
    u: &Trajectory,
) -> Result<f64> {
    let nu = apply_n(spec, tab, res, u)?;
    Ok(u.sup_distance(&nu, spec.norm_kind))
}

/// Builds the evolution table and resolvent, then iterates damped Picard from
/// u = 0.
pub fn picard_solve(
    spec: &ProblemSpec,
    grid: TimeGrid,
    config: &PicardConfig,
) -> Result<SolveResult> {
    spec.validate()?;
    config.validate()?;
    let tab = build_evolution(&spec.coeff, grid, spec.norm_kind)?;
    let res = build_resolvent(&spec.map, &tab)?;
    picard_solve_with(spec, &tab, &res, config)
}

/// Damped Picard iteration on a prebuilt table and resolvent.
///
/// Divergence (residual above 1e6 times the initial one) is an error;
/// exhausting max_iter yields an inconclusive result with converged = false.
pub fn picard_solve_with(
    spec: &ProblemSpec,
    tab: &EvolutionTable,
    res: &Resolvent,
    config: &PicardConfig,
) -> Result<SolveResult> {
    config.validate()?;
    let grid = tab.grid();
    let d = spec.partition.dim();
    let mut u = Trajectory::zero(grid, d);
    let mut history = Vec::new();
    let mut initial = f64::NAN;
    let mut converged = false;
    let mut iterations = 0usize;
    for k in 0..config.max_iter {
        let nu = apply_n(spec, tab, res, &u)?;
        let r = u.sup_distance(&nu, spec.norm_kind);
        history.push(r);
        iterations = k + 1;
        if k == 0 {
            initial = r;
        }
        if r <= config.tol {
            converged = true;
            break;
        }
        if !r.is_finite() || (initial > 0.0 && r > 1e6 * initial) {
            return Err(Error::Diverged {
                initial,
                last: r,
                history,
            });
        }
        u = u.blend(&nu, config.damping);
    }
    let boundary_defect = {
        let fu = spec.map.apply(&u);
        let diff: Vec<f64> = u.value(0).iter().zip(&fu).map(|(a, b)| a - b).collect();
        vec_norm(&diff, spec.norm_kind)
    };
    let mut tube_ok = true;
    'outer: for (i, t) in grid.nodes().enumerate() {
        for comp in 0..spec.partition.n_components() {
            let norm = spec
                .partition
                .component_norm(u.value(i), comp, spec.norm_kind);
            if norm > spec.tube.eval(comp, t)? + config.tol {
                tube_ok = false;
                break 'outer;
            }
        }
    }
    Ok(SolveResult {
        trajectory: u,
        residual_history: history,
        converged,
        iterations,
        boundary_defect,
        tube_ok,
    })
}

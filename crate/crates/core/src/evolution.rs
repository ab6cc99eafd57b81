//! Evolution operator T(t,s) generated by a bounded matrix family {A(t)}.
//!
//! The table stores U_i ~ T(t_i, 0) (classical fourth-order one-step
//! integration of dU/dt = A(t)U, U(0) = I) together with the inverses, and
//! composes T(t,s) = U_i * U_j^{-1}. In finite dimension T(0,s) = T(s,0)^{-1}
//! always exists, the representation is exactly cocyclic, and storage is O(n)
//! instead of O(n^2). The uniform bound M is taken over all grid pairs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{inv, op_norm, Matrix, NormKind};
use crate::sampling::SplitMix64;

/// Uniform grid on [0, a] with an even number of steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Grid {
                reason: format!("horizon must be positive and finite, got {horizon}"),
            });
        }
        if n_steps == 0 || n_steps % 2 != 0 {
            return Err(Error::Grid {
                reason: format!("n_steps must be a positive even integer, got {n_steps}"),
            });
        }
        Ok(Self { horizon, n_steps })
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.n_steps + 1
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Node i as horizon * i / n, so node(n) equals the horizon exactly.
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n_steps);
        self.horizon * (i as f64) / (self.n_steps as f64)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |i| self.node(i))
    }

    /// Index of the grid node matching `t`, or an off-grid error.
    pub fn find_node(&self, t: f64) -> Result<usize> {
        if !t.is_finite() {
            return Err(Error::OffGrid { t });
        }
        let idx = (t / self.horizon * self.n_steps as f64).round();
        if idx < 0.0 || idx > self.n_steps as f64 {
            return Err(Error::OffGrid { t });
        }
        let idx = idx as usize;
        if (self.node(idx) - t).abs() > 1e-9 * self.horizon.max(1.0) {
            return Err(Error::OffGrid { t });
        }
        Ok(idx)
    }

    /// Same horizon with `factor` times the steps.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.horizon, self.n_steps * factor)
    }
}

/// Time-dependent coefficient matrix family t -> A(t) on [0, a].
#[derive(Clone)]
pub struct CoefficientFamily {
    dim: usize,
    horizon: f64,
    eval: Arc<dyn Fn(f64) -> Matrix + Send + Sync>,
}

impl CoefficientFamily {
    pub fn from_fn(
        dim: usize,
        horizon: f64,
        eval: impl Fn(f64) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            horizon,
            eval: Arc::new(eval),
        }
    }

    pub fn constant(matrix: Matrix, horizon: f64) -> Self {
        assert!(matrix.is_square(), "coefficient matrix must be square");
        let dim = matrix.rows();
        Self::from_fn(dim, horizon, move |_| matrix.clone())
    }

    pub fn zero(dim: usize, horizon: f64) -> Self {
        Self::from_fn(dim, horizon, move |_| Matrix::zeros(dim, dim))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn eval_at(&self, t: f64) -> Result<Matrix> {
        let m = (self.eval)(t);
        if m.rows() != self.dim || m.cols() != self.dim {
            return Err(Error::Dimension {
                context: format!(
                    "generator returned {}x{} at t = {t}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    self.dim,
                    self.dim
                ),
            });
        }
        if !m.is_finite() {
            return Err(Error::NonFinite {
                context: format!("generator entries at t = {t}"),
            });
        }
        Ok(m)
    }
}

impl std::fmt::Debug for CoefficientFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientFamily")
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

/// Precomputed propagators T(t_i, 0), their inverses, and the uniform bound M.
#[derive(Clone, Debug)]
pub struct EvolutionTable {
    grid: TimeGrid,
    u: Vec<Matrix>,
    u_inv: Vec<Matrix>,
    m_bound: f64,
    norm_kind: NormKind,
}

/// Integrates dU/dt = A(t)U with U(0) = I by one classical fourth-order step
/// per grid interval, inverts each U_i, and takes M as the maximum of
/// `op_norm(U_i * U_j^{-1})` over all grid pairs j <= i.
pub fn build_evolution(
    family: &CoefficientFamily,
    grid: TimeGrid,
    norm_kind: NormKind,
) -> Result<EvolutionTable> {
    if (family.horizon() - grid.horizon()).abs() > 1e-12 * grid.horizon().max(1.0) {
        return Err(Error::Grid {
            reason: format!(
                "generator horizon {} does not match grid horizon {}",
                family.horizon(),
                grid.horizon()
            ),
        });
    }
    let d = family.dim();
    let n = grid.n_steps();
    let h = grid.h();
    let mut u = Vec::with_capacity(n + 1);
    u.push(Matrix::identity(d));
    for i in 0..n {
        let t = grid.node(i);
        let current = &u[i];
        let a1 = family.eval_at(t)?;
        let a2 = family.eval_at(t + 0.5 * h)?;
        let a3 = family.eval_at(t + h)?;
        let k1 = a1.mul(current);
        let k2 = a2.mul(&current.add(&k1.scaled(0.5 * h)));
        let k3 = a2.mul(&current.add(&k2.scaled(0.5 * h)));
        let k4 = a3.mul(&current.add(&k3.scaled(h)));
        let next = current.add(
            &k1.add(&k2.scaled(2.0))
                .add(&k3.scaled(2.0))
                .add(&k4)
                .scaled(h / 6.0),
        );
        if !next.is_finite() {
            return Err(Error::NonFinite {
                context: format!("propagator at node {} (t = {})", i + 1, grid.node(i + 1)),
            });
        }
        u.push(next);
    }
    let mut u_inv = Vec::with_capacity(n + 1);
    for (i, ui) in u.iter().enumerate() {
        match inv(ui) {
            Ok(m) => u_inv.push(m),
            Err(Error::Singular { .. }) => {
                return Err(Error::SingularPropagator {
                    node: i,
                    t: grid.node(i),
                })
            }
            Err(e) => return Err(e),
        }
    }
    let mut m_bound = 0.0_f64;
    for i in 0..=n {
        for j in 0..=i {
            let prop = u[i].mul(&u_inv[j]);
            m_bound = m_bound.max(op_norm(&prop, norm_kind)?);
        }
    }
    Ok(EvolutionTable {
        grid,
        u,
        u_inv,
        m_bound,
        norm_kind,
    })
}

impl EvolutionTable {
    #[inline]
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.u[0].rows()
    }

    #[inline]
    pub fn m_bound(&self) -> f64 {
        self.m_bound
    }

    #[inline]
    pub fn norm_kind(&self) -> NormKind {
        self.norm_kind
    }

    /// T(t_i, 0).
    pub fn u(&self, i: usize) -> &Matrix {
        &self.u[i]
    }

    /// T(t_i, 0)^{-1}.
    pub fn u_inv(&self, i: usize) -> &Matrix {
        &self.u_inv[i]
    }

    /// T(t, s) for grid nodes s <= t. Off-grid times are rejected: trajectories
    /// are interpolated, propagators never are.
    pub fn propagator(&self, t: f64, s: f64) -> Result<Matrix> {
        let i = self.grid.find_node(t)?;
        let j = self.grid.find_node(s)?;
        if j > i {
            return Err(Error::TimeOrder { t, s });
        }
        Ok(self.propagator_nodes(i, j))
    }

    /// T(t_i, t_j) by index; T(t_i, t_i) = I exactly.
    pub fn propagator_nodes(&self, i: usize, j: usize) -> Matrix {
        debug_assert!(j <= i);
        if i == j {
            return Matrix::identity(self.dim());
        }
        self.u[i].mul(&self.u_inv[j])
    }

    /// Uniform bound of the (r0..r1) diagonal block over all grid pairs; the
    /// per-component M_i of a block-diagonal system.
    pub fn block_bound(&self, r0: usize, r1: usize) -> Result<f64> {
        let n = self.grid.n_steps();
        let mut best = 0.0_f64;
        for i in 0..=n {
            for j in 0..=i {
                let prop = self.propagator_nodes(i, j);
                let block = prop.block(r0, r1, r0, r1);
                best = best.max(op_norm(&block, self.norm_kind)?);
            }
        }
        Ok(best)
    }
}

/// Maximum over sampled triples s <= r <= t of
/// `op_norm(T(t,r)T(r,s) - T(t,s))`. All triples when n_steps <= 64, otherwise
/// 1000 uniformly random triples drawn with a fixed seed.
pub fn cocycle_defect(tab: &EvolutionTable) -> Result<f64> {
    let n = tab.grid().n_steps();
    let mut worst = 0.0_f64;
    let mut check = |i: usize, k: usize, j: usize| -> Result<()> {
        let lhs = tab.propagator_nodes(i, k).mul(&tab.propagator_nodes(k, j));
        let defect = lhs.sub(&tab.propagator_nodes(i, j));
        worst = worst.max(op_norm(&defect, tab.norm_kind())?);
        Ok(())
    };
    if n <= 64 {
        for i in 0..=n {
            for k in 0..=i {
                for j in 0..=k {
                    check(i, k, j)?;
                }
            }
        }
    } else {
        let mut rng = SplitMix64::new(0x636f_6379_636c_6531);
        for _ in 0..1000 {
            let mut idx = [
                rng.next_index(n + 1),
                rng.next_index(n + 1),
                rng.next_index(n + 1),
            ];
            idx.sort_unstable();
            check(idx[2], idx[1], idx[0])?;
        }
    }
    Ok(worst)
}

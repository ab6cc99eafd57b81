//! The linear nonlocal condition F, its supports, truncation, and the
//! resolvent B = (I - F(T(.,0).))^{-1}.
//!
//! F is either a multi-point sum `F(u) = sum_k C_k u(t_k)` with matrix
//! coefficients, a grid quadrature `F(u) = sum_i w_i u(t_i)` standing in for a
//! Stieltjes integral, or zero (the classical Cauchy problem). Matrix
//! coefficients generalize real c_k so that block conditions on systems live
//! in the same type; scalar problems use 1x1 blocks.

use crate::error::{Error, Result};
use crate::evolution::{EvolutionTable, TimeGrid};
use crate::numerics::{inv, op_norm, Matrix, NormKind};
use crate::solver::Trajectory;

/// Partition of the d state coordinates into contiguous components.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::Config {
                reason: "block partition needs positive component sizes".into(),
            });
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0usize;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Ok(Self {
            sizes,
            offsets,
            dim: acc,
        })
    }

    /// Single component covering the whole space.
    pub fn scalar(dim: usize) -> Self {
        Self::new(vec![dim]).expect("dim > 0")
    }

    #[inline]
    pub fn n_components(&self) -> usize {
        self.sizes.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Coordinate range of component i.
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.sizes[i]
    }

    /// Block norm of component i of a full-state vector.
    pub fn component_norm(&self, x: &[f64], i: usize, kind: NormKind) -> f64 {
        crate::numerics::vec_norm(&x[self.range(i)], kind)
    }
}

/// One multi-point term C_k u(t_k).
#[derive(Clone, Debug)]
pub struct PointTerm {
    pub t: f64,
    pub coeff: Matrix,
}

#[derive(Clone, Debug)]
pub enum NonlocalVariant {
    MultiPoint(Vec<PointTerm>),
    /// One d x d weight per grid node.
    Quadrature {
        weights: Vec<Matrix>,
        grid: TimeGrid,
    },
    Zero,
}

/// Total and per-variable supports of F.
#[derive(Clone, Debug, PartialEq)]
pub struct Support {
    pub total: f64,
    pub per_variable: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct NonlocalMap {
    variant: NonlocalVariant,
    partition: BlockPartition,
}

impl NonlocalMap {
    pub fn zero(partition: BlockPartition) -> Self {
        Self {
            variant: NonlocalVariant::Zero,
            partition,
        }
    }

    /// Multi-point condition; t_k must be strictly increasing and positive,
    /// and at least one coefficient must be nonzero.
    pub fn multi_point(points: Vec<PointTerm>, partition: BlockPartition) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config {
                reason: "multi-point condition needs at least one point (use Zero otherwise)"
                    .into(),
            });
        }
        let d = partition.dim();
        let mut prev = 0.0;
        for (k, p) in points.iter().enumerate() {
            if !(p.t.is_finite() && p.t > prev) {
                return Err(Error::Config {
                    reason: format!(
                        "multi-point times must be strictly increasing and positive; point {k} has t = {}",
                        p.t
                    ),
                });
            }
            prev = p.t;
            if p.coeff.rows() != d || p.coeff.cols() != d {
                return Err(Error::Dimension {
                    context: format!(
                        "coefficient {k} is {}x{}, expected {d}x{d}",
                        p.coeff.rows(),
                        p.coeff.cols()
                    ),
                });
            }
            if !p.coeff.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("multi-point coefficient {k}"),
                });
            }
        }
        if points.iter().all(|p| p.coeff.max_abs() == 0.0) {
            return Err(Error::Config {
                reason: "all multi-point coefficients are zero; use the Zero variant".into(),
            });
        }
        Ok(Self {
            variant: NonlocalVariant::MultiPoint(points),
            partition,
        })
    }

    /// Quadrature condition with one weight matrix per grid node.
    pub fn quadrature(
        weights: Vec<Matrix>,
        grid: TimeGrid,
        partition: BlockPartition,
    ) -> Result<Self> {
        if weights.len() != grid.num_nodes() {
            return Err(Error::Dimension {
                context: format!(
                    "quadrature needs one weight per node: got {}, grid has {}",
                    weights.len(),
                    grid.num_nodes()
                ),
            });
        }
        let d = partition.dim();
        for (i, w) in weights.iter().enumerate() {
            if w.rows() != d || w.cols() != d {
                return Err(Error::Dimension {
                    context: format!("weight {i} is {}x{}, expected {d}x{d}", w.rows(), w.cols()),
                });
            }
            if !w.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("quadrature weight {i}"),
                });
            }
        }
        Ok(Self {
            variant: NonlocalVariant::Quadrature { weights, grid },
            partition,
        })
    }

    pub fn variant(&self) -> &NonlocalVariant {
        &self.variant
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn is_zero(&self) -> bool {
        match &self.variant {
            NonlocalVariant::Zero => true,
            NonlocalVariant::MultiPoint(points) => points.iter().all(|p| p.coeff.max_abs() == 0.0),
            NonlocalVariant::Quadrature { weights, .. } => {
                weights.iter().all(|w| w.max_abs() == 0.0)
            }
        }
    }

    /// Whether any entry in the columns of `m` belonging to component j is
    /// nonzero, i.e. whether the term reads variable j at its time.
    fn touches_variable(&self, m: &Matrix, j: usize) -> bool {
        let cols = self.partition.range(j);
        for i in 0..m.rows() {
            for c in cols.clone() {
                if m.get(i, c) != 0.0 {
                    return true;
                }
            }
        }
        false
    }

    /// Total support a_F and the per-variable supports (a_1, ..., a_n).
    ///
    /// a_F = 0 recovers the classical Cauchy problem; for multi-point maps it
    /// is the last time with a nonzero coefficient, for quadrature maps the
    /// last node with a nonzero weight.
    pub fn support(&self) -> Support {
        let n = self.partition.n_components();
        let mut per_variable = vec![0.0_f64; n];
        match &self.variant {
            NonlocalVariant::Zero => {}
            NonlocalVariant::MultiPoint(points) => {
                for p in points {
                    for (j, a_j) in per_variable.iter_mut().enumerate() {
                        if self.touches_variable(&p.coeff, j) {
                            *a_j = a_j.max(p.t);
                        }
                    }
                }
            }
            NonlocalVariant::Quadrature { weights, grid } => {
                for (i, w) in weights.iter().enumerate() {
                    for (j, a_j) in per_variable.iter_mut().enumerate() {
                        if self.touches_variable(w, j) {
                            *a_j = a_j.max(grid.node(i));
                        }
                    }
                }
            }
        }
        let total = per_variable.iter().fold(0.0_f64, |m, &v| m.max(v));
        Support {
            total,
            per_variable,
        }
    }

    /// F applied to a trajectory. Multi-point times may sit off-grid, in which
    /// case the trajectory is interpolated linearly.
    pub fn apply(&self, v: &Trajectory) -> Vec<f64> {
        let d = self.partition.dim();
        let mut out = vec![0.0_f64; d];
        match &self.variant {
            NonlocalVariant::Zero => {}
            NonlocalVariant::MultiPoint(points) => {
                for p in points {
                    let value = v.value_at(p.t);
                    let term = p.coeff.matvec(&value);
                    for (o, t) in out.iter_mut().zip(&term) {
                        *o += t;
                    }
                }
            }
            NonlocalVariant::Quadrature { weights, .. } => {
                for (i, w) in weights.iter().enumerate() {
                    if w.max_abs() == 0.0 {
                        continue;
                    }
                    let term = w.matvec(v.value(i));
                    for (o, t) in out.iter_mut().zip(&term) {
                        *o += t;
                    }
                }
            }
        }
        out
    }

    /// Sum of coefficient operator norms; the conservative bound on |F|.
    pub fn coeff_norm_sum(&self, kind: NormKind) -> Result<f64> {
        let mut sum = 0.0;
        match &self.variant {
            NonlocalVariant::Zero => {}
            NonlocalVariant::MultiPoint(points) => {
                for p in points {
                    sum += op_norm(&p.coeff, kind)?;
                }
            }
            NonlocalVariant::Quadrature { weights, .. } => {
                for w in weights {
                    sum += op_norm(w, kind)?;
                }
            }
        }
        Ok(sum)
    }
}

/// chi_{a_F}: equal to v on [0, a_F], frozen at v(a_F) afterwards. a_F must
/// be a grid node.
pub fn truncate(v: &Trajectory, a_f: f64) -> Result<Trajectory> {
    let grid = v.grid();
    let cut = grid.find_node(a_f)?;
    let mut values = Vec::with_capacity(grid.num_nodes());
    for i in 0..grid.num_nodes() {
        values.push(v.value(i.min(cut)).to_vec());
    }
    Trajectory::from_values(grid, values)
}

/// Per-variable truncation: component j is frozen beyond its own support a_j.
pub fn truncate_per_variable(
    v: &Trajectory,
    supports: &[f64],
    partition: &BlockPartition,
) -> Result<Trajectory> {
    if supports.len() != partition.n_components() {
        return Err(Error::Dimension {
            context: format!(
                "{} supports for {} components",
                supports.len(),
                partition.n_components()
            ),
        });
    }
    let grid = v.grid();
    let mut cuts = Vec::with_capacity(supports.len());
    for &a_j in supports {
        cuts.push(grid.find_node(a_j)?);
    }
    let mut values = Vec::with_capacity(grid.num_nodes());
    for i in 0..grid.num_nodes() {
        let mut row = v.value(i).to_vec();
        for (j, &cut) in cuts.iter().enumerate() {
            if i > cut {
                let frozen = v.value(cut);
                for c in partition.range(j) {
                    row[c] = frozen[c];
                }
            }
        }
        values.push(row);
    }
    Trajectory::from_values(grid, values)
}

/// The resolvent B with the conservative |BF| bound and the sufficient
/// contraction margin 1 - M * sum_k |C_k| (may be negative while B exists).
#[derive(Clone, Debug)]
pub struct Resolvent {
    pub matrix: Matrix,
    pub f_of_t0: Matrix,
    pub bf_norm_upper: f64,
    pub contraction_margin: f64,
}

/// Assembles F(T(.,0) x) columnwise from the propagator table and inverts
/// I - F(T(.,0) .). Multi-point times must be grid nodes here.
pub fn build_resolvent(map: &NonlocalMap, tab: &EvolutionTable) -> Result<Resolvent> {
    let d = map.partition().dim();
    if tab.dim() != d {
        return Err(Error::Dimension {
            context: format!(
                "nonlocal map dimension {d} vs table dimension {}",
                tab.dim()
            ),
        });
    }
    let kind = tab.norm_kind();
    let grid = tab.grid();
    let mut f_of_t0 = Matrix::zeros(d, d);
    match map.variant() {
        NonlocalVariant::Zero => {}
        NonlocalVariant::MultiPoint(points) => {
            for p in points {
                let idx = grid.find_node(p.t)?;
                f_of_t0 = f_of_t0.add(&p.coeff.mul(tab.u(idx)));
            }
        }
        NonlocalVariant::Quadrature {
            weights,
            grid: wgrid,
        } => {
            if wgrid != &grid {
                return Err(Error::Grid {
                    reason: "quadrature weights were built for a different grid".into(),
                });
            }
            for (i, w) in weights.iter().enumerate() {
                if w.max_abs() == 0.0 {
                    continue;
                }
                f_of_t0 = f_of_t0.add(&w.mul(tab.u(i)));
            }
        }
    }
    let eye = Matrix::identity(d);
    let system = eye.sub(&f_of_t0);
    let b = match inv(&system) {
        Ok(m) => m,
        Err(Error::Singular { .. }) => return Err(Error::ResolventSingular),
        Err(e) => return Err(e),
    };
    let defect = op_norm(&b.mul(&system).sub(&eye), kind)?;
    if defect > 1e-10 {
        return Err(Error::ResolventDefect { defect });
    }
    let coeff_sum = map.coeff_norm_sum(kind)?;
    let bf_norm_upper = op_norm(&b, kind)? * coeff_sum;
    let contraction_margin = 1.0 - tab.m_bound() * coeff_sum;
    Ok(Resolvent {
        matrix: b,
        f_of_t0,
        bf_norm_upper,
        contraction_margin,
    })
}

/// Conservative block norms |G_ij| of G = BF: entry (i, j) is
/// `sum_k op_norm((B C_k)_{ij-block})` (weights for quadrature maps).
pub fn g_block_norms(map: &NonlocalMap, b: &Matrix, kind: NormKind) -> Result<Matrix> {
    let part = map.partition();
    let n = part.n_components();
    let mut out = Matrix::zeros(n, n);
    let accumulate = |coeff: &Matrix, out: &mut Matrix| -> Result<()> {
        let bc = b.mul(coeff);
        for i in 0..n {
            let ri = part.range(i);
            for j in 0..n {
                let rj = part.range(j);
                let block = bc.block(ri.start, ri.end, rj.start, rj.end);
                out.set(i, j, out.get(i, j) + op_norm(&block, kind)?);
            }
        }
        Ok(())
    };
    match map.variant() {
        NonlocalVariant::Zero => {}
        NonlocalVariant::MultiPoint(points) => {
            for p in points {
                accumulate(&p.coeff, &mut out)?;
            }
        }
        NonlocalVariant::Quadrature { weights, .. } => {
            for w in weights {
                if w.max_abs() > 0.0 {
                    accumulate(w, &mut out)?;
                }
            }
        }
    }
    Ok(out)
}

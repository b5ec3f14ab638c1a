//! Nodal PTDF from the lossless DC power-flow linearization, and the
//! reference-node shift algebra that makes every choice of sink equivalent
//! on balanced injections.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::config::Tolerances;
use crate::grid::{BranchId, BusId, Grid};

#[derive(Debug, Error, PartialEq)]
pub enum PtdfError {
    #[error("reference bus {0} does not exist")]
    UnknownReference(BusId),
    #[error("network is not connected; buses unreachable from the reference: {0:?}")]
    Disconnected(Vec<BusId>),
    #[error("reduced susceptance matrix is singular")]
    Singular,
    #[error("dimension mismatch: expected {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("injections are unbalanced by {imbalance} MW")]
    Unbalanced { imbalance: f64 },
    #[error("operators do not differ by a row-constant offset (row {row}, deviation {deviation})")]
    NotRowConstant { row: usize, deviation: f64 },
}

/// Nodal injections in MW, indexed by dense bus index. Positive injects.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionVector(pub Vec<f64>);

impl InjectionVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn imbalance(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Line flows in MW, indexed by branch position; positive runs from→to.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowVector(pub Vec<f64>);

impl FlowVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs_diff(&self, other: &FlowVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// M×N sensitivity of line flows to nodal injections withdrawn at the
/// reference bus.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalPtdf {
    matrix: DMatrix<f64>,
    reference: usize,
    branch_ids: Vec<BranchId>,
    bus_ids: Vec<BusId>,
    endpoints: Vec<(usize, usize)>,
}

impl NodalPtdf {
    /// `(from, to)` bus indices of every line.
    pub fn endpoints(&self) -> &[(usize, usize)] {
        &self.endpoints
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn reference_index(&self) -> usize {
        self.reference
    }

    pub fn reference_bus(&self) -> BusId {
        self.bus_ids[self.reference]
    }

    pub fn branch_ids(&self) -> &[BranchId] {
        &self.branch_ids
    }

    pub fn bus_ids(&self) -> &[BusId] {
        &self.bus_ids
    }

    pub fn line_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn bus_count(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn get(&self, line: usize, bus: usize) -> f64 {
        self.matrix[(line, bus)]
    }

    /// Flows for a balanced injection vector.
    pub fn flows(&self, p: &InjectionVector, tol: &Tolerances) -> Result<FlowVector, PtdfError> {
        if p.len() != self.bus_count() {
            return Err(PtdfError::Dimension { expected: self.bus_count(), got: p.len() });
        }
        let imbalance = p.imbalance();
        if imbalance.abs() > tol.balance {
            return Err(PtdfError::Unbalanced { imbalance });
        }
        Ok(apply(&self.matrix, p.as_slice()))
    }
}

/// PTDF with a per-row constant added; acts identically on balanced
/// injections.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedPtdf {
    matrix: DMatrix<f64>,
}

impl ShiftedPtdf {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn flows(&self, p: &InjectionVector, tol: &Tolerances) -> Result<FlowVector, PtdfError> {
        if p.len() != self.matrix.ncols() {
            return Err(PtdfError::Dimension { expected: self.matrix.ncols(), got: p.len() });
        }
        let imbalance = p.imbalance();
        if imbalance.abs() > tol.balance {
            return Err(PtdfError::Unbalanced { imbalance });
        }
        Ok(apply(&self.matrix, p.as_slice()))
    }
}

fn apply(matrix: &DMatrix<f64>, p: &[f64]) -> FlowVector {
    let v = matrix * DVector::from_column_slice(p);
    FlowVector(v.iter().copied().collect())
}

/// Build the nodal PTDF of a connected grid with `reference_bus` as sink.
pub fn build_nodal_ptdf(grid: &Grid, reference_bus: BusId) -> Result<NodalPtdf, PtdfError> {
    let n = grid.bus_count();
    let m = grid.branch_count();
    let reference = grid
        .bus_index(reference_bus)
        .ok_or(PtdfError::UnknownReference(reference_bus))?;

    let adjacency = grid.adjacency();
    let reached = adjacency.bfs(reference);
    if reached.len() != n {
        let mut seen = vec![false; n];
        for &v in &reached {
            seen[v] = true;
        }
        let unreachable = (0..n).filter(|&i| !seen[i]).map(|i| grid.bus_id(i)).collect();
        return Err(PtdfError::Disconnected(unreachable));
    }

    let mut endpoints = Vec::with_capacity(m);
    for l in 0..m {
        let (f, t) = grid.branch_endpoints(l).ok_or(PtdfError::Singular)?;
        endpoints.push((f, t, 1.0 / grid.branches()[l].reactance));
    }

    // Reduced index: bus index with the reference removed.
    let reduced = |i: usize| -> Option<usize> {
        match i.cmp(&reference) {
            std::cmp::Ordering::Less => Some(i),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(i - 1),
        }
    };

    let mut b = DMatrix::<f64>::zeros(n - 1, n - 1);
    for &(f, t, y) in &endpoints {
        let (rf, rt) = (reduced(f), reduced(t));
        if let Some(i) = rf {
            b[(i, i)] += y;
        }
        if let Some(j) = rt {
            b[(j, j)] += y;
        }
        if let (Some(i), Some(j)) = (rf, rt) {
            b[(i, j)] -= y;
            b[(j, i)] -= y;
        }
    }

    // Angles for unit injections at every non-reference bus.
    let angles = if n > 1 {
        b.lu().try_inverse().ok_or(PtdfError::Singular)?
    } else {
        DMatrix::zeros(0, 0)
    };

    let mut matrix = DMatrix::<f64>::zeros(m, n);
    for (l, &(f, t, y)) in endpoints.iter().enumerate() {
        for bus in 0..n {
            let Some(col) = reduced(bus) else { continue };
            let theta_f = reduced(f).map_or(0.0, |r| angles[(r, col)]);
            let theta_t = reduced(t).map_or(0.0, |r| angles[(r, col)]);
            matrix[(l, bus)] = y * (theta_f - theta_t);
        }
    }

    Ok(NodalPtdf {
        matrix,
        reference,
        branch_ids: grid.branches().iter().map(|b| b.id).collect(),
        bus_ids: grid.buses().iter().map(|b| b.id).collect(),
        endpoints: endpoints.iter().map(|&(f, t, _)| (f, t)).collect(),
    })
}

pub fn flows_from_injections(
    ptdf: &NodalPtdf,
    p: &InjectionVector,
) -> Result<FlowVector, PtdfError> {
    ptdf.flows(p, &Tolerances::default())
}

/// `S = PTDF + α uᵀ`: add `alpha[l]` to every entry of row `l`.
pub fn shift_reference(ptdf: &NodalPtdf, alpha: &[f64]) -> Result<ShiftedPtdf, PtdfError> {
    if alpha.len() != ptdf.line_count() {
        return Err(PtdfError::Dimension { expected: ptdf.line_count(), got: alpha.len() });
    }
    let mut matrix = ptdf.matrix.clone();
    for (l, a) in alpha.iter().enumerate() {
        for v in matrix.row_mut(l).iter_mut() {
            *v += a;
        }
    }
    Ok(ShiftedPtdf { matrix })
}

/// Row offsets `α` with `to = from + α uᵀ`, verified to be constant along
/// every row within `tol`.
pub fn reference_offset(from: &NodalPtdf, to: &NodalPtdf, tol: f64) -> Result<Vec<f64>, PtdfError> {
    if from.matrix.shape() != to.matrix.shape() {
        return Err(PtdfError::Dimension {
            expected: from.matrix.len(),
            got: to.matrix.len(),
        });
    }
    let diff = &to.matrix - &from.matrix;
    let mut alpha = Vec::with_capacity(diff.nrows());
    for l in 0..diff.nrows() {
        let row = diff.row(l);
        let first = row.iter().next().copied().unwrap_or(0.0);
        let deviation = row.iter().map(|v| (v - first).abs()).fold(0.0, f64::max);
        if deviation > tol {
            return Err(PtdfError::NotRowConstant { row: l, deviation });
        }
        alpha.push(first);
    }
    Ok(alpha)
}

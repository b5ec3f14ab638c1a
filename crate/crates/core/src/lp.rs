//! Dense two-phase primal simplex with Bland's pivoting rule.
//!
//! Problems are stated as `min cᵀx` subject to general linear rows and
//! per-variable bounds. The solver reports the optimal vertex together with
//! constraint duals read from the final basis, using the sensitivity
//! convention `dual_i = ∂objective / ∂rhs_i`. For a minimisation this makes
//! duals of binding `<=` rows nonpositive and of binding `>=` rows
//! nonnegative.

use thiserror::Error;

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-9;
const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one residual {residual})")]
    Infeasible { residual: f64 },
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("variable {var} has empty bound range [{lower}, {upper}]")]
    InvalidBounds { var: usize, lower: f64, upper: f64 },
    #[error("simplex did not converge within {0} pivots")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowId(pub usize);

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    kind: ConstraintKind,
    rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    costs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Sensitivity of the optimum to each constraint's right-hand side.
    pub duals: Vec<f64>,
    /// `bᵀy` over the internal standard form; equals `objective` at optimality.
    pub dual_objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn value(&self, v: VarId) -> f64 {
        self.x[v.0]
    }

    pub fn dual(&self, r: RowId) -> f64 {
        self.duals[r.0]
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a variable with objective coefficient `cost` and bounds
    /// `[lower, upper]`; either bound may be infinite.
    pub fn add_variable(&mut self, cost: f64, lower: f64, upper: f64) -> VarId {
        self.costs.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        VarId(self.costs.len() - 1)
    }

    pub fn add_constraint(
        &mut self,
        coeffs: impl IntoIterator<Item = (VarId, f64)>,
        kind: ConstraintKind,
        rhs: f64,
    ) -> RowId {
        let coeffs = coeffs
            .into_iter()
            .filter(|(_, a)| *a != 0.0)
            .map(|(v, a)| (v.0, a))
            .collect();
        self.rows.push(Row { coeffs, kind, rhs });
        RowId(self.rows.len() - 1)
    }

    pub fn variable_count(&self) -> usize {
        self.costs.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.rows.len()
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        StandardForm::build(self)?.solve(self)
    }
}

/// How one user variable maps onto nonnegative standard-form columns:
/// `x = offset + Σ coef · col`.
#[derive(Debug, Clone)]
struct VarMap {
    offset: f64,
    cols: Vec<(usize, f64)>,
}

struct StandardForm {
    maps: Vec<VarMap>,
    ncols: usize,
    /// Dense rows over structural columns, rhs made nonnegative.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    kinds: Vec<ConstraintKind>,
    /// +1 or -1: the factor applied to the original row.
    signs: Vec<f64>,
    costs: Vec<f64>,
    cost_offset: f64,
    user_rows: usize,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Result<Self, LpError> {
        let mut maps = Vec::with_capacity(lp.costs.len());
        let mut ncols = 0;
        let mut bound_rows = Vec::new();
        for (j, (&l, &u)) in lp.lower.iter().zip(&lp.upper).enumerate() {
            if l > u || l == f64::INFINITY || u == f64::NEG_INFINITY || l.is_nan() || u.is_nan() {
                return Err(LpError::InvalidBounds { var: j, lower: l, upper: u });
            }
            let map = if l.is_finite() {
                if u.is_finite() {
                    bound_rows.push((ncols, u - l));
                }
                ncols += 1;
                VarMap { offset: l, cols: vec![(ncols - 1, 1.0)] }
            } else if u.is_finite() {
                ncols += 1;
                VarMap { offset: u, cols: vec![(ncols - 1, -1.0)] }
            } else {
                ncols += 2;
                VarMap { offset: 0.0, cols: vec![(ncols - 2, 1.0), (ncols - 1, -1.0)] }
            };
            maps.push(map);
        }

        let mut costs = vec![0.0; ncols];
        let mut cost_offset = 0.0;
        for (j, map) in maps.iter().enumerate() {
            cost_offset += lp.costs[j] * map.offset;
            for &(c, k) in &map.cols {
                costs[c] += lp.costs[j] * k;
            }
        }

        let total_rows = lp.rows.len() + bound_rows.len();
        let mut a = Vec::with_capacity(total_rows);
        let mut b = Vec::with_capacity(total_rows);
        let mut kinds = Vec::with_capacity(total_rows);
        let mut signs = Vec::with_capacity(total_rows);
        let mut push = |dense: Vec<f64>, kind: ConstraintKind, rhs: f64| {
            if rhs < 0.0 {
                a.push(dense.into_iter().map(|v| -v).collect());
                b.push(-rhs);
                kinds.push(match kind {
                    ConstraintKind::Le => ConstraintKind::Ge,
                    ConstraintKind::Ge => ConstraintKind::Le,
                    ConstraintKind::Eq => ConstraintKind::Eq,
                });
                signs.push(-1.0);
            } else {
                a.push(dense);
                b.push(rhs);
                kinds.push(kind);
                signs.push(1.0);
            }
        };
        for row in &lp.rows {
            let mut dense = vec![0.0; ncols];
            let mut rhs = row.rhs;
            for &(j, coef) in &row.coeffs {
                rhs -= coef * maps[j].offset;
                for &(c, k) in &maps[j].cols {
                    dense[c] += coef * k;
                }
            }
            push(dense, row.kind, rhs);
        }
        for &(col, ub) in &bound_rows {
            let mut dense = vec![0.0; ncols];
            dense[col] = 1.0;
            push(dense, ConstraintKind::Le, ub);
        }

        Ok(Self {
            maps,
            ncols,
            a,
            b,
            kinds,
            signs,
            costs,
            cost_offset,
            user_rows: lp.rows.len(),
        })
    }

    fn solve(self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let m = self.a.len();
        let n_struct = self.ncols;
        let n_slack = self.kinds.iter().filter(|k| **k != ConstraintKind::Eq).count();
        let n_art = self.kinds.iter().filter(|k| **k != ConstraintKind::Le).count();
        let ncols = n_struct + n_slack + n_art;
        let first_art = n_struct + n_slack;
        let rhs_col = ncols;

        let mut tab = vec![vec![0.0; ncols + 1]; m];
        let mut basis = vec![0usize; m];
        let mut unit_col = vec![0usize; m];
        let (mut next_slack, mut next_art) = (n_struct, first_art);
        for i in 0..m {
            tab[i][..n_struct].copy_from_slice(&self.a[i]);
            tab[i][rhs_col] = self.b[i];
            match self.kinds[i] {
                ConstraintKind::Le => {
                    tab[i][next_slack] = 1.0;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                ConstraintKind::Ge => {
                    tab[i][next_slack] = -1.0;
                    next_slack += 1;
                    tab[i][next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
                ConstraintKind::Eq => {
                    tab[i][next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
            unit_col[i] = basis[i];
        }

        let mut simplex = Tableau { tab, basis, rhs_col, iterations: 0 };

        if n_art > 0 {
            let mut phase1 = vec![0.0; ncols];
            for c in phase1.iter_mut().skip(first_art) {
                *c = 1.0;
            }
            simplex.optimize(&phase1, ncols)?;
            let residual: f64 = (0..m)
                .filter(|&i| simplex.basis[i] >= first_art)
                .map(|i| simplex.tab[i][rhs_col])
                .sum();
            let scale = 1.0 + self.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if residual > 1e-9 * scale {
                return Err(LpError::Infeasible { residual });
            }
            // Drive zero-level artificials out of the basis where possible.
            for i in 0..m {
                if simplex.basis[i] < first_art {
                    continue;
                }
                if let Some(j) = (0..first_art).find(|&j| simplex.tab[i][j].abs() > PIVOT_EPS) {
                    simplex.pivot(i, j);
                }
            }
        }

        let mut phase2 = vec![0.0; ncols];
        phase2[..n_struct].copy_from_slice(&self.costs);
        simplex.optimize(&phase2, first_art)?;

        let mut xs = vec![0.0; n_struct];
        for i in 0..m {
            if simplex.basis[i] < n_struct {
                xs[simplex.basis[i]] = simplex.tab[i][rhs_col];
            }
        }
        let x: Vec<f64> = self
            .maps
            .iter()
            .map(|map| map.offset + map.cols.iter().map(|&(c, k)| k * xs[c]).sum::<f64>())
            .collect();
        let objective = lp.costs.iter().zip(&x).map(|(c, v)| c * v).sum();

        let y: Vec<f64> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|r| phase2[simplex.basis[r]] * simplex.tab[r][unit_col[i]])
                    .sum::<f64>()
            })
            .collect();
        let dual_objective =
            self.cost_offset + y.iter().zip(&self.b).map(|(yi, bi)| yi * bi).sum::<f64>();
        let duals = (0..self.user_rows).map(|i| self.signs[i] * y[i]).collect();

        Ok(LpSolution {
            x,
            objective,
            duals,
            dual_objective,
            iterations: simplex.iterations,
        })
    }
}

struct Tableau {
    tab: Vec<Vec<f64>>,
    basis: Vec<usize>,
    rhs_col: usize,
    iterations: usize,
}

impl Tableau {
    /// Minimise with the given column costs; only columns `< eligible` may
    /// enter the basis.
    fn optimize(&mut self, costs: &[f64], eligible: usize) -> Result<(), LpError> {
        let m = self.tab.len();
        loop {
            if self.iterations >= MAX_ITERATIONS {
                return Err(LpError::IterationLimit(MAX_ITERATIONS));
            }
            // Bland: lowest-index column with negative reduced cost.
            let entering = (0..eligible).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = costs[j]
                    - (0..m).map(|i| costs[self.basis[i]] * self.tab[i][j]).sum::<f64>();
                reduced < -COST_EPS
            });
            let Some(j) = entering else {
                return Ok(());
            };

            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.tab[i][j];
                if a <= PIVOT_EPS {
                    continue;
                }
                let ratio = self.tab[i][self.rhs_col] / a;
                leaving = match leaving {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        if ratio < best - 1e-12
                            || (ratio <= best + 1e-12 && self.basis[i] < self.basis[k])
                        {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
            let Some((i, _)) = leaving else {
                return Err(LpError::Unbounded);
            };
            self.pivot(i, j);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        self.iterations += 1;
        let p = self.tab[row][col];
        for v in self.tab[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.tab[row].clone();
        for (i, r) in self.tab.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f == 0.0 {
                continue;
            }
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            r[col] = 0.0;
        }
        self.basis[row] = col;
    }
}

//! Congestion identification: least-cost DC dispatch per scenario, line
//! shadow prices from the flow-limit duals, and normalized congestion
//! weights `W_j = k_j / Σ k_i` over the scenario-averaged prices `k`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Tolerances;
use crate::grid::{BranchId, BusId, Grid};
use crate::lp::{ConstraintKind, LinearProgram, LpError, RowId, VarId};
use crate::ptdf::{FlowVector, InjectionVector, NodalPtdf};

/// Shadow prices at or below this are reported as exactly zero.
const PRICE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CongestionError {
    #[error("scenario '{label}': {reason}")]
    InvalidScenario { label: String, reason: String },
    #[error(
        "scenario '{label}' is infeasible: demand {demand} MW against {capacity} MW of available capacity{}",
        if *.curtailment { "" } else { " (curtailment disabled)" }
    )]
    Infeasible { label: String, demand: f64, capacity: f64, curtailment: bool },
    #[error("scenario '{label}' is unbounded; check for negative costs on uncapped generators")]
    Unbounded { label: String },
    #[error("scenario '{label}': {source}")]
    Solver { label: String, source: LpError },
    #[error("no dispatch results to average")]
    NoResults,
    #[error("uncongested system: no line has a positive average shadow price")]
    Uncongested,
    #[error("invalid congestion weights: {0}")]
    InvalidWeights(String),
    #[error("scenario file: {0}")]
    Parse(String),
}

/// Per-bus load multipliers: one factor for all buses, or a map by bus id
/// (missing buses default to 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum LoadScaling {
    Uniform(f64),
    PerBus(BTreeMap<BusId, f64>),
}

// Untagged enums buffer their input, which loses integer map keys, so the
// two shapes are told apart by hand.
impl<'de> Deserialize<'de> for LoadScaling {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match serde_json::Value::deserialize(deserializer)? {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(LoadScaling::Uniform)
                .ok_or_else(|| D::Error::custom("load factor is not a finite number")),
            serde_json::Value::Object(map) => {
                let mut out = BTreeMap::new();
                for (k, v) in map {
                    let bus: u32 = k
                        .parse()
                        .map_err(|_| D::Error::custom(format!("'{k}' is not a bus id")))?;
                    let f = v
                        .as_f64()
                        .ok_or_else(|| D::Error::custom(format!("load factor for bus {k} is not a number")))?;
                    out.insert(BusId(bus), f);
                }
                Ok(LoadScaling::PerBus(out))
            }
            _ => Err(D::Error::custom("load_scaling must be a number or a map from bus id to factor")),
        }
    }
}

impl Default for LoadScaling {
    fn default() -> Self {
        LoadScaling::Uniform(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub label: String,
    #[serde(default)]
    pub load_scaling: LoadScaling,
    /// Capacity factor by generator position in the case file; 0 takes the
    /// unit offline. Missing generators default to 1.
    #[serde(default)]
    pub generator_availability: BTreeMap<usize, f64>,
}

impl Scenario {
    pub fn base() -> Self {
        Self {
            label: "base".into(),
            load_scaling: LoadScaling::default(),
            generator_availability: BTreeMap::new(),
        }
    }

    pub fn uniform(label: &str, factor: f64) -> Self {
        Self {
            label: label.into(),
            load_scaling: LoadScaling::Uniform(factor),
            generator_availability: BTreeMap::new(),
        }
    }

    pub fn load_factor(&self, bus: BusId) -> f64 {
        match &self.load_scaling {
            LoadScaling::Uniform(f) => *f,
            LoadScaling::PerBus(map) => map.get(&bus).copied().unwrap_or(1.0),
        }
    }

    pub fn availability(&self, generator: usize) -> f64 {
        self.generator_availability.get(&generator).copied().unwrap_or(1.0)
    }

    pub fn validate(&self, grid: &Grid) -> Result<(), CongestionError> {
        let bad = |reason: String| CongestionError::InvalidScenario {
            label: self.label.clone(),
            reason,
        };
        match &self.load_scaling {
            LoadScaling::Uniform(f) if !(*f >= 0.0) => {
                return Err(bad(format!("negative load factor {f}")))
            }
            LoadScaling::PerBus(map) => {
                for (bus, f) in map {
                    if grid.bus_index(*bus).is_none() {
                        return Err(bad(format!("load factor for unknown bus {bus}")));
                    }
                    if !(*f >= 0.0) {
                        return Err(bad(format!("negative load factor {f} at bus {bus}")));
                    }
                }
            }
            _ => {}
        }
        for (g, f) in &self.generator_availability {
            if *g >= grid.generators().len() {
                return Err(bad(format!("availability for unknown generator {g}")));
            }
            if !(*f >= 0.0) {
                return Err(bad(format!("negative availability {f} for generator {g}")));
            }
        }
        Ok(())
    }

    /// Scenario-adjusted demand of every load.
    pub fn demands(&self, grid: &Grid) -> Vec<f64> {
        grid.loads()
            .iter()
            .map(|l| l.demand * self.load_factor(l.bus))
            .collect()
    }

    /// Scenario-adjusted `[pmin, pmax]` of every generator.
    pub fn capacity_bounds(&self, grid: &Grid) -> Vec<(f64, f64)> {
        grid.generators()
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let a = self.availability(i);
                if a > 0.0 {
                    let pmax = g.capacity_max * a;
                    (g.capacity_min.min(pmax), pmax)
                } else {
                    (0.0, 0.0)
                }
            })
            .collect()
    }
}

pub fn parse_scenarios(document: &str) -> Result<Vec<Scenario>, CongestionError> {
    serde_json::from_str(document).map_err(|e| CongestionError::Parse(e.to_string()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DcopfOptions {
    /// Allow load shedding at each load's value of lost load.
    pub allow_curtailment: bool,
    pub tolerances: Tolerances,
}


#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub label: String,
    pub generation: Vec<f64>,
    pub curtailment: Vec<f64>,
    pub injections: InjectionVector,
    pub flows: FlowVector,
    pub objective_cost: f64,
    pub dual_objective: f64,
    /// Sum of upper- and lower-limit multipliers per line (currency/MW).
    pub line_shadow_prices: Vec<f64>,
    pub branch_ids: Vec<BranchId>,
}

/// Least-cost DC dispatch of one scenario.
pub fn solve_dcopf(
    grid: &Grid,
    ptdf: &NodalPtdf,
    scenario: &Scenario,
    options: &DcopfOptions,
) -> Result<DispatchResult, CongestionError> {
    scenario.validate(grid)?;
    let n = grid.bus_count();
    let demands = scenario.demands(grid);
    let bounds = scenario.capacity_bounds(grid);
    let total_demand: f64 = demands.iter().sum();

    let mut lp = LinearProgram::new();
    let gen_vars: Vec<VarId> = grid
        .generators()
        .iter()
        .zip(&bounds)
        .map(|(g, &(lo, hi))| lp.add_variable(g.marginal_cost, lo, hi))
        .collect();
    let curtail_vars: Vec<Option<VarId>> = grid
        .loads()
        .iter()
        .zip(&demands)
        .map(|(l, &d)| {
            (options.allow_curtailment && d > 0.0)
                .then(|| lp.add_variable(l.value_of_lost_load, 0.0, d))
        })
        .collect();

    let gen_bus: Vec<usize> = grid.generators().iter().map(|g| bus_of(grid, g.bus)).collect();
    let load_bus: Vec<usize> = grid.loads().iter().map(|l| bus_of(grid, l.bus)).collect();

    let balance_terms = gen_vars
        .iter()
        .map(|&v| (v, 1.0))
        .chain(curtail_vars.iter().flatten().map(|&v| (v, 1.0)));
    lp.add_constraint(balance_terms, ConstraintKind::Eq, total_demand);

    let mut line_rows: Vec<Option<(RowId, RowId)>> = Vec::with_capacity(grid.branch_count());
    for (l, br) in grid.branches().iter().enumerate() {
        let Some(limit) = br.flow_limit else {
            line_rows.push(None);
            continue;
        };
        let fixed_withdrawal: f64 = load_bus
            .iter()
            .zip(&demands)
            .map(|(&b, &d)| ptdf.get(l, b) * d)
            .sum();
        let terms: Vec<(VarId, f64)> = gen_vars
            .iter()
            .zip(&gen_bus)
            .map(|(&v, &b)| (v, ptdf.get(l, b)))
            .chain(
                curtail_vars
                    .iter()
                    .zip(&load_bus)
                    .filter_map(|(v, &b)| v.map(|v| (v, ptdf.get(l, b)))),
            )
            .collect();
        let upper = lp.add_constraint(terms.clone(), ConstraintKind::Le, limit + fixed_withdrawal);
        let lower = lp.add_constraint(terms, ConstraintKind::Ge, -limit + fixed_withdrawal);
        line_rows.push(Some((upper, lower)));
    }

    let solution = lp.solve().map_err(|e| match e {
        LpError::Infeasible { .. } => CongestionError::Infeasible {
            label: scenario.label.clone(),
            demand: total_demand,
            capacity: bounds.iter().map(|b| b.1).sum(),
            curtailment: options.allow_curtailment,
        },
        LpError::Unbounded => CongestionError::Unbounded { label: scenario.label.clone() },
        other => CongestionError::Solver { label: scenario.label.clone(), source: other },
    })?;

    let generation: Vec<f64> = gen_vars.iter().map(|&v| solution.value(v)).collect();
    let curtailment: Vec<f64> = curtail_vars
        .iter()
        .map(|v| v.map_or(0.0, |v| solution.value(v)))
        .collect();

    let mut p = vec![0.0; n];
    for (&b, &g) in gen_bus.iter().zip(&generation) {
        p[b] += g;
    }
    for ((&b, &d), &c) in load_bus.iter().zip(&demands).zip(&curtailment) {
        p[b] -= d - c;
    }
    let injections = InjectionVector(p);
    let flows = FlowVector(
        (0..grid.branch_count())
            .map(|l| (0..n).map(|b| ptdf.get(l, b) * injections.0[b]).sum())
            .collect(),
    );

    let line_shadow_prices = line_rows
        .iter()
        .map(|rows| {
            rows.map_or(0.0, |(up, lo)| {
                let price = solution.dual(up).abs() + solution.dual(lo).abs();
                if price > PRICE_FLOOR {
                    price
                } else {
                    0.0
                }
            })
        })
        .collect();

    Ok(DispatchResult {
        label: scenario.label.clone(),
        generation,
        curtailment,
        injections,
        flows,
        objective_cost: solution.objective,
        dual_objective: solution.dual_objective,
        line_shadow_prices,
        branch_ids: grid.branches().iter().map(|b| b.id).collect(),
    })
}

fn bus_of(grid: &Grid, id: BusId) -> usize {
    grid.bus_index(id).expect("validated grid has no dangling references")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CongestionEntry {
    pub branch: BranchId,
    /// Scenario-averaged shadow price `k`.
    pub average_cost: f64,
    pub weight: f64,
}

/// Congested lines with strictly positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CongestionWeights {
    entries: Vec<CongestionEntry>,
}

impl CongestionWeights {
    /// Normalize `(branch, average_cost)` pairs into weights. Pairs with
    /// nonpositive cost are dropped.
    pub fn from_costs(costs: &[(BranchId, f64)]) -> Result<Self, CongestionError> {
        let mut seen = std::collections::BTreeSet::new();
        for (b, _) in costs {
            if !seen.insert(*b) {
                return Err(CongestionError::InvalidWeights(format!("duplicate branch {b}")));
            }
        }
        let kept: Vec<(BranchId, f64)> =
            costs.iter().copied().filter(|(_, k)| *k > 0.0).collect();
        let total: f64 = kept.iter().map(|(_, k)| k).sum();
        if kept.is_empty() || !(total > 0.0) {
            return Err(CongestionError::Uncongested);
        }
        Ok(Self {
            entries: kept
                .into_iter()
                .map(|(branch, k)| CongestionEntry { branch, average_cost: k, weight: k / total })
                .collect(),
        })
    }

    /// Rebuild from stored entries, renormalizing the weights.
    pub fn from_entries(entries: Vec<CongestionEntry>) -> Result<Self, CongestionError> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.branch) {
                return Err(CongestionError::InvalidWeights(format!(
                    "duplicate branch {}",
                    e.branch
                )));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(CongestionError::InvalidWeights(format!(
                    "branch {} has nonpositive weight {}",
                    e.branch, e.weight
                )));
            }
        }
        if entries.is_empty() {
            return Err(CongestionError::Uncongested);
        }
        Ok(Self { entries: renormalize(entries) })
    }

    pub fn entries(&self) -> &[CongestionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn branches(&self) -> Vec<BranchId> {
        self.entries.iter().map(|e| e.branch).collect()
    }

    pub fn weight_of(&self, branch: BranchId) -> Option<f64> {
        self.entries.iter().find(|e| e.branch == branch).map(|e| e.weight)
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    /// Drop the lowest-weight line (higher branch id on ties) and
    /// renormalize; `None` when only one line remains.
    pub fn without_weakest(&self) -> Option<Self> {
        if self.entries.len() <= 1 {
            return None;
        }
        let weakest = self
            .entries
            .iter()
            .min_by(|a, b| a.weight.total_cmp(&b.weight).then(b.branch.cmp(&a.branch)))
            .map(|e| e.branch)?;
        let rest = self.entries.iter().filter(|e| e.branch != weakest).cloned().collect();
        Some(Self { entries: renormalize(rest) })
    }
}

fn renormalize(mut entries: Vec<CongestionEntry>) -> Vec<CongestionEntry> {
    let total: f64 = entries.iter().map(|e| e.weight).sum();
    for e in &mut entries {
        e.weight /= total;
    }
    entries
}

/// Average the shadow prices over scenarios and normalize. Lines whose
/// share of the total is at most `min_weight` are dropped before the final
/// renormalization.
pub fn congestion_weights(
    results: &[DispatchResult],
    min_weight: f64,
) -> Result<CongestionWeights, CongestionError> {
    let first = results.first().ok_or(CongestionError::NoResults)?;
    let m = first.line_shadow_prices.len();
    let count = results.len() as f64;
    let mut averages = vec![0.0; m];
    for r in results {
        for (a, k) in averages.iter_mut().zip(&r.line_shadow_prices) {
            *a += k / count;
        }
    }
    let total: f64 = averages.iter().sum();
    if !(total > 0.0) {
        return Err(CongestionError::Uncongested);
    }
    let costs: Vec<(BranchId, f64)> = first
        .branch_ids
        .iter()
        .zip(&averages)
        .filter(|(_, k)| **k / total > min_weight)
        .map(|(b, k)| (*b, *k))
        .collect();
    CongestionWeights::from_costs(&costs)
}

/// Keep the `top_k` heaviest lines (lower branch id wins ties) and
/// renormalize; `None` returns the input unchanged.
pub fn select_congested_lines(weights: &CongestionWeights, top_k: Option<usize>) -> CongestionWeights {
    let Some(k) = top_k else {
        return weights.clone();
    };
    if k >= weights.len() {
        return weights.clone();
    }
    let mut ranked: Vec<&CongestionEntry> = weights.entries.iter().collect();
    ranked.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.branch.cmp(&b.branch)));
    let keep: Vec<BranchId> = ranked.iter().take(k).map(|e| e.branch).collect();
    let entries = weights
        .entries
        .iter()
        .filter(|e| keep.contains(&e.branch))
        .cloned()
        .collect();
    CongestionWeights { entries: renormalize(entries) }
}

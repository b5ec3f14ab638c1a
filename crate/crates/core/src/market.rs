//! Zonal market clearing under zonal-line PTDF limits on inter-zonal lines,
//! welfare accounting, realized flows and comparison of divisions.

use serde::Serialize;
use thiserror::Error;

use crate::config::{Tolerances, DEFAULT_MIN_WEIGHT, DEFAULT_VOLL};
use crate::congestion::{
    congestion_weights, solve_dcopf, CongestionError, CongestionWeights, DcopfOptions, Scenario,
};
use crate::grid::{BranchId, Grid};
use crate::lp::{ConstraintKind, LinearProgram, LpError, VarId};
use crate::ptdf::{FlowVector, InjectionVector, NodalPtdf};
use crate::zonal::{
    build_gsk, crossborder_indices, error_norm, flow_prediction_error, zonal_line_ptdf,
    FlowErrorReport, Gsk, Partition, ZonalError, ZonalInjectionVector,
};

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("market clearing for '{label}' is infeasible: demand cannot be served within capacities and cross-border limits")]
    Infeasible { label: String },
    #[error("market clearing for '{label}' is unbounded")]
    Unbounded { label: String },
    #[error("market clearing for '{label}': {source}")]
    Solver { label: String, source: LpError },
    #[error("bids cover {got} zones, partition has {expected}")]
    ZoneMismatch { expected: usize, got: usize },
    #[error("partition '{label}' covers {got} buses, grid has {expected}")]
    PartitionSize { label: String, expected: usize, got: usize },
    #[error("at least two partitions are needed for a comparison, got {0}")]
    TooFewPartitions(usize),
    #[error("no scenarios to compare over")]
    NoScenarios,
    #[error(transparent)]
    Zonal(#[from] ZonalError),
    #[error(transparent)]
    Congestion(#[from] CongestionError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupplyBid {
    /// Generator position in the grid.
    pub generator: usize,
    pub bus: usize,
    /// Zone position in the partition.
    pub zone: usize,
    pub price: f64,
    pub min_quantity: f64,
    pub max_quantity: f64,
}

/// Inelastic zonal demand with a curtailment value.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandBid {
    pub zone: usize,
    pub quantity: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BidSet {
    pub label: String,
    pub supply: Vec<SupplyBid>,
    /// One per zone, in partition order.
    pub demand: Vec<DemandBid>,
    /// Scenario-adjusted demand per bus, used to spread served demand.
    pub bus_demand: Vec<f64>,
    /// When false, demand must be served in full.
    pub curtailable: bool,
}

impl BidSet {
    pub fn with_curtailment(mut self, curtailable: bool) -> Self {
        self.curtailable = curtailable;
        self
    }

    pub fn zone_count(&self) -> usize {
        self.demand.len()
    }
}

/// Supply bid per generator at marginal cost and available capacity; one
/// zonal demand bid valued at the demand-weighted mean VOLL of its loads.
pub fn make_bids(grid: &Grid, partition: &Partition, scenario: &Scenario) -> BidSet {
    let bounds = scenario.capacity_bounds(grid);
    let supply = grid
        .generators()
        .iter()
        .zip(&bounds)
        .enumerate()
        .map(|(i, (g, &(lo, hi)))| {
            let bus = grid.bus_index(g.bus).expect("validated grid");
            SupplyBid {
                generator: i,
                bus,
                zone: partition.zone_of(bus),
                price: g.marginal_cost,
                min_quantity: lo,
                max_quantity: hi,
            }
        })
        .collect();

    let z = partition.zone_count();
    let mut bus_demand = vec![0.0; grid.bus_count()];
    let mut quantity = vec![0.0; z];
    let mut valued = vec![0.0; z];
    for (load, d) in grid.loads().iter().zip(scenario.demands(grid)) {
        let bus = grid.bus_index(load.bus).expect("validated grid");
        bus_demand[bus] += d;
        quantity[partition.zone_of(bus)] += d;
        valued[partition.zone_of(bus)] += d * load.value_of_lost_load;
    }
    let demand = (0..z)
        .map(|j| DemandBid {
            zone: j,
            quantity: quantity[j],
            value: if quantity[j] > 0.0 { valued[j] / quantity[j] } else { DEFAULT_VOLL },
        })
        .collect();

    BidSet { label: scenario.label.clone(), supply, demand, bus_demand, curtailable: true }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketOutcome {
    pub label: String,
    /// Per supply bid.
    pub accepted_supply: Vec<f64>,
    /// Per zone.
    pub served_demand: Vec<f64>,
    pub net_positions: ZonalInjectionVector,
    /// Zonal prices, the duals of the zonal balance rows.
    pub prices: Vec<f64>,
    /// Branch positions of the inter-zonal lines.
    pub crossborder: Vec<usize>,
    /// `zIPTDF · q` on the inter-zonal lines.
    pub crossborder_flows: Vec<f64>,
    pub consumer_surplus: f64,
    pub producer_surplus: f64,
    pub congestion_rent: f64,
    pub social_welfare: f64,
    pub dual_objective: f64,
    pub gsk_pre: Gsk,
}

impl MarketOutcome {
    /// Nodal injections after clearing: accepted supply at generator buses
    /// minus served demand, spread over each zone's loads pro rata.
    pub fn nodal_injections(&self, bids: &BidSet, partition: &Partition) -> InjectionVector {
        let mut p = vec![0.0; bids.bus_demand.len()];
        for (bid, &s) in bids.supply.iter().zip(&self.accepted_supply) {
            p[bid.bus] += s;
        }
        for (bus, &d) in bids.bus_demand.iter().enumerate() {
            let bid = &bids.demand[partition.zone_of(bus)];
            if bid.quantity > 0.0 {
                p[bus] -= d * self.served_demand[bid.zone] / bid.quantity;
            }
        }
        InjectionVector(p)
    }
}

/// Welfare-maximizing zonal clearing.
pub fn clear_market(
    bids: &BidSet,
    partition: &Partition,
    nptdf: &NodalPtdf,
    gsk_pre: &Gsk,
    grid: &Grid,
) -> Result<MarketOutcome, MarketError> {
    let z = partition.zone_count();
    if bids.zone_count() != z {
        return Err(MarketError::ZoneMismatch { expected: z, got: bids.zone_count() });
    }
    if gsk_pre.partition() != partition {
        return Err(ZonalError::MismatchedPartitions.into());
    }
    let ziptdf = zonal_line_ptdf(nptdf, gsk_pre)?;

    let mut lp = LinearProgram::new();
    let s: Vec<VarId> = bids
        .supply
        .iter()
        .map(|b| lp.add_variable(b.price, b.min_quantity, b.max_quantity))
        .collect();
    let d: Vec<VarId> = bids
        .demand
        .iter()
        .map(|b| {
            let lower = if bids.curtailable { 0.0 } else { b.quantity };
            lp.add_variable(-b.value, lower, b.quantity)
        })
        .collect();
    let q: Vec<VarId> = (0..z)
        .map(|_| lp.add_variable(0.0, f64::NEG_INFINITY, f64::INFINITY))
        .collect();

    let balance: Vec<_> = (0..z)
        .map(|j| {
            let terms = bids
                .supply
                .iter()
                .zip(&s)
                .filter(|(b, _)| b.zone == j)
                .map(|(_, &v)| (v, 1.0))
                .chain([(d[j], -1.0), (q[j], -1.0)]);
            lp.add_constraint(terms, ConstraintKind::Eq, 0.0)
        })
        .collect();
    lp.add_constraint(q.iter().map(|&v| (v, 1.0)), ConstraintKind::Eq, 0.0);

    let crossborder = crossborder_indices(partition, nptdf.endpoints());
    for &l in &crossborder {
        let Some(limit) = grid.branches()[l].flow_limit else { continue };
        let terms: Vec<(VarId, f64)> = q.iter().enumerate().map(|(j, &v)| (v, ziptdf.get(l, j))).collect();
        lp.add_constraint(terms.clone(), ConstraintKind::Le, limit);
        lp.add_constraint(terms, ConstraintKind::Ge, -limit);
    }

    let solution = lp.solve().map_err(|e| match e {
        LpError::Infeasible { .. } => MarketError::Infeasible { label: bids.label.clone() },
        LpError::Unbounded => MarketError::Unbounded { label: bids.label.clone() },
        other => MarketError::Solver { label: bids.label.clone(), source: other },
    })?;

    let accepted_supply: Vec<f64> = s.iter().map(|&v| solution.value(v)).collect();
    let served_demand: Vec<f64> = d.iter().map(|&v| solution.value(v)).collect();
    let net_positions = ZonalInjectionVector(q.iter().map(|&v| solution.value(v)).collect());
    let prices: Vec<f64> = balance.iter().map(|&r| solution.dual(r)).collect();
    let flows = ziptdf.flows(&net_positions);
    let crossborder_flows = crossborder.iter().map(|&l| flows.0[l]).collect();

    let consumer_surplus: f64 = bids
        .demand
        .iter()
        .zip(&served_demand)
        .map(|(b, &x)| (b.value - prices[b.zone]) * x)
        .sum();
    let producer_surplus: f64 = bids
        .supply
        .iter()
        .zip(&accepted_supply)
        .map(|(b, &x)| (prices[b.zone] - b.price) * x)
        .sum();
    let congestion_rent: f64 = -prices.iter().zip(&net_positions.0).map(|(p, q)| p * q).sum::<f64>();

    Ok(MarketOutcome {
        label: bids.label.clone(),
        accepted_supply,
        served_demand,
        net_positions,
        prices,
        crossborder,
        crossborder_flows,
        consumer_surplus,
        producer_surplus,
        congestion_rent,
        social_welfare: -solution.objective,
        dual_objective: solution.dual_objective,
        gsk_pre: gsk_pre.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateFlag {
    /// Predicted flow below the realized one.
    Under,
    Over,
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineEstimate {
    pub branch: BranchId,
    pub predicted: f64,
    pub actual: f64,
    pub flag: EstimateFlag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizedFlows {
    /// `nPTDF · GSK_pre · q` on all lines.
    pub predicted: FlowVector,
    /// `nPTDF · GSK_act · q` on all lines.
    pub actual: FlowVector,
    pub report: FlowErrorReport,
    /// One entry per inter-zonal line.
    pub estimates: Vec<LineEstimate>,
}

pub fn realized_flows(
    outcome: &MarketOutcome,
    nptdf: &NodalPtdf,
    gsk_act: &Gsk,
    tol: &Tolerances,
) -> Result<RealizedFlows, MarketError> {
    let q = &outcome.net_positions;
    let report = flow_prediction_error(nptdf, &outcome.gsk_pre, gsk_act, q)?
        .with_labels("pre", &outcome.label);
    let predicted = zonal_line_ptdf(nptdf, &outcome.gsk_pre)?.flows(q);
    let actual = zonal_line_ptdf(nptdf, gsk_act)?.flows(q);
    let estimates = report
        .crossborder
        .iter()
        .map(|&l| {
            let delta = report.delta_flows[l];
            let flag = if delta < -tol.limit {
                EstimateFlag::Under
            } else if delta > tol.limit {
                EstimateFlag::Over
            } else {
                EstimateFlag::Exact
            };
            LineEstimate {
                branch: report.branch_ids[l],
                predicted: predicted.0[l],
                actual: actual.0[l],
                flag,
            }
        })
        .collect();
    Ok(RealizedFlows { predicted, actual, report, estimates })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    /// Weights for the error norm; derived from the forecast dispatches when absent.
    pub weights: Option<CongestionWeights>,
    pub tolerances: Tolerances,
    pub allow_curtailment: bool,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { weights: None, tolerances: Tolerances::default(), allow_curtailment: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    /// `None` when every scenario was undefined for this division.
    pub mean_sw: Option<f64>,
    pub delta_sw_vs_first: Option<f64>,
    pub mean_error_norm: Option<f64>,
    pub intrazonal_overload_count: usize,
    pub singular_scenario_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub scenario_count: usize,
}

/// Clear every (division, scenario) pair. The forecast GSK of a scenario
/// comes from its least-cost nodal dispatch, which does not depend on the
/// division; the realized GSK comes from the cleared zonal outcome.
pub fn compare_divisions(
    grid: &Grid,
    nptdf: &NodalPtdf,
    partitions: &[(String, Partition)],
    scenarios: &[Scenario],
    options: &CompareOptions,
) -> Result<ComparisonTable, MarketError> {
    if partitions.len() < 2 {
        return Err(MarketError::TooFewPartitions(partitions.len()));
    }
    if scenarios.is_empty() {
        return Err(MarketError::NoScenarios);
    }
    for (label, p) in partitions {
        if p.bus_count() != grid.bus_count() {
            return Err(MarketError::PartitionSize {
                label: label.clone(),
                expected: grid.bus_count(),
                got: p.bus_count(),
            });
        }
    }
    let tol = &options.tolerances;
    let dcopf = DcopfOptions { allow_curtailment: options.allow_curtailment, tolerances: *tol };
    let forecasts = scenarios
        .iter()
        .map(|s| solve_dcopf(grid, nptdf, s, &dcopf))
        .collect::<Result<Vec<_>, _>>()?;
    let weights = match &options.weights {
        Some(w) => Some(w.clone()),
        None => match congestion_weights(&forecasts, DEFAULT_MIN_WEIGHT) {
            Ok(w) => Some(w),
            Err(CongestionError::Uncongested) => None,
            Err(e) => return Err(e.into()),
        },
    };

    let mut rows = Vec::with_capacity(partitions.len());
    for (label, partition) in partitions {
        let border = crossborder_indices(partition, nptdf.endpoints());
        let internal: Vec<(usize, f64)> = grid
            .branches()
            .iter()
            .enumerate()
            .filter(|(l, _)| !border.contains(l))
            .filter_map(|(l, b)| b.flow_limit.map(|lim| (l, lim)))
            .collect();

        let mut sw = Vec::new();
        let mut norms = Vec::new();
        let mut overloads = 0;
        let mut singular = 0;
        for (scenario, forecast) in scenarios.iter().zip(&forecasts) {
            let gsk_pre = match build_gsk(partition, &forecast.injections, tol) {
                Ok(g) => g,
                Err(ZonalError::SingularGsk { .. }) => {
                    singular += 1;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let bids = make_bids(grid, partition, scenario).with_curtailment(options.allow_curtailment);
            let outcome = clear_market(&bids, partition, nptdf, &gsk_pre, grid)?;
            let p_act = outcome.nodal_injections(&bids, partition);
            let gsk_act = match build_gsk(partition, &p_act, tol) {
                Ok(g) => g,
                Err(ZonalError::SingularGsk { .. }) => {
                    singular += 1;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let realized = realized_flows(&outcome, nptdf, &gsk_act, tol)?;
            overloads += internal
                .iter()
                .filter(|&&(l, lim)| realized.actual.0[l].abs() > lim + tol.limit)
                .count();
            norms.push(match &weights {
                Some(w) => error_norm(&realized.report, w)?,
                None => 0.0,
            });
            sw.push(outcome.social_welfare);
        }
        rows.push(ComparisonRow {
            label: label.clone(),
            mean_sw: mean(&sw),
            delta_sw_vs_first: None,
            mean_error_norm: mean(&norms),
            intrazonal_overload_count: overloads,
            singular_scenario_count: singular,
        });
    }
    let first = rows[0].mean_sw;
    for row in &mut rows {
        row.delta_sw_vs_first = match (row.mean_sw, first) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
    }
    Ok(ComparisonTable { rows, scenario_count: scenarios.len() })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

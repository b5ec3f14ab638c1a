//! Zonal division of transmission grids from congestion-weighted PTDFs.
//!
//! The pipeline: parse a [`Grid`], build its nodal PTDF, find congested
//! lines and their weights by least-cost dispatch over scenarios, cluster
//! buses into a hierarchy of contiguous zones, then clear a zonal market on
//! candidate divisions and compare welfare and flow prediction error.

pub mod bubbleclust;
pub mod config;
pub mod congestion;
pub mod grid;
pub mod lp;
pub mod market;
pub mod ptdf;
pub mod zonal;

pub use bubbleclust::{
    bubbleclust, embed_ptdf_space, enforce_generation, grow_zones, merge_zones, seed_zones,
    ClusterError, ClusterRun, DivisionHierarchy, Euclidean, Manhattan, MergeEvent, Metric,
    PtdfSpace, ZoneState,
};
pub use config::{Tolerances, DEFAULT_MIN_WEIGHT, DEFAULT_VOLL};
pub use congestion::{
    congestion_weights, parse_scenarios, select_congested_lines, solve_dcopf, CongestionError,
    CongestionWeights, DcopfOptions, DispatchResult, Scenario,
};
pub use grid::{parse_grid, Adjacency, BranchId, BusId, Grid, GridError, Violation};
pub use market::{
    clear_market, compare_divisions, make_bids, realized_flows, BidSet, CompareOptions,
    ComparisonTable, MarketError, MarketOutcome,
};
pub use ptdf::{build_nodal_ptdf, FlowVector, InjectionVector, NodalPtdf, PtdfError};
pub use zonal::{
    build_gsk, error_norm, flow_prediction_error, parse_partition, zonal_injections,
    zonal_line_ptdf, Gsk, Partition, ZonalError, ZonalInjectionVector, ZoneId,
};

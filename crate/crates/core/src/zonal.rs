//! Partitions, generation shift keys, zonal-line PTDFs and the flow
//! prediction error `nPTDF (GSK_pre - GSK_act) q_act`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Tolerances;
use crate::congestion::CongestionWeights;
use crate::grid::{Adjacency, BranchId, BusId, Grid};
use crate::ptdf::{FlowVector, InjectionVector, NodalPtdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZoneId(pub u32);

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ZonalError {
    #[error("partition covers {got} buses, grid has {expected}")]
    WrongBusCount { expected: usize, got: usize },
    #[error("bus {0} is assigned to more than one zone")]
    DuplicateBus(BusId),
    #[error("bus {0} is not assigned to any zone")]
    UnassignedBus(BusId),
    #[error("zone {0} is empty")]
    EmptyZone(ZoneId),
    #[error("zone id {0} appears more than once")]
    DuplicateZone(ZoneId),
    #[error("zone {0} is not connected")]
    NotContiguous(ZoneId),
    #[error("partition references unknown bus {0}")]
    UnknownBus(BusId),
    #[error("singular GSK: zones with |net position| <= {epsilon} MW: {}", fmt_zones(.zones))]
    SingularGsk { zones: Vec<(ZoneId, f64)>, epsilon: f64 },
    #[error("GSK column for zone {zone} sums to {sum}, expected 1")]
    GskColumnSum { zone: ZoneId, sum: f64 },
    #[error("GSK entry for bus {bus} is nonzero outside its zone {zone}")]
    GskOutsideZone { bus: BusId, zone: ZoneId },
    #[error("operators are defined over different partitions")]
    MismatchedPartitions,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("weighted line {0} is not a branch of the network")]
    UnknownBranch(BranchId),
    #[error("partition file: {0}")]
    Parse(String),
}

fn fmt_zones(zones: &[(ZoneId, f64)]) -> String {
    zones
        .iter()
        .map(|(z, q)| format!("zone {z} (q = {q})"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Assignment of every bus (dense index) to exactly one zone.
///
/// Zones are kept sorted by id; the position of a zone in that order is its
/// column in GSK and zonal PTDF matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    zone_ids: Vec<ZoneId>,
    members: Vec<Vec<usize>>,
    zone_of: Vec<usize>,
}

impl Partition {
    /// One label per bus.
    pub fn from_assignment(assignment: &[ZoneId]) -> Self {
        let mut groups: BTreeMap<ZoneId, Vec<usize>> = BTreeMap::new();
        for (bus, &z) in assignment.iter().enumerate() {
            groups.entry(z).or_default().push(bus);
        }
        let zone_ids: Vec<ZoneId> = groups.keys().copied().collect();
        let members: Vec<Vec<usize>> = groups.into_values().collect();
        let mut zone_of = vec![0; assignment.len()];
        for (pos, m) in members.iter().enumerate() {
            for &b in m {
                zone_of[b] = pos;
            }
        }
        Self { zone_ids, members, zone_of }
    }

    /// Build from explicit groups of bus indices over `n` buses.
    pub fn from_groups(groups: &[(ZoneId, Vec<usize>)], n: usize) -> Result<Self, ZonalError> {
        let mut assignment: Vec<Option<ZoneId>> = vec![None; n];
        let mut ids = std::collections::BTreeSet::new();
        for (z, buses) in groups {
            if !ids.insert(*z) {
                return Err(ZonalError::DuplicateZone(*z));
            }
            if buses.is_empty() {
                return Err(ZonalError::EmptyZone(*z));
            }
            for &b in buses {
                if b >= n {
                    return Err(ZonalError::WrongBusCount { expected: n, got: b + 1 });
                }
                if assignment[b].replace(*z).is_some() {
                    return Err(ZonalError::DuplicateBus(BusId(b as u32)));
                }
            }
        }
        let assignment = assignment
            .into_iter()
            .enumerate()
            .map(|(b, z)| z.ok_or(ZonalError::UnassignedBus(BusId(b as u32))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_assignment(&assignment))
    }

    pub fn single_zone(n: usize) -> Self {
        Self::from_assignment(&vec![ZoneId(0); n])
    }

    pub fn bus_count(&self) -> usize {
        self.zone_of.len()
    }

    pub fn zone_count(&self) -> usize {
        self.zone_ids.len()
    }

    pub fn zone_ids(&self) -> &[ZoneId] {
        &self.zone_ids
    }

    /// Members of the zone at position `zone`, sorted.
    pub fn members(&self, zone: usize) -> &[usize] {
        &self.members[zone]
    }

    pub fn zones(&self) -> impl Iterator<Item = (ZoneId, &[usize])> {
        self.zone_ids.iter().copied().zip(self.members.iter().map(|m| m.as_slice()))
    }

    /// Zone position of a bus.
    pub fn zone_of(&self, bus: usize) -> usize {
        self.zone_of[bus]
    }

    pub fn zone_id_of(&self, bus: usize) -> ZoneId {
        self.zone_ids[self.zone_of[bus]]
    }

    /// Groupings compared without regard to zone labels.
    pub fn same_grouping(&self, other: &Partition) -> bool {
        let mut a: Vec<&Vec<usize>> = self.members.iter().collect();
        let mut b: Vec<&Vec<usize>> = other.members.iter().collect();
        a.sort();
        b.sort();
        a == b
    }

    pub fn check_contiguity(&self, adjacency: &Adjacency) -> Result<(), ZonalError> {
        if adjacency.len() != self.bus_count() {
            return Err(ZonalError::WrongBusCount {
                expected: adjacency.len(),
                got: self.bus_count(),
            });
        }
        for (z, m) in self.zones() {
            if !adjacency.is_connected_subset(m) {
                return Err(ZonalError::NotContiguous(z));
            }
        }
        Ok(())
    }

    /// Load a partition file against a grid and check totality and contiguity.
    pub fn from_file(file: &PartitionFile, grid: &Grid) -> Result<Self, ZonalError> {
        let mut groups = Vec::with_capacity(file.zones.len());
        for zone in &file.zones {
            let buses = zone
                .buses
                .iter()
                .map(|&id| grid.bus_index(id).ok_or(ZonalError::UnknownBus(id)))
                .collect::<Result<Vec<_>, _>>()?;
            groups.push((zone.id, buses));
        }
        let partition = Self::from_groups(&groups, grid.bus_count()).map_err(|e| match e {
            ZonalError::DuplicateBus(b) => ZonalError::DuplicateBus(grid.bus_id(b.0 as usize)),
            ZonalError::UnassignedBus(b) => ZonalError::UnassignedBus(grid.bus_id(b.0 as usize)),
            other => other,
        })?;
        partition.check_contiguity(&grid.adjacency())?;
        Ok(partition)
    }

    pub fn to_file(&self, grid: &Grid) -> PartitionFile {
        PartitionFile {
            zones: self
                .zones()
                .map(|(id, m)| ZoneEntry { id, buses: m.iter().map(|&b| grid.bus_id(b)).collect() })
                .collect(),
        }
    }

    /// Whether every zone contains a bus flagged in `has_generation`.
    pub fn every_zone_has(&self, has_generation: &[bool]) -> bool {
        self.members.iter().all(|m| m.iter().any(|&b| has_generation[b]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionFile {
    pub zones: Vec<ZoneEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneEntry {
    pub id: ZoneId,
    pub buses: Vec<BusId>,
}

pub fn parse_partition(document: &str, grid: &Grid) -> Result<Partition, ZonalError> {
    let file: PartitionFile =
        serde_json::from_str(document).map_err(|e| ZonalError::Parse(e.to_string()))?;
    Partition::from_file(&file, grid)
}

/// Zonal net positions in MW, one per zone in partition order.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalInjectionVector(pub Vec<f64>);

impl ZonalInjectionVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn imbalance(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Net position per zone. Summed with Neumaier compensation: GSK entries
/// divide by these, so cancellation error in a nearly balanced zone would
/// show up directly in the GSK column sums.
pub fn zonal_injections(partition: &Partition, p: &InjectionVector) -> ZonalInjectionVector {
    let z = partition.zone_count();
    let mut sum = vec![0.0; z];
    let mut carry = vec![0.0; z];
    for (bus, &v) in p.as_slice().iter().enumerate() {
        let j = partition.zone_of(bus);
        let t = sum[j] + v;
        carry[j] += if sum[j].abs() >= v.abs() { (sum[j] - t) + v } else { (v - t) + sum[j] };
        sum[j] = t;
    }
    ZonalInjectionVector(sum.iter().zip(&carry).map(|(s, c)| s + c).collect())
}

/// N×Z matrix of nodal shares in zonal net positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Gsk {
    matrix: DMatrix<f64>,
    partition: Partition,
}

impl Gsk {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Wrap an explicit matrix after checking zone support and column sums.
    pub fn from_matrix(
        partition: &Partition,
        matrix: DMatrix<f64>,
        tol: &Tolerances,
    ) -> Result<Self, ZonalError> {
        let (n, z) = matrix.shape();
        if n != partition.bus_count() || z != partition.zone_count() {
            return Err(ZonalError::Dimension {
                expected: partition.bus_count() * partition.zone_count(),
                got: n * z,
            });
        }
        for bus in 0..n {
            for zone in 0..z {
                if zone != partition.zone_of(bus) && matrix[(bus, zone)] != 0.0 {
                    return Err(ZonalError::GskOutsideZone {
                        bus: BusId(bus as u32),
                        zone: partition.zone_ids()[zone],
                    });
                }
            }
        }
        for zone in 0..z {
            let sum = matrix.column(zone).sum();
            if (sum - 1.0).abs() > tol.gsk_column {
                return Err(ZonalError::GskColumnSum { zone: partition.zone_ids()[zone], sum });
            }
        }
        Ok(Self { matrix, partition: partition.clone() })
    }

    /// GSK · q, the nodal pattern implied by zonal net positions.
    pub fn nodal_pattern(&self, q: &ZonalInjectionVector) -> InjectionVector {
        let v = &self.matrix * DVector::from_column_slice(q.as_slice());
        InjectionVector(v.iter().copied().collect())
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.sum()).collect()
    }
}

/// `GSK_ij = p_i / q_j` for bus `i` in zone `j`. Fails when any zone's net
/// position is within `epsilon_gsk` of zero.
pub fn build_gsk(
    partition: &Partition,
    p: &InjectionVector,
    tol: &Tolerances,
) -> Result<Gsk, ZonalError> {
    if p.len() != partition.bus_count() {
        return Err(ZonalError::Dimension { expected: partition.bus_count(), got: p.len() });
    }
    let q = zonal_injections(partition, p);
    let singular: Vec<(ZoneId, f64)> = partition
        .zone_ids()
        .iter()
        .zip(q.as_slice())
        .filter(|(_, qj)| qj.abs() <= tol.epsilon_gsk)
        .map(|(z, qj)| (*z, *qj))
        .collect();
    if !singular.is_empty() {
        return Err(ZonalError::SingularGsk { zones: singular, epsilon: tol.epsilon_gsk });
    }
    let mut matrix = DMatrix::zeros(partition.bus_count(), partition.zone_count());
    for (bus, &pi) in p.as_slice().iter().enumerate() {
        let zone = partition.zone_of(bus);
        matrix[(bus, zone)] = pi / q.0[zone];
    }
    Ok(Gsk { matrix, partition: partition.clone() })
}

/// M×Z map from zonal net positions to line flows.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalLinePtdf {
    matrix: DMatrix<f64>,
}

impl ZonalLinePtdf {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, line: usize, zone: usize) -> f64 {
        self.matrix[(line, zone)]
    }

    pub fn flows(&self, q: &ZonalInjectionVector) -> FlowVector {
        let v = &self.matrix * DVector::from_column_slice(q.as_slice());
        FlowVector(v.iter().copied().collect())
    }
}

pub fn zonal_line_ptdf(nptdf: &NodalPtdf, gsk: &Gsk) -> Result<ZonalLinePtdf, ZonalError> {
    if nptdf.bus_count() != gsk.matrix.nrows() {
        return Err(ZonalError::Dimension { expected: nptdf.bus_count(), got: gsk.matrix.nrows() });
    }
    Ok(ZonalLinePtdf { matrix: nptdf.matrix() * &gsk.matrix })
}

/// Lines whose endpoints lie in different zones, as branch positions.
pub fn crossborder_indices(partition: &Partition, endpoints: &[(usize, usize)]) -> Vec<usize> {
    endpoints
        .iter()
        .enumerate()
        .filter(|(_, &(f, t))| partition.zone_of(f) != partition.zone_of(t))
        .map(|(l, _)| l)
        .collect()
}

pub fn crossborder_lines(partition: &Partition, grid: &Grid) -> Vec<BranchId> {
    (0..grid.branch_count())
        .filter(|&l| {
            grid.branch_endpoints(l)
                .is_some_and(|(f, t)| partition.zone_of(f) != partition.zone_of(t))
        })
        .map(|l| grid.branch_id(l))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowErrorReport {
    pub pre_label: String,
    pub act_label: String,
    pub branch_ids: Vec<BranchId>,
    /// Predicted minus actual flow on every line.
    pub delta_flows: Vec<f64>,
    /// Positions of the inter-zonal lines.
    pub crossborder: Vec<usize>,
    /// `delta_flows` restricted to `crossborder`.
    pub delta_crossborder: Vec<f64>,
    /// Largest |column sum| of `GSK_pre - GSK_act`.
    pub max_delta_gsk_column_sum: f64,
}

impl FlowErrorReport {
    pub fn with_labels(mut self, pre: &str, act: &str) -> Self {
        self.pre_label = pre.into();
        self.act_label = act.into();
        self
    }
}

pub fn flow_prediction_error(
    nptdf: &NodalPtdf,
    gsk_pre: &Gsk,
    gsk_act: &Gsk,
    q_act: &ZonalInjectionVector,
) -> Result<FlowErrorReport, ZonalError> {
    if gsk_pre.partition != gsk_act.partition {
        return Err(ZonalError::MismatchedPartitions);
    }
    let z = gsk_pre.partition.zone_count();
    if q_act.0.len() != z {
        return Err(ZonalError::Dimension { expected: z, got: q_act.0.len() });
    }
    let delta_gsk = &gsk_pre.matrix - &gsk_act.matrix;
    let max_delta_gsk_column_sum = delta_gsk
        .column_iter()
        .map(|c| c.sum().abs())
        .fold(0.0, f64::max);
    let delta = nptdf.matrix() * (delta_gsk * DVector::from_column_slice(q_act.as_slice()));
    let delta_flows: Vec<f64> = delta.iter().copied().collect();
    let crossborder = crossborder_indices(&gsk_pre.partition, nptdf.endpoints());
    let delta_crossborder = crossborder.iter().map(|&l| delta_flows[l]).collect();
    Ok(FlowErrorReport {
        pre_label: "pre".into(),
        act_label: "act".into(),
        branch_ids: nptdf.branch_ids().to_vec(),
        delta_flows,
        crossborder,
        delta_crossborder,
        max_delta_gsk_column_sum,
    })
}

/// Euclidean norm of `W_l · Δp̃_l` over the weighted lines.
pub fn error_norm(report: &FlowErrorReport, weights: &CongestionWeights) -> Result<f64, ZonalError> {
    let mut sum = 0.0;
    for e in weights.entries() {
        let l = report
            .branch_ids
            .iter()
            .position(|&b| b == e.branch)
            .ok_or(ZonalError::UnknownBranch(e.branch))?;
        let v = e.weight * report.delta_flows[l];
        sum += v * v;
    }
    Ok(sum.sqrt())
}

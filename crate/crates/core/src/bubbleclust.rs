//! Two-stage clustering of buses in congestion-weighted PTDF space.
//!
//! Stage one seeds a singleton zone at every endpoint of a weighted
//! congested line and grows the zones greedily: at each step the
//! (free bus, zone) pair with the smallest distance between the bus point
//! and the zone center is joined, where the bus must be a grid neighbour of
//! the zone. Stage two repeatedly merges the closest pair of adjacent zones,
//! producing one contiguous division for every zone count from `k` down to 2.
//!
//! Ties are broken deterministically: lower bus index, then lower zone id
//! while growing; lexicographically lower zone-id pair while merging.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Tolerances;
use crate::congestion::CongestionWeights;
use crate::grid::{Adjacency, BranchId, Grid};
use crate::ptdf::NodalPtdf;
use crate::zonal::{Partition, PartitionFile, ZonalError, ZoneId};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("no congested lines to cluster on")]
    NoCongestedLines,
    #[error("congested line {0} is not a branch of the network")]
    UnknownBranch(BranchId),
    #[error("requested {z} zones, but the hierarchy spans 2..={k}")]
    ZoneCountOutOfRange { z: usize, k: usize },
    #[error("zones cannot grow over the whole grid; {free} buses are unreachable from every seed")]
    Disconnected { free: usize },
    #[error("no division into {z} zones gives every zone a generator, even with a single congested line")]
    GenerationUnsatisfiable { z: usize },
    #[error("point dimensions disagree")]
    Dimension,
    #[error(transparent)]
    Zonal(#[from] ZonalError),
}

/// Distance between PTDF-space points.
pub trait Metric {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Euclidean;

impl Metric for Euclidean {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Manhattan;

impl Metric for Manhattan {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }
}

/// One K-dimensional point per bus.
#[derive(Debug, Clone, PartialEq)]
pub struct PtdfSpace {
    points: Vec<Vec<f64>>,
    dimension_labels: Vec<BranchId>,
    weights: Vec<f64>,
}

impl PtdfSpace {
    /// Wrap raw points, e.g. for synthetic clustering problems.
    pub fn from_points(
        points: Vec<Vec<f64>>,
        dimension_labels: Vec<BranchId>,
        weights: Vec<f64>,
    ) -> Result<Self, ClusterError> {
        let k = dimension_labels.len();
        if weights.len() != k || points.iter().any(|p| p.len() != k) {
            return Err(ClusterError::Dimension);
        }
        Ok(Self { points, dimension_labels, weights })
    }

    pub fn point(&self, bus: usize) -> &[f64] {
        &self.points[bus]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension_labels.len()
    }

    pub fn dimension_labels(&self) -> &[BranchId] {
        &self.dimension_labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Arithmetic mean of the member points.
    pub fn centroid(&self, members: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.dimension()];
        for &m in members {
            for (ci, v) in c.iter_mut().zip(&self.points[m]) {
                *ci += v;
            }
        }
        let n = members.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }
}

/// `point_i[d] = W_d · nPTDF[line_d, i]` over the weighted lines.
pub fn embed_ptdf_space(
    nptdf: &NodalPtdf,
    weights: &CongestionWeights,
) -> Result<PtdfSpace, ClusterError> {
    if weights.is_empty() {
        return Err(ClusterError::NoCongestedLines);
    }
    let mut rows = Vec::with_capacity(weights.len());
    for e in weights.entries() {
        let l = nptdf
            .branch_ids()
            .iter()
            .position(|&b| b == e.branch)
            .ok_or(ClusterError::UnknownBranch(e.branch))?;
        rows.push((l, e.weight));
    }
    let points = (0..nptdf.bus_count())
        .map(|i| rows.iter().map(|&(l, w)| w * nptdf.get(l, i)).collect())
        .collect();
    Ok(PtdfSpace {
        points,
        dimension_labels: weights.branches(),
        weights: rows.iter().map(|r| r.1).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneState {
    pub id: ZoneId,
    /// Sorted bus indices.
    pub members: Vec<usize>,
    pub center: Vec<f64>,
    pub has_generation: bool,
}

impl ZoneState {
    pub fn singleton(id: ZoneId, bus: usize, space: &PtdfSpace, generator_buses: &[bool]) -> Self {
        Self {
            id,
            members: vec![bus],
            center: space.point(bus).to_vec(),
            has_generation: generator_buses.get(bus).copied().unwrap_or(false),
        }
    }
}

/// Singleton zones, one per distinct seed bus, numbered in ascending bus order.
pub fn seeds_from_buses(buses: &[usize], space: &PtdfSpace, generator_buses: &[bool]) -> Vec<ZoneState> {
    let mut buses = buses.to_vec();
    buses.sort_unstable();
    buses.dedup();
    buses
        .into_iter()
        .enumerate()
        .map(|(k, b)| ZoneState::singleton(ZoneId(k as u32), b, space, generator_buses))
        .collect()
}

/// Seeds at the endpoints of every weighted line; shared endpoints yield a
/// single seed, so `k <= 2K`.
pub fn seed_zones(
    weights: &CongestionWeights,
    grid: &Grid,
    space: &PtdfSpace,
) -> Result<Vec<ZoneState>, ClusterError> {
    if weights.is_empty() {
        return Err(ClusterError::NoCongestedLines);
    }
    let mut buses = Vec::with_capacity(2 * weights.len());
    for e in weights.entries() {
        let l = grid.branch_index(e.branch).ok_or(ClusterError::UnknownBranch(e.branch))?;
        let (f, t) = grid.branch_endpoints(l).ok_or(ClusterError::UnknownBranch(e.branch))?;
        buses.push(f);
        buses.push(t);
    }
    Ok(seeds_from_buses(&buses, space, &grid.generator_buses()))
}

/// First candidate, in the given (lexicographic) order, whose distance is
/// within `tie` of the minimum.
fn first_within_tie(candidates: &[(usize, usize, f64)], tie: f64) -> Option<(usize, usize, f64)> {
    let min = candidates.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    candidates.iter().copied().find(|c| c.2 <= min + tie)
}

/// Stage one: grow seeds until every bus belongs to a zone.
pub fn grow_zones(
    seeds: &[ZoneState],
    space: &PtdfSpace,
    adjacency: &Adjacency,
    metric: &dyn Metric,
    tol: &Tolerances,
) -> Result<Partition, ClusterError> {
    let n = adjacency.len();
    let mut zones: Vec<ZoneState> = seeds.to_vec();
    zones.sort_by_key(|z| z.id);
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (pos, z) in zones.iter().enumerate() {
        for &b in &z.members {
            owner[b] = Some(pos);
        }
    }
    let mut free = owner.iter().filter(|o| o.is_none()).count();
    let mut touching = Vec::with_capacity(zones.len());

    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    while free > 0 {
        candidates.clear();
        for bus in (0..n).filter(|&b| owner[b].is_none()) {
            touching.clear();
            touching.extend(adjacency.neighbors(bus).iter().filter_map(|&w| owner[w]));
            touching.sort_unstable();
            touching.dedup();
            for &pos in &touching {
                candidates.push((bus, pos, metric.distance(space.point(bus), &zones[pos].center)));
            }
        }
        let Some((bus, pos, _)) = first_within_tie(&candidates, tol.tie) else {
            return Err(ClusterError::Disconnected { free });
        };
        owner[bus] = Some(pos);
        zones[pos].members.push(bus);
        zones[pos].members.sort_unstable();
        zones[pos].center = space.centroid(&zones[pos].members);
        free -= 1;
    }

    let assignment: Vec<ZoneId> = owner
        .into_iter()
        .map(|o| zones[o.expect("all buses assigned")].id)
        .collect();
    Ok(Partition::from_assignment(&assignment))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    /// Surviving zone (the lower id of the pair).
    pub kept: ZoneId,
    pub absorbed: ZoneId,
    /// Center distance at the time of the merge.
    pub distance: f64,
}

/// Nested divisions from `k` zones down to 2.
#[derive(Debug, Clone, PartialEq)]
pub struct DivisionHierarchy {
    merges: Vec<MergeEvent>,
    /// `levels[i]` has `k - i` zones.
    levels: Vec<Partition>,
}

impl DivisionHierarchy {
    pub fn initial(&self) -> &Partition {
        &self.levels[0]
    }

    pub fn merges(&self) -> &[MergeEvent] {
        &self.merges
    }

    /// Zone count of the initial partition.
    pub fn k(&self) -> usize {
        self.levels[0].zone_count()
    }

    /// Partitions in decreasing zone count.
    pub fn levels(&self) -> &[Partition] {
        &self.levels
    }

    pub fn division_at(&self, z: usize) -> Result<&Partition, ClusterError> {
        let k = self.k();
        if z < 2 || z > k {
            return Err(ClusterError::ZoneCountOutOfRange { z, k });
        }
        Ok(&self.levels[k - z])
    }

    /// Weighted lines whose two endpoints end up in one zone at each merge,
    /// as `(merge index, branch)`.
    pub fn internalized_lines(
        &self,
        weights: &CongestionWeights,
        grid: &Grid,
    ) -> Vec<(usize, BranchId)> {
        let ends: Vec<(BranchId, usize, usize)> = weights
            .entries()
            .iter()
            .filter_map(|e| {
                let l = grid.branch_index(e.branch)?;
                let (f, t) = grid.branch_endpoints(l)?;
                Some((e.branch, f, t))
            })
            .collect();
        let mut out = Vec::new();
        for (i, pair) in self.levels.windows(2).enumerate() {
            for &(b, f, t) in &ends {
                let before = pair[0].zone_of(f) == pair[0].zone_of(t);
                let after = pair[1].zone_of(f) == pair[1].zone_of(t);
                if after && !before {
                    out.push((i, b));
                }
            }
        }
        out
    }
}

/// Stage two: merge the closest adjacent zones until two remain.
pub fn merge_zones(
    initial: &Partition,
    space: &PtdfSpace,
    adjacency: &Adjacency,
    metric: &dyn Metric,
    tol: &Tolerances,
) -> Result<DivisionHierarchy, ClusterError> {
    initial.check_contiguity(adjacency)?;
    let n = initial.bus_count();
    let mut ids: Vec<ZoneId> = initial.zone_ids().to_vec();
    let mut members: Vec<Vec<usize>> =
        (0..initial.zone_count()).map(|z| initial.members(z).to_vec()).collect();
    let mut centers: Vec<Vec<f64>> = members.iter().map(|m| space.centroid(m)).collect();
    let mut owner: Vec<usize> = (0..n).map(|b| initial.zone_of(b)).collect();

    let mut levels = vec![initial.clone()];
    let mut merges = Vec::new();

    while ids.len() > 2 {
        let z = ids.len();
        let mut adjacent = vec![vec![false; z]; z];
        for b in 0..n {
            for &w in adjacency.neighbors(b) {
                adjacent[owner[b]][owner[w]] = true;
            }
        }
        let mut candidates = Vec::new();
        for a in 0..z {
            for c in a + 1..z {
                if adjacent[a][c] {
                    candidates.push((a, c, metric.distance(&centers[a], &centers[c])));
                }
            }
        }
        let Some((a, c, distance)) = first_within_tie(&candidates, tol.tie) else {
            return Err(ClusterError::Disconnected { free: 0 });
        };
        merges.push(MergeEvent { kept: ids[a], absorbed: ids[c], distance });

        let absorbed = members.remove(c);
        ids.remove(c);
        centers.remove(c);
        members[a].extend(absorbed);
        members[a].sort_unstable();
        centers[a] = space.centroid(&members[a]);
        for (pos, m) in members.iter().enumerate() {
            for &b in m {
                owner[b] = pos;
            }
        }
        let assignment: Vec<ZoneId> = owner.iter().map(|&o| ids[o]).collect();
        levels.push(Partition::from_assignment(&assignment));
    }

    Ok(DivisionHierarchy { merges, levels })
}

/// Both stages on a grid: embed, seed, grow, merge.
pub fn bubbleclust(
    nptdf: &NodalPtdf,
    grid: &Grid,
    weights: &CongestionWeights,
    metric: &dyn Metric,
    tol: &Tolerances,
) -> Result<(PtdfSpace, DivisionHierarchy), ClusterError> {
    let space = embed_ptdf_space(nptdf, weights)?;
    let seeds = seed_zones(weights, grid, &space)?;
    let adjacency = grid.adjacency();
    let initial = grow_zones(&seeds, &space, &adjacency, metric, tol)?;
    let hierarchy = merge_zones(&initial, &space, &adjacency, metric, tol)?;
    Ok((space, hierarchy))
}

/// Result of a clustering run at a target zone count.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRun {
    pub space: PtdfSpace,
    pub hierarchy: DivisionHierarchy,
    /// Congested lines actually used.
    pub weights: CongestionWeights,
    /// Lines pruned to satisfy the generation requirement, weakest first.
    pub dropped: Vec<BranchId>,
    pub zones: usize,
}

impl ClusterRun {
    pub fn division(&self) -> &Partition {
        self.hierarchy
            .division_at(self.zones)
            .expect("run was validated against its hierarchy")
    }
}

/// Cluster and, when `require_generation` is set, keep dropping the
/// weakest congested line until every zone of the `z`-zone division holds
/// a generator.
pub fn enforce_generation(
    nptdf: &NodalPtdf,
    grid: &Grid,
    weights: &CongestionWeights,
    z: usize,
    require_generation: bool,
    metric: &dyn Metric,
    tol: &Tolerances,
) -> Result<ClusterRun, ClusterError> {
    let generator_buses = grid.generator_buses();
    let mut current = weights.clone();
    let mut dropped = Vec::new();
    loop {
        let (space, hierarchy) = bubbleclust(nptdf, grid, &current, metric, tol)?;
        let division = match hierarchy.division_at(z) {
            Ok(d) => d,
            Err(e) if dropped.is_empty() => return Err(e),
            Err(_) => return Err(ClusterError::GenerationUnsatisfiable { z }),
        };
        if !require_generation || division.every_zone_has(&generator_buses) {
            return Ok(ClusterRun { space, hierarchy, weights: current, dropped, zones: z });
        }
        let weakest = current
            .entries()
            .iter()
            .min_by(|a, b| a.weight.total_cmp(&b.weight).then(b.branch.cmp(&a.branch)))
            .map(|e| e.branch);
        match (current.without_weakest(), weakest) {
            (Some(next), Some(branch)) => {
                dropped.push(branch);
                current = next;
            }
            _ => return Err(ClusterError::GenerationUnsatisfiable { z }),
        }
    }
}

// ---- JSON output ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyFile {
    pub reference_bus: u32,
    pub congested_lines: Vec<WeightedLine>,
    pub dropped_lines: Vec<BranchId>,
    pub initial: PartitionFile,
    pub merges: Vec<MergeRecord>,
    pub levels: Vec<LevelRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedLine {
    pub branch: BranchId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub kept: ZoneId,
    pub absorbed: ZoneId,
    pub distance: f64,
    /// Weighted congested lines that become intra-zonal with this merge.
    pub internalized: Vec<BranchId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub zones: usize,
    pub partition: PartitionFile,
}

impl ClusterRun {
    pub fn to_file(&self, grid: &Grid, nptdf: &NodalPtdf) -> HierarchyFile {
        let internalized = self.hierarchy.internalized_lines(&self.weights, grid);
        HierarchyFile {
            reference_bus: nptdf.reference_bus().0,
            congested_lines: self
                .weights
                .entries()
                .iter()
                .map(|e| WeightedLine { branch: e.branch, weight: e.weight })
                .collect(),
            dropped_lines: self.dropped.clone(),
            initial: self.hierarchy.initial().to_file(grid),
            merges: self
                .hierarchy
                .merges()
                .iter()
                .enumerate()
                .map(|(i, m)| MergeRecord {
                    kept: m.kept,
                    absorbed: m.absorbed,
                    distance: m.distance,
                    internalized: internalized
                        .iter()
                        .filter(|(j, _)| *j == i)
                        .map(|(_, b)| *b)
                        .collect(),
                })
                .collect(),
            levels: self
                .hierarchy
                .levels()
                .iter()
                .map(|p| LevelRecord { zones: p.zone_count(), partition: p.to_file(grid) })
                .collect(),
        }
    }
}

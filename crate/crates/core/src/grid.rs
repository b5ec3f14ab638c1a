//! Network data model, JSON case files and topology queries.
//!
//! Buses keep their case-file ids for I/O; every other module addresses them
//! by dense index (position in ascending-id order). Branches keep file order.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::DEFAULT_VOLL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BranchId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: BranchId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Series reactance, per unit on the case base.
    pub reactance: f64,
    /// Thermal limit in MW; `None` means unlimited.
    pub flow_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: BusId,
    pub marginal_cost: f64,
    pub capacity_max: f64,
    pub capacity_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub bus: BusId,
    pub demand: f64,
    pub value_of_lost_load: f64,
}

/// A single structural problem found by [`Grid::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoBuses,
    DuplicateBus(BusId),
    DuplicateBranch(BranchId),
    DanglingBranch { branch: BranchId, bus: BusId },
    SelfLoop(BranchId),
    NonPositiveReactance { branch: BranchId, reactance: f64 },
    NonPositiveLimit { branch: BranchId, limit: f64 },
    DanglingGenerator { generator: usize, bus: BusId },
    InvalidGeneratorCapacity { generator: usize, pmin: f64, pmax: f64 },
    DanglingLoad { load: usize, bus: BusId },
    NegativeDemand { load: usize, demand: f64 },
    /// Buses outside the main (largest) connected component.
    Disconnected { buses: Vec<BusId> },
    InsufficientCapacity { capacity: f64, demand: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoBuses => write!(f, "case has no buses"),
            Violation::DuplicateBus(id) => write!(f, "duplicate bus id {id}"),
            Violation::DuplicateBranch(id) => write!(f, "duplicate branch id {id}"),
            Violation::DanglingBranch { branch, bus } => {
                write!(f, "branch {branch} references unknown bus {bus}")
            }
            Violation::SelfLoop(id) => write!(f, "branch {id} connects a bus to itself"),
            Violation::NonPositiveReactance { branch, reactance } => {
                write!(f, "branch {branch} has nonpositive reactance {reactance}")
            }
            Violation::NonPositiveLimit { branch, limit } => {
                write!(f, "branch {branch} has nonpositive flow limit {limit}")
            }
            Violation::DanglingGenerator { generator, bus } => {
                write!(f, "generator {generator} references unknown bus {bus}")
            }
            Violation::InvalidGeneratorCapacity { generator, pmin, pmax } => write!(
                f,
                "generator {generator} has invalid capacity range pmin={pmin} pmax={pmax}"
            ),
            Violation::DanglingLoad { load, bus } => {
                write!(f, "load {load} references unknown bus {bus}")
            }
            Violation::NegativeDemand { load, demand } => {
                write!(f, "load {load} has negative demand {demand}")
            }
            Violation::Disconnected { buses } => {
                let ids: Vec<String> = buses.iter().map(|b| b.to_string()).collect();
                write!(f, "grid is disconnected; unreachable buses: {}", ids.join(", "))
            }
            Violation::InsufficientCapacity { capacity, demand } => write!(
                f,
                "insufficient capacity: {capacity} MW available for {demand} MW of demand"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("case file schema error: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid grid: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("unknown branch {0}")]
    UnknownBranch(BranchId),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// The physical network. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    loads: Vec<Load>,
    bus_index: HashMap<BusId, usize>,
    branch_index: HashMap<BranchId, usize>,
}

impl Grid {
    /// Assemble a grid without validating it. Buses are sorted by id; when
    /// ids repeat, the first occurrence wins the index lookup.
    pub fn from_parts(
        base_mva: f64,
        mut buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        loads: Vec<Load>,
    ) -> Self {
        buses.sort_by_key(|b| b.id);
        let mut bus_index = HashMap::new();
        for (i, b) in buses.iter().enumerate() {
            bus_index.entry(b.id).or_insert(i);
        }
        let mut branch_index = HashMap::new();
        for (i, br) in branches.iter().enumerate() {
            branch_index.entry(br.id).or_insert(i);
        }
        Self {
            base_mva,
            buses,
            branches,
            generators,
            loads,
            bus_index,
            branch_index,
        }
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn loads(&self) -> &[Load] {
        &self.loads
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    pub fn branch_index(&self, id: BranchId) -> Option<usize> {
        self.branch_index.get(&id).copied()
    }

    pub fn require_bus(&self, id: BusId) -> Result<usize, GridError> {
        self.bus_index(id).ok_or(GridError::UnknownBus(id))
    }

    pub fn require_branch(&self, id: BranchId) -> Result<usize, GridError> {
        self.branch_index(id).ok_or(GridError::UnknownBranch(id))
    }

    pub fn bus_id(&self, index: usize) -> BusId {
        self.buses[index].id
    }

    pub fn branch_id(&self, index: usize) -> BranchId {
        self.branches[index].id
    }

    /// Endpoint indices of a branch, if both endpoints exist.
    pub fn branch_endpoints(&self, index: usize) -> Option<(usize, usize)> {
        let br = &self.branches[index];
        Some((self.bus_index(br.from_bus)?, self.bus_index(br.to_bus)?))
    }

    pub fn total_capacity(&self) -> f64 {
        self.generators.iter().map(|g| g.capacity_max).sum()
    }

    pub fn total_demand(&self) -> f64 {
        self.loads.iter().map(|l| l.demand).sum()
    }

    /// Per-bus flag: true where at least one generator with positive
    /// capacity is connected.
    pub fn generator_buses(&self) -> Vec<bool> {
        let mut flags = vec![false; self.buses.len()];
        for g in &self.generators {
            if let Some(i) = self.bus_index(g.bus) {
                if g.capacity_max > 0.0 {
                    flags[i] = true;
                }
            }
        }
        flags
    }

    pub fn adjacency(&self) -> Adjacency {
        let edges = (0..self.branches.len()).filter_map(|l| self.branch_endpoints(l));
        Adjacency::from_edges(self.buses.len(), edges)
    }

    /// Neighbour sets keyed by bus id.
    pub fn adjacency_map(&self) -> BTreeMap<BusId, BTreeSet<BusId>> {
        let adj = self.adjacency();
        (0..self.buses.len())
            .map(|i| {
                let set = adj.neighbors(i).iter().map(|&j| self.bus_id(j)).collect();
                (self.bus_id(i), set)
            })
            .collect()
    }

    /// Every invariant violation; empty when the grid is usable downstream.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.buses.is_empty() {
            out.push(Violation::NoBuses);
        }
        for w in self.buses.windows(2) {
            if w[0].id == w[1].id {
                out.push(Violation::DuplicateBus(w[1].id));
            }
        }
        let mut seen = BTreeSet::new();
        for br in &self.branches {
            if !seen.insert(br.id) {
                out.push(Violation::DuplicateBranch(br.id));
            }
            for bus in [br.from_bus, br.to_bus] {
                if self.bus_index(bus).is_none() {
                    out.push(Violation::DanglingBranch { branch: br.id, bus });
                }
            }
            if br.from_bus == br.to_bus {
                out.push(Violation::SelfLoop(br.id));
            }
            if !(br.reactance > 0.0) || !br.reactance.is_finite() {
                out.push(Violation::NonPositiveReactance {
                    branch: br.id,
                    reactance: br.reactance,
                });
            }
            if let Some(limit) = br.flow_limit {
                if !(limit > 0.0) {
                    out.push(Violation::NonPositiveLimit { branch: br.id, limit });
                }
            }
        }
        for (i, g) in self.generators.iter().enumerate() {
            if self.bus_index(g.bus).is_none() {
                out.push(Violation::DanglingGenerator { generator: i, bus: g.bus });
            }
            if g.capacity_min < 0.0 || g.capacity_max < 0.0 || g.capacity_min > g.capacity_max {
                out.push(Violation::InvalidGeneratorCapacity {
                    generator: i,
                    pmin: g.capacity_min,
                    pmax: g.capacity_max,
                });
            }
        }
        for (i, l) in self.loads.iter().enumerate() {
            if self.bus_index(l.bus).is_none() {
                out.push(Violation::DanglingLoad { load: i, bus: l.bus });
            }
            if l.demand < 0.0 {
                out.push(Violation::NegativeDemand { load: i, demand: l.demand });
            }
        }
        if !self.buses.is_empty() {
            let components = self.adjacency().components();
            if components.len() > 1 {
                // The main component is the largest; ties go to the one holding the lowest id.
                let main = components
                    .iter()
                    .enumerate()
                    .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                let mut buses: Vec<BusId> = components
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != main)
                    .flat_map(|(_, c)| c.iter().map(|&b| self.bus_id(b)))
                    .collect();
                buses.sort();
                out.push(Violation::Disconnected { buses });
            }
        }
        let capacity = self.total_capacity();
        let demand = self.total_demand();
        if capacity < demand {
            out.push(Violation::InsufficientCapacity { capacity, demand });
        }
        out
    }

    pub fn to_case(&self) -> CaseFile {
        CaseFile {
            base_mva: self.base_mva,
            buses: self
                .buses
                .iter()
                .map(|b| CaseBus { id: b.id, name: b.name.clone() })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|b| CaseBranch {
                    id: b.id,
                    from: b.from_bus,
                    to: b.to_bus,
                    x: b.reactance,
                    limit: b.flow_limit,
                })
                .collect(),
            generators: self
                .generators
                .iter()
                .map(|g| CaseGenerator {
                    bus: g.bus,
                    cost: g.marginal_cost,
                    pmax: g.capacity_max,
                    pmin: Some(g.capacity_min),
                })
                .collect(),
            loads: self
                .loads
                .iter()
                .map(|l| CaseLoad {
                    bus: l.bus,
                    demand: l.demand,
                    voll: Some(l.value_of_lost_load),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_case()).expect("case serialization is infallible")
    }
}

/// Parse and validate a JSON case document.
pub fn parse_grid(document: &str) -> Result<Grid, GridError> {
    let case: CaseFile = serde_json::from_str(document)?;
    let grid = Grid::from(case);
    let violations = grid.validate();
    if violations.is_empty() {
        Ok(grid)
    } else {
        Err(GridError::Invalid(violations))
    }
}

/// Undirected bus adjacency over dense indices; neighbour lists are sorted
/// and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Self { neighbors }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Breadth-first order of the buses reachable from `start`.
    pub fn bfs(&self, start: usize) -> Vec<usize> {
        let mut seen = vec![false; self.neighbors.len()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &self.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        order
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.neighbors.len()];
        let mut out = Vec::new();
        for s in 0..self.neighbors.len() {
            if seen[s] {
                continue;
            }
            let mut comp = self.bfs(s);
            for &v in &comp {
                seen[v] = true;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.neighbors.is_empty() || self.bfs(0).len() == self.neighbors.len()
    }

    /// Whether `members` induces a connected subgraph.
    pub fn is_connected_subset(&self, members: &[usize]) -> bool {
        let Some(&start) = members.first() else {
            return false;
        };
        let inside: BTreeSet<usize> = members.iter().copied().collect();
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &w in &self.neighbors[v] {
                if inside.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen.len() == inside.len()
    }
}

// ---- JSON case schema ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub base_mva: f64,
    pub buses: Vec<CaseBus>,
    pub branches: Vec<CaseBranch>,
    pub generators: Vec<CaseGenerator>,
    pub loads: Vec<CaseLoad>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseBus {
    pub id: BusId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseBranch {
    pub id: BranchId,
    pub from: BusId,
    pub to: BusId,
    pub x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseGenerator {
    pub bus: BusId,
    pub cost: f64,
    pub pmax: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseLoad {
    pub bus: BusId,
    pub demand: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voll: Option<f64>,
}

impl From<CaseFile> for Grid {
    fn from(case: CaseFile) -> Self {
        let buses = case
            .buses
            .into_iter()
            .map(|b| Bus { id: b.id, name: b.name })
            .collect();
        let branches = case
            .branches
            .into_iter()
            .map(|b| Branch {
                id: b.id,
                from_bus: b.from,
                to_bus: b.to,
                reactance: b.x,
                flow_limit: b.limit,
            })
            .collect();
        let generators = case
            .generators
            .into_iter()
            .map(|g| Generator {
                bus: g.bus,
                marginal_cost: g.cost,
                capacity_max: g.pmax,
                capacity_min: g.pmin.unwrap_or(0.0),
            })
            .collect();
        let loads = case
            .loads
            .into_iter()
            .map(|l| Load {
                bus: l.bus,
                demand: l.demand,
                value_of_lost_load: l.voll.unwrap_or(DEFAULT_VOLL),
            })
            .collect();
        Grid::from_parts(case.base_mva, buses, branches, generators, loads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = r#"{
        "base_mva": 100,
        "buses": [{"id": 1}, {"id": 2}, {"id": 3}],
        "branches": [
            {"id": 1, "from": 1, "to": 2, "x": 1.0},
            {"id": 2, "from": 2, "to": 3, "x": 1.0},
            {"id": 3, "from": 1, "to": 3, "x": 1.0}
        ],
        "generators": [{"bus": 1, "cost": 10, "pmax": 100}],
        "loads": [{"bus": 3, "demand": 50}]
    }"#;

    #[test]
    fn triangle_parses() {
        let g = parse_grid(TRIANGLE).unwrap();
        assert_eq!(g.bus_count(), 3);
        assert_eq!(g.branch_count(), 3);
        assert_eq!(g.loads()[0].value_of_lost_load, DEFAULT_VOLL);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn dangling_branch_names_branch_and_bus() {
        let doc = TRIANGLE.replace(r#""from": 2, "to": 3"#, r#""from": 2, "to": 99"#);
        let err = parse_grid(&doc).unwrap_err();
        let GridError::Invalid(v) = &err else { panic!("{err}") };
        assert!(v.contains(&Violation::DanglingBranch { branch: BranchId(2), bus: BusId(99) }));
        let msg = err.to_string();
        assert!(msg.contains("branch 2") && msg.contains("99"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let doc = TRIANGLE.replace(r#""base_mva": 100"#, r#""base_mva": 100, "extra": 1"#);
        assert!(matches!(parse_grid(&doc), Err(GridError::Schema(_))));
        let doc = TRIANGLE.replace(r#"{"id": 1},"#, r#"{"id": 1, "kv": 345},"#);
        assert!(matches!(parse_grid(&doc), Err(GridError::Schema(_))));
    }

    #[test]
    fn missing_field_is_schema_error() {
        let doc = TRIANGLE.replace(r#", "x": 1.0}"#, "}");
        assert!(matches!(parse_grid(&doc), Err(GridError::Schema(_))));
    }

    #[test]
    fn nonpositive_reactance_rejected() {
        let doc = TRIANGLE.replacen(r#""x": 1.0"#, r#""x": 0.0"#, 1);
        let err = parse_grid(&doc).unwrap_err();
        assert!(err.to_string().contains("branch 1 has nonpositive reactance"));
    }

    #[test]
    fn adjacency_of_triangle_and_path() {
        let g = parse_grid(TRIANGLE).unwrap();
        let adj = g.adjacency_map();
        assert_eq!(adj[&BusId(1)], BTreeSet::from([BusId(2), BusId(3)]));
        assert_eq!(adj[&BusId(2)], BTreeSet::from([BusId(1), BusId(3)]));
        assert_eq!(adj[&BusId(3)], BTreeSet::from([BusId(1), BusId(2)]));

        let path = Grid::from_parts(
            100.0,
            (1..=3).map(|i| Bus { id: BusId(i), name: None }).collect(),
            vec![branch(1, 1, 2), branch(2, 2, 3)],
            vec![],
            vec![],
        );
        let adj = path.adjacency_map();
        assert_eq!(adj[&BusId(2)], BTreeSet::from([BusId(1), BusId(3)]));
        assert_eq!(adj[&BusId(1)], BTreeSet::from([BusId(2)]));
    }

    fn branch(id: u32, f: u32, t: u32) -> Branch {
        Branch {
            id: BranchId(id),
            from_bus: BusId(f),
            to_bus: BusId(t),
            reactance: 1.0,
            flow_limit: None,
        }
    }

    #[test]
    fn two_components_reported_once() {
        let g = Grid::from_parts(
            100.0,
            (1..=5).map(|i| Bus { id: BusId(i), name: None }).collect(),
            vec![branch(1, 1, 2), branch(2, 2, 3), branch(3, 4, 5)],
            vec![],
            vec![],
        );
        assert_eq!(g.validate(), vec![Violation::Disconnected { buses: vec![BusId(4), BusId(5)] }]);
    }

    #[test]
    fn insufficient_capacity_reported() {
        let g = Grid::from_parts(
            100.0,
            vec![Bus { id: BusId(1), name: None }],
            vec![],
            vec![Generator { bus: BusId(1), marginal_cost: 1.0, capacity_max: 90.0, capacity_min: 0.0 }],
            vec![Load { bus: BusId(1), demand: 100.0, value_of_lost_load: DEFAULT_VOLL }],
        );
        assert_eq!(
            g.validate(),
            vec![Violation::InsufficientCapacity { capacity: 90.0, demand: 100.0 }]
        );
    }

    #[test]
    fn parallel_branches_are_distinct_lines() {
        let g = Grid::from_parts(
            100.0,
            (1..=2).map(|i| Bus { id: BusId(i), name: None }).collect(),
            vec![branch(1, 1, 2), branch(2, 1, 2)],
            vec![],
            vec![],
        );
        assert_eq!(g.branch_count(), 2);
        assert_eq!(g.adjacency().neighbors(0), &[1]);
    }
}

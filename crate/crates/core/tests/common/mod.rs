//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod lp_cases;

use std::path::PathBuf;

use zonalcut_core::{parse_grid, Grid};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).expect("fixture exists")
}

pub fn load_grid(name: &str) -> Grid {
    parse_grid(&fixture(name)).expect("fixture parses")
}

/// Gaussian elimination with partial pivoting. `None` when singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// PTDF by solving DC angles for a unit injection at each bus withdrawn at
/// `reference`. Returns `[line][bus]`.
pub fn ptdf_by_angles(grid: &Grid, reference: usize) -> Vec<Vec<f64>> {
    let n = grid.bus_count();
    let others: Vec<usize> = (0..n).filter(|&i| i != reference).collect();
    let pos = |i: usize| others.iter().position(|&o| o == i);
    let mut bmat = vec![vec![0.0; n - 1]; n - 1];
    let mut ends = Vec::new();
    for (l, br) in grid.branches().iter().enumerate() {
        let (f, t) = grid.branch_endpoints(l).unwrap();
        let y = 1.0 / br.reactance;
        ends.push((f, t, y));
        for (u, v) in [(f, t), (t, f)] {
            if let Some(pu) = pos(u) {
                bmat[pu][pu] += y;
                if let Some(pv) = pos(v) {
                    bmat[pu][pv] -= y;
                }
            }
        }
    }
    let mut out = vec![vec![0.0; n]; grid.branch_count()];
    for &bus in &others {
        let mut rhs = vec![0.0; n - 1];
        rhs[pos(bus).unwrap()] = 1.0;
        let theta_red = solve_dense(bmat.clone(), rhs).expect("connected grid");
        let theta = |i: usize| pos(i).map_or(0.0, |p| theta_red[p]);
        for (l, &(f, t, y)) in ends.iter().enumerate() {
            out[l][bus] = y * (theta(f) - theta(t));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

/// `min c·x` over explicit rows, solved by enumerating every basic
/// solution. Only for tiny problems.
#[derive(Debug, Clone)]
pub struct VertexLp {
    pub c: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Rel, f64)>,
}

impl VertexLp {
    pub fn new(c: Vec<f64>) -> Self {
        Self { c, rows: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn row(&mut self, a: Vec<f64>, rel: Rel, b: f64) -> usize {
        assert_eq!(a.len(), self.n());
        self.rows.push((a, rel, b));
        self.rows.len() - 1
    }

    pub fn bounds(&mut self, var: usize, lo: f64, hi: f64) {
        let mut a = vec![0.0; self.n()];
        a[var] = 1.0;
        if lo.is_finite() {
            self.row(a.clone(), Rel::Ge, lo);
        }
        if hi.is_finite() {
            self.row(a, Rel::Le, hi);
        }
    }

    fn feasible(&self, x: &[f64]) -> bool {
        self.rows.iter().all(|(a, rel, b)| {
            let v: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
            let tol = 1e-7 * (1.0 + b.abs());
            match rel {
                Rel::Le => v <= b + tol,
                Rel::Ge => v >= b - tol,
                Rel::Eq => (v - b).abs() <= tol,
            }
        })
    }

    /// Optimal objective and a minimizing vertex.
    pub fn solve(&self) -> Option<(f64, Vec<f64>)> {
        let n = self.n();
        let eq: Vec<usize> = (0..self.rows.len()).filter(|&r| self.rows[r].1 == Rel::Eq).collect();
        let ineq: Vec<usize> = (0..self.rows.len()).filter(|&r| self.rows[r].1 != Rel::Eq).collect();
        if eq.len() > n {
            return None;
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for chosen in combinations(ineq.len(), n - eq.len()) {
            let active: Vec<usize> = eq.iter().copied().chain(chosen.iter().map(|&i| ineq[i])).collect();
            let a = active.iter().map(|&r| self.rows[r].0.clone()).collect();
            let b = active.iter().map(|&r| self.rows[r].2).collect();
            let Some(x) = solve_dense(a, b) else { continue };
            if !self.feasible(&x) {
                continue;
            }
            let obj: f64 = self.c.iter().zip(&x).map(|(c, x)| c * x).sum();
            if best.as_ref().is_none_or(|(o, _)| obj < *o - 1e-12) {
                best = Some((obj, x));
            }
        }
        best
    }

    /// d(optimum)/d(rhs of `row`) by central difference; `None` when the two
    /// one-sided slopes disagree (a kink) or a side is infeasible.
    pub fn rhs_derivative(&self, row: usize, h: f64) -> Option<f64> {
        let at = |delta: f64| {
            let mut lp = self.clone();
            lp.rows[row].2 += delta;
            lp.solve().map(|s| s.0)
        };
        let (lo, mid, hi) = (at(-h)?, at(0.0)?, at(h)?);
        let (left, right) = ((mid - lo) / h, (hi - mid) / h);
        ((left - right).abs() <= 1e-6 * (1.0 + left.abs())).then_some((hi - lo) / (2.0 * h))
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Every labeled connected graph on `n` nodes, as edge lists.
pub fn connected_graphs(n: usize) -> Vec<Vec<(usize, usize)>> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << pairs.len()) {
        let edges: Vec<(usize, usize)> =
            pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, e)| *e).collect();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        for &(a, b) in &edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        let root = find(&mut parent, 0);
        if (0..n).all(|x| find(&mut parent, x) == root) {
            out.push(edges);
        }
    }
    out
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn centroid(points: &[Vec<f64>], labels: &[Option<u32>], zone: u32) -> Vec<f64> {
    let dim = points[0].len();
    let mut c = vec![0.0; dim];
    let mut count = 0.0;
    for (p, l) in points.iter().zip(labels) {
        if *l == Some(zone) {
            for (ci, v) in c.iter_mut().zip(p) {
                *ci += v;
            }
            count += 1.0;
        }
    }
    c.iter_mut().for_each(|v| *v /= count);
    c
}

/// Literal re-statement of the clustering rules: zone ids follow ascending
/// seed bus; each growth step takes the (free bus, zone) pair with the
/// smallest bus-to-center distance among buses joined by an edge to the
/// zone, preferring lower bus then lower zone within `tie`; each merge step
/// joins the edge-connected zone pair with closest centers, preferring the
/// lower id pair, keeping the lower id. Returns the zone id of every bus at
/// each level, from `k` zones down to 2.
pub fn brute_force_hierarchy(
    n: usize,
    edges: &[(usize, usize)],
    points: &[Vec<f64>],
    seeds: &[usize],
    tie: f64,
) -> Vec<Vec<u32>> {
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    let mut labels: Vec<Option<u32>> = vec![None; n];
    for (z, &s) in seeds.iter().enumerate() {
        labels[s] = Some(z as u32);
    }
    while labels.iter().any(|l| l.is_none()) {
        let mut cands: Vec<(usize, u32, f64)> = Vec::new();
        for &(a, b) in edges {
            for (free, held) in [(a, b), (b, a)] {
                if let (None, Some(z)) = (labels[free], labels[held]) {
                    let d = euclid(&points[free], &centroid(points, &labels, z));
                    cands.push((free, z, d));
                }
            }
        }
        let min = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
        let pick = cands
            .iter()
            .filter(|c| c.2 <= min + tie)
            .min_by_key(|c| (c.0, c.1))
            .expect("connected graph");
        labels[pick.0] = Some(pick.1);
    }
    let mut labels: Vec<u32> = labels.into_iter().map(|l| l.unwrap()).collect();
    let mut levels = vec![labels.clone()];
    loop {
        let mut zones: Vec<u32> = labels.clone();
        zones.sort_unstable();
        zones.dedup();
        if zones.len() <= 2 {
            break;
        }
        let opt: Vec<Option<u32>> = labels.iter().map(|&l| Some(l)).collect();
        let mut cands: Vec<(u32, u32, f64)> = Vec::new();
        for &(a, b) in edges {
            let (za, zb) = (labels[a].min(labels[b]), labels[a].max(labels[b]));
            if za != zb && !cands.iter().any(|c| c.0 == za && c.1 == zb) {
                let d = euclid(&centroid(points, &opt, za), &centroid(points, &opt, zb));
                cands.push((za, zb, d));
            }
        }
        let min = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
        let pick = cands
            .iter()
            .filter(|c| c.2 <= min + tie)
            .min_by_key(|c| (c.0, c.1))
            .expect("connected graph");
        for l in labels.iter_mut() {
            if *l == pick.1 {
                *l = pick.0;
            }
        }
        levels.push(labels.clone());
    }
    levels
}

/// Merit-order dispatch cost of serving `demand` from `(cost, capacity)` units.
pub fn merit_order_cost(units: &[(f64, f64)], demand: f64) -> Option<f64> {
    let mut sorted = units.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut left = demand;
    let mut cost = 0.0;
    for (c, cap) in sorted {
        let take = left.min(cap);
        cost += c * take;
        left -= take;
    }
    (left <= 1e-9).then_some(cost)
}

/// Connected grid from a spanning tree (`parents[i]` links bus `i + 2` to an
/// earlier bus) plus extra edges, one cheap generator at bus 1 and no load.
pub fn tree_grid(parents: &[usize], extra: &[(usize, usize)], reactances: &[f64]) -> Grid {
    let n = parents.len() + 1;
    let mut edges: Vec<(usize, usize)> = parents.iter().enumerate().map(|(i, &p)| (p % (i + 1), i + 1)).collect();
    for &(a, b) in extra {
        let (a, b) = (a % n, b % n);
        if a != b && !edges.iter().any(|&(u, v)| (u, v) == (a, b) || (u, v) == (b, a)) {
            edges.push((a, b));
        }
    }
    let doc = serde_json::json!({
        "base_mva": 100.0,
        "buses": (1..=n).map(|i| serde_json::json!({"id": i})).collect::<Vec<_>>(),
        "branches": edges.iter().enumerate().map(|(k, &(a, b))| serde_json::json!({
            "id": k + 1, "from": a + 1, "to": b + 1, "x": reactances[k % reactances.len()],
        })).collect::<Vec<_>>(),
        "generators": [{"bus": 1, "cost": 10.0, "pmax": 1000.0}],
        "loads": [],
    });
    parse_grid(&doc.to_string()).expect("generated grid")
}

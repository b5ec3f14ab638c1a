//! Small DC dispatch and zonal clearing instances, each paired with an
//! independent angle-based (or explicit zonal) LP solved by vertex
//! enumeration.

use serde_json::json;
use zonalcut_core::{
    build_gsk, build_nodal_ptdf, clear_market, make_bids, parse_grid, solve_dcopf, BusId,
    DcopfOptions, Grid, InjectionVector, MarketOutcome, Partition, Scenario, Tolerances, ZoneId,
};

use super::{ptdf_by_angles, Rel, VertexLp};

pub struct DispatchCase {
    pub name: String,
    pub grid: Grid,
    pub curtailment: bool,
    /// Hand-computed optimum cost and per-branch shadow prices.
    pub expected_cost: f64,
    pub expected_shadow: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn grid(
    buses: usize,
    branches: &[(u32, u32, f64, Option<f64>)],
    gens: &[(u32, f64, f64)],
    loads: &[(u32, f64)],
) -> Grid {
    let doc = json!({
        "base_mva": 100.0,
        "buses": (1..=buses).map(|i| json!({"id": i})).collect::<Vec<_>>(),
        "branches": branches.iter().enumerate().map(|(i, &(f, t, x, lim))| {
            let mut b = json!({"id": i + 1, "from": f, "to": t, "x": x});
            if let Some(l) = lim { b["limit"] = json!(l); }
            b
        }).collect::<Vec<_>>(),
        "generators": gens.iter().map(|&(b, c, p)| json!({"bus": b, "cost": c, "pmax": p})).collect::<Vec<_>>(),
        "loads": loads.iter().map(|&(b, d)| json!({"bus": b, "demand": d})).collect::<Vec<_>>(),
    });
    parse_grid(&doc.to_string()).expect("case grid")
}

fn two_bus(c1: f64, c2: f64, cap1: f64, cap2: f64, loads: &[(u32, f64)], limit: Option<f64>) -> Grid {
    grid(2, &[(1, 2, 0.1, limit)], &[(1, c1, cap1), (2, c2, cap2)], loads)
}

fn triangle(limits: [Option<f64>; 3], load: f64) -> Grid {
    grid(
        3,
        &[(1, 2, 1.0, limits[0]), (2, 3, 1.0, limits[1]), (1, 3, 1.0, limits[2])],
        &[(1, 10.0, 200.0), (2, 30.0, 200.0)],
        &[(3, load)],
    )
}

pub fn dispatch_cases() -> Vec<DispatchCase> {
    let case = |name: &str, grid: Grid, cost: f64, shadow: Vec<f64>| DispatchCase {
        name: name.into(),
        grid,
        curtailment: false,
        expected_cost: cost,
        expected_shadow: shadow,
    };
    let mut v = vec![
        case("2-bus limit 30", two_bus(10.0, 50.0, 100.0, 100.0, &[(2, 80.0)], Some(30.0)), 2800.0, vec![40.0]),
        case("2-bus limit 50", two_bus(10.0, 50.0, 100.0, 100.0, &[(2, 80.0)], Some(50.0)), 2000.0, vec![40.0]),
        case("2-bus slack limit", two_bus(10.0, 50.0, 100.0, 100.0, &[(2, 80.0)], Some(100.0)), 800.0, vec![0.0]),
        case("2-bus demand 60 limit 20", two_bus(10.0, 50.0, 100.0, 100.0, &[(2, 60.0)], Some(20.0)), 2200.0, vec![40.0]),
        case("2-bus spread 30", two_bus(15.0, 45.0, 100.0, 100.0, &[(2, 80.0)], Some(30.0)), 2700.0, vec![30.0]),
        case("2-bus capacity bound", two_bus(10.0, 50.0, 50.0, 100.0, &[(2, 80.0)], Some(60.0)), 2000.0, vec![0.0]),
        case("2-bus loads both ends", two_bus(10.0, 50.0, 100.0, 100.0, &[(1, 20.0), (2, 80.0)], Some(30.0)), 3000.0, vec![40.0]),
        case("2-bus reversed", two_bus(50.0, 10.0, 100.0, 100.0, &[(1, 70.0)], Some(25.0)), 2500.0, vec![40.0]),
        case("triangle 1-3 at 50", triangle([None, None, Some(50.0)], 90.0), 1500.0, vec![0.0, 0.0, 60.0]),
        case("triangle 1-3 at 40", triangle([None, None, Some(40.0)], 90.0), 2100.0, vec![0.0, 0.0, 60.0]),
        case("triangle 1-3 slack", triangle([None, None, Some(70.0)], 90.0), 900.0, vec![0.0, 0.0, 0.0]),
        case("triangle 1-2 at 10", triangle([Some(10.0), None, None], 90.0), 1500.0, vec![30.0, 0.0, 0.0]),
        case(
            "path 4",
            grid(
                4,
                &[(1, 2, 0.1, None), (2, 3, 0.1, Some(40.0)), (3, 4, 0.1, None)],
                &[(1, 10.0, 150.0), (4, 30.0, 150.0)],
                &[(2, 20.0), (3, 60.0)],
            ),
            1200.0,
            vec![0.0, 20.0, 0.0],
        ),
    ];
    v.push(DispatchCase {
        name: "2-bus curtailment".into(),
        grid: two_bus(10.0, 50.0, 100.0, 20.0, &[(2, 80.0)], Some(30.0)),
        curtailment: true,
        expected_cost: 300.0 + 1000.0 + 30.0 * 1000.0,
        expected_shadow: vec![990.0],
    });
    v
}

#[derive(Debug)]
pub struct DispatchCheck {
    pub cost_error: f64,
    pub shadow_error: f64,
    pub oracle_cost_error: f64,
    pub oracle_shadow_error: f64,
    pub slackness: f64,
    pub duality_gap: f64,
}

/// Angle formulation: generation, curtailment and non-reference angles.
fn dispatch_oracle(case: &DispatchCase) -> (VertexLp, Vec<(usize, usize)>) {
    let g = &case.grid;
    let n = g.bus_count();
    let ng = g.generators().len();
    let nl = if case.curtailment { g.loads().len() } else { 0 };
    let nv = ng + nl + (n - 1);
    let theta = |bus: usize| (bus > 0).then(|| ng + nl + bus - 1);
    let mut c = vec![0.0; nv];
    for (i, gen) in g.generators().iter().enumerate() {
        c[i] = gen.marginal_cost;
    }
    for (i, load) in g.loads().iter().enumerate().take(nl) {
        c[ng + i] = load.value_of_lost_load;
    }
    let mut lp = VertexLp::new(c);
    for bus in 0..n {
        let mut a = vec![0.0; nv];
        let mut d = 0.0;
        for (i, gen) in g.generators().iter().enumerate() {
            if g.bus_index(gen.bus) == Some(bus) {
                a[i] += 1.0;
            }
        }
        for (i, load) in g.loads().iter().enumerate() {
            if g.bus_index(load.bus) == Some(bus) {
                d += load.demand;
                if i < nl {
                    a[ng + i] += 1.0;
                }
            }
        }
        for (l, br) in g.branches().iter().enumerate() {
            let (f, t) = g.branch_endpoints(l).unwrap();
            let y = 1.0 / br.reactance;
            // Outflow y(θ_f − θ_t) leaves f and enters t.
            let (sign_f, sign_t) = if bus == f { (-1.0, 1.0) } else if bus == t { (1.0, -1.0) } else { continue };
            if let Some(v) = theta(f) {
                a[v] += sign_f * y;
            }
            if let Some(v) = theta(t) {
                a[v] += sign_t * y;
            }
        }
        lp.row(a, Rel::Eq, d);
    }
    let mut line_rows = Vec::new();
    for (l, br) in g.branches().iter().enumerate() {
        let Some(limit) = br.flow_limit else {
            line_rows.push((usize::MAX, usize::MAX));
            continue;
        };
        let (f, t) = g.branch_endpoints(l).unwrap();
        let mut a = vec![0.0; nv];
        if let Some(v) = theta(f) {
            a[v] += 1.0 / br.reactance;
        }
        if let Some(v) = theta(t) {
            a[v] -= 1.0 / br.reactance;
        }
        let up = lp.row(a.clone(), Rel::Le, limit);
        let lo = lp.row(a, Rel::Ge, -limit);
        line_rows.push((up, lo));
    }
    for (i, gen) in g.generators().iter().enumerate() {
        lp.bounds(i, gen.capacity_min, gen.capacity_max);
    }
    for (i, load) in g.loads().iter().enumerate().take(nl) {
        lp.bounds(ng + i, 0.0, load.demand);
    }
    (lp, line_rows)
}

pub fn check_dispatch(case: &DispatchCase) -> DispatchCheck {
    let g = &case.grid;
    let ptdf = build_nodal_ptdf(g, g.buses()[0].id).unwrap();
    let opts = DcopfOptions { allow_curtailment: case.curtailment, ..DcopfOptions::default() };
    let r = solve_dcopf(g, &ptdf, &Scenario::base(), &opts).unwrap();

    let (lp, line_rows) = dispatch_oracle(case);
    let (oracle_cost, _) = lp.solve().expect("oracle finds a vertex");
    let oracle_shadow: Vec<f64> = line_rows
        .iter()
        .map(|&(up, lo)| {
            if up == usize::MAX {
                return 0.0;
            }
            let du = lp.rhs_derivative(up, 1e-4).expect("nondegenerate instance");
            let dl = lp.rhs_derivative(lo, 1e-4).expect("nondegenerate instance");
            du.abs() + dl.abs()
        })
        .collect();

    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut slackness: f64 = 0.0;
    for (l, br) in g.branches().iter().enumerate() {
        if let Some(limit) = br.flow_limit {
            let slack = limit - r.flows.0[l].abs();
            slackness = slackness.max((r.line_shadow_prices[l] * slack).abs());
        }
    }
    DispatchCheck {
        cost_error: (r.objective_cost - case.expected_cost).abs(),
        shadow_error: max_diff(&r.line_shadow_prices, &case.expected_shadow),
        oracle_cost_error: (r.objective_cost - oracle_cost).abs(),
        oracle_shadow_error: max_diff(&r.line_shadow_prices, &oracle_shadow),
        slackness,
        duality_gap: (r.objective_cost - r.dual_objective).abs(),
    }
}

pub struct ClearingCase {
    pub name: String,
    pub grid: Grid,
    pub partition: Partition,
    /// Forecast nodal pattern for the GSK.
    pub p_pre: Vec<f64>,
    pub expected_sw: f64,
}

pub fn clearing_cases() -> Vec<ClearingCase> {
    let zones = |a: &[u32]| Partition::from_assignment(&a.iter().map(|&z| ZoneId(z)).collect::<Vec<_>>());
    let tb = |limit| two_bus(10.0, 50.0, 100.0, 100.0, &[(2, 80.0)], limit);
    vec![
        ClearingCase {
            name: "single zone".into(),
            grid: tb(Some(30.0)),
            partition: zones(&[0, 0]),
            p_pre: vec![30.0, -10.0],
            expected_sw: 80_000.0 - 800.0,
        },
        ClearingCase {
            name: "2 zones limit 30".into(),
            grid: tb(Some(30.0)),
            partition: zones(&[0, 1]),
            p_pre: vec![30.0, -30.0],
            expected_sw: 80_000.0 - 2800.0,
        },
        ClearingCase {
            name: "2 zones limit 50".into(),
            grid: tb(Some(50.0)),
            partition: zones(&[0, 1]),
            p_pre: vec![50.0, -50.0],
            expected_sw: 80_000.0 - 2000.0,
        },
        ClearingCase {
            name: "2 zones unlimited".into(),
            grid: tb(None),
            partition: zones(&[0, 1]),
            p_pre: vec![80.0, -80.0],
            expected_sw: 80_000.0 - 800.0,
        },
        ClearingCase {
            name: "triangle nodal zones".into(),
            grid: triangle([None, None, Some(50.0)], 90.0),
            partition: zones(&[0, 1, 2]),
            p_pre: vec![60.0, 30.0, -90.0],
            expected_sw: 90_000.0 - 1500.0,
        },
        ClearingCase {
            name: "path 4 two zones".into(),
            grid: grid(
                4,
                &[(1, 2, 0.1, None), (2, 3, 0.1, Some(40.0)), (3, 4, 0.1, None)],
                &[(1, 10.0, 150.0), (4, 30.0, 150.0)],
                &[(2, 20.0), (3, 60.0)],
            ),
            partition: zones(&[0, 0, 1, 1]),
            p_pre: vec![60.0, -20.0, -60.0, 20.0],
            expected_sw: 80_000.0 - 1200.0,
        },
        ClearingCase {
            name: "2 zones spread 30".into(),
            grid: two_bus(15.0, 45.0, 100.0, 100.0, &[(2, 80.0)], Some(30.0)),
            partition: zones(&[0, 1]),
            p_pre: vec![30.0, -30.0],
            expected_sw: 80_000.0 - 2700.0,
        },
    ]
}

#[derive(Debug)]
pub struct ClearingCheck {
    pub outcome: MarketOutcome,
    pub sw_error: f64,
    pub oracle_sw_error: f64,
    pub oracle_price_error: f64,
    pub identity_error: f64,
    pub duality_gap: f64,
}

pub fn check_clearing(case: &ClearingCase) -> ClearingCheck {
    let g = &case.grid;
    let tol = Tolerances::default();
    let ptdf = build_nodal_ptdf(g, BusId(1)).unwrap();
    let gsk = build_gsk(&case.partition, &InjectionVector(case.p_pre.clone()), &tol).unwrap();
    let bids = make_bids(g, &case.partition, &Scenario::base());
    let out = clear_market(&bids, &case.partition, &ptdf, &gsk, g).unwrap();

    // Explicit zonal LP: supply, served demand, net positions.
    let z = case.partition.zone_count();
    let ns = bids.supply.len();
    let nv = ns + 2 * z;
    let mut c = vec![0.0; nv];
    for (i, s) in bids.supply.iter().enumerate() {
        c[i] = s.price;
    }
    for j in 0..z {
        c[ns + j] = -bids.demand[j].value;
    }
    let mut lp = VertexLp::new(c);
    let mut balance = Vec::new();
    for j in 0..z {
        let mut a = vec![0.0; nv];
        for (i, s) in bids.supply.iter().enumerate() {
            if s.zone == j {
                a[i] = 1.0;
            }
        }
        a[ns + j] = -1.0;
        a[ns + z + j] = -1.0;
        balance.push(lp.row(a, Rel::Eq, 0.0));
    }
    let mut sum = vec![0.0; nv];
    sum[ns + z..].iter_mut().for_each(|v| *v = 1.0);
    lp.row(sum, Rel::Eq, 0.0);

    let nodal = ptdf_by_angles(g, 0);
    let n = g.bus_count();
    let mut q_pre = vec![0.0; z];
    for bus in 0..n {
        q_pre[case.partition.zone_of(bus)] += case.p_pre[bus];
    }
    for (l, br) in g.branches().iter().enumerate() {
        let (f, t) = g.branch_endpoints(l).unwrap();
        let Some(limit) = br.flow_limit else { continue };
        if case.partition.zone_of(f) == case.partition.zone_of(t) {
            continue;
        }
        let mut a = vec![0.0; nv];
        for bus in 0..n {
            let j = case.partition.zone_of(bus);
            a[ns + z + j] += nodal[l][bus] * case.p_pre[bus] / q_pre[j];
        }
        lp.row(a.clone(), Rel::Le, limit);
        lp.row(a, Rel::Ge, -limit);
    }
    for (i, s) in bids.supply.iter().enumerate() {
        lp.bounds(i, s.min_quantity, s.max_quantity);
    }
    for j in 0..z {
        lp.bounds(ns + j, 0.0, bids.demand[j].quantity);
    }
    let (oracle_obj, _) = lp.solve().expect("oracle finds a vertex");
    let oracle_prices: Vec<f64> = balance
        .iter()
        .map(|&r| lp.rhs_derivative(r, 1e-4).expect("nondegenerate instance"))
        .collect();
    let price_error = out
        .prices
        .iter()
        .zip(&oracle_prices)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    ClearingCheck {
        sw_error: (out.social_welfare - case.expected_sw).abs(),
        oracle_sw_error: (out.social_welfare + oracle_obj).abs(),
        oracle_price_error: price_error,
        identity_error: (out.social_welfare
            - (out.consumer_surplus + out.producer_surplus + out.congestion_rent))
            .abs(),
        duality_gap: (-out.social_welfare - out.dual_objective).abs(),
        outcome: out,
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use zonalcut_core::bubbleclust::{bubbleclust, enforce_generation, ClusterRun};
use zonalcut_core::congestion::CongestionEntry;
use zonalcut_core::{
    build_nodal_ptdf, compare_divisions, congestion_weights, parse_grid, parse_partition,
    parse_scenarios, select_congested_lines, solve_dcopf, BranchId, BusId, CompareOptions,
    CongestionWeights, DcopfOptions, Euclidean, Grid, NodalPtdf, Scenario, Tolerances,
};

use crate::error::{
    cluster_error, congestion_error, grid_error, market_error, ptdf_error, zonal_error, CliError,
};
use crate::{ClusterArgs, CompareArgs, CongestionArgs, GlobalArgs};

/// Shortest round-trip decimal form; negative zero prints as `0`.
fn num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::read(path, e))
}

fn load_grid(global: &GlobalArgs) -> Result<Grid, CliError> {
    let path = global
        .case
        .as_ref()
        .ok_or_else(|| CliError::usage("--case <file> is required"))?;
    parse_grid(&read(path)?).map_err(|e| grid_error(path, e))
}

fn load_ptdf(grid: &Grid, global: &GlobalArgs) -> Result<NodalPtdf, CliError> {
    let reference = match global.reference {
        Some(id) => BusId(id),
        None => grid.buses()[0].id,
    };
    build_nodal_ptdf(grid, reference).map_err(ptdf_error)
}

fn load_scenarios(path: Option<&PathBuf>) -> Result<Vec<Scenario>, CliError> {
    match path {
        None => Ok(vec![Scenario::base()]),
        Some(p) => {
            let scenarios = parse_scenarios(&read(p)?)
                .map_err(|e| CliError::data("parse", format!("{}: {e}", p.display())))?;
            if scenarios.is_empty() {
                return Err(CliError::data("parse", format!("{}: no scenarios", p.display())));
            }
            Ok(scenarios)
        }
    }
}

fn out_path(global: &GlobalArgs, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&global.out_dir).map_err(|e| CliError::write(&global.out_dir, e))?;
    Ok(global.out_dir.join(name))
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::write(path, e))?;
    w.write_record(header).map_err(|e| CliError::write(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::write(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::write(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

#[derive(Debug, Deserialize)]
struct WeightRow {
    branch: u32,
    k_avg: f64,
    #[serde(rename = "W")]
    weight: f64,
}

fn read_weights(path: &Path, grid: &Grid) -> Result<CongestionWeights, CliError> {
    let bad = |msg: String| CliError::data("parse", format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => CliError::data("read", format!("{}: {e}", path.display())),
        _ => bad(e.to_string()),
    })?;
    let mut entries = Vec::new();
    for row in reader.deserialize::<WeightRow>() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let branch = BranchId(row.branch);
        if grid.branch_index(branch).is_none() {
            return Err(bad(format!("branch {branch} is not in the case")));
        }
        entries.push(CongestionEntry { branch, average_cost: row.k_avg, weight: row.weight });
    }
    CongestionWeights::from_entries(entries).map_err(|e| bad(e.to_string()))
}

fn branch_label(grid: &Grid, branch: BranchId) -> String {
    let l = grid.branch_index(branch).expect("known branch");
    let b = &grid.branches()[l];
    format!("{} ({}-{})", branch, b.from_bus, b.to_bus)
}

pub fn ptdf(global: &GlobalArgs) -> Result<(), CliError> {
    let grid = load_grid(global)?;
    let nptdf = load_ptdf(&grid, global)?;
    let header: Vec<String> = std::iter::once("branch".to_string())
        .chain(nptdf.bus_ids().iter().map(|b| b.to_string()))
        .collect();
    let rows: Vec<Vec<String>> = (0..nptdf.line_count())
        .map(|l| {
            std::iter::once(nptdf.branch_ids()[l].to_string())
                .chain((0..nptdf.bus_count()).map(|i| num(nptdf.get(l, i))))
                .collect()
        })
        .collect();
    let path = out_path(global, "ptdf.csv")?;
    write_csv(&path, &header, &rows)?;
    println!(
        "{} lines x {} buses, reference bus {} -> {}",
        nptdf.line_count(),
        nptdf.bus_count(),
        nptdf.reference_bus(),
        path.display()
    );
    Ok(())
}

pub fn congestion(global: &GlobalArgs, args: &CongestionArgs) -> Result<(), CliError> {
    if !(0.0..1.0).contains(&args.min_weight) {
        return Err(CliError::usage(format!("--min-weight must lie in [0, 1), got {}", args.min_weight)));
    }
    if args.top_k == Some(0) {
        return Err(CliError::usage("--top-k must be at least 1"));
    }
    let grid = load_grid(global)?;
    let nptdf = load_ptdf(&grid, global)?;
    let scenarios = load_scenarios(args.scenarios.as_ref())?;
    let options = DcopfOptions { allow_curtailment: args.curtailment, ..DcopfOptions::default() };
    let mut results = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        let r = solve_dcopf(&grid, &nptdf, s, &options).map_err(congestion_error)?;
        println!("scenario {}: cost {}", r.label, num(r.objective_cost));
        results.push(r);
    }
    let weights = congestion_weights(&results, args.min_weight).map_err(congestion_error)?;
    let weights = select_congested_lines(&weights, args.top_k);
    let rows: Vec<Vec<String>> = weights
        .entries()
        .iter()
        .map(|e| vec![e.branch.to_string(), num(e.average_cost), num(e.weight)])
        .collect();
    let path = out_path(global, "weights.csv")?;
    write_csv(&path, &["branch".into(), "k_avg".into(), "W".into()], &rows)?;
    for e in weights.entries() {
        println!("congested line {}: k_avg {} W {}", branch_label(&grid, e.branch), num(e.average_cost), num(e.weight));
    }
    println!("-> {}", path.display());
    Ok(())
}

pub fn cluster(global: &GlobalArgs, args: &ClusterArgs) -> Result<(), CliError> {
    let grid = load_grid(global)?;
    let nptdf = load_ptdf(&grid, global)?;
    let weights = read_weights(&args.weights, &grid)?;
    let tol = Tolerances::default();
    let run = match args.z {
        Some(z) => enforce_generation(&nptdf, &grid, &weights, z, args.require_generation, &Euclidean, &tol)
            .map_err(cluster_error)?,
        None => {
            let (space, hierarchy) =
                bubbleclust(&nptdf, &grid, &weights, &Euclidean, &tol).map_err(cluster_error)?;
            let zones = hierarchy.k();
            ClusterRun { space, hierarchy, weights: weights.clone(), dropped: Vec::new(), zones }
        }
    };

    for b in &run.dropped {
        eprintln!("note: dropped congested line {} to give every zone a generator", branch_label(&grid, *b));
    }
    let file = run.to_file(&grid, &nptdf);
    let k = run.hierarchy.k();
    for (i, m) in file.merges.iter().enumerate() {
        if !m.internalized.is_empty() && k - i - 1 >= run.zones {
            let lines: Vec<String> = m.internalized.iter().map(|b| branch_label(&grid, *b)).collect();
            eprintln!(
                "note: merging zone {} into zone {} ({} zones) makes congested line(s) {} intra-zonal",
                m.absorbed,
                m.kept,
                k - i - 1,
                lines.join(", ")
            );
        }
    }

    write_json(&out_path(global, "hierarchy.json")?, &file)?;
    for level in &file.levels {
        write_json(&out_path(global, &format!("partition_z{}.json", level.zones))?, &level.partition)?;
    }
    println!("initial zones: {k}");
    if let Some(z) = args.z {
        let path = out_path(global, "partition.json")?;
        write_json(&path, &run.division().to_file(&grid))?;
        for (id, members) in run.division().zones() {
            let buses: Vec<String> = members.iter().map(|&b| grid.bus_id(b).to_string()).collect();
            println!("zone {id}: {}", buses.join(" "));
        }
        println!("{z}-zone division -> {}", path.display());
    }
    println!("-> {}", global.out_dir.join("hierarchy.json").display());
    Ok(())
}

fn parse_partition_arg(arg: &str, grid: &Grid) -> Result<(String, zonalcut_core::Partition), CliError> {
    let (label, path) = match arg.split_once('=') {
        Some((l, p)) => (l.to_string(), PathBuf::from(p)),
        None => {
            let p = PathBuf::from(arg);
            let stem = p.file_stem().map_or(arg.to_string(), |s| s.to_string_lossy().into_owned());
            (stem, p)
        }
    };
    let partition = parse_partition(&read(&path)?, grid).map_err(|e| {
        let e = zonal_error("parse", e);
        CliError { message: format!("{}: {}", path.display(), e.message), ..e }
    })?;
    Ok((label, partition))
}

fn cell(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".into(), num)
}

pub fn compare(global: &GlobalArgs, args: &CompareArgs) -> Result<(), CliError> {
    if !(args.epsilon_gsk > 0.0) {
        return Err(CliError::usage(format!("--epsilon-gsk must be positive, got {}", args.epsilon_gsk)));
    }
    let grid = load_grid(global)?;
    let nptdf = load_ptdf(&grid, global)?;
    let partitions = args
        .partitions
        .iter()
        .map(|a| parse_partition_arg(a, &grid))
        .collect::<Result<Vec<_>, _>>()?;
    let scenarios = load_scenarios(args.scenarios.as_ref())?;
    let weights = args.weights.as_ref().map(|p| read_weights(p, &grid)).transpose()?;
    let options = CompareOptions {
        weights,
        tolerances: Tolerances { epsilon_gsk: args.epsilon_gsk, ..Tolerances::default() },
        allow_curtailment: !args.firm_demand,
    };
    let table =
        compare_divisions(&grid, &nptdf, &partitions, &scenarios, &options).map_err(market_error)?;

    let header: Vec<String> = [
        "label",
        "mean_SW",
        "delta_SW_vs_first",
        "mean_error_norm",
        "intrazonal_overload_count",
        "singular_scenario_count",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                cell(r.mean_sw),
                cell(r.delta_sw_vs_first),
                cell(r.mean_error_norm),
                r.intrazonal_overload_count.to_string(),
                r.singular_scenario_count.to_string(),
            ]
        })
        .collect();
    let path = out_path(global, "comparison.csv")?;
    write_csv(&path, &header, &rows)?;

    let pretty = |x: Option<f64>| x.map_or_else(|| "undefined".into(), |v| format!("{v:.3}"));
    let width = rows.iter().map(|r| r[0].len()).max().unwrap_or(5).max(5);
    println!(
        "{:<width$}  {:>16}  {:>12}  {:>12}  {:>9}  {:>9}",
        "label", "mean SW", "delta SW", "error norm", "overloads", "singular"
    );
    for r in &table.rows {
        println!(
            "{:<width$}  {:>16}  {:>12}  {:>12}  {:>9}  {:>9}",
            r.label,
            pretty(r.mean_sw),
            pretty(r.delta_sw_vs_first),
            pretty(r.mean_error_norm),
            r.intrazonal_overload_count,
            r.singular_scenario_count
        );
    }
    println!("{} scenarios -> {}", table.scenario_count, path.display());
    Ok(())
}

//! Fixture loading shared by the benchmarks.

use std::path::PathBuf;

use zonalcut_core::{parse_grid, parse_partition, parse_scenarios, Grid, Partition, Scenario};

pub fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn ieee39() -> Grid {
    parse_grid(&fixture("ieee39.json")).expect("bundled case parses")
}

pub fn ieee39_scenarios() -> Vec<Scenario> {
    parse_scenarios(&fixture("ieee39_scenarios.json")).expect("bundled scenarios parse")
}

pub fn ieee39_partition(name: &str, grid: &Grid) -> Partition {
    parse_partition(&fixture(name), grid).expect("bundled partition parses")
}

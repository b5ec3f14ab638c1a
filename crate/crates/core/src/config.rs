//! Numerical tolerances shared by every stage of the pipeline.

/// Tolerance record. One instance is threaded through the analyses so that
/// all thresholds live in a single place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Maximum |Σ p| (MW) for an injection vector to count as balanced.
    pub balance: f64,
    /// Flow agreement between equivalent operators (MW).
    pub flow: f64,
    /// Entrywise agreement of matrices built along different routes.
    pub matrix: f64,
    /// GSK column sums must equal one within this.
    pub gsk_column: f64,
    /// Zones with |net position| at or below this (MW) make the GSK singular.
    pub epsilon_gsk: f64,
    /// Slack allowed on line limits and capacity bounds in LP solutions (MW).
    pub limit: f64,
    /// Distances closer than this are treated as ties in clustering.
    pub tie: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            balance: 1e-6,
            flow: 1e-8,
            matrix: 1e-9,
            gsk_column: 1e-12,
            epsilon_gsk: 1e-3,
            limit: 1e-6,
            tie: 1e-12,
        }
    }
}

/// Default value of lost load (currency/MWh) when a load does not set one.
pub const DEFAULT_VOLL: f64 = 1000.0;

/// Default relative threshold below which a congested line is ignored.
pub const DEFAULT_MIN_WEIGHT: f64 = 0.01;

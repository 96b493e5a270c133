//! Published throughput and resolution-probability figures that the report
//! tables are compared against.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThroughputRow {
    pub users: usize,
    /// Throughput with every decode succeeding.
    pub mac: f64,
    pub measured: f64,
    pub model: f64,
}

pub const THROUGHPUT_TABLE: [ThroughputRow; 3] = [
    ThroughputRow { users: 2, mac: 0.7917, measured: 0.7273, model: 0.7495 },
    ThroughputRow { users: 3, mac: 0.8344, measured: 0.6926, model: 0.6465 },
    ThroughputRow { users: 4, mac: 0.875, measured: 0.5837, model: 0.6026 },
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolutionRow {
    pub label: &'static str,
    pub measured: f64,
    pub model: f64,
}

const fn row(label: &'static str, measured: f64, model: f64) -> ResolutionRow {
    ResolutionRow { label, measured, model }
}

pub const RESOLUTION_TABLE: [ResolutionRow; 17] = [
    row("2221", 1.0, 0.9997),
    row("221", 0.98, 0.9954),
    row("21", 0.9, 0.9324),
    row("3321", 0.9, 0.8757),
    row("3221", 0.82, 0.7498),
    row("321", 0.74, 0.7024),
    row("3311", 0.98, 0.9391),
    row("3121", 0.9, 0.9324),
    row("311", 0.87, 0.7532),
    row("44211", 0.84, 0.8643),
    row("4321", 0.59, 0.5125),
    row("4311", 0.56, 0.5496),
    row("422121", 0.88, 0.9282),
    row("42121", 0.81, 0.8695),
    row("42211", 0.7, 0.7263),
    row("4211", 0.64, 0.6804),
    row("4111", 0.66, 0.7297),
];

pub fn resolution_row(label: &str) -> Option<&'static ResolutionRow> {
    RESOLUTION_TABLE.iter().find(|r| r.label == label)
}

pub fn throughput_row(users: usize) -> Option<&'static ThroughputRow> {
    THROUGHPUT_TABLE.iter().find(|r| r.users == users)
}

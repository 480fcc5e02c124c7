//! Bundled machine descriptions, embedded so tests and callers can use them
//! without touching the filesystem. The same files live under `machines/`.

pub const HADAMARD: &str = include_str!("../machines/hadamard.mqt");
pub const IDENTITY: &str = include_str!("../machines/identity.mqt");
pub const PARITY: &str = include_str!("../machines/parity.mqt");
pub const BQP_DEMO: &str = include_str!("../machines/bqp-demo.mqt");
pub const ZQP_DEMO: &str = include_str!("../machines/zqp-demo.mqt");
pub const ZQP_DEMO_NOINIT: &str = include_str!("../machines/zqp-demo-noinit.mqt");
pub const NONUNITARY: &str = include_str!("../machines/fixtures/nonunitary.mqt");
pub const DUPCOL: &str = include_str!("../machines/fixtures/dupcol.mqt");

/// All bundled machines by name.
pub fn all() -> Vec<(&'static str, &'static str)> {
    vec![
        ("hadamard", HADAMARD),
        ("identity", IDENTITY),
        ("parity", PARITY),
        ("bqp-demo", BQP_DEMO),
        ("zqp-demo", ZQP_DEMO),
        ("zqp-demo-noinit", ZQP_DEMO_NOINIT),
        ("nonunitary", NONUNITARY),
        ("dupcol", DUPCOL),
    ]
}

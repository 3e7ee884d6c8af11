//! Specifications shipped with the crate, used by the regression suite,
//! the tests and the benchmarks.

/// Resettable accumulator with `acc` and `root` on different nodes.
pub const ACC_ROOT: &str = include_str!("../../fixtures/acc_root.lola");
/// Resettable accumulator with the `acc`/`root` cycle on one node.
pub const ACC_ROOT_COLOCATED: &str = include_str!("../../fixtures/acc_root_colocated.lola");
/// `a` and `b` read each other's previous value across two nodes.
pub const MUTUAL: &str = include_str!("../../fixtures/mutual.lola");
/// Three nodes, root two hops away from the sensors.
pub const TREE3: &str = include_str!("../../fixtures/tree3.lola");
/// Four sensors aggregated through two levels of nodes.
pub const TREE_DEPTH2: &str = include_str!("../../fixtures/tree_depth2.lola");
/// Temperature uprisings, trace-length independent.
pub const TEMPERATURE: &str = include_str!("../../fixtures/temperature.lola");
/// `root = if c then x else y` with lazy remote branches.
pub const CHOICE: &str = include_str!("../../fixtures/choice.lola");
/// `root = x + y` with both inputs remote.
pub const SUM2: &str = include_str!("../../fixtures/sum2.lola");
/// Sensor, intermediate and root on three nodes.
pub const CHAIN: &str = include_str!("../../fixtures/chain.lola");
/// One risk stream computed redundantly on two nodes and combined by `or`.
pub const REDUNDANT: &str = include_str!("../../fixtures/redundant.lola");

/// Every fixture with its file stem.
pub const ALL: [(&str, &str); 10] = [
    ("acc_root", ACC_ROOT),
    ("acc_root_colocated", ACC_ROOT_COLOCATED),
    ("mutual", MUTUAL),
    ("tree3", TREE3),
    ("tree_depth2", TREE_DEPTH2),
    ("temperature", TEMPERATURE),
    ("choice", CHOICE),
    ("sum2", SUM2),
    ("chain", CHAIN),
    ("redundant", REDUNDANT),
];

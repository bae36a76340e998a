//! Shared fixtures for the criterion benches: assembled operators on the
//! two reference domains, built the same way the study harness builds them.

use fraclap::{
    assemble, build_disk_mesh, build_interval_mesh, classify_nodes, Mesh, NodeClassification,
    OperatorMatrix,
};

/// Interval mesh on `(-1, 1)` with its node classification (`α = 1/2`,
/// `δ₀ = 1`).
pub fn interval_fixture(h: f64, mu: f64) -> (Mesh, NodeClassification) {
    let mesh = build_interval_mesh(-1.0, 1.0, h, mu).expect("valid interval parameters");
    let class = classify_nodes(&mesh, 0.5, 1.0).expect("classification");
    (mesh, class)
}

/// Unit-disk mesh with its node classification (`α = 1/2`, `δ₀ = 1`).
pub fn disk_fixture(h: f64, mu: f64) -> (Mesh, NodeClassification) {
    let mesh = build_disk_mesh(1.0, h, mu).expect("valid disk parameters");
    let class = classify_nodes(&mesh, 0.5, 1.0).expect("classification");
    (mesh, class)
}

/// Fully assembled operator on the unit disk.
pub fn disk_operator(h: f64, s: f64) -> OperatorMatrix {
    let (mesh, class) = disk_fixture(h, 1.0);
    assemble(&mesh, &class, s).expect("assembly")
}

/// Fully assembled operator on the interval.
pub fn interval_operator(h: f64, s: f64) -> OperatorMatrix {
    let (mesh, class) = interval_fixture(h, 1.0);
    assemble(&mesh, &class, s).expect("assembly")
}

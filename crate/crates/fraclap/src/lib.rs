//! Monotone finite-difference solver for the integral fractional Laplacian
//! `(-Δ)^s`, `s ∈ (0,1)`, with homogeneous Dirichlet exterior condition
//! `u = 0` on `Ωᶜ`.
//!
//! The discrete operator splits the singular integral at each interior node
//! `xᵢ` into two parts over a symmetric neighborhood `Ωᵢ` (an interval in 1D,
//! an axis-aligned square in 2D):
//!
//! ```text
//! L_h[u_h](xᵢ) = C_{n,s} [ -κᵢ Δ_FD u_h(xᵢ; Hᵢ) / Hᵢ^{2s}
//!                          + ∫_{Ωᵢᶜ} (u_h(xᵢ) - u_h(y)) |xᵢ-y|^{-n-2s} dy ]
//! ```
//!
//! where `Δ_FD` is the centered second difference with spacing `Hᵢ` and the
//! tail integral is evaluated exactly (1D antiderivatives) or by a boundary
//! reduction over clipped polygons (2D).  The resulting dense system is an
//! M-matrix: off-diagonals are nonpositive, the diagonal is positive, and the
//! discrete barrier `A·𝟙` is entrywise positive, which yields a discrete
//! comparison principle and uniform-in-`h` inverse positivity.
//!
//! Crate layout:
//! * [`mesh`] — graded interval/disk mesh generation, classification of
//!   interior nodes (`δᵢ`, `hᵢ`, `Hᵢ`), shape-regularity audits, point location.
//! * [`operator`] — kernel constants, singular stencil, tail weights by
//!   polygon clipping and edge quadrature, assembly, monotonicity checks.
//! * [`solver`] — dense LU and Gauss–Seidel solvers with residual reporting.
//! * [`analysis`] — exact ball solution, error norms, theoretical and fitted
//!   convergence rates, the convergence-study driver.

pub mod analysis;
mod geometry;
pub mod mesh;
pub mod operator;
mod quadrature;
pub mod solver;

pub use analysis::{
    exact_solution_ball, expected_rate, expected_rate_in_n, fit_rate, mu_opt, nodal_error,
    run_convergence_study, ConvergenceReport, ExpectedRate, RateVariable, SchemeConfig, StudyMode,
    StudyRun,
};
pub use mesh::{
    build_disk_mesh, build_interval_mesh, classify_nodes, compute_shape_constants, export_mesh,
    import_mesh, locate_point, Mesh, NodeClass, NodeClassification, OmegaShape, PointLocator,
    ShapeReport,
};
pub use operator::{
    assemble, clip_triangle_minus_square, interval_kernel_moment, kappa_constant,
    kappa_square_quadrature, polygon_kernel_moment, singular_stencil_row, tail_kernel_mass,
    tail_row, verify_monotone, write_matrix_dump, Affine2, AssemblyContext, KernelConstants,
    MonotonicityReport, OmegaKind, OperatorMatrix, RowMeta, Square,
};
pub use solver::{solve_damped_jacobi, solve_direct, solve_iterative, DiscreteSolution, SolverTag};

/// Errors produced by mesh generation, assembly, and solves.
///
/// The CLI maps these onto its exit-code contract: input and format problems
/// exit 2, monotonicity violations exit 3, solver failures exit 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("mesh file, line {line}: {msg}")]
    MeshParse { line: usize, msg: String },
    #[error("monotonicity violation in row {row} (vertex {vertex}): {detail}")]
    Monotonicity {
        row: usize,
        vertex: usize,
        detail: String,
    },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization failure: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for [`Error::InvalidInput`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

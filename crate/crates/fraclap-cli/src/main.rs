//! Command-line driver: mesh generation, single solves, and refinement
//! studies over the monotone two-scale discretization of `(-Δ)^s`.
//!
//! Exit codes are stable so scripts can branch on failure class:
//! `0` success, `2` invalid input (flags, files, config schema),
//! `3` monotonicity or rate-verification failure, `4` linear-solver failure.
//! Diagnostics go to standard error and are controlled by the
//! `FRACLAP_LOG` environment variable (`error|warn|info|debug`).

use clap::{Args, Parser, Subcommand, ValueEnum};
use fraclap::{
    assemble, build_disk_mesh, build_interval_mesh, classify_nodes, compute_shape_constants,
    exact_solution_ball, expected_rate, expected_rate_in_n, export_mesh, fit_rate, import_mesh,
    nodal_error, run_convergence_study, solve_direct, solve_iterative, verify_monotone,
    write_matrix_dump, ConvergenceReport, Error, Mesh, OperatorMatrix, RateVariable, Result,
    SchemeConfig, SolverTag, StudyRun,
};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fraclap", version, about = "Monotone two-scale solver for the integral fractional Laplacian")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a graded interval or disk mesh and print its shape report.
    Mesh(MeshArgs),
    /// Assemble and solve `(-Δ)^s u = 1` on a mesh file.
    Solve(SolveArgs),
    /// Run a refinement study described by a config file.
    Study(StudyArgs),
}

#[derive(Args)]
struct MeshArgs {
    /// Domain dimension: 1 (interval) or 2 (disk).
    #[arg(long)]
    dim: usize,
    /// Mesh parameter h.
    #[arg(long)]
    h: f64,
    /// Grading exponent toward the boundary (1 = quasi-uniform).
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    /// Interval endpoints, dimension 1 only (default -1 1).
    #[arg(long, num_args = 2, allow_hyphen_values = true, value_names = ["A", "B"])]
    range: Option<Vec<f64>>,
    /// Disk radius, dimension 2 only (default 1).
    #[arg(long)]
    radius: Option<f64>,
    /// Mesh file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Mesh file produced by `fraclap mesh`.
    #[arg(long)]
    mesh: PathBuf,
    /// Fractional order, in (0, 1).
    #[arg(long)]
    s: f64,
    /// Two-scale exponent, in [1/2, 1].
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Cap on the boundary-distance factor of the stencil scale H;
    /// defaults to half the domain diameter.
    #[arg(long)]
    delta0: Option<f64>,
    /// Linear solver.
    #[arg(long, value_enum, default_value_t = SolverChoice::Direct)]
    solver: SolverChoice,
    /// Relative residual tolerance (iterative solver only).
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Sweep budget (iterative solver only).
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Solution JSON to write.
    #[arg(long)]
    out: PathBuf,
    /// Also dump the assembled matrix (text, plus a JSON metadata sidecar).
    #[arg(long)]
    dump_matrix: Option<PathBuf>,
    /// Negate one off-diagonal entry after assembly.  Fault injection for
    /// exercising the monotonicity gate; not for regular use.
    #[arg(long, hide = true)]
    debug_flip_sign: bool,
}

#[derive(Args)]
struct StudyArgs {
    /// Study config file (TOML; see the bundled studies/ directory).
    config: PathBuf,
    /// Refinement levels solved concurrently (direct solver only).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SolverChoice {
    #[default]
    Direct,
    /// Gauss-Seidel; convergence is guaranteed by the M-matrix property.
    Gs,
}

/// On-disk study description: the scheme parameters plus where to put the
/// report and what rate to assert.  Unknown keys are errors.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyFile {
    #[serde(default)]
    solver: SolverChoice,
    scheme: SchemeConfig,
    #[serde(default)]
    report: ReportSpec,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportSpec {
    /// Report JSON path; defaults to `<config stem>.report.json`.
    #[serde(default)]
    json: Option<PathBuf>,
    /// Report CSV path; defaults to `<config stem>.report.csv`.
    #[serde(default)]
    csv: Option<PathBuf>,
    /// When set, the run prints PASS/FAIL comparing the fitted rate
    /// against this value and exits nonzero on FAIL.
    #[serde(default)]
    expect_rate: Option<f64>,
    /// Allowed |fitted - expected| deviation (default 0.1).
    #[serde(default)]
    rate_tolerance: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("FRACLAP_LOG"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Mesh(args) => cmd_mesh(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Study(args) => cmd_study(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> ExitCode {
    ExitCode::from(match e {
        Error::Monotonicity { .. } => 3,
        Error::Solver(_) => 4,
        _ => 2,
    })
}

fn cmd_mesh(args: MeshArgs) -> Result<ExitCode> {
    let mesh = match args.dim {
        1 => {
            if args.radius.is_some() {
                return Err(Error::invalid("--radius applies to dimension 2 only"));
            }
            let (a, b) = match &args.range {
                Some(r) => (r[0], r[1]),
                None => (-1.0, 1.0),
            };
            build_interval_mesh(a, b, args.h, args.mu)?
        }
        2 => {
            if args.range.is_some() {
                return Err(Error::invalid("--range applies to dimension 1 only"));
            }
            build_disk_mesh(args.radius.unwrap_or(1.0), args.h, args.mu)?
        }
        d => {
            return Err(Error::invalid(format!("dimension must be 1 or 2, got {d}")));
        }
    };
    std::fs::write(&args.out, export_mesh(&mesh))?;
    log::info!(
        "wrote {} vertices / {} cells to {}",
        mesh.num_vertices(),
        mesh.num_cells(),
        args.out.display()
    );
    let report = compute_shape_constants(&mesh);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn read_mesh(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    import_mesh(&text)
}

/// Row with the smallest row sum; the natural place to point at when the
/// monotonicity check fails.
fn weakest_row(op: &OperatorMatrix) -> usize {
    let mut worst = 0;
    for (i, row) in op.rows.iter().enumerate() {
        if row.row_sum < op.rows[worst].row_sum {
            worst = i;
        }
    }
    worst
}

/// Negate the most negative off-diagonal entry (or the diagonal of a 1x1
/// system), breaking the Z-sign pattern on purpose.
fn flip_one_sign(op: &mut OperatorMatrix) {
    let n = op.n();
    let mut target = (0, 0);
    let mut value = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j && op.matrix[(i, j)] < value {
                value = op.matrix[(i, j)];
                target = (i, j);
            }
        }
    }
    op.matrix[target] = -op.matrix[target];
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let mesh = read_mesh(&args.mesh)?;
    let delta0 = args.delta0.unwrap_or(0.5 * mesh.domain_diameter());
    let class = classify_nodes(&mesh, args.alpha, delta0)?;
    let mut op = assemble(&mesh, &class, args.s)?;
    if args.debug_flip_sign {
        flip_one_sign(&mut op);
    }
    if let Some(path) = &args.dump_matrix {
        write_matrix_dump(&op, path)?;
    }
    let mono = verify_monotone(&op);
    log::info!("{mono}");
    if !mono.is_m_matrix() {
        let row = weakest_row(&op);
        return Err(Error::Monotonicity {
            row,
            vertex: op.rows[row].vertex,
            detail: mono.to_string(),
        });
    }
    let f = vec![1.0; op.n()];
    let sol = match args.solver {
        SolverChoice::Direct => solve_direct(&op, &f)?,
        SolverChoice::Gs => solve_iterative(&op, &f, args.tol, args.max_iter)?,
    };
    let (solver, iterations) = match sol.tag {
        SolverTag::Direct => ("direct", None),
        SolverTag::Iterative { iterations } => ("gs", Some(iterations)),
    };
    let coordinates: Vec<[f64; 2]> = sol.vertices.iter().map(|&v| mesh.vertices[v]).collect();
    let out = serde_json::json!({
        "dimension": op.dimension,
        "s": op.s,
        "alpha": op.alpha,
        "delta0": op.delta0,
        "n": op.n(),
        "solver": solver,
        "iterations": iterations,
        "residual_norm": sol.residual_norm,
        "vertices": sol.vertices,
        "coordinates": coordinates,
        "values": sol.values,
    });
    std::fs::write(&args.out, serde_json::to_string_pretty(&out)?)?;
    println!(
        "solved {} unknowns (s={}, {}), residual {:.3e}",
        op.n(),
        op.s,
        solver,
        sol.residual_norm
    );
    if is_unit_ball_mesh(&mesh) {
        let err = nodal_error(&mesh, &sol, |x| exact_solution_ball(op.dimension, op.s, x));
        println!("max nodal error vs the unit-ball solution: {err:.6e}");
    }
    Ok(ExitCode::SUCCESS)
}

/// Whether every boundary vertex sits on the unit sphere, i.e. the mesh
/// belongs to the unit interval/disk family with a known exact solution.
fn is_unit_ball_mesh(mesh: &Mesh) -> bool {
    let mut any = false;
    for v in 0..mesh.num_vertices() {
        if mesh.is_boundary[v] {
            any = true;
            let p = mesh.vertices[v];
            if ((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() > 1e-9 {
                return false;
            }
        }
    }
    any
}

fn cmd_study(args: StudyArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::invalid(format!("{}: {e}", args.config.display())))?;
    let file: StudyFile = toml::from_str(&text)
        .map_err(|e| Error::invalid(format!("{}: {e}", args.config.display())))?;
    let report = match file.solver {
        SolverChoice::Direct => run_convergence_study(&file.scheme, args.jobs)?,
        SolverChoice::Gs => run_study_gauss_seidel(&file.scheme)?,
    };

    let stem = args
        .config
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("study")
        .to_owned();
    let json_path = file
        .report
        .json
        .unwrap_or_else(|| PathBuf::from(format!("{stem}.report.json")));
    let csv_path = file
        .report
        .csv
        .unwrap_or_else(|| PathBuf::from(format!("{stem}.report.csv")));
    std::fs::write(&json_path, report.to_json()?)?;
    std::fs::write(&csv_path, report.to_csv()?)?;

    for run in &report.runs {
        println!(
            "h={:<10} N={:<6} error={:.6e}",
            run.h, run.n_interior, run.linf_error
        );
    }
    println!(
        "fitted rate in {}: {:.4} over {} levels (expected {})",
        report.variable, report.fitted_rate, report.fit_levels, report.expected
    );
    println!("wrote {} and {}", json_path.display(), csv_path.display());

    if let Some(expect) = file.report.expect_rate {
        let tol = file.report.rate_tolerance.unwrap_or(0.1);
        let deviation = (report.fitted_rate - expect).abs();
        if deviation <= tol {
            println!("PASS: |{:.4} - {expect}| = {deviation:.4} <= {tol}", report.fitted_rate);
        } else {
            println!("FAIL: |{:.4} - {expect}| = {deviation:.4} > {tol}", report.fitted_rate);
            return Ok(ExitCode::from(3));
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Study loop with Gauss-Seidel solves instead of the factorization the
/// library harness uses.  Sequential by design: the iterative path exists
/// to cross-check solver-independence of the rates on small cases.
fn run_study_gauss_seidel(cfg: &SchemeConfig) -> Result<ConvergenceReport> {
    let (alpha, mu) = cfg.resolved_parameters()?;
    let mut hs = cfg.h.clone();
    if hs.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
        return Err(Error::invalid("mesh parameters h must be positive"));
    }
    hs.sort_by(|a, b| b.partial_cmp(a).expect("finite h"));
    hs.dedup();
    if hs.len() < 3 {
        return Err(Error::invalid(
            "a study needs at least three distinct mesh levels to fit a rate",
        ));
    }
    // Both reference domains have diameter 2.
    let delta0 = cfg.delta0.unwrap_or(1.0);
    let mut runs = Vec::with_capacity(hs.len());
    for &h in &hs {
        let mesh = match cfg.dimension {
            1 => build_interval_mesh(-1.0, 1.0, h, mu)?,
            2 => build_disk_mesh(1.0, h, mu)?,
            d => {
                return Err(Error::invalid(format!("dimension must be 1 or 2, got {d}")));
            }
        };
        let class = classify_nodes(&mesh, alpha, delta0)?;
        let op = assemble(&mesh, &class, cfg.s)?;
        let mono = verify_monotone(&op);
        if !mono.is_m_matrix() {
            let row = weakest_row(&op);
            return Err(Error::Monotonicity {
                row,
                vertex: op.rows[row].vertex,
                detail: mono.to_string(),
            });
        }
        let f = vec![1.0; op.n()];
        let sol = solve_iterative(&op, &f, 1e-10, 100_000)?;
        let linf_error = nodal_error(&mesh, &sol, |x| exact_solution_ball(cfg.dimension, cfg.s, x));
        log::info!("level h={h:.6}: N={}, error={linf_error:.6e}", op.n());
        runs.push(StudyRun {
            h,
            n_interior: op.n(),
            linf_error,
            residual_norm: sol.residual_norm,
            min_row_sum: mono.min_row_sum,
        });
    }
    let fit_levels = runs.len();
    let tail = &runs[..];
    let (variable, pairs, expected) = if cfg.dimension == 1 {
        (
            RateVariable::MeshSize,
            tail.iter().map(|r| (r.h, r.linf_error)).collect::<Vec<_>>(),
            expected_rate(cfg.dimension, cfg.s, alpha, mu, f64::INFINITY),
        )
    } else {
        (
            RateVariable::Dofs,
            tail.iter()
                .map(|r| (r.n_interior as f64, r.linf_error))
                .collect::<Vec<_>>(),
            expected_rate_in_n(cfg.dimension, cfg.s, alpha, mu, f64::INFINITY),
        )
    };
    let fitted_rate = fit_rate(&pairs)?;
    Ok(ConvergenceReport {
        dimension: cfg.dimension,
        s: cfg.s,
        alpha,
        mu,
        delta0,
        variable,
        runs,
        fit_levels,
        fitted_rate,
        expected,
    })
}

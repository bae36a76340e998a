//! Convergence harness: predicted rates, rate fitting, and end-to-end
//! refinement studies against the closed-form solution on the unit ball.
//!
//! For constant data `f ≡ 1` on the unit interval/disk the Dirichlet problem
//! has the explicit solution
//!
//! ```text
//! u(x) = 2^{-2s} Γ(n/2) / (Γ(n/2 + s) Γ(1 + s)) · (1 - |x|²)₊^s,
//! ```
//!
//! which is `C^s` up to the boundary and smooth inside.  That boundary layer
//! is what graded meshes are for, and it makes this family the standard
//! yardstick: every run here solves `(-Δ)^s u = 1`, measures the maximum
//! nodal error, and fits the observed decay against the predicted one.
//!
//! The predicted pointwise rate on a mesh with grading `μ`, two-scale
//! exponent `α`, and solution smoothness index `β` (capped at `β̂ = min{β,4}`
//! for the stencil term and `β̃ = min{β,2}` for the tail term) is
//!
//! ```text
//! err ≲ max{ h^{μs},  log(1/h)^κ̂ h^{(β̂-2s)α},  log(1/h)^κ̃ h^{β̃-2sα} },
//! ```
//!
//! with the log factors switched on exactly when `β̂ - 2s` or `β̂`
//! (respectively `β̃ - 2s` or `β̃`) is an integer.  [`expected_rate`] returns
//! the binding exponent, [`expected_rate_in_n`] converts it to a rate in the
//! number of unknowns via the mesh-size/cardinality relation, and
//! [`mu_opt`] picks the smallest grading that balances the three terms.

use crate::geometry::Point;
use crate::mesh::{build_disk_mesh, build_interval_mesh, classify_nodes};
use crate::operator::{assemble, verify_monotone, OperatorMatrix};
use crate::solver::{solve_direct, DiscreteSolution};
use crate::Mesh;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

/// Both reference domains (the interval `(-1,1)` and the unit disk) have
/// diameter 2; the scale cap `δ₀` defaults to half of it.
const DOMAIN_DIAMETER: f64 = 2.0;

/// Absolute slack when testing whether a smoothness exponent is an integer
/// (the condition that switches a logarithmic factor on).
const INTEGER_TOL: f64 = 1e-9;

/// Relative slack when testing which error term attains the minimum.
const TIE_TOL: f64 = 1e-12;

/// Solution of `(-Δ)^s u = 1` on the unit ball in `dimension` dimensions
/// with zero exterior values, evaluated at `x` (zero outside the ball).
///
/// At the center this equals `Γ(n/2) 2^{-2s} / (Γ(n/2+s) Γ(1+s))`, e.g.
/// exactly `1` for `n = 1, s = 1/2` and `2/π` for `n = 2, s = 1/2`.
pub fn exact_solution_ball(dimension: usize, s: f64, x: Point) -> f64 {
    debug_assert!(dimension == 1 || dimension == 2);
    debug_assert!(s > 0.0 && s < 1.0);
    let half_n = 0.5 * dimension as f64;
    let coeff = (-2.0 * s).exp2() * gamma(half_n) / (gamma(half_n + s) * gamma(1.0 + s));
    let r2 = x[0] * x[0] + x[1] * x[1];
    coeff * (1.0 - r2).max(0.0).powf(s)
}

/// Maximum nodal error of a discrete solution against a reference function,
/// taken over the interior vertices the solution lives on.
pub fn nodal_error<F: Fn(Point) -> f64>(mesh: &Mesh, sol: &DiscreteSolution, exact: F) -> f64 {
    let mut worst = 0.0f64;
    for (k, &v) in sol.vertices.iter().enumerate() {
        worst = worst.max((sol.values[k] - exact(mesh.vertices[v])).abs());
    }
    worst
}

/// A predicted convergence rate: `err ≲ log^* · h^rate` (or `N^rate` when
/// produced by [`expected_rate_in_n`], in which case `rate < 0`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpectedRate {
    pub rate: f64,
    /// Whether a logarithmic factor multiplies the leading term; observed
    /// rates then drift slightly above/below `rate` on practical meshes.
    pub log_factor: bool,
    pub beta_tilde: f64,
    pub beta_hat: f64,
}

impl fmt::Display for ExpectedRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.log_factor {
            write!(f, "{:.4} (up to a log factor)", self.rate)
        } else {
            write!(f, "{:.4}", self.rate)
        }
    }
}

fn near_integer(x: f64) -> bool {
    x.is_finite() && (x - x.round()).abs() < INTEGER_TOL
}

/// Predicted pointwise rate in the mesh parameter `h` for smoothness `β`
/// (pass `f64::INFINITY` for the constant-data family, which saturates the
/// caps `β̂ = 4`, `β̃ = 2`).
///
/// The rate is the smallest of the three exponents `μs`, `(β̂-2s)α`,
/// `β̃-2sα`; `log_factor` is set when a log-carrying term is among the
/// binding ones.
pub fn expected_rate(dimension: usize, s: f64, alpha: f64, mu: f64, beta: f64) -> ExpectedRate {
    debug_assert!(dimension == 1 || dimension == 2);
    let beta_hat = beta.min(4.0);
    let beta_tilde = beta.min(2.0);
    let kappa_hat = near_integer(beta_hat - 2.0 * s) || near_integer(beta_hat);
    let kappa_tilde = near_integer(beta_tilde - 2.0 * s) || near_integer(beta_tilde);
    // (exponent, carries a log factor when binding)
    let terms = [
        (mu * s, false),
        ((beta_hat - 2.0 * s) * alpha, kappa_hat),
        (beta_tilde - 2.0 * s * alpha, kappa_tilde),
    ];
    let rate = terms.iter().fold(f64::INFINITY, |r, t| r.min(t.0));
    let slack = TIE_TOL * rate.abs().max(1.0);
    let log_factor = terms.iter().any(|&(e, flag)| flag && e - rate <= slack);
    ExpectedRate {
        rate,
        log_factor,
        beta_tilde,
        beta_hat,
    }
}

/// The `h`-to-cardinality exponent: on a `μ`-graded mesh the number of
/// unknowns scales like `h^{-n}` for `μ < n/(n-1)`, like `log(1/h) h^{-n}`
/// at equality, and like `h^{(1-n)μ}` beyond (boundary layers dominate).
/// In one dimension `N ≂ h^{-1}` for every grading.
fn cardinality_threshold(dimension: usize) -> f64 {
    if dimension == 1 {
        f64::INFINITY
    } else {
        dimension as f64 / (dimension as f64 - 1.0)
    }
}

/// Predicted rate in the number of unknowns `N` (negative: `err ≲ N^rate`),
/// obtained from [`expected_rate`] through the mesh cardinality relation.
pub fn expected_rate_in_n(
    dimension: usize,
    s: f64,
    alpha: f64,
    mu: f64,
    beta: f64,
) -> ExpectedRate {
    let in_h = expected_rate(dimension, s, alpha, mu, beta);
    let n = dimension as f64;
    let threshold = cardinality_threshold(dimension);
    let (rate, extra_log) = if mu < threshold - INTEGER_TOL {
        (-in_h.rate / n, false)
    } else if mu <= threshold + INTEGER_TOL {
        // N ≂ log(1/h) h^{-n} leaves a residual log(N) factor behind.
        (-in_h.rate / n, true)
    } else {
        (-in_h.rate / ((n - 1.0) * mu), false)
    };
    ExpectedRate {
        rate,
        log_factor: in_h.log_factor || extra_log,
        ..in_h
    }
}

/// Smallest grading exponent that balances the interior and boundary error
/// terms at the optimal two-scale exponent `α = β̃/β̂`.
///
/// When `(n/(n-1) + 2β̃/β̂) s > β̃` the balancing grading
/// `μ = β̃/s - 2β̃/β̂` stays below the cardinality threshold and is returned;
/// otherwise grading beyond `n/(n-1)` buys nothing and that threshold is
/// returned instead.  For `n = 1` the first branch always applies (any
/// grading keeps `N ≂ h^{-1}`), giving `μ = (2-s)/s` for constant data.
pub fn mu_opt(dimension: usize, s: f64, beta: f64) -> f64 {
    debug_assert!(dimension == 1 || dimension == 2);
    debug_assert!(s > 0.0 && s < 1.0);
    let beta_hat = beta.min(4.0);
    let beta_tilde = beta.min(2.0);
    let threshold = cardinality_threshold(dimension);
    let ratio = 2.0 * beta_tilde / beta_hat;
    if (threshold + ratio) * s > beta_tilde {
        beta_tilde / s - ratio
    } else {
        threshold
    }
}

/// Least-squares slope of `log(err)` against `log(x)` over `(x, err)` pairs.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::invalid("rate fit needs at least two samples"));
    }
    for &(x, y) in pairs {
        if !(x > 0.0 && x.is_finite() && y > 0.0 && y.is_finite()) {
            return Err(Error::invalid(format!(
                "rate fit needs positive finite samples, got ({x}, {y})"
            )));
        }
    }
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let m = logs.len() as f64;
    let (mx, my) = logs
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / m, b + y / m));
    let (sxy, sxx) = logs.iter().fold((0.0, 0.0), |(sxy, sxx), &(x, y)| {
        (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx))
    });
    if sxx <= 0.0 {
        return Err(Error::invalid("rate fit needs at least two distinct x"));
    }
    Ok(sxy / sxx)
}

/// Which independent variable a fitted rate refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateVariable {
    /// Rate in the mesh parameter `h` (positive for a convergent scheme).
    MeshSize,
    /// Rate in the number of unknowns `N` (negative for a convergent scheme).
    Dofs,
}

impl fmt::Display for RateVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateVariable::MeshSize => "h",
            RateVariable::Dofs => "N",
        })
    }
}

/// Preset parameter choices for a refinement study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    /// `α = 1/2` with the balancing grading from [`mu_opt`].
    Optimal,
    /// `α = 1` on a quasi-uniform mesh: the one-scale finite-difference
    /// discretization this scheme generalizes, kept as a baseline.
    HuangOberman,
}

/// Declarative description of a refinement study; deserializable from TOML
/// or JSON.  Unknown keys are rejected so typos in config files surface
/// instead of silently running defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    /// 1 for the interval `(-1,1)`, 2 for the unit disk.
    pub dimension: usize,
    /// Fractional order, in `(0, 1)`.
    pub s: f64,
    /// Preset that fixes `alpha` and `mu`; mutually exclusive with setting
    /// them explicitly.
    #[serde(default)]
    pub mode: Option<StudyMode>,
    /// Two-scale exponent in `[1/2, 1]`; defaults to `1/2`.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Mesh grading exponent `≥ 1`; defaults to `1` (quasi-uniform).
    #[serde(default)]
    pub mu: Option<f64>,
    /// Cap on the boundary-distance factor of the patch scale `H`;
    /// defaults to half the domain diameter.
    #[serde(default)]
    pub delta0: Option<f64>,
    /// Mesh parameters to run, finest last (any order is accepted).
    pub h: Vec<f64>,
}

impl SchemeConfig {
    /// The `(alpha, mu)` pair the study will run with.
    pub fn resolved_parameters(&self) -> Result<(f64, f64)> {
        match self.mode {
            Some(mode) => {
                if self.alpha.is_some() || self.mu.is_some() {
                    return Err(Error::invalid(
                        "mode presets fix alpha and mu; drop the explicit values",
                    ));
                }
                Ok(match mode {
                    StudyMode::Optimal => (0.5, mu_opt(self.dimension, self.s, f64::INFINITY)),
                    StudyMode::HuangOberman => (1.0, 1.0),
                })
            }
            None => Ok((self.alpha.unwrap_or(0.5), self.mu.unwrap_or(1.0))),
        }
    }
}

/// One refinement level of a study.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StudyRun {
    pub h: f64,
    /// Number of interior unknowns.
    pub n_interior: usize,
    /// Maximum nodal error against the closed-form solution.
    pub linf_error: f64,
    /// Residual norm reported by the linear solve.
    pub residual_norm: f64,
    /// Smallest row sum of the assembled matrix (strictly positive for an
    /// M-matrix with our exterior condition).
    pub min_row_sum: f64,
}

/// Outcome of a refinement study: the per-level records plus a rate fitted
/// across the ladder and the predicted rate to compare against.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub dimension: usize,
    pub s: f64,
    pub alpha: f64,
    pub mu: f64,
    pub delta0: f64,
    /// Variable the rates refer to: `h` in one dimension, `N` in two
    /// (where grading changes the `h`-to-`N` relation).
    pub variable: RateVariable,
    /// Levels in coarse-to-fine order.
    pub runs: Vec<StudyRun>,
    /// How many levels entered the fit (currently all of them).
    pub fit_levels: usize,
    pub fitted_rate: f64,
    pub expected: ExpectedRate,
}

impl ConvergenceReport {
    /// Render the report as CSV, one line per level.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let record = |r: &StudyRun| {
            [
                r.h.to_string(),
                r.n_interior.to_string(),
                self.mu.to_string(),
                self.alpha.to_string(),
                self.s.to_string(),
                r.linf_error.to_string(),
                self.fitted_rate.to_string(),
                self.expected.rate.to_string(),
            ]
        };
        w.write_record([
            "h",
            "N",
            "mu",
            "alpha",
            "s",
            "linf_error",
            "fitted_rate",
            "expected_rate",
        ])
        .and_then(|()| self.runs.iter().try_for_each(|r| w.write_record(record(r))))
        .map_err(|e| Error::invalid(format!("csv: {e}")))?;
        let bytes = w
            .into_inner()
            .map_err(|e| Error::invalid(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv writer produces utf-8"))
    }

    /// Render the report as pretty-printed JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn worst_row(op: &OperatorMatrix) -> usize {
    let mut worst = 0;
    for (i, row) in op.rows.iter().enumerate() {
        if row.row_sum < op.rows[worst].row_sum {
            worst = i;
        }
    }
    worst
}

fn run_level(
    dimension: usize,
    s: f64,
    alpha: f64,
    mu: f64,
    delta0: f64,
    h: f64,
) -> Result<StudyRun> {
    let mesh = match dimension {
        1 => build_interval_mesh(-1.0, 1.0, h, mu)?,
        _ => build_disk_mesh(1.0, h, mu)?,
    };
    let class = classify_nodes(&mesh, alpha, delta0)?;
    let op = assemble(&mesh, &class, s)?;
    let mono = verify_monotone(&op);
    if !mono.is_m_matrix() {
        let row = worst_row(&op);
        return Err(Error::Monotonicity {
            row,
            vertex: op.rows[row].vertex,
            detail: mono.to_string(),
        });
    }
    let f = vec![1.0; op.n()];
    let sol = solve_direct(&op, &f)?;
    let linf_error = nodal_error(&mesh, &sol, |x| exact_solution_ball(dimension, s, x));
    log::info!(
        "level h={h:.6}: N={}, error={linf_error:.6e}",
        sol.values.len()
    );
    Ok(StudyRun {
        h,
        n_interior: sol.values.len(),
        linf_error,
        residual_norm: sol.residual_norm,
        min_row_sum: mono.min_row_sum,
    })
}

/// Run a refinement study for `(-Δ)^s u = 1` on the reference domain,
/// solving every level in `cfg.h` and fitting the error decay across the
/// whole ladder.  `jobs` levels are assembled and solved concurrently
/// (pass 0 or 1 for sequential).
///
/// Any monotonicity failure aborts the study with
/// [`Error::Monotonicity`]: a sign violation means the discretization no
/// longer guarantees a maximum principle, so its errors are not evidence
/// of anything.
pub fn run_convergence_study(cfg: &SchemeConfig, jobs: usize) -> Result<ConvergenceReport> {
    if cfg.dimension != 1 && cfg.dimension != 2 {
        return Err(Error::invalid(format!(
            "dimension must be 1 or 2, got {}",
            cfg.dimension
        )));
    }
    if !(cfg.s > 0.0 && cfg.s < 1.0) {
        return Err(Error::invalid(format!(
            "fractional order s must lie in (0, 1), got {}",
            cfg.s
        )));
    }
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
    let delta0 = cfg.delta0.unwrap_or(0.5 * DOMAIN_DIAMETER);
    let (dimension, s) = (cfg.dimension, cfg.s);

    let mut slots: Vec<Option<Result<StudyRun>>> = hs.iter().map(|_| None).collect();
    let workers = jobs.max(1).min(hs.len());
    if workers == 1 {
        for (i, &h) in hs.iter().enumerate() {
            let level = run_level(dimension, s, alpha, mu, delta0, h);
            let failed = level.is_err();
            slots[i] = Some(level);
            if failed {
                break;
            }
        }
    } else {
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel();
        thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, hs) = (&next, &hs);
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= hs.len() {
                        break;
                    }
                    let level = run_level(dimension, s, alpha, mu, delta0, hs[i]);
                    if tx.send((i, level)).is_err() {
                        break;
                    }
                });
            }
        });
        drop(tx);
        while let Ok((i, level)) = rx.recv() {
            slots[i] = Some(level);
        }
    }

    let mut runs = Vec::with_capacity(hs.len());
    for slot in slots {
        match slot {
            Some(Ok(run)) => runs.push(run),
            Some(Err(e)) => return Err(e),
            None => return Err(Error::Solver("a study level was never run".into())),
        }
    }

    let fit_levels = runs.len();
    let tail = &runs[..];
    let (variable, pairs, expected) = if dimension == 1 {
        (
            RateVariable::MeshSize,
            tail.iter().map(|r| (r.h, r.linf_error)).collect::<Vec<_>>(),
            expected_rate(dimension, s, alpha, mu, f64::INFINITY),
        )
    } else {
        (
            RateVariable::Dofs,
            tail.iter()
                .map(|r| (r.n_interior as f64, r.linf_error))
                .collect::<Vec<_>>(),
            expected_rate_in_n(dimension, s, alpha, mu, f64::INFINITY),
        )
    };
    let fitted_rate = fit_rate(&pairs)?;
    log::debug!(
        "fitted rate in {variable}: {fitted_rate:.4} over {fit_levels} levels (expected {expected})"
    );
    Ok(ConvergenceReport {
        dimension,
        s,
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

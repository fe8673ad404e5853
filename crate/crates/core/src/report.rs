//! Multi-method comparison runs and their JSON / text reports.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::krylov::{pcg, PcgOptions};
use crate::linalg::{Operator, SparseSym};
use crate::partition::Partition;
use crate::pipeline::{AlgebraicGeneo, Diagnostics, Method, MethodRun, SetupOptions};
use crate::precond::one_level_as;

pub const SCHEMA_VERSION: u32 = 1;

/// Relative widening applied to the bound interval before checking Ritz values.
pub const BOUND_SLACK: f64 = 1e-6;

/// True when every value lies in `[lo, hi]` widened by [`BOUND_SLACK`].
pub fn within_bound(values: &[f64], bound: (f64, f64)) -> bool {
    let lo = bound.0 * (1.0 - BOUND_SLACK);
    let hi = bound.1 * (1.0 + BOUND_SLACK);
    values.iter().all(|&v| v >= lo && v <= hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
    pub final_rel_residual: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    /// `None` for one-level
    pub coarse_dim: Option<usize>,
    /// only for the corrected preconditioner
    pub n_minus: Option<usize>,
    /// only for methods that carry the bound
    pub ritz_in_bound: Option<bool>,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub schema: u32,
    pub problem: String,
    pub n: usize,
    pub num_domains: usize,
    pub tau: f64,
    pub tol: f64,
    pub maxit: usize,
    pub n_plus: Option<usize>,
    pub bound: Option<(f64, f64)>,
    pub rows: Vec<BenchRow>,
    pub diagnostics: Option<Diagnostics>,
}

impl BenchReport {
    /// Zero every wall-clock field, leaving what a fixed seed determines.
    pub fn without_timings(&self) -> BenchReport {
        let mut r = self.clone();
        for row in &mut r.rows {
            row.setup_seconds = 0.0;
            row.solve_seconds = 0.0;
        }
        if let Some(d) = &mut r.diagnostics {
            d.timings = Default::default();
        }
        r
    }

    /// Methods whose Ritz values left the guaranteed interval.
    pub fn violations(&self) -> Vec<Method> {
        self.rows.iter().filter(|r| r.ritz_in_bound == Some(false)).map(|r| r.method).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Result of [`run_bench`]: the report plus the per-method solves in the same order.
pub struct Bench {
    pub report: BenchReport,
    pub runs: Vec<MethodRun>,
}

/// Solve `A·x = b` once per method. The two-level setup is shared between
/// `hplus-only` and `new`; the `hplus-only` setup time excludes the Woodbury phase.
pub fn run_bench(
    problem: &str,
    a: &SparseSym,
    b: &[f64],
    x_star: Option<&[f64]>,
    p: &Partition,
    methods: &[Method],
    opts: &SetupOptions,
    pcg_opts: PcgOptions,
) -> Result<Bench> {
    let geneo = if methods.iter().any(|&m| m != Method::OneLevel) {
        let clock = Instant::now();
        let g = AlgebraicGeneo::setup(a, p, opts)?;
        Some((g, clock.elapsed().as_secs_f64()))
    } else {
        None
    };
    let diagnostics = geneo.as_ref().map(|(g, _)| g.diagnostics.clone());

    let mut runs = Vec::with_capacity(methods.len());
    for &method in methods {
        let clock = Instant::now();
        let one_level;
        let (prec, setup_seconds): (&dyn Operator, f64) = match (method, &geneo) {
            (Method::OneLevel, _) => {
                one_level = one_level_as(a, p, opts.threads)?;
                (&one_level, clock.elapsed().as_secs_f64())
            }
            (Method::HPlusOnly, Some((g, secs))) => {
                (g.h_plus(), secs - g.diagnostics.timings.woodbury)
            }
            (Method::New, Some((g, secs))) => (&g.prec, *secs),
            _ => unreachable!("two-level setup exists when requested"),
        };
        let clock = Instant::now();
        let (x, report) = pcg(a, prec, b, pcg_opts, x_star)?;
        runs.push(MethodRun {
            method,
            x,
            report,
            setup_seconds,
            solve_seconds: clock.elapsed().as_secs_f64(),
            diagnostics: if method == Method::OneLevel { None } else { diagnostics.clone() },
        });
    }

    let bound = diagnostics.as_ref().map(|d| d.bound);
    let rows = runs
        .iter()
        .map(|run| {
            let r = &run.report;
            let d = run.diagnostics.as_ref();
            BenchRow {
                method: run.method,
                iterations: r.iterations,
                converged: r.converged,
                final_rel_residual: r.rel_residuals.last().copied().unwrap_or(0.0),
                lambda_min: r.ritz.lambda_min,
                lambda_max: r.ritz.lambda_max,
                kappa: r.ritz.kappa,
                coarse_dim: d.map(|d| d.coarse_dim),
                n_minus: if run.method == Method::New { d.map(|d| d.n_minus) } else { None },
                ritz_in_bound: match (run.method.has_bound(), bound) {
                    (true, Some(bd)) => Some(within_bound(&r.ritz.values, bd)),
                    _ => None,
                },
                setup_seconds: run.setup_seconds,
                solve_seconds: run.solve_seconds,
            }
        })
        .collect();

    let report = BenchReport {
        schema: SCHEMA_VERSION,
        problem: problem.to_string(),
        n: a.dim(),
        num_domains: p.num_domains(),
        tau: opts.tau,
        tol: pcg_opts.tol,
        maxit: pcg_opts.maxit,
        n_plus: diagnostics.as_ref().map(|d| d.n_plus),
        bound,
        rows,
        diagnostics,
    };
    Ok(Bench { report, runs })
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

/// Aligned plain-text table, one row per method.
pub fn render_table(r: &BenchReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "problem {}  n = {}  N = {}  tau = {}  tol = {:e}", r.problem, r.n, r.num_domains, r.tau, r.tol);
    let _ = writeln!(
        out,
        "{:<11} {:>5} {:>12} {:>12} {:>11} {:>6} {:>6} {:>6}",
        "method", "It", "lambda_min", "lambda_max", "kappa", "#V0", "n-", "bound"
    );
    for row in &r.rows {
        let it = if row.converged { row.iterations.to_string() } else { format!(">{}", row.iterations) };
        let bound = match row.ritz_in_bound {
            Some(true) => "ok",
            Some(false) => "FAIL",
            None => "-",
        };
        let _ = writeln!(
            out,
            "{:<11} {:>5} {:>12.4e} {:>12.4e} {:>11.4e} {:>6} {:>6} {:>6}",
            row.method.to_string(),
            it,
            row.lambda_min,
            row.lambda_max,
            row.kappa,
            opt(row.coarse_dim),
            opt(row.n_minus),
            bound
        );
    }
    if let (Some(np), Some((lo, hi))) = (r.n_plus, r.bound) {
        let _ = writeln!(out, "bound [1/((1+2N+)tau), N+ + 1] = [{lo:.4e}, {hi}] with N+ = {np}");
    }
    out
}

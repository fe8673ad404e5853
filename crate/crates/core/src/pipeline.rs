//! End-to-end setup of the preconditioners and the preset test problems.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::coarse::{all_gevp, build_coarse_basis, GevpResult};
use crate::error::{Error, Result};
use crate::krylov::{pcg, PcgOptions, SolveReport};
use crate::linalg::{Operator, SparseSym};
use crate::partition::{coloring_bound, ensure_minimal_overlap, partition_graph, regular_partition, Partition};
use crate::precond::{build_h_plus, one_level_as, woodbury_setup, CorrectedPrec, TwoLevelPrec, WoodburyOptions};
use crate::problems::{elasticity_2d, laplacian_2d, ElasticityConfig, GeneratedProblem};
use crate::splitting::{
    assemble_a_plus, build_b, negative_spectrum, split_all, NegativeSpectrum, SurrogateMatrix, DROP_TOL,
    ZERO_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetupOptions {
    pub tau: f64,
    pub zero_tol: f64,
    pub drop_tol: f64,
    pub woodbury: WoodburyOptions,
    pub threads: usize,
}

impl Default for SetupOptions {
    fn default() -> Self {
        SetupOptions {
            tau: 10.0,
            zero_tol: ZERO_TOL,
            drop_tol: DROP_TOL,
            woodbury: WoodburyOptions::default(),
            threads: 1,
        }
    }
}

/// `[((1+2N₊)τ)⁻¹, N₊+1]`
pub fn spectral_bound(n_plus: usize, tau: f64) -> (f64, f64) {
    (1.0 / ((1.0 + 2.0 * n_plus as f64) * tau), n_plus as f64 + 1.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub split: f64,
    pub assemble: f64,
    pub negative: f64,
    pub gevp: f64,
    pub h_plus: f64,
    pub woodbury: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub n: usize,
    pub num_domains: usize,
    pub sum_local_sizes: usize,
    /// `Σ nˢ − n`, the upper bound on `n₋`
    pub overlap_excess: usize,
    pub sum_k_neg: usize,
    pub n_minus: usize,
    pub coarse_candidates: usize,
    pub coarse_dim: usize,
    pub coarse_dropped: usize,
    pub n_plus: usize,
    pub tau: f64,
    pub bound: (f64, f64),
    pub timings: Timings,
}

/// Everything built for `H(τ)`.
pub struct AlgebraicGeneo {
    pub partition: Partition,
    pub surrogate: SurrogateMatrix,
    pub negative: NegativeSpectrum,
    pub gevp: Vec<GevpResult>,
    pub prec: CorrectedPrec,
    pub diagnostics: Diagnostics,
}

impl AlgebraicGeneo {
    pub fn setup(a: &SparseSym, p: &Partition, opts: &SetupOptions) -> Result<Self> {
        if !(opts.tau > 1.0) {
            return Err(Error::Config(format!("tau = {} must exceed 1", opts.tau)));
        }
        let mut t = Timings::default();
        let clock = Instant::now();
        let b = build_b(a, p)?;
        let locals = split_all(&b, p, opts.zero_tol, opts.threads)?;
        t.split = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let negative = negative_spectrum(&locals, a.dim(), opts.drop_tol)?;
        t.negative = clock.elapsed().as_secs_f64();
        let sum_k_neg = locals.iter().map(|l| l.k_neg()).sum();

        let clock = Instant::now();
        let surrogate = assemble_a_plus(a, locals, p)?;
        t.assemble = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let gevp = all_gevp(&surrogate, p, opts.threads)?;
        let basis = build_coarse_basis(&gevp, p, opts.tau)?;
        t.gevp = clock.elapsed().as_secs_f64();
        let (coarse_candidates, coarse_dropped) = (basis.candidates(), basis.dropped());

        let clock = Instant::now();
        let h_plus = build_h_plus(surrogate.matrix(), &surrogate, p, basis, opts.threads)?;
        t.h_plus = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let correction = woodbury_setup(surrogate.matrix(), &surrogate, &h_plus, &negative, &opts.woodbury)?;
        t.woodbury = clock.elapsed().as_secs_f64();

        let n_plus = coloring_bound(surrogate.matrix(), p);
        let diagnostics = Diagnostics {
            n: a.dim(),
            num_domains: p.num_domains(),
            sum_local_sizes: p.sizes().iter().sum(),
            overlap_excess: p.overlap_excess(),
            sum_k_neg,
            n_minus: negative.n_minus(),
            coarse_candidates,
            coarse_dim: h_plus.coarse_dim(),
            coarse_dropped,
            n_plus,
            tau: opts.tau,
            bound: spectral_bound(n_plus, opts.tau),
            timings: t,
        };
        Ok(AlgebraicGeneo {
            partition: p.clone(),
            surrogate,
            negative,
            gevp,
            prec: CorrectedPrec { h_plus, correction },
            diagnostics,
        })
    }

    pub fn h_plus(&self) -> &TwoLevelPrec {
        &self.prec.h_plus
    }
}

impl Operator for AlgebraicGeneo {
    fn dim(&self) -> usize {
        self.prec.dim()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.prec.apply_into(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "onelevel")]
    OneLevel,
    #[serde(rename = "hplus-only")]
    HPlusOnly,
    #[serde(rename = "new")]
    New,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::OneLevel, Method::HPlusOnly, Method::New];

    /// Whether the spectral bound is guaranteed for this preconditioner applied to `A`.
    pub fn has_bound(self) -> bool {
        self == Method::New
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::OneLevel => "onelevel",
            Method::HPlusOnly => "hplus-only",
            Method::New => "new",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "onelevel" => Ok(Method::OneLevel),
            "hplus-only" => Ok(Method::HPlusOnly),
            "new" => Ok(Method::New),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Outcome of one preconditioned solve.
pub struct MethodRun {
    pub method: Method,
    pub x: Vec<f64>,
    pub report: SolveReport,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
    /// present for the two-level methods
    pub diagnostics: Option<Diagnostics>,
}

/// Build the preconditioner for `method` and run PCG on `A·x = b`.
pub fn run_method(
    a: &SparseSym,
    b: &[f64],
    x_star: Option<&[f64]>,
    p: &Partition,
    method: Method,
    opts: &SetupOptions,
    pcg_opts: PcgOptions,
) -> Result<MethodRun> {
    let clock = Instant::now();
    let (prec, diagnostics): (Box<dyn Operator>, Option<Diagnostics>) = match method {
        Method::OneLevel => (Box::new(one_level_as(a, p, opts.threads)?), None),
        Method::HPlusOnly | Method::New => {
            let g = AlgebraicGeneo::setup(a, p, opts)?;
            let d = g.diagnostics.clone();
            if method == Method::New {
                (Box::new(g.prec), Some(d))
            } else {
                (Box::new(g.prec.h_plus), Some(d))
            }
        }
    };
    let setup_seconds = clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let (x, report) = pcg(a, prec.as_ref(), b, pcg_opts, x_star)?;
    Ok(MethodRun { method, x, report, setup_seconds, solve_seconds: clock.elapsed().as_secs_f64(), diagnostics })
}

/// Preset problems and their default partitions.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    /// layered beam, graph partition
    Testcase1,
    /// homogeneous square, checkerboard partition
    Testcase2Regular,
    /// homogeneous square, graph partition
    Testcase2Graph,
    Laplacian { nx: usize, ny: usize },
}

/// Default element count per side of the square.
pub const TESTCASE2_ELEMENTS: usize = 55;

impl ProblemSpec {
    pub fn default_domains(&self) -> usize {
        match self {
            ProblemSpec::Testcase1 => 4,
            ProblemSpec::Testcase2Regular | ProblemSpec::Testcase2Graph => 16,
            ProblemSpec::Laplacian { .. } => 4,
        }
    }

    pub fn generate(&self) -> Result<GeneratedProblem> {
        match self {
            ProblemSpec::Testcase1 => elasticity_2d(&ElasticityConfig::testcase1()),
            ProblemSpec::Testcase2Regular | ProblemSpec::Testcase2Graph => {
                elasticity_2d(&ElasticityConfig::testcase2(TESTCASE2_ELEMENTS))
            }
            ProblemSpec::Laplacian { nx, ny } => laplacian_2d(*nx, *ny),
        }
    }

    /// Checkerboard for the regular preset, seeded graph growing otherwise.
    pub fn partition(&self, problem: &GeneratedProblem, num_domains: usize, seed: u64) -> Result<Partition> {
        match self {
            ProblemSpec::Testcase2Regular => regular_partition(&problem.a, &problem.grid, num_domains),
            _ => graph_partition(&problem.a, num_domains, seed),
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::Testcase1 => f.write_str("testcase1"),
            ProblemSpec::Testcase2Regular => f.write_str("testcase2-regular"),
            ProblemSpec::Testcase2Graph => f.write_str("testcase2-graph"),
            ProblemSpec::Laplacian { nx, ny } => write!(f, "laplacian:{nx}x{ny}"),
        }
    }
}

impl FromStr for ProblemSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "testcase1" => Ok(ProblemSpec::Testcase1),
            "testcase2-regular" => Ok(ProblemSpec::Testcase2Regular),
            "testcase2-graph" => Ok(ProblemSpec::Testcase2Graph),
            _ => {
                let dims = s
                    .strip_prefix("laplacian:")
                    .ok_or_else(|| Error::Config(format!("unknown problem '{s}'")))?;
                let (nx, ny) = dims
                    .split_once('x')
                    .ok_or_else(|| Error::Config(format!("expected laplacian:NXxNY, got '{s}'")))?;
                let parse = |v: &str| {
                    v.parse::<usize>().map_err(|_| Error::Config(format!("bad grid extent '{v}'")))
                };
                Ok(ProblemSpec::Laplacian { nx: parse(nx)?, ny: parse(ny)? })
            }
        }
    }
}

/// Seeded graph partition with minimal overlap added.
pub fn graph_partition(a: &SparseSym, num_domains: usize, seed: u64) -> Result<Partition> {
    let classes = partition_graph(a, num_domains, seed)?;
    ensure_minimal_overlap(a, &classes)
}

//! Command-line driver: problem generation, partitioning, solves and comparison runs.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use algeneo::io::{read_matrix_market, read_vector, write_matrix_market, write_vector};
use algeneo::krylov::{dense_preconditioned_spectrum, pcg, write_history_csv, PcgOptions};
use algeneo::linalg::{Operator, SparseSym};
use algeneo::partition::Partition;
use algeneo::pipeline::{graph_partition, AlgebraicGeneo, Method, ProblemSpec, SetupOptions};
use algeneo::precond::{one_level_as, WoodburyOptions};
use algeneo::problems::{GeneratedProblem, NodeGrid};
use algeneo::report::{render_table, run_bench, within_bound, BenchReport, SCHEMA_VERSION};
use algeneo::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SETUP: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;
const EXIT_BOUND: u8 = 5;

/// Largest dimension for which `spectrum` also computes the dense spectrum of H·A.
const DENSE_CHECK_MAX: usize = 200;

#[derive(Parser)]
#[command(name = "algeneo", version, about = "Algebraic two-level Schwarz preconditioning with a GenEO coarse space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a preset problem as matrix.mtx, rhs.txt, x_star.txt and geometry.csv
    Generate(InputArgs),
    /// Partition a problem and write partition.txt
    Partition(InputArgs),
    /// Solve with one method; writes report.json, history.csv and solution.txt
    Solve(RunArgs),
    /// Ritz estimates of the preconditioned spectrum, checked against the bound
    Spectrum(RunArgs),
    /// Compare several methods on one problem (default: all)
    Bench(RunArgs),
}

#[derive(Args)]
struct InputArgs {
    /// testcase1, testcase2-regular, testcase2-graph or laplacian:NXxNY
    #[arg(long)]
    problem: Option<String>,
    /// symmetric Matrix Market file, used instead of --problem
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// right-hand side, one value per line (default: the preset's, or all ones)
    #[arg(long)]
    rhs: Option<PathBuf>,
    /// partition file to use instead of partitioning
    #[arg(long)]
    partition: Option<PathBuf>,
    /// number of subdomains
    #[arg(long = "N")]
    num_domains: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 10.0)]
    tau: f64,
    /// onelevel, hplus-only or new; bench takes a comma-separated list
    #[arg(long)]
    method: Option<String>,
    /// relative residual tolerance (1e-8; 1e-12 for spectrum)
    #[arg(long)]
    tol: Option<f64>,
    /// iteration cap (default 100·ceil(n/1000))
    #[arg(long)]
    maxit: Option<usize>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// dense Woodbury setup up to this size
    #[arg(long)]
    dense_cutoff: Option<usize>,
}

enum Outcome {
    Done,
    NotConverged,
    BoundViolated,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Partition(args) => cmd_partition(&args),
        Command::Solve(args) => cmd_solve(&args),
        Command::Spectrum(args) => cmd_spectrum(&args),
        Command::Bench(args) => cmd_bench(&args),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("not converged");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Ok(Outcome::BoundViolated) => {
            eprintln!("ERROR: Ritz values outside the guaranteed interval");
            ExitCode::from(EXIT_BOUND)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::InvalidPartition(_)
        | Error::UncoveredEntry { .. }
        | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        Error::NotPositiveDefinite { .. }
        | Error::Singular { .. }
        | Error::Setup(_)
        | Error::NoConvergence { .. }
        | Error::CoarseNotDefinite(_)
        | Error::WoodburySetup { .. }
        | Error::IndefiniteOperator { .. } => EXIT_SETUP,
        Error::Io(_) => EXIT_OTHER,
    }
}

struct Loaded {
    label: String,
    a: SparseSym,
    b: Vec<f64>,
    x_star: Option<Vec<f64>>,
    preset: Option<(ProblemSpec, GeneratedProblem)>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load(args: &InputArgs) -> Result<Loaded> {
    let mut loaded = match (&args.problem, &args.matrix) {
        (Some(_), Some(_)) => return Err(Error::Config("--problem and --matrix are mutually exclusive".into())),
        (None, None) => return Err(Error::Config("one of --problem or --matrix is required".into())),
        (Some(name), None) => {
            let spec: ProblemSpec = name.parse()?;
            let prob = spec.generate()?;
            Loaded {
                label: spec.to_string(),
                a: prob.a.clone(),
                b: prob.b.clone(),
                x_star: prob.x_star.clone(),
                preset: Some((spec, prob)),
            }
        }
        (None, Some(path)) => {
            let a = read_matrix_market(open(path)?)?;
            let n = a.dim();
            Loaded { label: path.display().to_string(), a, b: vec![1.0; n], x_star: None, preset: None }
        }
    };
    if let Some(path) = &args.rhs {
        let b = read_vector(open(path)?)?;
        if b.len() != loaded.a.dim() {
            return Err(Error::DimensionMismatch { expected: loaded.a.dim(), got: b.len() });
        }
        loaded.b = b;
        // the reference solution belongs to the preset right-hand side
        loaded.x_star = None;
    }
    Ok(loaded)
}

fn partition_for(args: &InputArgs, loaded: &Loaded) -> Result<Partition> {
    if let Some(path) = &args.partition {
        let p = Partition::read_from(open(path)?)?;
        if p.dim() != loaded.a.dim() {
            return Err(Error::DimensionMismatch { expected: loaded.a.dim(), got: p.dim() });
        }
        p.check_minimal_overlap(&loaded.a)?;
        return Ok(p);
    }
    let n_dom = match (&loaded.preset, args.num_domains) {
        (_, Some(0)) => return Err(Error::Config("--N must be at least 1".into())),
        (_, Some(k)) => k,
        (Some((spec, _)), None) => spec.default_domains(),
        (None, None) => 4,
    };
    match &loaded.preset {
        Some((spec, prob)) => spec.partition(prob, n_dom, args.seed),
        None => graph_partition(&loaded.a, n_dom, args.seed),
    }
}

fn ensure_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn write_geometry(grid: &NodeGrid, mut w: impl Write) -> Result<()> {
    writeln!(w, "node,ix,iy,x,y,dofs")?;
    for iy in 0..grid.nodes_y {
        for ix in 0..grid.nodes_x {
            let [x, y] = grid.coords(ix, iy);
            let dofs: Vec<String> = grid.node_dofs(ix, iy).iter().map(|d| d.to_string()).collect();
            writeln!(w, "{},{ix},{iy},{x},{y},{}", grid.node_index(ix, iy), dofs.join(" "))?;
        }
    }
    Ok(())
}

fn cmd_generate(args: &InputArgs) -> Result<Outcome> {
    if args.problem.is_none() {
        return Err(Error::Config("generate needs --problem".into()));
    }
    let loaded = load(args)?;
    let (_, prob) = loaded.preset.as_ref().expect("preset problem");
    ensure_out(&args.out)?;
    let mut w = create(&args.out, "matrix.mtx")?;
    write_matrix_market(&loaded.a, &mut w)?;
    w.flush()?;
    let mut w = create(&args.out, "rhs.txt")?;
    write_vector(&loaded.b, &mut w)?;
    w.flush()?;
    if let Some(x) = &loaded.x_star {
        let mut w = create(&args.out, "x_star.txt")?;
        write_vector(x, &mut w)?;
        w.flush()?;
    }
    let mut w = create(&args.out, "geometry.csv")?;
    write_geometry(&prob.grid, &mut w)?;
    w.flush()?;
    println!("{}: n = {}, nnz = {}, written to {}", loaded.label, loaded.a.dim(), loaded.a.nnz(), args.out.display());
    Ok(Outcome::Done)
}

fn cmd_partition(args: &InputArgs) -> Result<Outcome> {
    let loaded = load(args)?;
    let p = partition_for(args, &loaded)?;
    p.check_minimal_overlap(&loaded.a)?;
    ensure_out(&args.out)?;
    let mut w = create(&args.out, "partition.txt")?;
    p.write_to(&mut w)?;
    w.flush()?;
    println!(
        "{}: N = {}, sizes {:?}, overlap excess {}",
        loaded.label,
        p.num_domains(),
        p.sizes(),
        p.overlap_excess()
    );
    Ok(Outcome::Done)
}

fn setup_options(args: &RunArgs) -> Result<SetupOptions> {
    if args.threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let mut woodbury = WoodburyOptions::default();
    if let Some(c) = args.dense_cutoff {
        woodbury.dense_cutoff = c;
    }
    Ok(SetupOptions { tau: args.tau, threads: args.threads, woodbury, ..SetupOptions::default() })
}

fn pcg_options(args: &RunArgs, n: usize, default_tol: f64) -> Result<PcgOptions> {
    let mut o = PcgOptions::for_dim(n);
    o.tol = args.tol.unwrap_or(default_tol);
    if let Some(m) = args.maxit {
        o.maxit = m;
    }
    if !(o.tol > 0.0) || o.maxit == 0 {
        return Err(Error::Config("--tol must be positive and --maxit at least 1".into()));
    }
    Ok(o)
}

fn single_method(args: &RunArgs) -> Result<Method> {
    args.method.as_deref().unwrap_or("new").parse()
}

fn check_tau(method: Method, tau: f64) -> Result<()> {
    if method != Method::OneLevel && !(tau > 1.0) {
        return Err(Error::Config(format!("--tau {tau} must exceed 1 for a coarse space")));
    }
    Ok(())
}

fn write_report(out: &Path, name: &str, json: &str) -> Result<()> {
    let mut w = create(out, name)?;
    w.write_all(json.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn bench_outcome(report: &BenchReport, require_convergence: bool) -> Outcome {
    if !report.violations().is_empty() {
        Outcome::BoundViolated
    } else if require_convergence && report.rows.iter().any(|r| !r.converged) {
        Outcome::NotConverged
    } else {
        Outcome::Done
    }
}

fn cmd_solve(args: &RunArgs) -> Result<Outcome> {
    let method = single_method(args)?;
    check_tau(method, args.tau)?;
    let opts = setup_options(args)?;
    let loaded = load(&args.input)?;
    let p = partition_for(&args.input, &loaded)?;
    let pcg_opts = pcg_options(args, loaded.a.dim(), 1e-8)?;
    let bench = run_bench(&loaded.label, &loaded.a, &loaded.b, loaded.x_star.as_deref(), &p, &[method], &opts, pcg_opts)?;

    let out = &args.input.out;
    ensure_out(out)?;
    write_report(out, "report.json", &bench.report.to_json())?;
    let run = &bench.runs[0];
    let mut w = create(out, "history.csv")?;
    write_history_csv(&run.report, &mut w)?;
    w.flush()?;
    let mut w = create(out, "solution.txt")?;
    write_vector(&run.x, &mut w)?;
    w.flush()?;
    print!("{}", render_table(&bench.report));
    println!("setup {:.3} s, solve {:.3} s", run.setup_seconds, run.solve_seconds);
    Ok(bench_outcome(&bench.report, true))
}

fn cmd_bench(args: &RunArgs) -> Result<Outcome> {
    let methods: Vec<Method> = match &args.method {
        None => Method::ALL.to_vec(),
        Some(list) => list.split(',').map(|m| m.trim().parse()).collect::<Result<_>>()?,
    };
    if methods.is_empty() {
        return Err(Error::Config("no method given".into()));
    }
    for &m in &methods {
        check_tau(m, args.tau)?;
    }
    let opts = setup_options(args)?;
    let loaded = load(&args.input)?;
    let p = partition_for(&args.input, &loaded)?;
    let pcg_opts = pcg_options(args, loaded.a.dim(), 1e-8)?;
    let bench = run_bench(&loaded.label, &loaded.a, &loaded.b, loaded.x_star.as_deref(), &p, &methods, &opts, pcg_opts)?;

    let out = &args.input.out;
    ensure_out(out)?;
    write_report(out, "report.json", &bench.report.to_json())?;
    let table = render_table(&bench.report);
    let mut w = create(out, "table.txt")?;
    w.write_all(table.as_bytes())?;
    w.flush()?;
    for run in &bench.runs {
        let mut w = create(out, &format!("history_{}.csv", run.method))?;
        write_history_csv(&run.report, &mut w)?;
        w.flush()?;
    }
    print!("{table}");
    // one-level is expected to stall, so non-convergence is reported in the table only
    Ok(bench_outcome(&bench.report, false))
}

#[derive(Serialize)]
struct DenseCheck {
    lambda_min: f64,
    lambda_max: f64,
    /// largest relative gap between the Ritz and the dense extremes
    rel_diff: f64,
}

#[derive(Serialize)]
struct SpectrumReport {
    schema: u32,
    problem: String,
    n: usize,
    num_domains: usize,
    method: Method,
    tau: f64,
    iterations: usize,
    converged: bool,
    lambda_min: f64,
    lambda_max: f64,
    kappa: f64,
    n_plus: Option<usize>,
    bound: Option<(f64, f64)>,
    in_bound: Option<bool>,
    ritz_values: Vec<f64>,
    dense: Option<DenseCheck>,
}

fn cmd_spectrum(args: &RunArgs) -> Result<Outcome> {
    let method = single_method(args)?;
    check_tau(method, args.tau)?;
    let opts = setup_options(args)?;
    let loaded = load(&args.input)?;
    let p = partition_for(&args.input, &loaded)?;
    let pcg_opts = pcg_options(args, loaded.a.dim(), 1e-12)?;

    let one_level;
    let geneo;
    let (prec, diag): (&dyn Operator, _) = match method {
        Method::OneLevel => {
            one_level = one_level_as(&loaded.a, &p, opts.threads)?;
            (&one_level, None)
        }
        Method::HPlusOnly | Method::New => {
            geneo = AlgebraicGeneo::setup(&loaded.a, &p, &opts)?;
            let d = Some(geneo.diagnostics.clone());
            if method == Method::New {
                (&geneo.prec, d)
            } else {
                (geneo.h_plus(), d)
            }
        }
    };
    let (_, rep) = pcg(&loaded.a, prec, &loaded.b, pcg_opts, None)?;
    let ritz = &rep.ritz;
    let bound = diag.as_ref().map(|d| d.bound);
    let in_bound = match (method.has_bound(), bound) {
        (true, Some(bd)) => Some(within_bound(&ritz.values, bd)),
        _ => None,
    };
    let dense = if loaded.a.dim() <= DENSE_CHECK_MAX {
        let ev = dense_preconditioned_spectrum(&loaded.a, prec)?;
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        let rel_diff = ((ritz.lambda_min - lo).abs() / lo.abs()).max((ritz.lambda_max - hi).abs() / hi.abs());
        Some(DenseCheck { lambda_min: lo, lambda_max: hi, rel_diff })
    } else {
        None
    };
    let report = SpectrumReport {
        schema: SCHEMA_VERSION,
        problem: loaded.label.clone(),
        n: loaded.a.dim(),
        num_domains: p.num_domains(),
        method,
        tau: opts.tau,
        iterations: rep.iterations,
        converged: rep.converged,
        lambda_min: ritz.lambda_min,
        lambda_max: ritz.lambda_max,
        kappa: ritz.kappa,
        n_plus: diag.as_ref().map(|d| d.n_plus),
        bound,
        in_bound,
        ritz_values: ritz.values.clone(),
        dense,
    };
    let out = &args.input.out;
    ensure_out(out)?;
    write_report(out, "spectrum.json", &serde_json::to_string_pretty(&report).expect("report serializes"))?;

    println!(
        "{} {}: {} iterations, Ritz [{:.6e}, {:.6e}], kappa {:.4e}",
        report.problem, method, rep.iterations, ritz.lambda_min, ritz.lambda_max, ritz.kappa
    );
    if let (Some((lo, hi)), Some(np)) = (bound, report.n_plus) {
        println!("bound [{lo:.6e}, {hi}] with N+ = {np}");
    }
    if let Some(d) = &report.dense {
        println!("dense [{:.6e}, {:.6e}], relative gap {:.2e}", d.lambda_min, d.lambda_max, d.rel_diff);
    }
    Ok(match in_bound {
        Some(false) => Outcome::BoundViolated,
        _ if !rep.converged => Outcome::NotConverged,
        _ => Outcome::Done,
    })
}

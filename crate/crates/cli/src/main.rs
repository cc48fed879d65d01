//! `evolv`: certify, solve and verify evolutionary problems described by
//! scenario files or the shipped examples.
//!
//! Exit codes: 0 pass, 1 check failed, 2 input error, 3 degenerate step,
//! 4 numeric or internal error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evolv_core::convergence::{halving_meshes, Boundary, HeatStudy};
use evolv_core::grid::Weight;
use evolv_core::material::standard_probe;
use evolv_core::operators;
use evolv_core::scenario::{examples, Scenario};
use evolv_core::solver::{self, EvolutionaryProblem, SolveOptions};
use evolv_core::verify::{self, window_grid, ConvergenceReport, Verdict};
use evolv_core::wellposed;
use evolv_core::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "evolv", version, about = "Evolutionary equations on weighted time grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write the solution CSV and report JSON.
    Solve(SolveArgs),
    /// Compute the positivity certificate without solving.
    Certify(ProblemArgs),
    /// Run a verification suite and print one JSON verdict per line.
    Verify(VerifyArgs),
    /// Manufactured-solution convergence study for the heat example.
    Convergence(ConvergenceArgs),
    /// List the shipped examples, or print one as a scenario.
    Examples { name: Option<String> },
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "example")]
    scenario: Option<PathBuf>,
    /// Name of a shipped example.
    #[arg(long)]
    example: Option<String>,
    /// Weight(s), overriding the scenario.
    #[arg(long, value_delimiter = ',')]
    nu: Vec<f64>,
    /// Print the expanded scenario and exit.
    #[arg(long)]
    dump_scenario: bool,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Relative residual tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Causality,
    NuIndependence,
    Commutator,
    Adjoint,
    Yosida,
    Spectral,
    Oracle,
    Corpus,
}

#[derive(Args)]
struct VerifyArgs {
    suite: Suite,
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weights for the nu-independence suite.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 4.0])]
    nus: Vec<f64>,
    /// Tolerance override for the suite's main check.
    #[arg(long)]
    tol: Option<f64>,
    /// Add the anticausal operator `D^♯` to the causality check (negative control).
    #[arg(long)]
    inject_anticausal: bool,
    /// Number of step halvings for the order studies.
    #[arg(long, default_value_t = 4)]
    halvings: usize,
    /// Problems in the corpus suite.
    #[arg(long, default_value_t = 100)]
    count: u64,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long, value_enum, default_value_t = Bc::Dirichlet)]
    bc: Bc,
    #[arg(long, default_value_t = 1.0)]
    conductivity: f64,
    /// Scales the manufactured solution; 0 gives the zero problem.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 4)]
    halvings: usize,
    /// Coarsest step of the temporal study.
    #[arg(long, default_value_t = 0.1)]
    h0: f64,
    /// Mesh size of the temporal study.
    #[arg(long, default_value_t = 63)]
    points: usize,
    /// Fixed step of the spatial study.
    #[arg(long, default_value_t = 5e-4)]
    spatial_h: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bc {
    Dirichlet,
    Neumann,
}

enum Failure {
    Check,
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome = Result<(), Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidGrid(_)
        | Error::Shape(_)
        | Error::Parameter(_)
        | Error::NuBelowThreshold { .. }
        | Error::Scenario(_)
        | Error::Io { .. } => 2,
        Error::DegenerateStep { .. } => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Convergence(a) => cmd_convergence(&a),
        Command::Examples { name } => cmd_examples(name.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Core(e)) => {
            eprintln!("evolv: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

struct Loaded {
    scenario: Scenario,
    /// Directory against which relative paths in the scenario resolve.
    base: PathBuf,
}

fn load(args: &ProblemArgs, default_example: Option<&str>) -> Result<Loaded, Error> {
    let (mut scenario, base) = match (&args.scenario, args.example.as_deref().or(default_example)) {
        (Some(path), _) => {
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (Scenario::load(path)?, base)
        }
        (None, Some(name)) => (examples::named(name)?, PathBuf::from(".")),
        (None, None) => return Err(Error::Scenario("pass --scenario PATH or --example NAME".into())),
    };
    if !args.nu.is_empty() {
        scenario.nu = if args.nu.len() == 1 {
            evolv_core::scenario::NuSpec::One(args.nu[0])
        } else {
            evolv_core::scenario::NuSpec::Many(args.nu.clone())
        };
    }
    Ok(Loaded { scenario, base })
}

fn problem(args: &ProblemArgs, default_example: Option<&str>) -> Result<(Loaded, EvolutionaryProblem, Vec<f64>), Error> {
    let loaded = load(args, default_example)?;
    let built = loaded.scenario.build(&loaded.base)?;
    Ok((loaded, built.problem, built.nus))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Error> {
    let io = |source| Error::Io { path: path.display().to_string(), source };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"
}

fn line<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("verdict serializes"));
}

/// Artifact path: `--out DIR` wins, then the scenario's own output entry,
/// which resolves against the scenario directory.
fn artifact(out: Option<&Path>, declared: Option<&str>, base: &Path, default_name: String) -> Option<PathBuf> {
    match (out, declared) {
        (Some(dir), Some(d)) => Some(dir.join(Path::new(d).file_name().unwrap_or(d.as_ref()))),
        (Some(dir), None) => Some(dir.join(default_name)),
        (None, Some(d)) => Some(base.join(d)),
        (None, None) => None,
    }
}

fn cmd_solve(args: &SolveArgs) -> Outcome {
    let (loaded, p, nus) = problem(&args.problem, None)?;
    if args.problem.dump_scenario {
        print!("{}", loaded.scenario.to_json() + "\n");
        return Ok(());
    }
    let opts = SolveOptions { residual_tol: args.tol, ..SolveOptions::default() };
    let reports = solver::nu_sweep_with(&p, &nus, &opts)?;
    let records: Vec<_> = reports
        .iter()
        .zip(&nus)
        .map(|(r, &nu)| r.record(&p.with_nu(nu).expect("weights validated by the sweep")))
        .collect();
    let outputs = &loaded.scenario.outputs;
    let out = args.problem.out.as_deref();
    if let Some(path) = artifact(out, outputs.csv.as_deref(), &loaded.base, format!("{}.csv", p.label)) {
        write_atomic(&path, reports[0].u.to_csv().as_bytes())?;
    }
    let report_text = if records.len() == 1 { json(&records[0]) } else { json(&records) };
    if let Some(path) = artifact(out, outputs.report.as_deref(), &loaded.base, format!("{}.report.json", p.label)) {
        write_atomic(&path, report_text.as_bytes())?;
    }
    for r in &records {
        line(r);
    }
    let ok = reports.iter().all(|r| r.residual_ok && r.norm_bound_ok != Some(false));
    if ok {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

#[derive(Serialize)]
struct CertifyRecord<'a> {
    format: u32,
    label: &'a str,
    nu: f64,
    certificate: wellposed::Certificate,
}

fn cmd_certify(args: &ProblemArgs) -> Outcome {
    let (loaded, p, nus) = problem(args, None)?;
    if args.dump_scenario {
        print!("{}", loaded.scenario.to_json() + "\n");
        return Ok(());
    }
    let mut all = true;
    let mut records = Vec::new();
    for nu in nus {
        let q = p.with_nu(nu)?;
        let b = solver::assemble(&q)?;
        let maria = match q.law.pointwise() {
            Some(s) => Some(wellposed::pointwise_condition_from_samples(s, nu)?),
            None => None,
        };
        let certificate = wellposed::certify(&b, &q.weight, 8, maria)?;
        all &= certificate.certified;
        records.push(CertifyRecord { format: 1, label: &p.label, nu, certificate });
    }
    if let Some(dir) = &args.out {
        let text = if records.len() == 1 { json(&records[0]) } else { json(&records) };
        write_atomic(&dir.join(format!("{}.certificate.json", p.label)), text.as_bytes())?;
    }
    for r in &records {
        line(r);
    }
    if all {
        Ok(())
    } else {
        eprintln!("evolv: uncertified");
        Err(Failure::Check)
    }
}

fn cmd_verify(args: &VerifyArgs) -> Outcome {
    let verdicts = run_suite(args)?;
    for v in &verdicts {
        line(v);
    }
    if let Some(dir) = &args.problem.out {
        let text: String = verdicts.iter().map(|v| serde_json::to_string(v).expect("verdict serializes") + "\n").collect();
        write_atomic(&dir.join("verdicts.jsonl"), text.as_bytes())?;
    }
    if verdicts.iter().all(|v| v.pass) {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn order_verdict(r: ConvergenceReport, seed: u64) -> Verdict {
    Verdict { seed: Some(seed), ..r.verdict() }
}

fn run_suite(args: &VerifyArgs) -> Result<Vec<Verdict>, Error> {
    let seed = args.seed;
    let tol = |default: f64| args.tol.unwrap_or(default);
    let mut out = Vec::new();
    match args.suite {
        Suite::Causality => {
            let (_, p, _) = problem(&args.problem, Some("heat1d"))?;
            let a = p.grid.time(p.grid.n() / 2);
            let r = if args.inject_anticausal {
                let b = solver::assemble(&p)?;
                let d = operators::time_derivative(&p.grid, p.dim());
                let b = operators::sum(&[b, operators::weighted_adjoint(&d, &p.weight)?])?;
                verify::verify_causality_operator(&b, &p.f, &p.weight, a, seed, 10)?
            } else {
                verify::verify_causality(&p, a, seed, 10)?
            };
            out.push(Verdict::at_most("causality", Some(seed), r.max_rel_difference, tol(1e-12)));
        }
        Suite::NuIndependence => {
            let (_, p, _) = problem(&args.problem, Some("heat1d"))?;
            let r = verify::verify_nu_independence(&p, &args.nus)?;
            out.push(Verdict::at_most("nu_independence", Some(seed), r.max_rel_difference, tol(1e-12)));
        }
        Suite::Commutator => {
            let law = verify::random_nonautonomous_law(seed, 32, 3)?;
            let w = Weight::new(law.grid(), 1.0)?;
            for eps in [0.01, 0.1, 1.0] {
                let r = verify::verify_commutator_identity(&law, eps, &w)?;
                out.push(Verdict::at_most(format!("commutator_identity eps={eps}"), Some(seed), r.residual, tol(1e-12)));
            }
        }
        Suite::Adjoint => {
            out.push(order_verdict(verify::verify_adjoint_formula(1.0, (0.0, 8.0), 0.1, args.halvings)?, seed));
        }
        Suite::Yosida => {
            let g = window_grid(0.0, 8.0, 0.001)?;
            let w = Weight::new(&g, 1.0)?;
            let eps: Vec<f64> = (0..=args.halvings).map(|i| 0.1 / 2f64.powi(i as i32)).collect();
            out.push(order_verdict(verify::verify_yosida_convergence(&standard_probe(&g, 1), &w, &eps)?, seed));
        }
        Suite::Spectral => {
            let r = verify::verify_spectral_representation(&|g| standard_probe(g, 1), 1.0, (0.0, 8.0), 0.1, args.halvings)?;
            out.push(order_verdict(r, seed));
        }
        Suite::Oracle => {
            let p = if args.problem.scenario.is_some() || args.problem.example.is_some() {
                problem(&args.problem, None)?.1
            } else {
                verify::corpus_problem(seed)?
            };
            let fast = solver::solve_with(&p, &SolveOptions { certify: false, ..SolveOptions::default() })?.u;
            let dense = solver::solve_dense_oracle(&p)?;
            let n = p.grid.n();
            let scale = dense.max_abs_leading(n);
            let diff = fast.sub(&dense)?.max_abs_leading(n);
            let rel = if scale > 0.0 { diff / scale } else { diff };
            out.push(Verdict::at_most("oracle", Some(seed), rel, tol(1e-10)));
        }
        Suite::Corpus => {
            for s in seed..seed + args.count {
                let p = verify::corpus_problem(s)?;
                let r = solver::solve(&p)?;
                out.push(Verdict::at_most("corpus_residual", Some(s), r.residual_rel, tol(1e-10)));
                if let Some(c) = r.certificate.as_ref().filter(|c| c.certified) {
                    let bound = p.f.weighted_norm(&p.weight) / c.c + 1e-8;
                    let measured = r.u.weighted_norm(&p.weight);
                    out.push(Verdict::at_most("corpus_norm_bound", Some(s), measured, bound));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ConvergenceRecord {
    format: u32,
    study: HeatStudy,
    temporal: ConvergenceReport,
    spatial: ConvergenceReport,
}

fn cmd_convergence(args: &ConvergenceArgs) -> Outcome {
    let bc = match args.bc {
        Bc::Dirichlet => Boundary::Dirichlet,
        Bc::Neumann => Boundary::Neumann,
    };
    let study = HeatStudy { bc, conductivity: args.conductivity, amplitude: args.amplitude, ..HeatStudy::default() };
    let temporal = study.temporal(args.points, args.h0, args.halvings)?;
    let spatial = study.spatial(&halving_meshes(bc, 2, 4), args.spatial_h)?;
    let pass = if args.amplitude == 0.0 {
        temporal.errors.iter().chain(&spatial.errors).all(|&e| e == 0.0)
    } else {
        temporal.pass && spatial.pass
    };
    let record = ConvergenceRecord { format: 1, study, temporal, spatial };
    if let Some(dir) = &args.out {
        write_atomic(&dir.join("convergence.json"), json(&record).as_bytes())?;
    }
    line(&record);
    if pass {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn cmd_examples(name: Option<&str>) -> Outcome {
    match name {
        Some(n) => print!("{}", examples::named(n)?.to_json() + "\n"),
        None => {
            for n in examples::NAMES {
                println!("{n:<12} {}", examples::describe(n));
            }
        }
    }
    Ok(())
}

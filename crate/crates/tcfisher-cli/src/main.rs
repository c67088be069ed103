//! Command-line front end: solve, verify, oracle, gen and bench workflows
//! over market instance files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tcfisher::bench::{Family, GeneratorSpec};
use tcfisher::engine::{self, SolveConfig};
use tcfisher::io;
use tcfisher::numeric::{Exact, NumericMode, Scalar, DEFAULT_TOL};
use tcfisher::{oracle, verify, MarketInstance};

#[derive(Debug, Parser)]
#[command(name = "tcfisher", version, about = "Equilibrium solver for Fisher markets with transaction costs")]
struct Cli {
    /// Arithmetic backend: exact rationals or floating point.
    #[arg(
        long,
        short = 'N',
        global = true,
        env = "TCFISHER_NUMERIC",
        default_value = "float64"
    )]
    numeric: NumericMode,

    /// Comparison tolerance for float-mode verification.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Structured,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve an instance and verify the result.
    Solve {
        instance: PathBuf,
        /// Accuracy parameter; overrides the instance file's default.
        #[arg(long)]
        epsilon: Option<String>,
        /// Write one JSON trace record per walk event to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Override the round guard.
        #[arg(long)]
        max_rounds: Option<u64>,
        /// Engine-internal comparison tolerance (float mode).
        #[arg(long, default_value_t = 1e-11)]
        solver_tol: f64,
    },
    /// Check given prices and allocations against the equilibrium
    /// conditions.
    Verify {
        instance: PathBuf,
        /// Prices as a JSON array, e.g. "[1, 0.5]".
        #[arg(long)]
        prices: Option<String>,
        /// Allocation as a JSON matrix (buyers x goods).
        #[arg(long)]
        alloc: Option<String>,
        /// Read prices and allocation from a solve's structured output.
        #[arg(long, conflicts_with_all = ["prices", "alloc"])]
        result: Option<PathBuf>,
        /// Check the exact conditions instead of the approximate ones.
        #[arg(long)]
        exact: bool,
        /// Accuracy parameter for the approximate conditions.
        #[arg(long)]
        epsilon: Option<String>,
    },
    /// Cross-check an instance with the convex-program solver.
    Oracle {
        instance: PathBuf,
        /// Convergence tolerance.
        #[arg(long, default_value_t = 1e-10)]
        oracle_tol: f64,
    },
    /// Generate a seeded random instance.
    Gen {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(short)]
        n: usize,
        #[arg(short)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Blocking probability (blocked-random family).
        #[arg(long, default_value_t = 0.3)]
        q: f64,
        /// Default epsilon to embed in the file.
        #[arg(long)]
        epsilon: Option<String>,
        /// Output path (stdout when omitted).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Solve a batch of seeded instances and check counter bounds.
    Bench {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(short)]
        n: usize,
        #[arg(short)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of instances (seeds seed..seed+count).
        #[arg(long, default_value_t = 10)]
        count: u64,
        #[arg(long)]
        epsilon: String,
        #[arg(long, default_value_t = 0.3)]
        q: f64,
        /// Write the structured report to this file as well.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    UniformRandom,
    ShippingGrid,
    BlockedRandom,
    ReservePrice,
    ZeroCost,
}

impl FamilyArg {
    fn to_family(self, q: f64) -> Family {
        match self {
            FamilyArg::UniformRandom | FamilyArg::ZeroCost => Family::UniformRandom,
            FamilyArg::ShippingGrid => Family::ShippingGrid,
            FamilyArg::BlockedRandom => Family::BlockedRandom { q },
            FamilyArg::ReservePrice => Family::ReservePrice,
        }
    }
}

const EXIT_USAGE: u8 = 2;
const EXIT_FAIL: u8 = 1;

enum CliError {
    Usage(String),
    Run(String),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Run(format!("{e:#}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.numeric {
        NumericMode::Exact => dispatch::<Exact>(&cli),
        NumericMode::Float64 => dispatch::<f64>(&cli),
    };
    match outcome {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAIL)
        }
    }
}

fn load_instance<S: Scalar>(path: &PathBuf) -> Result<io::ParsedInstance<S>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Run(format!("cannot read {}: {e}", path.display())))?;
    io::parse_instance::<S>(&text).map_err(|e| CliError::Run(e.to_string()))
}

/// Flag value takes precedence over the instance file's default.
fn resolve_epsilon<S: Scalar>(
    flag: &Option<String>,
    file_default: Option<S>,
) -> Result<S, CliError> {
    let eps = match flag {
        Some(text) => S::parse_number(text)
            .map_err(|e| CliError::Usage(format!("bad --epsilon: {e}")))?,
        None => file_default.ok_or_else(|| {
            CliError::Usage("no epsilon: pass --epsilon or set it in the instance file".into())
        })?,
    };
    if !eps.is_positive() {
        return Err(CliError::Usage("epsilon must be positive".into()));
    }
    Ok(eps)
}

fn dispatch<S: Scalar>(cli: &Cli) -> Result<ExitCode, CliError> {
    match &cli.command {
        Command::Solve {
            instance,
            epsilon,
            trace,
            max_rounds,
            solver_tol,
        } => {
            let parsed = load_instance::<S>(instance)?;
            let eps = resolve_epsilon::<S>(epsilon, parsed.epsilon.clone())?;
            let config = SolveConfig {
                tol: *solver_tol,
                verify_tol: Some(cli.tol),
                max_rounds: *max_rounds,
                ..SolveConfig::default()
            };
            let mut trace_file = match trace {
                Some(path) => Some(
                    fs::File::create(path)
                        .map_err(|e| CliError::Run(format!("cannot create trace file: {e}")))?,
                ),
                None => None,
            };
            let result = engine::solve_with_observer(
                &parsed.instance,
                eps.clone(),
                &config,
                &mut |record| {
                    if let Some(f) = trace_file.as_mut() {
                        let line = serde_json::to_string(record).expect("serializable record");
                        let _ = writeln!(f, "{line}");
                    }
                },
            )
            .map_err(|e| CliError::Run(e.to_string()))?;

            let report = verify::check_approx_equilibrium(
                &parsed.instance,
                &result.prices,
                &result.allocation,
                &eps,
                cli.tol,
            );
            match cli.format {
                Format::Human => {
                    print!("{}", render_solution(&parsed.instance, &result));
                    println!("verification:\n{report}");
                }
                Format::Structured => {
                    let mut doc = solution_value(&parsed.instance, &result);
                    doc.as_object_mut().expect("object").insert(
                        "verification".into(),
                        serde_json::to_value(&report).expect("serializable"),
                    );
                    println!("{}", serde_json::to_string_pretty(&doc).expect("valid json"));
                }
            }
            Ok(if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            })
        }

        Command::Verify {
            instance,
            prices,
            alloc,
            result,
            exact,
            epsilon,
        } => {
            let parsed = load_instance::<S>(instance)?;
            let (p, x) = match (prices, alloc, result) {
                (Some(p), Some(x), None) => (
                    io::parse_prices::<S>(p).map_err(|e| CliError::Run(e.to_string()))?,
                    io::parse_allocation::<S>(x, &parsed.instance)
                        .map_err(|e| CliError::Run(e.to_string()))?,
                ),
                (None, None, Some(path)) => {
                    let text = fs::read_to_string(path)
                        .map_err(|e| CliError::Run(format!("cannot read result: {e}")))?;
                    let doc: serde_json::Value = serde_json::from_str(&text)
                        .map_err(|e| CliError::Run(format!("bad result file: {e}")))?;
                    let p = doc
                        .get("prices")
                        .ok_or_else(|| CliError::Run("result file has no `prices`".into()))?;
                    let x = doc.get("allocation").ok_or_else(|| {
                        CliError::Run("result file has no `allocation`".into())
                    })?;
                    (
                        io::parse_prices::<S>(&p.to_string())
                            .map_err(|e| CliError::Run(e.to_string()))?,
                        io::parse_allocation::<S>(&x.to_string(), &parsed.instance)
                            .map_err(|e| CliError::Run(e.to_string()))?,
                    )
                }
                _ => {
                    return Err(CliError::Usage(
                        "pass either --prices and --alloc, or --result".into(),
                    ))
                }
            };
            let report = if *exact {
                verify::check_exact_equilibrium(&parsed.instance, &p, &x, cli.tol)
            } else {
                let eps = resolve_epsilon::<S>(epsilon, parsed.epsilon.clone())?;
                verify::check_approx_equilibrium(&parsed.instance, &p, &x, &eps, cli.tol)
            };
            match cli.format {
                Format::Human => println!("{report}"),
                Format::Structured => println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("serializable")
                ),
            }
            Ok(if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            })
        }

        Command::Oracle {
            instance,
            oracle_tol,
        } => {
            // the oracle always runs in floats
            let parsed = load_instance::<f64>(instance)?;
            let min = oracle::minimize(&parsed.instance, *oracle_tol)
                .map_err(|e| CliError::Run(e.to_string()))?;
            let rec = oracle::recover_allocation(&parsed.instance, &min.dual, *oracle_tol)
                .map_err(|e| CliError::Run(e.to_string()))?;
            let kkt = oracle::kkt_residuals(
                &parsed.instance,
                &tcfisher::PriceVector(min.dual.prices.clone()),
                &min.dual.beta,
                &rec.allocation,
            )
            .map_err(|e| CliError::Run(e.to_string()))?;

            match cli.format {
                Format::Human => {
                    println!("objective {:.12} after {} stages", min.objective, min.stages);
                    for (j, p) in min.dual.prices.iter().enumerate() {
                        println!("price {:<12} {p:.10}", parsed.instance.good_id(j));
                    }
                    for i in 0..parsed.instance.n() {
                        for j in 0..parsed.instance.m() {
                            let x = rec.allocation.at(i, j);
                            if *x > 0.0 {
                                println!(
                                    "alloc {:<12} {:<12} {x:.10}",
                                    parsed.instance.buyer_id(i),
                                    parsed.instance.good_id(j)
                                );
                            }
                        }
                    }
                    println!(
                        "kkt residuals: complementary-slackness {:.3e}, budget {:.3e}, clearing {:.3e}",
                        kkt.complementary_slackness, kkt.budget, kkt.clearing
                    );
                }
                Format::Structured => {
                    let doc = serde_json::json!({
                        "prices": min.dual.prices,
                        "beta": min.dual.beta,
                        "allocation": io::allocation_value(&parsed.instance, &rec.allocation),
                        "objective": min.objective,
                        "stages": min.stages,
                        "kkt": kkt,
                    });
                    println!("{}", serde_json::to_string_pretty(&doc).expect("valid json"));
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Gen {
            family,
            n,
            m,
            seed,
            q,
            epsilon,
            out,
        } => {
            let mut spec = GeneratorSpec::new(family.to_family(*q), *n, *m, *seed);
            if *family == FamilyArg::ZeroCost {
                spec.cost_quarters = 0;
            }
            let inst = tcfisher::bench::generate::<Exact>(&spec)
                .map_err(|e| CliError::Run(e.to_string()))?;
            let eps = match epsilon {
                Some(text) => Some(
                    Exact::parse_number(text)
                        .map_err(|e| CliError::Usage(format!("bad --epsilon: {e}")))?,
                ),
                None => None,
            };
            let text = io::instance_to_json(&inst, eps.as_ref());
            match out {
                Some(path) => fs::write(path, text + "\n")
                    .map_err(|e| CliError::Run(format!("cannot write instance: {e}")))?,
                None => println!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Bench {
            family,
            n,
            m,
            seed,
            count,
            epsilon,
            q,
            out,
        } => {
            let eps = S::parse_number(epsilon)
                .map_err(|e| CliError::Usage(format!("bad --epsilon: {e}")))?;
            if !eps.is_positive() {
                return Err(CliError::Usage("epsilon must be positive".into()));
            }
            let specs: Vec<GeneratorSpec> = (*seed..seed + count)
                .map(|s| {
                    let mut spec = GeneratorSpec::new(family.to_family(*q), *n, *m, s);
                    if *family == FamilyArg::ZeroCost {
                        spec.cost_quarters = 0;
                    }
                    spec
                })
                .collect();
            let config = SolveConfig {
                verify_tol: Some(cli.tol),
                ..SolveConfig::default()
            };
            let report = tcfisher::bench::run_benchmark(&specs, &eps, &config);
            let structured =
                serde_json::to_string_pretty(&report).expect("serializable report");
            match cli.format {
                Format::Human => print!("{}", render_bench_table(&report)),
                Format::Structured => println!("{structured}"),
            }
            if let Some(path) = out {
                fs::write(path, structured + "\n")
                    .map_err(|e| CliError::Run(format!("cannot write report: {e}")))?;
            }
            Ok(if report.all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            })
        }
    }
}

fn render_solution<S: Scalar>(
    inst: &MarketInstance<S>,
    result: &engine::EquilibriumResult<S>,
) -> String {
    let mut text = String::new();
    for j in 0..inst.m() {
        let _ = writeln!(
            text,
            "price {:<12} {}",
            inst.good_id(j),
            result.prices.get(j).render()
        );
    }
    for i in 0..inst.n() {
        for j in 0..inst.m() {
            let lots = result.allocation.at(i, j);
            if lots.is_positive() {
                let units = lots.clone() * inst.supply(j).clone();
                let _ = writeln!(
                    text,
                    "alloc {:<12} {:<12} {}",
                    inst.buyer_id(i),
                    inst.good_id(j),
                    units.render()
                );
            }
        }
    }
    let c = &result.counters;
    let _ = writeln!(
        text,
        "counters: rounds {}, walks {} (raise {}, feed {}, cycle {}, drop {}), edge drops {}",
        c.rounds,
        c.walks_total,
        c.walks_price_raise,
        c.walks_fed_supply + c.walks_fed_exhausted,
        c.walks_cycle_zeroed + c.walks_cycle_dropped,
        c.walks_path_dropped,
        c.edge_drops,
    );
    text
}

fn solution_value<S: Scalar>(
    inst: &MarketInstance<S>,
    result: &engine::EquilibriumResult<S>,
) -> serde_json::Value {
    serde_json::json!({
        "prices": io::prices_value(&result.prices),
        "allocation": io::allocation_value(inst, &result.allocation),
        "counters": result.counters,
        "termination": result.termination,
    })
}

fn render_bench_table(report: &tcfisher::bench::BenchReport) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<40} {:>5} {:>8} {:>8} {:>8} {:>8} {:>10} {:>9}",
        "instance", "pass", "rounds", "R-bound", "walks", "W-bound", "residual", "ms"
    );
    for r in &report.instances {
        let (rounds, walks) = r
            .counters
            .as_ref()
            .map_or((0, 0), |c| (c.rounds, c.walks_total));
        let _ = writeln!(
            text,
            "{:<40} {:>5} {:>8} {:>8} {:>8} {:>8} {:>10.2e} {:>9.2}",
            r.label, r.pass, rounds, r.rounds_bound, walks, r.walks_bound,
            r.verifier_residual, r.wall_time_ms
        );
    }
    if let Some(agg) = &report.aggregate {
        let _ = writeln!(
            text,
            "aggregate: rounds/bound {:.3}, walks/bound {:.3}, edge-drop walks/bound {:.3}",
            agg.max_rounds_ratio, agg.max_walks_ratio, agg.max_edge_drop_walk_ratio
        );
    }
    let _ = writeln!(text, "overall: {}", if report.all_pass { "pass" } else { "FAIL" });
    text
}

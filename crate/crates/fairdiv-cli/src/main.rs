//! `fairdiv` — generate, solve, verify, and brute-force-check discrete
//! fair-division instances with exact rational arithmetic.
//!
//! Exit codes: `0` success, `1` a verification or fairness claim failed,
//! `2` malformed input / infeasible generator spec / oracle budget
//! exceeded, `3` instance outside the selected algorithm's class,
//! `4` internal invariant violation (a bug worth reporting).

mod files;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fairdiv_core::fairness::{
    check_alpha_efx, check_ef2x, check_named_property, FairnessError, FairnessReport,
    PropertyContext, PropertyName,
};
use fairdiv_core::framework::RunOutcome;
use fairdiv_core::generator::{generate, GenError, GenSpec};
use fairdiv_core::oracle::{
    brute_rank, exists_efx, max_nsw_complete, EnumerationBudget, OracleError,
};
use fairdiv_core::rational::format_rational;
use fairdiv_core::{
    run_cxxra, run_pqrax, run_sqrt2_pq, run_sqrt2_ra, Allocation, Beta, Instance, Model,
};

use files::{
    allocation_to_file, emit, instance_to_file, load_allocation, load_instance, to_pretty_json,
    trace_to_jsonl, CliError,
};

#[derive(Parser)]
#[command(
    name = "fairdiv",
    version,
    about = "Discrete fair division: seeded generators, four allocation \
             algorithms, exact verifiers, and a brute-force oracle",
    after_help = "Exit codes: 0 success; 1 verification failed; 2 malformed \
                  input, infeasible spec, or oracle budget exceeded; 3 instance \
                  outside the algorithm's class; 4 internal invariant violation."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance of a valuation class
    Gen(GenArgs),
    /// Run an allocation algorithm on an instance file
    Run(RunArgs),
    /// Verify a fairness notion or named property of an allocation
    Verify(VerifyArgs),
    /// Brute-force oracle: EFX existence, max-NSW allocation, exact ranks
    Oracle(OracleArgs),
    /// Run an algorithm over many seeded instances and verify every output
    Bench(BenchArgs),
}

/// Algorithm selector; tokens are the command-line names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Alg {
    /// Complete EF2X for pair-overlap-one additive instances
    Cxxra,
    /// √2/2-EFX for restricted additive instances
    Sqrt2Ra,
    /// √2/2-EFX for pair-overlap-one additive instances
    Sqrt2Pq,
    /// Exact EFX for restricted additive instances with pair interest ≤ 2
    Pqrax,
}

impl Alg {
    fn token(self) -> &'static str {
        match self {
            Alg::Cxxra => "cxxra",
            Alg::Sqrt2Ra => "sqrt2-ra",
            Alg::Sqrt2Pq => "sqrt2-pq",
            Alg::Pqrax => "pqrax",
        }
    }

    /// The fairness notion each run must satisfy (checked again in bench).
    fn guarantee(self) -> &'static str {
        match self {
            Alg::Cxxra => "ef2x",
            Alg::Sqrt2Ra | Alg::Sqrt2Pq => "efx-sqrt2",
            Alg::Pqrax => "efx",
        }
    }

    /// Rejects instances outside the algorithm's declared class.
    fn check_class(self, instance: &Instance) -> Result<(), CliError> {
        let bounds = instance.classify_bounds();
        match self {
            Alg::Cxxra | Alg::Sqrt2Pq => {
                if bounds.q > 1 {
                    return Err(CliError::class_mismatch(format!(
                        "{} requires agent pairs to share at most one relevant good; \
                         this instance has a pair sharing {} goods",
                        self.token(),
                        bounds.q
                    )));
                }
            }
            Alg::Sqrt2Ra => {
                if instance.check_restricted_additive().is_none() {
                    return Err(CliError::class_mismatch(
                        "sqrt2-ra requires restricted values: every good must have a \
                         single value shared by all agents who want it",
                    ));
                }
            }
            Alg::Pqrax => {
                if instance.check_restricted_additive().is_none() {
                    return Err(CliError::class_mismatch(
                        "pqrax requires restricted values: every good must have a \
                         single value shared by all agents who want it",
                    ));
                }
                if bounds.p > 2 {
                    return Err(CliError::class_mismatch(format!(
                        "pqrax allows at most two agents to want a good; \
                         this instance has a good wanted by {} agents",
                        bounds.p
                    )));
                }
            }
        }
        Ok(())
    }

    fn run(self, instance: &Instance) -> Result<RunOutcome, CliError> {
        let result = match self {
            Alg::Cxxra => run_cxxra(instance),
            Alg::Sqrt2Ra => run_sqrt2_ra(instance),
            Alg::Sqrt2Pq => run_sqrt2_pq(instance),
            Alg::Pqrax => run_pqrax(instance),
        };
        result.map_err(|e| CliError::internal(format!("{} run failed: {e}", self.token())))
    }

    /// Checks the algorithm's own guarantee on a finished allocation.
    fn verify_guarantee(self, instance: &Instance, alloc: &Allocation) -> FairnessReport {
        match self {
            Alg::Cxxra => check_ef2x(instance, alloc),
            Alg::Sqrt2Ra | Alg::Sqrt2Pq => check_alpha_efx(instance, alloc, Beta::Sqrt2),
            Alg::Pqrax => check_alpha_efx(instance, alloc, Beta::One),
        }
    }

    /// Generator model whose instances always lie in the algorithm's class.
    fn default_model(self) -> Model {
        match self {
            Alg::Cxxra | Alg::Sqrt2Pq => Model::AdditiveInfty1,
            Alg::Sqrt2Ra => Model::RestrictedAny,
            Alg::Pqrax => Model::RestrictedP2,
        }
    }

    /// Whether every instance of `model` lies in this algorithm's class.
    fn accepts_model(self, model: Model, q_cap: Option<usize>) -> bool {
        match self {
            Alg::Cxxra | Alg::Sqrt2Pq => match model {
                Model::AdditiveInfty1 => true,
                Model::AdditivePq => q_cap == Some(1) || q_cap == Some(0),
                // Restricted models leave pair overlap unbounded.
                Model::RestrictedP2 | Model::RestrictedAny => false,
            },
            Alg::Sqrt2Ra => matches!(model, Model::RestrictedP2 | Model::RestrictedAny),
            Alg::Pqrax => matches!(model, Model::RestrictedP2),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Valuation class: restricted_p2, restricted_any, additive_infty1, additive_pq
    #[arg(long)]
    model: String,
    /// Number of agents
    #[arg(long)]
    agents: usize,
    /// Number of goods
    #[arg(long)]
    goods: usize,
    /// RNG seed; identical flags yield byte-identical files
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Smallest nonzero value
    #[arg(long, default_value_t = 1)]
    value_lo: u64,
    /// Largest nonzero value
    #[arg(long, default_value_t = 9)]
    value_hi: u64,
    /// Cap on agents interested in one good (additive_pq only)
    #[arg(long)]
    p: Option<usize>,
    /// Cap on goods shared by one agent pair (additive_pq only)
    #[arg(long)]
    q: Option<usize>,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Algorithm to run
    #[arg(long, value_enum)]
    alg: Alg,
    /// Instance file
    #[arg(long = "in")]
    input: PathBuf,
    /// Allocation output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trace output file (JSON lines, one step per line)
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Instance file
    #[arg(long = "in")]
    input: PathBuf,
    /// Allocation file
    #[arg(long)]
    alloc: PathBuf,
    /// One of: efx, ef2x, efx-sqrt2, prop:<name> where <name> is
    /// non-source-relevant, self-relevant, rank-feasible, virtual-efx,
    /// or typed-bundles
    #[arg(long)]
    check: String,
}

#[derive(Args)]
struct OracleArgs {
    /// Instance file
    #[arg(long = "in")]
    input: PathBuf,
    /// Allocation file (required for --check rank)
    #[arg(long)]
    alloc: Option<PathBuf>,
    /// One of: efx-exists, max-nsw, rank
    #[arg(long)]
    check: String,
    /// Maximum number of complete assignments to enumerate
    #[arg(long, default_value_t = 2_000_000)]
    budget: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Algorithm to benchmark
    #[arg(long, value_enum)]
    alg: Alg,
    /// Generator model; defaults to a model matching the algorithm's class
    #[arg(long)]
    model: Option<String>,
    /// Number of seeded instances
    #[arg(long, default_value_t = 100)]
    count: u64,
    /// Agents per instance
    #[arg(long, default_value_t = 5)]
    agents: usize,
    /// Goods per instance
    #[arg(long, default_value_t = 10)]
    goods: usize,
    /// Base seed; instance k uses seed + k
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Smallest nonzero value
    #[arg(long, default_value_t = 1)]
    value_lo: u64,
    /// Largest nonzero value
    #[arg(long, default_value_t = 9)]
    value_hi: u64,
    /// Cap on agents interested in one good (additive_pq only)
    #[arg(long)]
    p: Option<usize>,
    /// Cap on goods shared by one agent pair (additive_pq only)
    #[arg(long)]
    q: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.code as u8)
        }
    }
}

fn gen_error(e: GenError) -> CliError {
    match e {
        GenError::InfeasibleSpec(_) => CliError::malformed(e.to_string()),
        GenError::Internal(_) => CliError::internal(e.to_string()),
    }
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let model = Model::from_str(&args.model).map_err(CliError::malformed)?;
    let spec = GenSpec {
        num_agents: args.agents,
        num_goods: args.goods,
        model,
        value_range: (args.value_lo, args.value_hi),
        p: args.p,
        q: args.q,
        seed: args.seed,
    };
    let instance = generate(&spec).map_err(gen_error)?;
    let text = to_pretty_json(&instance_to_file(&instance, model));
    emit(args.out.as_deref(), &text)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let instance = load_instance(&args.input)?;
    args.alg.check_class(&instance)?;
    let outcome = args.alg.run(&instance)?;

    let text = to_pretty_json(&allocation_to_file(&outcome.allocation));
    emit(args.out.as_deref(), &text)?;
    if let Some(trace_path) = &args.trace {
        emit(Some(trace_path), &trace_to_jsonl(&outcome.trace))?;
    }

    // Human-readable summary on stderr so stdout stays machine-parseable.
    eprintln!("algorithm: {}", args.alg.token());
    eprintln!("guarantee: {}", args.alg.guarantee());
    eprintln!("steps: {}", outcome.trace.entries.len());
    if args.alg == Alg::Cxxra {
        eprintln!("pre-final pool size: {}", outcome.prefinal_pool);
    }
    Ok(())
}

/// Prints a report's violations; returns whether it passed.
fn report_violations(report: &FairnessReport) -> bool {
    for v in &report.violations {
        println!(
            "violation: agent {} vs {}, witness {:?}, margin {}",
            v.agent,
            v.other,
            v.witness,
            format_rational(&v.margin)
        );
    }
    report.passed()
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let instance = load_instance(&args.input)?;
    let alloc = load_allocation(&args.alloc, &instance)?;
    let passed = match args.check.as_str() {
        "efx" => report_violations(&check_alpha_efx(&instance, &alloc, Beta::One)),
        "ef2x" => report_violations(&check_ef2x(&instance, &alloc)),
        "efx-sqrt2" => report_violations(&check_alpha_efx(&instance, &alloc, Beta::Sqrt2)),
        other => match other.strip_prefix("prop:") {
            None => {
                return Err(CliError::malformed(format!(
                    "unknown check `{other}` (expected efx, ef2x, efx-sqrt2, or prop:<name>)"
                )))
            }
            Some(name) => {
                let prop = PropertyName::from_str(name)
                    .map_err(|e| CliError::malformed(e.to_string()))?;
                match check_named_property(&instance, &alloc, prop, &PropertyContext::default()) {
                    Ok(report) => report_violations(&report),
                    // The property genuinely fails to hold (e.g. the envy
                    // graph has a value-gaining cycle): report, don't error.
                    Err(FairnessError::Graph(g)) => {
                        println!("violation: {g}");
                        false
                    }
                    Err(e @ FairnessError::UnknownProperty(_)) => {
                        return Err(CliError::malformed(e.to_string()))
                    }
                }
            }
        },
    };
    if passed {
        println!("pass: {}", args.check);
        Ok(())
    } else {
        println!("fail: {}", args.check);
        Err(CliError {
            message: String::new(),
            code: files::EXIT_FAILED,
        })
    }
}

fn oracle_error(e: OracleError) -> CliError {
    match e {
        OracleError::BudgetExceeded { .. } => CliError::malformed(e.to_string()),
        OracleError::Graph(_) => CliError::failed(e.to_string()),
    }
}

fn cmd_oracle(args: OracleArgs) -> Result<(), CliError> {
    let instance = load_instance(&args.input)?;
    let budget = EnumerationBudget {
        max_assignments: args.budget,
    };
    match args.check.as_str() {
        "efx-exists" => match exists_efx(&instance, &budget).map_err(oracle_error)? {
            Some(alloc) => {
                println!("efx-exists: yes");
                print!("{}", to_pretty_json(&allocation_to_file(&alloc)));
            }
            None => println!("efx-exists: none"),
        },
        "max-nsw" => {
            let alloc = max_nsw_complete(&instance, &budget).map_err(oracle_error)?;
            let agents: Vec<usize> = (0..instance.num_agents()).collect();
            let nsw = fairdiv_core::fairness::Nsw::over(&instance, &alloc, agents.iter());
            println!("max-nsw: {nsw}");
            print!("{}", to_pretty_json(&allocation_to_file(&alloc)));
        }
        "rank" => {
            let alloc_path = args.alloc.as_ref().ok_or_else(|| {
                CliError::malformed("--check rank requires --alloc <allocation file>")
            })?;
            let alloc = load_allocation(alloc_path, &instance)?;
            for agent in 0..instance.num_agents() {
                let (rank, path) = brute_rank(&instance, &alloc, agent).map_err(oracle_error)?;
                println!("agent {agent}: {} via {path:?}", format_rational(&rank));
            }
        }
        other => {
            return Err(CliError::malformed(format!(
                "unknown check `{other}` (expected efx-exists, max-nsw, or rank)"
            )))
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let model = match &args.model {
        Some(token) => Model::from_str(token).map_err(CliError::malformed)?,
        None => args.alg.default_model(),
    };
    if !args.alg.accepts_model(model, args.q) {
        return Err(CliError::class_mismatch(format!(
            "model {model} does not guarantee the instance class required by {}",
            args.alg.token()
        )));
    }

    let started = Instant::now();
    let mut passes = 0u64;
    let mut pool_histogram: BTreeMap<usize, u64> = BTreeMap::new();
    let mut rule_counts: BTreeMap<String, u64> = BTreeMap::new();
    for k in 0..args.count {
        let spec = GenSpec {
            num_agents: args.agents,
            num_goods: args.goods,
            model,
            value_range: (args.value_lo, args.value_hi),
            p: args.p,
            q: args.q,
            seed: args.seed.wrapping_add(k),
        };
        let instance = generate(&spec).map_err(gen_error)?;
        args.alg.check_class(&instance)?;
        let outcome = args.alg.run(&instance)?;
        *pool_histogram.entry(outcome.prefinal_pool).or_insert(0) += 1;
        for entry in outcome.trace.rule_entries() {
            *rule_counts.entry(entry.rule.clone()).or_insert(0) += 1;
        }
        let complete = outcome.allocation.is_complete();
        let fair = args
            .alg
            .verify_guarantee(&instance, &outcome.allocation)
            .passed();
        if complete && fair {
            passes += 1;
        } else {
            println!(
                "instance seed {} failed: complete={complete} {}={fair}",
                spec.seed,
                args.alg.guarantee()
            );
        }
    }
    let elapsed = started.elapsed();

    println!(
        "bench: alg={} model={model} agents={} goods={} count={} seed={}",
        args.alg.token(),
        args.agents,
        args.goods,
        args.count,
        args.seed
    );
    println!("pass-rate: {passes}/{}", args.count);
    let histogram = pool_histogram
        .iter()
        .map(|(size, n)| format!("{size}:{n}"))
        .collect::<Vec<_>>()
        .join(" ");
    println!(
        "pre-final pool sizes: {}",
        if histogram.is_empty() { "none" } else { histogram.as_str() }
    );
    let rules = rule_counts
        .iter()
        .map(|(rule, n)| format!("{rule}:{n}"))
        .collect::<Vec<_>>()
        .join(" ");
    println!(
        "rule applications: {}",
        if rules.is_empty() { "none" } else { rules.as_str() }
    );
    // Timing goes to stderr so stdout is byte-identical across repeat runs.
    eprintln!("wall time: {:.3}s", elapsed.as_secs_f64());

    if passes == args.count {
        Ok(())
    } else {
        Err(CliError::failed(format!(
            "pass-rate {passes}/{} is below 100%",
            args.count
        )))
    }
}

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dictpr::bounds::{constants_c1_c2, verify_recovery_bound};
use dictpr::files::{ProblemFile, TrialFile};
use dictpr::frames::{build_named_frame, build_parseval_random, NamedFrame};
use dictpr::harness::{run_bound_experiment, run_phase_transition, ExperimentConfig, RunOptions};
use dictpr::lemmas::selfcheck_lemmas;
use dictpr::nsp::{nsp_real_falsify, FalsifyOptions, LambdaMode};
use dictpr::record::{emit_results, read_json, to_csv, write_json, CsvRow, Format};
use dictpr::rip::{
    drip_constant, drip_constant_sampled, drip_order_for_t, sdrip_constants_with, HalfRule, SdripOptions,
};
use dictpr::solver::{solve_irls, solve_oracle_noiseless, IrlsOptions, Method};
use dictpr::{Error, Result};

#[derive(Parser)]
#[command(name = "dictpr", version, about = "Sparse phase retrieval with redundant dictionaries")]
struct Cli {
    /// Master RNG seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Wall-clock budget for experiments; completed records are still written
    #[arg(long, global = true)]
    max_seconds: Option<u64>,
    /// Output path (stdout when omitted)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parseval frames
    #[command(subcommand)]
    Frame(FrameCmd),
    /// Restricted isometry constants
    #[command(subcommand)]
    Rip(RipCmd),
    /// Null space property search
    #[command(subcommand)]
    Nsp(NspCmd),
    /// Solve a phaseless problem
    Solve(SolveArgs),
    /// Stability constants and bound verification
    #[command(subcommand)]
    Bound(BoundCmd),
    /// Seeded experiment sweeps
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    /// Randomized self-checks
    #[command(subcommand)]
    Selfcheck(SelfcheckCmd),
}

#[derive(Subcommand)]
enum FrameCmd {
    /// Generate a random (or named) Parseval frame
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long = "N")]
        big_n: Option<usize>,
        /// identity, mercedes or duplicated_identity instead of a random frame
        #[arg(long)]
        name: Option<NamedFrame>,
    },
}

#[derive(Subcommand)]
enum RipCmd {
    /// D-RIP constant, or S-DRIP constants with --sdrip
    Estimate {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long)]
        sdrip: bool,
        /// Random supports instead of exhaustive enumeration
        #[arg(long)]
        sampled: bool,
        /// Number of sampled supports
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
        #[arg(long, default_value = "ceil")]
        half_rule: HalfRule,
    },
}

#[derive(Subcommand)]
enum NspCmd {
    /// Search for a null space property violation
    Falsify {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        k: usize,
        /// Defaults to the problem's q
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
        #[arg(long, default_value = "card_at_most_k")]
        lambda_mode: LambdaMode,
    },
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value = "irls")]
    method: Method,
    /// IRLS options as JSON
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BoundCmd {
    /// Evaluate the stability constants
    Check {
        #[arg(long)]
        q: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Verify the recovery bound for a solved trial
    Verify {
        #[arg(long)]
        trial: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Bound verification over a parameter grid
    Bound(ExperimentArgs),
    /// Success rates over (m, k) cells
    Transition(ExperimentArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum SelfcheckCmd {
    /// Randomized checks of the auxiliary lemmas
    Lemmas,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            let text = serde_json::to_string_pretty(value).expect("serializable");
            writeln!(std::io::stdout(), "{text}").map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn emit_rows<R: CsvRow + Serialize>(rows: &[R], format: Format, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => emit_results(rows, format, path),
        None => {
            let text = match format {
                Format::Csv => to_csv(rows)?,
                Format::Json => serde_json::to_string_pretty(rows).expect("serializable") + "\n",
            };
            write!(std::io::stdout(), "{text}").map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn load_config(args: &ExperimentArgs, cli: &Cli) -> Result<(ExperimentConfig, RunOptions, Option<PathBuf>)> {
    let mut cfg: ExperimentConfig = read_json(&args.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let default_out = match args.format {
        Format::Csv => cfg.output.csv.clone(),
        Format::Json => cfg.output.json.clone(),
    };
    let out = cli.out.clone().or(default_out);
    let opts = RunOptions {
        threads: cli.threads,
        max_seconds: cli.max_seconds,
    };
    Ok((cfg, opts, out))
}

fn truncated_error(done: usize) -> Error {
    Error::Resource(format!("wall-clock budget expired; {done} completed rows written"))
}

fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_deref();
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Frame(FrameCmd::Gen { n, big_n, name }) => {
            let frame = match name {
                Some(name) => build_named_frame(*name, *n)?,
                None => {
                    let big_n = big_n.ok_or_else(|| Error::Config("--N is required for random frames".into()))?;
                    build_parseval_random(*n, big_n, seed)?
                }
            };
            emit(&frame.to_file(), out)
        }
        Command::Rip(RipCmd::Estimate {
            problem,
            order,
            sdrip,
            sampled,
            budget,
            half_rule,
        }) => {
            let p = ProblemFile::load(problem)?;
            if *sdrip {
                let opts = SdripOptions {
                    half_rule: *half_rule,
                    sampled: sampled.then_some((*budget, seed)),
                };
                emit(&sdrip_constants_with(&p.a, &p.frame, *order, opts)?, out)
            } else if *sampled {
                emit(&drip_constant_sampled(&p.a, &p.frame, *order, *budget, seed)?, out)
            } else {
                emit(&drip_constant(&p.a, &p.frame, *order)?, out)
            }
        }
        Command::Nsp(NspCmd::Falsify {
            problem,
            k,
            q,
            budget,
            lambda_mode,
        }) => {
            let p = ProblemFile::load(problem)?;
            let opts = FalsifyOptions {
                k: *k,
                q: q.unwrap_or(p.q),
                budget: *budget,
                seed,
                lambda_mode: *lambda_mode,
            };
            emit(&nsp_real_falsify(&p.a, &p.frame, opts)?, out)
        }
        Command::Solve(args) => {
            let p = ProblemFile::load(&args.problem)?;
            let result = match args.method {
                Method::Oracle => solve_oracle_noiseless(&p)?,
                Method::Irls => {
                    let mut opts: IrlsOptions = match &args.config {
                        Some(path) => read_json(path)?,
                        None => IrlsOptions::default(),
                    };
                    if let Some(s) = cli.seed {
                        opts.seed = s;
                    }
                    solve_irls(&p, &opts)?
                }
            };
            emit(&result, out)
        }
        Command::Bound(BoundCmd::Check { q, t, delta }) => emit(&constants_c1_c2(*q, *t, *delta)?, out),
        Command::Bound(BoundCmd::Verify { trial }) => {
            let file: TrialFile = read_json(trial)?;
            let p = file.problem.into_problem(Some(trial))?;
            let k = p
                .truth
                .as_ref()
                .ok_or_else(|| Error::Config("trial problem has no truth".into()))?
                .coefficients
                .k;
            let rip = match file.rip {
                Some(r) => r,
                None => sdrip_constants_with(&p.a, &p.frame, drip_order_for_t(file.t, k), SdripOptions::default())?,
            };
            emit(&verify_recovery_bound(&p, &file.result, &rip, file.t)?, out)
        }
        Command::Experiment(ExperimentCmd::Bound(args)) => {
            let (cfg, opts, target) = load_config(args, cli)?;
            let res = run_bound_experiment(&cfg, opts)?;
            if !res.rows.is_empty() {
                emit_rows(&res.rows, args.format, target.as_deref())?;
            }
            if res.truncated {
                return Err(truncated_error(res.rows.len()));
            }
            Ok(())
        }
        Command::Experiment(ExperimentCmd::Transition(args)) => {
            let (cfg, opts, target) = load_config(args, cli)?;
            let res = run_phase_transition(&cfg, opts)?;
            emit_rows(&res.rows, args.format, target.as_deref())?;
            if res.truncated {
                return Err(truncated_error(res.rows.len()));
            }
            Ok(())
        }
        Command::Selfcheck(SelfcheckCmd::Lemmas) => {
            let report = selfcheck_lemmas(seed);
            emit(&report, out)?;
            if !report.pass {
                return Err(Error::Domain("lemma self-check failed".into()));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

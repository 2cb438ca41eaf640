use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use selforg_core::analysis::invariants::trace_diagnostics;
use selforg_core::fuzz::FuzzOptions;
use selforg_core::protocol::Fault;
use selforg_core::report::write_csv;
use selforg_core::*;

/// Exit status when a check (invariant or bound) fails.
const CHECK_FAILED: u8 = 1;
/// Exit status for bad input: unreadable files, invalid configs, malformed traces.
const BAD_INPUT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "selforg",
    version,
    about = "Simulate and check self-organizing anonymous dynamic networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Check every round's invariants and the trace diagnostics.
        #[arg(long)]
        check_invariants: bool,
        /// Convergence bound to enforce on the persistent phase (repeatable).
        #[arg(long, value_parser = parse_bound)]
        bound: Vec<Bound>,
        /// Print violations and reports as JSON lines.
        #[arg(long)]
        json: bool,
    },
    /// Run random scenarios under the invariant checker.
    Fuzz {
        #[arg(long, default_value_t = 2)]
        n_min: usize,
        #[arg(long, default_value_t = 32)]
        n_max: usize,
        #[arg(long, default_value_t = 500)]
        rounds: u64,
        #[arg(long, default_value_t = 200)]
        seeds: u64,
        /// Comma-separated subset of deterministic,know-n,randomized.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "deterministic,know-n,randomized"
        )]
        modes: Vec<Mode>,
        #[arg(long, default_value_t = 0)]
        master_seed: u64,
        #[arg(long)]
        json: bool,
        #[arg(long, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Write per-round metrics of a trace as CSV.
    Report {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Re-execute a trace's scenario and compare it round by round.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Run the deterministic machine on a non-homogeneous response.
    Hardness {
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Target distribution for signal 1, e.g. 1/2,1/2.
        #[arg(long, value_delimiter = ',', default_value = "1/2,1/2")]
        weights: Vec<String>,
        #[arg(long, default_value_t = 400)]
        horizon: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Deterministic,
    KnowN,
    Randomized,
}

impl From<Mode> for ModeSpec {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Deterministic => ModeSpec::Deterministic,
            Mode::KnowN => ModeSpec::KnowN,
            Mode::Randomized => ModeSpec::Randomized,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    SkipTtlDecrement,
}

fn parse_bound(s: &str) -> Result<Bound, String> {
    s.parse()
}

fn cmd_run(
    config: PathBuf,
    out: PathBuf,
    check: bool,
    bounds: Vec<Bound>,
    json: bool,
) -> Result<u8> {
    let scenario =
        load_scenario(&config).with_context(|| format!("invalid config {}", config.display()))?;
    info!(
        "running {} rounds with n = {}",
        scenario.horizon, scenario.n
    );
    let trace = run(&scenario)?;
    save_trace(&trace, &out).with_context(|| format!("cannot write {}", out.display()))?;
    println!("wrote {} rounds to {}", trace.records.len(), out.display());

    let mut failed = false;
    if check {
        let ctx = CheckContext::new(&scenario.protocol()?, scenario.n);
        let mut violations = check_trace(&ctx, &trace);
        violations.extend(trace_diagnostics(&trace));
        let hard = violations.iter().filter(|v| v.is_hard()).count();
        for v in &violations {
            if json {
                println!("{}", serde_json::to_string(v)?);
            } else {
                println!("{v}");
            }
        }
        println!(
            "invariants: {} rounds checked, {hard} hard violations, {} advisory diagnostics",
            trace.records.len(),
            violations.len() - hard
        );
        failed |= hard > 0;
    }

    match scenario.signal.persistent_phase() {
        Some((signal, t0)) if t0 < trace.horizon() => {
            let default = match (signal.is_bot(), scenario.mode) {
                (true, _) => Bound::Strong12n,
                (false, ModeSpec::KnowN) => Bound::Strong4n,
                (false, _) => Bound::Weak16n,
            };
            let shown = if bounds.is_empty() {
                vec![default]
            } else {
                bounds.clone()
            };
            for bound in shown {
                let report = check_bound(&trace, signal, t0, bound);
                if json {
                    println!("{}", serde_json::to_string(&report)?);
                } else {
                    println!("{report}");
                }
                if bounds.contains(&bound) {
                    failed |= !report.passed;
                }
            }
            if scenario.mode == ModeSpec::Randomized {
                // Informational: sampling can legitimately miss at small n.
                match approximation_verdict(&trace, &scenario.instance, signal, t0) {
                    Ok(v) if json => println!("{}", serde_json::to_string(&v)?),
                    Ok(v) => println!(
                        "approximation of r({signal}): counts {:?}, d_TV {} ({:.4}) vs eps {:.4}: {}",
                        v.stable_counts.counts,
                        v.d_tv,
                        v.d_tv_f64,
                        v.epsilon,
                        if v.passed { "approximates" } else { "does not approximate" }
                    ),
                    Err(e) => println!("approximation of r({signal}): {e}"),
                }
            }
        }
        _ if !bounds.is_empty() => {
            println!("no persistent phase before the horizon; requested bounds cannot be checked");
            failed = true;
        }
        _ => {}
    }
    Ok(if failed { CHECK_FAILED } else { 0 })
}

fn cmd_fuzz(opts: FuzzOptions, json: bool) -> Result<u8> {
    let summary = fuzz(&opts)?;
    if json {
        println!("{}", serde_json::to_string(&summary)?);
    } else {
        println!(
            "scenarios: {}  rounds: {}  node-rounds: {}",
            summary.scenarios, summary.rounds, summary.checks
        );
        println!(
            "hard violations: {}  advisory diagnostics: {}  ttl oracle mismatches: {}/{}",
            summary.hard_violations,
            summary.advisory_violations,
            summary.oracle_mismatches,
            summary.oracle_checks
        );
        println!(
            "largest max_ttl: {}  largest max_ttl/2n: {:.3}",
            summary.max_max_ttl, summary.max_ttl_ratio
        );
        for f in &summary.findings {
            println!("seed {}: {}", f.seed, f.violation);
        }
    }
    Ok(if summary.hard_violations > 0 {
        CHECK_FAILED
    } else {
        0
    })
}

fn cmd_report(trace: PathBuf, csv: PathBuf) -> Result<u8> {
    let tr =
        load_trace(&trace).with_context(|| format!("cannot read trace {}", trace.display()))?;
    let file = File::create(&csv).with_context(|| format!("cannot write {}", csv.display()))?;
    let mut out = BufWriter::new(file);
    write_csv(&tr, &mut out)?;
    out.flush()?;
    println!("wrote {} rows to {}", tr.records.len(), csv.display());
    Ok(0)
}

fn cmd_replay(trace: PathBuf) -> Result<u8> {
    let tr =
        load_trace(&trace).with_context(|| format!("cannot read trace {}", trace.display()))?;
    match replay(&tr) {
        ReplayOutcome::Identical => {
            println!("identical: {} rounds replayed", tr.records.len());
            Ok(0)
        }
        ReplayOutcome::Diverged { round } => {
            println!("diverged at round {round}");
            Ok(CHECK_FAILED)
        }
    }
}

fn cmd_hardness(n: usize, weights: Vec<String>, horizon: u64) -> Result<u8> {
    let ell = weights.len() as u32;
    if ell == 0 {
        bail!("--weights must list at least one color");
    }
    let dist = Distribution::parse(&weights).map_err(|m| anyhow::anyhow!("--weights: {m}"))?;
    let inst = Instance::new(
        1,
        ell,
        [
            (SignalId::BOT, Distribution::point_mass(ell, ColorId(1))),
            (SignalId(1), dist),
        ],
    )?;
    let report = hardness_demo(n, &inst, SignalId(1), horizon)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report_without_series(&report))?
    );
    Ok(if report.matches_case_table() {
        0
    } else {
        CHECK_FAILED
    })
}

/// The per-round series is long; summarize it by its maximum.
fn report_without_series(report: &HardnessReport) -> serde_json::Value {
    let mut value = serde_json::to_value(report).expect("serializable report");
    if let Some(obj) = value.as_object_mut() {
        obj.remove("distinct_states");
    }
    value
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SELFORG_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            check_invariants,
            bound,
            json,
        } => cmd_run(config, out, check_invariants, bound, json),
        Command::Fuzz {
            n_min,
            n_max,
            rounds,
            seeds,
            modes,
            master_seed,
            json,
            inject_fault,
        } => {
            let opts = FuzzOptions {
                n_min,
                n_max,
                rounds,
                seeds,
                modes: modes.into_iter().map(ModeSpec::from).collect(),
                master_seed,
                fault: inject_fault.map(|FaultArg::SkipTtlDecrement| Fault::SkipTtlDecrement),
            };
            cmd_fuzz(opts, json)
        }
        Command::Report { trace, csv } => cmd_report(trace, csv),
        Command::Replay { trace } => cmd_replay(trace),
        Command::Hardness {
            n,
            weights,
            horizon,
        } => cmd_hardness(n, weights, horizon),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(BAD_INPUT)
        }
    }
}

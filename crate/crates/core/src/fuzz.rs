//! Random scenarios run under the invariant checker.

use num_bigint::BigInt;
use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::adversary::{ScriptedSignal, SignalAdversary, TopologyAdversary, WitnessPolicy};
use crate::analysis::invariants::{
    check_step_invariants, trace_diagnostics, ttl_oracle, CheckContext, Rule, Violation,
};
use crate::instance::{ColorId, Distribution, Instance, Rational, SignalId};
use crate::protocol::{Fault, Resample};
use crate::rng::{substream, Domain};
use crate::sim::{run_with_protocol, ModeSpec, Scenario, SimError};

#[derive(Debug, Clone)]
pub struct FuzzOptions {
    pub n_min: usize,
    pub n_max: usize,
    pub rounds: u64,
    pub seeds: u64,
    pub modes: Vec<ModeSpec>,
    /// Scenario `i` is drawn from the substream `(master_seed, i)`.
    pub master_seed: u64,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("invalid fuzz options: {0}")]
    Options(String),
    #[error("scenario {seed}: {source}")]
    Sim { seed: u64, source: SimError },
}

/// A violation together with the fuzz seed that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Finding {
    pub seed: u64,
    #[serde(flatten)]
    pub violation: Violation,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FuzzSummary {
    pub scenarios: u64,
    pub rounds: u64,
    /// Node-rounds checked.
    pub checks: u64,
    /// Non-source node-rounds compared against the ttl oracle.
    pub oracle_checks: u64,
    pub oracle_mismatches: u64,
    pub hard_violations: u64,
    pub advisory_violations: u64,
    /// Largest max_ttl seen anywhere, and the largest ratio max_ttl / 2n.
    pub max_max_ttl: u64,
    pub max_ttl_ratio: f64,
    /// The first few hard violations and advisory diagnostics, by seed.
    pub findings: Vec<Finding>,
}

const KEPT_FINDINGS: usize = 20;

impl FuzzSummary {
    fn merge(mut self, other: FuzzSummary) -> FuzzSummary {
        self.scenarios += other.scenarios;
        self.rounds += other.rounds;
        self.checks += other.checks;
        self.oracle_checks += other.oracle_checks;
        self.oracle_mismatches += other.oracle_mismatches;
        self.hard_violations += other.hard_violations;
        self.advisory_violations += other.advisory_violations;
        self.max_max_ttl = self.max_max_ttl.max(other.max_max_ttl);
        self.max_ttl_ratio = self.max_ttl_ratio.max(other.max_ttl_ratio);
        self.findings.extend(other.findings);
        self.findings.sort_by_key(|f| f.seed);
        self.findings.truncate(KEPT_FINDINGS);
        self
    }
}

fn random_policy<R: Rng>(n: usize, rng: &mut R) -> WitnessPolicy {
    match rng.random_range(0..4) {
        0 => WitnessPolicy::FixedSingle {
            node: rng.random_range(0..n),
        },
        1 => WitnessPolicy::RandomSingle,
        2 => WitnessPolicy::RandomSubset,
        _ => WitnessPolicy::All,
    }
}

fn random_distribution<R: Rng>(ell: u32, rng: &mut R) -> Distribution {
    let mut raw: Vec<u32> = (0..ell).map(|_| rng.random_range(0..5)).collect();
    if raw.iter().all(|&w| w == 0) {
        raw[rng.random_range(0..ell as usize)] = 1;
    }
    let total: u32 = raw.iter().sum();
    Distribution::new(
        raw.into_iter()
            .map(|w| Rational::new(BigInt::from(w), BigInt::from(total)))
            .collect(),
    )
    .expect("normalized weights")
}

fn random_instance<R: Rng>(mode: ModeSpec, rng: &mut R) -> Instance {
    let k = rng.random_range(0..=3u32);
    let ell = rng.random_range(1..=4u32);
    if mode == ModeSpec::Randomized && rng.random_bool(0.75) {
        Instance::new(
            k,
            ell,
            (0..=k).map(|s| (SignalId(s), random_distribution(ell, rng))),
        )
        .expect("complete table")
    } else {
        let colors: Vec<ColorId> = (0..=k)
            .map(|_| ColorId(rng.random_range(1..=ell)))
            .collect();
        Instance::homogeneous(ell, &colors).expect("valid colors")
    }
}

fn random_topology<R: Rng>(n: usize, rounds: u64, rng: &mut R) -> TopologyAdversary {
    match rng.random_range(0..6) {
        0 => TopologyAdversary::StaticComplete,
        1 => TopologyAdversary::StaticRing,
        2 => TopologyAdversary::RandomConnected {
            edge_prob: *[0.0, 0.1, 0.3, 0.6].choose(rng).unwrap(),
        },
        3 => TopologyAdversary::RotatingStar,
        4 => TopologyAdversary::EccentricityFlip {
            period: rng.random_range(1..=2 * n as u64),
        },
        _ => {
            let gen = TopologyAdversary::RandomConnected { edge_prob: 0.05 };
            let rounds = (0..rounds)
                .map(|t| {
                    gen.next(t, n, &[], rng)
                        .expect("valid generator")
                        .edge_list()
                })
                .collect();
            TopologyAdversary::Scripted { rounds }
        }
    }
}

fn random_signal<R: Rng>(n: usize, k: u32, rounds: u64, rng: &mut R) -> SignalAdversary {
    let signal = |rng: &mut R| SignalId(rng.random_range(0..=k));
    match rng.random_range(0..5) {
        0 => SignalAdversary::Silent,
        1 => SignalAdversary::Persistent {
            signal: signal(rng),
            from_round: rng.random_range(0..=rounds / 2),
            witness_policy: random_policy(n, rng),
        },
        2 => SignalAdversary::Alternating {
            first: signal(rng),
            second: signal(rng),
            period: rng.random_range(1..=4 * n as u64),
            witness_policy: random_policy(n, rng),
        },
        3 => {
            let from_round = rng.random_range(0..=rounds / 2);
            SignalAdversary::Window {
                signal: signal(rng),
                from_round,
                until_round: from_round + rng.random_range(0..=rounds / 2),
                witness_policy: random_policy(n, rng),
            }
        }
        _ => {
            let rounds = (0..rounds)
                .map(|_| {
                    let s = signal(rng);
                    let mut witnesses: Vec<usize> = if s.is_bot() {
                        vec![]
                    } else {
                        (0..n).filter(|_| rng.random_bool(0.3)).collect()
                    };
                    if !s.is_bot() && witnesses.is_empty() {
                        witnesses.push(rng.random_range(0..n));
                    }
                    ScriptedSignal {
                        signal: s,
                        witnesses,
                    }
                })
                .collect();
            SignalAdversary::Scripted { rounds }
        }
    }
}

/// The scenario checked for fuzz seed `index`.
pub fn random_scenario(opts: &FuzzOptions, index: u64) -> Scenario {
    let mut rng = substream(opts.master_seed, Domain::Fuzz, index, 0);
    let n = rng.random_range(opts.n_min..=opts.n_max);
    let mode = *opts.modes.choose(&mut rng).expect("nonempty modes");
    let instance = random_instance(mode, &mut rng);
    let topology = random_topology(n, opts.rounds, &mut rng);
    let signal = random_signal(n, instance.k(), opts.rounds, &mut rng);
    Scenario {
        n,
        mode,
        instance,
        topology,
        signal,
        horizon: opts.rounds,
        seed: rng.random::<u64>() >> 1,
        resample: Resample::OnChange,
    }
}

fn fuzz_one(opts: &FuzzOptions, index: u64) -> Result<FuzzSummary, FuzzError> {
    let scenario = random_scenario(opts, index);
    let sim_err = |source| FuzzError::Sim {
        seed: index,
        source,
    };
    scenario.validate().map_err(sim_err)?;
    let mut protocol = scenario.protocol().map_err(sim_err)?;
    if let Some(fault) = opts.fault {
        protocol = protocol.with_fault(fault);
    }
    let trace = run_with_protocol(&scenario, &protocol).map_err(sim_err)?;
    let ctx = CheckContext::new(&protocol, scenario.n);
    let two_n = 2 * scenario.n as u64;

    let mut summary = FuzzSummary {
        scenarios: 1,
        rounds: trace.horizon(),
        ..Default::default()
    };
    let mut violations = Vec::new();
    for r in &trace.records {
        let prev = trace.config(r.t);
        summary.checks += scenario.n as u64;
        summary.oracle_checks += ttl_oracle(prev, &r.input, &r.states)
            .iter()
            .flatten()
            .count() as u64;
        summary.max_max_ttl = summary.max_max_ttl.max(r.m_star);
        summary.max_ttl_ratio = summary.max_ttl_ratio.max(r.m_star as f64 / two_n as f64);
        violations.extend(check_step_invariants(&ctx, r.t, prev, &r.input, &r.states));
    }
    violations.extend(trace_diagnostics(&trace));
    // Keep the first violation of every rule, then fill up in order.
    let mut seen = std::collections::BTreeSet::new();
    let mut kept: Vec<usize> = (0..violations.len())
        .filter(|&i| seen.insert(violations[i].rule))
        .collect();
    for i in 0..violations.len() {
        if kept.len() >= KEPT_FINDINGS {
            break;
        }
        if !kept.contains(&i) {
            kept.push(i);
        }
    }
    kept.truncate(KEPT_FINDINGS);
    kept.sort_by_key(|&i| (violations[i].round, i));
    summary.findings = kept
        .into_iter()
        .map(|i| Finding {
            seed: index,
            violation: violations[i].clone(),
        })
        .collect();
    for v in violations {
        if v.rule == Rule::L6Recurrence {
            summary.oracle_mismatches += 1;
        }
        if v.is_hard() {
            summary.hard_violations += 1;
        } else {
            summary.advisory_violations += 1;
        }
    }
    Ok(summary)
}

/// Runs `opts.seeds` random scenarios in parallel and aggregates the checks.
pub fn fuzz(opts: &FuzzOptions) -> Result<FuzzSummary, FuzzError> {
    if opts.seeds == 0 {
        return Err(FuzzError::Options("seeds must be at least 1".into()));
    }
    if opts.n_min < 2 || opts.n_min > opts.n_max {
        return Err(FuzzError::Options(format!(
            "need 2 <= n-min <= n-max, got {}..{}",
            opts.n_min, opts.n_max
        )));
    }
    if opts.rounds == 0 {
        return Err(FuzzError::Options("rounds must be at least 1".into()));
    }
    if opts.modes.is_empty() {
        return Err(FuzzError::Options("at least one mode is required".into()));
    }
    (0..opts.seeds)
        .into_par_iter()
        .map(|i| fuzz_one(opts, i))
        .try_reduce(FuzzSummary::default, |a, b| Ok(a.merge(b)))
}

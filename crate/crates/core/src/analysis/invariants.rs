//! Per-round invariant checks and post-hoc trace diagnostics.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::instance::ColorId;
use crate::protocol::{NodeState, Phase, Protocol};
use crate::sim::{max_ttl_metrics, Edges, RoundInput, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Hard,
    Advisory,
}

/// The fixed registry of checked rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    /// max_ttl never decreases.
    L1Monotone,
    /// max_ttl is a power of two greater than one.
    L1PowerOfTwo,
    /// 0 ≤ timer < max_ttl.
    L2TimerBound,
    /// Reset iff ttl = 0.
    L3ResetIffZeroTtl,
    /// 0 ≤ ttl ≤ max_ttl.
    L4TtlBound,
    /// source iff ttl = max_ttl.
    L5SourceIffFullTtl,
    /// Non-source ttl equals the closed-neighborhood recurrence.
    L6Recurrence,
    /// e* drops by one when nobody is a source and m* is settled.
    L7EStarDecrement,
    /// m* ≤ 2n.
    L8MaxTtlBound,
    /// A Reset node holds signal ⊥.
    L10cResetSignal,
    /// Under fixed-color variants a Reset node shows c_⊥.
    L10cResetColor,
    /// Signal, color, ttl and timer inside their declared domains.
    Domain,
    /// Locked nodes at the final m* are none or all of V.
    C2UniversalLock,
    /// Locked nodes at the final m* share one timer.
    C5LockTimerSync,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::L1Monotone => "L1-monotone",
            Rule::L1PowerOfTwo => "L1-power-of-two",
            Rule::L2TimerBound => "L2-timer-bound",
            Rule::L3ResetIffZeroTtl => "L3-reset-iff-zero-ttl",
            Rule::L4TtlBound => "L4-ttl-bound",
            Rule::L5SourceIffFullTtl => "L5-source-iff-full-ttl",
            Rule::L6Recurrence => "L6-recurrence",
            Rule::L7EStarDecrement => "L7-e-star-decrement",
            Rule::L8MaxTtlBound => "L8-max-ttl-bound",
            Rule::L10cResetSignal => "L10c-reset-signal",
            Rule::L10cResetColor => "L10c-reset-color",
            Rule::Domain => "domain",
            Rule::C2UniversalLock => "C2-universal-lock",
            Rule::C5LockTimerSync => "C5-lock-timer-sync",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            Rule::C2UniversalLock | Rule::C5LockTimerSync => Severity::Advisory,
            _ => Severity::Hard,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl Serialize for Rule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Round whose outcome broke the rule (the configuration at time `round + 1`).
    pub round: u64,
    pub node: Option<usize>,
    pub rule: Rule,
    pub severity: Severity,
    pub detail: String,
}

impl Violation {
    fn new(round: u64, node: Option<usize>, rule: Rule, detail: String) -> Self {
        Violation {
            round,
            node,
            rule,
            severity: rule.severity(),
            detail,
        }
    }

    pub fn is_hard(&self) -> bool {
        self.severity == Severity::Hard
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}] round {} ", self.severity, self.round)?;
        if let Some(v) = self.node {
            write!(f, "node {v} ")?;
        }
        write!(f, "{}: {}", self.rule, self.detail)
    }
}

/// What the checker needs to know beyond the states themselves.
#[derive(Debug, Clone)]
pub struct CheckContext {
    pub n: usize,
    pub k: u32,
    pub ell: u32,
    /// c_⊥ when the protocol assigns fixed colors.
    pub reset_color: Option<ColorId>,
}

impl CheckContext {
    pub fn new(protocol: &Protocol, n: usize) -> Self {
        CheckContext {
            n,
            k: protocol.instance().k(),
            ell: protocol.instance().ell(),
            reset_color: protocol.fixed_color(crate::instance::SignalId::BOT),
        }
    }
}

/// Independent ttl oracle: for every node that is not a source after the
/// round, the value `max(0, max{prev ttl of u} − 1)` over the closed
/// neighborhood `u ∈ N[v]` restricted to `prev max_ttl(u) = next max_ttl(v)`.
/// Source nodes get `None`.
pub fn ttl_oracle(prev: &[NodeState], input: &RoundInput, next: &[NodeState]) -> Vec<Option<u64>> {
    let n = prev.len();
    match &input.snapshot.edges {
        Edges::Complete => {
            let mut best_by_level: HashMap<u64, u64> = HashMap::new();
            for s in prev {
                let e = best_by_level.entry(s.max_ttl).or_default();
                *e = (*e).max(s.ttl);
            }
            next.iter()
                .map(|s| {
                    (!s.source).then(|| {
                        best_by_level
                            .get(&s.max_ttl)
                            .copied()
                            .unwrap_or(0)
                            .saturating_sub(1)
                    })
                })
                .collect()
        }
        Edges::List(_) => {
            let adj = input.snapshot.adjacency();
            (0..n)
                .map(|v| {
                    if next[v].source {
                        return None;
                    }
                    let level = next[v].max_ttl;
                    let best = std::iter::once(v)
                        .chain(adj[v].iter().copied())
                        .filter(|&u| prev[u].max_ttl == level)
                        .map(|u| prev[u].ttl)
                        .max()
                        .unwrap_or(0);
                    Some(best.saturating_sub(1))
                })
                .collect()
        }
    }
}

/// Checks one round: `prev` is the configuration at time `t`, `next` at
/// time `t + 1`, `input` the adversary's choice for round `t`.
pub fn check_step_invariants(
    ctx: &CheckContext,
    t: u64,
    prev: &[NodeState],
    input: &RoundInput,
    next: &[NodeState],
) -> Vec<Violation> {
    let mut out = Vec::new();
    let two_n = 2 * ctx.n as u64;
    for (v, (before, after)) in prev.iter().zip(next).enumerate() {
        let mut flag =
            |rule: Rule, detail: String| out.push(Violation::new(t, Some(v), rule, detail));
        if after.max_ttl < before.max_ttl {
            flag(
                Rule::L1Monotone,
                format!("max_ttl fell from {} to {}", before.max_ttl, after.max_ttl),
            );
        }
        if after.max_ttl <= 1 || !after.max_ttl.is_power_of_two() {
            flag(Rule::L1PowerOfTwo, format!("max_ttl = {}", after.max_ttl));
        }
        if after.timer >= after.max_ttl {
            flag(
                Rule::L2TimerBound,
                format!("timer {} >= max_ttl {}", after.timer, after.max_ttl),
            );
        }
        if (after.phase == Phase::Reset) != (after.ttl == 0) {
            flag(
                Rule::L3ResetIffZeroTtl,
                format!("phase {:?} with ttl {}", after.phase, after.ttl),
            );
        }
        if after.ttl > after.max_ttl {
            flag(
                Rule::L4TtlBound,
                format!("ttl {} > max_ttl {}", after.ttl, after.max_ttl),
            );
        }
        if after.source != (after.ttl == after.max_ttl) {
            flag(
                Rule::L5SourceIffFullTtl,
                format!(
                    "source = {} with ttl {} and max_ttl {}",
                    after.source, after.ttl, after.max_ttl
                ),
            );
        }
        if after.phase == Phase::Reset && !after.signal.is_bot() {
            flag(
                Rule::L10cResetSignal,
                format!("Reset node holds signal {}", after.signal),
            );
        }
        if let Some(c_bot) = ctx.reset_color {
            if after.phase == Phase::Reset && after.color != c_bot {
                flag(
                    Rule::L10cResetColor,
                    format!("Reset node shows color {} instead of {c_bot}", after.color),
                );
            }
        }
        if after.signal.0 > ctx.k || after.color.0 == 0 || after.color.0 > ctx.ell {
            flag(
                Rule::Domain,
                format!(
                    "signal {} or color {} outside k = {}, ell = {}",
                    after.signal, after.color, ctx.k, ctx.ell
                ),
            );
        }
        if after.ttl > two_n || after.timer >= two_n {
            flag(
                Rule::Domain,
                format!(
                    "ttl {} or timer {} outside the 2n = {two_n} domain",
                    after.ttl, after.timer
                ),
            );
        }
    }

    for (v, expected) in ttl_oracle(prev, input, next).into_iter().enumerate() {
        if let Some(expected) = expected {
            if next[v].ttl != expected {
                out.push(Violation::new(
                    t,
                    Some(v),
                    Rule::L6Recurrence,
                    format!(
                        "ttl {} but the neighborhood recurrence gives {expected}",
                        next[v].ttl
                    ),
                ));
            }
        }
    }

    let (m_prev, e_prev) = max_ttl_metrics(prev);
    let (m_next, e_next) = max_ttl_metrics(next);
    let settled = m_prev == m_next
        && prev.iter().all(|s| s.max_ttl == m_prev && !s.source)
        && next.iter().all(|s| !s.source);
    if settled && e_next != e_prev.saturating_sub(1) {
        out.push(Violation::new(
            t,
            None,
            Rule::L7EStarDecrement,
            format!(
                "e* went from {e_prev} to {e_next}, expected {}",
                e_prev.saturating_sub(1)
            ),
        ));
    }
    if m_next > two_n {
        out.push(Violation::new(
            t,
            None,
            Rule::L8MaxTtlBound,
            format!("m* = {m_next} > 2n = {two_n}"),
        ));
    }
    out
}

/// Runs [`check_step_invariants`] over every round of a trace.
pub fn check_trace(ctx: &CheckContext, trace: &Trace) -> Vec<Violation> {
    trace
        .records
        .iter()
        .flat_map(|r| check_step_invariants(ctx, r.t, trace.config(r.t), &r.input, &r.states))
        .collect()
}

/// First time from which m* keeps its final value through the horizon.
pub fn final_max_ttl_onset(trace: &Trace) -> u64 {
    let horizon = trace.horizon();
    let m = trace.m_star(horizon);
    let mut onset = horizon;
    while onset > 0 && trace.m_star(onset - 1) == m {
        onset -= 1;
    }
    onset
}

/// Advisory checks over the suffix where m* has its final value m: the
/// set of Locked nodes with max_ttl = m is empty or everything, and its
/// members agree on the timer.
pub fn trace_diagnostics(trace: &Trace) -> Vec<Violation> {
    let horizon = trace.horizon();
    let m = trace.m_star(horizon);
    let mut out = Vec::new();
    // Violations are attributed to the round that produced the configuration.
    for time in final_max_ttl_onset(trace).max(1)..=horizon {
        let config = trace.config(time);
        let locked: Vec<usize> = (0..config.len())
            .filter(|&v| config[v].phase == Phase::Locked && config[v].max_ttl == m)
            .collect();
        if !locked.is_empty() && locked.len() != config.len() {
            out.push(Violation::new(
                time - 1,
                None,
                Rule::C2UniversalLock,
                format!(
                    "{} of {} nodes are Locked at max_ttl {m}",
                    locked.len(),
                    config.len()
                ),
            ));
        }
        if let Some(&first) = locked.first() {
            if let Some(&odd) = locked
                .iter()
                .find(|&&v| config[v].timer != config[first].timer)
            {
                out.push(Violation::new(
                    time - 1,
                    Some(odd),
                    Rule::C5LockTimerSync,
                    format!(
                        "timer {} differs from node {first}'s {}",
                        config[odd].timer, config[first].timer
                    ),
                ));
            }
        }
    }
    out
}

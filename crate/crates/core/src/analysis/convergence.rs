//! Stabilization detection and the convergence bound checks.

use std::fmt;

use serde::Serialize;

use crate::instance::{ColorId, SignalId};
use crate::sim::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Bound {
    /// At most 16n unstable rounds after t0.
    Weak16n,
    /// All nodes at the target color from t0 + 12n on.
    Strong12n,
    /// All nodes at the target color from t0 + 4·2^⌈log₂ n⌉ on.
    Strong4n,
    /// Conditional: while m* = m over [t0', t0' + 3m] under ⊥, colors are c_⊥ from t0' + 3m on.
    Reset3m,
    /// Conditional: once m* = m forever, colors are c_s from t0' + 4m on.
    Color4m,
}

impl Bound {
    pub const ALL: [Bound; 5] = [
        Bound::Weak16n,
        Bound::Strong12n,
        Bound::Strong4n,
        Bound::Reset3m,
        Bound::Color4m,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Bound::Weak16n => "weak16n",
            Bound::Strong12n => "strong12n",
            Bound::Strong4n => "strong4n",
            Bound::Reset3m => "reset3m",
            Bound::Color4m => "color4m",
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Bound {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Bound::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown bound {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConvergenceReport {
    pub persistent_signal: SignalId,
    pub t0: u64,
    pub stabilized_at: Option<u64>,
    pub unstable_round_count: u64,
    pub bound_checked: Bound,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stabilized = match self.stabilized_at {
            Some(t) => t.to_string(),
            None => "never".to_string(),
        };
        write!(
            f,
            "{} signal={} t0={} stabilized_at={} unstable_round_count={} {}: {}",
            self.bound_checked,
            self.persistent_signal,
            self.t0,
            stabilized,
            self.unstable_round_count,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

/// Smallest `t1 ≥ t0` such that colors do not change from time `t1` through
/// the horizon. `None` when the final round still changed a color.
pub fn detect_stabilization(trace: &Trace, t0: u64) -> Option<u64> {
    let horizon = trace.horizon();
    let last_unstable = trace.records.iter().rev().find(|r| !r.stable).map(|r| r.t);
    match last_unstable {
        Some(t) if t + 1 >= horizon => None,
        Some(t) => Some((t + 1).max(t0)),
        None => Some(t0.min(horizon)),
    }
}

/// Times `t > t0` at which some color differs from time `t − 1`.
pub fn count_unstable_rounds(trace: &Trace, t0: u64) -> u64 {
    trace
        .records
        .iter()
        .filter(|r| r.t >= t0 && !r.stable)
        .count() as u64
}

fn all_colored(trace: &Trace, time: u64, color: ColorId) -> bool {
    trace.config(time).iter().all(|s| s.color == color)
}

/// First time in `[from, horizon]` at which some node is not `color`.
fn first_miss(trace: &Trace, from: u64, to: u64, color: ColorId) -> Option<u64> {
    (from..=to).find(|&time| !all_colored(trace, time, color))
}

/// Maximal intervals `[a, b]` of times with a constant m*.
fn max_ttl_runs(trace: &Trace) -> Vec<(u64, u64, u64)> {
    let horizon = trace.horizon();
    let mut runs = Vec::new();
    let mut start = 0;
    for time in 1..=horizon + 1 {
        if time > horizon || trace.m_star(time) != trace.m_star(start) {
            runs.push((start, time - 1, trace.m_star(start)));
            start = time;
        }
    }
    runs
}

/// Checks `bound` for a signal persistent from `t0`.
pub fn check_bound(trace: &Trace, signal: SignalId, t0: u64, bound: Bound) -> ConvergenceReport {
    let n = trace.scenario.n as u64;
    let horizon = trace.horizon();
    let stabilized_at = if t0 < horizon {
        detect_stabilization(trace, t0)
    } else {
        None
    };
    let unstable_round_count = count_unstable_rounds(trace, t0);
    let target = trace.scenario.instance.response(signal).point_color();
    let mut report = ConvergenceReport {
        persistent_signal: signal,
        t0,
        stabilized_at,
        unstable_round_count,
        bound_checked: bound,
        passed: false,
        detail: String::new(),
    };

    let strong = |limit: u64, report: &mut ConvergenceReport| {
        let Some(color) = target else {
            report.passed = true;
            report.detail = format!("vacuous: r({signal}) is not a point mass");
            return;
        };
        if limit > horizon {
            report.detail = format!("horizon {horizon} ends before the limit {limit}");
            return;
        }
        match first_miss(trace, limit, horizon, color) {
            None => {
                report.passed = true;
                report.detail =
                    format!("all nodes at color {color} from time {limit} through {horizon}");
            }
            Some(time) => {
                report.detail =
                    format!("some node is not at color {color} at time {time} (limit {limit})")
            }
        }
    };

    match bound {
        Bound::Weak16n => {
            let limit = 16 * n;
            report.passed = unstable_round_count <= limit;
            report.detail =
                format!("{unstable_round_count} unstable rounds against the limit {limit}");
        }
        Bound::Strong12n => strong(t0 + 12 * n, &mut report),
        Bound::Strong4n => strong(t0 + 4 * n.next_power_of_two(), &mut report),
        Bound::Reset3m | Bound::Color4m => {
            let Some(color) = target else {
                report.passed = true;
                report.detail = format!("vacuous: r({signal}) is not a point mass");
                return report;
            };
            if (bound == Bound::Reset3m) != signal.is_bot() {
                report.passed = true;
                report.detail = format!("vacuous: {bound} does not apply to signal {signal}");
                return report;
            }
            let factor = if bound == Bound::Reset3m { 3 } else { 4 };
            let runs = max_ttl_runs(trace);
            let runs: Vec<_> = if bound == Bound::Color4m {
                runs.last().copied().into_iter().collect()
            } else {
                runs
            };
            let mut windows = 0;
            report.passed = true;
            for (a, b, m) in runs {
                let start = a.max(t0);
                let limit = start + factor * m;
                if start > b || limit > b {
                    continue;
                }
                windows += 1;
                if let Some(time) = first_miss(trace, limit, b, color) {
                    report.passed = false;
                    report.detail =
                        format!("m* = {m} on [{start}, {b}] but some node is not at color {color} at time {time}");
                    return report;
                }
            }
            report.detail = if windows == 0 {
                "vacuous: m* is never constant for long enough".to_string()
            } else {
                format!("{windows} constant-m* window(s) checked")
            };
        }
    }
    report
}

//! Verdict on whether a stabilized randomized run approximates r(s).

use serde::Serialize;

use crate::analysis::{convergence::detect_stabilization, AnalysisError};
use crate::instance::{
    approximates, epsilon, format_rational, rational_to_f64, tv_distance, ColorCounts, Instance,
    SignalId,
};
use crate::sim::Trace;

#[derive(Debug, Clone, Serialize)]
pub struct ApproxReport {
    pub signal: SignalId,
    pub t0: u64,
    pub stabilized_at: u64,
    pub stable_counts: ColorCounts,
    /// Exact distance as `p/q`.
    pub d_tv: String,
    pub d_tv_f64: f64,
    pub epsilon: f64,
    pub passed: bool,
    /// `2ℓ·exp(−8√n/ℓ²)`.
    pub failure_bound: f64,
}

pub fn failure_bound(n: u64, ell: u32) -> f64 {
    let ell = f64::from(ell);
    2.0 * ell * (-8.0 * (n as f64).sqrt() / (ell * ell)).exp()
}

pub fn approximation_verdict(
    trace: &Trace,
    inst: &Instance,
    s: SignalId,
    t0: u64,
) -> Result<ApproxReport, AnalysisError> {
    if s.0 > inst.k() {
        return Err(AnalysisError::Precondition(format!(
            "signal {s} is outside k = {}",
            inst.k()
        )));
    }
    let stabilized_at =
        detect_stabilization(trace, t0).ok_or(AnalysisError::NotStabilized { t0 })?;
    let stable_counts = match trace.records.last() {
        Some(r) => r.color_counts.clone(),
        None => ColorCounts::tally(inst.ell(), trace.initial.iter().map(|v| v.color)),
    };
    let r = inst.response(s);
    let d =
        tv_distance(&stable_counts, r).map_err(|e| AnalysisError::Precondition(e.to_string()))?;
    let passed =
        approximates(&stable_counts, r).map_err(|e| AnalysisError::Precondition(e.to_string()))?;
    Ok(ApproxReport {
        signal: s,
        t0,
        stabilized_at,
        d_tv: format_rational(&d),
        d_tv_f64: rational_to_f64(&d),
        epsilon: epsilon(stable_counts.n),
        passed,
        failure_bound: failure_bound(stable_counts.n, inst.ell()),
        stable_counts,
    })
}

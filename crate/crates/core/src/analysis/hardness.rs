//! Runs the deterministic machine on a non-homogeneous instance to show it
//! cannot approximate the response.

use std::collections::HashSet;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::adversary::{SignalAdversary, TopologyAdversary, WitnessPolicy};
use crate::analysis::{convergence::detect_stabilization, AnalysisError};
use crate::instance::{
    approximates, epsilon, rational_to_f64, tv_distance, ColorCounts, ColorId, Instance, Rational,
    SignalId,
};
use crate::protocol::Protocol;
use crate::sim::{run_with_protocol, ModeSpec, Scenario, Trace};

#[derive(Debug, Clone, Serialize)]
pub struct HardnessReport {
    pub n: usize,
    pub signal: SignalId,
    /// Color with the smallest weight strictly between 0 and 1.
    pub c_star: ColorId,
    /// Distinct full node states at each time `0..=horizon`.
    pub distinct_states: Vec<usize>,
    pub max_distinct_states: usize,
    pub stabilized_at: Option<u64>,
    pub stable_counts: ColorCounts,
    #[serde(serialize_with = "ser_rational")]
    pub d_tv: Rational,
    /// `min{r(c*), 1 − r(c*)}/2 − 1/n`.
    pub asymptotic_bound: f64,
    /// `min |C/n − r(c*)|` over `C ∈ {0, 1, n − 1, n}`.
    #[serde(serialize_with = "ser_rational")]
    pub case_table_bound: Rational,
    pub epsilon: f64,
    pub approximates: bool,
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&crate::instance::format_rational(r))
}

impl HardnessReport {
    /// At most two distinct states every round and a stable distance no
    /// smaller than the case-table bound.
    pub fn matches_case_table(&self) -> bool {
        self.max_distinct_states <= 2 && self.d_tv >= self.case_table_bound
    }
}

fn c_star(inst: &Instance, s: SignalId) -> Option<ColorId> {
    let weights = inst.response(s).weights();
    let zero = Rational::zero();
    let one = Rational::one();
    (0..weights.len())
        .filter(|&i| weights[i] > zero && weights[i] < one)
        .min_by(|&a, &b| weights[a].cmp(&weights[b]).then(a.cmp(&b)))
        .map(ColorId::from_slot)
}

pub fn hardness_demo(
    n: usize,
    inst: &Instance,
    s: SignalId,
    horizon: u64,
) -> Result<HardnessReport, AnalysisError> {
    if s.0 > inst.k() {
        return Err(AnalysisError::Precondition(format!(
            "signal {s} is outside k = {}",
            inst.k()
        )));
    }
    let c_star = c_star(inst, s).ok_or_else(|| {
        AnalysisError::Precondition(format!(
            "r({s}) is a point mass, so the instance is homogeneous there"
        ))
    })?;
    if n < 2 {
        return Err(AnalysisError::Precondition("n must be at least 2".into()));
    }
    let signal = if s.is_bot() {
        SignalAdversary::Silent
    } else {
        SignalAdversary::Persistent {
            signal: s,
            from_round: 0,
            witness_policy: WitnessPolicy::FixedSingle { node: 0 },
        }
    };
    let scenario = Scenario {
        n,
        mode: ModeSpec::Deterministic,
        instance: inst.clone(),
        topology: TopologyAdversary::StaticComplete,
        signal,
        horizon,
        seed: 0,
        resample: Default::default(),
    };
    let protocol = Protocol::deterministic_argmax(inst.clone());
    let trace = run_with_protocol(&scenario, &protocol)?;
    Ok(summarize(&trace, inst, s, c_star))
}

fn summarize(trace: &Trace, inst: &Instance, s: SignalId, c_star: ColorId) -> HardnessReport {
    let n = trace.scenario.n;
    let distinct_states: Vec<usize> = (0..=trace.horizon())
        .map(|time| trace.config(time).iter().collect::<HashSet<_>>().len())
        .collect();
    let stable_counts = ColorCounts::tally(
        inst.ell(),
        trace.config(trace.horizon()).iter().map(|s| s.color),
    );
    let r = inst.response(s);
    let d_tv = tv_distance(&stable_counts, r).expect("counts tallied over ell colors");
    let rc = r.weight(c_star).clone();
    let asymptotic_bound =
        rational_to_f64(&rc).min(1.0 - rational_to_f64(&rc)) / 2.0 - 1.0 / n as f64;
    let case_table_bound = [0, 1, n - 1, n]
        .into_iter()
        .map(|c| {
            let diff = Rational::new((c as i64).into(), (n as i64).into()) - &rc;
            if diff < Rational::zero() {
                -diff
            } else {
                diff
            }
        })
        .min()
        .expect("nonempty case table");
    HardnessReport {
        n,
        signal: s,
        c_star,
        max_distinct_states: distinct_states.iter().copied().max().unwrap_or(0),
        distinct_states,
        stabilized_at: detect_stabilization(trace, 0),
        approximates: approximates(&stable_counts, r).expect("counts tallied over ell colors"),
        stable_counts,
        d_tv,
        asymptotic_bound,
        case_table_bound,
        epsilon: epsilon(n as u64),
    }
}

//! Simulation and verification of adaptive self-organization in anonymous,
//! synchronous dynamic networks.

pub mod adversary;
pub mod analysis;
pub mod config;
pub mod fuzz;
pub mod instance;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod sim;
pub mod trace_io;

pub use adversary::{
    AdversaryError, ScriptedSignal, SignalAdversary, TopologyAdversary, WitnessPolicy,
};
pub use analysis::{
    approximation_verdict, check_bound, check_step_invariants, check_trace, count_unstable_rounds,
    detect_stabilization, hardness_demo, trace_diagnostics, AnalysisError, ApproxReport, Bound,
    CheckContext, ConvergenceReport, HardnessReport, Rule, Severity, Violation,
};
pub use config::{load_scenario, Config, ConfigError};
pub use fuzz::{fuzz, FuzzError, FuzzOptions, FuzzSummary};
pub use instance::{
    approximates, epsilon, parse_rational, tv_distance, ColorCounts, ColorId, Distribution,
    Instance, InstanceError, Rational, SignalId,
};
pub use protocol::{
    compose_message, Message, NodeState, Phase, Protocol, ProtocolError, Resample, Variant,
};
pub use sim::{
    replay, run, run_with_protocol, step, Edges, ModeSpec, ReplayOutcome, RoundInput, RoundRecord,
    Scenario, SimError, Snapshot, Trace,
};
pub use trace_io::{load_trace, read_trace, save_trace, write_trace, TraceError};

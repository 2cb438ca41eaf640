//! Synchronous round execution over adversarial snapshots.
//!
//! Each round the signal adversary picks the signal and its witnesses, the
//! topology adversary picks a connected snapshot, every node sends its
//! message to its current neighbors, and all nodes transition at once
//! against the pre-round states.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use thiserror::Error;

use crate::adversary::{AdversaryError, SignalAdversary, TopologyAdversary};
use crate::instance::{ColorCounts, Instance, SignalId};
use crate::protocol::{
    compose_message, Message, NodeState, Phase, Protocol, ProtocolError, Resample, Variant,
};
use crate::rng::{substream, Domain, LazyStream};

/// Below this population, rounds run on the calling thread.
const PARALLEL_THRESHOLD: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Edges {
    /// Every pair of distinct nodes.
    Complete,
    /// Normalized `(lo, hi)` pairs, sorted and deduplicated.
    List(Vec<(usize, usize)>),
}

/// One round's communication graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Snapshot {
    pub n: usize,
    pub edges: Edges,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotViolation {
    #[error("snapshot has no nodes")]
    Empty,
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({a}, {b}) leaves the node range [0, {n})")]
    OutOfRange { a: usize, b: usize, n: usize },
    #[error("graph is disconnected: node {0} is unreachable from node 0")]
    Disconnected(usize),
}

impl Snapshot {
    pub fn complete(n: usize) -> Self {
        Snapshot {
            n,
            edges: Edges::Complete,
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut list: Vec<(usize, usize)> = edges
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        list.sort_unstable();
        list.dedup();
        Snapshot {
            n,
            edges: Edges::List(list),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.edges == Edges::Complete
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        match &self.edges {
            Edges::Complete => (0..self.n)
                .flat_map(|a| (a + 1..self.n).map(move |b| (a, b)))
                .collect(),
            Edges::List(list) => list.clone(),
        }
    }

    /// Open neighborhoods; only meaningful for a validated snapshot.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        match &self.edges {
            Edges::Complete => {
                for (v, list) in adj.iter_mut().enumerate() {
                    list.extend((0..self.n).filter(|&u| u != v));
                }
            }
            Edges::List(list) => {
                for &(a, b) in list {
                    if a < self.n && b < self.n && a != b {
                        adj[a].push(b);
                        adj[b].push(a);
                    }
                }
            }
        }
        adj
    }

    /// Ok iff loop-free, in range and connected.
    pub fn validate(&self) -> Result<(), SnapshotViolation> {
        if self.n == 0 {
            return Err(SnapshotViolation::Empty);
        }
        let list = match &self.edges {
            Edges::Complete => return Ok(()),
            Edges::List(list) => list,
        };
        for &(a, b) in list {
            if a >= self.n || b >= self.n {
                return Err(SnapshotViolation::OutOfRange { a, b, n: self.n });
            }
            if a == b {
                return Err(SnapshotViolation::SelfLoop(a));
            }
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(v) => Err(SnapshotViolation::Disconnected(v)),
            None => Ok(()),
        }
    }
}

/// Everything the adversaries fix for one round.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RoundInput {
    pub snapshot: Snapshot,
    pub signal: SignalId,
    /// Sorted, duplicate-free node indices.
    pub witnesses: Vec<usize>,
}

impl RoundInput {
    pub fn validate(&self) -> Result<(), String> {
        self.snapshot.validate().map_err(|v| v.to_string())?;
        if self.signal.is_bot() != self.witnesses.is_empty() {
            return Err(format!(
                "signal {} with {} witnesses: witnesses must be nonempty exactly when a signal is present",
                self.signal,
                self.witnesses.len()
            ));
        }
        if let Some(&v) = self.witnesses.iter().find(|&&v| v >= self.snapshot.n) {
            return Err(format!("witness {v} is not a node"));
        }
        Ok(())
    }

    pub fn witnesses(&self, v: usize) -> bool {
        self.witnesses.binary_search(&v).is_ok()
    }
}

/// Which algorithm a scenario runs; know-n takes n from the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSpec {
    Deterministic,
    KnowN,
    Randomized,
}

impl ModeSpec {
    pub fn variant(self, n: usize) -> Variant {
        match self {
            ModeSpec::Deterministic => Variant::Deterministic,
            ModeSpec::KnowN => Variant::KnowN(n as u64),
            ModeSpec::Randomized => Variant::Randomized,
        }
    }

    pub const ALL: [ModeSpec; 3] = [
        ModeSpec::Deterministic,
        ModeSpec::KnowN,
        ModeSpec::Randomized,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub mode: ModeSpec,
    pub instance: Instance,
    pub topology: TopologyAdversary,
    pub signal: SignalAdversary,
    pub horizon: u64,
    pub seed: u64,
    pub resample: Resample,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("adversary failed in round {t}: {source}")]
    Adversary { t: u64, source: AdversaryError },
    #[error("adversary broke connectivity in round {t}: {detail}")]
    AdversaryConnectivityViolation { t: u64, detail: String },
    #[error("expected {expected} node states, got {found}")]
    Population { expected: usize, found: usize },
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 2 {
            return Err(SimError::Scenario(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if self.horizon < 1 {
            return Err(SimError::Scenario("horizon must be at least 1".to_string()));
        }
        self.topology
            .validate()
            .map_err(|e| SimError::Scenario(format!("topology: {e}")))?;
        self.signal
            .validate(self.n, self.instance.k())
            .map_err(|e| SimError::Scenario(format!("signal: {e}")))?;
        self.protocol()?;
        Ok(())
    }

    pub fn protocol(&self) -> Result<Protocol, SimError> {
        Ok(
            Protocol::new(self.mode.variant(self.n), self.instance.clone())?
                .with_resample(self.resample),
        )
    }

    /// The adversaries' choices for round `t`.
    pub fn round_input(&self, t: u64) -> Result<RoundInput, SimError> {
        let mut signal_rng = substream(self.seed, Domain::Signal, t, 0);
        let (signal, witnesses) = self
            .signal
            .next(t, self.n, &mut signal_rng)
            .map_err(|source| SimError::Adversary { t, source })?;
        let mut topo_rng = substream(self.seed, Domain::Topology, t, 0);
        let snapshot = self
            .topology
            .next(t, self.n, &witnesses, &mut topo_rng)
            .map_err(|source| SimError::Adversary { t, source })?;
        let input = RoundInput {
            snapshot,
            signal,
            witnesses,
        };
        input
            .validate()
            .map_err(|detail| SimError::AdversaryConnectivityViolation { t, detail })?;
        Ok(input)
    }
}

/// The configuration after one round plus its derived metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRecord {
    pub t: u64,
    pub input: RoundInput,
    /// Node states at time `t + 1`, i.e. after this round's transition.
    pub states: Vec<NodeState>,
    pub m_star: u64,
    pub e_star: u64,
    pub color_counts: ColorCounts,
    /// No node changed color in this round.
    pub stable: bool,
}

/// `(m*, e*)`: the largest max_ttl and the largest ttl among nodes holding it.
pub fn max_ttl_metrics(states: &[NodeState]) -> (u64, u64) {
    let m_star = states.iter().map(|s| s.max_ttl).max().unwrap_or(0);
    let e_star = states
        .iter()
        .filter(|s| s.max_ttl == m_star)
        .map(|s| s.ttl)
        .max()
        .unwrap_or(0);
    (m_star, e_star)
}

impl RoundRecord {
    pub fn derive(
        t: u64,
        input: RoundInput,
        before: &[NodeState],
        states: Vec<NodeState>,
        ell: u32,
    ) -> Self {
        let (m_star, e_star) = max_ttl_metrics(&states);
        let color_counts = ColorCounts::tally(ell, states.iter().map(|s| s.color));
        let stable = before.iter().zip(&states).all(|(a, b)| a.color == b.color);
        RoundRecord {
            t,
            input,
            states,
            m_star,
            e_star,
            color_counts,
            stable,
        }
    }

    pub fn locked_count(&self) -> usize {
        self.states
            .iter()
            .filter(|s| s.phase == Phase::Locked)
            .count()
    }
}

/// Delivers messages over `input.snapshot` and transitions every node.
///
/// Node `v` samples (randomized variant only) from the substream keyed by
/// `(seed, t, v)`, so the result does not depend on processing order.
pub fn step(
    protocol: &Protocol,
    states: &[NodeState],
    input: &RoundInput,
    t: u64,
    seed: u64,
) -> Result<(Vec<NodeState>, RoundRecord), SimError> {
    let n = input.snapshot.n;
    if states.len() != n {
        return Err(SimError::Population {
            expected: n,
            found: states.len(),
        });
    }
    input
        .validate()
        .map_err(|detail| SimError::AdversaryConnectivityViolation { t, detail })?;

    let outbox: Vec<Message> = states.iter().map(compose_message).collect();
    let inboxes = Inboxes::build(&input.snapshot, &outbox);
    let randomized = protocol.is_randomized();

    let next_state = |v: usize| -> NodeState {
        let inbox = inboxes.for_node(v, &outbox);
        let witnessed = input.witnesses(v).then_some(input.signal);
        if randomized {
            let mut draws = LazyStream::new(seed, Domain::Node, t, v as u64);
            protocol.transition(&states[v], &inbox, witnessed, Some(&mut draws))
        } else {
            protocol.transition(&states[v], &inbox, witnessed, None)
        }
    };
    let next: Vec<NodeState> = if n >= PARALLEL_THRESHOLD {
        (0..n).into_par_iter().map(next_state).collect()
    } else {
        (0..n).map(next_state).collect()
    };
    let record = RoundRecord::derive(
        t,
        input.clone(),
        states,
        next.clone(),
        protocol.instance().ell(),
    );
    Ok((next, record))
}

/// Per-node received messages for one round.
enum Inboxes {
    /// Distinct messages with multiplicities; each node drops one copy of
    /// its own message.
    Complete(Vec<(Message, usize)>),
    Adjacency(Vec<Vec<usize>>),
}

impl Inboxes {
    fn build(snapshot: &Snapshot, outbox: &[Message]) -> Self {
        if snapshot.is_complete() {
            let mut counts: BTreeMap<Message, usize> = BTreeMap::new();
            for m in outbox {
                *counts.entry(*m).or_default() += 1;
            }
            Inboxes::Complete(counts.into_iter().collect())
        } else {
            Inboxes::Adjacency(snapshot.adjacency())
        }
    }

    fn for_node(&self, v: usize, outbox: &[Message]) -> Vec<Message> {
        match self {
            Inboxes::Complete(distinct) => {
                // Multiplicity is irrelevant to the transition, which only
                // takes maxima, so each distinct message is delivered once.
                let own = outbox[v];
                distinct
                    .iter()
                    .filter(|(m, count)| *m != own || *count >= 2)
                    .map(|(m, _)| *m)
                    .collect()
            }
            Inboxes::Adjacency(adj) => adj[v].iter().map(|&u| outbox[u]).collect(),
        }
    }
}

/// A full execution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scenario: Scenario,
    /// Node states at time 0.
    pub initial: Vec<NodeState>,
    pub records: Vec<RoundRecord>,
}

impl Trace {
    /// Number of executed rounds; the last configuration is at this time.
    pub fn horizon(&self) -> u64 {
        self.records.len() as u64
    }

    /// Node states at time `time` (the start of round `time`).
    pub fn config(&self, time: u64) -> &[NodeState] {
        if time == 0 {
            &self.initial
        } else {
            &self.records[time as usize - 1].states
        }
    }

    /// m* at time `time`.
    pub fn m_star(&self, time: u64) -> u64 {
        if time == 0 {
            max_ttl_metrics(&self.initial).0
        } else {
            self.records[time as usize - 1].m_star
        }
    }
}

pub fn initial_states(protocol: &Protocol, n: usize, seed: u64) -> Vec<NodeState> {
    (0..n)
        .map(|v| {
            if protocol.is_randomized() {
                protocol.init_state(Some(&mut LazyStream::new(seed, Domain::Init, 0, v as u64)))
            } else {
                protocol.init_state(None)
            }
        })
        .collect()
}

/// Executes `scenario` from the initial configuration through its horizon.
pub fn run(scenario: &Scenario) -> Result<Trace, SimError> {
    scenario.validate()?;
    let protocol = scenario.protocol()?;
    run_with_protocol(scenario, &protocol)
}

/// Like [`run`], with an explicitly supplied protocol (for mutation tests
/// and the argmax machine of the impossibility demonstration).
pub fn run_with_protocol(scenario: &Scenario, protocol: &Protocol) -> Result<Trace, SimError> {
    let initial = initial_states(protocol, scenario.n, scenario.seed);
    let mut states = initial.clone();
    let mut records = Vec::with_capacity(scenario.horizon as usize);
    for t in 0..scenario.horizon {
        let input = scenario.round_input(t)?;
        let (next, record) = step(protocol, &states, &input, t, scenario.seed)?;
        states = next;
        records.push(record);
    }
    Ok(Trace {
        scenario: scenario.clone(),
        initial,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayOutcome {
    Identical,
    /// First round whose record differs (0 also covers a differing initial
    /// configuration).
    Diverged {
        round: u64,
    },
}

/// Re-executes the trace's scenario and compares it record by record.
pub fn replay(trace: &Trace) -> ReplayOutcome {
    let protocol = match trace.scenario.protocol() {
        Ok(p) => p,
        Err(_) => return ReplayOutcome::Diverged { round: 0 },
    };
    let initial = initial_states(&protocol, trace.scenario.n, trace.scenario.seed);
    if initial != trace.initial {
        return ReplayOutcome::Diverged { round: 0 };
    }
    let mut states = initial;
    for t in 0..trace.scenario.horizon {
        let recorded = match trace.records.get(t as usize) {
            Some(r) => r,
            None => return ReplayOutcome::Diverged { round: t },
        };
        let next = trace
            .scenario
            .round_input(t)
            .and_then(|input| step(&protocol, &states, &input, t, trace.scenario.seed));
        match next {
            Ok((next, record)) if record == *recorded => states = next,
            _ => return ReplayOutcome::Diverged { round: t },
        }
    }
    if trace.records.len() as u64 != trace.scenario.horizon {
        return ReplayOutcome::Diverged {
            round: trace.scenario.horizon,
        };
    }
    ReplayOutcome::Identical
}

//! Oblivious topology and signal adversaries.
//!
//! An adversary is a function of the round, the population size and a
//! per-round random substream; it never looks at node states.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::SignalId;
use crate::sim::Snapshot;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdversaryError {
    #[error("scripted adversary has {len} rounds, round {t} requested")]
    ScriptExhausted { t: u64, len: usize },
    #[error("period must be at least 1")]
    ZeroPeriod,
    #[error("edge probability {0} outside [0, 1]")]
    BadProbability(String),
    #[error("fixed witness {node} is not a node of a {n}-node network")]
    WitnessOutOfRange { node: usize, n: usize },
    #[error("signal {signal} exceeds k = {k}")]
    SignalOutOfRange { signal: SignalId, k: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy")]
pub enum TopologyAdversary {
    StaticComplete,
    StaticRing,
    /// Uniform random spanning tree plus each other edge with `edge_prob`.
    RandomConnected {
        edge_prob: f64,
    },
    /// Star centered on node `t mod n`.
    RotatingStar,
    /// Complete graph for `period` rounds, then a path with the current
    /// witnesses packed at one end for `period` rounds, and so on.
    EccentricityFlip {
        period: u64,
    },
    Scripted {
        rounds: Vec<Vec<(usize, usize)>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy")]
pub enum WitnessPolicy {
    FixedSingle {
        node: usize,
    },
    RandomSingle,
    /// Each node independently with probability 1/2, redrawn until nonempty.
    RandomSubset,
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedSignal {
    pub signal: SignalId,
    #[serde(default)]
    pub witnesses: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy")]
pub enum SignalAdversary {
    Silent,
    /// ⊥ before `from_round`, `signal` from then on.
    Persistent {
        signal: SignalId,
        from_round: u64,
        witness_policy: WitnessPolicy,
    },
    /// `first` and `second` in alternating blocks of `period` rounds.
    Alternating {
        first: SignalId,
        second: SignalId,
        period: u64,
        witness_policy: WitnessPolicy,
    },
    /// `signal` during `[from_round, until_round)`, ⊥ otherwise.
    Window {
        signal: SignalId,
        from_round: u64,
        until_round: u64,
        witness_policy: WitnessPolicy,
    },
    Scripted {
        rounds: Vec<ScriptedSignal>,
    },
}

impl TopologyAdversary {
    pub fn validate(&self) -> Result<(), AdversaryError> {
        match self {
            TopologyAdversary::RandomConnected { edge_prob }
                if !(0.0..=1.0).contains(edge_prob) =>
            {
                Err(AdversaryError::BadProbability(edge_prob.to_string()))
            }
            TopologyAdversary::EccentricityFlip { period: 0 } => Err(AdversaryError::ZeroPeriod),
            _ => Ok(()),
        }
    }

    /// The snapshot for round `t`. `witnesses` is this round's witness set,
    /// which only [`TopologyAdversary::EccentricityFlip`] consults.
    pub fn next<R: Rng + ?Sized>(
        &self,
        t: u64,
        n: usize,
        witnesses: &[usize],
        rng: &mut R,
    ) -> Result<Snapshot, AdversaryError> {
        Ok(match self {
            TopologyAdversary::StaticComplete => Snapshot::complete(n),
            TopologyAdversary::StaticRing => ring(n),
            TopologyAdversary::RandomConnected { edge_prob } => {
                random_connected(n, *edge_prob, rng)
            }
            TopologyAdversary::RotatingStar => {
                let center = (t % n as u64) as usize;
                Snapshot::from_edges(n, (0..n).filter(|&v| v != center).map(|v| (center, v)))
            }
            TopologyAdversary::EccentricityFlip { period } => {
                if (t / (*period).max(1)).is_multiple_of(2) {
                    Snapshot::complete(n)
                } else {
                    path_from_witnesses(n, witnesses)
                }
            }
            TopologyAdversary::Scripted { rounds } => {
                let edges = rounds
                    .get(t as usize)
                    .ok_or(AdversaryError::ScriptExhausted {
                        t,
                        len: rounds.len(),
                    })?;
                Snapshot::from_edges(n, edges.iter().copied())
            }
        })
    }
}

fn ring(n: usize) -> Snapshot {
    if n <= 2 {
        return Snapshot::from_edges(n, (1..n).map(|v| (0, v)));
    }
    Snapshot::from_edges(n, (0..n).map(|v| (v, (v + 1) % n)))
}

fn path_from_witnesses(n: usize, witnesses: &[usize]) -> Snapshot {
    let front: BTreeSet<usize> = witnesses.iter().copied().filter(|&v| v < n).collect();
    let order: Vec<usize> = front
        .iter()
        .copied()
        .chain((0..n).filter(|v| !front.contains(v)))
        .collect();
    Snapshot::from_edges(n, order.windows(2).map(|w| (w[0], w[1])))
}

/// Decodes a uniformly random Prüfer sequence into a labeled spanning tree,
/// then adds every remaining pair independently with probability `p`.
fn random_connected<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Snapshot {
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    if n >= 2 {
        let code: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
        let mut degree = vec![1usize; n];
        for &v in &code {
            degree[v] += 1;
        }
        let mut leaves: BTreeSet<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        for &v in &code {
            let leaf = leaves
                .pop_first()
                .expect("Prüfer decoding always has a leaf");
            edges.push((leaf, v));
            degree[v] -= 1;
            if degree[v] == 1 {
                leaves.insert(v);
            }
        }
        let last: Vec<usize> = leaves.into_iter().collect();
        edges.push((last[0], last[1]));
    }
    if p > 0.0 {
        let tree: BTreeSet<(usize, usize)> =
            edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        for a in 0..n {
            for b in a + 1..n {
                if !tree.contains(&(a, b)) && rng.random_bool(p) {
                    edges.push((a, b));
                }
            }
        }
    }
    Snapshot::from_edges(n, edges)
}

impl WitnessPolicy {
    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        match self {
            WitnessPolicy::FixedSingle { node } => vec![*node],
            WitnessPolicy::RandomSingle => vec![rng.random_range(0..n)],
            WitnessPolicy::RandomSubset => loop {
                let subset: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
                if !subset.is_empty() {
                    break subset;
                }
            },
            WitnessPolicy::All => (0..n).collect(),
        }
    }
}

impl SignalAdversary {
    pub fn validate(&self, n: usize, k: u32) -> Result<(), AdversaryError> {
        let check_signal = |signal: SignalId| {
            if signal.0 > k {
                Err(AdversaryError::SignalOutOfRange { signal, k })
            } else {
                Ok(())
            }
        };
        let check_policy = |policy: &WitnessPolicy| match policy {
            WitnessPolicy::FixedSingle { node } if *node >= n => {
                Err(AdversaryError::WitnessOutOfRange { node: *node, n })
            }
            _ => Ok(()),
        };
        match self {
            SignalAdversary::Silent => Ok(()),
            SignalAdversary::Persistent {
                signal,
                witness_policy,
                ..
            }
            | SignalAdversary::Window {
                signal,
                witness_policy,
                ..
            } => {
                check_signal(*signal)?;
                check_policy(witness_policy)
            }
            SignalAdversary::Alternating {
                first,
                second,
                period,
                witness_policy,
            } => {
                if *period == 0 {
                    return Err(AdversaryError::ZeroPeriod);
                }
                check_signal(*first)?;
                check_signal(*second)?;
                check_policy(witness_policy)
            }
            SignalAdversary::Scripted { rounds } => {
                for round in rounds {
                    check_signal(round.signal)?;
                    if let Some(&node) = round.witnesses.iter().find(|&&v| v >= n) {
                        return Err(AdversaryError::WitnessOutOfRange { node, n });
                    }
                }
                Ok(())
            }
        }
    }

    /// The signal and sorted witness set for round `t`.
    pub fn next<R: Rng + ?Sized>(
        &self,
        t: u64,
        n: usize,
        rng: &mut R,
    ) -> Result<(SignalId, Vec<usize>), AdversaryError> {
        let (signal, policy) = match self {
            SignalAdversary::Silent => return Ok((SignalId::BOT, Vec::new())),
            SignalAdversary::Persistent {
                signal,
                from_round,
                witness_policy,
            } => (
                if t >= *from_round {
                    *signal
                } else {
                    SignalId::BOT
                },
                witness_policy,
            ),
            SignalAdversary::Alternating {
                first,
                second,
                period,
                witness_policy,
            } => {
                let block = t / (*period).max(1);
                (
                    if block.is_multiple_of(2) {
                        *first
                    } else {
                        *second
                    },
                    witness_policy,
                )
            }
            SignalAdversary::Window {
                signal,
                from_round,
                until_round,
                witness_policy,
            } => {
                let active = t >= *from_round && t < *until_round;
                (if active { *signal } else { SignalId::BOT }, witness_policy)
            }
            SignalAdversary::Scripted { rounds } => {
                let round = rounds
                    .get(t as usize)
                    .ok_or(AdversaryError::ScriptExhausted {
                        t,
                        len: rounds.len(),
                    })?;
                let mut witnesses = round.witnesses.clone();
                witnesses.sort_unstable();
                witnesses.dedup();
                return Ok((round.signal, witnesses));
            }
        };
        if signal.is_bot() {
            return Ok((signal, Vec::new()));
        }
        let mut witnesses = policy.draw(n, rng);
        witnesses.sort_unstable();
        witnesses.dedup();
        Ok((signal, witnesses))
    }

    /// The signal that is persistent from some round on, if this strategy
    /// declares one.
    pub fn persistent_phase(&self) -> Option<(SignalId, u64)> {
        match self {
            SignalAdversary::Silent => Some((SignalId::BOT, 0)),
            SignalAdversary::Persistent {
                signal, from_round, ..
            } => Some((*signal, *from_round)),
            SignalAdversary::Window { until_round, .. } => Some((SignalId::BOT, *until_round)),
            SignalAdversary::Alternating { first, second, .. } if first == second => {
                Some((*first, 0))
            }
            SignalAdversary::Alternating { .. } | SignalAdversary::Scripted { .. } => None,
        }
    }
}

//! The per-node state machine: initialization, message composition and the
//! round transition, for the deterministic, know-n and randomized variants.
//!
//! Every function here is pure. Nodes are anonymous: nothing in this module
//! sees a node index, and the transition reads its inbox only through the
//! maxima it computes, so neither sender identity nor delivery order can
//! influence the result.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{ColorId, Instance, InstanceError, SignalId};

/// Node phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    /// Not participating in a broadcast; ttl is zero.
    Reset,
    /// Forwarding a broadcast while the timer counts up to max_ttl.
    Set,
    /// Believes its color is final for the current broadcast.
    Locked,
}

impl Phase {
    pub fn code(self) -> &'static str {
        match self {
            Phase::Reset => "R",
            Phase::Set => "S",
            Phase::Locked => "L",
        }
    }

    pub fn from_code(code: &str) -> Option<Phase> {
        match code {
            "R" => Some(Phase::Reset),
            "S" => Some(Phase::Set),
            "L" => Some(Phase::Locked),
            _ => None,
        }
    }
}

/// The seven protocol variables of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeState {
    pub signal: SignalId,
    pub color: ColorId,
    pub phase: Phase,
    pub source: bool,
    pub max_ttl: u64,
    pub ttl: u64,
    pub timer: u64,
}

impl NodeState {
    /// Checks the per-node invariants, returning the first broken one.
    pub fn check(&self) -> Result<(), &'static str> {
        if self.max_ttl < 2 || !self.max_ttl.is_power_of_two() {
            return Err("max_ttl must be a power of two of at least 2");
        }
        if self.timer >= self.max_ttl {
            return Err("timer must be below max_ttl");
        }
        if (self.phase == Phase::Reset) != (self.ttl == 0) {
            return Err("phase is Reset iff ttl is 0");
        }
        if self.ttl > self.max_ttl {
            return Err("ttl must not exceed max_ttl");
        }
        if self.source != (self.ttl == self.max_ttl) {
            return Err("source iff ttl equals max_ttl");
        }
        if self.phase == Phase::Reset && !self.signal.is_bot() {
            return Err("a Reset node holds no signal");
        }
        Ok(())
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, c{}, {:?}, {}, {}, {}, {})",
            self.signal, self.color, self.phase, self.source, self.max_ttl, self.ttl, self.timer
        )
    }
}

/// What a node broadcasts to every current neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Message {
    Reset {
        max_ttl: u64,
    },
    Set {
        signal: SignalId,
        max_ttl: u64,
        ttl: u64,
        timer: u64,
    },
    Locked {
        signal: SignalId,
        max_ttl: u64,
        ttl: u64,
    },
}

impl Message {
    pub fn max_ttl(&self) -> u64 {
        match *self {
            Message::Reset { max_ttl }
            | Message::Set { max_ttl, .. }
            | Message::Locked { max_ttl, .. } => max_ttl,
        }
    }
}

/// Which algorithm a node runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Deterministic,
    /// Nodes know the population size and start at the first power of two ≥ n.
    KnowN(u64),
    Randomized,
}

/// When the randomized variant draws a fresh color.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resample {
    /// Only when a write actually changes the signal value.
    #[default]
    OnChange,
    /// On every signal write, even an unchanged one. Experimental; colors
    /// of non-source nodes then never settle.
    OnWrite,
}

/// Deliberate protocol mutations used to check that the invariant checker
/// notices broken implementations.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fault {
    /// Forward the largest received ttl without decrementing it.
    SkipTtlDecrement,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("the {0:?} variant needs a homogeneous instance")]
    NotHomogeneous(Variant),
    #[error("know-n needs n >= 2, got {0}")]
    PopulationTooSmall(u64),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// A source of independent uniform draws in `[0, 1)`.
pub trait UniformSource {
    fn next_unit(&mut self) -> f64;
}

impl<R: rand::RngCore + ?Sized> UniformSource for R {
    fn next_unit(&mut self) -> f64 {
        rand::Rng::random::<f64>(self)
    }
}

/// Replays a fixed list of draws; panics when it runs dry.
#[derive(Debug, Clone, Default)]
pub struct ScriptedUniforms(pub VecDeque<f64>);

impl ScriptedUniforms {
    pub fn new(draws: impl IntoIterator<Item = f64>) -> Self {
        ScriptedUniforms(draws.into_iter().collect())
    }
}

impl UniformSource for ScriptedUniforms {
    fn next_unit(&mut self) -> f64 {
        self.0
            .pop_front()
            .expect("scripted uniform draws exhausted")
    }
}

/// How colors are assigned when a node writes its signal.
#[derive(Debug, Clone, PartialEq, Eq)]
enum ColorRule {
    /// One color per signal, indexed by signal.
    Fixed(Vec<ColorId>),
    Sampled(Resample),
}

/// A protocol variant bound to the instance it solves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Protocol {
    variant: Variant,
    instance: Instance,
    rule: ColorRule,
    fault: Option<Fault>,
}

impl Protocol {
    /// Deterministic and know-n variants require a homogeneous instance.
    pub fn new(variant: Variant, instance: Instance) -> Result<Self, ProtocolError> {
        let rule = match variant {
            Variant::Randomized => ColorRule::Sampled(Resample::OnChange),
            Variant::Deterministic | Variant::KnowN(_) => {
                if let Variant::KnowN(n) = variant {
                    if n < 2 {
                        return Err(ProtocolError::PopulationTooSmall(n));
                    }
                }
                if !instance.is_homogeneous() {
                    return Err(ProtocolError::NotHomogeneous(variant));
                }
                ColorRule::Fixed(
                    instance
                        .signals()
                        .map(|s| instance.homogeneous_color(s))
                        .collect::<Result<_, _>>()?,
                )
            }
        };
        Ok(Protocol {
            variant,
            instance,
            rule,
            fault: None,
        })
    }

    /// The deterministic machine run on an arbitrary instance, taking each
    /// signal's highest-weight color (lowest index on ties) as its color.
    /// This is what the impossibility demonstration executes.
    pub fn deterministic_argmax(instance: Instance) -> Self {
        let colors = instance
            .signals()
            .map(|s| instance.response(s).argmax())
            .collect();
        Protocol {
            variant: Variant::Deterministic,
            instance,
            rule: ColorRule::Fixed(colors),
            fault: None,
        }
    }

    /// Selects the randomized resampling policy. No effect on other variants.
    pub fn with_resample(mut self, policy: Resample) -> Self {
        if let ColorRule::Sampled(_) = self.rule {
            self.rule = ColorRule::Sampled(policy);
        }
        self
    }

    #[doc(hidden)]
    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self.rule, ColorRule::Sampled(_))
    }

    pub fn resample(&self) -> Resample {
        match self.rule {
            ColorRule::Sampled(policy) => policy,
            ColorRule::Fixed(_) => Resample::OnChange,
        }
    }

    /// The color deterministic variants assign to `signal`, if fixed.
    pub fn fixed_color(&self, signal: SignalId) -> Option<ColorId> {
        match &self.rule {
            ColorRule::Fixed(colors) => Some(colors[signal.index()]),
            ColorRule::Sampled(_) => None,
        }
    }

    /// Initial max_ttl: 2, or the first power of two ≥ n under know-n.
    pub fn initial_max_ttl(&self) -> u64 {
        match self.variant {
            Variant::KnowN(n) => n.next_power_of_two().max(2),
            _ => 2,
        }
    }

    /// Initial node state. The randomized variant draws its color from r(⊥).
    pub fn init_state(&self, uniforms: Option<&mut dyn UniformSource>) -> NodeState {
        let max_ttl = self.initial_max_ttl();
        let color = match &self.rule {
            ColorRule::Fixed(colors) => colors[SignalId::BOT.index()],
            ColorRule::Sampled(_) => {
                let u = uniforms
                    .expect("randomized variant needs a uniform source")
                    .next_unit();
                self.instance.response(SignalId::BOT).sample(u)
            }
        };
        NodeState {
            signal: SignalId::BOT,
            color,
            phase: Phase::Set,
            source: true,
            max_ttl,
            ttl: max_ttl,
            timer: 1,
        }
    }

    /// Writes `signal` and updates the color at one of the color sites.
    fn write_signal(
        &self,
        st: &mut NodeState,
        signal: SignalId,
        uniforms: &mut Option<&mut dyn UniformSource>,
    ) {
        let before = st.signal;
        st.signal = signal;
        match &self.rule {
            ColorRule::Fixed(colors) => st.color = colors[signal.index()],
            ColorRule::Sampled(policy) => {
                if before != signal || *policy == Resample::OnWrite {
                    let u = uniforms
                        .as_deref_mut()
                        .expect("randomized variant needs a uniform source")
                        .next_unit();
                    st.color = self.instance.response(signal).sample(u);
                }
            }
        }
    }

    /// One round of the node algorithm.
    ///
    /// `received` is the multiset of messages from this round's neighbors
    /// (the node's own message is not included). `witnessed` is the signal
    /// the node perceives this round, or `None` when it perceives nothing;
    /// it must never be `Some(⊥)`. `uniforms` must be present for the
    /// randomized variant and may be `None` otherwise.
    pub fn transition(
        &self,
        state: &NodeState,
        received: &[Message],
        witnessed: Option<SignalId>,
        mut uniforms: Option<&mut dyn UniformSource>,
    ) -> NodeState {
        debug_assert!(
            self.fault.is_some() || state.check().is_ok(),
            "input state {state} violates {:?}",
            state.check()
        );
        debug_assert!(witnessed.is_none_or(|s| !s.is_bot()), "witnessed ⊥");
        let mut st = *state;

        // A larger max_ttl anywhere in the neighborhood forces a full reset.
        if let Some(m_star) = received.iter().map(Message::max_ttl).max() {
            if m_star > st.max_ttl {
                self.write_signal(&mut st, SignalId::BOT, &mut uniforms);
                st.phase = Phase::Reset;
                st.source = false;
                st.max_ttl = m_star;
                st.ttl = 0;
                st.timer = 0;
            }
        }

        // Locked neighbors at our max_ttl mean the broadcast reach was too
        // small: double it and originate a new broadcast.
        let mut locked: Vec<(SignalId, u64)> = received
            .iter()
            .filter_map(|m| match *m {
                Message::Locked {
                    signal,
                    max_ttl,
                    ttl,
                } if max_ttl == st.max_ttl => Some((signal, ttl)),
                _ => None,
            })
            .collect();
        if !locked.is_empty() && st.phase != Phase::Locked {
            st.phase = Phase::Set;
            st.source = true;
            st.max_ttl *= 2;
            st.ttl = st.max_ttl;
            st.timer = 0;
            locked.clear();
        }

        // Join Set neighbors at our max_ttl and catch up with their timer.
        let set: Vec<(SignalId, u64, u64)> = received
            .iter()
            .filter_map(|m| match *m {
                Message::Set {
                    signal,
                    max_ttl,
                    ttl,
                    timer,
                } if max_ttl == st.max_ttl => Some((signal, ttl, timer)),
                _ => None,
            })
            .collect();
        if !set.is_empty() && st.phase != Phase::Locked {
            st.phase = Phase::Set;
            let t_star = set.iter().map(|&(_, _, timer)| timer).max().unwrap_or(0);
            st.timer = st.timer.max(t_star);
        }

        if st.phase != Phase::Reset {
            st.timer = (st.timer + 1) % st.max_ttl;
            if st.timer == 0 {
                st.phase = Phase::Locked;
                match witnessed {
                    Some(s) => {
                        self.write_signal(&mut st, s, &mut uniforms);
                        st.source = true;
                    }
                    None => st.source = false,
                }
            }

            if !st.source {
                let candidates = locked
                    .iter()
                    .copied()
                    .chain(set.iter().map(|&(signal, ttl, _)| (signal, ttl)))
                    .chain(std::iter::once((st.signal, st.ttl)));
                let (ttl_star, signal_star) = candidates.fold((0, SignalId::BOT), |best, cand| {
                    // Largest ttl wins; among equal ttl the largest signal.
                    if (cand.1, cand.0) > (best.0, best.1) {
                        (cand.1, cand.0)
                    } else {
                        best
                    }
                });
                debug_assert!(
                    self.fault.is_some() || ttl_star >= 1,
                    "no positive ttl to forward from {state}"
                );
                st.ttl = match self.fault {
                    Some(Fault::SkipTtlDecrement) => ttl_star,
                    None => ttl_star.saturating_sub(1),
                };
                if st.ttl == 0 {
                    self.write_signal(&mut st, SignalId::BOT, &mut uniforms);
                    st.phase = Phase::Reset;
                    st.timer = 0;
                } else {
                    self.write_signal(&mut st, signal_star, &mut uniforms);
                }
            } else {
                st.ttl = st.max_ttl;
            }
        }

        if st.phase == Phase::Reset {
            if let Some(s) = witnessed {
                self.write_signal(&mut st, s, &mut uniforms);
                st.phase = Phase::Set;
                st.source = true;
                st.ttl = st.max_ttl;
                st.timer = 0;
            }
        }

        debug_assert!(
            self.fault.is_some() || st.check().is_ok(),
            "output state {st} violates {:?}",
            st.check()
        );
        st
    }
}

/// The message a node in `state` sends to every neighbor.
pub fn compose_message(state: &NodeState) -> Message {
    match state.phase {
        Phase::Reset => Message::Reset {
            max_ttl: state.max_ttl,
        },
        Phase::Set => Message::Set {
            signal: state.signal,
            max_ttl: state.max_ttl,
            ttl: state.ttl,
            timer: state.timer,
        },
        Phase::Locked => Message::Locked {
            signal: state.signal,
            max_ttl: state.max_ttl,
            ttl: state.ttl,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Distribution;

    const BOT: SignalId = SignalId::BOT;
    const S1: SignalId = SignalId(1);

    fn two_color() -> Instance {
        Instance::homogeneous(2, &[ColorId(1), ColorId(2)]).unwrap()
    }

    fn det() -> Protocol {
        Protocol::new(Variant::Deterministic, two_color()).unwrap()
    }

    fn node(
        signal: u32,
        color: u32,
        phase: Phase,
        source: bool,
        max_ttl: u64,
        ttl: u64,
        timer: u64,
    ) -> NodeState {
        NodeState {
            signal: SignalId(signal),
            color: ColorId(color),
            phase,
            source,
            max_ttl,
            ttl,
            timer,
        }
    }

    #[test]
    fn init_matches_table() {
        let p = det();
        assert_eq!(p.init_state(None), node(0, 1, Phase::Set, true, 2, 2, 1));

        let seven = Protocol::new(Variant::KnowN(7), two_color()).unwrap();
        assert_eq!(
            seven.init_state(None),
            node(0, 1, Phase::Set, true, 8, 8, 1)
        );
        let eight = Protocol::new(Variant::KnowN(8), two_color()).unwrap();
        assert_eq!(
            eight.init_state(None),
            node(0, 1, Phase::Set, true, 8, 8, 1)
        );
        let two = Protocol::new(Variant::KnowN(2), two_color()).unwrap();
        assert_eq!(two.init_state(None).max_ttl, 2);
    }

    #[test]
    fn deterministic_variants_reject_mixed_instances() {
        let mixed = Instance::new(
            1,
            2,
            [
                (BOT, Distribution::parse(&["1", "0"]).unwrap()),
                (S1, Distribution::parse(&["1/2", "1/2"]).unwrap()),
            ],
        )
        .unwrap();
        assert_eq!(
            Protocol::new(Variant::Deterministic, mixed.clone()).unwrap_err(),
            ProtocolError::NotHomogeneous(Variant::Deterministic)
        );
        assert!(matches!(
            Protocol::new(Variant::KnowN(4), mixed.clone()),
            Err(ProtocolError::NotHomogeneous(_))
        ));
        assert!(Protocol::new(Variant::Randomized, mixed).is_ok());
        assert_eq!(
            Protocol::new(Variant::KnowN(1), two_color()).unwrap_err(),
            ProtocolError::PopulationTooSmall(1)
        );
    }

    #[test]
    fn compose_message_examples() {
        assert_eq!(
            compose_message(&node(0, 1, Phase::Reset, false, 4, 0, 0)),
            Message::Reset { max_ttl: 4 }
        );
        assert_eq!(
            compose_message(&det().init_state(None)),
            Message::Set {
                signal: BOT,
                max_ttl: 2,
                ttl: 2,
                timer: 1
            }
        );
        assert_eq!(
            compose_message(&node(1, 2, Phase::Locked, false, 8, 5, 3)),
            Message::Locked {
                signal: S1,
                max_ttl: 8,
                ttl: 5
            }
        );
    }

    #[test]
    fn reset_witness_becomes_source() {
        let out = det().transition(
            &node(0, 1, Phase::Reset, false, 2, 0, 0),
            &[],
            Some(S1),
            None,
        );
        assert_eq!(out, node(1, 2, Phase::Set, true, 2, 2, 0));
    }

    #[test]
    fn isolated_initial_node_locks() {
        let out = det().transition(&det().init_state(None), &[], None, None);
        assert_eq!(out, node(0, 1, Phase::Locked, false, 2, 1, 0));
    }

    #[test]
    fn larger_max_ttl_resets_then_joins() {
        let msg = Message::Set {
            signal: S1,
            max_ttl: 4,
            ttl: 4,
            timer: 0,
        };
        let out = det().transition(&node(0, 1, Phase::Set, false, 2, 1, 1), &[msg], None, None);
        assert_eq!(out, node(1, 2, Phase::Set, false, 4, 3, 1));
    }

    #[test]
    fn locked_neighbor_doubles_max_ttl() {
        let msg = Message::Locked {
            signal: S1,
            max_ttl: 2,
            ttl: 1,
        };
        let out = det().transition(&node(1, 2, Phase::Set, false, 2, 1, 1), &[msg], None, None);
        assert_eq!(out, node(1, 2, Phase::Set, true, 4, 4, 1));
    }

    #[test]
    fn locked_node_ignores_locked_neighbors() {
        let msg = Message::Locked {
            signal: S1,
            max_ttl: 4,
            ttl: 4,
        };
        let out = det().transition(
            &node(1, 2, Phase::Locked, false, 4, 2, 1),
            &[msg],
            None,
            None,
        );
        // timer 1 -> 2; ttl follows the source's 4 - 1.
        assert_eq!(out, node(1, 2, Phase::Locked, false, 4, 3, 2));
    }

    #[test]
    fn ties_prefer_real_signal_over_bot() {
        let msgs = [
            Message::Set {
                signal: BOT,
                max_ttl: 4,
                ttl: 3,
                timer: 1,
            },
            Message::Set {
                signal: SignalId(2),
                max_ttl: 4,
                ttl: 3,
                timer: 1,
            },
            Message::Set {
                signal: S1,
                max_ttl: 4,
                ttl: 3,
                timer: 1,
            },
        ];
        let inst = Instance::homogeneous(3, &[ColorId(1), ColorId(2), ColorId(3)]).unwrap();
        let p = Protocol::new(Variant::Deterministic, inst).unwrap();
        let out = p.transition(&node(0, 1, Phase::Set, false, 4, 1, 0), &msgs, None, None);
        assert_eq!(out, node(2, 3, Phase::Set, false, 4, 2, 2));
    }

    #[test]
    fn expiring_ttl_resets_node() {
        let msgs = [Message::Set {
            signal: S1,
            max_ttl: 4,
            ttl: 1,
            timer: 1,
        }];
        let out = det().transition(&node(1, 2, Phase::Set, false, 4, 1, 1), &msgs, None, None);
        assert_eq!(out, node(0, 1, Phase::Reset, false, 4, 0, 0));
    }

    #[test]
    fn randomized_samples_by_cdf_inversion() {
        let inst = Instance::new(
            1,
            2,
            [
                (BOT, Distribution::parse(&["1", "0"]).unwrap()),
                (S1, Distribution::parse(&["1/4", "3/4"]).unwrap()),
            ],
        )
        .unwrap();
        let p = Protocol::new(Variant::Randomized, inst).unwrap();
        let start = node(0, 1, Phase::Reset, false, 2, 0, 0);
        let mut low = ScriptedUniforms::new([0.10]);
        let out = p.transition(&start, &[], Some(S1), Some(&mut low));
        assert_eq!(out, node(1, 1, Phase::Set, true, 2, 2, 0));
        let mut high = ScriptedUniforms::new([0.80]);
        let out = p.transition(&start, &[], Some(S1), Some(&mut high));
        assert_eq!(out, node(1, 2, Phase::Set, true, 2, 2, 0));
    }

    #[test]
    fn randomized_keeps_color_when_signal_unchanged() {
        let inst = Instance::new(
            1,
            2,
            [
                (BOT, Distribution::parse(&["1/2", "1/2"]).unwrap()),
                (S1, Distribution::parse(&["1/4", "3/4"]).unwrap()),
            ],
        )
        .unwrap();
        let on_change = Protocol::new(Variant::Randomized, inst.clone()).unwrap();
        let locked = node(1, 1, Phase::Locked, false, 4, 2, 1);
        let msgs = [Message::Locked {
            signal: S1,
            max_ttl: 4,
            ttl: 4,
        }];
        // No draws available: any sample attempt would panic.
        let mut none = ScriptedUniforms::default();
        let out = on_change.transition(&locked, &msgs, None, Some(&mut none));
        assert_eq!(out.color, ColorId(1));

        let on_write = on_change.clone().with_resample(Resample::OnWrite);
        let mut draw = ScriptedUniforms::new([0.9]);
        let out = on_write.transition(&locked, &msgs, None, Some(&mut draw));
        assert_eq!(out.color, ColorId(2));
    }

    #[test]
    fn argmax_machine_uses_heaviest_color() {
        let inst = Instance::new(
            1,
            2,
            [
                (BOT, Distribution::parse(&["1", "0"]).unwrap()),
                (S1, Distribution::parse(&["1/4", "3/4"]).unwrap()),
            ],
        )
        .unwrap();
        let p = Protocol::deterministic_argmax(inst);
        assert_eq!(p.fixed_color(S1), Some(ColorId(2)));
        assert_eq!(p.fixed_color(BOT), Some(ColorId(1)));
    }

    #[test]
    fn fault_breaks_decrement() {
        let p = det().with_fault(Fault::SkipTtlDecrement);
        let msgs = [Message::Set {
            signal: S1,
            max_ttl: 4,
            ttl: 3,
            timer: 1,
        }];
        let out = p.transition(&node(1, 2, Phase::Set, false, 4, 1, 1), &msgs, None, None);
        assert_eq!(out.ttl, 3);
    }

    #[test]
    fn state_check_catches_each_rule() {
        assert!(node(0, 1, Phase::Set, true, 6, 6, 1).check().is_err());
        assert!(node(0, 1, Phase::Set, true, 4, 4, 4).check().is_err());
        assert!(node(0, 1, Phase::Set, false, 4, 0, 1).check().is_err());
        assert!(node(0, 1, Phase::Set, false, 4, 5, 1).check().is_err());
        assert!(node(0, 1, Phase::Set, false, 4, 4, 1).check().is_err());
        assert!(node(1, 1, Phase::Reset, false, 4, 0, 0).check().is_err());
        assert!(node(0, 1, Phase::Reset, false, 4, 0, 0).check().is_ok());
    }
}

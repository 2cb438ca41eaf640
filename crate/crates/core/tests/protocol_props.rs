use proptest::prelude::*;

use selforg_core::protocol::ScriptedUniforms;
use selforg_core::*;

const K: u32 = 3;
const ELL: u32 = 3;

fn instance() -> Instance {
    Instance::homogeneous(ELL, &[ColorId(1), ColorId(3), ColorId(2), ColorId(3)]).unwrap()
}

/// Any state satisfying the per-node invariants, with colors consistent
/// with the deterministic protocol over [`instance`].
fn state() -> impl Strategy<Value = NodeState> {
    (
        1u32..7,
        0u32..=K,
        prop::sample::select(vec![Phase::Reset, Phase::Set, Phase::Locked]),
        any::<u64>(),
        any::<u64>(),
    )
        .prop_map(|(e, signal, phase, a, b)| {
            let max_ttl = 1u64 << e;
            let timer = a % max_ttl;
            let (signal, ttl) = match phase {
                Phase::Reset => (SignalId::BOT, 0),
                _ => (SignalId(signal), 1 + b % max_ttl),
            };
            let p = Protocol::new(Variant::Deterministic, instance()).unwrap();
            NodeState {
                signal,
                color: p.fixed_color(signal).unwrap(),
                phase,
                source: ttl == max_ttl,
                max_ttl,
                ttl,
                timer,
            }
        })
}

fn inbox() -> impl Strategy<Value = Vec<Message>> {
    prop::collection::vec(state().prop_map(|s| compose_message(&s)), 0..6)
}

fn witness() -> impl Strategy<Value = Option<SignalId>> {
    prop::option::of((1u32..=K).prop_map(SignalId))
}

fn deterministic() -> Protocol {
    Protocol::new(Variant::Deterministic, instance()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn transition_preserves_node_invariants(s in state(), msgs in inbox(), w in witness()) {
        let next = deterministic().transition(&s, &msgs, w, None);
        prop_assert_eq!(next.check(), Ok(()), "{} -> {}", s, next);
        prop_assert!(next.signal.0 <= K && next.color.0 >= 1 && next.color.0 <= ELL);
    }

    #[test]
    fn max_ttl_never_decreases(s in state(), msgs in inbox(), w in witness()) {
        let next = deterministic().transition(&s, &msgs, w, None);
        let largest = msgs.iter().map(Message::max_ttl).chain([s.max_ttl]).max().unwrap();
        prop_assert!(next.max_ttl >= s.max_ttl);
        // It either adopts the largest seen value or doubles it once.
        prop_assert!(next.max_ttl == largest || next.max_ttl == 2 * largest, "{} -> {}", s, next);
    }

    #[test]
    fn reset_nodes_show_the_bot_color(s in state(), msgs in inbox(), w in witness()) {
        let next = deterministic().transition(&s, &msgs, w, None);
        if next.phase == Phase::Reset {
            prop_assert_eq!(next.signal, SignalId::BOT);
            prop_assert_eq!(next.color, ColorId(1));
        }
    }

    #[test]
    fn order_and_multiplicity_of_messages_do_not_matter(s in state(), msgs in inbox(), w in witness(), rot in 0usize..6) {
        let p = deterministic();
        let base = p.transition(&s, &msgs, w, None);
        let mut shuffled = msgs.clone();
        if !shuffled.is_empty() {
            let r = rot % shuffled.len();
            shuffled.rotate_left(r);
            shuffled.push(shuffled[0]);
        }
        prop_assert_eq!(p.transition(&s, &shuffled, w, None), base);
    }

    #[test]
    fn randomized_equals_deterministic_on_homogeneous(
        s in state(),
        msgs in inbox(),
        w in witness(),
        draws in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        let det = deterministic().transition(&s, &msgs, w, None);
        let rnd = Protocol::new(Variant::Randomized, instance()).unwrap();
        let mut uniforms = ScriptedUniforms::new(draws);
        prop_assert_eq!(rnd.transition(&s, &msgs, w, Some(&mut uniforms)), det);
    }

    #[test]
    fn know_n_starts_at_the_covering_power_of_two(n in 2u64..5000) {
        let p = Protocol::new(Variant::KnowN(n), instance()).unwrap();
        let m = p.initial_max_ttl();
        prop_assert!(m.is_power_of_two() && m >= n && m < 2 * n);
        prop_assert_eq!(p.init_state(None).max_ttl, m);
    }

    #[test]
    fn randomized_colors_follow_the_written_signal(u in 0.0f64..1.0, w in 1u32..=K) {
        // A Locked source that witnesses a new signal samples exactly one color.
        let inst = Instance::new(
            K,
            ELL,
            (0..=K).map(|s| (SignalId(s), Distribution::parse(&["1/3", "1/3", "1/3"]).unwrap())),
        )
        .unwrap();
        let p = Protocol::new(Variant::Randomized, inst.clone()).unwrap();
        let s = NodeState { signal: SignalId::BOT, color: ColorId(1), phase: Phase::Set, source: false, max_ttl: 2, ttl: 1, timer: 1 };
        let mut uniforms = ScriptedUniforms::new([u]);
        let next = p.transition(&s, &[], Some(SignalId(w)), Some(&mut uniforms));
        prop_assert_eq!(next.signal, SignalId(w));
        prop_assert_eq!(next.color, inst.response(SignalId(w)).sample(u));
        prop_assert!(uniforms.0.is_empty());
    }
}

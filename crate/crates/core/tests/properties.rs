use num_complex::Complex64;
use proptest::prelude::*;

use tristage::channel::{estimate_qber, Channel, ChannelConfig};
use tristage::encoding::{decode_q, deframe, encode_q, frame, BitString, RedundancyFactor};
use tristage::quantum::{self, inner_product, QubitState, Unitary2};
use tristage::rng::stream;
use tristage::session::{run_session, Outcome, SessionConfig};
use tristage::transforms::{apply_separable, apply_separable_dagger, KeyPolicy, SeparableTransform, SlotFactor};

fn qubit() -> impl Strategy<Value = QubitState> {
    (0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU).prop_map(|(t, p)| {
        QubitState::new(
            Complex64::new((t / 2.0).cos(), 0.0),
            Complex64::from_polar((t / 2.0).sin(), p),
        )
        .unwrap()
    })
}

fn factor() -> impl Strategy<Value = SlotFactor> {
    prop_oneof![
        (0.0..std::f64::consts::TAU).prop_map(SlotFactor::Rotation),
        Just(SlotFactor::PauliX),
        Just(SlotFactor::PauliY),
        Just(SlotFactor::PauliZ),
        Just(SlotFactor::Identity),
    ]
}

fn bits(max: usize) -> impl Strategy<Value = BitString> {
    prop::collection::vec(any::<bool>(), 1..=max).prop_map(BitString::new)
}

fn odd_r() -> impl Strategy<Value = RedundancyFactor> {
    prop_oneof![Just(1usize), Just(3), Just(5), Just(7)].prop_map(|r| RedundancyFactor::new(r).unwrap())
}

fn register_inner(a: &[QubitState], b: &[QubitState]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| inner_product(x, y)).product()
}

proptest! {
    #[test]
    fn separable_transforms_preserve_inner_products(
        (fs, a, b) in (1usize..6).prop_flat_map(|n| (
            prop::collection::vec(factor(), n),
            prop::collection::vec(qubit(), n),
            prop::collection::vec(qubit(), n),
        ))
    ) {
        let t = SeparableTransform::new(fs).unwrap();
        let (ua, ub) = (apply_separable(&t, &a).unwrap(), apply_separable(&t, &b).unwrap());
        prop_assert!((register_inner(&ua, &ub) - register_inner(&a, &b)).norm() < 1e-9);
    }

    #[test]
    fn dagger_undoes_transform(
        (fs, a) in (1usize..8).prop_flat_map(|n| (
            prop::collection::vec(factor(), n),
            prop::collection::vec(qubit(), n),
        ))
    ) {
        let t = SeparableTransform::new(fs).unwrap();
        let back = apply_separable_dagger(&t, &apply_separable(&t, &a).unwrap()).unwrap();
        for (x, y) in back.iter().zip(&a) {
            prop_assert!((x.alpha() - y.alpha()).norm() < 1e-9);
            prop_assert!((x.beta() - y.beta()).norm() < 1e-9);
        }
    }

    #[test]
    fn rotations_commute(t in -10.0f64..10.0, p in -10.0f64..10.0) {
        let (a, b) = (Unitary2::rotation(t), Unitary2::rotation(p));
        prop_assert!(a.mul(&b).max_abs_diff(&b.mul(&a)) < 1e-12);
    }

    #[test]
    fn unitary_keeps_state_normalized(s in qubit(), seed in any::<u64>()) {
        let u = quantum::random_unitary(&mut stream(seed, 0));
        prop_assert!((quantum::apply(&u, &s).norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn repetition_code_round_trips(x in bits(64), r in odd_r(), seed in any::<u64>()) {
        let q = encode_q(&x, r);
        prop_assert_eq!(q.len(), x.len() * r.get());
        prop_assert_eq!(decode_q(&q, r, &mut stream(seed, 0)).unwrap(), x);
    }

    #[test]
    fn majority_survives_minority_flips(x in bits(32), r in odd_r(), seed in any::<u64>()) {
        let mut q = encode_q(&x, r);
        let flip = Unitary2::pauli_x();
        for group in q.chunks_mut(r.get()) {
            for s in group.iter_mut().take(r.get() / 2) {
                *s = quantum::apply(&flip, s);
            }
        }
        prop_assert_eq!(decode_q(&q, r, &mut stream(seed, 0)).unwrap(), x);
    }

    #[test]
    fn frames_round_trip(auth in prop::collection::vec(any::<bool>(), 0..200), payload in bits(16), r in odd_r()) {
        let auth = BitString::new(auth);
        let f = frame(&auth, encode_q(&payload, RedundancyFactor::ONE), r).unwrap();
        let (got, rest) = deframe(&f, &mut stream(0, 0)).unwrap();
        prop_assert_eq!(got, auth);
        prop_assert_eq!(rest, f.payload_qubits);
    }

    #[test]
    fn bitstrings_round_trip_through_text_and_bytes(x in bits(100)) {
        let text = x.to_string();
        prop_assert_eq!(text.parse::<BitString>().unwrap(), x.clone());
        if x.len() % 8 == 0 {
            prop_assert_eq!(BitString::from_bytes(&x.to_bytes()), x);
        }
    }

    #[test]
    fn qber_is_a_symmetric_rate(a in bits(64), seed in any::<u64>()) {
        let b = BitString::random(a.len(), &mut stream(seed, 0));
        let (ab, ba) = (estimate_qber(&a, &b).unwrap(), estimate_qber(&b, &a).unwrap());
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab.rate));
        prop_assert_eq!(estimate_qber(&a, &a.complement()).unwrap().rate, 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn honest_sessions_recover_exactly(
        x in bits(24),
        seed in any::<u64>(),
        r in prop_oneof![Just(1usize), Just(3)],
        mixed in any::<bool>(),
    ) {
        let mut cfg = SessionConfig::new(x.clone(), seed);
        cfg.payload_redundancy = RedundancyFactor::new(r).unwrap();
        if mixed {
            cfg.key_policy = KeyPolicy::MixedValidated;
        }
        let res = run_session(&cfg, &mut Channel::new(ChannelConfig::honest(seed))).unwrap();
        match res.outcome {
            Outcome::Recovered { bits, bit_errors } => {
                prop_assert_eq!(bits, x);
                prop_assert_eq!(bit_errors, 0);
            }
            Outcome::Aborted { reason, step } => {
                prop_assert!(mixed, "rotation keys aborted with {:?} at {}", reason, step);
                prop_assert_eq!(reason, tristage::abort::AbortReason::NonCommutingKeys);
                prop_assert_eq!(step, 1);
            }
        }
    }
}

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use witnet_core::reputation::{
    apply_demurrage, DecayRate, EpochVerdict, ReputationLedger, ReputationScore, UnitFraction, SCALE,
};
use witnet_core::{HashDigest, ParticipantId};

fn pid(n: usize) -> ParticipantId {
    ParticipantId(HashDigest([n as u8 + 1; 32]))
}

#[test]
fn liar_pays_a_fifth_of_ten_to_the_honest_fulfiller() {
    let (liar, honest) = (pid(0), pid(1));
    let init = BTreeMap::from([(liar, ReputationScore::from_points(10))]);
    let flat = DecayRate::new(1.0).unwrap();
    let mut rep = ReputationLedger::with_initial_scores([liar, honest], flat, &init).unwrap();
    let verdict = EpochVerdict {
        honest: BTreeSet::from([honest]),
        dishonest: BTreeMap::from([(liar, 1.0)]),
        task_fulfillers: BTreeSet::from([honest]),
    };
    let report = rep.epoch_update(&verdict, UnitFraction::from_ratio(1, 5).unwrap(), 1).unwrap();
    assert_eq!(report.penalties, 2 * SCALE);
    assert_eq!(rep.score(&liar), ReputationScore::from_points(8));
    assert_eq!(rep.score(&honest), ReputationScore::from_points(3));
    assert_eq!(rep.total(), ReputationScore::from_points(11));
    assert!(rep.is_conserved());
}

/// Plain floating-point iteration of `x · D^(log10 x)` with a floor at one.
fn float_demurrage(start: f64, decay: f64, epochs: u32) -> f64 {
    let mut x = start;
    for _ in 0..epochs {
        if x > 1.0 {
            x = (x * decay.powf(x.log10())).max(1.0);
        }
    }
    x
}

#[test]
fn fixed_point_demurrage_tracks_float_iteration() {
    for start in [1u64, 2, 10, 100, 1000, 10_000, 123_456] {
        let mut s = ReputationScore::from_points(start);
        for e in 1..=500 {
            s = apply_demurrage(s, DecayRate::DEFAULT);
            let f = float_demurrage(start as f64, 0.99, e);
            assert!((s.to_f64() - f).abs() / f < 1e-9, "start {start} epoch {e}: {} vs {f}", s.to_f64());
        }
    }
}

#[test]
fn published_demurrage_cells() {
    // (start, epoch, published)
    let cells = [
        (10u64, 1u32, 9.90),
        (10, 500, 1.29),
        (100, 1, 98.01),
        (100, 25, 62.06),
        (100, 500, 1.67),
        (1000, 1, 970.29),
        (1000, 500, 2.17),
        (10_000, 25, 3851.53),
        (10_000, 500, 2.81),
    ];
    for (start, epoch, published) in cells {
        let mut s = ReputationScore::from_points(start);
        for _ in 0..epoch {
            s = apply_demurrage(s, DecayRate::DEFAULT);
        }
        let rel = (s.to_f64() - published).abs() / published;
        assert!(rel < 0.005, "({start}, {epoch}) = {} vs {published}", s.to_f64());
    }
}

#[derive(Debug, Clone)]
struct Round {
    roles: Vec<u8>,
    deviations: Vec<f64>,
}

fn round(n: usize) -> impl Strategy<Value = Round> {
    (prop::collection::vec(0u8..4, n), prop::collection::vec(0.0f64..=1.0, n))
        .prop_map(|(roles, deviations)| Round { roles, deviations })
}

proptest! {
    #[test]
    fn epoch_updates_conserve_the_total(
        starts in prop::collection::vec(prop::option::of(2u64..5000), 2..10),
        rounds in prop::collection::vec(round(10), 1..30),
        penalty in 0u64..=10,
        period in 1u32..4,
    ) {
        let n = starts.len();
        let init: BTreeMap<_, _> = starts
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|p| (pid(i), ReputationScore::from_points(p))))
            .collect();
        let mut rep = ReputationLedger::with_initial_scores((0..n).map(pid), DecayRate::DEFAULT, &init).unwrap();
        let total = rep.total();
        let rate = UnitFraction::from_ratio(penalty, 10).unwrap();
        for r in &rounds {
            let mut v = EpochVerdict::default();
            for i in 0..n {
                // 0 idle, 1 honest, 2 honest fulfiller, 3 dishonest
                match r.roles[i] {
                    1 => { v.honest.insert(pid(i)); }
                    2 => { v.honest.insert(pid(i)); v.task_fulfillers.insert(pid(i)); }
                    3 => { v.dishonest.insert(pid(i), r.deviations[i]); }
                    _ => {}
                }
            }
            let before: BTreeMap<_, _> = (0..n).map(|i| (pid(i), rep.score(&pid(i)))).collect();
            rep.epoch_update(&v, rate, period).unwrap();
            prop_assert!(rep.is_conserved());
            prop_assert_eq!(rep.total(), total);
            for i in 0..n {
                let s = rep.score(&pid(i));
                prop_assert!(s > ReputationScore::ZERO);
                // only fulfillers can gain
                if !v.task_fulfillers.contains(&pid(i)) {
                    prop_assert!(s <= before[&pid(i)]);
                }
            }
        }
    }

    #[test]
    fn demurrage_never_raises_or_crosses_neutral(units in (SCALE + 1)..(1_000_000 * SCALE), decay in 0.0f64..=1.0) {
        let s = ReputationScore::from_units(units);
        let next = apply_demurrage(s, DecayRate::new(decay).unwrap());
        prop_assert!(next <= s);
        prop_assert!(next >= ReputationScore::NEUTRAL);
    }
}

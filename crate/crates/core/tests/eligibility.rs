use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use witnet_core::eligibility::{
    check_with_threshold, epoch_randomness, influence, verify_proof, InfluenceTable, RandomBeacon, TaskKindFlag,
    ThresholdCache,
};
use witnet_core::ledger::{Block, EpochDag, Input, OutPoint, Transaction};
use witnet_core::reputation::{DecayRate, ReputationLedger, ReputationScore};
use witnet_core::{EpochIndex, HashDigest, KeyRegistry, Keypair, TokenAmount};

const TRIALS: u64 = 20_000;

fn population() -> (Vec<Keypair>, ReputationLedger) {
    let keys: Vec<Keypair> = (0..7u8).map(|i| Keypair::derive(&[i])).collect();
    // four engaged participants holding 2, 3, 5 and 10 points; three neutral
    let init: BTreeMap<_, _> = keys
        .iter()
        .zip([2u64, 3, 5, 10])
        .map(|(k, p)| (k.public, ReputationScore::from_points(p)))
        .collect();
    let rep = ReputationLedger::with_initial_scores(keys.iter().map(|k| k.public), DecayRate::DEFAULT, &init).unwrap();
    (keys, rep)
}

fn beacon(t: u64) -> RandomBeacon {
    RandomBeacon(HashDigest::of(&t.to_be_bytes()))
}

/// Win indicators per participant and trial for one flag.
fn draws(keys: &[Keypair], rep: &ReputationLedger, flag: TaskKindFlag, request: Option<&HashDigest>) -> Vec<Vec<bool>> {
    let table = InfluenceTable::new(rep);
    let mut cache = ThresholdCache::new();
    keys.iter()
        .map(|k| {
            let th = cache.get(1, &table.get(&k.public));
            (1..=TRIALS)
                .map(|t| check_with_threshold(&k.secret, EpochIndex(t), &beacon(t), flag, request, 1, &th).is_some())
                .collect()
        })
        .collect()
}

#[test]
fn mining_lottery_is_fair_and_averages_one_winner() {
    let (keys, rep) = population();
    let wins = draws(&keys, &rep, TaskKindFlag::Mine, None);
    let total: usize = wins.iter().map(|w| w.iter().filter(|x| **x).count()).sum();
    let mean = total as f64 / TRIALS as f64;
    assert!((mean - 1.0).abs() < 0.03, "mean winners {mean}");
    for (k, w) in keys.iter().zip(&wins) {
        let rate = w.iter().filter(|x| **x).count() as f64 / TRIALS as f64;
        let expected = influence(&rep, &k.public).to_f64();
        if expected == 0.0 {
            assert_eq!(rate, 0.0);
        } else {
            assert!((rate / expected - 1.0).abs() < 0.15, "rate {rate} vs influence {expected}");
        }
    }
}

fn correlation(a: &[bool], b: &[bool]) -> f64 {
    let n = a.len() as f64;
    let x: Vec<f64> = a.iter().map(|v| *v as u8 as f64).collect();
    let y: Vec<f64> = b.iter().map(|v| *v as u8 as f64).collect();
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(&y).map(|(p, q)| (p - mx) * (q - my)).sum();
    let vx: f64 = x.iter().map(|p| (p - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|q| (q - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn flags_draw_independently() {
    let (keys, rep) = population();
    let request = HashDigest::of(b"request");
    let mine = draws(&keys[..4], &rep, TaskKindFlag::Mine, None);
    let task = draws(&keys[..4], &rep, TaskKindFlag::RetrieveAttest, Some(&request));
    for (m, t) in mine.iter().zip(&task) {
        let rho = correlation(m, t);
        assert!(rho.abs() < 0.05, "correlation {rho}");
    }
}

#[test]
fn proofs_verify_only_for_their_own_draw() {
    let (keys, rep) = population();
    let registry: KeyRegistry = keys.iter().copied().collect();
    let table = InfluenceTable::new(&rep);
    let k = keys[3];
    let th = ThresholdCache::new().get(1, &table.get(&k.public));
    let (t, proof) = (1..)
        .find_map(|t| {
            check_with_threshold(&k.secret, EpochIndex(t), &beacon(t), TaskKindFlag::Mine, None, 1, &th).map(|p| (t, p))
        })
        .unwrap();
    assert!(verify_proof(&proof, &beacon(t), &rep, 1, &registry));
    assert!(!verify_proof(&proof, &beacon(t + 1), &rep, 1, &registry));
    let mut other = proof.clone();
    other.participant = keys[0].public;
    assert!(!verify_proof(&other, &beacon(t), &rep, 1, &registry));
}

fn mined(key: &Keypair, rep: &ReputationLedger, dag: &EpochDag, t: u64, marker: HashDigest) -> Block {
    let beacon = epoch_randomness(dag, EpochIndex(t)).unwrap();
    let proof = check_with_threshold(
        &key.secret,
        EpochIndex(t),
        &beacon,
        TaskKindFlag::Mine,
        None,
        1,
        &ThresholdCache::new().get(1, &influence(rep, &key.public)),
    )
    .unwrap();
    Block {
        checkpoint: EpochIndex(t),
        parents: dag.tips(),
        tx_pointers: vec![marker],
        leadership_proof: Some(proof),
        miner: key.public,
        reward: TokenAmount::ZERO,
    }
}

fn oracle_beacon(digests: &[HashDigest], t: u64) -> RandomBeacon {
    let mut sorted = digests.to_vec();
    sorted.sort();
    let mut h = Sha256::new();
    for d in &sorted {
        h.update(d.0);
    }
    h.update(t.to_be_bytes());
    RandomBeacon(HashDigest(h.finalize().into()))
}

#[test]
fn beacon_ignores_arrival_order_and_skips_empty_checkpoints() {
    let key = Keypair::derive(b"solo");
    let registry: KeyRegistry = [key].into_iter().collect();
    let rep = ReputationLedger::new([key.public], DecayRate::DEFAULT);
    let mut base = EpochDag::new(4);
    base.accept_block(Block::genesis(key.public, TokenAmount::ZERO), &rep, &registry).unwrap();
    let markers: Vec<HashDigest> = (0..3u32)
        .map(|i| {
            let src = OutPoint::new(HashDigest::of(b"m"), i);
            base.broadcast(Transaction::value_transfer(vec![Input::owner(src, key.public)], vec![]))
        })
        .collect();
    let blocks: Vec<Block> = markers.iter().map(|m| mined(&key, &rep, &base, 1, *m)).collect();

    let mut forward = base.clone();
    let mut backward = base.clone();
    for b in &blocks {
        forward.accept_block(b.clone(), &rep, &registry).unwrap();
    }
    for b in blocks.iter().rev() {
        backward.accept_block(b.clone(), &rep, &registry).unwrap();
    }
    let digests: Vec<HashDigest> = blocks.iter().map(|b| b.digest()).collect();
    for t in [2, 3, 4] {
        let f = epoch_randomness(&forward, EpochIndex(t)).unwrap();
        assert_eq!(f, epoch_randomness(&backward, EpochIndex(t)).unwrap());
        // checkpoints 2 and 3 are empty, so every later beacon comes from checkpoint 1
        assert_eq!(f, oracle_beacon(&digests, t));
    }
    let genesis = base.blocks().map(|(d, _)| *d).collect::<Vec<_>>();
    assert_eq!(epoch_randomness(&base, EpochIndex(1)).unwrap(), oracle_beacon(&genesis, 1));
    assert!(epoch_randomness(&base, EpochIndex(0)).is_err());
}

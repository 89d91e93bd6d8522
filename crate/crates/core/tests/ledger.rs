use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use witnet_core::eligibility::{check_eligibility, epoch_randomness, influence, TaskKindFlag};
use witnet_core::economics::{block_reward, IssuanceParams};
use witnet_core::ledger::{
    compose, Block, EpochDag, Input, LedgerError, LedgerState, Lock, OutPoint, Output, Transaction, Utxo,
};
use witnet_core::reputation::{DecayRate, ReputationLedger};
use witnet_core::{EpochIndex, HashDigest, KeyRegistry, Keypair, ParticipantId, Share, TokenAmount};

fn owner(n: u8) -> ParticipantId {
    ParticipantId(HashDigest([n + 1; 32]))
}

fn ledger(values: &[u64], owners: &[u8]) -> (LedgerState, Vec<OutPoint>) {
    let ops: Vec<OutPoint> = (0..values.len())
        .map(|i| OutPoint::new(HashDigest::of(&[i as u8]), i as u32))
        .collect();
    let state = LedgerState::from_utxos(ops.iter().zip(values).zip(owners).map(|((o, v), w)| {
        (
            *o,
            Utxo {
                value: TokenAmount::from_nanowits(*v),
                lock: Lock::PayTo(owner(*w)),
                created_at: EpochIndex(0),
            },
        )
    }));
    (state, ops)
}

fn outputs(spec: &[(u8, u64)]) -> Vec<Output> {
    let sum: u64 = spec.iter().map(|(_, n)| n).sum();
    let den = sum.max(1000);
    spec.iter()
        .map(|(w, n)| Output::pay(Share::new(*n, den).unwrap(), owner(*w)))
        .collect()
}

fn spend(state: &LedgerState, sources: &[OutPoint], outs: Vec<Output>) -> Transaction {
    let inputs = sources
        .iter()
        .map(|o| match state.utxo(o).unwrap().lock {
            Lock::PayTo(p) => Input::owner(*o, p),
            _ => unreachable!(),
        })
        .collect();
    Transaction::value_transfer(inputs, outs)
}

/// Lock and value of every output that is not in `base`.
fn created(state: &LedgerState, base: &LedgerState) -> Vec<(Lock, TokenAmount)> {
    let mut v: Vec<_> = state
        .utxos()
        .iter()
        .filter(|(o, _)| base.utxo(o).is_none())
        .map(|(_, u)| (u.lock.clone(), u.value))
        .collect();
    v.sort();
    v
}

fn kept(state: &LedgerState, base: &LedgerState) -> BTreeSet<OutPoint> {
    state.utxos().keys().filter(|o| base.utxo(o).is_some()).copied().collect()
}

fn output_spec() -> impl Strategy<Value = Vec<(u8, u64)>> {
    prop::collection::vec((0u8..4, 1u64..700), 1..=3)
}

proptest! {
    #[test]
    fn independent_transactions_commute(
        values in prop::collection::vec(1u64..1_000_000_000_000, 2..=8),
        owners in prop::collection::vec(0u8..4, 8),
        side in prop::collection::vec(0u8..3, 8),
        a_out in output_spec(),
        b_out in output_spec(),
    ) {
        let n = values.len();
        let (s, ops) = ledger(&values, &owners[..n]);
        let a_in: Vec<_> = (0..n).filter(|i| side[*i] == 0).map(|i| ops[i]).collect();
        let b_in: Vec<_> = (0..n).filter(|i| side[*i] == 1).map(|i| ops[i]).collect();
        prop_assume!(!a_in.is_empty() && !b_in.is_empty());
        let a = spend(&s, &a_in, outputs(&a_out));
        let b = spend(&s, &b_in, outputs(&b_out));
        let ab = s.apply_transaction(&a).unwrap().apply_transaction(&b).unwrap();
        let ba = s.apply_transaction(&b).unwrap().apply_transaction(&a).unwrap();
        prop_assert_eq!(&ab, &ba);
        prop_assert!(ab.is_conserved());
        prop_assert_eq!(ab.utxo_total() + ab.fees_in_flight().nanowits() as u128, s.utxo_total());
    }

    #[test]
    fn conflicting_transactions_do_not_both_apply(
        values in prop::collection::vec(1u64..1_000_000_000, 1..=8),
        a_out in output_spec(),
        b_out in output_spec(),
    ) {
        let owners = vec![0u8; values.len()];
        let (s, ops) = ledger(&values, &owners);
        let a = spend(&s, &ops[..1], outputs(&a_out));
        let b = spend(&s, &ops, outputs(&b_out));
        prop_assume!(a.id() != b.id());
        let after = s.apply_transaction(&a).unwrap();
        prop_assert_eq!(after.apply_transaction(&b), Err(LedgerError::UnknownInput(ops[0])));
    }

    #[test]
    fn compose_matches_sequential_application(
        values in prop::collection::vec(1u64..1_000_000_000_000, 1..=8),
        owners in prop::collection::vec(0u8..4, 8),
        steps in prop::collection::vec((any::<prop::sample::Index>(), any::<bool>(), output_spec()), 1..=5),
    ) {
        let n = values.len();
        let (s, _) = ledger(&values, &owners[..n]);
        let mut cur = s.clone();
        let mut seq = Vec::new();
        for (pick, two, outs) in &steps {
            let live: Vec<OutPoint> = cur.utxos().keys().copied().collect();
            if live.is_empty() {
                break;
            }
            let first = pick.index(live.len());
            let mut sources = vec![live[first]];
            if *two && live.len() > 1 {
                sources.push(live[(first + 1) % live.len()]);
            }
            let tx = spend(&cur, &sources, outputs(outs));
            cur = cur.apply_transaction(&tx).unwrap();
            seq.push(tx);
        }
        prop_assume!(!seq.is_empty());
        let composite = compose(&seq, &s).unwrap();
        let once = s.apply_transaction(&composite).unwrap();
        prop_assert_eq!(kept(&once, &s), kept(&cur, &s));
        prop_assert_eq!(created(&once, &s), created(&cur, &s));
        prop_assert_eq!(once.fees_in_flight(), cur.fees_in_flight());
        prop_assert!(once.is_conserved());
    }

    #[test]
    fn dag_pointers_are_unique_and_lowest(ops in prop::collection::vec(
        (0u64..4, any::<prop::sample::Index>(), 0usize..3, prop::collection::vec(0usize..6, 0..4)),
        1..25,
    )) {
        let key = Keypair::derive(b"miner");
        let keys: KeyRegistry = [key].into_iter().collect();
        let rep = ReputationLedger::new([key.public], DecayRate::DEFAULT);
        let issuance = IssuanceParams::default();
        let mut dag = EpochDag::new(2);
        dag.accept_block(Block::genesis(key.public, block_reward(0, &issuance)), &rep, &keys).unwrap();
        let txs: Vec<HashDigest> = (0..6u8)
            .map(|i| {
                let src = OutPoint::new(HashDigest::of(&[i]), 0);
                dag.broadcast(Transaction::value_transfer(vec![Input::owner(src, key.public)], vec![]))
            })
            .collect();

        let mut accepted = 0;
        for (step, (ahead, parent, back, pointers)) in ops.iter().enumerate() {
            let tip = dag.tip().unwrap().0;
            let t = EpochIndex((tip + ahead).saturating_sub(*back as u64).max(1));
            let known: Vec<HashDigest> = dag.blocks().map(|(d, _)| *d).collect();
            let Ok(beacon) = epoch_randomness(&dag, t) else { continue };
            let proof = check_eligibility(&key.secret, t, &beacon, TaskKindFlag::Mine, None, 1, &influence(&rep, &key.public))
                .expect("sole participant always wins");
            let mut tx_pointers: Vec<HashDigest> = pointers.iter().map(|i| txs[*i]).collect();
            tx_pointers.sort();
            tx_pointers.dedup();
            // a fresh transaction per step keeps otherwise identical blocks distinct
            let src = OutPoint::new(HashDigest::of(&(step as u64).to_be_bytes()), 1);
            tx_pointers.push(dag.broadcast(Transaction::value_transfer(vec![Input::owner(src, key.public)], vec![])));
            let block = Block {
                checkpoint: t,
                parents: vec![known[parent.index(known.len())]],
                tx_pointers,
                leadership_proof: Some(proof),
                miner: key.public,
                reward: block_reward(t.0, &issuance),
            };
            accepted += dag.accept_block(block, &rep, &keys).is_ok() as usize;

            prop_assert!(dag.is_acyclic());
            prop_assert!(dag.pointers_consistent());
            let mut lowest: BTreeMap<HashDigest, EpochIndex> = BTreeMap::new();
            for (_, b) in dag.blocks() {
                for id in &b.tx_pointers {
                    let e = lowest.entry(*id).or_insert(b.checkpoint);
                    *e = (*e).min(b.checkpoint);
                }
            }
            prop_assert_eq!(&lowest, dag.canonical_pointers());
        }
        prop_assert!(accepted >= 1);
        prop_assert_eq!(dag.len(), accepted + 1);
    }
}

#[test]
fn block_with_unknown_parent_is_rejected() {
    let key = Keypair::derive(b"miner");
    let keys: KeyRegistry = [key].into_iter().collect();
    let rep = ReputationLedger::new([key.public], DecayRate::DEFAULT);
    let mut dag = EpochDag::new(2);
    dag.accept_block(Block::genesis(key.public, TokenAmount::from_wits(500)), &rep, &keys).unwrap();
    let beacon = epoch_randomness(&dag, EpochIndex(1)).unwrap();
    let proof =
        check_eligibility(&key.secret, EpochIndex(1), &beacon, TaskKindFlag::Mine, None, 1, &influence(&rep, &key.public))
            .unwrap();
    let block = Block {
        checkpoint: EpochIndex(1),
        parents: vec![HashDigest::of(b"nowhere")],
        tx_pointers: vec![],
        leadership_proof: Some(proof),
        miner: key.public,
        reward: TokenAmount::from_wits(500),
    };
    assert_eq!(
        dag.accept_block(block, &rep, &keys),
        Err(LedgerError::UnknownParent(HashDigest::of(b"nowhere")))
    );
}

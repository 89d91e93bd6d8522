//! Folding a valid sequence of value transfers into one transaction.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{Input, LedgerError, LedgerState, Lock, OutPoint, Output, Payload, Transaction, Unlock};
use crate::amount::{Share, TokenAmount};

/// Returns one transaction whose effect on `state` equals applying `txs` in
/// order: it spends the inputs taken from `state` and creates the outputs
/// that survive the sequence, each as its exact share of the spent total.
///
/// Only owner-signed value transfers compose; anything else, or any step
/// that fails at its position, is [`LedgerError::InvalidSequence`].
pub fn compose(txs: &[Transaction], state: &LedgerState) -> Result<Transaction, LedgerError> {
    let invalid = |index: usize, source: LedgerError| LedgerError::InvalidSequence {
        index,
        source: Box::new(source),
    };
    if txs.is_empty() {
        return Err(invalid(0, LedgerError::MalformedPayload("empty sequence")));
    }
    let mut external: Vec<Input> = Vec::new();
    let mut external_total = TokenAmount::ZERO;
    // outputs created inside the sequence and still unspent, in creation order
    let mut created: Vec<(OutPoint, Lock, TokenAmount)> = Vec::new();
    let mut live: BTreeMap<OutPoint, usize> = BTreeMap::new();
    let mut cur = state.clone();

    for (index, tx) in txs.iter().enumerate() {
        let owner_signed = tx.inputs.iter().all(|i| matches!(i.unlock, Unlock::Owner(_)));
        if tx.payload != Payload::ValueTransfer || !owner_signed {
            return Err(invalid(index, LedgerError::MalformedPayload("only owner-signed value transfers compose")));
        }
        let next = cur.apply_transaction(tx).map_err(|e| invalid(index, e))?;
        for input in &tx.inputs {
            if let Some(pos) = live.remove(&input.source) {
                created[pos].2 = TokenAmount::ZERO;
            } else {
                external_total += cur.utxo(&input.source).expect("validated input").value;
                external.push(input.clone());
            }
        }
        let id = tx.id();
        for (i, out) in tx.outputs.iter().enumerate() {
            let op = OutPoint::new(id, i as u32);
            if let Some(u) = next.utxo(&op) {
                live.insert(op, created.len());
                created.push((op, out.lock.clone(), u.value));
            }
        }
        cur = next;
    }

    if txs.len() == 1 {
        return Ok(txs[0].clone());
    }
    let outputs = created
        .into_iter()
        .filter(|(_, _, v)| *v > TokenAmount::ZERO)
        .map(|(_, lock, value)| Output {
            share: Share::of(value, external_total).expect("surviving output fits the spent total"),
            lock,
        })
        .collect();
    Ok(Transaction::value_transfer(external, outputs))
}

//! UTXO state, value resolution and checkpoint finalization.
//!
//! When a checkpoint closes, every transaction made canonical there is
//! applied as a batch. An output spent by `n` canonical transactions of the
//! same checkpoint contributes `v / n` to each of them; a spender's outputs
//! take their share of the summed contributions, floored to whole nanoWit.
//! Whatever is not paid out (explicit fee, floor remainders) accrues to the
//! checkpoint's fee pool and is paid to its miners along with the issuance.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::{Block, EpochDag, EpochIndex, Lock, LedgerError, OutPoint, Payload, RequestRole, Transaction, Unlock};
use crate::amount::{Share, TokenAmount};
use crate::bigmath::mul_div_floor;
use crate::economics::{block_reward, IssuanceParams};
use crate::hash::{Encoder, HashDigest};
use crate::keys::{ParticipantId, SignatureOracle};
use crate::rad::commitment_digest;
use crate::reputation::ReputationLedger;

/// Unspent output with its resolved absolute value.
#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Utxo {
    pub value: TokenAmount,
    pub lock: Lock,
    pub created_at: EpochIndex,
}

/// Outcome of Truth-By-Consensus for one request, as far as escrow is concerned.
#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Settlement {
    pub client: ParticipantId,
    /// `None` when the request was contested and escrow goes back to the client.
    #[cfg_attr(feature = "serde", serde(with = "opt_hex"))]
    pub winner: Option<Vec<u8>>,
    pub supporters: BTreeSet<ParticipantId>,
    pub forfeited: BTreeSet<ParticipantId>,
}

#[cfg(feature = "serde")]
mod opt_hex {
    use alloc::string::String;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(hex::encode).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        use serde::de::Error as _;
        Option::<String>::deserialize(d)?
            .map(|s| hex::decode(s).map_err(D::Error::custom))
            .transpose()
    }
}

/// `floor(source_value / concurrent_spenders · share)`.
pub fn resolve_output_value(source_value: TokenAmount, concurrent_spenders: u64, share: Share) -> TokenAmount {
    assert!(concurrent_spenders >= 1, "at least one spender");
    let v = mul_div_floor(
        source_value.nanowits() as u128,
        share.num() as u128,
        concurrent_spenders as u128 * share.den() as u128,
    );
    TokenAmount::from_nanowits(v as u64)
}

/// Outpoint of the reward paid to the miner of `block`.
pub fn coinbase_outpoint(block: &HashDigest) -> OutPoint {
    let mut enc = Encoder::tagged("coinbase");
    enc.digest(block);
    OutPoint::new(enc.digest_of(), 0)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BatchReport {
    pub applied: Vec<HashDigest>,
    pub rejected: Vec<(HashDigest, LedgerError)>,
    /// Value that entered the fee pool.
    pub fees: TokenAmount,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FinalizeReport {
    pub checkpoint: EpochIndex,
    pub batch: BatchReport,
    pub blocks: usize,
    pub minted: TokenAmount,
    /// Fees paid out to this checkpoint's miners.
    pub fees_paid: TokenAmount,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LedgerState {
    dag: EpochDag,
    utxo: BTreeMap<OutPoint, Utxo>,
    supply: TokenAmount,
    fees_in_flight: TokenAmount,
    finalized: Option<EpochIndex>,
    issuance: IssuanceParams,
    settlements: BTreeMap<HashDigest, Settlement>,
}

impl Default for LedgerState {
    fn default() -> Self {
        Self::new(IssuanceParams::default(), super::DEFAULT_HORIZON)
    }
}

impl LedgerState {
    pub fn new(issuance: IssuanceParams, horizon: u64) -> Self {
        LedgerState {
            dag: EpochDag::new(horizon),
            utxo: BTreeMap::new(),
            supply: TokenAmount::ZERO,
            fees_in_flight: TokenAmount::ZERO,
            finalized: None,
            issuance,
            settlements: BTreeMap::new(),
        }
    }

    /// Empty state holding the given outputs, for tests and tooling. The
    /// outputs count as already issued supply.
    pub fn from_utxos(utxos: impl IntoIterator<Item = (OutPoint, Utxo)>) -> Self {
        let mut s = Self::default();
        for (o, u) in utxos {
            s.supply += u.value;
            s.utxo.insert(o, u);
        }
        s.finalized = Some(EpochIndex(0));
        s
    }

    pub fn dag(&self) -> &EpochDag {
        &self.dag
    }

    pub fn issuance(&self) -> &IssuanceParams {
        &self.issuance
    }

    pub fn utxos(&self) -> &BTreeMap<OutPoint, Utxo> {
        &self.utxo
    }

    pub fn utxo(&self, o: &OutPoint) -> Option<&Utxo> {
        self.utxo.get(o)
    }

    pub fn supply(&self) -> TokenAmount {
        self.supply
    }

    pub fn fees_in_flight(&self) -> TokenAmount {
        self.fees_in_flight
    }

    /// Last finalized checkpoint.
    pub fn checkpoint(&self) -> Option<EpochIndex> {
        self.finalized
    }

    /// Checkpoint the next finalization will close.
    pub fn open_checkpoint(&self) -> EpochIndex {
        self.finalized.map_or(EpochIndex(0), |t| t.next())
    }

    pub fn settlement(&self, request: &HashDigest) -> Option<&Settlement> {
        self.settlements.get(request)
    }

    pub fn settlements(&self) -> &BTreeMap<HashDigest, Settlement> {
        &self.settlements
    }

    /// Records the consensus outcome that unlocks a request's escrow.
    pub fn record_settlement(&mut self, request: HashDigest, settlement: Settlement) {
        self.settlements.insert(request, settlement);
    }

    /// Balance per participant over pay-to and time-locked outputs.
    pub fn balances(&self) -> BTreeMap<ParticipantId, TokenAmount> {
        let mut out: BTreeMap<ParticipantId, TokenAmount> = BTreeMap::new();
        for u in self.utxo.values() {
            let owner = match &u.lock {
                Lock::PayTo(p) | Lock::TimeLock { owner: p, .. } => *p,
                _ => continue,
            };
            *out.entry(owner).or_default() += u.value;
        }
        out
    }

    pub fn balance(&self, p: &ParticipantId) -> TokenAmount {
        self.outputs_of(p).map(|(_, u)| u.value).sum()
    }

    /// Spendable plain outputs owned by `p`.
    pub fn outputs_of<'a>(&'a self, p: &'a ParticipantId) -> impl Iterator<Item = (&'a OutPoint, &'a Utxo)> + 'a {
        self.utxo
            .iter()
            .filter(move |(_, u)| u.lock == Lock::PayTo(*p))
    }

    /// Value held in escrow or by participants.
    pub fn utxo_total(&self) -> u128 {
        self.utxo.values().map(|u| u.value.nanowits() as u128).sum()
    }

    /// `supply = Σ UTXO values + fees in flight`.
    pub fn is_conserved(&self) -> bool {
        self.utxo_total() + self.fees_in_flight.nanowits() as u128 == self.supply.nanowits() as u128
    }

    pub fn broadcast(&mut self, tx: Transaction) -> HashDigest {
        self.dag.broadcast(tx)
    }

    pub fn forget(&mut self, id: &HashDigest) {
        self.dag.forget(id)
    }

    pub fn accept_block(
        &mut self,
        block: Block,
        rep: &ReputationLedger,
        oracle: &dyn SignatureOracle,
    ) -> Result<super::AcceptOutcome, LedgerError> {
        if let Some(done) = self.finalized {
            if block.checkpoint <= done {
                return Err(LedgerError::StaleBlock { checkpoint: block.checkpoint, tip: done });
            }
        }
        if block.reward != block_reward(block.checkpoint.0, &self.issuance) {
            return Err(LedgerError::MalformedBlock("reward does not match issuance"));
        }
        self.dag.accept_block(block, rep, oracle)
    }

    /// Validates `tx` against the current outputs as if it were the only
    /// spender of each input. Does not modify the state.
    pub fn check_transaction(&self, tx: &Transaction) -> Result<(), LedgerError> {
        tx.check_shape()?;
        let epoch = self.open_checkpoint();
        for input in &tx.inputs {
            let utxo = self.utxo.get(&input.source).ok_or(LedgerError::UnknownInput(input.source))?;
            self.check_unlock(tx, &input.source, &input.unlock, utxo, epoch)?;
        }
        Ok(())
    }

    /// Pure single-transaction step: returns the state after `tx`.
    pub fn apply_transaction(&self, tx: &Transaction) -> Result<LedgerState, LedgerError> {
        self.check_transaction(tx)?;
        let mut next = self.clone();
        let spenders: BTreeMap<OutPoint, u64> = tx.inputs.iter().map(|i| (i.source, 1)).collect();
        let created = next.create_outputs(&tx.id(), tx, &spenders, self.open_checkpoint());
        let consumed = next.consume(spenders.keys());
        next.fees_in_flight += consumed - created;
        Ok(next)
    }

    fn consume<'a>(&mut self, outpoints: impl Iterator<Item = &'a OutPoint>) -> TokenAmount {
        outpoints
            .map(|o| self.utxo.remove(o).expect("consumed output exists").value)
            .sum()
    }

    fn create_outputs(
        &mut self,
        id: &HashDigest,
        tx: &Transaction,
        spenders: &BTreeMap<OutPoint, u64>,
        epoch: EpochIndex,
    ) -> TokenAmount {
        // Σ v_i / n_i over a common denominator
        let lcm = tx.inputs.iter().fold(1u128, |acc, i| lcm(acc, spenders[&i.source] as u128));
        let num: u128 = tx
            .inputs
            .iter()
            .map(|i| self.utxo[&i.source].value.nanowits() as u128 * (lcm / spenders[&i.source] as u128))
            .sum();
        let mut created = TokenAmount::ZERO;
        for (index, out) in tx.outputs.iter().enumerate() {
            let value = mul_div_floor(num, out.share.num() as u128, lcm * out.share.den() as u128);
            if value == 0 {
                continue;
            }
            let value = TokenAmount::from_nanowits(value as u64);
            created += value;
            self.utxo.insert(
                OutPoint::new(*id, index as u32),
                Utxo {
                    value,
                    lock: out.lock.clone(),
                    created_at: epoch,
                },
            );
        }
        created
    }

    fn check_unlock(
        &self,
        tx: &Transaction,
        source: &OutPoint,
        unlock: &Unlock,
        utxo: &Utxo,
        epoch: EpochIndex,
    ) -> Result<(), LedgerError> {
        let deny = |reason| Err(LedgerError::LockViolation { input: *source, reason });
        let pays_only = |p: &ParticipantId| tx.outputs.iter().all(|o| o.lock == Lock::PayTo(*p));
        match (&utxo.lock, unlock) {
            (Lock::PayTo(owner), Unlock::Owner(who)) => {
                if owner != who {
                    return deny("not the owner");
                }
            }
            (Lock::TimeLock { owner, until }, Unlock::Owner(who)) => {
                if owner != who {
                    return deny("not the owner");
                }
                if epoch < *until {
                    return deny("time lock not expired");
                }
            }
            (Lock::Request(RequestRole::Witnessing), Unlock::Pledge { .. }) => {
                if !matches!(&tx.payload, Payload::CommitPledge { request, .. } if *request == source.tx) {
                    return deny("pledge for another request");
                }
                if self.settlements.contains_key(&source.tx) {
                    return deny("request already settled");
                }
            }
            (Lock::Request(RequestRole::Delivery), Unlock::Deliver { bridge }) => {
                match self.settlements.get(&source.tx) {
                    Some(s) if s.winner.is_some() => {}
                    _ => return deny("nothing to deliver"),
                }
                if !pays_only(bridge) {
                    return deny("delivery fee must pay the bridge");
                }
            }
            (Lock::Request(_), Unlock::Refund) => self.check_refund(tx, source, &source.tx)?,
            (Lock::Commit { request, witness, digest }, Unlock::Reveal { value, prev_block }) => {
                match &tx.payload {
                    Payload::RevealRedeem { request: r, witness: w, .. } if r == request && w == witness => {}
                    _ => return deny("redeem for another commitment"),
                }
                if commitment_digest(value, witness, prev_block) != *digest {
                    return deny("reveal does not open the commitment");
                }
                match self.settlements.get(request) {
                    Some(s) if s.winner.is_some() && s.supporters.contains(witness) => {}
                    _ => return deny("witness is not a supporter"),
                }
            }
            (Lock::Commit { request, witness, .. }, Unlock::Forfeit { claimant }) => {
                if !matches!(&tx.payload, Payload::RevealRedeem { request: r, .. } if r == request) {
                    return deny("forfeit claimed under another request");
                }
                match self.settlements.get(request) {
                    Some(s) if s.winner.is_some() && s.forfeited.contains(witness) && s.supporters.contains(claimant) => {}
                    _ => return deny("pledge is not forfeited to the claimant"),
                }
            }
            (Lock::Commit { request, .. }, Unlock::Refund) => self.check_refund(tx, source, request)?,
            _ => return deny("unlock does not match lock"),
        }
        Ok(())
    }

    fn check_refund(&self, tx: &Transaction, source: &OutPoint, request: &HashDigest) -> Result<(), LedgerError> {
        let deny = |reason| Err(LedgerError::LockViolation { input: *source, reason });
        match self.settlements.get(request) {
            Some(s) if s.winner.is_none() => {
                if tx.outputs.iter().all(|o| o.lock == Lock::PayTo(s.client)) {
                    Ok(())
                } else {
                    deny("refund must pay the client")
                }
            }
            _ => deny("request is not contested"),
        }
    }

    /// Applies transactions that become canonical together at `epoch`,
    /// in dependency rounds. Invalid ones are skipped and reported.
    pub fn apply_batch(&mut self, txs: Vec<Transaction>, epoch: EpochIndex) -> BatchReport {
        let mut pending: BTreeMap<HashDigest, Transaction> = txs.into_iter().map(|t| (t.id(), t)).collect();
        let mut report = BatchReport::default();
        loop {
            let ready: Vec<HashDigest> = pending
                .iter()
                .filter(|(_, tx)| tx.inputs.iter().all(|i| self.utxo.contains_key(&i.source)))
                .map(|(id, _)| *id)
                .collect();
            if ready.is_empty() {
                for (id, tx) in pending {
                    let missing = tx
                        .inputs
                        .iter()
                        .find(|i| !self.utxo.contains_key(&i.source))
                        .map(|i| i.source)
                        .unwrap_or_else(|| OutPoint::new(id, u32::MAX));
                    report.rejected.push((id, LedgerError::UnknownInput(missing)));
                }
                break;
            }
            let mut valid = Vec::new();
            for id in ready {
                let tx = pending.remove(&id).expect("ready tx is pending");
                let res = tx.check_shape().and_then(|_| {
                    tx.inputs.iter().try_for_each(|i| {
                        self.check_unlock(&tx, &i.source, &i.unlock, &self.utxo[&i.source], epoch)
                    })
                });
                match res {
                    Ok(()) => valid.push((id, tx)),
                    Err(e) => report.rejected.push((id, e)),
                }
            }
            let mut spenders: BTreeMap<OutPoint, u64> = BTreeMap::new();
            for (_, tx) in &valid {
                for i in &tx.inputs {
                    *spenders.entry(i.source).or_default() += 1;
                }
            }
            let mut created = TokenAmount::ZERO;
            for (id, tx) in &valid {
                created += self.create_outputs(id, tx, &spenders, epoch);
            }
            let consumed = self.consume(spenders.keys());
            let fees = consumed - created;
            self.fees_in_flight += fees;
            report.fees += fees;
            report.applied.extend(valid.into_iter().map(|(id, _)| id));
        }
        report
    }

    /// Closes checkpoint `t`: applies its canonical transactions, then mints
    /// the issuance and pays it, together with the pooled fees, to the
    /// checkpoint's blocks in equal parts. The division remainder goes to the
    /// block with the lowest digest. Without blocks nothing is minted and
    /// fees stay in flight.
    pub fn finalize_checkpoint(&mut self, t: EpochIndex) -> Result<FinalizeReport, LedgerError> {
        let expected = self.open_checkpoint();
        if t != expected {
            return Err(LedgerError::OutOfOrderFinalization { expected, got: t });
        }
        let txs: Vec<Transaction> = self
            .dag
            .canonical_at(t)
            .iter()
            .filter_map(|id| self.dag.transaction(id).cloned())
            .collect();
        let batch = self.apply_batch(txs, t);
        let blocks: Vec<(HashDigest, ParticipantId)> = self.dag.blocks_at(t).map(|b| (b.digest(), b.miner)).collect();
        let mut report = FinalizeReport {
            checkpoint: t,
            batch,
            blocks: blocks.len(),
            ..Default::default()
        };
        if !blocks.is_empty() {
            let minted = block_reward(t.0, &self.issuance);
            let pot = minted + self.fees_in_flight;
            let (each, rem) = pot.split(blocks.len() as u64);
            // digests come out of a BTreeSet, so the first is the lowest
            for (i, (digest, miner)) in blocks.iter().enumerate() {
                let value = if i == 0 { each + rem } else { each };
                if value == TokenAmount::ZERO {
                    continue;
                }
                self.utxo.insert(
                    coinbase_outpoint(digest),
                    Utxo {
                        value,
                        lock: Lock::PayTo(*miner),
                        created_at: t,
                    },
                );
            }
            self.supply += minted;
            report.minted = minted;
            report.fees_paid = self.fees_in_flight;
            self.fees_in_flight = TokenAmount::ZERO;
        }
        self.finalized = Some(t);
        Ok(report)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: u128, b: u128) -> u128 {
    a / gcd(a, b) * b
}

//! Epoch-indexed block DAG and canonical transaction pointers.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::{Block, EpochIndex, LedgerError, Transaction};
use crate::economics::MAX_BLOCK_BYTES;
use crate::eligibility::{epoch_randomness, verify_with_table, InfluenceTable, TaskKindFlag};
use crate::hash::HashDigest;
use crate::keys::SignatureOracle;
use crate::reputation::ReputationLedger;

/// Default number of checkpoints behind the tip a block may still land.
pub const DEFAULT_HORIZON: u64 = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochDag {
    blocks: BTreeMap<HashDigest, Block>,
    by_checkpoint: BTreeMap<EpochIndex, BTreeSet<HashDigest>>,
    /// Every transaction broadcast so far, by id.
    transactions: BTreeMap<HashDigest, Transaction>,
    /// Lowest checkpoint whose block points at each transaction.
    canonical: BTreeMap<HashDigest, EpochIndex>,
    canonical_by_checkpoint: BTreeMap<EpochIndex, BTreeSet<HashDigest>>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::dec"))]
    horizon: u64,
}

impl Default for EpochDag {
    fn default() -> Self {
        Self::new(DEFAULT_HORIZON)
    }
}

/// What accepting a block did.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AcceptOutcome {
    pub digest: HashDigest,
    /// Pointers that made a transaction canonical here.
    pub new_canonical: Vec<HashDigest>,
    /// Pointers ignored because the transaction is canonical lower down.
    pub ignored: Vec<HashDigest>,
    /// Higher-tier blocks displaced by this one.
    pub evicted: Vec<HashDigest>,
}

impl EpochDag {
    pub fn new(horizon: u64) -> Self {
        EpochDag {
            blocks: BTreeMap::new(),
            by_checkpoint: BTreeMap::new(),
            transactions: BTreeMap::new(),
            canonical: BTreeMap::new(),
            canonical_by_checkpoint: BTreeMap::new(),
            horizon,
        }
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn block(&self, d: &HashDigest) -> Option<&Block> {
        self.blocks.get(d)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&HashDigest, &Block)> {
        self.blocks.iter()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn by_checkpoint(&self) -> &BTreeMap<EpochIndex, BTreeSet<HashDigest>> {
        &self.by_checkpoint
    }

    pub fn blocks_at(&self, t: EpochIndex) -> impl Iterator<Item = &Block> {
        self.by_checkpoint
            .get(&t)
            .into_iter()
            .flatten()
            .map(|d| &self.blocks[d])
    }

    /// Highest checkpoint holding a block.
    pub fn tip(&self) -> Option<EpochIndex> {
        self.by_checkpoint
            .iter()
            .rev()
            .find(|(_, s)| !s.is_empty())
            .map(|(t, _)| *t)
    }

    /// Digests at the highest non-empty checkpoint.
    pub fn tips(&self) -> Vec<HashDigest> {
        self.tip()
            .map(|t| self.by_checkpoint[&t].iter().copied().collect())
            .unwrap_or_default()
    }

    /// Makes a transaction known so blocks may point at it; returns its id.
    pub fn broadcast(&mut self, tx: Transaction) -> HashDigest {
        let id = tx.id();
        self.transactions.entry(id).or_insert(tx);
        id
    }

    pub fn transaction(&self, id: &HashDigest) -> Option<&Transaction> {
        self.transactions.get(id)
    }

    pub fn canonical_checkpoint(&self, id: &HashDigest) -> Option<EpochIndex> {
        self.canonical.get(id).copied()
    }

    pub fn canonical_pointers(&self) -> &BTreeMap<HashDigest, EpochIndex> {
        &self.canonical
    }

    /// Transactions made canonical at `t`, by id.
    pub fn canonical_at(&self, t: EpochIndex) -> Vec<HashDigest> {
        self.canonical_by_checkpoint
            .get(&t)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }

    /// Transactions broadcast but not yet pointed at by any block.
    pub fn pending(&self) -> impl Iterator<Item = (&HashDigest, &Transaction)> {
        self.transactions
            .iter()
            .filter(|(id, _)| !self.canonical.contains_key(*id))
    }

    /// Drops a never-included transaction from the known set.
    pub fn forget(&mut self, id: &HashDigest) {
        if !self.canonical.contains_key(id) {
            self.transactions.remove(id);
        }
    }

    /// Adds a block after checking size, parents, horizon, tier ordering and
    /// the leadership proof against `rep`.
    pub fn accept_block(
        &mut self,
        block: Block,
        rep: &ReputationLedger,
        oracle: &dyn SignatureOracle,
    ) -> Result<AcceptOutcome, LedgerError> {
        let size = block.size();
        if size > MAX_BLOCK_BYTES as usize {
            return Err(LedgerError::OversizeBlock { size });
        }
        let digest = block.digest();
        if self.blocks.contains_key(&digest) {
            return Ok(AcceptOutcome { digest, ..Default::default() });
        }
        if block.is_genesis() {
            if !self.blocks.is_empty() {
                return Err(LedgerError::MalformedBlock("genesis on a non-empty ledger"));
            }
            return Ok(self.insert(block, digest));
        }
        if block.parents.is_empty() {
            return Err(LedgerError::MalformedBlock("block without parents"));
        }
        let tip = self.tip().unwrap_or(EpochIndex(0));
        if block.checkpoint.0 + self.horizon < tip.0 {
            return Err(LedgerError::StaleBlock { checkpoint: block.checkpoint, tip });
        }
        for p in &block.parents {
            match self.blocks.get(p) {
                Some(parent) if parent.checkpoint < block.checkpoint => {}
                _ => return Err(LedgerError::UnknownParent(*p)),
            }
        }
        for id in &block.tx_pointers {
            if !self.transactions.contains_key(id) {
                return Err(LedgerError::UnknownTransaction(*id));
            }
        }
        let proof = block.leadership_proof.as_ref().ok_or(LedgerError::BadProof)?;
        if proof.kind != TaskKindFlag::Mine
            || proof.epoch != block.checkpoint
            || proof.participant != block.miner
            || proof.request.is_some()
        {
            return Err(LedgerError::BadProof);
        }
        let beacon = epoch_randomness(self, block.checkpoint).map_err(|_| LedgerError::BadProof)?;
        let table = InfluenceTable::new(rep);
        if !verify_with_table(proof, &beacon, &table, proof.tier.get(), oracle) {
            return Err(LedgerError::BadProof);
        }

        let existing = self
            .blocks_at(block.checkpoint)
            .map(|b| b.tier())
            .min();
        let mut evicted = Vec::new();
        if let Some(best) = existing {
            let tier = block.tier();
            if tier > best {
                return Err(LedgerError::TierSuperseded { tier: tier.get(), existing: best.get() });
            }
            if tier < best {
                if tip > block.checkpoint {
                    return Err(LedgerError::StaleBlock { checkpoint: block.checkpoint, tip });
                }
                evicted = self.evict_checkpoint(block.checkpoint);
            }
        }
        let mut out = self.insert(block, digest);
        out.evicted = evicted;
        Ok(out)
    }

    fn insert(&mut self, block: Block, digest: HashDigest) -> AcceptOutcome {
        let t = block.checkpoint;
        let mut out = AcceptOutcome { digest, ..Default::default() };
        for id in &block.tx_pointers {
            match self.canonical.get(id).copied() {
                Some(c) if c <= t => {
                    if c < t {
                        out.ignored.push(*id);
                    }
                }
                prev => {
                    if let Some(c) = prev {
                        if let Some(set) = self.canonical_by_checkpoint.get_mut(&c) {
                            set.remove(id);
                        }
                    }
                    self.canonical.insert(*id, t);
                    self.canonical_by_checkpoint.entry(t).or_default().insert(*id);
                    out.new_canonical.push(*id);
                }
            }
        }
        self.by_checkpoint.entry(t).or_default().insert(digest);
        self.blocks.insert(digest, block);
        out
    }

    /// Removes every block at `t` and the pointers made canonical there.
    fn evict_checkpoint(&mut self, t: EpochIndex) -> Vec<HashDigest> {
        let gone: Vec<_> = self
            .by_checkpoint
            .remove(&t)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        for d in &gone {
            self.blocks.remove(d);
        }
        if let Some(ids) = self.canonical_by_checkpoint.remove(&t) {
            for id in ids {
                self.canonical.remove(&id);
            }
        }
        gone
    }

    /// Every parent edge points to a strictly earlier checkpoint.
    pub fn is_acyclic(&self) -> bool {
        self.blocks.values().all(|b| {
            b.parents
                .iter()
                .all(|p| self.blocks.get(p).is_some_and(|pb| pb.checkpoint < b.checkpoint))
        })
    }

    /// Each canonical pointer is indexed under exactly its checkpoint.
    pub fn pointers_consistent(&self) -> bool {
        let indexed: usize = self.canonical_by_checkpoint.values().map(|s| s.len()).sum();
        indexed == self.canonical.len()
            && self
                .canonical
                .iter()
                .all(|(id, t)| self.canonical_by_checkpoint.get(t).is_some_and(|s| s.contains(id)))
    }
}

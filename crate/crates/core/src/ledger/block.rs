use alloc::vec::Vec;

use super::EpochIndex;
use crate::amount::TokenAmount;
use crate::eligibility::{BackupIndex, EligibilityProof};
use crate::hash::{Canonical, Encoder, HashDigest};
use crate::keys::ParticipantId;

/// A block: parents at strictly earlier checkpoints plus pointers to
/// transactions. Transactions themselves travel separately.
#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Block {
    pub checkpoint: EpochIndex,
    pub parents: Vec<HashDigest>,
    pub tx_pointers: Vec<HashDigest>,
    /// Absent only in the genesis block.
    pub leadership_proof: Option<EligibilityProof>,
    pub miner: ParticipantId,
    /// Nominal issuance at this checkpoint; split among all blocks that share it.
    pub reward: TokenAmount,
}

impl Canonical for Block {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(0x42).u64(self.checkpoint.0);
        enc.put(&self.parents).put(&self.tx_pointers);
        enc.option(self.leadership_proof.as_ref(), |e, p| {
            e.put(p);
        });
        enc.digest(&self.miner.0).u64(self.reward.nanowits());
    }
}

impl Block {
    pub fn genesis(miner: ParticipantId, reward: TokenAmount) -> Self {
        Block {
            checkpoint: EpochIndex(0),
            parents: Vec::new(),
            tx_pointers: Vec::new(),
            leadership_proof: None,
            miner,
            reward,
        }
    }

    pub fn digest(&self) -> HashDigest {
        self.canonical_digest()
    }

    pub fn size(&self) -> usize {
        self.canonical_bytes().len()
    }

    /// Genesis counts as primary.
    pub fn tier(&self) -> BackupIndex {
        self.leadership_proof
            .as_ref()
            .map_or(BackupIndex::PRIMARY, |p| p.tier)
    }

    pub fn is_genesis(&self) -> bool {
        self.checkpoint.0 == 0 && self.parents.is_empty() && self.leadership_proof.is_none()
    }
}

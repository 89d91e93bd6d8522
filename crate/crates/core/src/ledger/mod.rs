//! Append-only epoch DAG ledger with percentage-valued outputs.
//!
//! Blocks at checkpoint `t` point at transactions; a transaction is canonical
//! at the lowest checkpoint whose block points at it and later pointers are
//! ignored. Closing a checkpoint applies its canonical transactions and mints
//! the block reward.

mod block;
mod compose;
mod dag;
mod state;
mod tx;

use alloc::boxed::Box;
use core::fmt;
use core::str::FromStr;

use crate::hash::HashDigest;

pub use block::Block;
pub use compose::compose;
pub use dag::{AcceptOutcome, EpochDag, DEFAULT_HORIZON};
pub use state::{
    coinbase_outpoint, resolve_output_value, BatchReport, FinalizeReport, LedgerState, Settlement, Utxo,
};
pub use tx::{Input, Lock, OutPoint, Output, Payload, RequestRole, Transaction, TxKind, Unlock};

/// Epoch / checkpoint ordinal; checkpoint `t` opens epoch `t` and closes `t - 1`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Debug)]
pub struct EpochIndex(pub u64);

impl EpochIndex {
    pub const GENESIS: EpochIndex = EpochIndex(0);

    pub fn next(self) -> Self {
        EpochIndex(self.0 + 1)
    }

    pub fn prev(self) -> Option<Self> {
        self.0.checked_sub(1).map(EpochIndex)
    }
}

impl fmt::Display for EpochIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for EpochIndex {
    type Err = core::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(EpochIndex)
    }
}

#[cfg(feature = "serde")]
crate::serde_util::string_serde!(EpochIndex);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("input {0} is not an unspent output")]
    UnknownInput(OutPoint),
    #[error("input {input} cannot be unlocked: {reason}")]
    LockViolation { input: OutPoint, reason: &'static str },
    #[error("malformed transaction: {0}")]
    MalformedPayload(&'static str),
    #[error("leadership proof does not verify")]
    BadProof,
    #[error("unknown parent block {0}")]
    UnknownParent(HashDigest),
    #[error("block of {size} bytes exceeds the size limit")]
    OversizeBlock { size: usize },
    #[error("block at checkpoint {checkpoint} is too far behind {tip}")]
    StaleBlock { checkpoint: EpochIndex, tip: EpochIndex },
    #[error("tier {tier} block loses to an existing tier {existing} block")]
    TierSuperseded { tier: u32, existing: u32 },
    #[error("malformed block: {0}")]
    MalformedBlock(&'static str),
    #[error("block points at unknown transaction {0}")]
    UnknownTransaction(HashDigest),
    #[error("transaction {index} of the sequence is invalid: {source}")]
    InvalidSequence {
        index: usize,
        #[source]
        source: Box<LedgerError>,
    },
    #[error("checkpoint {got} finalized out of order, expected {expected}")]
    OutOfOrderFinalization { expected: EpochIndex, got: EpochIndex },
}

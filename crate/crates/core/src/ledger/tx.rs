//! Transactions, locks and unlocks.
//!
//! Outputs carry a [`Share`] of the transaction's summed input value rather
//! than an absolute amount; the absolute value is fixed when the transaction
//! becomes canonical (see [`super::state`]).

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_bigint::BigUint;

use super::{EpochIndex, LedgerError};
use crate::amount::Share;
use crate::eligibility::{EligibilityProof, TaskKindFlag};
use crate::hash::{Canonical, Encoder, HashDigest};
use crate::keys::ParticipantId;
use crate::rad::RequestSpec;

/// Reference to one output of a transaction.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct OutPoint {
    pub tx: HashDigest,
    pub index: u32,
}

impl OutPoint {
    pub fn new(tx: HashDigest, index: u32) -> Self {
        OutPoint { tx, index }
    }
}

impl fmt::Display for OutPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.tx, self.index)
    }
}

impl FromStr for OutPoint {
    type Err = &'static str;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (tx, idx) = s.split_once(':').ok_or("bad outpoint")?;
        Ok(OutPoint {
            tx: tx.parse()?,
            index: idx.parse().map_err(|_| "bad outpoint index")?,
        })
    }
}

#[cfg(feature = "serde")]
crate::serde_util::string_serde!(OutPoint);

impl Canonical for OutPoint {
    fn encode(&self, enc: &mut Encoder) {
        enc.digest(&self.tx).u32(self.index);
    }
}

/// Which part of a request's escrow an output holds.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RequestRole {
    Witnessing,
    Delivery,
}

/// Output condition.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Lock {
    PayTo(ParticipantId),
    /// Escrow of the request created by this very transaction.
    Request(RequestRole),
    /// A witness's pledge on `request`, opened by revealing the claim behind `digest`.
    Commit {
        request: HashDigest,
        witness: ParticipantId,
        digest: HashDigest,
    },
    TimeLock {
        owner: ParticipantId,
        until: EpochIndex,
    },
}

impl Canonical for Lock {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Lock::PayTo(p) => {
                enc.u8(0).digest(&p.0);
            }
            Lock::Request(role) => {
                enc.u8(1).u8(*role as u8);
            }
            Lock::Commit { request, witness, digest } => {
                enc.u8(2).digest(request).digest(&witness.0).digest(digest);
            }
            Lock::TimeLock { owner, until } => {
                enc.u8(3).digest(&owner.0).u64(until.0);
            }
        }
    }
}

/// Data presented to satisfy a [`Lock`].
#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Unlock {
    Owner(ParticipantId),
    Pledge {
        witness: ParticipantId,
        digest: HashDigest,
    },
    Reveal {
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::hex_bytes"))]
        value: Vec<u8>,
        prev_block: HashDigest,
    },
    /// Claims a deviator's pledge on behalf of a supporter.
    Forfeit { claimant: ParticipantId },
    /// Returns escrow to the client of a contested request.
    Refund,
    Deliver { bridge: ParticipantId },
}

impl Canonical for Unlock {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Unlock::Owner(p) => {
                enc.u8(0).digest(&p.0);
            }
            Unlock::Pledge { witness, digest } => {
                enc.u8(1).digest(&witness.0).digest(digest);
            }
            Unlock::Reveal { value, prev_block } => {
                enc.u8(2).bytes(value).digest(prev_block);
            }
            Unlock::Forfeit { claimant } => {
                enc.u8(3).digest(&claimant.0);
            }
            Unlock::Refund => {
                enc.u8(4);
            }
            Unlock::Deliver { bridge } => {
                enc.u8(5).digest(&bridge.0);
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Input {
    pub source: OutPoint,
    pub unlock: Unlock,
}

impl Input {
    pub fn owner(source: OutPoint, owner: ParticipantId) -> Self {
        Input {
            source,
            unlock: Unlock::Owner(owner),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Output {
    pub share: Share,
    pub lock: Lock,
}

impl Output {
    pub fn pay(share: Share, to: ParticipantId) -> Self {
        Output {
            share,
            lock: Lock::PayTo(to),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TxKind {
    ValueTransfer,
    RadRequest,
    CommitPledge,
    RevealRedeem,
}

#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Payload {
    ValueTransfer,
    RadRequest(RequestSpec),
    CommitPledge {
        request: HashDigest,
        witness: ParticipantId,
        digest: HashDigest,
        proof: EligibilityProof,
    },
    RevealRedeem {
        request: HashDigest,
        witness: ParticipantId,
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::hex_bytes"))]
        value: Vec<u8>,
        prev_block: HashDigest,
    },
}

impl Canonical for Payload {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Payload::ValueTransfer => {
                enc.u8(0);
            }
            Payload::RadRequest(spec) => {
                enc.u8(1).put(spec);
            }
            Payload::CommitPledge { request, witness, digest, proof } => {
                enc.u8(2).digest(request).digest(&witness.0).digest(digest).put(proof);
            }
            Payload::RevealRedeem { request, witness, value, prev_block } => {
                enc.u8(3).digest(request).digest(&witness.0).bytes(value).digest(prev_block);
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Transaction {
    pub inputs: Vec<Input>,
    pub outputs: Vec<Output>,
    pub payload: Payload,
}

impl Canonical for Transaction {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(0x54).len(self.inputs.len());
        for i in &self.inputs {
            enc.put(&i.source).put(&i.unlock);
        }
        enc.len(self.outputs.len());
        for o in &self.outputs {
            enc.u64(o.share.num()).u64(o.share.den()).put(&o.lock);
        }
        enc.put(&self.payload);
    }
}

impl Transaction {
    pub fn value_transfer(inputs: Vec<Input>, outputs: Vec<Output>) -> Self {
        Transaction {
            inputs,
            outputs,
            payload: Payload::ValueTransfer,
        }
    }

    pub fn id(&self) -> HashDigest {
        self.canonical_digest()
    }

    /// Serialized size in bytes.
    pub fn size(&self) -> u32 {
        self.canonical_bytes().len() as u32
    }

    pub fn kind(&self) -> TxKind {
        match self.payload {
            Payload::ValueTransfer => TxKind::ValueTransfer,
            Payload::RadRequest(_) => TxKind::RadRequest,
            Payload::CommitPledge { .. } => TxKind::CommitPledge,
            Payload::RevealRedeem { .. } => TxKind::RevealRedeem,
        }
    }

    pub fn outpoint(&self, index: u32) -> OutPoint {
        OutPoint::new(self.id(), index)
    }

    /// State-independent well-formedness: non-empty distinct inputs, output
    /// shares summing to at most one, and the shape each payload demands.
    pub fn check_shape(&self) -> Result<(), LedgerError> {
        let bad = |why| Err(LedgerError::MalformedPayload(why));
        if self.inputs.is_empty() {
            return bad("transaction has no inputs");
        }
        let distinct: BTreeSet<_> = self.inputs.iter().map(|i| i.source).collect();
        if distinct.len() != self.inputs.len() {
            return bad("input listed twice");
        }
        if !shares_fit(&self.outputs) {
            return bad("output shares exceed one");
        }
        let owner_only = |allowed: &dyn Fn(&Unlock) -> bool| self.inputs.iter().all(|i| allowed(&i.unlock));
        match &self.payload {
            Payload::ValueTransfer => {
                if !owner_only(&|u| matches!(u, Unlock::Owner(_) | Unlock::Refund | Unlock::Deliver { .. })) {
                    return bad("value transfer with a witnessing unlock");
                }
                if self.outputs.iter().any(|o| matches!(o.lock, Lock::Request(_) | Lock::Commit { .. })) {
                    return bad("value transfer creating escrow");
                }
            }
            Payload::RadRequest(spec) => {
                if !owner_only(&|u| matches!(u, Unlock::Owner(p) if *p == spec.client)) {
                    return bad("request inputs must belong to the client");
                }
                let mut expected = alloc::vec![Lock::Request(RequestRole::Witnessing)];
                if spec.deliver.is_some() {
                    expected.push(Lock::Request(RequestRole::Delivery));
                }
                if self.outputs.len() < expected.len()
                    || self.outputs.iter().zip(&expected).any(|(o, e)| o.lock != *e)
                {
                    return bad("request escrow outputs missing or out of order");
                }
                if self.outputs[expected.len()..].iter().any(|o| !matches!(o.lock, Lock::PayTo(_))) {
                    return bad("request change must be plain payments");
                }
            }
            Payload::CommitPledge { request, witness, digest, proof } => {
                let [input] = self.inputs.as_slice() else {
                    return bad("pledge spends exactly the request escrow");
                };
                let pledge = Unlock::Pledge { witness: *witness, digest: *digest };
                if input.source != OutPoint::new(*request, 0) || input.unlock != pledge {
                    return bad("pledge input does not match payload");
                }
                let commit = Lock::Commit { request: *request, witness: *witness, digest: *digest };
                if self.outputs.len() != 1 || self.outputs[0].lock != commit || self.outputs[0].share != Share::ONE {
                    return bad("pledge must create one full commit output");
                }
                if proof.participant != *witness
                    || proof.kind != TaskKindFlag::RetrieveAttest
                    || proof.request != Some(*request)
                {
                    return bad("assignment proof does not match pledge");
                }
            }
            Payload::RevealRedeem { witness, value, prev_block, .. } => {
                let reveal = Unlock::Reveal { value: value.clone(), prev_block: *prev_block };
                if self.inputs[0].unlock != reveal {
                    return bad("redeem must open the witness's own commitment first");
                }
                if !self.inputs[1..]
                    .iter()
                    .all(|i| i.unlock == Unlock::Forfeit { claimant: *witness })
                {
                    return bad("redeem may only add forfeits claimed by the witness");
                }
                if self.outputs.iter().any(|o| o.lock != Lock::PayTo(*witness)) {
                    return bad("redeem pays the witness only");
                }
            }
        }
        Ok(())
    }
}

/// Exact check that `Σ shares ≤ 1`.
pub(crate) fn shares_fit(outputs: &[Output]) -> bool {
    let mut num = BigUint::from(0u8);
    let mut den = BigUint::from(1u8);
    for o in outputs {
        let (n, d) = (BigUint::from(o.share.num()), BigUint::from(o.share.den()));
        num = num * &d + n * &den;
        den *= d;
        if num > den {
            return false;
        }
    }
    true
}

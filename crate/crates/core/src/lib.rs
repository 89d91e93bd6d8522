//! Protocol core for a reputation-weighted decentralized oracle network.
//!
//! Everything in this crate is deterministic and free of I/O so it can be
//! embedded anywhere an allocator exists:
//!
//! - [`ledger`]: append-only epoch DAG, percentage-valued UTXOs, double-spend
//!   value splitting and the transaction algebra.
//! - [`reputation`]: conserved reputation points, progressive demurrage and
//!   the engaged set.
//! - [`eligibility`]: epoch beacons, influence and the keyed-hash lotteries
//!   for block mining and task assignment.
//! - [`consensus`]: Truth-By-Consensus over an epoch's claims, including the
//!   reputation-weighted principal component used to spot coordination.
//! - [`rad`]: retrieve-attest-deliver requests, simulated retrieval,
//!   commit/reveal and the request lifecycle.
//! - [`economics`]: issuance schedule, fee formulas and block template
//!   selection.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod amount;
pub mod consensus;
pub mod economics;
pub mod eligibility;
pub mod hash;
pub mod keys;
pub mod ledger;
pub mod rad;
pub mod reputation;

mod bigmath;
#[cfg(feature = "serde")]
mod serde_util;

pub use amount::{Share, TokenAmount, NANOWIT_PER_WIT};
pub use hash::{Canonical, Encoder, HashDigest};
pub use keys::{KeyRegistry, Keypair, ParticipantId, SecretKey, SignatureOracle};
pub use ledger::EpochIndex;

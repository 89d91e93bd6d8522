//! Issuance schedule, fee formulas and block template selection.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::amount::TokenAmount;
use crate::hash::HashDigest;
use crate::rad::ComplexityCost;

/// Block size ceiling in bytes.
pub const MAX_BLOCK_BYTES: u32 = 1_048_576;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IssuanceParams {
    pub initial_reward: TokenAmount,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::dec"))]
    pub halving_period: u64,
}

impl Default for IssuanceParams {
    fn default() -> Self {
        IssuanceParams {
            initial_reward: TokenAmount::from_wits(500),
            halving_period: 1_750_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeeParams {
    /// Tokens per (work unit × witness).
    pub witness_fee_rate: TokenAmount,
    /// Tokens per serialized byte.
    pub min_miner_fee_rate: TokenAmount,
}

impl Default for FeeParams {
    fn default() -> Self {
        FeeParams {
            witness_fee_rate: TokenAmount::from_wits(1),
            min_miner_fee_rate: TokenAmount::from_nanowits(1),
        }
    }
}

/// Newly minted tokens for a block at `height`.
pub fn block_reward(height: u64, p: &IssuanceParams) -> TokenAmount {
    let halvings = height / p.halving_period;
    if halvings >= 64 {
        return TokenAmount::ZERO;
    }
    TokenAmount::from_nanowits(p.initial_reward.nanowits() >> halvings)
}

/// Total minted by blocks `0..height`, in nanoWit.
pub fn cumulative_supply(height: u64, p: &IssuanceParams) -> u128 {
    let mut total: u128 = 0;
    let full = height / p.halving_period;
    for era in 0..full.min(64) {
        let reward = (p.initial_reward.nanowits() >> era) as u128;
        if reward == 0 {
            return total;
        }
        total += reward * p.halving_period as u128;
    }
    total + block_reward(height, p).nanowits() as u128 * (height % p.halving_period) as u128
}

/// Supply once the reward has underflowed to zero.
pub fn supply_limit(p: &IssuanceParams) -> u128 {
    cumulative_supply(p.halving_period.saturating_mul(64), p)
}

/// `rate · ℛ · Σ complexity`.
pub fn witness_fee(replication: u32, paths: &[ComplexityCost], rate: &FeeParams) -> TokenAmount {
    let work: u64 = paths.iter().map(|c| c.get() as u64).sum();
    rate.witness_fee_rate
        .checked_mul(replication as u64 * work)
        .expect("witness fee overflow")
}

/// A delivery is one unit of work by one bridge, priced like retrieval work.
pub fn bridge_fee(delivery: ComplexityCost, rate: &FeeParams) -> TokenAmount {
    rate.witness_fee_rate
        .checked_mul(delivery.get() as u64)
        .expect("bridge fee overflow")
}

/// Each committer's reward and the remainder that goes to the block miner.
pub fn split_witness_reward(fee: TokenAmount, committers: u32) -> (TokenAmount, TokenAmount) {
    assert!(committers >= 1, "no committers");
    fee.split(committers as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub id: HashDigest,
    pub fee: TokenAmount,
    pub size: u32,
}

fn by_fee_rate(a: &Candidate, b: &Candidate) -> Ordering {
    let lhs = a.fee.nanowits() as u128 * b.size as u128;
    let rhs = b.fee.nanowits() as u128 * a.size as u128;
    rhs.cmp(&lhs).then_with(|| a.id.cmp(&b.id))
}

/// Greedy block template: highest fee per byte first, ties by ascending id,
/// skipping whatever no longer fits.
pub fn select_transactions(mempool: &[Candidate], limit: u32) -> Vec<HashDigest> {
    let limit = limit.min(MAX_BLOCK_BYTES);
    let mut order: Vec<&Candidate> = mempool.iter().collect();
    order.sort_by(|a, b| by_fee_rate(a, b));
    let mut used: u64 = 0;
    let mut out = Vec::new();
    for c in order {
        if used + c.size as u64 <= limit as u64 {
            used += c.size as u64;
            out.push(c.id);
        }
    }
    out
}

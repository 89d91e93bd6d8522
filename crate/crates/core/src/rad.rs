//! Retrieve-attest-deliver requests.
//!
//! A request names one or more retrieval paths, each reading a key from a
//! [`SourceOracle`] (the simulated web) and normalizing the result, and an
//! [`Aggregation`] reducing the path results to a single claim. Witnesses
//! commit to `hash(claim ‖ witness_pk ‖ prev_block)` and later reveal the
//! claim; [`verify_reveal`] checks the opening.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::amount::TokenAmount;
use crate::economics::{self, FeeParams};
use crate::hash::{Canonical, Encoder, HashDigest};
use crate::keys::ParticipantId;
use crate::ledger::EpochIndex;

/// Claim bytes committed when a source is unavailable or a transform fails.
pub const ERROR_VALUE: &[u8] = b"\x00ERROR";

/// Abstract work units of a path or a delivery; always at least 1.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "u32", into = "u32"))]
pub struct ComplexityCost(u32);

impl ComplexityCost {
    pub const ONE: ComplexityCost = ComplexityCost(1);

    pub fn new(units: u32) -> Option<Self> {
        (units >= 1).then_some(ComplexityCost(units))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for ComplexityCost {
    type Error = &'static str;
    fn try_from(v: u32) -> Result<Self, Self::Error> {
        ComplexityCost::new(v).ok_or("complexity must be at least 1")
    }
}

impl From<ComplexityCost> for u32 {
    fn from(c: ComplexityCost) -> u32 {
        c.0
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Normalization {
    Identity,
    /// Dot-separated path into a JSON document.
    SelectField(String),
    ToLowercase,
    /// Parse as a decimal number and print with exactly `k` fractional digits.
    RoundDecimal(u32),
}

impl Normalization {
    pub fn apply(&self, raw: &str) -> Result<String, RetrievalError> {
        match self {
            Normalization::Identity => Ok(raw.to_string()),
            Normalization::ToLowercase => Ok(raw.to_lowercase()),
            Normalization::RoundDecimal(k) => {
                let x: f64 = raw.trim().parse().map_err(|_| RetrievalError::NotNumeric)?;
                Ok(alloc::format!("{:.*}", *k as usize, x))
            }
            Normalization::SelectField(path) => {
                let doc: serde_json::Value =
                    serde_json::from_str(raw).map_err(|_| RetrievalError::NotJson)?;
                let mut cur = &doc;
                for part in path.split('.') {
                    cur = cur.get(part).ok_or(RetrievalError::MissingField)?;
                }
                Ok(match cur {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
            }
        }
    }

    fn encode(&self, enc: &mut Encoder) {
        match self {
            Normalization::Identity => {
                enc.u8(0);
            }
            Normalization::SelectField(f) => {
                enc.u8(1).str(f);
            }
            Normalization::ToLowercase => {
                enc.u8(2);
            }
            Normalization::RoundDecimal(k) => {
                enc.u8(3).u32(*k);
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RetrievalPath {
    pub source_key: String,
    #[cfg_attr(feature = "serde", serde(default = "identity"))]
    pub normalization: Normalization,
    #[cfg_attr(feature = "serde", serde(default = "unit_cost"))]
    pub complexity: ComplexityCost,
}

#[cfg(feature = "serde")]
fn identity() -> Normalization {
    Normalization::Identity
}

#[cfg(feature = "serde")]
fn unit_cost() -> ComplexityCost {
    ComplexityCost::ONE
}

impl RetrievalPath {
    pub fn new(source_key: &str) -> Self {
        RetrievalPath {
            source_key: source_key.to_string(),
            normalization: Normalization::Identity,
            complexity: ComplexityCost::ONE,
        }
    }

    pub fn with(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }
}

impl Canonical for RetrievalPath {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.source_key);
        self.normalization.encode(enc);
        enc.u32(self.complexity.get());
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Aggregation {
    First,
    MedianNumeric,
    Mode,
    ConcatSorted,
}

impl Aggregation {
    pub fn apply(self, mut values: Vec<String>) -> Result<String, RetrievalError> {
        if values.is_empty() {
            return Err(RetrievalError::NoValues);
        }
        match self {
            Aggregation::First => Ok(values.swap_remove(0)),
            Aggregation::ConcatSorted => {
                values.sort();
                Ok(values.join(","))
            }
            Aggregation::Mode => {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for v in &values {
                    *counts.entry(v.as_str()).or_default() += 1;
                }
                // ascending iteration with a strict comparison keeps the smallest on ties
                let best = counts
                    .iter()
                    .fold(None::<(&str, usize)>, |acc, (v, c)| match acc {
                        Some((_, bc)) if bc >= *c => acc,
                        _ => Some((v, *c)),
                    })
                    .map(|(v, _)| v.to_string());
                best.ok_or(RetrievalError::NoValues)
            }
            Aggregation::MedianNumeric => {
                let mut parsed = Vec::with_capacity(values.len());
                for v in values {
                    let x: f64 = v.trim().parse().map_err(|_| RetrievalError::NotNumeric)?;
                    if !x.is_finite() {
                        return Err(RetrievalError::NotNumeric);
                    }
                    parsed.push((x, v));
                }
                parsed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
                let n = parsed.len();
                if n % 2 == 1 {
                    Ok(parsed.swap_remove(n / 2).1)
                } else {
                    let mid = (parsed[n / 2 - 1].0 + parsed[n / 2].0) / 2.0;
                    Ok(alloc::format!("{mid}"))
                }
            }
        }
    }

    fn code(self) -> u8 {
        match self {
            Aggregation::First => 0,
            Aggregation::MedianNumeric => 1,
            Aggregation::Mode => 2,
            Aggregation::ConcatSorted => 3,
        }
    }
}

/// Stub description of where a result is delivered.
#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DeliverySpec {
    pub target: String,
    #[cfg_attr(feature = "serde", serde(default = "unit_cost"))]
    pub complexity: ComplexityCost,
}

/// Everything a client puts in a request transaction.
#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RequestSpec {
    pub client: ParticipantId,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::dec"))]
    pub nonce: u64,
    pub paths: Vec<RetrievalPath>,
    pub aggregation: Aggregation,
    pub replication: u32,
    pub witness_fee: TokenAmount,
    pub bridge_fee: TokenAmount,
    pub time_lock: Option<EpochIndex>,
    pub undecidable: bool,
    pub deliver: Option<DeliverySpec>,
}

impl RequestSpec {
    pub fn complexities(&self) -> Vec<ComplexityCost> {
        self.paths.iter().map(|p| p.complexity).collect()
    }
}

impl Canonical for RequestSpec {
    fn encode(&self, enc: &mut Encoder) {
        enc.digest(&self.client.0).u64(self.nonce);
        enc.len(self.paths.len());
        for p in &self.paths {
            p.encode(enc);
        }
        enc.u8(self.aggregation.code())
            .u32(self.replication)
            .u64(self.witness_fee.nanowits())
            .u64(self.bridge_fee.nanowits())
            .option(self.time_lock.as_ref(), |e, t| {
                e.u64(t.0);
            })
            .bool(self.undecidable)
            .option(self.deliver.as_ref(), |e, d| {
                e.str(&d.target).u32(d.complexity.get());
            });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("replication factor {0} is below the minimum of 2")]
    ReplicationTooLow(u32),
    #[error("replication factor {got} exceeds the cap of {cap}")]
    ReplicationTooHigh { got: u32, cap: u32 },
    #[error("attached value {attached} nanoWit does not cover the required {required} nanoWit")]
    InsufficientFee { attached: TokenAmount, required: TokenAmount },
    #[error("request has no retrieval paths")]
    NoPaths,
}

/// Checks a request before it is posted. `attached` is the value the request
/// transaction locks for witnesses, bridges and the miner.
pub fn validate_request(
    spec: &RequestSpec,
    attached: TokenAmount,
    fees: &FeeParams,
    max_replication: u32,
) -> Result<(), ValidationError> {
    if spec.replication < 2 {
        return Err(ValidationError::ReplicationTooLow(spec.replication));
    }
    if spec.replication > max_replication {
        return Err(ValidationError::ReplicationTooHigh {
            got: spec.replication,
            cap: max_replication,
        });
    }
    if spec.paths.is_empty() {
        return Err(ValidationError::NoPaths);
    }
    let min_witness = economics::witness_fee(spec.replication, &spec.complexities(), fees);
    let min_bridge = spec
        .deliver
        .as_ref()
        .map_or(TokenAmount::ZERO, |d| economics::bridge_fee(d.complexity, fees));
    let size = spec.canonical_bytes().len() as u64;
    let miner = fees.min_miner_fee_rate.checked_mul(size).expect("fee overflow");
    let declared_short = spec.witness_fee < min_witness || spec.bridge_fee < min_bridge;
    let required = spec.witness_fee + spec.bridge_fee + miner;
    if declared_short || attached < required {
        return Err(ValidationError::InsufficientFee {
            attached,
            required: required.max(min_witness + min_bridge + miner),
        });
    }
    Ok(())
}

/// Read access to the simulated web.
pub trait SourceOracle {
    fn read(&self, key: &str, epoch: EpochIndex) -> Option<String>;
}

/// Source values that change over time: each key maps epochs to the value
/// that holds from that epoch on.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct SourceTable {
    series: BTreeMap<String, BTreeMap<EpochIndex, String>>,
}

impl SourceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, from: EpochIndex, value: &str) {
        self.series
            .entry(key.to_string())
            .or_default()
            .insert(from, value.to_string());
    }

    pub fn constant(key: &str, value: &str) -> Self {
        let mut t = Self::new();
        t.set(key, EpochIndex(0), value);
        t
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }
}

impl SourceOracle for SourceTable {
    fn read(&self, key: &str, epoch: EpochIndex) -> Option<String> {
        self.series
            .get(key)?
            .range(..=epoch)
            .next_back()
            .map(|(_, v)| v.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RetrievalError {
    #[error("source {0:?} is unavailable")]
    SourceUnavailable(String),
    #[error("value is not numeric")]
    NotNumeric,
    #[error("value is not a JSON document")]
    NotJson,
    #[error("selected field is missing")]
    MissingField,
    #[error("nothing to aggregate")]
    NoValues,
}

/// Runs every path and the aggregation, producing the canonical claim text.
pub fn retrieve(
    spec: &RequestSpec,
    source: &dyn SourceOracle,
    epoch: EpochIndex,
) -> Result<String, RetrievalError> {
    let mut results = Vec::with_capacity(spec.paths.len());
    for path in &spec.paths {
        let raw = source
            .read(&path.source_key, epoch)
            .ok_or_else(|| RetrievalError::SourceUnavailable(path.source_key.clone()))?;
        results.push(path.normalization.apply(&raw)?);
    }
    spec.aggregation.apply(results)
}

/// How a witness reports what it saw.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WitnessView {
    Faithful,
    Substitute(Vec<u8>),
}

/// Claim bytes a witness commits to. Failures become [`ERROR_VALUE`], which
/// is committable like any other claim.
pub fn execute_retrieval(
    spec: &RequestSpec,
    source: &dyn SourceOracle,
    epoch: EpochIndex,
    view: &WitnessView,
) -> Vec<u8> {
    match view {
        WitnessView::Substitute(v) => v.clone(),
        WitnessView::Faithful => match retrieve(spec, source, epoch) {
            Ok(s) => s.into_bytes(),
            Err(_) => ERROR_VALUE.to_vec(),
        },
    }
}

/// `hash(value ‖ witness_pk ‖ prev_block)`.
pub fn commitment_digest(value: &[u8], witness: &ParticipantId, prev_block: &HashDigest) -> HashDigest {
    let mut enc = Encoder::new();
    enc.bytes(value).digest(&witness.0).digest(prev_block);
    enc.digest_of()
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Commitment {
    pub request: HashDigest,
    pub witness: ParticipantId,
    pub digest: HashDigest,
    pub epoch: EpochIndex,
    pub proof: crate::eligibility::EligibilityProof,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Reveal {
    pub request: HashDigest,
    pub witness: ParticipantId,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::hex_bytes"))]
    pub value: Vec<u8>,
    /// The block hash mixed into the commitment.
    pub prev_block: HashDigest,
}

pub fn verify_reveal(commit: &Commitment, reveal: &Reveal) -> bool {
    commit.request == reveal.request
        && commit.witness == reveal.witness
        && commitment_digest(&reveal.value, &reveal.witness, &reveal.prev_block) == commit.digest
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RequestState {
    Posted,
    Assignable,
    Assigned,
    Committing,
    Revealing,
    Resolved,
    Delivered,
}

impl fmt::Display for RequestState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LifecycleEvent {
    LockExpired { epoch: EpochIndex },
    Assigned,
    Committed { witness: ParticipantId, epoch: EpochIndex },
    AllCommitted,
    Revealed { witness: ParticipantId, epoch: EpochIndex },
    /// `timed_out` marks resolution with fewer than ℛ reveals.
    Resolved { timed_out: bool },
    Delivered,
    Relaunched,
    ReplacedByFee { witness_fee: TokenAmount, paths: Vec<RetrievalPath> },
}

impl LifecycleEvent {
    fn name(&self) -> &'static str {
        match self {
            LifecycleEvent::LockExpired { .. } => "lock_expired",
            LifecycleEvent::Assigned => "assigned",
            LifecycleEvent::Committed { .. } => "committed",
            LifecycleEvent::AllCommitted => "all_committed",
            LifecycleEvent::Revealed { .. } => "revealed",
            LifecycleEvent::Resolved { .. } => "resolved",
            LifecycleEvent::Delivered => "delivered",
            LifecycleEvent::Relaunched => "relaunched",
            LifecycleEvent::ReplacedByFee { .. } => "replaced_by_fee",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal transition: {event} in state {state}{}", if *.undecidable { " (undecidable)" } else { "" })]
pub struct IllegalTransition {
    pub state: RequestState,
    pub event: &'static str,
    pub undecidable: bool,
}

/// A posted request and its progress.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RadRequest {
    pub id: HashDigest,
    pub spec: RequestSpec,
    pub state: RequestState,
    pub posted_at: EpochIndex,
    pub committed: BTreeMap<ParticipantId, EpochIndex>,
    pub revealed: BTreeSet<ParticipantId>,
}

impl RadRequest {
    pub fn posted(id: HashDigest, spec: RequestSpec, epoch: EpochIndex) -> Self {
        RadRequest {
            id,
            spec,
            state: RequestState::Posted,
            posted_at: epoch,
            committed: BTreeMap::new(),
            revealed: BTreeSet::new(),
        }
    }

    pub fn is_undecidable(&self) -> bool {
        self.spec.undecidable
    }

    /// Returns the request after `event`, leaving `self` untouched.
    pub fn step(&self, event: &LifecycleEvent) -> Result<RadRequest, IllegalTransition> {
        lifecycle_step(self, event)
    }
}

pub fn lifecycle_step(req: &RadRequest, event: &LifecycleEvent) -> Result<RadRequest, IllegalTransition> {
    use LifecycleEvent as E;
    use RequestState as S;
    let illegal = || IllegalTransition {
        state: req.state,
        event: event.name(),
        undecidable: req.spec.undecidable,
    };
    let mut next = req.clone();
    if req.spec.undecidable {
        return match event {
            E::Relaunched => {
                next.spec.undecidable = false;
                Ok(next)
            }
            _ => Err(illegal()),
        };
    }
    match (req.state, event) {
        (S::Posted, E::LockExpired { epoch }) => {
            if req.spec.time_lock.is_some_and(|l| *epoch < l) {
                return Err(illegal());
            }
            next.state = S::Assignable;
        }
        (S::Assignable | S::Assigned, E::Assigned) => next.state = S::Assigned,
        (S::Committing, E::Assigned) => {}
        (S::Assigned | S::Committing, E::Committed { witness, epoch }) => {
            if req.committed.contains_key(witness) {
                return Err(illegal());
            }
            next.committed.insert(*witness, *epoch);
            next.state = S::Committing;
        }
        (S::Committing, E::AllCommitted) => {
            if req.committed.len() < req.spec.replication as usize {
                return Err(illegal());
            }
            next.state = S::Revealing;
        }
        (S::Revealing, E::Revealed { witness, epoch }) => {
            match req.committed.get(witness) {
                Some(c) if *epoch > *c && !req.revealed.contains(witness) => {}
                _ => return Err(illegal()),
            }
            next.revealed.insert(*witness);
        }
        (S::Revealing, E::Resolved { timed_out }) => {
            if !timed_out && req.revealed.len() < req.spec.replication as usize {
                return Err(illegal());
            }
            next.state = S::Resolved;
        }
        (S::Resolved, E::Delivered) => next.state = S::Delivered,
        (s, E::ReplacedByFee { witness_fee, paths }) if s < S::Resolved => {
            if *paths != req.spec.paths || *witness_fee <= req.spec.witness_fee {
                return Err(illegal());
            }
            next.spec.witness_fee = *witness_fee;
        }
        _ => return Err(illegal()),
    }
    Ok(next)
}

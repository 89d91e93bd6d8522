//! Epoch beacons, influence and the keyed-hash lotteries.
//!
//! A participant draws `sig = sign(t ‖ beacon ‖ flag ‖ request)` and wins when
//! `sig / 2^256 ≤ multiplier · influence`. The multiplier is the backup tier
//! for block mining and the number of vacant seats for task assignment.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigUint;

use crate::bigmath::scaled_bound;
use crate::hash::{Canonical, Encoder, HashDigest};
use crate::keys::{KeyRegistry, ParticipantId, SecretKey, SignatureOracle};
use crate::ledger::{EpochDag, EpochIndex};
use crate::reputation::{ReputationLedger, ReputationScore};

/// Share of the engaged reputation held by one participant, `num / den`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Influence {
    num: u128,
    den: u128,
}

impl Influence {
    pub const ZERO: Influence = Influence { num: 0, den: 1 };
    pub const ONE: Influence = Influence { num: 1, den: 1 };

    pub fn new(num: u128, den: u128) -> Option<Self> {
        (den > 0 && num <= den).then_some(Influence { num, den })
    }

    pub fn num(&self) -> u128 {
        self.num
    }

    pub fn den(&self) -> u128 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }
}

impl PartialOrd for Influence {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        let l = BigUint::from(self.num) * BigUint::from(other.den);
        let r = BigUint::from(other.num) * BigUint::from(self.den);
        Some(l.cmp(&r))
    }
}

/// Influence of every engaged participant, computed once per epoch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InfluenceTable {
    scores: BTreeMap<ParticipantId, ReputationScore>,
    total: u128,
}

impl InfluenceTable {
    pub fn new(rep: &ReputationLedger) -> Self {
        let scores: BTreeMap<_, _> = rep.engaged_set().into_iter().collect();
        let total = scores.values().map(|s| s.units()).sum();
        InfluenceTable { scores, total }
    }

    pub fn get(&self, p: &ParticipantId) -> Influence {
        match self.scores.get(p) {
            Some(s) => Influence { num: s.units(), den: self.total },
            None => Influence::ZERO,
        }
    }

    pub fn engaged(&self) -> impl Iterator<Item = &ParticipantId> {
        self.scores.keys()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// `r_p / Σ_{j ∈ engaged} r_j`; zero outside the engaged set.
pub fn influence(rep: &ReputationLedger, p: &ParticipantId) -> Influence {
    InfluenceTable::new(rep).get(p)
}

/// Public randomness for epoch `t`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct RandomBeacon(pub HashDigest);

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no blocks precede epoch {0}")]
pub struct NoHistory(pub EpochIndex);

/// Hash of the sorted block digests at the nearest non-empty checkpoint
/// before `t`, followed by `t`.
pub fn epoch_randomness(dag: &EpochDag, t: EpochIndex) -> Result<RandomBeacon, NoHistory> {
    if t.0 == 0 {
        return Err(NoHistory(t));
    }
    let (_, digests) = dag
        .by_checkpoint()
        .range(..t)
        .rev()
        .find(|(_, set)| !set.is_empty())
        .ok_or(NoHistory(t))?;
    let mut enc = Encoder::new();
    // BTreeSet iteration is already ascending
    for d in digests {
        enc.digest(d);
    }
    enc.u64(t.0);
    Ok(RandomBeacon(enc.digest_of()))
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum TaskKindFlag {
    Mine,
    RetrieveAttest,
    Deliver,
}

impl TaskKindFlag {
    pub fn code(self) -> u8 {
        match self {
            TaskKindFlag::Mine => 0,
            TaskKindFlag::RetrieveAttest => 1,
            TaskKindFlag::Deliver => 2,
        }
    }
}

/// Mining tier; 1 is primary.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "u32", into = "u32"))]
pub struct BackupIndex(u32);

impl BackupIndex {
    pub const PRIMARY: BackupIndex = BackupIndex(1);

    pub fn new(tier: u32) -> Option<Self> {
        (tier >= 1).then_some(BackupIndex(tier))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for BackupIndex {
    type Error = &'static str;
    fn try_from(v: u32) -> Result<Self, Self::Error> {
        BackupIndex::new(v).ok_or("backup index starts at 1")
    }
}

impl From<BackupIndex> for u32 {
    fn from(b: BackupIndex) -> u32 {
        b.0
    }
}

impl fmt::Display for BackupIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EligibilityProof {
    pub participant: ParticipantId,
    pub epoch: EpochIndex,
    pub kind: TaskKindFlag,
    /// Request the draw was for; `None` for mining.
    pub request: Option<HashDigest>,
    pub signature: HashDigest,
    pub tier: BackupIndex,
}

impl EligibilityProof {
    #[cfg(test)]
    pub(crate) fn placeholder(participant: ParticipantId) -> Self {
        EligibilityProof {
            participant,
            epoch: EpochIndex(0),
            kind: TaskKindFlag::RetrieveAttest,
            request: None,
            signature: HashDigest::ZERO,
            tier: BackupIndex::PRIMARY,
        }
    }
}

impl Canonical for EligibilityProof {
    fn encode(&self, enc: &mut Encoder) {
        enc.digest(&self.participant.0)
            .u64(self.epoch.0)
            .u8(self.kind.code())
            .option(self.request.as_ref(), |e, r| {
                e.digest(r);
            })
            .digest(&self.signature)
            .u32(self.tier.0);
    }
}

/// Bytes signed for a lottery draw.
pub fn lottery_message(
    t: EpochIndex,
    beacon: &RandomBeacon,
    flag: TaskKindFlag,
    request: Option<&HashDigest>,
) -> Vec<u8> {
    let mut enc = Encoder::tagged("lottery");
    enc.u64(t.0).digest(&beacon.0).u8(flag.code()).option(request, |e, r| {
        e.digest(r);
    });
    enc.finish()
}

/// `floor(2^256 · multiplier · influence)` or "always" once that reaches 2^256.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Threshold {
    Always,
    Bound([u8; 32]),
}

impl Threshold {
    pub fn new(multiplier: u32, inf: &Influence) -> Self {
        let num = BigUint::from(inf.num) * BigUint::from(multiplier);
        match scaled_bound(&num, &BigUint::from(inf.den)) {
            None => Threshold::Always,
            Some(b) => Threshold::Bound(b),
        }
    }

    pub fn admits(&self, sig: &HashDigest) -> bool {
        match self {
            Threshold::Always => true,
            // big-endian byte order matches numeric order
            Threshold::Bound(b) => sig.0 <= *b,
        }
    }
}

/// Memoizes thresholds; many participants share an influence value.
#[derive(Clone, Debug, Default)]
pub struct ThresholdCache {
    map: BTreeMap<(u128, u128, u32), Threshold>,
}

impl ThresholdCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, multiplier: u32, inf: &Influence) -> Threshold {
        *self
            .map
            .entry((inf.num, inf.den, multiplier))
            .or_insert_with(|| Threshold::new(multiplier, inf))
    }

    pub fn clear(&mut self) {
        self.map.clear();
    }
}

/// Lottery draw for one participant. Needs the secret key; nobody else can
/// evaluate it.
#[allow(clippy::too_many_arguments)]
pub fn check_eligibility(
    secret: &SecretKey,
    t: EpochIndex,
    beacon: &RandomBeacon,
    flag: TaskKindFlag,
    request: Option<&HashDigest>,
    multiplier: u32,
    inf: &Influence,
) -> Option<EligibilityProof> {
    check_with_threshold(secret, t, beacon, flag, request, multiplier, &Threshold::new(multiplier, inf))
}

#[allow(clippy::too_many_arguments)]
pub fn check_with_threshold(
    secret: &SecretKey,
    t: EpochIndex,
    beacon: &RandomBeacon,
    flag: TaskKindFlag,
    request: Option<&HashDigest>,
    multiplier: u32,
    threshold: &Threshold,
) -> Option<EligibilityProof> {
    let signature = secret.sign(&lottery_message(t, beacon, flag, request));
    threshold.admits(&signature).then(|| EligibilityProof {
        participant: secret.public(),
        epoch: t,
        kind: flag,
        request: request.copied(),
        signature,
        tier: BackupIndex(multiplier.max(1)),
    })
}

/// Recomputes the draw from public data: the signature must bind the proof's
/// fields and fall under the threshold for `multiplier`.
pub fn verify_proof(
    proof: &EligibilityProof,
    beacon: &RandomBeacon,
    rep: &ReputationLedger,
    multiplier: u32,
    oracle: &dyn SignatureOracle,
) -> bool {
    verify_with_table(proof, beacon, &InfluenceTable::new(rep), multiplier, oracle)
}

pub fn verify_with_table(
    proof: &EligibilityProof,
    beacon: &RandomBeacon,
    table: &InfluenceTable,
    multiplier: u32,
    oracle: &dyn SignatureOracle,
) -> bool {
    let msg = lottery_message(proof.epoch, beacon, proof.kind, proof.request.as_ref());
    oracle.check(&proof.participant, &msg, &proof.signature)
        && Threshold::new(multiplier, &table.get(&proof.participant)).admits(&proof.signature)
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Assignment {
    pub assigned: Vec<EligibilityProof>,
    /// Seats still vacant after this round.
    pub deficit: u32,
}

/// One assignment round for `request` with `vacancies` open seats. Every
/// engaged participant not in `exclude` draws with multiplier `vacancies`;
/// winners are returned in participant order.
#[allow(clippy::too_many_arguments)]
pub fn assign_task(
    request: &HashDigest,
    vacancies: u32,
    t: EpochIndex,
    beacon: &RandomBeacon,
    table: &InfluenceTable,
    keys: &KeyRegistry,
    exclude: &BTreeSet<ParticipantId>,
    cache: &mut ThresholdCache,
) -> Assignment {
    if vacancies == 0 {
        return Assignment::default();
    }
    let mut assigned = Vec::new();
    for p in table.engaged() {
        if exclude.contains(p) {
            continue;
        }
        let Some(secret) = keys.secret(p) else { continue };
        let threshold = cache.get(vacancies, &table.get(p));
        if let Some(proof) = check_with_threshold(
            secret,
            t,
            beacon,
            TaskKindFlag::RetrieveAttest,
            Some(request),
            vacancies,
            &threshold,
        ) {
            assigned.push(proof);
        }
    }
    let deficit = vacancies.saturating_sub(assigned.len() as u32);
    Assignment { assigned, deficit }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::Keypair;
    use crate::reputation::DecayRate;
    use alloc::collections::BTreeMap;

    fn keys(n: usize) -> Vec<Keypair> {
        (0..n).map(|i| Keypair::derive(&(i as u64).to_be_bytes())).collect()
    }

    #[test]
    fn influence_examples() {
        let ks = keys(3);
        let (a, b, c) = (ks[0].public, ks[1].public, ks[2].public);
        let mut init = BTreeMap::new();
        init.insert(a, ReputationScore::from_points(4));
        init.insert(b, ReputationScore::from_points(6));
        let rep = ReputationLedger::with_initial_scores([a, b, c], DecayRate::DEFAULT, &init).unwrap();
        assert_eq!(influence(&rep, &a).to_f64(), 0.4);
        assert_eq!(influence(&rep, &b).to_f64(), 0.6);
        assert!(influence(&rep, &c).is_zero());

        let mut solo = BTreeMap::new();
        solo.insert(a, ReputationScore::from_points(4));
        let rep = ReputationLedger::with_initial_scores([a, c], DecayRate::DEFAULT, &solo).unwrap();
        let sole = influence(&rep, &a);
        assert_eq!(sole.num(), sole.den());
    }

    #[test]
    fn full_influence_always_wins() {
        let k = Keypair::derive(b"x");
        let beacon = RandomBeacon(HashDigest::of(b"b"));
        for t in 1..50 {
            assert!(check_eligibility(&k.secret, EpochIndex(t), &beacon, TaskKindFlag::Mine, None, 1, &Influence::ONE)
                .is_some());
            assert!(check_eligibility(&k.secret, EpochIndex(t), &beacon, TaskKindFlag::Mine, None, 1, &Influence::ZERO)
                .is_none());
        }
    }

    #[test]
    fn threshold_monotone_in_multiplier() {
        let inf = Influence::new(1, 100).unwrap();
        let beacon = RandomBeacon(HashDigest::of(b"b"));
        for (i, k) in keys(300).iter().enumerate() {
            let t = EpochIndex(i as u64 + 1);
            let mut was = false;
            for m in 1..10 {
                let now = check_eligibility(&k.secret, t, &beacon, TaskKindFlag::Mine, None, m, &inf).is_some();
                assert!(!was || now);
                was = now;
            }
        }
    }

    #[test]
    fn proof_round_trip_and_tamper() {
        let ks = keys(4);
        let reg: KeyRegistry = ks.iter().copied().collect();
        let rep = ReputationLedger::new(ks.iter().map(|k| k.public), DecayRate::DEFAULT);
        let beacon = RandomBeacon(HashDigest::of(b"beacon"));
        let inf = influence(&rep, &ks[0].public);
        let proof = (1..1000)
            .find_map(|t| check_eligibility(&ks[0].secret, EpochIndex(t), &beacon, TaskKindFlag::Mine, None, 1, &inf))
            .unwrap();
        assert!(verify_proof(&proof, &beacon, &rep, 1, &reg));
        let mut tampered = proof.clone();
        tampered.epoch = EpochIndex(tampered.epoch.0 + 1);
        assert!(!verify_proof(&tampered, &beacon, &rep, 1, &reg));
        let mut other = proof.clone();
        other.participant = ks[1].public;
        assert!(!verify_proof(&other, &beacon, &rep, 1, &reg));
    }

    #[test]
    fn zero_vacancies_assign_nobody() {
        let ks = keys(3);
        let reg: KeyRegistry = ks.iter().copied().collect();
        let rep = ReputationLedger::new(ks.iter().map(|k| k.public), DecayRate::DEFAULT);
        let a = assign_task(
            &HashDigest::ZERO,
            0,
            EpochIndex(1),
            &RandomBeacon::default(),
            &InfluenceTable::new(&rep),
            &reg,
            &BTreeSet::new(),
            &mut ThresholdCache::new(),
        );
        assert_eq!(a, Assignment::default());
    }

    #[test]
    fn saturated_assignment_takes_everyone() {
        let ks = keys(5);
        let reg: KeyRegistry = ks.iter().copied().collect();
        let rep = ReputationLedger::new(ks.iter().map(|k| k.public), DecayRate::DEFAULT);
        let a = assign_task(
            &HashDigest::ZERO,
            5,
            EpochIndex(1),
            &RandomBeacon::default(),
            &InfluenceTable::new(&rep),
            &reg,
            &BTreeSet::new(),
            &mut ThresholdCache::new(),
        );
        assert_eq!(a.assigned.len(), 5);
        assert_eq!(a.deficit, 0);
    }
}

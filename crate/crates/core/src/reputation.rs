//! Conserved reputation with progressive demurrage.
//!
//! Scores are exact fixed-point numbers with twelve decimal places (a rational
//! with denominator 10^12). The ledger holds a fixed total: every point taken
//! from someone lands either on another score or in the carried pool, and
//! integer division remainders stay in the pool, so
//! `Σ scores + pool = total` holds exactly after every operation.
//!
//! Neutral scores (exactly 1) are not stored.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::bigmath::mul_div_floor;
use crate::keys::ParticipantId;

/// Fixed-point units per reputation point.
pub const SCALE: u128 = 1_000_000_000_000;

/// Reputation points with 10^-12 resolution.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Debug)]
pub struct ReputationScore(u128);

impl ReputationScore {
    pub const NEUTRAL: ReputationScore = ReputationScore(SCALE);
    pub const ZERO: ReputationScore = ReputationScore(0);

    pub const fn from_units(units: u128) -> Self {
        ReputationScore(units)
    }

    pub const fn from_points(points: u64) -> Self {
        ReputationScore(points as u128 * SCALE)
    }

    pub const fn units(self) -> u128 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        (self.0 / SCALE) as f64 + (self.0 % SCALE) as f64 / SCALE as f64
    }

    /// Nearest representable score with twelve significant digits.
    pub fn from_f64_12_digits(x: f64) -> Self {
        ReputationScore(snap_significant(x))
    }

    pub fn is_engaged(self) -> bool {
        self.0 > SCALE
    }
}

impl fmt::Display for ReputationScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:012}", self.0 / SCALE, self.0 % SCALE)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid decimal reputation value")]
pub struct ParseScoreError;

/// Parses a plain decimal with at most twelve fractional digits.
pub(crate) fn parse_fixed(s: &str) -> Result<u128, ParseScoreError> {
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int.is_empty() || frac.len() > 12 || !int.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseScoreError);
    }
    if !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseScoreError);
    }
    let int: u128 = int.parse().map_err(|_| ParseScoreError)?;
    let mut frac_units: u128 = 0;
    for (i, b) in frac.bytes().enumerate() {
        frac_units += (b - b'0') as u128 * 10u128.pow(11 - i as u32);
    }
    int.checked_mul(SCALE)
        .and_then(|v| v.checked_add(frac_units))
        .ok_or(ParseScoreError)
}

impl FromStr for ReputationScore {
    type Err = ParseScoreError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fixed(s).map(ReputationScore)
    }
}

#[cfg(feature = "serde")]
crate::serde_util::string_serde!(ReputationScore);

/// A fraction in `[0, 1]` with 10^-12 resolution (penalty rates, deviations).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Debug)]
pub struct UnitFraction(u128);

impl UnitFraction {
    pub const ZERO: UnitFraction = UnitFraction(0);
    pub const ONE: UnitFraction = UnitFraction(SCALE);

    pub fn from_ratio(num: u64, den: u64) -> Option<Self> {
        if den == 0 || num > den {
            return None;
        }
        Some(UnitFraction(num as u128 * SCALE / den as u128))
    }

    /// Clamps into `[0, 1]` and rounds to the nearest unit.
    pub fn from_f64(x: f64) -> Self {
        if x.is_nan() || x <= 0.0 {
            return UnitFraction(0);
        }
        if x >= 1.0 {
            return UnitFraction(SCALE);
        }
        UnitFraction(libm::round(x * SCALE as f64) as u128)
    }

    pub fn units(self) -> u128 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }
}

impl fmt::Display for UnitFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:012}", self.0 / SCALE, self.0 % SCALE)
    }
}

impl FromStr for UnitFraction {
    type Err = ParseScoreError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v = parse_fixed(s)?;
        if v > SCALE {
            return Err(ParseScoreError);
        }
        Ok(UnitFraction(v))
    }
}

#[cfg(feature = "serde")]
crate::serde_util::string_serde!(UnitFraction);

/// Demurrage decay rate in `[0, 1]`.
#[derive(Clone, Copy, PartialEq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecayRate(f64);

impl DecayRate {
    pub const DEFAULT: DecayRate = DecayRate(0.99);

    pub fn new(v: f64) -> Option<Self> {
        (0.0..=1.0).contains(&v).then_some(DecayRate(v))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for DecayRate {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Rounds a value `>= 1` to twelve significant digits, in fixed-point units.
fn snap_significant(x: f64) -> u128 {
    if x.is_nan() || x <= 0.0 {
        return 0;
    }
    let exp = libm::floor(libm::log10(x)) as i32;
    // digits * 10^(exp - 11) ≈ x
    let digits = libm::round(x / libm::pow(10.0, (exp - 11) as f64)) as u128;
    let shift = exp + 1; // units = digits * 10^(exp - 11 + 12)
    if shift >= 0 {
        digits * 10u128.pow(shift as u32)
    } else {
        digits / 10u128.pow((-shift) as u32)
    }
}

/// One epoch of demurrage: `score · decay^(log10 score)` for scores above
/// neutral; neutral and sub-neutral scores are untouched. Never drops a score
/// below neutral and never raises it.
pub fn apply_demurrage(score: ReputationScore, decay: DecayRate) -> ReputationScore {
    if !score.is_engaged() {
        return score;
    }
    let s = score.to_f64();
    let next = s * libm::pow(decay.get(), libm::log10(s));
    let snapped = snap_significant(next).clamp(SCALE, score.0);
    ReputationScore(snapped)
}

/// Outcome of Truth-By-Consensus for reputation purposes.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochVerdict {
    pub honest: BTreeSet<ParticipantId>,
    /// Deviation score in `[0, 1]` per dishonest participant.
    pub dishonest: BTreeMap<ParticipantId, f64>,
    /// Honest witnesses and bridges who completed a task this epoch.
    pub task_fulfillers: BTreeSet<ParticipantId>,
}

impl EpochVerdict {
    /// Folds a later epoch's verdict into this one. A participant dishonest in
    /// either keeps the larger deviation and loses its honest standing.
    pub fn merge(&mut self, other: EpochVerdict) {
        for (p, d) in other.dishonest {
            let e = self.dishonest.entry(p).or_insert(0.0);
            if d > *e {
                *e = d;
            }
        }
        self.honest.extend(other.honest);
        self.task_fulfillers.extend(other.task_fulfillers);
        let dishonest = &self.dishonest;
        self.honest.retain(|p| !dishonest.contains_key(p));
        self.task_fulfillers.retain(|p| !dishonest.contains_key(p));
    }

    pub fn is_empty(&self) -> bool {
        self.honest.is_empty() && self.dishonest.is_empty() && self.task_fulfillers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReputationError {
    #[error("participant {0} is not part of the population")]
    UnknownParticipant(ParticipantId),
    #[error("participant {0} appears as both honest and dishonest")]
    ConflictingVerdict(ParticipantId),
}

/// Non-fatal conditions raised by an epoch update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReputationSignal {
    /// Points were pooled but nobody fulfilled a task; they carry over.
    EmptyFulfillerSet,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpochReport {
    pub penalties: u128,
    pub demurrage: u128,
    pub distributed_each: u128,
    pub assimilated: u128,
    pub carried: u128,
    pub signal: Option<ReputationSignal>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReputationLedger {
    scores: BTreeMap<ParticipantId, ReputationScore>,
    participants: BTreeSet<ParticipantId>,
    total: ReputationScore,
    pool: ReputationScore,
    decay: DecayRate,
    assimilation_delta: ReputationScore,
}

impl ReputationLedger {
    /// Default assimilation threshold δ = 10^-6.
    pub const DEFAULT_DELTA: ReputationScore = ReputationScore(SCALE / 1_000_000);

    /// Everyone starts neutral; the conserved total is the population size.
    pub fn new(participants: impl IntoIterator<Item = ParticipantId>, decay: DecayRate) -> Self {
        let participants: BTreeSet<_> = participants.into_iter().collect();
        let total = ReputationScore(participants.len() as u128 * SCALE);
        ReputationLedger {
            scores: BTreeMap::new(),
            participants,
            total,
            pool: ReputationScore::ZERO,
            decay,
            assimilation_delta: Self::DEFAULT_DELTA,
        }
    }

    /// Genesis with some non-neutral starting scores; the conserved total
    /// becomes the sum of all starting scores.
    pub fn with_initial_scores(
        participants: impl IntoIterator<Item = ParticipantId>,
        decay: DecayRate,
        initial: &BTreeMap<ParticipantId, ReputationScore>,
    ) -> Result<Self, ReputationError> {
        let mut ledger = Self::new(participants, decay);
        for (p, s) in initial {
            if !ledger.participants.contains(p) {
                return Err(ReputationError::UnknownParticipant(*p));
            }
            assert!(s.0 > 0, "reputation scores are positive");
            ledger.total.0 = ledger.total.0 - SCALE + s.0;
            ledger.set(*p, *s);
        }
        Ok(ledger)
    }

    pub fn with_assimilation_delta(mut self, delta: ReputationScore) -> Self {
        self.assimilation_delta = delta;
        self
    }

    pub fn decay(&self) -> DecayRate {
        self.decay
    }

    pub fn assimilation_delta(&self) -> ReputationScore {
        self.assimilation_delta
    }

    pub fn population(&self) -> usize {
        self.participants.len()
    }

    pub fn participants(&self) -> &BTreeSet<ParticipantId> {
        &self.participants
    }

    pub fn is_participant(&self, p: &ParticipantId) -> bool {
        self.participants.contains(p)
    }

    pub fn total(&self) -> ReputationScore {
        self.total
    }

    /// Points waiting to be redistributed.
    pub fn pool(&self) -> ReputationScore {
        self.pool
    }

    pub fn score(&self, p: &ParticipantId) -> ReputationScore {
        self.scores.get(p).copied().unwrap_or(ReputationScore::NEUTRAL)
    }

    /// Stored (non-neutral) scores.
    pub fn non_neutral(&self) -> &BTreeMap<ParticipantId, ReputationScore> {
        &self.scores
    }

    fn set(&mut self, p: ParticipantId, s: ReputationScore) {
        if s == ReputationScore::NEUTRAL {
            self.scores.remove(&p);
        } else {
            self.scores.insert(p, s);
        }
    }

    /// `Σ scores + pool == total`, evaluated exactly.
    pub fn is_conserved(&self) -> bool {
        let stored: u128 = self.scores.values().map(|s| s.0).sum();
        let neutral = (self.participants.len() - self.scores.len()) as u128 * SCALE;
        stored + neutral + self.pool.0 == self.total.0
    }

    /// Participants with score above neutral, or every neutral participant
    /// when nobody is above neutral yet.
    pub fn engaged_set(&self) -> Vec<(ParticipantId, ReputationScore)> {
        let engaged: Vec<_> = self
            .scores
            .iter()
            .filter(|(_, s)| s.is_engaged())
            .map(|(p, s)| (*p, *s))
            .collect();
        if !engaged.is_empty() {
            return engaged;
        }
        self.participants
            .iter()
            .filter(|p| !self.scores.contains_key(p))
            .map(|p| (*p, ReputationScore::NEUTRAL))
            .collect()
    }

    /// Sets scores in `(1, 1 + δ]` back to neutral, pooling the surplus.
    /// Returns the pooled amount in units.
    pub fn assimilate(&mut self) -> u128 {
        let limit = SCALE + self.assimilation_delta.0;
        let near: Vec<_> = self
            .scores
            .iter()
            .filter(|(_, s)| s.0 > SCALE && s.0 <= limit)
            .map(|(p, s)| (*p, *s))
            .collect();
        let mut surplus = 0;
        for (p, s) in near {
            surplus += s.0 - SCALE;
            self.scores.remove(&p);
        }
        self.pool.0 += surplus;
        surplus
    }

    fn check_member(&self, p: &ParticipantId) -> Result<(), ReputationError> {
        if self.participants.contains(p) {
            Ok(())
        } else {
            Err(ReputationError::UnknownParticipant(*p))
        }
    }

    /// One redistribution round:
    ///
    /// 1. each dishonest participant pays `penalty_rate · deviation · score`
    ///    into the pool;
    /// 2. every engaged score pays its demurrage loss (applied
    ///    `demurrage_epochs` times) into the pool;
    /// 3. the pool is split equally among the task fulfillers, the division
    ///    remainder staying in the pool;
    /// 4. near-neutral scores are assimilated, their surplus pooled for the
    ///    next round.
    ///
    /// Points pooled with no fulfiller present carry over and are signalled.
    pub fn epoch_update(
        &mut self,
        verdict: &EpochVerdict,
        penalty_rate: UnitFraction,
        demurrage_epochs: u32,
    ) -> Result<EpochReport, ReputationError> {
        for p in verdict
            .honest
            .iter()
            .chain(verdict.dishonest.keys())
            .chain(verdict.task_fulfillers.iter())
        {
            self.check_member(p)?;
        }
        if let Some(p) = verdict.honest.iter().find(|p| verdict.dishonest.contains_key(p)) {
            return Err(ReputationError::ConflictingVerdict(*p));
        }

        let mut report = EpochReport::default();

        for (p, deviation) in &verdict.dishonest {
            let score = self.score(p);
            let dev = UnitFraction::from_f64(*deviation);
            let rate_units = mul_div_floor(penalty_rate.units(), dev.units(), SCALE);
            let penalty = mul_div_floor(score.0, rate_units, SCALE).min(score.0 - 1);
            self.set(*p, ReputationScore(score.0 - penalty));
            self.pool.0 += penalty;
            report.penalties += penalty;
        }

        let engaged: Vec<_> = self
            .scores
            .iter()
            .filter(|(_, s)| s.is_engaged())
            .map(|(p, s)| (*p, *s))
            .collect();
        for (p, start) in engaged {
            let mut s = start;
            for _ in 0..demurrage_epochs {
                s = apply_demurrage(s, self.decay);
            }
            self.set(p, s);
            self.pool.0 += start.0 - s.0;
            report.demurrage += start.0 - s.0;
        }

        let k = verdict.task_fulfillers.len() as u128;
        if let Some(each) = self.pool.0.checked_div(k) {
            for p in &verdict.task_fulfillers {
                let s = self.score(p);
                self.set(*p, ReputationScore(s.0 + each));
            }
            self.pool.0 -= each * k;
            report.distributed_each = each;
        } else if self.pool.0 > 0 {
            report.signal = Some(ReputationSignal::EmptyFulfillerSet);
        }

        report.assimilated = self.assimilate();
        report.carried = self.pool.0;
        debug_assert!(self.is_conserved());
        Ok(report)
    }
}

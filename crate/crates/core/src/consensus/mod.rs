//! Truth-By-Consensus.
//!
//! Per request, the claim with the largest reputation mass wins. Every
//! witness's agreement with the winners forms a claim matrix whose
//! reputation-weighted first principal component exposes witnesses that move
//! together. A witness's deviation blends its disagreement rate with the
//! magnitude of its component score; zero deviation means honest.

mod pca;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::hash::HashDigest;
use crate::keys::ParticipantId;
use crate::reputation::{EpochVerdict, ReputationLedger};

pub use pca::{dominant_eigenvector, first_weighted_component, NoConvergence};

/// One witness's revealed result for one request.
#[derive(Clone, PartialEq, Eq, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Claim {
    pub request: HashDigest,
    pub witness: ParticipantId,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::hex_bytes"))]
    pub value: Vec<u8>,
    pub digest: HashDigest,
}

impl Claim {
    pub fn new(request: HashDigest, witness: ParticipantId, value: Vec<u8>) -> Self {
        let digest = HashDigest::of(&value);
        Claim { request, witness, value, digest }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Outcome {
    Value(Vec<u8>),
    Contested,
}

impl Outcome {
    pub fn value(&self) -> Option<&[u8]> {
        match self {
            Outcome::Value(v) => Some(v),
            Outcome::Contested => None,
        }
    }
}

/// Reputation-weighted plurality over exact claim bytes; an exact tie at the
/// top is contested.
pub fn modal_claim(claims: &[&Claim], rep: &ReputationLedger) -> Outcome {
    let mut mass: BTreeMap<&[u8], u128> = BTreeMap::new();
    for c in claims {
        *mass.entry(c.value.as_slice()).or_default() += rep.score(&c.witness).units();
    }
    let mut best: Option<(&[u8], u128)> = None;
    let mut tied = false;
    for (v, m) in mass {
        match best {
            Some((_, bm)) if m < bm => {}
            Some((_, bm)) if m == bm => tied = true,
            _ => {
                best = Some((v, m));
                tied = false;
            }
        }
    }
    match best {
        Some((v, _)) if !tied => Outcome::Value(v.to_vec()),
        _ => Outcome::Contested,
    }
}

/// Witnesses × requests agreement matrix with normalized reputation weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ClaimMatrix {
    pub rows: Vec<ParticipantId>,
    pub cols: Vec<HashDigest>,
    /// `Some(1.0)` agrees with the column's winner, `Some(0.0)` disagrees,
    /// `None` where the witness has no claim.
    pub entries: Vec<Vec<Option<f64>>>,
    pub weights: Vec<f64>,
}

impl ClaimMatrix {
    /// Builds the matrix over decided requests only; contested ones carry no
    /// reference value and are left out.
    pub fn build(claims: &[Claim], winners: &BTreeMap<HashDigest, Outcome>, rep: &ReputationLedger) -> Self {
        let cols: Vec<HashDigest> = winners
            .iter()
            .filter(|(_, o)| matches!(o, Outcome::Value(_)))
            .map(|(r, _)| *r)
            .collect();
        let col_index: BTreeMap<_, _> = cols.iter().enumerate().map(|(i, r)| (*r, i)).collect();
        let rows: Vec<ParticipantId> = claims
            .iter()
            .filter(|c| col_index.contains_key(&c.request))
            .map(|c| c.witness)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let row_index: BTreeMap<_, _> = rows.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let mut entries = alloc::vec![alloc::vec![None; cols.len()]; rows.len()];
        for c in claims {
            let (Some(&j), Some(&i)) = (col_index.get(&c.request), row_index.get(&c.witness)) else {
                continue;
            };
            let agrees = winners[&c.request].value() == Some(c.value.as_slice());
            entries[i][j] = Some(if agrees { 1.0 } else { 0.0 });
        }
        let raw: Vec<u128> = rows.iter().map(|p| rep.score(p).units()).collect();
        let total: u128 = raw.iter().sum();
        let weights = raw.iter().map(|r| *r as f64 / total as f64).collect();
        ClaimMatrix { rows, cols, entries, weights }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsensusParams {
    pub tol: f64,
    pub max_iter: u32,
    pub disagreement_weight: f64,
    pub coordination_weight: f64,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        ConsensusParams {
            tol: 1e-9,
            max_iter: 1000,
            disagreement_weight: 0.5,
            coordination_weight: 0.5,
        }
    }
}

/// Resolution of one request.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub winner: Outcome,
    pub supporters: BTreeSet<ParticipantId>,
    pub deviators: BTreeMap<ParticipantId, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochResolution {
    pub verdicts: BTreeMap<HashDigest, Verdict>,
    pub epoch: EpochVerdict,
    /// Component score per matrix row.
    pub coordination: BTreeMap<ParticipantId, f64>,
    /// False when power iteration gave up and zero scores were used.
    pub converged: bool,
}

/// Resolves every request that closes this epoch. `no_shows` lists, per
/// request, witnesses that committed but never revealed; they count as
/// deviators with deviation 1.
pub fn resolve_epoch(
    claims: &[Claim],
    no_shows: &BTreeMap<HashDigest, BTreeSet<ParticipantId>>,
    rep: &ReputationLedger,
    params: &ConsensusParams,
) -> EpochResolution {
    let mut by_request: BTreeMap<HashDigest, Vec<&Claim>> = BTreeMap::new();
    for c in claims {
        by_request.entry(c.request).or_default().push(c);
    }
    for r in no_shows.keys() {
        by_request.entry(*r).or_default();
    }
    let winners: BTreeMap<HashDigest, Outcome> = by_request
        .iter()
        .map(|(r, cs)| {
            let o = if cs.is_empty() { Outcome::Contested } else { modal_claim(cs, rep) };
            (*r, o)
        })
        .collect();

    let matrix = ClaimMatrix::build(claims, &winners, rep);
    let (scores, converged) = match first_weighted_component(&matrix, params.tol, params.max_iter) {
        Ok(s) => (s, true),
        Err(_) => (alloc::vec![0.0; matrix.rows.len()], false),
    };
    let max_abs = scores.iter().fold(0.0f64, |a, s| a.max(s.abs()));

    let mut deviation: BTreeMap<ParticipantId, f64> = BTreeMap::new();
    for (i, p) in matrix.rows.iter().enumerate() {
        let row = &matrix.entries[i];
        let claimed = row.iter().filter(|e| e.is_some()).count();
        let disagreed = row.iter().filter(|e| **e == Some(0.0)).count();
        let rate = disagreed as f64 / claimed as f64;
        let d = if disagreed == 0 {
            0.0
        } else {
            let coord = if max_abs > 0.0 { scores[i].abs() / max_abs } else { 0.0 };
            (params.disagreement_weight * rate + params.coordination_weight * coord).min(1.0)
        };
        deviation.insert(*p, d);
    }
    for (r, ws) in no_shows {
        if matches!(winners[r], Outcome::Value(_)) {
            for w in ws {
                deviation.insert(*w, 1.0);
            }
        }
    }

    let mut verdicts = BTreeMap::new();
    for (r, cs) in &by_request {
        let winner = winners[r].clone();
        let mut supporters = BTreeSet::new();
        let mut deviators = BTreeMap::new();
        if let Outcome::Value(v) = &winner {
            for c in cs {
                if c.value == *v {
                    supporters.insert(c.witness);
                } else {
                    deviators.insert(c.witness, deviation[&c.witness]);
                }
            }
            for w in no_shows.get(r).into_iter().flatten() {
                deviators.insert(*w, 1.0);
            }
        }
        verdicts.insert(*r, Verdict { winner, supporters, deviators });
    }

    let mut epoch = EpochVerdict::default();
    for (p, d) in &deviation {
        if *d > 0.0 {
            epoch.dishonest.insert(*p, *d);
        } else {
            epoch.honest.insert(*p);
            epoch.task_fulfillers.insert(*p);
        }
    }
    let coordination = matrix.rows.iter().copied().zip(scores).collect();
    EpochResolution { verdicts, epoch, coordination, converged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reputation::{DecayRate, ReputationScore};

    fn pid(n: u8) -> ParticipantId {
        ParticipantId(HashDigest([n; 32]))
    }

    fn req(n: u8) -> HashDigest {
        HashDigest([100 + n; 32])
    }

    fn neutral(n: u8) -> ReputationLedger {
        ReputationLedger::new((0..n).map(pid), DecayRate::DEFAULT)
    }

    #[test]
    fn modal_examples() {
        let rep = neutral(3);
        let x = |w| Claim::new(req(0), pid(w), b"X".to_vec());
        let y = |w| Claim::new(req(0), pid(w), b"Y".to_vec());
        assert_eq!(modal_claim(&[&x(0), &x(1), &y(2)], &rep), Outcome::Value(b"X".to_vec()));
        assert_eq!(modal_claim(&[&x(0)], &rep), Outcome::Value(b"X".to_vec()));
        assert_eq!(modal_claim(&[&x(0), &y(1)], &rep), Outcome::Contested);
    }

    #[test]
    fn reputation_outweighs_headcount() {
        let mut init = BTreeMap::new();
        init.insert(pid(0), ReputationScore::from_points(5));
        let rep = ReputationLedger::with_initial_scores((0..3).map(pid), DecayRate::DEFAULT, &init).unwrap();
        let cs = [
            Claim::new(req(0), pid(0), b"A".to_vec()),
            Claim::new(req(0), pid(1), b"B".to_vec()),
            Claim::new(req(0), pid(2), b"B".to_vec()),
        ];
        let refs: Vec<_> = cs.iter().collect();
        assert_eq!(modal_claim(&refs, &rep), Outcome::Value(b"A".to_vec()));
    }

    #[test]
    fn identical_rows_have_zero_scores() {
        let rep = neutral(3);
        let claims: Vec<_> = (0..3).map(|w| Claim::new(req(0), pid(w), b"v".to_vec())).collect();
        let res = resolve_epoch(&claims, &BTreeMap::new(), &rep, &ConsensusParams::default());
        assert!(res.coordination.values().all(|s| *s == 0.0));
        assert_eq!(res.epoch.honest.len(), 3);
        assert!(res.epoch.dishonest.is_empty());
    }

    #[test]
    fn two_by_two_opposite_scores() {
        let m = ClaimMatrix {
            rows: alloc::vec![pid(0), pid(1)],
            cols: alloc::vec![req(0), req(1)],
            entries: alloc::vec![alloc::vec![Some(1.0), Some(1.0)], alloc::vec![Some(0.0), Some(0.0)]],
            weights: alloc::vec![0.5, 0.5],
        };
        let s = first_weighted_component(&m, 1e-9, 1000).unwrap();
        assert!((s[0] + s[1]).abs() < 1e-12);
        assert!((s[0].abs() - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn four_against_one() {
        let rep = neutral(5);
        let mut claims: Vec<_> = (0..4).map(|w| Claim::new(req(0), pid(w), b"42".to_vec())).collect();
        claims.push(Claim::new(req(0), pid(4), b"13".to_vec()));
        let res = resolve_epoch(&claims, &BTreeMap::new(), &rep, &ConsensusParams::default());
        let v = &res.verdicts[&req(0)];
        assert_eq!(v.winner, Outcome::Value(b"42".to_vec()));
        assert_eq!(v.supporters.len(), 4);
        assert_eq!(v.deviators.len(), 1);
        assert!(res.epoch.dishonest[&pid(4)] > 0.0);
        assert_eq!(res.epoch.task_fulfillers.len(), 4);
    }

    #[test]
    fn contested_request_is_neutral() {
        let rep = neutral(2);
        let claims = [
            Claim::new(req(0), pid(0), b"a".to_vec()),
            Claim::new(req(0), pid(1), b"b".to_vec()),
        ];
        let res = resolve_epoch(&claims, &BTreeMap::new(), &rep, &ConsensusParams::default());
        assert_eq!(res.verdicts[&req(0)].winner, Outcome::Contested);
        assert!(res.epoch.is_empty());
    }

    #[test]
    fn no_show_is_full_deviation() {
        let rep = neutral(3);
        let claims: Vec<_> = (0..2).map(|w| Claim::new(req(0), pid(w), b"v".to_vec())).collect();
        let mut ns = BTreeMap::new();
        ns.insert(req(0), [pid(2)].into_iter().collect());
        let res = resolve_epoch(&claims, &ns, &rep, &ConsensusParams::default());
        assert_eq!(res.epoch.dishonest[&pid(2)], 1.0);
        assert_eq!(res.verdicts[&req(0)].deviators[&pid(2)], 1.0);
    }
}

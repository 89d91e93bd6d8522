//! Per-epoch frames and their file formats.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use witnet_core::reputation::ReputationScore;
use witnet_core::{HashDigest, ParticipantId, TokenAmount};

use crate::engine::Simulation;

pub const CSV_HEADER: &str = "epoch,miners,blocks,resolved,correct,supply_nanowit,pool_carry";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFrame {
    pub epoch: u64,
    /// Primary-tier lottery winners.
    pub miners: u32,
    /// Blocks accepted at this checkpoint, backup tiers included.
    pub blocks: u32,
    pub resolved: u32,
    pub correct: u32,
    pub supply: TokenAmount,
    pub pool_carry: ReputationScore,
    pub reputation_conserved: bool,
    /// Scores of participants whose strategy is tracked.
    pub reputations: BTreeMap<ParticipantId, ReputationScore>,
}

/// One line per resolved request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub epoch: u64,
    pub request: HashDigest,
    /// Hash of the winning value; `None` when contested.
    pub winner_digest: Option<HashDigest>,
    pub supporters: u32,
    pub deviators: u32,
    pub correct: bool,
    /// Reputation behind claims equal to the true value, in score units.
    #[serde(with = "u128_text")]
    pub truth_weight: u128,
    #[serde(with = "u128_text")]
    pub total_weight: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub epoch: u64,
    pub request: HashDigest,
    pub bridge: ParticipantId,
    pub target: String,
    pub value: String,
}

pub fn frames_csv(frames: &[MetricsFrame]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for f in frames {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            f.epoch,
            f.miners,
            f.blocks,
            f.resolved,
            f.correct,
            f.supply.nanowits(),
            f.pool_carry
        );
    }
    out
}

pub fn verdicts_csv(records: &[VerdictRecord]) -> String {
    let mut out = String::from("epoch,request,winner_digest,supporters,deviators,correct\n");
    for r in records {
        let winner = r.winner_digest.map_or_else(|| "CONTESTED".to_string(), |d| d.to_hex());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch,
            r.request.to_hex(),
            winner,
            r.supporters,
            r.deviators,
            r.correct
        );
    }
    out
}

/// Long format: one row per tracked participant per epoch.
pub fn reputation_csv(sim: &Simulation) -> String {
    let mut out = String::from("epoch,participant,strategy,score\n");
    for f in sim.frames() {
        for (p, s) in &f.reputations {
            let strategy = sim.strategy_of(p).map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", f.epoch, p, strategy, s);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalReputation {
    pub strategy: String,
    pub initial: ReputationScore,
    #[serde(rename = "final")]
    pub last: ReputationScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub epochs: u64,
    /// Correct over resolved; 1 when nothing resolved.
    pub accuracy: f64,
    pub resolved: u64,
    pub correct: u64,
    pub mean_miners: f64,
    /// Share of epochs with at least one block.
    pub block_coverage: f64,
    pub supply_nanowit: u64,
    pub reputation_conserved: bool,
    pub posted: u64,
    pub skipped_unfunded: u64,
    pub rejected_transactions: u64,
    pub deliveries: u64,
    pub final_reputations: BTreeMap<ParticipantId, FinalReputation>,
}

pub fn summarize(sim: &Simulation) -> Summary {
    let frames = sim.frames();
    let n = frames.len().max(1) as f64;
    let resolved: u64 = frames.iter().map(|f| f.resolved as u64).sum();
    let correct: u64 = frames.iter().map(|f| f.correct as u64).sum();
    let final_reputations = sim
        .participants()
        .iter()
        .map(|p| {
            (
                p.id,
                FinalReputation {
                    strategy: p.strategy.to_string(),
                    initial: sim.initial_score(p.strategy),
                    last: sim.reputation().score(&p.id),
                },
            )
        })
        .collect();
    Summary {
        epochs: frames.len() as u64,
        accuracy: if resolved == 0 { 1.0 } else { correct as f64 / resolved as f64 },
        resolved,
        correct,
        mean_miners: frames.iter().map(|f| f.miners as f64).sum::<f64>() / n,
        block_coverage: frames.iter().filter(|f| f.blocks > 0).count() as f64 / n,
        supply_nanowit: sim.ledger().supply().nanowits(),
        reputation_conserved: frames.iter().all(|f| f.reputation_conserved),
        posted: sim.totals().posted,
        skipped_unfunded: sim.totals().skipped_unfunded,
        rejected_transactions: sim.totals().rejected_transactions,
        deliveries: sim.delivery_log().len() as u64,
        final_reputations,
    }
}

/// Writes `metrics.csv`, `verdicts.csv`, `reputation.csv`, `deliveries.json`
/// and `summary.json` into `dir`.
pub fn write_outputs(sim: &Simulation, dir: &std::path::Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.csv"), frames_csv(sim.frames()))?;
    std::fs::write(dir.join("verdicts.csv"), verdicts_csv(sim.verdict_log()))?;
    std::fs::write(dir.join("reputation.csv"), reputation_csv(sim))?;
    let deliveries = serde_json::to_string_pretty(sim.delivery_log()).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("deliveries.json"), deliveries + "\n")?;
    let summary = serde_json::to_string_pretty(&summarize(sim)).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("summary.json"), summary + "\n")?;
    Ok(())
}

mod u128_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let f = MetricsFrame {
            epoch: 3,
            miners: 1,
            blocks: 1,
            resolved: 2,
            correct: 2,
            supply: TokenAmount::from_wits(1000),
            pool_carry: ReputationScore::ZERO,
            reputation_conserved: true,
            reputations: BTreeMap::new(),
        };
        let csv = frames_csv(&[f]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("3,1,1,2,2,1000000000000,0.000000000000"));
    }
}

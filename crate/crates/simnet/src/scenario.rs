//! Scenario files: TOML in, validated [`Scenario`] out.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use witnet_core::economics::{FeeParams, IssuanceParams};
use witnet_core::rad::{Aggregation, DeliverySpec, RetrievalPath, SourceTable};
use witnet_core::reputation::{DecayRate, ReputationScore, UnitFraction};
use witnet_core::{EpochIndex, TokenAmount};

/// Fixed behaviour of one participant for a whole run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    Honest,
    Lazy,
    Liar,
    Colluder(u32),
    NoReveal,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Honest => f.write_str("HONEST"),
            Strategy::Lazy => f.write_str("LAZY"),
            Strategy::Liar => f.write_str("LIAR"),
            Strategy::Colluder(c) => write!(f, "COLLUDER({c})"),
            Strategy::NoReveal => f.write_str("NO_REVEAL"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown strategy `{0}`")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || UnknownStrategy(s.to_string());
        Ok(match s {
            "HONEST" => Strategy::Honest,
            "LAZY" => Strategy::Lazy,
            "LIAR" => Strategy::Liar,
            "NO_REVEAL" => Strategy::NoReveal,
            _ => {
                let inner = s
                    .strip_prefix("COLLUDER(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(bad)?;
                Strategy::Colluder(inner.parse().map_err(|_| bad())?)
            }
        })
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A request the client posts at `post_epoch`, and again every
/// `repeat_every` epochs, `repeat_count` times in total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestTemplate {
    pub post_epoch: u64,
    #[serde(default = "one")]
    pub repeat_every: u64,
    #[serde(default = "one")]
    pub repeat_count: u64,
    pub paths: Vec<RetrievalPath>,
    #[serde(default = "mode")]
    pub aggregation: Aggregation,
    pub replication: u32,
    /// Declared witness fee in nanoWit; the formula minimum when absent.
    #[serde(default)]
    pub witness_fee: Option<u64>,
    #[serde(default)]
    pub bridge_fee: Option<u64>,
    /// Absolute epoch before which the request cannot be assigned.
    #[serde(default)]
    pub time_lock: Option<u64>,
    #[serde(default)]
    pub undecidable: bool,
    #[serde(default)]
    pub deliver: Option<DeliverySpec>,
}

fn one() -> u64 {
    1
}

fn mode() -> Aggregation {
    Aggregation::Mode
}

impl RequestTemplate {
    /// Epochs at which this template posts a request.
    pub fn post_epochs(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.repeat_count).map(move |k| self.post_epoch + k * self.repeat_every)
    }
}

/// Either a constant value or a map from starting epoch to value.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
enum SourceSeries {
    Constant(String),
    Series(BTreeMap<String, String>),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
enum RateText {
    Number(f64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IssuanceFile {
    initial_reward_nanowit: u64,
    halving_period: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeesFile {
    witness_fee_rate_nanowit: u64,
    min_miner_fee_rate_nanowit: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    population: u32,
    epochs: u64,
    seed: u64,
    #[serde(default = "default_decay")]
    decay: f64,
    #[serde(default)]
    penalty_rate: Option<RateText>,
    behavior_mix: BTreeMap<String, f64>,
    #[serde(default)]
    initial_reputation: BTreeMap<String, String>,
    #[serde(default)]
    requests: Vec<RequestTemplate>,
    #[serde(default)]
    sources: BTreeMap<String, SourceSeries>,
    #[serde(default)]
    issuance: Option<IssuanceFile>,
    #[serde(default)]
    fees: Option<FeesFile>,
    #[serde(default = "default_backup_cap")]
    backup_cap: u32,
    #[serde(default = "default_replication_cap")]
    replication_cap: u32,
    #[serde(default = "one_u32")]
    recomputation_period: u32,
    #[serde(default)]
    track: Option<Vec<String>>,
}

fn default_decay() -> f64 {
    0.99
}

fn default_backup_cap() -> u32 {
    8
}

fn default_replication_cap() -> u32 {
    32
}

fn one_u32() -> u32 {
    1
}

/// Validated run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub population: u32,
    pub behavior_mix: BTreeMap<Strategy, f64>,
    pub decay: DecayRate,
    pub penalty_rate: UnitFraction,
    pub epochs: u64,
    pub seed: u64,
    pub requests: Vec<RequestTemplate>,
    pub sources: SourceTable,
    pub issuance: IssuanceParams,
    pub fees: FeeParams,
    pub backup_cap: u32,
    pub replication_cap: u32,
    pub recomputation_period: u32,
    /// Starting score per strategy; neutral when absent.
    pub initial_reputation: BTreeMap<Strategy, ReputationScore>,
    /// Strategies whose members get a reputation trajectory in the metrics.
    pub track: BTreeSet<Strategy>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
}

impl ScenarioError {
    fn parse(message: impl Into<String>) -> Self {
        ScenarioError::Parse { line: None, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        ScenarioError::Validation(message.into())
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.span().map(|s| text[..s.start].matches('\n').count() + 1),
        message: e.message().to_string(),
    })?;
    file.validate()
}

fn parse_strategy(field: &str, s: &str) -> Result<Strategy, ScenarioError> {
    s.parse()
        .map_err(|e: UnknownStrategy| ScenarioError::parse(format!("{field}: {e}")))
}

fn parse_rate(r: &RateText) -> Result<UnitFraction, ScenarioError> {
    let bad = || ScenarioError::invalid("penalty_rate must lie in [0, 1]");
    match r {
        RateText::Number(x) if (0.0..=1.0).contains(x) => Ok(UnitFraction::from_f64(*x)),
        RateText::Number(_) => Err(bad()),
        RateText::Text(t) => match t.split_once('/') {
            Some((n, d)) => {
                let n: u64 = n.trim().parse().map_err(|_| ScenarioError::parse("penalty_rate: bad numerator"))?;
                let d: u64 = d.trim().parse().map_err(|_| ScenarioError::parse("penalty_rate: bad denominator"))?;
                UnitFraction::from_ratio(n, d).ok_or_else(bad)
            }
            None => t.parse().map_err(|_| ScenarioError::parse("penalty_rate: not a rational")),
        },
    }
}

impl ScenarioFile {
    fn validate(self) -> Result<Scenario, ScenarioError> {
        if self.population < 2 {
            return Err(ScenarioError::invalid("population must be at least 2"));
        }
        let mut mix = BTreeMap::new();
        for (k, f) in &self.behavior_mix {
            let s = parse_strategy("behavior_mix", k)?;
            if !(0.0..=1.0).contains(f) {
                return Err(ScenarioError::invalid(format!("behavior_mix.{k} must lie in [0, 1]")));
            }
            mix.insert(s, *f);
        }
        let total: f64 = mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ScenarioError::invalid(format!("behavior fractions sum to {total}, not 1")));
        }
        let decay = DecayRate::new(self.decay).ok_or_else(|| ScenarioError::invalid("decay must lie in [0, 1]"))?;
        let penalty_rate = match &self.penalty_rate {
            Some(r) => parse_rate(r)?,
            None => UnitFraction::from_ratio(1, 5).expect("1/5"),
        };
        if self.backup_cap < 1 {
            return Err(ScenarioError::invalid("backup_cap must be at least 1"));
        }
        if self.recomputation_period < 1 {
            return Err(ScenarioError::invalid("recomputation_period must be at least 1"));
        }
        for (i, r) in self.requests.iter().enumerate() {
            if r.replication < 2 || r.replication > self.replication_cap {
                return Err(ScenarioError::invalid(format!(
                    "requests[{i}].replication {} outside [2, {}]",
                    r.replication, self.replication_cap
                )));
            }
            if r.replication > self.population {
                return Err(ScenarioError::invalid(format!(
                    "requests[{i}].replication exceeds the population"
                )));
            }
            if r.paths.is_empty() {
                return Err(ScenarioError::invalid(format!("requests[{i}] has no paths")));
            }
            if r.repeat_every == 0 || r.post_epoch == 0 {
                return Err(ScenarioError::invalid(format!(
                    "requests[{i}]: post_epoch and repeat_every must be positive"
                )));
            }
            for p in &r.paths {
                if !self.sources.contains_key(&p.source_key) {
                    return Err(ScenarioError::invalid(format!(
                        "requests[{i}] reads undefined source `{}`",
                        p.source_key
                    )));
                }
            }
        }
        let mut sources = SourceTable::new();
        for (key, series) in &self.sources {
            match series {
                SourceSeries::Constant(v) => sources.set(key, EpochIndex(0), v),
                SourceSeries::Series(m) => {
                    for (from, v) in m {
                        let from: u64 = from
                            .parse()
                            .map_err(|_| ScenarioError::parse(format!("sources.{key}: `{from}` is not an epoch")))?;
                        sources.set(key, EpochIndex(from), v);
                    }
                }
            }
        }
        let mut initial_reputation = BTreeMap::new();
        for (k, v) in &self.initial_reputation {
            let s = parse_strategy("initial_reputation", k)?;
            let score: ReputationScore = v
                .parse()
                .map_err(|_| ScenarioError::parse(format!("initial_reputation.{k}: `{v}` is not a score")))?;
            if score == ReputationScore::ZERO {
                return Err(ScenarioError::invalid(format!("initial_reputation.{k} must be positive")));
            }
            initial_reputation.insert(s, score);
        }
        let track = match &self.track {
            None => mix.keys().copied().collect(),
            Some(list) => list
                .iter()
                .map(|s| parse_strategy("track", s))
                .collect::<Result<_, _>>()?,
        };
        let issuance = match self.issuance {
            None => IssuanceParams::default(),
            Some(i) if i.halving_period > 0 => IssuanceParams {
                initial_reward: TokenAmount::from_nanowits(i.initial_reward_nanowit),
                halving_period: i.halving_period,
            },
            Some(_) => return Err(ScenarioError::invalid("issuance.halving_period must be positive")),
        };
        let fees = self.fees.map_or_else(FeeParams::default, |f| FeeParams {
            witness_fee_rate: TokenAmount::from_nanowits(f.witness_fee_rate_nanowit),
            min_miner_fee_rate: TokenAmount::from_nanowits(f.min_miner_fee_rate_nanowit),
        });
        if fees.witness_fee_rate == TokenAmount::ZERO {
            return Err(ScenarioError::invalid("fees.witness_fee_rate_nanowit must be positive"));
        }
        for (i, r) in self.requests.iter().enumerate() {
            let complexities: Vec<_> = r.paths.iter().map(|p| p.complexity).collect();
            let floor = witnet_core::economics::witness_fee(r.replication, &complexities, &fees);
            if r.witness_fee.is_some_and(|f| f < floor.nanowits()) {
                return Err(ScenarioError::invalid(format!(
                    "requests[{i}].witness_fee is below the required {floor} nanoWit"
                )));
            }
            if let (Some(d), Some(f)) = (&r.deliver, r.bridge_fee) {
                let floor = witnet_core::economics::bridge_fee(d.complexity, &fees);
                if f < floor.nanowits() {
                    return Err(ScenarioError::invalid(format!(
                        "requests[{i}].bridge_fee is below the required {floor} nanoWit"
                    )));
                }
            }
        }
        Ok(Scenario {
            population: self.population,
            behavior_mix: mix,
            decay,
            penalty_rate,
            epochs: self.epochs,
            seed: self.seed,
            requests: self.requests,
            sources,
            issuance,
            fees,
            backup_cap: self.backup_cap,
            replication_cap: self.replication_cap,
            recomputation_period: self.recomputation_period,
            initial_reputation,
            track,
        })
    }
}

impl Scenario {
    /// Member count per strategy: floor of each share, with the leftover
    /// seats going to the largest remainders (ties by strategy order).
    pub fn strategy_counts(&self) -> BTreeMap<Strategy, u32> {
        let n = self.population as f64;
        let mut counts: BTreeMap<Strategy, u32> = BTreeMap::new();
        let mut rems: Vec<(f64, Strategy)> = Vec::new();
        for (s, f) in &self.behavior_mix {
            let exact = f * n;
            let base = exact.floor() as u32;
            counts.insert(*s, base);
            rems.push((exact - base as f64, *s));
        }
        let assigned: u32 = counts.values().sum();
        rems.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, s) in rems.into_iter().take((self.population - assigned) as usize) {
            *counts.get_mut(&s).expect("strategy present") += 1;
        }
        counts
    }
}

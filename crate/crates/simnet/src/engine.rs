//! The epoch loop.
//!
//! Randomness: one ChaCha8 stream seeded from the scenario, consumed only
//! while building the population, in this order: one 32-byte secret per
//! participant, one for the client, then a shuffle of the id-sorted
//! participants that decides who follows which strategy. Everything after
//! that is driven by the protocol's own lotteries, so a run is a pure
//! function of its scenario.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use witnet_core::consensus::{resolve_epoch, Claim, ConsensusParams, Outcome};
use witnet_core::economics::{self, block_reward, select_transactions, Candidate, MAX_BLOCK_BYTES};
use witnet_core::eligibility::{
    assign_task, check_with_threshold, epoch_randomness, EligibilityProof, InfluenceTable, RandomBeacon,
    TaskKindFlag, ThresholdCache,
};
use witnet_core::ledger::{
    Block, Input, LedgerState, Lock, OutPoint, Output, Payload, RequestRole, Settlement, Transaction, Unlock,
    DEFAULT_HORIZON,
};
use witnet_core::rad::{
    commitment_digest, execute_retrieval, validate_request, verify_reveal, Commitment, LifecycleEvent, RadRequest,
    RequestSpec, RequestState, Reveal, WitnessView,
};
use witnet_core::reputation::{EpochVerdict, ReputationLedger, ReputationScore};
use witnet_core::{EpochIndex, HashDigest, KeyRegistry, Keypair, ParticipantId, SecretKey, Share, TokenAmount};

use crate::metrics::{DeliveryRecord, MetricsFrame, VerdictRecord};
use crate::scenario::{Scenario, Strategy};

/// A request whose reveal window closed: its claims and its no-shows.
type Resolving = (HashDigest, Vec<Claim>, BTreeSet<ParticipantId>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("epoch {epoch}: {operation} failed: {message}")]
pub struct SimError {
    pub epoch: u64,
    pub operation: &'static str,
    pub message: String,
}

fn abort(epoch: u64, operation: &'static str, e: impl ToString) -> SimError {
    SimError {
        epoch,
        operation,
        message: e.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: ParticipantId,
    pub strategy: Strategy,
    secret: SecretKey,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PendingCommit {
    commitment: Commitment,
    #[serde(with = "hex_vec")]
    value: Vec<u8>,
    prev_block: HashDigest,
    pledge: HashDigest,
}

/// Engine-side bookkeeping for one posted request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Tracked {
    rad: RadRequest,
    assigned: BTreeSet<ParticipantId>,
    commits: BTreeMap<ParticipantId, PendingCommit>,
    #[serde(with = "opt_hex_vec")]
    truth: Option<Vec<u8>>,
    /// Set once resolved and decided with a delivery target.
    awaiting_bridge: bool,
}

/// Client change output and its value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Wallet {
    outpoint: Option<OutPoint>,
    value: TokenAmount,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct MempoolEntry {
    fee: TokenAmount,
    size: u32,
}

/// Counters that do not fit the per-epoch frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTotals {
    pub posted: u64,
    pub skipped_unfunded: u64,
    pub rejected_transactions: u64,
    pub empty_fulfiller_epochs: u64,
    pub non_converged_epochs: u64,
}

/// Complete, serializable simulation state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    scenario: Scenario,
    participants: Vec<Participant>,
    client: Participant,
    ledger: LedgerState,
    reputation: ReputationLedger,
    requests: BTreeMap<HashDigest, Tracked>,
    wallet: Wallet,
    mempool: BTreeMap<HashDigest, MempoolEntry>,
    verdicts_since_update: EpochVerdict,
    next_nonce: u64,
    epoch: u64,
    frames: Vec<MetricsFrame>,
    verdict_log: Vec<VerdictRecord>,
    delivery_log: Vec<DeliveryRecord>,
    totals: RunTotals,
}

/// Everything `run` hands back.
pub struct RunOutput {
    pub frames: Vec<MetricsFrame>,
    pub ledger: LedgerState,
    pub reputation: ReputationLedger,
    pub simulation: Simulation,
}

/// Runs a scenario to its last epoch.
pub fn run(scenario: Scenario) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(scenario)?;
    sim.run_to_end()?;
    Ok(RunOutput {
        frames: sim.frames.clone(),
        ledger: sim.ledger.clone(),
        reputation: sim.reputation.clone(),
        simulation: sim,
    })
}

fn secret_from(rng: &mut ChaCha8Rng) -> SecretKey {
    SecretKey(rng.random())
}

impl Simulation {
    /// Builds the population and mines the genesis block, whose reward funds
    /// the client.
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let secrets: Vec<SecretKey> = (0..scenario.population).map(|_| secret_from(&mut rng)).collect();
        let client_secret = secret_from(&mut rng);
        let mut keys: Vec<Keypair> = secrets.into_iter().map(Keypair::from_secret).collect();
        keys.sort_by_key(|k| k.public);
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.shuffle(&mut rng);
        let mut strategies = vec![Strategy::Honest; keys.len()];
        let mut slot = order.into_iter();
        for (s, n) in scenario.strategy_counts() {
            for i in slot.by_ref().take(n as usize) {
                strategies[i] = s;
            }
        }
        let participants: Vec<Participant> = keys
            .iter()
            .zip(strategies)
            .map(|(k, strategy)| Participant {
                id: k.public,
                strategy,
                secret: k.secret,
            })
            .collect();
        let client_key = Keypair::from_secret(client_secret);
        let client = Participant {
            id: client_key.public,
            strategy: Strategy::Honest,
            secret: client_key.secret,
        };

        let initial: BTreeMap<ParticipantId, ReputationScore> = participants
            .iter()
            .filter_map(|p| scenario.initial_reputation.get(&p.strategy).map(|s| (p.id, *s)))
            .collect();
        let reputation =
            ReputationLedger::with_initial_scores(participants.iter().map(|p| p.id), scenario.decay, &initial)
                .map_err(|e| abort(0, "initial reputation", e))?;

        let mut ledger = LedgerState::new(scenario.issuance, DEFAULT_HORIZON);
        let genesis = Block::genesis(client.id, block_reward(0, &scenario.issuance));
        let gdigest = genesis.digest();
        let registry = KeyRegistry::new();
        ledger
            .accept_block(genesis, &reputation, &registry)
            .map_err(|e| abort(0, "accept genesis", e))?;
        ledger
            .finalize_checkpoint(EpochIndex(0))
            .map_err(|e| abort(0, "finalize genesis", e))?;
        let coinbase = witnet_core::ledger::coinbase_outpoint(&gdigest);
        let wallet = Wallet {
            value: ledger.utxo(&coinbase).map_or(TokenAmount::ZERO, |u| u.value),
            outpoint: ledger.utxo(&coinbase).map(|_| coinbase),
        };
        Ok(Simulation {
            scenario,
            participants,
            client,
            ledger,
            reputation,
            requests: BTreeMap::new(),
            wallet,
            mempool: BTreeMap::new(),
            verdicts_since_update: EpochVerdict::default(),
            next_nonce: 0,
            epoch: 0,
            frames: Vec::new(),
            verdict_log: Vec::new(),
            delivery_log: Vec::new(),
            totals: RunTotals::default(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn participants(&self) -> &[Participant] {
        &self.participants
    }

    pub fn client(&self) -> ParticipantId {
        self.client.id
    }

    pub fn ledger(&self) -> &LedgerState {
        &self.ledger
    }

    pub fn reputation(&self) -> &ReputationLedger {
        &self.reputation
    }

    pub fn frames(&self) -> &[MetricsFrame] {
        &self.frames
    }

    pub fn verdict_log(&self) -> &[VerdictRecord] {
        &self.verdict_log
    }

    pub fn delivery_log(&self) -> &[DeliveryRecord] {
        &self.delivery_log
    }

    pub fn totals(&self) -> &RunTotals {
        &self.totals
    }

    /// Last completed epoch; 0 right after genesis.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.scenario.epochs
    }

    /// Changes the planned length, e.g. from a CLI override.
    pub fn set_epochs(&mut self, epochs: u64) {
        self.scenario.epochs = epochs;
    }

    /// Initial score of a strategy's members.
    pub fn initial_score(&self, s: Strategy) -> ReputationScore {
        self.scenario
            .initial_reputation
            .get(&s)
            .copied()
            .unwrap_or(ReputationScore::NEUTRAL)
    }

    pub fn strategy_of(&self, p: &ParticipantId) -> Option<Strategy> {
        self.participants
            .binary_search_by_key(p, |x| x.id)
            .ok()
            .map(|i| self.participants[i].strategy)
    }

    fn registry(&self) -> KeyRegistry {
        let mut r = KeyRegistry::new();
        for p in &self.participants {
            r.insert(&Keypair::from_secret(p.secret));
        }
        r
    }

    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    /// Runs until `epoch` has completed (or the scenario ends).
    pub fn run_until(&mut self, epoch: u64) -> Result<(), SimError> {
        while self.epoch < epoch.min(self.scenario.epochs) {
            self.step()?;
        }
        Ok(())
    }

    /// Advances one epoch and returns its metrics frame.
    pub fn step(&mut self) -> Result<MetricsFrame, SimError> {
        let t = self.epoch + 1;
        let te = EpochIndex(t);
        let keys = self.registry();
        let beacon = epoch_randomness(self.ledger.dag(), te).map_err(|e| abort(t, "epoch randomness", e))?;
        let table = InfluenceTable::new(&self.reputation);
        let mut cache = ThresholdCache::new();

        let (miners, winners) = self.mining_lottery(te, &beacon, &table, &mut cache);
        let blocks = self.produce_blocks(te, winners, &keys)?;
        let report = self
            .ledger
            .finalize_checkpoint(te)
            .map_err(|e| abort(t, "finalize checkpoint", e))?;
        for id in &report.batch.applied {
            self.mempool.remove(id);
        }
        for (id, _) in &report.batch.rejected {
            self.mempool.remove(id);
        }
        self.totals.rejected_transactions += report.batch.rejected.len() as u64;

        self.post_scheduled(te)?;
        let resolving = self.advance_requests(te, &beacon, &table, &keys, &mut cache)?;
        let (resolved, correct) = self.resolve(te, resolving)?;
        self.deliver(te, &beacon, &table, &keys, &mut cache)?;

        if t.is_multiple_of(self.scenario.recomputation_period as u64) {
            let verdict = std::mem::take(&mut self.verdicts_since_update);
            let report = self
                .reputation
                .epoch_update(&verdict, self.scenario.penalty_rate, self.scenario.recomputation_period)
                .map_err(|e| abort(t, "reputation update", e))?;
            if report.signal.is_some() {
                self.totals.empty_fulfiller_epochs += 1;
            }
        }

        let tracked = self
            .participants
            .iter()
            .filter(|p| self.scenario.track.contains(&p.strategy))
            .map(|p| (p.id, self.reputation.score(&p.id)))
            .collect();
        let frame = MetricsFrame {
            epoch: t,
            miners,
            blocks,
            resolved,
            correct,
            supply: self.ledger.supply(),
            pool_carry: self.reputation.pool(),
            reputation_conserved: self.reputation.is_conserved(),
            reputations: tracked,
        };
        self.frames.push(frame.clone());
        self.epoch = t;
        Ok(frame)
    }

    /// Primary-tier winner count, and the proofs of the first tier that
    /// produced any winner.
    fn mining_lottery(
        &self,
        t: EpochIndex,
        beacon: &RandomBeacon,
        table: &InfluenceTable,
        cache: &mut ThresholdCache,
    ) -> (u32, Vec<EligibilityProof>) {
        let mut primary = 0;
        for tier in 1..=self.scenario.backup_cap {
            let winners: Vec<EligibilityProof> = self
                .participants
                .iter()
                .filter_map(|p| {
                    let inf = table.get(&p.id);
                    if inf.is_zero() {
                        return None;
                    }
                    let th = cache.get(tier, &inf);
                    check_with_threshold(&p.secret, t, beacon, TaskKindFlag::Mine, None, tier, &th)
                })
                .collect();
            if tier == 1 {
                primary = winners.len() as u32;
            }
            if !winners.is_empty() {
                return (primary, winners);
            }
        }
        (primary, Vec::new())
    }

    fn produce_blocks(
        &mut self,
        t: EpochIndex,
        winners: Vec<EligibilityProof>,
        keys: &KeyRegistry,
    ) -> Result<u32, SimError> {
        if winners.is_empty() {
            return Ok(0);
        }
        let candidates: Vec<Candidate> = self
            .mempool
            .iter()
            .map(|(id, e)| Candidate {
                id: *id,
                fee: e.fee,
                size: e.size,
            })
            .collect();
        // leave room for the header and proof
        let tx_pointers = select_transactions(&candidates, MAX_BLOCK_BYTES / 2);
        let parents = self.ledger.dag().tips();
        let reward = block_reward(t.0, self.ledger.issuance());
        let mut accepted = 0;
        for proof in winners {
            let block = Block {
                checkpoint: t,
                parents: parents.clone(),
                tx_pointers: tx_pointers.clone(),
                miner: proof.participant,
                leadership_proof: Some(proof),
                reward,
            };
            self.ledger
                .accept_block(block, &self.reputation, keys)
                .map_err(|e| abort(t.0, "accept block", e))?;
            accepted += 1;
        }
        Ok(accepted)
    }

    fn broadcast(&mut self, tx: Transaction, fee: TokenAmount) -> HashDigest {
        let size = tx.size();
        let id = self.ledger.broadcast(tx);
        self.mempool.insert(id, MempoolEntry { fee, size });
        id
    }

    fn post_scheduled(&mut self, t: EpochIndex) -> Result<(), SimError> {
        let due: Vec<_> = self
            .scenario
            .requests
            .iter()
            .filter(|r| r.post_epochs().any(|e| e == t.0))
            .cloned()
            .collect();
        for tpl in due {
            let fees = self.scenario.fees;
            let paths = tpl.paths.clone();
            let complexities: Vec<_> = paths.iter().map(|p| p.complexity).collect();
            let witness_fee = tpl.witness_fee.map_or_else(
                || economics::witness_fee(tpl.replication, &complexities, &fees),
                TokenAmount::from_nanowits,
            );
            let bridge_fee = match &tpl.deliver {
                None => TokenAmount::ZERO,
                Some(d) => tpl
                    .bridge_fee
                    .map_or_else(|| economics::bridge_fee(d.complexity, &fees), TokenAmount::from_nanowits),
            };
            let spec = RequestSpec {
                client: self.client.id,
                nonce: self.next_nonce,
                paths,
                aggregation: tpl.aggregation,
                replication: tpl.replication,
                witness_fee,
                bridge_fee,
                time_lock: tpl.time_lock.map(EpochIndex),
                undecidable: tpl.undecidable,
                deliver: tpl.deliver.clone(),
            };
            self.next_nonce += 1;
            let miner_fee = fees
                .min_miner_fee_rate
                .checked_mul(witnet_core::Canonical::canonical_bytes(&spec).len() as u64)
                .expect("miner fee overflow");
            let attached = witness_fee + bridge_fee + miner_fee;
            validate_request(&spec, attached, &fees, self.scenario.replication_cap)
                .map_err(|e| abort(t.0, "validate request", e))?;
            let Some(source) = self.wallet.outpoint.filter(|_| self.wallet.value > attached) else {
                self.totals.skipped_unfunded += 1;
                continue;
            };
            let total = self.wallet.value;
            let share = |v: TokenAmount| Share::of(v, total).expect("part of a funded total");
            let mut outputs = vec![Output {
                share: share(witness_fee),
                lock: Lock::Request(RequestRole::Witnessing),
            }];
            if spec.deliver.is_some() {
                outputs.push(Output {
                    share: share(bridge_fee),
                    lock: Lock::Request(RequestRole::Delivery),
                });
            }
            let change = total - attached;
            outputs.push(Output::pay(share(change), self.client.id));
            let change_index = outputs.len() as u32 - 1;
            let tx = Transaction {
                inputs: vec![Input::owner(source, self.client.id)],
                outputs,
                payload: Payload::RadRequest(spec.clone()),
            };
            let id = self.broadcast(tx, miner_fee);
            self.wallet = Wallet {
                outpoint: Some(OutPoint::new(id, change_index)),
                value: change,
            };
            self.requests.insert(
                id,
                Tracked {
                    rad: RadRequest::posted(id, spec, t),
                    assigned: BTreeSet::new(),
                    commits: BTreeMap::new(),
                    truth: None,
                    awaiting_bridge: false,
                },
            );
            self.totals.posted += 1;
        }
        Ok(())
    }

    fn on_chain(&self, id: &HashDigest) -> bool {
        self.ledger
            .dag()
            .canonical_checkpoint(id)
            .is_some_and(|c| self.ledger.checkpoint().is_some_and(|f| c <= f))
    }

    /// Lowest-digest block at the latest non-empty checkpoint.
    fn latest_block(&self) -> HashDigest {
        self.ledger.dag().tips().into_iter().min().unwrap_or(HashDigest::ZERO)
    }

    /// Moves every request as far as this epoch allows. Returns the requests
    /// whose reveal window closed, with their claims and no-shows.
    fn advance_requests(
        &mut self,
        t: EpochIndex,
        beacon: &RandomBeacon,
        table: &InfluenceTable,
        keys: &KeyRegistry,
        cache: &mut ThresholdCache,
    ) -> Result<Vec<Resolving>, SimError> {
        let step = |rad: &RadRequest, ev: LifecycleEvent| rad.step(&ev).map_err(|e| abort(t.0, "request lifecycle", e));
        let ids: Vec<HashDigest> = self.requests.keys().copied().collect();
        let mut resolving = Vec::new();
        for id in ids {
            let state = self.requests[&id].rad.state;
            if self.requests[&id].rad.is_undecidable() {
                continue;
            }
            if state == RequestState::Posted {
                let lock_open = self.requests[&id].rad.spec.time_lock.is_none_or(|l| t >= l);
                if !self.on_chain(&id) || !lock_open {
                    continue;
                }
                let next = step(&self.requests[&id].rad, LifecycleEvent::LockExpired { epoch: t })?;
                self.requests.get_mut(&id).expect("tracked").rad = next;
            }
            let state = self.requests[&id].rad.state;
            if matches!(state, RequestState::Assignable | RequestState::Assigned | RequestState::Committing) {
                self.assign_and_commit(id, t, beacon, table, keys, cache)?;
            } else if state == RequestState::Revealing {
                if let Some(r) = self.reveal(id, t)? {
                    resolving.push(r);
                }
            }
        }
        Ok(resolving)
    }

    fn assign_and_commit(
        &mut self,
        id: HashDigest,
        t: EpochIndex,
        beacon: &RandomBeacon,
        table: &InfluenceTable,
        keys: &KeyRegistry,
        cache: &mut ThresholdCache,
    ) -> Result<(), SimError> {
        let step = |rad: &RadRequest, ev: LifecycleEvent| rad.step(&ev).map_err(|e| abort(t.0, "request lifecycle", e));
        let tr = &self.requests[&id];
        let replication = tr.rad.spec.replication;
        let vacancies = replication.saturating_sub(tr.commits.len() as u32);
        let round = assign_task(&id, vacancies, t, beacon, table, keys, &tr.assigned, cache);
        let prev_block = self.latest_block();
        let mut rad = tr.rad.clone();
        let mut new_commits = Vec::new();
        let mut newly_assigned = Vec::new();
        for proof in round.assigned {
            let w = proof.participant;
            newly_assigned.push(w);
            rad = step(&rad, LifecycleEvent::Assigned)?;
            let strategy = self.strategy_of(&w).expect("assigned participant exists");
            if !strategy.accepts_tasks() {
                continue;
            }
            let value = execute_retrieval(&rad.spec, &self.scenario.sources, t, &strategy.view(&w));
            let digest = commitment_digest(&value, &w, &prev_block);
            rad = step(&rad, LifecycleEvent::Committed { witness: w, epoch: t })?;
            new_commits.push(PendingCommit {
                commitment: Commitment {
                    request: id,
                    witness: w,
                    digest,
                    epoch: t,
                    proof,
                },
                value,
                prev_block,
                pledge: HashDigest::ZERO,
            });
        }
        let truth_now = execute_retrieval(&rad.spec, &self.scenario.sources, t, &WitnessView::Faithful);
        let tr = self.requests.get_mut(&id).expect("tracked");
        tr.assigned.extend(newly_assigned);
        if tr.truth.is_none() && !new_commits.is_empty() {
            tr.truth = Some(truth_now);
        }
        for c in new_commits {
            tr.commits.insert(c.commitment.witness, c);
        }
        if tr.commits.len() as u32 >= replication {
            rad = step(&rad, LifecycleEvent::AllCommitted)?;
            tr.rad = rad;
            self.broadcast_pledges(id);
        } else {
            tr.rad = rad;
        }
        Ok(())
    }

    fn broadcast_pledges(&mut self, id: HashDigest) {
        let commits: Vec<Commitment> = self.requests[&id].commits.values().map(|c| c.commitment.clone()).collect();
        for c in commits {
            let tx = Transaction {
                inputs: vec![Input {
                    source: OutPoint::new(id, 0),
                    unlock: Unlock::Pledge {
                        witness: c.witness,
                        digest: c.digest,
                    },
                }],
                outputs: vec![Output {
                    share: Share::ONE,
                    lock: Lock::Commit {
                        request: id,
                        witness: c.witness,
                        digest: c.digest,
                    },
                }],
                payload: Payload::CommitPledge {
                    request: id,
                    witness: c.witness,
                    digest: c.digest,
                    proof: c.proof.clone(),
                },
            };
            let pid = self.broadcast(tx, TokenAmount::ZERO);
            let entry = self.requests.get_mut(&id).expect("tracked");
            entry.commits.get_mut(&c.witness).expect("committed").pledge = pid;
        }
    }

    #[allow(clippy::type_complexity)]
    fn reveal(
        &mut self,
        id: HashDigest,
        t: EpochIndex,
    ) -> Result<Option<(HashDigest, Vec<Claim>, BTreeSet<ParticipantId>)>, SimError> {
        let tr = &self.requests[&id];
        if !tr.commits.values().all(|c| self.on_chain(&c.pledge)) {
            return Ok(None);
        }
        let mut rad = tr.rad.clone();
        let mut claims = Vec::new();
        let mut no_shows = BTreeSet::new();
        for (w, c) in &tr.commits {
            let strategy = self.strategy_of(w).expect("committed participant exists");
            let opened = self.ledger.utxo(&OutPoint::new(c.pledge, 0)).is_some();
            if !strategy.reveals() || !opened {
                no_shows.insert(*w);
                continue;
            }
            let reveal = Reveal {
                request: id,
                witness: *w,
                value: c.value.clone(),
                prev_block: c.prev_block,
            };
            if !verify_reveal(&c.commitment, &reveal) {
                no_shows.insert(*w);
                continue;
            }
            rad = rad
                .step(&LifecycleEvent::Revealed { witness: *w, epoch: t })
                .map_err(|e| abort(t.0, "request lifecycle", e))?;
            claims.push(Claim::new(id, *w, reveal.value));
        }
        let timed_out = (rad.revealed.len() as u32) < rad.spec.replication;
        rad = rad
            .step(&LifecycleEvent::Resolved { timed_out })
            .map_err(|e| abort(t.0, "request lifecycle", e))?;
        self.requests.get_mut(&id).expect("tracked").rad = rad;
        Ok(Some((id, claims, no_shows)))
    }

    fn resolve(
        &mut self,
        t: EpochIndex,
        resolving: Vec<Resolving>,
    ) -> Result<(u32, u32), SimError> {
        if resolving.is_empty() {
            return Ok((0, 0));
        }
        let mut claims = Vec::new();
        let mut no_shows = BTreeMap::new();
        for (id, cs, ns) in resolving {
            claims.extend(cs);
            no_shows.insert(id, ns);
        }
        let res = resolve_epoch(&claims, &no_shows, &self.reputation, &ConsensusParams::default());
        if !res.converged {
            self.totals.non_converged_epochs += 1;
        }
        let (mut resolved, mut correct) = (0, 0);
        for (id, verdict) in &res.verdicts {
            resolved += 1;
            let tr = &self.requests[id];
            let truth = tr.truth.clone();
            let mut total_weight = 0u128;
            let mut truth_weight = 0u128;
            for c in claims.iter().filter(|c| c.request == *id) {
                let w = self.reputation.score(&c.witness).units();
                total_weight += w;
                if truth.as_deref() == Some(c.value.as_slice()) {
                    truth_weight += w;
                }
            }
            let winner = verdict.winner.value().map(<[u8]>::to_vec);
            let is_correct = winner.is_some() && winner == truth;
            if is_correct {
                correct += 1;
            }
            self.verdict_log.push(VerdictRecord {
                epoch: t.0,
                request: *id,
                winner_digest: winner.as_deref().map(HashDigest::of),
                supporters: verdict.supporters.len() as u32,
                deviators: verdict.deviators.len() as u32,
                correct: is_correct,
                truth_weight,
                total_weight,
            });
            let settlement = Settlement {
                client: self.client.id,
                winner: winner.clone(),
                supporters: verdict.supporters.clone(),
                forfeited: verdict.deviators.keys().copied().collect(),
            };
            self.ledger.record_settlement(*id, settlement);
            match &verdict.winner {
                Outcome::Value(_) => {
                    self.redeem(*id, &verdict.supporters, &verdict.deviators.keys().copied().collect());
                    if self.requests[id].rad.spec.deliver.is_some() {
                        self.requests.get_mut(id).expect("tracked").awaiting_bridge = true;
                    }
                }
                Outcome::Contested => self.refund(*id),
            }
        }
        self.verdicts_since_update.merge(res.epoch);
        Ok((resolved, correct))
    }

    fn commit_outpoint(&self, id: &HashDigest, w: &ParticipantId) -> Option<OutPoint> {
        let c = self.requests[id].commits.get(w)?;
        let o = OutPoint::new(c.pledge, 0);
        self.ledger.utxo(&o).map(|_| o)
    }

    fn redeem(&mut self, id: HashDigest, supporters: &BTreeSet<ParticipantId>, forfeited: &BTreeSet<ParticipantId>) {
        let forfeits: Vec<OutPoint> = forfeited.iter().filter_map(|w| self.commit_outpoint(&id, w)).collect();
        for s in supporters {
            let Some(own) = self.commit_outpoint(&id, s) else { continue };
            let c = &self.requests[&id].commits[s];
            let (value, prev_block) = (c.value.clone(), c.prev_block);
            let mut inputs = vec![Input {
                source: own,
                unlock: Unlock::Reveal {
                    value: value.clone(),
                    prev_block,
                },
            }];
            inputs.extend(forfeits.iter().map(|o| Input {
                source: *o,
                unlock: Unlock::Forfeit { claimant: *s },
            }));
            let tx = Transaction {
                inputs,
                outputs: vec![Output::pay(Share::ONE, *s)],
                payload: Payload::RevealRedeem {
                    request: id,
                    witness: *s,
                    value,
                    prev_block,
                },
            };
            self.broadcast(tx, TokenAmount::ZERO);
        }
    }

    fn refund(&mut self, id: HashDigest) {
        let mut inputs: Vec<Input> = self.requests[&id]
            .commits
            .keys()
            .filter_map(|w| self.commit_outpoint(&id, w))
            .map(|source| Input {
                source,
                unlock: Unlock::Refund,
            })
            .collect();
        for role in [0, 1] {
            let o = OutPoint::new(id, role);
            if self.ledger.utxo(&o).is_some() {
                inputs.push(Input {
                    source: o,
                    unlock: Unlock::Refund,
                });
            }
        }
        if inputs.is_empty() {
            return;
        }
        let tx = Transaction::value_transfer(inputs, vec![Output::pay(Share::ONE, self.client.id)]);
        self.broadcast(tx, TokenAmount::ZERO);
    }

    /// Draws a bridge for every decided request with a delivery target; the
    /// first eligible participant in id order carries it.
    fn deliver(
        &mut self,
        t: EpochIndex,
        beacon: &RandomBeacon,
        table: &InfluenceTable,
        keys: &KeyRegistry,
        cache: &mut ThresholdCache,
    ) -> Result<(), SimError> {
        let waiting: Vec<HashDigest> = self
            .requests
            .iter()
            .filter(|(_, r)| r.awaiting_bridge)
            .map(|(id, _)| *id)
            .collect();
        for id in waiting {
            let escrow = OutPoint::new(id, 1);
            if self.ledger.utxo(&escrow).is_none() {
                continue;
            }
            let mut bridge = None;
            'tiers: for tier in 1..=self.scenario.backup_cap {
                for p in table.engaged() {
                    let strategy = self.strategy_of(p).expect("engaged participant exists");
                    if !strategy.accepts_tasks() {
                        continue;
                    }
                    let Some(secret) = keys.secret(p) else { continue };
                    let th = cache.get(tier, &table.get(p));
                    if check_with_threshold(secret, t, beacon, TaskKindFlag::Deliver, Some(&id), tier, &th).is_some() {
                        bridge = Some(*p);
                        break 'tiers;
                    }
                }
            }
            let Some(bridge) = bridge else { continue };
            let tx = Transaction::value_transfer(
                vec![Input {
                    source: escrow,
                    unlock: Unlock::Deliver { bridge },
                }],
                vec![Output::pay(Share::ONE, bridge)],
            );
            self.broadcast(tx, TokenAmount::ZERO);
            let tr = self.requests.get_mut(&id).expect("tracked");
            tr.rad = tr
                .rad
                .step(&LifecycleEvent::Delivered)
                .map_err(|e| abort(t.0, "request lifecycle", e))?;
            tr.awaiting_bridge = false;
            let winner = self.ledger.settlement(&id).and_then(|s| s.winner.clone()).unwrap_or_default();
            let target = tr.rad.spec.deliver.as_ref().map(|d| d.target.clone()).unwrap_or_default();
            self.delivery_log.push(DeliveryRecord {
                epoch: t.0,
                request: id,
                bridge,
                target,
                value: String::from_utf8_lossy(&winner).into_owned(),
            });
        }
        Ok(())
    }

    /// States of all requests, for inspection.
    pub fn request_states(&self) -> BTreeMap<HashDigest, RequestState> {
        self.requests.iter().map(|(id, r)| (*id, r.rad.state)).collect()
    }

    /// Commitments reached per request.
    pub fn commit_counts(&self) -> BTreeMap<HashDigest, usize> {
        self.requests.iter().map(|(id, r)| (*id, r.commits.len())).collect()
    }
}

mod hex_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

mod opt_hex_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(hex::encode).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| hex::decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

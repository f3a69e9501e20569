//! Seeded Monte Carlo simulators used as independent oracles for the
//! analytic pipeline.
//!
//! Two levels of simulation are available:
//!
//! - *SINR level*: every slot draws a unit-mean exponential fade for each
//!   transmitter-receiver pair and a Bernoulli activity indicator for each
//!   probabilistic interferer, then compares the instantaneous SINR with the
//!   threshold. Nothing from the closed-form outage expression is used.
//! - *Transition level*: the per-link outage probabilities are computed in
//!   closed form and each node's decode outcome is drawn from them, walking
//!   the CBR state chain one slot at a time.
//!
//! # Random streams
//!
//! Trials are split into shards of [`SHARD_TRIALS`] consecutive trials. Shard
//! `s` draws from ChaCha8 keyed with `seed` (expanded by
//! `SeedableRng::seed_from_u64`) on stream `s`. Shards run in parallel and
//! their integer counts are summed, so estimates depend only on `seed` and
//! the trial count, never on the number of threads.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::channel::{ChannelParams, LinkSet};
use crate::error::{invalid, Result};
use crate::interference::{fixed_point, interference_view, CascadeScenario};
use crate::markov::{link_outage, scatter, CbrState, InterferenceSchedule, NodeState};
use crate::topology::LineTopology;

/// Trials per independent random stream.
pub const SHARD_TRIALS: u64 = 1 << 14;

/// How a CBR simulation draws its randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    SinrLevel,
    TransitionLevel,
}

/// What is being simulated.
#[derive(Debug, Clone, PartialEq)]
pub enum SimScenario {
    /// One CBR with a fixed, probabilistic external interference schedule.
    Standalone {
        topology: LineTopology,
        params: ChannelParams,
        interference: InterferenceSchedule,
    },
    /// A typical CBR in an infinite cascade of identical active zones.
    Cascade(CascadeScenario),
}

impl SimScenario {
    /// A single CBR with no external interference.
    pub fn isolated(topology: LineTopology, params: ChannelParams) -> Self {
        let interference = InterferenceSchedule::none(topology.node_count(), topology.frame_slots());
        SimScenario::Standalone {
            topology,
            params,
            interference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub mode: SimMode,
    /// Fixed-point settings used by transition-level cascade simulation.
    pub xi: f64,
    pub max_iters: usize,
}

impl SimConfig {
    pub fn new(trials: u64, seed: u64, mode: SimMode) -> Self {
        SimConfig {
            trials,
            seed,
            mode,
            xi: crate::interference::DEFAULT_XI,
            max_iters: crate::interference::DEFAULT_MAX_ITERS,
        }
    }
}

/// A Monte Carlo estimate of a failure probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimate {
    pub trials: u64,
    pub failures: u64,
    pub epsilon_hat: f64,
    /// Binomial standard error `sqrt(ε̂ (1 - ε̂) / trials)`.
    pub stderr: f64,
    /// Empirical transmit frequency `[slot - 1][node]`; empty for link-level runs.
    pub transmit_frequency: Vec<Vec<f64>>,
}

impl SimEstimate {
    fn from_counts(trials: u64, failures: u64, transmit_counts: Vec<Vec<u64>>) -> Self {
        let eps = failures as f64 / trials as f64;
        SimEstimate {
            trials,
            failures,
            epsilon_hat: eps,
            stderr: (eps * (1.0 - eps) / trials as f64).sqrt(),
            transmit_frequency: transmit_counts
                .into_iter()
                .map(|row| row.into_iter().map(|c| c as f64 / trials as f64).collect())
                .collect(),
        }
    }

    /// Number of binomial standard deviations, taken at probability `p`,
    /// separating the estimate from `p`.
    pub fn z_score(&self, p: f64) -> f64 {
        let sigma = (p * (1.0 - p) / self.trials as f64).sqrt();
        let diff = (self.epsilon_hat - p).abs();
        if sigma == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / sigma
        }
    }
}

/// Tallies accumulated by one shard.
#[derive(Debug, Clone, Default)]
struct Tally {
    failures: u64,
    transmits: Vec<Vec<u64>>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.failures += other.failures;
        if self.transmits.is_empty() {
            self.transmits = other.transmits;
        } else {
            for (a, b) in self.transmits.iter_mut().zip(other.transmits) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
        }
        self
    }
}

fn run_sharded<F>(trials: u64, seed: u64, shard: F) -> Result<Tally>
where
    F: Fn(&mut ChaCha8Rng, u64) -> Result<Tally> + Sync,
{
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let shards = trials.div_ceil(SHARD_TRIALS);
    (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            let n = SHARD_TRIALS.min(trials - s * SHARD_TRIALS);
            shard(&mut rng, n)
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
}

fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(Exp1)
}

/// SINR-level estimate of a single link's outage probability.
pub fn simulate_outage(
    links: &LinkSet,
    params: &ChannelParams,
    trials: u64,
    seed: u64,
) -> Result<SimEstimate> {
    links.validate()?;
    params.validate()?;
    let noise = 1.0 / params.gamma;
    let tally = run_sharded(trials, seed, |rng, n| {
        let mut failures = 0;
        for _ in 0..n {
            let signal: f64 = links.barraging.iter().map(|g| g * exp1(rng)).sum();
            let mut interference = 0.0;
            for i in &links.interferers {
                let active = rng.random::<f64>() < i.p;
                let fade = exp1(rng);
                if active {
                    interference += i.gain * fade;
                }
            }
            // Outage when SINR <= beta.
            if params.beta > 0.0 && signal <= params.beta * (noise + interference) {
                failures += 1;
            }
        }
        Ok(Tally {
            failures,
            transmits: Vec::new(),
        })
    })?;
    Ok(SimEstimate::from_counts(trials, tally.failures, Vec::new()))
}

/// Simulates whole frames of a CBR and estimates its outage probability and
/// per-slot transmit frequencies.
pub fn simulate_cbr(scenario: &SimScenario, config: &SimConfig) -> Result<SimEstimate> {
    match (scenario, config.mode) {
        (
            SimScenario::Standalone {
                topology,
                params,
                interference,
            },
            mode,
        ) => simulate_standalone(topology, params, interference, mode, config),
        (SimScenario::Cascade(cascade), SimMode::TransitionLevel) => {
            // Neighbors act through their analytic fixed-point schedule.
            let report = fixed_point(cascade, config.xi, config.max_iters)?;
            let view = interference_view(cascade, &report.schedule)?;
            simulate_standalone(
                &cascade.topology,
                &cascade.params,
                &view,
                SimMode::TransitionLevel,
                config,
            )
        }
        (SimScenario::Cascade(cascade), SimMode::SinrLevel) => simulate_ring(cascade, config),
    }
}

fn simulate_standalone(
    topology: &LineTopology,
    params: &ChannelParams,
    interference: &InterferenceSchedule,
    mode: SimMode,
    config: &SimConfig,
) -> Result<SimEstimate> {
    params.validate()?;
    if interference.nodes() != topology.node_count() || interference.slot_count() != topology.frame_slots() {
        return Err(crate::Error::MalformedSchedule(
            "interference schedule does not match the topology".into(),
        ));
    }
    let nodes = topology.node_count();
    let slots = topology.frame_slots();
    let dest = topology.destination();
    let pos = topology.positions();
    let noise = 1.0 / params.gamma;

    // Pairwise gains inside the CBR, checked once up front.
    let mut gain = vec![vec![0.0; nodes]; nodes];
    for i in 0..nodes {
        for j in 0..nodes {
            if i != j {
                gain[i][j] = params.gain((pos[i] - pos[j]).abs())?;
            }
        }
    }

    let tally = run_sharded(config.trials, config.seed, |rng, n| {
        let mut failures = 0;
        let mut transmits = vec![vec![0u64; nodes]; slots];
        let mut cache: HashMap<(usize, u32, usize), f64> = HashMap::new();
        for _ in 0..n {
            let mut state = CbrState::start(nodes);
            for slot in 1..=slots {
                let tx = state.transmitters();
                if tx.is_empty() {
                    break;
                }
                for &i in &tx {
                    transmits[slot - 1][i] += 1;
                }
                let receivers = state.receivers();
                let mut decoded = 0u32;
                for (k, &j) in receivers.iter().enumerate() {
                    let ok = match mode {
                        SimMode::TransitionLevel => {
                            let key = (slot, state.transmitter_mask(), j);
                            let eps = match cache.get(&key) {
                                Some(&e) => e,
                                None => {
                                    let e = link_outage(topology, params, interference, slot, &tx, j)?;
                                    cache.insert(key, e);
                                    e
                                }
                            };
                            rng.random::<f64>() >= eps
                        }
                        SimMode::SinrLevel => {
                            let signal: f64 = tx.iter().map(|&i| gain[i][j] * exp1(rng)).sum();
                            let mut interf = 0.0;
                            for it in interference.at(slot, j) {
                                let active = rng.random::<f64>() < it.p;
                                let fade = exp1(rng);
                                if active {
                                    interf += it.gain * fade;
                                }
                            }
                            params.beta == 0.0 || signal > params.beta * (noise + interf)
                        }
                    };
                    if ok {
                        decoded |= 1 << k;
                    }
                }
                state = state.advance(scatter(decoded, &receivers));
            }
            if state.get(dest) == NodeState::Waiting {
                failures += 1;
            }
        }
        Ok(Tally { failures, transmits })
    })?;
    Ok(SimEstimate::from_counts(config.trials, tally.failures, tally.transmits))
}

/// SINR-level cascade simulation.
///
/// The infinite cascade truncated to the listed offsets is realized as a ring
/// of `2m + 1` CBR copies, where `m` is the largest offset in units of `2d`.
/// Copy `c` hears copy `c + k (mod ring)` at geometric offset `2kd`, so every
/// copy sees exactly the interference environment of the typical CBR while
/// all transmissions are simulated. Statistics are taken from copy 0.
fn simulate_ring(cascade: &CascadeScenario, config: &SimConfig) -> Result<SimEstimate> {
    cascade.validate()?;
    let topo = &cascade.topology;
    let params = &cascade.params;
    let nodes = topo.node_count();
    let slots = topo.frame_slots();
    let dest = topo.destination();
    let pos = topo.positions();
    let d = topo.length();
    let noise = 1.0 / params.gamma;

    let shifts: Vec<i64> = cascade
        .offsets
        .iter()
        .map(|o| (o / (2.0 * d)).round() as i64)
        .collect();
    let reach = shifts.iter().map(|s| s.unsigned_abs()).max().unwrap_or(0) as i64;
    let ring = (2 * reach + 1) as usize;

    let mut own = vec![vec![0.0; nodes]; nodes];
    for i in 0..nodes {
        for j in 0..nodes {
            if i != j {
                own[i][j] = params.gain((pos[i] - pos[j]).abs())?;
            }
        }
    }
    // cross[s][i][j]: gain from node i of the copy shifted by offsets[s] to node j.
    let mut cross = Vec::with_capacity(shifts.len());
    for &o in &cascade.offsets {
        let mut m = vec![vec![0.0; nodes]; nodes];
        for i in 0..nodes {
            for j in 0..nodes {
                m[i][j] = params.gain((pos[i] + o - pos[j]).abs())?;
            }
        }
        cross.push(m);
    }

    let tally = run_sharded(config.trials, config.seed, |rng, n| {
        let mut failures = 0;
        let mut transmits = vec![vec![0u64; nodes]; slots];
        for _ in 0..n {
            let mut states = vec![CbrState::start(nodes); ring];
            for slot in 1..=slots {
                let tx: Vec<Vec<usize>> = states
                    .iter()
                    .map(|s| {
                        let silenced =
                            cascade.halt_on_success && s.get(dest) != NodeState::Waiting;
                        if silenced {
                            Vec::new()
                        } else {
                            s.transmitters()
                        }
                    })
                    .collect();
                if tx.iter().all(|t| t.is_empty()) {
                    break;
                }
                for &i in &tx[0] {
                    transmits[slot - 1][i] += 1;
                }
                let mut next = states.clone();
                for c in 0..ring {
                    if tx[c].is_empty() {
                        continue;
                    }
                    let receivers = states[c].receivers();
                    let mut decoded = 0u32;
                    for (k, &j) in receivers.iter().enumerate() {
                        let signal: f64 = tx[c].iter().map(|&i| own[i][j] * exp1(rng)).sum();
                        let mut interf = 0.0;
                        for (s, &shift) in shifts.iter().enumerate() {
                            let src = (c as i64 + shift).rem_euclid(ring as i64) as usize;
                            for &i in &tx[src] {
                                interf += cross[s][i][j] * exp1(rng);
                            }
                        }
                        if params.beta == 0.0 || signal > params.beta * (noise + interf) {
                            decoded |= 1 << k;
                        }
                    }
                    next[c] = states[c].advance(scatter(decoded, &receivers));
                }
                // A copy silenced by halt_on_success still retires its ready nodes.
                for c in 0..ring {
                    if tx[c].is_empty() && states[c].transmitter_mask() != 0 {
                        next[c] = states[c].advance(0);
                    }
                }
                states = next;
            }
            if states[0].get(dest) == NodeState::Waiting {
                failures += 1;
            }
        }
        Ok(Tally { failures, transmits })
    })?;
    Ok(SimEstimate::from_counts(config.trials, tally.failures, tally.transmits))
}

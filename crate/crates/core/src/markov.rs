//! The CBR as an absorbing Markov chain.
//!
//! Each node of a CBR `[S, R_1, ..., R_N, D]` is in one of three node states:
//! it has not decoded the packet yet (`0`), it decoded in the previous slot and
//! transmits in this one (`1`), or it already transmitted (`2`). Every slot the
//! nodes in state `1` move to `2` and each node in state `0` independently
//! decodes (moves to `1`) with probability `1 - ε_j`, where `ε_j` is the outage
//! probability of the barraging transmission it hears.
//!
//! Transient Markov states are `(slot, CbrState)` pairs. For `N <= 2` every
//! CBR state occurs in exactly one slot, but from `N = 3` on the same vector
//! can be reached after different numbers of slots and the slot matters once
//! interference varies from slot to slot. All CBR states in which the
//! destination decoded collapse into one absorbing *success* state, and all
//! states in which nobody is left to transmit collapse into *outage*.
//!
//! Transitions only go from slot `t` to slot `t + 1`, so with transient states
//! ordered by slot the block `Q` is strictly upper triangular and the chain is
//! absorbed after at most `F = N + 1` slots.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::fmt;

use nalgebra::DMatrix;

use crate::channel::{outage_probability, ChannelParams, Interferer, LinkSet};
use crate::error::{invalid, Error, Result};
use crate::topology::LineTopology;

/// Default upper bound on the relay count accepted by [`StateSpace::enumerate`].
pub const DEFAULT_MAX_RELAYS: usize = 8;
/// Hard limit imposed by the bitmask state encoding.
const HARD_MAX_RELAYS: usize = 20;
/// Row-sum tolerance for the canonical-form check.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// State of a single node with respect to the packet in flight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeState {
    /// Not decoded yet.
    Waiting = 0,
    /// Decoded last slot, transmits this slot.
    Ready = 1,
    /// Already transmitted.
    Done = 2,
}

/// Concatenated node states `[S, R_1, ..., R_N, D]`, stored as bitmasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CbrState {
    nodes: u8,
    ready: u32,
    done: u32,
}

impl CbrState {
    /// `[1, 0, ..., 0]`: the source holds the packet, nobody else does.
    pub fn start(nodes: usize) -> Self {
        CbrState {
            nodes: nodes as u8,
            ready: 1,
            done: 0,
        }
    }

    pub fn from_slice(states: &[NodeState]) -> Self {
        let mut s = CbrState {
            nodes: states.len() as u8,
            ready: 0,
            done: 0,
        };
        for (i, st) in states.iter().enumerate() {
            match st {
                NodeState::Waiting => {}
                NodeState::Ready => s.ready |= 1 << i,
                NodeState::Done => s.done |= 1 << i,
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.nodes as usize
    }

    pub fn is_empty(&self) -> bool {
        self.nodes == 0
    }

    pub fn get(&self, node: usize) -> NodeState {
        if self.ready & (1 << node) != 0 {
            NodeState::Ready
        } else if self.done & (1 << node) != 0 {
            NodeState::Done
        } else {
            NodeState::Waiting
        }
    }

    pub fn to_vec(&self) -> Vec<NodeState> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    fn destination_bit(&self) -> u32 {
        1 << (self.nodes - 1)
    }

    pub fn destination(&self) -> NodeState {
        self.get(self.len() - 1)
    }

    /// Nodes that transmit in the coming slot. The destination never relays.
    pub fn transmitter_mask(&self) -> u32 {
        self.ready & !self.destination_bit()
    }

    pub fn transmitters(&self) -> Vec<usize> {
        bits(self.transmitter_mask())
    }

    /// Nodes still listening for the packet.
    pub fn receivers(&self) -> Vec<usize> {
        let all = (1u32 << self.nodes) - 1;
        bits(all & !(self.ready | self.done))
    }

    /// Successor after a slot in which exactly the receivers whose bit is set
    /// in `decoded` succeed.
    pub fn advance(&self, decoded: u32) -> CbrState {
        let moved = self.ready;
        CbrState {
            nodes: self.nodes,
            ready: decoded,
            done: self.done | moved,
        }
    }

    pub fn is_success(&self) -> bool {
        self.destination() == NodeState::Ready
    }

    /// Nobody is left to transmit and the destination never decoded.
    pub fn is_outage(&self) -> bool {
        self.destination() == NodeState::Waiting && self.transmitter_mask() == 0
    }

    fn lex_key(&self) -> u64 {
        (0..self.len()).fold(0u64, |acc, i| acc * 3 + self.get(i) as u64)
    }
}

impl Ord for CbrState {
    fn cmp(&self, other: &Self) -> Ordering {
        self.nodes
            .cmp(&other.nodes)
            .then_with(|| self.lex_key().cmp(&other.lex_key()))
    }
}

impl PartialOrd for CbrState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CbrState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.len() {
            write!(f, "{}", self.get(i) as u8)?;
        }
        write!(f, "]")
    }
}

fn bits(mut mask: u32) -> Vec<usize> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    while mask != 0 {
        let i = mask.trailing_zeros() as usize;
        out.push(i);
        mask &= mask - 1;
    }
    out
}

/// Spreads the low bits of `outcome` over the positions listed in `targets`.
pub fn scatter(outcome: u32, targets: &[usize]) -> u32 {
    targets
        .iter()
        .enumerate()
        .filter(|(k, _)| outcome & (1 << k) != 0)
        .fold(0, |m, (_, &node)| m | (1 << node))
}

/// Where a transition leads in the collapsed chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Landing {
    Transient(CbrState),
    Outage,
    Success,
}

fn land(next: CbrState) -> Landing {
    if next.is_success() {
        Landing::Success
    } else if next.is_outage() {
        Landing::Outage
    } else {
        Landing::Transient(next)
    }
}

/// A transient Markov state: a CBR state occupied at the start of `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransientState {
    pub slot: usize,
    pub state: CbrState,
}

/// The reachable transient states of a CBR plus the two absorbing aggregates.
///
/// Transient states are ordered by slot, then lexicographically; index 0 is
/// the start state. Absorbing index `τ` is outage and `τ + 1` is success.
///
/// Besides the states themselves the space records, for every transient row,
/// which column each decode pattern lands in, so building a matrix for new
/// link probabilities never has to search the state set again.
#[derive(Debug, Clone)]
pub struct StateSpace {
    relays: usize,
    transient: Vec<TransientState>,
    index: HashMap<TransientState, usize>,
    shapes: Vec<RowShape>,
}

#[derive(Debug, Clone)]
struct RowShape {
    transmitters: Vec<usize>,
    receivers: Vec<usize>,
    /// Distinct target columns, ascending.
    cols: Vec<usize>,
    /// Decode pattern (bit `k` = receiver `k` decoded) -> position in `cols`.
    outcome_pos: Vec<u16>,
}

impl StateSpace {
    pub fn enumerate(relays: usize) -> Result<Self> {
        Self::enumerate_with_limit(relays, DEFAULT_MAX_RELAYS)
    }

    pub fn enumerate_with_limit(relays: usize, max_relays: usize) -> Result<Self> {
        let max = max_relays.min(HARD_MAX_RELAYS);
        if relays > max {
            return Err(Error::TooManyRelays {
                requested: relays,
                max,
            });
        }
        let nodes = relays + 2;
        let mut transient = Vec::new();
        let mut layer = vec![CbrState::start(nodes)];
        let mut slot = 1;
        while !layer.is_empty() {
            layer.sort();
            layer.dedup();
            let mut next_layer = Vec::new();
            for state in &layer {
                transient.push(TransientState { slot, state: *state });
                let receivers = state.receivers();
                for outcome in 0..(1u32 << receivers.len()) {
                    if let Landing::Transient(next) = land(state.advance(scatter(outcome, &receivers))) {
                        next_layer.push(next);
                    }
                }
            }
            layer = next_layer;
            slot += 1;
        }
        let index: HashMap<TransientState, usize> =
            transient.iter().enumerate().map(|(i, s)| (*s, i)).collect();

        let tau = transient.len();
        let shapes = transient
            .iter()
            .map(|ts| {
                let receivers = ts.state.receivers();
                let targets: Vec<usize> = (0..(1u32 << receivers.len()))
                    .map(|outcome| match land(ts.state.advance(scatter(outcome, &receivers))) {
                        Landing::Transient(s) => index[&TransientState {
                            slot: ts.slot + 1,
                            state: s,
                        }],
                        Landing::Outage => tau,
                        Landing::Success => tau + 1,
                    })
                    .collect();
                let mut cols = targets.clone();
                cols.sort_unstable();
                cols.dedup();
                let outcome_pos = targets
                    .iter()
                    .map(|c| cols.binary_search(c).expect("column listed") as u16)
                    .collect();
                RowShape {
                    transmitters: ts.state.transmitters(),
                    receivers,
                    cols,
                    outcome_pos,
                }
            })
            .collect();

        Ok(StateSpace {
            relays,
            transient,
            index,
            shapes,
        })
    }

    pub fn relays(&self) -> usize {
        self.relays
    }

    pub fn nodes(&self) -> usize {
        self.relays + 2
    }

    pub fn frame_slots(&self) -> usize {
        self.relays + 1
    }

    pub fn transient(&self) -> &[TransientState] {
        &self.transient
    }

    pub fn transient_count(&self) -> usize {
        self.transient.len()
    }

    /// Total number of Markov states, transient plus the two absorbing ones.
    pub fn dim(&self) -> usize {
        self.transient.len() + 2
    }

    pub fn outage_index(&self) -> usize {
        self.transient.len()
    }

    pub fn success_index(&self) -> usize {
        self.transient.len() + 1
    }

    pub fn index_of(&self, slot: usize, state: CbrState) -> Option<usize> {
        self.index.get(&TransientState { slot, state }).copied()
    }

    /// The distinct CBR states that collapse into the outage and success
    /// aggregates, in that order.
    pub fn absorbing_members(&self) -> (Vec<CbrState>, Vec<CbrState>) {
        let mut outage = Vec::new();
        let mut success = Vec::new();
        for ts in &self.transient {
            let receivers = ts.state.receivers();
            for outcome in 0..(1u32 << receivers.len()) {
                let next = ts.state.advance(scatter(outcome, &receivers));
                match land(next) {
                    Landing::Outage => outage.push(next),
                    Landing::Success => success.push(next),
                    Landing::Transient(_) => {}
                }
            }
        }
        for v in [&mut outage, &mut success] {
            v.sort();
            v.dedup();
        }
        (outage, success)
    }
}

/// Terminal markers in [`FloodSpace`] successor tables.
const LOST: u32 = u32::MAX;
const DELIVERED: u32 = u32::MAX - 1;

/// The uncollapsed CBR-state chain, layered by slot.
///
/// Unlike [`StateSpace`], states in which the destination already decoded
/// stay in the chain so that relays which still hold the packet keep
/// flooding. A frame ends when nobody is left to transmit.
#[derive(Debug, Clone)]
struct FloodSpace {
    nodes: usize,
    layers: Vec<Vec<FloodState>>,
}

#[derive(Debug, Clone)]
struct FloodState {
    state: CbrState,
    transmitters: Vec<usize>,
    receivers: Vec<usize>,
    /// Decode pattern -> index in the next layer, or a terminal marker.
    next: Vec<u32>,
}

impl FloodSpace {
    fn enumerate(nodes: usize) -> Self {
        let mut layers = Vec::new();
        let mut current = vec![CbrState::start(nodes)];
        while !current.is_empty() {
            let mut successors: Vec<CbrState> = Vec::new();
            let mut position: HashMap<CbrState, u32> = HashMap::new();
            let layer: Vec<FloodState> = current
                .iter()
                .map(|state| {
                    let receivers = state.receivers();
                    let next = (0..(1u32 << receivers.len()))
                        .map(|outcome| {
                            let succ = state.advance(scatter(outcome, &receivers));
                            if succ.transmitter_mask() == 0 {
                                if succ.destination() == NodeState::Waiting {
                                    LOST
                                } else {
                                    DELIVERED
                                }
                            } else {
                                *position.entry(succ).or_insert_with(|| {
                                    successors.push(succ);
                                    (successors.len() - 1) as u32
                                })
                            }
                        })
                        .collect();
                    FloodState {
                        state: *state,
                        transmitters: state.transmitters(),
                        receivers,
                        next,
                    }
                })
                .collect();
            layers.push(layer);
            current = successors;
        }
        FloodSpace { nodes, layers }
    }
}

type SpaceCache<T> = OnceLock<Mutex<HashMap<usize, Arc<T>>>>;

fn cached<T>(cache: &'static SpaceCache<T>, relays: usize, build: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = map.lock().expect("state cache poisoned").get(&relays) {
        return Ok(Arc::clone(hit));
    }
    let built = Arc::new(build()?);
    Ok(Arc::clone(
        map.lock()
            .expect("state cache poisoned")
            .entry(relays)
            .or_insert(built),
    ))
}

/// Process-wide shared state space for `relays` relays.
pub fn shared_state_space(relays: usize) -> Result<Arc<StateSpace>> {
    static CACHE: SpaceCache<StateSpace> = OnceLock::new();
    cached(&CACHE, relays, || {
        StateSpace::enumerate_with_limit(relays, HARD_MAX_RELAYS)
    })
}

fn shared_flood_space(relays: usize) -> Result<Arc<FloodSpace>> {
    static CACHE: SpaceCache<FloodSpace> = OnceLock::new();
    if relays > HARD_MAX_RELAYS {
        return Err(Error::TooManyRelays {
            requested: relays,
            max: HARD_MAX_RELAYS,
        });
    }
    cached(&CACHE, relays, || Ok(FloodSpace::enumerate(relays + 2)))
}

/// Per-slot interferers seen by each node of the CBR.
///
/// Indexed by slot `1..=F` and node index `0..N+2`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceSchedule {
    nodes: usize,
    slots: Vec<Vec<Vec<Interferer>>>,
}

impl InterferenceSchedule {
    /// No external interference at all.
    pub fn none(nodes: usize, slots: usize) -> Self {
        InterferenceSchedule {
            nodes,
            slots: vec![vec![Vec::new(); nodes]; slots],
        }
    }

    /// `slots[t - 1][j]` lists the interferers seen by node `j` in slot `t`.
    pub fn new(slots: Vec<Vec<Vec<Interferer>>>) -> Result<Self> {
        let nodes = slots.first().map_or(0, |s| s.len());
        if slots.iter().any(|s| s.len() != nodes) {
            return Err(Error::MalformedSchedule(
                "every slot must list interferers for every node".into(),
            ));
        }
        for i in slots.iter().flatten().flatten() {
            if !(0.0..=1.0).contains(&i.p) || !(i.gain >= 0.0) || !i.gain.is_finite() {
                return Err(Error::MalformedSchedule(format!(
                    "invalid interferer {{ gain: {}, p: {} }}",
                    i.gain, i.p
                )));
            }
        }
        Ok(InterferenceSchedule { nodes, slots })
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn at(&self, slot: usize, node: usize) -> &[Interferer] {
        &self.slots[slot - 1][node]
    }

    fn check(&self, topology: &LineTopology) -> Result<()> {
        if self.nodes != topology.node_count() || self.slots.len() != topology.frame_slots() {
            return Err(Error::MalformedSchedule(format!(
                "expected {} slots x {} nodes, got {} x {}",
                topology.frame_slots(),
                topology.node_count(),
                self.slots.len(),
                self.nodes
            )));
        }
        Ok(())
    }
}

/// Outage probability of `receiver` when the nodes in `transmitters` barrage in `slot`.
pub fn link_outage(
    topology: &LineTopology,
    params: &ChannelParams,
    interference: &InterferenceSchedule,
    slot: usize,
    transmitters: &[usize],
    receiver: usize,
) -> Result<f64> {
    let pos = topology.positions();
    let barraging = transmitters
        .iter()
        .map(|&k| params.gain((pos[k] - pos[receiver]).abs()))
        .collect::<Result<Vec<_>>>()?;
    let links = LinkSet::new(barraging, interference.at(slot, receiver).to_vec());
    Ok(outage_probability(&links, params)?.epsilon())
}

/// Memoized [`link_outage`] for one topology, channel and interference view.
/// The outage of a receiver depends only on the slot, on who transmits and on
/// the receiver itself.
pub(crate) struct LinkOutages<'a> {
    topology: &'a LineTopology,
    params: &'a ChannelParams,
    interference: &'a InterferenceSchedule,
    memo: HashMap<(usize, u64, usize), f64>,
}

impl<'a> LinkOutages<'a> {
    pub(crate) fn new(
        topology: &'a LineTopology,
        params: &'a ChannelParams,
        interference: &'a InterferenceSchedule,
    ) -> Result<Self> {
        interference.check(topology)?;
        Ok(LinkOutages {
            topology,
            params,
            interference,
            memo: HashMap::new(),
        })
    }

    pub(crate) fn get(&mut self, slot: usize, transmitters: &[usize], receiver: usize) -> Result<f64> {
        let mask = transmitters.iter().fold(0u64, |m, &i| m | (1 << i));
        if let Some(&eps) = self.memo.get(&(slot, mask, receiver)) {
            return Ok(eps);
        }
        let eps = link_outage(
            self.topology,
            self.params,
            self.interference,
            slot,
            transmitters,
            receiver,
        )?;
        self.memo.insert((slot, mask, receiver), eps);
        Ok(eps)
    }

    fn outcome_probabilities(&mut self, slot: usize, transmitters: &[usize], receivers: &[usize]) -> Result<Vec<f64>> {
        let outages = receivers
            .iter()
            .map(|&j| self.get(slot, transmitters, j))
            .collect::<Result<Vec<_>>>()?;
        Ok(outcome_probabilities(&outages))
    }
}

/// Probabilities of every decode pattern of `receivers`, indexed by the
/// outcome bitmask over the receiver list.
fn outcome_probabilities(outages: &[f64]) -> Vec<f64> {
    let mut probs = Vec::with_capacity(1 << outages.len());
    probs.push(1.0);
    for (k, &eps) in outages.iter().enumerate() {
        let half = 1 << k;
        // Patterns with bit k clear fail at receiver k, set ones decode.
        for m in 0..half {
            let p = probs[m];
            probs[m] = p * eps;
            probs.push(p * (1.0 - eps));
        }
        debug_assert_eq!(probs.len(), 2 * half);
    }
    probs
}

/// Canonical-form transition matrix `[[Q, R_abs], [0, I]]`.
///
/// Only the transient rows are stored, sparsely; absorbing rows are implied.
/// Row `i` belongs to the slot of transient state `i`, so the rows of one slot
/// form that slot's matrix `P^(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
    slot_of_row: Vec<usize>,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn transient_count(&self) -> usize {
        self.rows.len()
    }

    /// Nonzero pattern of transient row `i`, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i >= self.rows.len() {
            return if i == j { 1.0 } else { 0.0 };
        }
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map_or(0.0, |k| self.rows[i][k].1)
    }

    pub fn slot_of_row(&self, i: usize) -> usize {
        self.slot_of_row[i]
    }

    pub fn slots(&self) -> usize {
        self.slot_of_row.last().copied().unwrap_or(0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                m[(i, j)] = p;
            }
        }
        for i in self.rows.len()..self.dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Dense copy of the rows that belong to `slot`, zero elsewhere.
    pub fn slot_block(&self, slot: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            if self.slot_of_row[i] == slot {
                for &(j, p) in row {
                    m[(i, j)] = p;
                }
            }
        }
        m
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|(_, p)| p).sum())
            .collect()
    }

    /// Largest deviation of a row sum from one.
    pub fn stochastic_defect(&self) -> f64 {
        self.row_sums()
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn check_stochastic(&self) -> Result<()> {
        let defect = self.stochastic_defect();
        let negative = self.rows.iter().flatten().any(|&(_, p)| !(p >= 0.0));
        if defect > STOCHASTIC_TOLERANCE || negative {
            return Err(invalid(
                "transition matrix",
                format!("rows are not stochastic (max defect {defect:e})"),
            ));
        }
        Ok(())
    }

    /// Frobenius distance between the slot-`slot` rows of two matrices
    /// built over the same state space.
    pub fn slot_distance(&self, other: &TransitionMatrix, slot: usize) -> f64 {
        self.distance_where(other, |s| s == slot)
    }

    /// Largest per-slot Frobenius distance to `other`.
    pub fn max_slot_distance(&self, other: &TransitionMatrix) -> f64 {
        (1..=self.slots())
            .map(|t| self.slot_distance(other, t))
            .fold(0.0, f64::max)
    }

    /// Frobenius distance over the whole matrix.
    pub fn frobenius_distance(&self, other: &TransitionMatrix) -> f64 {
        self.distance_where(other, |_| true)
    }

    fn distance_where(&self, other: &TransitionMatrix, keep: impl Fn(usize) -> bool) -> f64 {
        assert_eq!(self.dim, other.dim, "matrices over different state spaces");
        let mut sum = 0.0;
        for (i, (a, b)) in self.rows.iter().zip(&other.rows).enumerate() {
            if !keep(self.slot_of_row[i]) {
                continue;
            }
            // Same state space, same sparsity pattern.
            for (&(ja, pa), &(jb, pb)) in a.iter().zip(b) {
                debug_assert_eq!(ja, jb);
                sum += (pa - pb).powi(2);
            }
        }
        sum.sqrt()
    }
}

fn check_space(topology: &LineTopology, space: &StateSpace) -> Result<()> {
    if topology.relay_count() != space.relays() {
        return Err(invalid(
            "topology",
            format!(
                "has {} relays but the state space was built for {}",
                topology.relay_count(),
                space.relays()
            ),
        ));
    }
    Ok(())
}

/// Builds the transition matrix of `space` for the given topology, channel
/// and per-slot external interference.
pub fn build_transition_matrix(
    topology: &LineTopology,
    params: &ChannelParams,
    interference: &InterferenceSchedule,
    space: &StateSpace,
) -> Result<TransitionMatrix> {
    check_space(topology, space)?;
    let mut outages = LinkOutages::new(topology, params, interference)?;
    build_with(&mut outages, space)
}

pub(crate) fn build_with(outages: &mut LinkOutages<'_>, space: &StateSpace) -> Result<TransitionMatrix> {
    check_space(outages.topology, space)?;
    let mut rows = Vec::with_capacity(space.transient_count());
    let mut slot_of_row = Vec::with_capacity(space.transient_count());
    for (ts, shape) in space.transient.iter().zip(&space.shapes) {
        let probs = outages.outcome_probabilities(ts.slot, &shape.transmitters, &shape.receivers)?;
        let mut values = vec![0.0; shape.cols.len()];
        for (&pos, p) in shape.outcome_pos.iter().zip(probs) {
            values[pos as usize] += p;
        }
        rows.push(shape.cols.iter().copied().zip(values).collect());
        slot_of_row.push(ts.slot);
    }
    Ok(TransitionMatrix {
        dim: space.dim(),
        rows,
        slot_of_row,
    })
}

/// Absorption probabilities for every transient start state.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionResult {
    /// Row `i` holds `[P(outage), P(success)]` starting from transient state `i`.
    pub b: Vec<[f64; 2]>,
    /// CBR outage probability, `b[0][0]`.
    pub epsilon_cbr: f64,
    /// CBR success probability, `b[0][1]`.
    pub success: f64,
}

/// Absorption via the fundamental matrix: solves `(I - Q) B = R_abs` with a
/// dense LU factorization.
pub fn absorption(matrix: &TransitionMatrix) -> Result<AbsorptionResult> {
    matrix.check_stochastic()?;
    let tau = matrix.transient_count();
    let mut i_minus_q = DMatrix::<f64>::identity(tau, tau);
    let mut r_abs = DMatrix::<f64>::zeros(tau, 2);
    for (i, row) in matrix.rows.iter().enumerate() {
        for &(j, p) in row {
            if j < tau {
                i_minus_q[(i, j)] -= p;
            } else {
                r_abs[(i, j - tau)] += p;
            }
        }
    }
    let b = i_minus_q.lu().solve(&r_abs).ok_or(Error::Singular)?;
    let rows: Vec<[f64; 2]> = (0..tau).map(|i| [b[(i, 0)], b[(i, 1)]]).collect();
    Ok(AbsorptionResult {
        epsilon_cbr: rows[0][0],
        success: rows[0][1],
        b: rows,
    })
}

/// Outcome of one frame started from the start state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutcome {
    pub outage: f64,
    pub success: f64,
}

/// Absorption by pushing the occupancy row vector `e_1` through the slots.
pub fn forward_absorption(matrix: &TransitionMatrix) -> Result<FrameOutcome> {
    matrix.check_stochastic()?;
    let tau = matrix.transient_count();
    let mut occupancy = vec![0.0; tau];
    occupancy[0] = 1.0;
    let mut absorbed = [0.0; 2];
    // Rows are sorted by slot and every transition moves one slot ahead, so a
    // single sweep visits each state after all of its mass has arrived.
    for i in 0..tau {
        let mass = occupancy[i];
        if mass == 0.0 {
            continue;
        }
        for &(j, p) in &matrix.rows[i] {
            if j < tau {
                occupancy[j] += mass * p;
            } else {
                absorbed[j - tau] += mass * p;
            }
        }
    }
    Ok(FrameOutcome {
        outage: absorbed[0],
        success: absorbed[1],
    })
}

/// Probability that each node transmits in each slot of the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitSchedule {
    nodes: usize,
    /// `p[t - 1][i]`.
    p: Vec<Vec<f64>>,
}

impl TransmitSchedule {
    /// The all-silent schedule.
    pub fn silent(nodes: usize, slots: usize) -> Self {
        TransmitSchedule {
            nodes,
            p: vec![vec![0.0; nodes]; slots],
        }
    }

    pub fn from_rows(p: Vec<Vec<f64>>) -> Result<Self> {
        let nodes = p.first().map_or(0, |r| r.len());
        if p.iter().any(|r| r.len() != nodes) {
            return Err(Error::MalformedSchedule("ragged transmit schedule".into()));
        }
        if p.iter().flatten().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::MalformedSchedule(
                "transmit probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(TransmitSchedule { nodes, p })
    }

    pub fn get(&self, node: usize, slot: usize) -> f64 {
        self.p[slot - 1][node]
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn slots(&self) -> usize {
        self.p.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.p
    }
}

/// Result of propagating the uncollapsed CBR-state chain over a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    pub schedule: TransmitSchedule,
    /// Terminal mass in which the destination never decoded.
    pub outage: f64,
    /// Terminal mass in which the destination decoded.
    pub success: f64,
}

/// Propagates occupancy over the full CBR-state chain.
///
/// Relays keep flooding after the destination decodes unless
/// `halt_on_success` is set, in which case states where the destination
/// already holds the packet stop contributing transmissions.
pub fn occupancy(
    topology: &LineTopology,
    params: &ChannelParams,
    interference: &InterferenceSchedule,
    halt_on_success: bool,
) -> Result<Occupancy> {
    let mut outages = LinkOutages::new(topology, params, interference)?;
    occupancy_with(&mut outages, halt_on_success)
}

pub(crate) fn occupancy_with(outages: &mut LinkOutages<'_>, halt_on_success: bool) -> Result<Occupancy> {
    let topology = outages.topology;
    let flood = shared_flood_space(topology.relay_count())?;
    let nodes = flood.nodes;
    let slots = topology.frame_slots();
    let dest = topology.destination();
    let mut schedule = vec![vec![0.0; nodes]; slots];
    let mut outage = 0.0;
    let mut success = 0.0;

    let mut mass = vec![1.0];
    for (t, layer) in flood.layers.iter().enumerate() {
        let slot = t + 1;
        let next_len = flood.layers.get(t + 1).map_or(0, |l| l.len());
        let mut next = vec![0.0; next_len];
        for (fs, &m) in layer.iter().zip(&mass) {
            if m == 0.0 {
                continue;
            }
            if !(halt_on_success && fs.state.get(dest) != NodeState::Waiting) {
                for &i in &fs.transmitters {
                    schedule[slot - 1][i] += m;
                }
            }
            let probs = outages.outcome_probabilities(slot, &fs.transmitters, &fs.receivers)?;
            for (&target, p) in fs.next.iter().zip(probs) {
                match target {
                    LOST => outage += m * p,
                    DELIVERED => success += m * p,
                    k => next[k as usize] += m * p,
                }
            }
        }
        mass = next;
    }
    for v in schedule.iter_mut().flatten() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(Occupancy {
        schedule: TransmitSchedule { nodes, p: schedule },
        outage,
        success,
    })
}

/// Per-slot transmit probabilities of every node of the CBR.
pub fn transmit_probabilities(
    topology: &LineTopology,
    params: &ChannelParams,
    interference: &InterferenceSchedule,
    halt_on_success: bool,
) -> Result<TransmitSchedule> {
    Ok(occupancy(topology, params, interference, halt_on_success)?.schedule)
}

/// CBR outage probability of a topology, absorbing the collapsed chain by
/// forward propagation.
pub fn cbr_outage(
    topology: &LineTopology,
    params: &ChannelParams,
    interference: &InterferenceSchedule,
) -> Result<f64> {
    let space = shared_state_space(topology.relay_count())?;
    let matrix = build_transition_matrix(topology, params, interference, &space)?;
    Ok(forward_absorption(&matrix)?.outage)
}

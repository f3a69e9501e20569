//! Transport capacity and its maximization.
//!
//! The transport capacity of a typical CBR is
//! `Υ = d (1 - ε_CBR) / (2 (N + 1)) · log2(1 + β)`: the throughput of a
//! half-duplex frame of `N + 1` slots carried over the CBR length `d`.
//!
//! [`optimize`] searches relay count `N`, code rate `R = log2(1 + β)`, CBR
//! length `d` and the relay positions with a hybrid scheme. `(R, N, d)` are
//! handled by shrinking endpoint/midpoint triples one coordinate at a time,
//! while the positions for every `(N, d)` pair evolve by random mutation of a
//! remembered reference placement.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::ChannelParams;
use crate::error::{invalid, Error, Result};
use crate::interference::{fixed_point, CascadeScenario, DEFAULT_MAX_ITERS, DEFAULT_XI};
use crate::topology::LineTopology;

/// Far-field guard used when scoring candidates. Optimal CBRs are shorter
/// than the reference distance, so the physical guard of one is relaxed.
pub const DEFAULT_MIN_DISTANCE: f64 = 0.1;

/// `Υ = d (1 - ε) / (2 (N + 1)) · log2(1 + β)`.
pub fn transport_capacity(epsilon_cbr: f64, relays: usize, length: f64, beta: f64) -> f64 {
    length * (1.0 - epsilon_cbr) / (2.0 * (relays as f64 + 1.0)) * (1.0 + beta).log2()
}

/// SINR threshold matching code rate `rate` bits per channel use.
pub fn rate_to_beta(rate: f64) -> f64 {
    rate.exp2() - 1.0
}

pub fn beta_to_rate(beta: f64) -> f64 {
    (1.0 + beta).log2()
}

/// One point of the search space.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateConfig {
    /// Sorted relay positions inside `(0, length)`.
    pub relay_positions: Vec<f64>,
    /// Code rate in bits per channel use.
    pub rate: f64,
    /// CBR length.
    pub length: f64,
}

impl CandidateConfig {
    pub fn new(relay_positions: Vec<f64>, rate: f64, length: f64) -> Result<Self> {
        let c = CandidateConfig {
            relay_positions,
            rate,
            length,
        };
        c.validate()?;
        Ok(c)
    }

    /// `relays` equally spaced relays.
    pub fn equally_spaced(relays: usize, rate: f64, length: f64) -> Result<Self> {
        let topo = LineTopology::equally_spaced(relays, length)?;
        Self::new(topo.relay_positions().to_vec(), rate, length)
    }

    pub fn relays(&self) -> usize {
        self.relay_positions.len()
    }

    pub fn beta(&self) -> f64 {
        rate_to_beta(self.rate)
    }

    pub fn topology(&self) -> Result<LineTopology> {
        LineTopology::new(self.length, &self.relay_positions)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(invalid("rate", format!("must be > 0, got {}", self.rate)));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(invalid("length", format!("must be > 0, got {}", self.length)));
        }
        self.topology().map(|_| ())
    }
}

/// Whether neighboring active zones interfere with the typical CBR.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cci {
    Off,
    On,
}

/// Everything besides the candidate that determines its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    /// Channel parameters; `beta` is replaced by the candidate's rate.
    pub params: ChannelParams,
    pub cci: Cci,
    pub xi: f64,
    pub max_iters: usize,
}

impl Objective {
    /// Relaxes the far-field guard of `params` to [`DEFAULT_MIN_DISTANCE`].
    pub fn new(params: ChannelParams, cci: Cci) -> Result<Self> {
        Ok(Objective {
            params: params.with_min_distance(DEFAULT_MIN_DISTANCE)?,
            cci,
            xi: DEFAULT_XI,
            max_iters: DEFAULT_MAX_ITERS,
        })
    }
}

/// Score of a feasible candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub upsilon: f64,
    pub epsilon_cbr: f64,
}

/// Scores `config`. Geometries violating the far-field guard are infeasible
/// and score `Υ = -∞` with `ε = 1`.
pub fn evaluate(config: &CandidateConfig, objective: &Objective) -> Result<Evaluation> {
    config.validate()?;
    let beta = config.beta();
    let params = objective.params.with_beta(beta)?;
    let topology = config.topology()?;
    let scenario = match objective.cci {
        Cci::On => CascadeScenario::new(topology, params),
        Cci::Off => CascadeScenario::isolated(topology, params),
    };
    match fixed_point(&scenario, objective.xi, objective.max_iters) {
        Ok(report) => {
            let eps = report.epsilon_cbr();
            Ok(Evaluation {
                upsilon: transport_capacity(eps, config.relays(), config.length, beta),
                epsilon_cbr: eps,
            })
        }
        Err(Error::FarField { .. }) => Ok(Evaluation {
            upsilon: f64::NEG_INFINITY,
            epsilon_cbr: 1.0,
        }),
        Err(e) => Err(e),
    }
}

/// Clamping margin, as a fraction of `d`, applied after mutation.
const EDGE_MARGIN: f64 = 0.05;

/// Random move of every relay of `x_ref`: with probability `1 - keep` a relay
/// steps `Δ = d / (n_delta · N)` left or right (equally likely).
///
/// Results are clamped into `[0.05 d, 0.95 d]` and collisions are resolved by
/// the smallest order-preserving shifts.
pub fn mutate_placement<R: Rng + ?Sized>(
    x_ref: &[f64],
    length: f64,
    n_delta: u32,
    keep: f64,
    rng: &mut R,
) -> Vec<f64> {
    let n = x_ref.len();
    if n == 0 {
        return Vec::new();
    }
    let delta = length / (n_delta as f64 * n as f64);
    let mut x: Vec<f64> = x_ref
        .iter()
        .map(|&xi| {
            if rng.random_bool(keep) {
                xi
            } else if rng.random_bool(0.5) {
                xi + delta
            } else {
                xi - delta
            }
        })
        .collect();
    x.sort_by(f64::total_cmp);
    resolve_overlaps(&mut x, length);
    x
}

/// Clamps sorted positions into the admissible band and spreads coincident
/// ones apart by the smallest order-preserving shifts.
fn resolve_overlaps(x: &mut [f64], length: f64) {
    let lo = EDGE_MARGIN * length;
    let hi = (1.0 - EDGE_MARGIN) * length;
    let n = x.len();
    // Positions must differ by a representable amount; a hair of the band is plenty.
    let gap = ((hi - lo) / (n as f64 * 1e3)).max(f64::EPSILON * length);
    for v in x.iter_mut() {
        *v = v.clamp(lo, hi);
    }
    for i in 1..n {
        x[i] = x[i].max(x[i - 1] + gap);
    }
    if x[n - 1] > hi {
        x[n - 1] = hi;
        for i in (0..n - 1).rev() {
            x[i] = x[i].min(x[i + 1] - gap);
        }
    }
}

/// Uniformly random placement of `relays` relays with pairwise separation of
/// at least `d / (3N)`, drawn inside `[0.05 d, 0.95 d]`.
pub fn initial_placement<R: Rng + ?Sized>(relays: usize, length: f64, rng: &mut R) -> Vec<f64> {
    if relays == 0 {
        return Vec::new();
    }
    let sep = length / (3.0 * relays as f64);
    let lo = EDGE_MARGIN * length;
    let slack = (1.0 - 2.0 * EDGE_MARGIN) * length - (relays - 1) as f64 * sep;
    // Sorted uniforms on the slack, each shifted by its rank times the separation.
    let mut u: Vec<f64> = (0..relays).map(|_| rng.random::<f64>() * slack).collect();
    u.sort_by(f64::total_cmp);
    u.iter()
        .enumerate()
        .map(|(i, ui)| lo + ui + i as f64 * sep)
        .collect()
}

/// Search box and stopping rules.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub rate_bounds: (f64, f64),
    pub relay_bounds: (usize, usize),
    pub length_bounds: (f64, f64),
    /// Half-width at which the rate interval stops shrinking.
    pub rate_tolerance: f64,
    /// Half-width at which the length interval stops shrinking.
    pub length_tolerance: f64,
    /// Factor applied to a coordinate's half-width each time it is visited.
    pub shrink: f64,
    /// Largest value of the mutation-scale counter.
    pub n_delta_cap: u32,
    /// Relative gain below which a step counts as bringing no improvement.
    pub upsilon_tolerance: f64,
    /// Probability that a relay stays put in a mutation.
    pub keep_probability: f64,
    pub restarts: u32,
    pub seed: u64,
    /// Safety bound on coordinate steps per restart.
    pub max_steps: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            rate_bounds: (0.5, 8.0),
            relay_bounds: (0, 8),
            length_bounds: (0.1, 6.0),
            rate_tolerance: 1e-3,
            length_tolerance: 1e-3,
            shrink: 0.5,
            n_delta_cap: 8,
            upsilon_tolerance: 1e-6,
            keep_probability: 0.5,
            restarts: 3,
            seed: 0,
            max_steps: 300,
        }
    }
}

impl SearchOptions {
    pub fn validate(&self) -> Result<()> {
        let (r0, r1) = self.rate_bounds;
        if !(r0 > 0.0 && r1 >= r0 && r1.is_finite()) {
            return Err(invalid("rate_bounds", format!("need 0 < lo <= hi, got {r0}..{r1}")));
        }
        let (d0, d1) = self.length_bounds;
        if !(d0 > 0.0 && d1 >= d0 && d1.is_finite()) {
            return Err(invalid("length_bounds", format!("need 0 < lo <= hi, got {d0}..{d1}")));
        }
        let (n0, n1) = self.relay_bounds;
        if n1 < n0 {
            return Err(invalid("relay_bounds", format!("need lo <= hi, got {n0}..{n1}")));
        }
        if !(self.rate_tolerance > 0.0) || !(self.length_tolerance > 0.0) {
            return Err(invalid("tolerance", "must be > 0"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(invalid("shrink", format!("must lie in (0, 1), got {}", self.shrink)));
        }
        if !(self.upsilon_tolerance >= 0.0) {
            return Err(invalid("upsilon_tolerance", "must be >= 0"));
        }
        if self.n_delta_cap < 2 {
            return Err(invalid("n_delta_cap", "must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.keep_probability) {
            return Err(invalid("keep_probability", "must lie in [0, 1]"));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts", "must be at least 1"));
        }
        Ok(())
    }
}

/// Endpoints and midpoint of one continuous coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple {
    pub lo: f64,
    pub mid: f64,
    pub hi: f64,
}

/// Endpoints and midpoint of the relay count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntTriple {
    pub lo: usize,
    pub mid: usize,
    pub hi: usize,
}

/// Which coordinate a search step refined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    Rate,
    Length,
    Relays,
}

/// Search bookkeeping of one restart.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub rate: Triple,
    pub relays: IntTriple,
    pub length: Triple,
    rate_step: Step,
    length_step: Step,
    relay_half: usize,
    /// Reference placement per `(N, d)`, keyed by the bit pattern of `d`.
    pub references: HashMap<(usize, u64), Vec<f64>>,
    pub n_delta: u32,
}

impl SearchState {
    fn new(options: &SearchOptions) -> Self {
        let (r0, r1) = options.rate_bounds;
        let (d0, d1) = options.length_bounds;
        let (n0, n1) = options.relay_bounds;
        let mut s = SearchState {
            rate: Triple { lo: r0, mid: r0, hi: r1 },
            relays: IntTriple { lo: n0, mid: n0, hi: n1 },
            length: Triple { lo: d0, mid: d0, hi: d1 },
            rate_step: Step::new((r1 - r0) / 2.0),
            length_step: Step::new((d1 - d0) / 2.0),
            relay_half: (n1 - n0).div_ceil(2),
            references: HashMap::new(),
            n_delta: 2,
        };
        s.rate = centered((r0 + r1) / 2.0, s.rate_step.half, options.rate_bounds);
        s.length = centered((d0 + d1) / 2.0, s.length_step.half, options.length_bounds);
        s.relays = int_centered(n0 + (n1 - n0) / 2, s.relay_half, options.relay_bounds);
        s
    }

    fn at_tolerance(&self, options: &SearchOptions) -> bool {
        self.rate_step.half <= options.rate_tolerance
            && self.length_step.half <= options.length_tolerance
            && self.relay_half <= 1
    }
}

/// Half-width of a continuous coordinate's triple.
///
/// It shrinks when the midpoint wins. Consecutive moves in the same
/// direction undo one shrink each, so a midpoint that has to travel far, for
/// instance along a ridge shared with another coordinate, is not stuck with
/// a tiny step.
#[derive(Debug, Clone, Copy)]
struct Step {
    half: f64,
    initial: f64,
    last_move: f64,
}

impl Step {
    fn new(half: f64) -> Self {
        Step {
            half,
            initial: half,
            last_move: 0.0,
        }
    }

    fn update(&mut self, from: f64, to: f64, shrink: f64, tolerance: f64) {
        let dir = (to - from).signum() * f64::from(to != from);
        if dir == 0.0 {
            self.half = (self.half * shrink).max(tolerance);
        } else if dir == self.last_move {
            self.half = (self.half / shrink).min(self.initial);
        }
        self.last_move = dir;
    }
}

fn centered(mid: f64, half: f64, (lo, hi): (f64, f64)) -> Triple {
    let mid = mid.clamp(lo, hi);
    Triple {
        lo: (mid - half).max(lo),
        mid,
        hi: (mid + half).min(hi),
    }
}

fn int_centered(mid: usize, half: usize, (lo, hi): (usize, usize)) -> IntTriple {
    let mid = mid.clamp(lo, hi);
    IntTriple {
        lo: mid.saturating_sub(half).max(lo),
        mid,
        hi: (mid + half).min(hi),
    }
}

/// One coordinate step of the search.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub restart: u32,
    pub step: usize,
    pub coordinate: Coordinate,
    /// Midpoints after the step.
    pub rate: f64,
    pub relays: usize,
    pub length: f64,
    pub n_delta: u32,
    /// Best Υ seen so far in this search, over all restarts.
    pub best_upsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub best: CandidateConfig,
    pub upsilon: f64,
    pub epsilon_cbr: f64,
    pub evaluations: usize,
    pub trace: Vec<TraceEntry>,
    /// Coordinates whose final midpoint sits on a search bound, which
    /// suggests the bounds did not bracket the optimum.
    pub boundary_hits: Vec<Coordinate>,
}

/// Scored candidate; ordering puts better candidates first.
#[derive(Debug, Clone)]
struct Scored {
    config: CandidateConfig,
    eval: Evaluation,
}

/// Higher Υ wins; ties go to fewer relays, then shorter CBRs, then the
/// lexicographically smaller placement, then the lower rate.
fn better(a: &Scored, b: &Scored) -> bool {
    use std::cmp::Ordering::*;
    match a.eval.upsilon.total_cmp(&b.eval.upsilon) {
        Greater => return true,
        Less => return false,
        Equal => {}
    }
    let key = |s: &Scored| (s.config.relays(), s.config.length);
    let (na, da) = key(a);
    let (nb, db) = key(b);
    if na != nb {
        return na < nb;
    }
    if da != db {
        return da < db;
    }
    for (x, y) in a.config.relay_positions.iter().zip(&b.config.relay_positions) {
        if x != y {
            return x < y;
        }
    }
    a.config.rate < b.config.rate
}

type CacheKey = (u64, u64, Vec<u64>);

fn cache_key(c: &CandidateConfig) -> CacheKey {
    (
        c.rate.to_bits(),
        c.length.to_bits(),
        c.relay_positions.iter().map(|x| x.to_bits()).collect(),
    )
}

/// Memoized, parallel scoring.
struct Scorer<'a> {
    objective: &'a Objective,
    cache: Mutex<HashMap<CacheKey, Evaluation>>,
}

impl Scorer<'_> {
    fn score_all(&self, configs: &[CandidateConfig]) -> Result<Vec<Evaluation>> {
        configs
            .par_iter()
            .map(|c| {
                let key = cache_key(c);
                if let Some(e) = self.cache.lock().expect("score cache poisoned").get(&key) {
                    return Ok(*e);
                }
                let e = evaluate(c, self.objective)?;
                self.cache.lock().expect("score cache poisoned").insert(key, e);
                Ok(e)
            })
            .collect()
    }

    fn evaluations(&self) -> usize {
        self.cache.lock().expect("score cache poisoned").len()
    }
}

/// Maximizes transport capacity over relay count, placement, code rate and
/// CBR length.
///
/// Every step scores the 27-point lattice of endpoints and midpoints of
/// `(R, N, d)`, each `(N, d)` pair with its reference placement and two
/// mutations of it. The best placement becomes the new reference, the active
/// coordinate's midpoint moves to its best value and its interval shrinks.
/// Coordinates are visited in the order `R`, `d`, `N`. When a step brings no
/// improvement the mutation counter `n_delta` grows, and the search ends once
/// all intervals are at tolerance, `n_delta` is at its cap and a full pass
/// brings no improvement. Independent restarts use separate random streams.
pub fn optimize(objective: &Objective, options: &SearchOptions) -> Result<OptResult> {
    options.validate()?;
    let scorer = Scorer {
        objective,
        cache: Mutex::new(HashMap::new()),
    };
    let mut best: Option<Scored> = None;
    let mut trace = Vec::new();
    let mut last_state = None;
    for restart in 0..options.restarts {
        let state = search(&scorer, options, restart, &mut best, &mut trace)?;
        last_state = Some(state);
    }
    let best = best.expect("at least one restart ran");
    if !best.eval.upsilon.is_finite() {
        return Err(invalid("bounds", "no feasible candidate in the search box"));
    }
    let state = last_state.expect("at least one restart ran");
    let mut boundary_hits = Vec::new();
    let c = &best.config;
    if c.rate <= options.rate_bounds.0 || c.rate >= options.rate_bounds.1 {
        boundary_hits.push(Coordinate::Rate);
    }
    if c.length <= options.length_bounds.0 || c.length >= options.length_bounds.1 {
        boundary_hits.push(Coordinate::Length);
    }
    if options.relay_bounds.0 < options.relay_bounds.1
        && (c.relays() == options.relay_bounds.0 && options.relay_bounds.0 > 0
            || c.relays() == options.relay_bounds.1)
    {
        boundary_hits.push(Coordinate::Relays);
    }
    for hit in &boundary_hits {
        log::warn!("optimum on the {hit:?} search bound; widen the bounds to bracket it");
    }
    drop(state);
    Ok(OptResult {
        upsilon: best.eval.upsilon,
        epsilon_cbr: best.eval.epsilon_cbr,
        best: best.config,
        evaluations: scorer.evaluations(),
        trace,
        boundary_hits,
    })
}

fn search(
    scorer: &Scorer<'_>,
    options: &SearchOptions,
    restart: u32,
    best: &mut Option<Scored>,
    trace: &mut Vec<TraceEntry>,
) -> Result<SearchState> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(restart as u64);
    let mut state = SearchState::new(options);
    let coordinates = [Coordinate::Rate, Coordinate::Length, Coordinate::Relays];
    let mut stale_steps = 0;
    let mut restart_best = f64::NEG_INFINITY;

    for step in 0..options.max_steps {
        let coordinate = coordinates[step % 3];
        let rates = distinct(&[state.rate.lo, state.rate.mid, state.rate.hi]);
        let lengths = distinct(&[state.length.lo, state.length.mid, state.length.hi]);
        let mut counts = vec![state.relays.lo, state.relays.mid, state.relays.hi];
        counts.dedup();

        // Three placements per (N, d) pair, drawn in a fixed order.
        let mut groups = Vec::new();
        for &n in &counts {
            for &d in &lengths {
                let reference = state
                    .references
                    .entry((n, d.to_bits()))
                    .or_insert_with(|| initial_placement(n, d, &mut rng))
                    .clone();
                let mut placements = vec![reference.clone()];
                for _ in 0..2 {
                    placements.push(mutate_placement(
                        &reference,
                        d,
                        state.n_delta,
                        options.keep_probability,
                        &mut rng,
                    ));
                }
                groups.push((n, d, placements));
            }
        }
        let mut configs = Vec::new();
        for (_, d, placements) in &groups {
            for x in placements {
                for &r in &rates {
                    configs.push(CandidateConfig {
                        relay_positions: x.clone(),
                        rate: r,
                        length: *d,
                    });
                }
            }
        }
        let evals = scorer.score_all(&configs)?;
        let scored: Vec<Scored> = configs
            .into_iter()
            .zip(evals)
            .map(|(config, eval)| Scored { config, eval })
            .collect();

        // Keep the best placement of every (N, d) pair.
        let per_group = 3 * rates.len();
        for (g, (n, d, _)) in groups.iter().enumerate() {
            let chunk = &scored[g * per_group..(g + 1) * per_group];
            let top = chunk
                .iter()
                .reduce(|a, b| if better(b, a) { b } else { a })
                .expect("non-empty group");
            state
                .references
                .insert((*n, d.to_bits()), top.config.relay_positions.clone());
        }

        let step_best = scored
            .iter()
            .reduce(|a, b| if better(b, a) { b } else { a })
            .expect("non-empty lattice");
        if best.as_ref().is_none_or(|b| better(step_best, b)) {
            *best = Some(step_best.clone());
        }

        // Best Υ reached by each value of the active coordinate.
        let value_best = |pick: &dyn Fn(&CandidateConfig) -> bool| {
            scored
                .iter()
                .filter(|s| pick(&s.config))
                .map(|s| s.eval.upsilon)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        // The midpoint moves to a better endpoint keeping the interval width;
        // once the midpoint itself wins, the interval shrinks around it.
        match coordinate {
            Coordinate::Rate => {
                let t = state.rate;
                let (mid, _) = pick_mid([t.lo, t.mid, t.hi], |v| {
                    value_best(&|c: &CandidateConfig| c.rate == v)
                });
                state
                    .rate_step
                    .update(t.mid, mid, options.shrink, options.rate_tolerance);
                state.rate = centered(mid, state.rate_step.half, options.rate_bounds);
            }
            Coordinate::Length => {
                let t = state.length;
                let (mid, _) = pick_mid([t.lo, t.mid, t.hi], |v| {
                    value_best(&|c: &CandidateConfig| c.length == v)
                });
                state
                    .length_step
                    .update(t.mid, mid, options.shrink, options.length_tolerance);
                state.length = centered(mid, state.length_step.half, options.length_bounds);
            }
            Coordinate::Relays => {
                let t = state.relays;
                let (mid, moved) = pick_mid([t.lo as f64, t.mid as f64, t.hi as f64], |v| {
                    value_best(&|c: &CandidateConfig| c.relays() as f64 == v)
                });
                if !moved {
                    state.relay_half =
                        ((state.relay_half as f64 * options.shrink).round() as usize).max(1);
                }
                state.relays = int_centered(mid as usize, state.relay_half, options.relay_bounds);
            }
        }

        let improved =
            step_best.eval.upsilon > restart_best + options.upsilon_tolerance * restart_best.abs();
        if improved || !restart_best.is_finite() && step_best.eval.upsilon.is_finite() {
            restart_best = step_best.eval.upsilon;
            stale_steps = 0;
        } else {
            stale_steps += 1;
            if state.n_delta < options.n_delta_cap {
                state.n_delta += 1;
            }
        }
        trace.push(TraceEntry {
            restart,
            step,
            coordinate,
            rate: state.rate.mid,
            relays: state.relays.mid,
            length: state.length.mid,
            n_delta: state.n_delta,
            best_upsilon: best.as_ref().map_or(f64::NEG_INFINITY, |b| b.eval.upsilon),
        });
        if state.at_tolerance(options) && state.n_delta >= options.n_delta_cap && stale_steps >= 3 {
            break;
        }
    }
    Ok(state)
}

/// Value of a coordinate with the highest score and whether it differs from
/// the midpoint. Ties prefer the midpoint, then the lower endpoint.
fn pick_mid(values: [f64; 3], score: impl Fn(f64) -> f64) -> (f64, bool) {
    let [lo, mid, hi] = values;
    let mut best = (mid, score(mid));
    for v in [lo, hi] {
        let s = score(v);
        if s > best.1 {
            best = (v, s);
        }
    }
    (best.0, best.0 != mid)
}

fn distinct(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.dedup();
    v
}

/// Best equally spaced candidate over a rectangular grid, by brute force.
///
/// Used as an oracle for [`optimize`]; infeasible points are skipped.
pub fn grid_search(
    objective: &Objective,
    relays: &[usize],
    rates: &[f64],
    lengths: &[f64],
) -> Result<(CandidateConfig, Evaluation)> {
    let mut configs = Vec::new();
    for &n in relays {
        for &d in lengths {
            for &r in rates {
                configs.push(CandidateConfig::equally_spaced(n, r, d)?);
            }
        }
    }
    let evals: Vec<Evaluation> = configs
        .par_iter()
        .map(|c| evaluate(c, objective))
        .collect::<Result<_>>()?;
    configs
        .into_iter()
        .zip(evals)
        .map(|(config, eval)| Scored { config, eval })
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .map(|s| (s.config, s.eval))
        .ok_or_else(|| invalid("grid", "empty grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::db_to_linear;
    use approx::assert_relative_eq;

    fn objective(gamma_db: f64, cci: Cci) -> Objective {
        let params = ChannelParams::new(db_to_linear(gamma_db), 3.5, 1.0).unwrap();
        Objective::new(params, cci).unwrap()
    }

    #[test]
    fn capacity_degenerate_cases() {
        assert_eq!(transport_capacity(1.0, 3, 2.0, 10.0), 0.0);
        assert_eq!(transport_capacity(0.2, 3, 2.0, 0.0), 0.0);
        assert_relative_eq!(transport_capacity(0.0, 0, 1.0, 1.0), 0.5);
        assert_relative_eq!(beta_to_rate(rate_to_beta(4.452)), 4.452, max_relative = 1e-14);
    }

    #[test]
    fn direct_link_closed_form() {
        let obj = objective(10.0, Cci::Off);
        for (d, r) in [(0.5, 5.028), (0.3, 2.0), (1.4, 1.0)] {
            let c = CandidateConfig::new(vec![], r, d).unwrap();
            let beta = rate_to_beta(r);
            let expected = d * (-beta * d.powf(3.5) / db_to_linear(10.0)).exp() * r / 2.0;
            let got = evaluate(&c, &obj).unwrap();
            assert_relative_eq!(got.upsilon, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn cci_off_is_an_empty_interference_schedule() {
        use crate::markov::{cbr_outage, InterferenceSchedule};
        let off = objective(5.0, Cci::Off);
        let c = CandidateConfig::equally_spaced(2, 3.0, 1.5).unwrap();
        let topo = c.topology().unwrap();
        let params = off.params.with_beta(c.beta()).unwrap();
        let none = InterferenceSchedule::none(topo.node_count(), topo.frame_slots());
        let eps = cbr_outage(&topo, &params, &none).unwrap();
        assert_eq!(evaluate(&c, &off).unwrap().epsilon_cbr, eps);
    }

    #[test]
    fn infeasible_geometry_scores_minus_infinity() {
        let obj = objective(0.0, Cci::Off);
        let c = CandidateConfig::new(vec![0.05], 2.0, 0.12).unwrap();
        let e = evaluate(&c, &obj).unwrap();
        assert_eq!(e.upsilon, f64::NEG_INFINITY);
    }

    #[test]
    fn mutation_keeps_everything_when_asked() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = vec![0.3, 0.9, 1.7];
        assert_eq!(mutate_placement(&x, 2.0, 2, 1.0, &mut rng), x);
    }

    #[test]
    fn forced_move_is_clamped_inside_the_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = mutate_placement(&[1.0], 2.0, 2, 0.0, &mut rng);
            // d/2 ± d/2 lands on an endpoint and is pulled back inside.
            assert!(x[0] == 0.1 || x[0] == 1.9, "{x:?}");
        }
    }

    #[test]
    fn mutation_keeps_order_and_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = vec![0.2, 0.21, 0.22, 1.0];
        for _ in 0..200 {
            x = mutate_placement(&x, 1.2, 2, 0.5, &mut rng);
            assert!(x.windows(2).all(|w| w[0] < w[1]), "{x:?}");
            assert!(x.iter().all(|&v| (0.06 - 1e-12..=1.14 + 1e-12).contains(&v)));
        }
    }

    #[test]
    fn initial_placement_respects_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=8 {
            for _ in 0..100 {
                let x = initial_placement(n, 2.0, &mut rng);
                assert_eq!(x.len(), n);
                let sep = 2.0 / (3.0 * n as f64);
                assert!(x.windows(2).all(|w| w[1] - w[0] >= sep - 1e-12));
                assert!(x[0] >= 0.1 && x[n - 1] <= 1.9 + 1e-12);
            }
        }
    }

    #[test]
    fn tie_break_prefers_fewer_relays() {
        let e = Evaluation {
            upsilon: 1.0,
            epsilon_cbr: 0.0,
        };
        let a = Scored {
            config: CandidateConfig::equally_spaced(0, 1.0, 1.0).unwrap(),
            eval: e,
        };
        let b = Scored {
            config: CandidateConfig::equally_spaced(1, 1.0, 1.0).unwrap(),
            eval: e,
        };
        assert!(better(&a, &b));
        assert!(!better(&b, &a));
    }

    #[test]
    fn direct_link_search_finds_the_analytic_optimum() {
        // For N = 0 the optimum over d at fixed rate has d^α = Γ / (α β).
        let obj = objective(10.0, Cci::Off);
        let options = SearchOptions {
            relay_bounds: (0, 0),
            restarts: 1,
            ..SearchOptions::default()
        };
        let res = optimize(&obj, &options).unwrap();
        let beta = res.best.beta();
        let d_star = (db_to_linear(10.0) / (3.5 * beta)).powf(1.0 / 3.5);
        assert_relative_eq!(res.best.length, d_star, max_relative = 0.02);
        let again = evaluate(&res.best, &obj).unwrap();
        assert_eq!(again.upsilon, res.upsilon);
        assert!(res.trace.windows(2).all(|w| w[1].best_upsilon >= w[0].best_upsilon));
    }
}

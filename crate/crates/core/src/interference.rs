//! Co-channel interference between the active zones of an infinite cascade.
//!
//! The transition probabilities of a CBR depend on how likely the nodes of
//! neighboring active zones are to transmit in each slot, and those transmit
//! probabilities follow from the neighbors' own transition probabilities. In a
//! cascade of identical CBRs one *typical* CBR describes them all, so the
//! coupling is resolved by iterating on that single CBR: start from silent
//! neighbors, build the per-slot matrices, extract the transmit schedule, feed
//! it back as the neighbors' schedule, and stop once successive matrices are
//! within `xi` of each other (Frobenius norm, worst slot).

use crate::channel::{ChannelParams, Interferer};
use crate::error::{invalid, Result};
use crate::markov::{
    build_with, forward_absorption, occupancy_with, shared_state_space, InterferenceSchedule,
    LinkOutages, TransitionMatrix, TransmitSchedule,
};
use crate::topology::LineTopology;

pub const DEFAULT_XI: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 50;

/// A typical CBR together with the translated copies that interfere with it.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeScenario {
    pub topology: LineTopology,
    pub params: ChannelParams,
    /// Translations of the typical CBR whose nodes interfere with it.
    pub offsets: Vec<f64>,
    /// Stop counting relay transmissions once the destination has decoded.
    pub halt_on_success: bool,
}

impl CascadeScenario {
    /// The two nearest active zones, at `±2d`.
    pub fn new(topology: LineTopology, params: ChannelParams) -> Self {
        Self::with_reach(topology, params, 1)
    }

    /// Active zones at `±2d, ±4d, ..., ±2kd`.
    pub fn with_reach(topology: LineTopology, params: ChannelParams, reach: usize) -> Self {
        let d = topology.length();
        let offsets = (1..=reach)
            .flat_map(|k| {
                let o = 2.0 * k as f64 * d;
                [-o, o]
            })
            .collect();
        CascadeScenario {
            topology,
            params,
            offsets,
            halt_on_success: false,
        }
    }

    /// No interfering zones at all.
    pub fn isolated(topology: LineTopology, params: ChannelParams) -> Self {
        CascadeScenario {
            topology,
            params,
            offsets: Vec::new(),
            halt_on_success: false,
        }
    }

    pub fn zone_length(&self) -> f64 {
        self.topology.length()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let d = self.zone_length();
        if !(d > 0.0) {
            return Err(invalid("zone_length", format!("must be > 0, got {d}")));
        }
        for &o in &self.offsets {
            let zones = o / (2.0 * d);
            if o == 0.0 || (zones - zones.round()).abs() > 1e-9 {
                return Err(invalid(
                    "offsets",
                    format!("{o} is not a nonzero multiple of 2d = {}", 2.0 * d),
                ));
            }
        }
        Ok(())
    }
}

/// Interferers seen by each node of the typical CBR in each slot, given the
/// transmit schedule shared by every active zone. Copies are slot-synchronized
/// translations; silent interferers (`p = 0`) are left out.
pub fn interference_view(
    scenario: &CascadeScenario,
    schedule: &TransmitSchedule,
) -> Result<InterferenceSchedule> {
    let topo = &scenario.topology;
    let pos = topo.positions();
    let slots = topo.frame_slots();
    if schedule.slots() != slots || schedule.nodes() != topo.node_count() {
        return Err(crate::Error::MalformedSchedule(format!(
            "schedule is {} slots x {} nodes, topology needs {} x {}",
            schedule.slots(),
            schedule.nodes(),
            slots,
            topo.node_count()
        )));
    }

    // Geometry first, so that a far-field violation is reported regardless of
    // which nodes happen to be active.
    let mut gains = vec![Vec::new(); pos.len()];
    for (j, &xj) in pos.iter().enumerate() {
        for &offset in &scenario.offsets {
            for (i, &xi) in pos.iter().enumerate() {
                gains[j].push((i, scenario.params.gain((xj - (xi + offset)).abs())?));
            }
        }
    }

    let view = (1..=slots)
        .map(|t| {
            gains
                .iter()
                .map(|row| {
                    row.iter()
                        .filter_map(|&(i, g)| {
                            let p = schedule.get(i, t);
                            (p > 0.0).then_some(Interferer::new(g, p))
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    InterferenceSchedule::new(view)
}

/// Outcome of the interference fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    /// Number of matrices evaluated, iteration 0 included.
    pub iterations_used: usize,
    /// CBR outage probability after each iteration, starting at iteration 0.
    pub trace: Vec<f64>,
    /// Worst-slot Frobenius distance between successive matrices; entry `k`
    /// compares iteration `k + 1` with iteration `k`.
    pub distances: Vec<f64>,
    /// Transmit schedule extracted from the final matrices.
    pub schedule: TransmitSchedule,
    /// Final transition matrix; its per-slot blocks are the `P^(t)`.
    pub matrix: TransitionMatrix,
    pub converged: bool,
}

impl FixedPointReport {
    pub fn epsilon_cbr(&self) -> f64 {
        *self.trace.last().expect("trace holds iteration 0")
    }
}

/// Iterates the typical-CBR analysis until the transition matrices settle.
///
/// Non-convergence within `max_iters` recursions is reported through
/// [`FixedPointReport::converged`], not as an error.
pub fn fixed_point(
    scenario: &CascadeScenario,
    xi: f64,
    max_iters: usize,
) -> Result<FixedPointReport> {
    scenario.validate()?;
    if !(xi > 0.0) {
        return Err(invalid("xi", format!("must be > 0, got {xi}")));
    }
    if max_iters == 0 {
        return Err(invalid("max_iters", "must be at least 1"));
    }
    let topo = &scenario.topology;
    let params = &scenario.params;
    let space = shared_state_space(topo.relay_count())?;

    let evaluate = |schedule: &TransmitSchedule| -> Result<(TransitionMatrix, f64, TransmitSchedule)> {
        let view = interference_view(scenario, schedule)?;
        let mut outages = LinkOutages::new(topo, params, &view)?;
        let matrix = build_with(&mut outages, &space)?;
        let eps = forward_absorption(&matrix)?.outage;
        let next = occupancy_with(&mut outages, scenario.halt_on_success)?.schedule;
        Ok((matrix, eps, next))
    };

    let silent = TransmitSchedule::silent(topo.node_count(), topo.frame_slots());
    let (mut matrix, eps0, mut schedule) = evaluate(&silent)?;
    let mut trace = vec![eps0];
    let mut distances = Vec::new();
    let mut converged = false;

    for _ in 0..max_iters {
        let (next_matrix, eps, next_schedule) = evaluate(&schedule)?;
        let dist = next_matrix.max_slot_distance(&matrix);
        trace.push(eps);
        distances.push(dist);
        matrix = next_matrix;
        schedule = next_schedule;
        if dist < xi {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!(
            "fixed point did not converge within {max_iters} iterations (last distance {:e})",
            distances.last().copied().unwrap_or(f64::NAN)
        );
    }

    Ok(FixedPointReport {
        iterations_used: trace.len(),
        trace,
        distances,
        schedule,
        matrix,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::cbr_outage;

    fn example_scenario(gamma_db: f64, alpha: f64) -> CascadeScenario {
        let topo = LineTopology::equally_spaced(2, 3.0).unwrap();
        let params = ChannelParams::from_db(gamma_db, alpha, 6.0).unwrap();
        CascadeScenario::new(topo, params)
    }

    #[test]
    fn silent_neighbors_add_nothing() {
        let sc = example_scenario(10.0, 3.5);
        let view = interference_view(&sc, &TransmitSchedule::silent(4, 3)).unwrap();
        for t in 1..=3 {
            for j in 0..4 {
                assert!(view.at(t, j).is_empty());
            }
        }
    }

    #[test]
    fn source_only_schedule_with_one_neighbor() {
        let mut sc = example_scenario(10.0, 3.5);
        sc.offsets = vec![6.0];
        let mut rows = vec![vec![0.0; 4]; 3];
        rows[0][0] = 1.0;
        let sched = TransmitSchedule::from_rows(rows).unwrap();
        let view = interference_view(&sc, &sched).unwrap();
        for j in 0..4 {
            assert_eq!(view.at(1, j).len(), 1);
            assert!(view.at(2, j).is_empty());
            assert!(view.at(3, j).is_empty());
        }
    }

    #[test]
    fn translated_distances() {
        // Typical CBR at {0,1,2,3}; copies at {-6..-3} and {6..9}.
        let sc = example_scenario(10.0, 3.5);
        let sched = TransmitSchedule::from_rows(vec![vec![1.0; 4]; 3]).unwrap();
        let view = interference_view(&sc, &sched).unwrap();
        let d = view.at(1, 3);
        let expect: Vec<f64> = [9.0, 8.0, 7.0, 6.0, 3.0, 4.0, 5.0, 6.0]
            .iter()
            .map(|x: &f64| x.powf(-3.5))
            .collect();
        let got: Vec<f64> = d.iter().map(|i| i.gain).collect();
        assert_eq!(got.len(), 8);
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn overlapping_copy_is_far_field_error() {
        let topo = LineTopology::equally_spaced(2, 0.6).unwrap();
        let params = ChannelParams::from_db(10.0, 3.5, 6.0).unwrap();
        let sc = CascadeScenario::new(topo, params);
        assert!(interference_view(&sc, &TransmitSchedule::silent(4, 3)).is_err());
    }

    #[test]
    fn rejects_bad_offsets() {
        let mut sc = example_scenario(10.0, 3.5);
        sc.offsets = vec![3.0];
        assert!(fixed_point(&sc, 1e-6, 5).is_err());
        let sc = example_scenario(10.0, 3.5);
        assert!(fixed_point(&sc, 0.0, 5).is_err());
        assert!(fixed_point(&sc, 1e-6, 0).is_err());
    }

    #[test]
    fn iteration_zero_is_the_isolated_cbr() {
        for (g, a) in [(0.0, 3.0), (10.0, 3.5), (10.0, 4.0)] {
            let sc = example_scenario(g, a);
            let report = fixed_point(&sc, DEFAULT_XI, DEFAULT_MAX_ITERS).unwrap();
            let isolated = cbr_outage(
                &sc.topology,
                &sc.params,
                &InterferenceSchedule::none(4, 3),
            )
            .unwrap();
            assert_eq!(report.trace[0], isolated);
        }
    }

    #[test]
    fn converges_above_the_isolated_value() {
        let sc = example_scenario(10.0, 3.5);
        let r = fixed_point(&sc, 1e-6, 50).unwrap();
        assert!(r.converged);
        assert!(r.iterations_used <= 11);
        assert_eq!(r.trace.len(), r.iterations_used);
        assert!(r.trace.iter().all(|&e| e >= r.trace[0]));
        // Neighbors seeded with the interference-free schedule are too busy, so
        // the first recursion brackets the fixed point from above.
        assert!(r.trace[1] >= r.epsilon_cbr());
        assert_eq!(r.schedule.get(0, 1), 1.0);
    }

    #[test]
    fn isolated_scenario_converges_immediately() {
        let topo = LineTopology::equally_spaced(2, 3.0).unwrap();
        let params = ChannelParams::from_db(10.0, 3.5, 6.0).unwrap();
        let r = fixed_point(&CascadeScenario::isolated(topo, params), 1e-6, 5).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations_used, 2);
        assert_eq!(r.trace[0], r.trace[1]);
    }

    #[test]
    fn reports_are_deterministic() {
        let sc = example_scenario(0.0, 3.0);
        assert_eq!(fixed_point(&sc, 1e-6, 50).unwrap(), fixed_point(&sc, 1e-6, 50).unwrap());
    }

    #[test]
    fn budget_exhaustion_is_not_an_error() {
        let sc = example_scenario(0.0, 3.0);
        let r = fixed_point(&sc, 1e-300, 2).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations_used, 3);
    }
}

//! Independent oracles for the Markov analysis and the closed-form outage.

use barrage::channel::{outage_probability, Interferer, LinkSet};
use barrage::markov::{
    absorption, build_transition_matrix, cbr_outage, forward_absorption, link_outage, scatter,
    CbrState, InterferenceSchedule, NodeState, StateSpace,
};
use barrage::montecarlo::simulate_outage;
use barrage::{ChannelParams, LineTopology};

/// Outage by summing over every decode history of the frame, without any
/// state space: recursively branch on which receivers decode in each slot.
fn path_sum(
    topo: &LineTopology,
    params: &ChannelParams,
    interference: &InterferenceSchedule,
    state: CbrState,
    slot: usize,
) -> f64 {
    if state.destination() != NodeState::Waiting {
        return 0.0;
    }
    let tx = state.transmitters();
    if tx.is_empty() {
        return 1.0;
    }
    let rx = state.receivers();
    let eps: Vec<f64> = rx
        .iter()
        .map(|&j| link_outage(topo, params, interference, slot, &tx, j).unwrap())
        .collect();
    let mut total = 0.0;
    for outcome in 0..(1u32 << rx.len()) {
        let p: f64 = eps
            .iter()
            .enumerate()
            .map(|(k, e)| if outcome >> k & 1 == 1 { 1.0 - e } else { *e })
            .product();
        if p == 0.0 {
            continue;
        }
        let next = state.advance(scatter(outcome, &rx));
        total += p * path_sum(topo, params, interference, next, slot + 1);
    }
    total
}

/// Slot-varying interference on every node, to exercise the slot-aware chain.
fn noisy_schedule(topo: &LineTopology) -> InterferenceSchedule {
    let slots = (1..=topo.frame_slots())
        .map(|t| {
            (0..topo.node_count())
                .map(|j| {
                    let g = 0.01 * (1 + j + 2 * t) as f64;
                    vec![Interferer::new(g, 0.2 + 0.1 * t as f64), Interferer::new(g / 3.0, 0.9)]
                })
                .collect()
        })
        .collect();
    InterferenceSchedule::new(slots).unwrap()
}

#[test]
fn three_absorption_routes_agree_for_small_cbrs() {
    for relays in 0..=2 {
        for (gamma_db, alpha, beta_db) in [(0.0, 3.5, 6.0), (10.0, 3.0, 0.0), (20.0, 4.0, 3.0)] {
            let topo = LineTopology::equally_spaced(relays, (relays + 1) as f64 * 1.3).unwrap();
            let params = ChannelParams::from_db(gamma_db, alpha, beta_db).unwrap();
            for interference in [
                InterferenceSchedule::none(topo.node_count(), topo.frame_slots()),
                noisy_schedule(&topo),
            ] {
                let space = StateSpace::enumerate(relays).unwrap();
                let p = build_transition_matrix(&topo, &params, &interference, &space).unwrap();
                let fundamental = absorption(&p).unwrap().epsilon_cbr;
                let forward = forward_absorption(&p).unwrap().outage;
                let paths = path_sum(&topo, &params, &interference, CbrState::start(relays + 2), 1);
                assert!((fundamental - paths).abs() <= 1e-10, "{relays}: {fundamental} vs {paths}");
                assert!((forward - paths).abs() <= 1e-10, "{relays}: {forward} vs {paths}");
            }
        }
    }
}

#[test]
fn path_sum_matches_for_three_relays_with_slot_varying_interference() {
    let topo = LineTopology::new(4.4, &[1.0, 2.1, 3.3]).unwrap();
    let params = ChannelParams::from_db(8.0, 3.5, 4.0).unwrap();
    let interference = noisy_schedule(&topo);
    let paths = path_sum(&topo, &params, &interference, CbrState::start(5), 1);
    let chain = cbr_outage(&topo, &params, &interference).unwrap();
    assert!((chain - paths).abs() <= 1e-10);
}

#[test]
fn single_relay_hand_formula() {
    for (gamma_db, alpha, beta_db) in [(0.0, 3.5, 6.0), (10.0, 3.0, 3.0), (15.0, 4.0, 0.0)] {
        let topo = LineTopology::equally_spaced(1, 2.0).unwrap();
        let params = ChannelParams::from_db(gamma_db, alpha, beta_db).unwrap();
        let none = InterferenceSchedule::none(3, 2);
        let e = |slot, tx: &[usize], rx| link_outage(&topo, &params, &none, slot, tx, rx).unwrap();
        let (e_sd, e_sr, e_rd) = (e(1, &[0], 2), e(1, &[0], 1), e(2, &[1], 2));
        let hand = e_sd * e_sr + e_sd * (1.0 - e_sr) * e_rd;
        let chain = cbr_outage(&topo, &params, &none).unwrap();
        assert!((chain - hand).abs() <= 1e-12, "{chain} vs {hand}");
    }
}

#[test]
fn two_relay_state_space_matches_the_hand_enumeration() {
    let space = StateSpace::enumerate(2).unwrap();
    assert_eq!(space.transient_count(), 6);
    assert_eq!(space.dim(), 8);
}

#[test]
fn closed_form_agrees_with_simulation_on_a_mixed_link_set() {
    // Two barraging nodes at distances 1 and 2, an intermittent interferer at 3.
    let params = ChannelParams::from_db(10.0, 3.5, 6.0).unwrap();
    let links = LinkSet::new(
        vec![1.0, 2f64.powf(-3.5)],
        vec![Interferer::new(3f64.powf(-3.5), 0.5)],
    );
    let exact = outage_probability(&links, &params).unwrap().epsilon();
    let est = simulate_outage(&links, &params, 10_000_000, 2024).unwrap();
    assert!(est.z_score(exact) <= 3.0, "exact {exact}, simulated {}", est.epsilon_hat);
    // Pinned from a 10^7-frame run (0.29303, standard error 1.4e-4).
    assert!((exact - 0.2930007).abs() < 1e-6, "{exact}");
    assert!((est.epsilon_hat - 0.2930007).abs() <= 3.0 * est.stderr);
}

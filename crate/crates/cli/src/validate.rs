//! Invariant suite run by `barrage validate`.
//!
//! Every check reports a metric and the threshold it must stay under (or, for
//! the grid oracle, the margin it must stay above), evaluated on the
//! scenario's channel.

use barrage::channel::{outage_probability, Interferer, LinkSet};
use barrage::interference::{fixed_point, CascadeScenario};
use barrage::markov::{absorption, cbr_outage, forward_absorption, link_outage, InterferenceSchedule};
use barrage::optimizer::{grid_search, mutate_placement, optimize};
use barrage::{ChannelParams, LineTopology};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::commands::objective;
use crate::csv::Table;
use crate::{CliError, ScenarioFile};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub metric: f64,
    pub threshold: f64,
}

impl Check {
    /// Passes when `metric <= threshold`.
    fn at_most(name: &'static str, metric: f64, threshold: f64) -> Self {
        Check {
            name,
            passed: metric <= threshold,
            metric,
            threshold,
        }
    }
}

pub const REPORT_HEADER: &[&str] = &["check", "passed", "metric", "threshold"];

pub fn report(checks: &[Check]) -> Table {
    let mut t = Table::new(REPORT_HEADER);
    for c in checks {
        t.push(vec![c.name.into(), c.passed.into(), c.metric.into(), c.threshold.into()]);
    }
    t
}

/// Relay counts covered by the chain checks.
const MAX_CHAIN_RELAYS: usize = 4;

/// Topologies with unit spacing (or the scenario's far-field guard, if larger).
fn lines(params: &ChannelParams) -> Result<Vec<LineTopology>, CliError> {
    let spacing = params.min_distance.max(1.0);
    (0..=MAX_CHAIN_RELAYS)
        .map(|n| Ok(LineTopology::equally_spaced(n, spacing * (n + 1) as f64)?))
        .collect()
}

/// A few link sets spanning one to four barraging nodes and some interferers.
fn link_sets() -> Vec<LinkSet> {
    vec![
        LinkSet::new(vec![1.0], vec![]),
        LinkSet::new(vec![0.3, 2.0], vec![Interferer::new(0.05, 0.4)]),
        LinkSet::new(
            vec![0.8, 0.1, 1.7],
            vec![Interferer::new(0.2, 1.0), Interferer::new(0.01, 0.3)],
        ),
        LinkSet::new(vec![0.5, 0.5 * (1.0 + 1e-12), 4.0, 0.02], vec![Interferer::new(0.3, 0.7)]),
    ]
}

pub fn run(scenario: &ScenarioFile) -> Result<Vec<Check>, CliError> {
    let params = scenario.params()?;
    let topologies = lines(&params)?;
    let mut checks = Vec::new();

    // Chain structure, under the scenario's interference model.
    let mut defect: f64 = 0.0;
    let mut b_defect: f64 = 0.0;
    let mut routes: f64 = 0.0;
    for topo in &topologies {
        let cascade = match scenario.cci.enabled {
            true => CascadeScenario::new(topo.clone(), params),
            false => CascadeScenario::isolated(topo.clone(), params),
        };
        let report = fixed_point(&cascade, scenario.fixed_point.xi, scenario.fixed_point.max_iters)?;
        let m = &report.matrix;
        let negative = (0..m.transient_count()).any(|i| m.row(i).iter().any(|&(_, p)| p < 0.0));
        defect = defect.max(if negative { f64::INFINITY } else { m.stochastic_defect() });
        let b = absorption(m)?;
        for row in &b.b {
            b_defect = b_defect.max((row[0] + row[1] - 1.0).abs());
        }
        let fwd = forward_absorption(m)?;
        routes = routes.max((fwd.outage - b.epsilon_cbr).abs());
    }
    checks.push(Check::at_most("row_stochasticity", defect, 1e-9));
    checks.push(Check::at_most("b_row_normalization", b_defect, 1e-9));
    checks.push(Check::at_most("absorption_routes_agree", routes, 1e-10));

    // Relay hand formula.
    let one = &topologies[1];
    let quiet = InterferenceSchedule::none(3, 2);
    let e_sd = link_outage(one, &params, &quiet, 1, &[0], 2)?;
    let e_sr = link_outage(one, &params, &quiet, 1, &[0], 1)?;
    let e_rd = link_outage(one, &params, &quiet, 2, &[1], 2)?;
    let hand = e_sd * e_sr + e_sd * (1.0 - e_sr) * e_rd;
    let chain = cbr_outage(one, &params, &quiet)?;
    checks.push(Check::at_most("single_relay_hand_formula", (hand - chain).abs(), 1e-12));

    // Closed-form reductions.
    let mut vanishing: f64 = 0.0;
    let mut zero_beta: f64 = 0.0;
    for links in link_sets() {
        let base = outage_probability(&links, &params)?.epsilon();
        for silent in [Interferer::new(0.7, 0.0), Interferer::new(0.0, 1.0)] {
            let mut more = links.clone();
            more.interferers.push(silent);
            vanishing = vanishing.max((outage_probability(&more, &params)?.epsilon() - base).abs());
        }
        zero_beta = zero_beta.max(outage_probability(&links, &params.with_beta(0.0)?)?.epsilon());
    }
    for topo in &topologies {
        let none = InterferenceSchedule::none(topo.node_count(), topo.frame_slots());
        zero_beta = zero_beta.max(cbr_outage(topo, &params.with_beta(0.0)?, &none)?);
    }
    checks.push(Check::at_most("interferer_vanishing", vanishing, 1e-15));
    checks.push(Check::at_most("beta_zero_outage", zero_beta, 0.0));

    let mut single: f64 = 0.0;
    for gain in [0.01, 0.3, 1.0, 7.5] {
        let eps = outage_probability(&LinkSet::new(vec![gain], vec![]), &params)?.epsilon();
        let want = 1.0 - (-params.beta / (gain * params.gamma)).exp();
        single = single.max(if want == 0.0 { eps } else { (eps - want).abs() / want });
    }
    checks.push(Check::at_most("single_transmitter_reduction", single, 1e-12));

    // Mutation statistics: each relay moves with probability 1/2.
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.optimization.seed);
    let x_ref = [0.5, 1.0, 1.5, 2.0];
    let draws = 10_000;
    let mut moved = [0u32; 4];
    for _ in 0..draws {
        // With a step of d / 16 relays cannot collide or reach the edges.
        let x = mutate_placement(&x_ref, 2.5, 4, 0.5, &mut rng);
        for (m, (a, b)) in moved.iter_mut().zip(x.iter().zip(&x_ref)) {
            *m += u32::from(a != b);
        }
    }
    let sigma = (0.25 / draws as f64).sqrt();
    let worst = moved
        .iter()
        .map(|&m| (m as f64 / draws as f64 - 0.5).abs() / sigma)
        .fold(0.0, f64::max);
    checks.push(Check::at_most("mutation_keep_frequency_z", worst, 3.0));

    // Grid oracle over N <= 2 with equally spaced relays.
    let obj = objective(scenario, scenario.channel.gamma_db, scenario.cci.enabled)?;
    let mut options = scenario.optimization.search_options();
    options.relay_bounds = (0, 2);
    let found = optimize(&obj, &options)?;
    let grid = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..16).map(|i| lo + (hi - lo) * i as f64 / 15.0).collect()
    };
    let (_, best) = grid_search(
        &obj,
        &[0, 1, 2],
        &grid(options.rate_bounds),
        &grid(options.length_bounds),
    )?;
    // Relative shortfall of the optimizer below the grid optimum.
    let shortfall = (best.upsilon - found.upsilon) / best.upsilon;
    checks.push(Check::at_most("grid_oracle_shortfall", shortfall, 0.01));

    Ok(checks)
}

//! The subcommands. Each returns its tables; writing them is left to the caller.

use barrage::channel::db_to_linear;
use barrage::interference::fixed_point;
use barrage::montecarlo::{simulate_cbr, SimConfig, SimScenario};
use barrage::optimizer::{optimize, Cci, Objective, OptResult};
use barrage::ChannelParams;

use crate::csv::{join, Cell, Table};
use crate::{CliError, ScenarioFile};

pub const SWEEP_HEADER: &[&str] = &[
    "gamma_db",
    "beta_db",
    "cci",
    "epsilon_cbr",
    "mc_epsilon",
    "mc_stderr",
    "mc_z",
    "mc_trials",
];

/// CBR outage over the `sweep.gamma_db` x `sweep.beta_db` grid, with Monte
/// Carlo estimates when `simulation.trials > 0`.
pub fn outage_sweep(scenario: &ScenarioFile) -> Result<Table, CliError> {
    let topology = scenario.topology()?;
    let base = scenario.params()?;
    let sim = &scenario.simulation;
    let mut table = Table::new(SWEEP_HEADER);
    let mut point = 0u64;
    for &beta_db in &scenario.sweep.beta_db {
        for &gamma_db in &scenario.sweep.gamma_db {
            let params = base
                .with_gamma(db_to_linear(gamma_db))?
                .with_beta(db_to_linear(beta_db))?;
            let cascade = scenario.cascade(topology.clone(), params);
            let report = fixed_point(
                &cascade,
                scenario.fixed_point.xi,
                scenario.fixed_point.max_iters,
            )?;
            let eps = report.epsilon_cbr();
            let mc = if sim.trials > 0 {
                let mut config = SimConfig::new(sim.trials, sim.seed.wrapping_add(point), sim.mode.into());
                config.xi = scenario.fixed_point.xi;
                config.max_iters = scenario.fixed_point.max_iters;
                Some(simulate_cbr(&SimScenario::Cascade(cascade), &config)?)
            } else {
                None
            };
            table.push(vec![
                gamma_db.into(),
                beta_db.into(),
                scenario.cci.enabled.into(),
                eps.into(),
                mc.as_ref().map(|e| e.epsilon_hat).into(),
                mc.as_ref().map(|e| e.stderr).into(),
                mc.as_ref().map(|e| e.z_score(eps)).into(),
                mc.as_ref().map(|e| e.trials).into(),
            ]);
            point += 1;
        }
    }
    Ok(table)
}

pub const ITERATE_HEADER: &[&str] = &[
    "gamma_db",
    "alpha",
    "beta_db",
    "iteration",
    "epsilon_cbr",
    "distance",
    "converged",
];

/// Fixed-point traces of the typical CBR in a cascade, one block of rows per
/// `(Γ, α)` case. Interference from the neighbors is always on here.
pub fn iterate(scenario: &ScenarioFile) -> Result<Table, CliError> {
    let topology = scenario.topology()?;
    let min_distance = scenario.channel.min_distance;
    let beta_db = scenario.iterate.beta_db;
    let mut with_cci = scenario.clone();
    with_cci.cci.enabled = true;
    let mut table = Table::new(ITERATE_HEADER);
    for case in &scenario.iterate.cases {
        let params = ChannelParams::from_db(case.gamma_db, case.alpha, beta_db)?
            .with_min_distance(min_distance)?;
        let cascade = with_cci.cascade(topology.clone(), params);
        let report = fixed_point(
            &cascade,
            scenario.fixed_point.xi,
            scenario.fixed_point.max_iters,
        )?;
        for (i, &eps) in report.trace.iter().enumerate() {
            table.push(vec![
                case.gamma_db.into(),
                case.alpha.into(),
                beta_db.into(),
                i.into(),
                eps.into(),
                i.checked_sub(1).map(|k| report.distances[k]).into(),
                report.converged.into(),
            ]);
        }
    }
    Ok(table)
}

pub const OPTIMIZE_HEADER: &[&str] = &[
    "gamma_db",
    "cci",
    "rate",
    "relays",
    "length",
    "positions",
    "upsilon",
    "epsilon_cbr",
    "evaluations",
    "boundary_hits",
];

pub const TRACE_HEADER: &[&str] = &[
    "gamma_db",
    "cci",
    "restart",
    "step",
    "coordinate",
    "rate",
    "relays",
    "length",
    "n_delta",
    "best_upsilon",
];

/// One optimizer run of the `optimize` command.
#[derive(Debug, Clone)]
pub struct OptimizeRow {
    pub gamma_db: f64,
    pub cci: bool,
    pub result: OptResult,
}

/// Objective for one `(Γ, cci)` pair of the `optimization` section.
pub fn objective(scenario: &ScenarioFile, gamma_db: f64, cci: bool) -> Result<Objective, CliError> {
    let params = ChannelParams::new(db_to_linear(gamma_db), scenario.channel.alpha, 1.0)?;
    let mut obj = Objective::new(params, if cci { Cci::On } else { Cci::Off })?;
    obj.params = obj.params.with_min_distance(scenario.optimization.min_distance)?;
    obj.xi = scenario.fixed_point.xi;
    obj.max_iters = scenario.fixed_point.max_iters;
    Ok(obj)
}

/// Runs the optimizer for every `(Γ, cci)` pair.
pub fn optimize_rows(scenario: &ScenarioFile) -> Result<Vec<OptimizeRow>, CliError> {
    let options = scenario.optimization.search_options();
    let mut rows = Vec::new();
    for &gamma_db in &scenario.optimization.gamma_db {
        for &cci in &scenario.optimization.cci {
            let obj = objective(scenario, gamma_db, cci)?;
            log::info!("optimizing gamma = {gamma_db} dB, cci = {cci}");
            let result = optimize(&obj, &options)?;
            rows.push(OptimizeRow {
                gamma_db,
                cci,
                result,
            });
        }
    }
    Ok(rows)
}

/// Result table and search-trace table of the `optimize` command.
pub fn optimize_tables(rows: &[OptimizeRow]) -> (Table, Table) {
    let mut table = Table::new(OPTIMIZE_HEADER);
    let mut trace = Table::new(TRACE_HEADER);
    for row in rows {
        let r = &row.result;
        let hits: Vec<String> = r.boundary_hits.iter().map(|c| format!("{c:?}").to_lowercase()).collect();
        table.push(vec![
            row.gamma_db.into(),
            row.cci.into(),
            r.best.rate.into(),
            r.best.relays().into(),
            r.best.length.into(),
            join(&r.best.relay_positions).into(),
            r.upsilon.into(),
            r.epsilon_cbr.into(),
            r.evaluations.into(),
            hits.join(";").into(),
        ]);
        for t in &r.trace {
            trace.push(vec![
                row.gamma_db.into(),
                row.cci.into(),
                t.restart.into(),
                t.step.into(),
                Cell::Text(format!("{:?}", t.coordinate).to_lowercase()),
                t.rate.into(),
                t.relays.into(),
                t.length.into(),
                t.n_delta.into(),
                t.best_upsilon.into(),
            ]);
        }
    }
    (table, trace)
}

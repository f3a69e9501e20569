use std::path::PathBuf;
use std::process::ExitCode;

use barrage_cli::{commands, validate, CliError, RunOptions, ScenarioFile};
use clap::{Parser, Subcommand};

/// Environment variable that fixes the worker-thread count.
const THREADS_ENV: &str = "BARRAGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "barrage", version, about = "Outage analysis and optimization of barrage relay networks")]
struct Args {
    /// Scenario file (TOML). Built-in defaults are used when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Output directory for CSV files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for simulation and optimization.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Monte Carlo frames per point.
    #[arg(long, global = true)]
    trials: Option<u64>,

    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// CBR outage versus SNR for each threshold, optionally with Monte Carlo.
    OutageSweep,
    /// Fixed-point traces of a typical CBR under co-channel interference.
    Iterate,
    /// Transport-capacity optimization for each (SNR, CCI) pair.
    Optimize,
    /// Run the invariant suite; exits 1 when any check fails.
    Validate,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if args.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))
}

fn run(args: Args) -> Result<(), CliError> {
    configure_threads()?;
    let mut scenario = match &args.scenario {
        Some(path) => ScenarioFile::load(path)?,
        None => ScenarioFile::default(),
    };
    let options = RunOptions {
        out: args.out,
        seed: args.seed,
        trials: args.trials,
        quiet: args.quiet,
    };
    options.apply(&mut scenario);
    let out = options.out_dir(&scenario);
    std::fs::create_dir_all(&out)?;

    let say = |msg: String| {
        if !options.quiet {
            println!("{msg}");
        }
    };
    match args.command {
        Command::OutageSweep => {
            let path = out.join("outage_sweep.csv");
            commands::outage_sweep(&scenario)?.write(&path)?;
            say(format!("wrote {}", path.display()));
        }
        Command::Iterate => {
            let path = out.join("iterate.csv");
            commands::iterate(&scenario)?.write(&path)?;
            say(format!("wrote {}", path.display()));
        }
        Command::Optimize => {
            let rows = commands::optimize_rows(&scenario)?;
            let (table, trace) = commands::optimize_tables(&rows);
            for row in &rows {
                let r = &row.result;
                say(format!(
                    "gamma_db={} cci={} N={} d={:.3} R={:.3} upsilon={:.4}",
                    row.gamma_db,
                    row.cci,
                    r.best.relays(),
                    r.best.length,
                    r.best.rate,
                    r.upsilon
                ));
            }
            let path = out.join("optimize.csv");
            table.write(&path)?;
            trace.write(&out.join("optimize_trace.csv"))?;
            say(format!("wrote {}", path.display()));
        }
        Command::Validate => {
            let checks = validate::run(&scenario)?;
            let path = out.join("validate.csv");
            validate::report(&checks).write(&path)?;
            for c in &checks {
                say(format!(
                    "{} {} (metric {:e}, threshold {:e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.metric,
                    c.threshold
                ));
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::Invalid(format!("{failed} validation check(s) failed")));
            }
        }
    }
    Ok(())
}

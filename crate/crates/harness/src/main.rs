use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use shadowlab::acceptance::{run_suite, CRITERIA};
use shadowlab::experiments::{run_scenario, with_workers};
use shadowlab::ledger::Ledger;
use shadowlab::report::{emit_report, Format};
use shadowlab::scenario::{Experiment, Scenario};
use shadowlab::HarnessError;

#[derive(Parser)]
#[command(name = "shadowlab", version, about = "Symplectic shadow and capacity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for the ledger and reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario's quadrature order (multiple of 4).
    #[arg(long, global = true)]
    quadrature_order: Option<usize>,
    /// Overrides the scenario's pass tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Overrides the scenario seed; base seed for `verify`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Thread count (default: all cores).
    #[arg(long, global = true, env = "SHADOWLAB_WORKERS")]
    workers: Option<usize>,
    /// Report formats; all three when omitted.
    #[arg(long, global = true, value_enum)]
    format: Vec<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Shadow volume of a linear symplectic map.
    LinearShadow,
    /// Shadow margin along an analytic path of embeddings.
    ShadowScan,
    /// Local r0 map over a grid of ball centres.
    R0Map,
    /// Minimal action capacity of a convex body.
    Capacity,
    /// Normal form, obstruction and capacity profile of a multiplier deformation.
    DeformAnalyze,
    /// Run the acceptance suite.
    Verify {
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<usize>,
    },
}

fn kind_matches(cmd: &Command, e: &Experiment) -> bool {
    matches!(
        (cmd, e),
        (Command::LinearShadow, Experiment::LinearShadow)
            | (Command::ShadowScan, Experiment::ShadowScan { .. })
            | (Command::R0Map, Experiment::R0Map { .. })
            | (Command::Capacity, Experiment::Capacity { .. })
            | (Command::DeformAnalyze, Experiment::DeformAnalyze { .. })
    )
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    let c = &cli.common;
    let workers = c.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let formats = if c.format.is_empty() {
        vec![Format::Csv, Format::Json, Format::Svg]
    } else {
        c.format.clone()
    };
    let mut ledger = Ledger::new();
    let all_pass = match &cli.command {
        Command::Verify { criteria } => {
            let ids: Vec<usize> = if criteria.is_empty() { (1..=CRITERIA).collect() } else { criteria.clone() };
            if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > CRITERIA) {
                return Err(HarnessError::InvalidConfig(format!("no criterion {bad}")));
            }
            let seed = c.seed.unwrap_or(0x5eed);
            let (results, l) = with_workers(workers, || run_suite(&ids, seed, |r| println!("{}", r.line())));
            ledger = l;
            let passed = results.iter().filter(|r| r.pass).count();
            println!("{passed}/{} criteria passed", results.len());
            results.iter().all(|r| r.pass)
        }
        cmd => {
            let path = c
                .config
                .as_ref()
                .ok_or_else(|| HarnessError::InvalidConfig("--config is required".into()))?;
            let mut s = Scenario::load(path)?;
            if !kind_matches(cmd, &s.experiment) {
                return Err(HarnessError::InvalidConfig("scenario experiment does not match the subcommand".into()));
            }
            if let Some(q) = c.quadrature_order {
                s.params.quadrature_order = q;
            }
            if let Some(t) = c.tol {
                s.params.tol = t;
            }
            if let Some(seed) = c.seed {
                s.params.seed = seed;
            }
            s.validate()?;
            let start = Instant::now();
            let out = with_workers(workers, || run_scenario(&s))?;
            ledger.extend(out.records);
            ledger.time(&s.id, start.elapsed().as_secs_f64());
            println!("{}", serde_json::to_string_pretty(&out.summary).expect("summary serializes"));
            for r in ledger.records() {
                println!(
                    "{} {} t_or_r={:.6} value={:.12} margin={:.3e}",
                    if r.pass { "pass" } else { "FAIL" },
                    r.scenario_id,
                    r.t_or_r,
                    r.value,
                    r.margin
                );
            }
            ledger.all_pass()
        }
    };
    ledger.persist(&c.out)?;
    emit_report(ledger.records(), &formats, &c.out)?;
    Ok(all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

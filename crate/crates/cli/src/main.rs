//! `c2st` — conditional two-sample testing from the command line.
//!
//! Subcommands:
//! * `simulate` — run a Monte Carlo plan file and write a rejection-rate
//!   report;
//! * `test` — run one method on CSV data and print the outcome;
//! * `calibrate` — sample a method's null statistic on a synthetic
//!   scenario and report a KS-against-N(0,1) diagnostic.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use c2st::harness::{
    emit_report, load_csv, load_csv_pair, parse_plan, parse_scenario_id, run_monte_carlo,
    CsvSchema, MethodSpec, ReportFormat,
};
use c2st::stats::ks_test_standard_normal;
use c2st::synth::{gen_scenario, Hypothesis, ScenarioConfig};
use c2st::{drt, Error, PairedData, StreamRng};

const JOBS_ENV: &str = "C2ST_JOBS";

#[derive(Parser)]
#[command(name = "c2st", version, about = "Conditional two-sample testing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment plan and write a report.
    Simulate(SimulateArgs),
    /// Run a single test on CSV data and print the outcome.
    Test(TestArgs),
    /// Sample a method's null statistic and check normality.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Plan file (flat `section.key = value` text).
    #[arg(long)]
    plan: PathBuf,
    /// Output report path.
    #[arg(long)]
    out: PathBuf,
    /// Report format.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Worker threads; overrides the plan and the C2ST_JOBS variable.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct TestArgs {
    /// Method id (gcm-lm, gcm-krr, clf, clf-cv, mmd-l, mmd-l-cv, mean,
    /// rank, always-reject, uniform-p).
    #[arg(long)]
    method: String,
    /// CSV with both groups (needs --group-col), or population 1 when
    /// --data2 is given.
    #[arg(long)]
    data: PathBuf,
    /// Optional second CSV holding population 2.
    #[arg(long)]
    data2: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Response column name.
    #[arg(long, default_value = "y")]
    y_col: String,
    /// Group column name (single-file mode).
    #[arg(long, default_value = "group")]
    group_col: String,
    /// Comma-separated covariate columns; defaults to every other column.
    #[arg(long)]
    x_cols: Option<String>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    method: String,
    /// Scenario id: S1U, S1B, S2U, S2B, S3U, or S3B.
    #[arg(long)]
    scenario: String,
    /// Per-population sample size.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Number of null replicates.
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the statistic sample here (one value per line) instead of
    /// printing it.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::InvalidConfig(_) | Error::InvalidEpsilon(_) | Error::SplitTooSmall(_) => {
            ExitCode::from(2)
        }
        Error::ParseError { .. }
        | Error::GroupMissing(_)
        | Error::InvalidData(_)
        | Error::DimensionMismatch(_)
        | Error::Io(_) => ExitCode::from(3),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Test(args) => run_test(args),
        Command::Calibrate(args) => calibrate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn env_jobs() -> Option<usize> {
    std::env::var(JOBS_ENV).ok().and_then(|v| v.parse().ok())
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let text = fs::read_to_string(&args.plan)?;
    let mut plan = parse_plan(&text)?;
    if let Some(jobs) = args.jobs.or_else(env_jobs) {
        plan.parallelism = jobs;
    }
    let format: ReportFormat = args.format.parse()?;
    let summaries = run_monte_carlo(&plan)?;
    let mut file = fs::File::create(&args.out)?;
    emit_report(&summaries, format, &mut file)?;
    eprintln!(
        "wrote {} cell summaries to {}",
        summaries.len(),
        args.out.display()
    );
    Ok(())
}

fn load_data(args: &TestArgs) -> Result<PairedData, Error> {
    let x_cols: Vec<String> = args
        .x_cols
        .as_deref()
        .map(|s| s.split(',').map(|c| c.trim().to_string()).collect())
        .unwrap_or_default();
    let (data, info) = match &args.data2 {
        Some(second) => {
            let schema = CsvSchema {
                x_cols,
                y_col: args.y_col.clone(),
                group_col: None,
            };
            load_csv_pair(&args.data, second, &schema)?
        }
        None => {
            let schema = CsvSchema {
                x_cols,
                y_col: args.y_col.clone(),
                group_col: Some(args.group_col.clone()),
            };
            load_csv(&args.data, &schema)?
        }
    };
    for col in &info.constant_columns {
        eprintln!("warning: column '{col}' is constant; centered but not scaled");
    }
    Ok(data)
}

fn run_test(args: TestArgs) -> Result<(), Error> {
    let data = load_data(&args)?;
    let mut rng = StreamRng::new(args.seed, 0);

    if args.method.trim().eq_ignore_ascii_case("rank") {
        // raw stochastic-order statistic; no calibrated p-value exists
        let (eval, fit) = c2st::split_paired(&data, 0.5, &mut rng)?;
        let ratio = drt::marginal_ratio(&drt::RatioSource::fitted_ll(), &fit)?;
        let value = drt::weighted_rank_sum(&eval, ratio.as_ref(), &|_x, y| y)?;
        println!("method        rank");
        println!("statistic     {value:.6}");
        println!("p_value       (not calibrated)");
        return Ok(());
    }

    let method: MethodSpec = args.method.parse()?;
    let outcome = method.execute(&data, args.alpha, &mut rng)?;
    println!("method        {}", outcome.method);
    println!("statistic     {:.6}", outcome.statistic);
    println!("p_value       {:.6}", outcome.p_value);
    println!("alpha         {}", outcome.alpha);
    println!("reject        {}", outcome.reject);
    for (key, value) in &outcome.diagnostics {
        println!("diag.{key:<12} {value:.6}");
    }
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<(), Error> {
    let (scenario, support) = parse_scenario_id(&args.scenario)?;
    let cfg = ScenarioConfig::new(scenario, support, Hypothesis::Null, args.n)?;
    let method: MethodSpec = args.method.parse()?;
    if args.reps < 10 {
        return Err(Error::InvalidConfig(
            "calibration needs at least 10 replicates".into(),
        ));
    }

    let mut stats = Vec::with_capacity(args.reps);
    let mut skipped = 0usize;
    for rep in 0..args.reps {
        let stream = c2st::rng::stream_id(&format!("calibrate|{}|{rep}", args.scenario));
        let mut rng = StreamRng::new(args.seed, stream);
        let data = gen_scenario(&cfg, &mut rng)?;
        match method.execute(&data, args.alpha, &mut rng) {
            Ok(out) if !out.is_forced_accept() => stats.push(out.statistic),
            _ => skipped += 1,
        }
    }
    if stats.len() < 10 {
        return Err(Error::InvalidData(format!(
            "only {} usable statistics out of {} replicates",
            stats.len(),
            args.reps
        )));
    }

    match &args.out {
        Some(path) => {
            let body: String = stats.iter().map(|s| format!("{s}\n")).collect();
            fs::write(path, body)?;
        }
        None => {
            for s in &stats {
                println!("{s}");
            }
        }
    }
    let (d, p) = ks_test_standard_normal(&stats);
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    let sd = c2st::stats::sample_variance(&stats).sqrt();
    println!(
        "# method={} scenario={} n={} reps={}",
        method.id(),
        args.scenario,
        args.n,
        args.reps
    );
    println!(
        "# usable={} skipped={} mean={mean:.4} sd={sd:.4}",
        stats.len(),
        skipped
    );
    println!("# ks_d={d:.4} ks_p={p:.4}");
    Ok(())
}

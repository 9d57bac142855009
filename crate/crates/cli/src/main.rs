//! Command-line front end: trace simulation, error-probability reports,
//! fullness sweeps, and oracle self-validation.

mod checks;

use clap::{Args, Parser, Subcommand, ValueEnum};
use finality_core::actor::ActorCalculator;
use finality_core::chain::{
    parse_trace, ChainTrace, NetworkParams, ReportEntry, TraceFormat, TruncationConfig, View,
};
use finality_core::error::Error;
use finality_core::node;
use finality_core::sim::{generate_trace, SimConfig};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Seed increment between runs; the SplitMix64 stream constant, so derived
/// seeds stay well distributed.
const RUN_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Parser)]
#[command(
    name = "finality-calc",
    version,
    about = "Dynamic reorganization-probability bounds for tipset chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic chain traces at a configured fullness.
    Simulate(SimulateArgs),
    /// Compute per-round error probabilities for a trace file.
    Compute(ComputeArgs),
    /// Generate traces across fullness values and summarize medians.
    Sweep(SweepArgs),
    /// Run the independent-oracle validation suites.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct NetworkArgs {
    /// Assumed Byzantine fraction of the production power.
    #[arg(long, default_value_t = 0.3)]
    byzantine_fraction: f64,
    /// Expected blocks per round at full production.
    #[arg(long, default_value_t = 5.0)]
    blocks_per_round: f64,
}

impl NetworkArgs {
    fn to_params(&self) -> Result<NetworkParams, Error> {
        NetworkParams::new(self.blocks_per_round, self.byzantine_fraction, 900)
    }
}

#[derive(Args)]
struct TruncationArgs {
    /// Largest advantage considered for the lead and recent-past pmfs.
    #[arg(long, default_value_t = 400)]
    max_k_lb: usize,
    /// Largest advantage considered for the future pmf.
    #[arg(long, default_value_t = 100)]
    max_k_m: usize,
    /// Longest lead-attack window in rounds.
    #[arg(long, default_value_t = 25)]
    max_i_l: usize,
    /// Longest future horizon in rounds.
    #[arg(long, default_value_t = 100)]
    max_i_m: usize,
    /// Early-stop probability floor; smaller values are treated as zero and
    /// reported results never drop below it.
    #[arg(long, default_value_t = 1e-25)]
    floor: f64,
}

impl TruncationArgs {
    fn to_config(&self) -> Result<TruncationConfig, Error> {
        let config = TruncationConfig {
            max_k_lb: self.max_k_lb,
            max_k_m: self.max_k_m,
            max_i_l: self.max_i_l,
            max_i_m: self.max_i_m,
            early_stop_floor: self.floor,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ViewArg {
    Node,
    Actor,
    Both,
}

impl ViewArg {
    fn views(self) -> Vec<View> {
        match self {
            ViewArg::Node => vec![View::Node],
            ViewArg::Actor => vec![View::Actor],
            ViewArg::Both => vec![View::Node, View::Actor],
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct SimulateArgs {
    /// Chain fullness: average tipset size as a fraction of the target.
    #[arg(long, default_value_t = 0.96)]
    fullness: f64,
    #[arg(long, default_value_t = 40_000)]
    rounds: u64,
    /// Number of independent traces to generate.
    #[arg(long, default_value_t = 7)]
    runs: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory for the trace files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[command(flatten)]
    network: NetworkArgs,
}

#[derive(Args)]
struct ComputeArgs {
    /// Trace file; `.json` is parsed as the JSON format, anything else as CSV.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value_t = ViewArg::Node)]
    view: ViewArg,
    /// Settlement times in rounds (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "30")]
    settlement: Vec<u64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    trunc: TruncationArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Fullness values to sweep (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "0.80,0.85,0.90,0.95,1.00")]
    fullness: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "20,40")]
    settlement: Vec<u64>,
    #[arg(long, default_value_t = 2000)]
    rounds: u64,
    /// Traces generated per fullness value.
    #[arg(long, default_value_t = 3)]
    runs: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ViewArg::Node)]
    view: ViewArg,
    /// Output directory for the long-format and summary CSVs.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    trunc: TruncationArgs,
}

#[derive(Args)]
struct ValidateArgs {
    /// Monte-Carlo trials for the lead-process domination check.
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Perturb one production pmf entry by 1e-6 to prove the checks notice.
    #[arg(long, default_value_t = false)]
    inject_fault: bool,
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    trunc: TruncationArgs,
}

/// Failure modes mapped to exit codes: input problems exit 2, numerical
/// degeneracy exits 3, validation failures exit 4.
enum CliError {
    Input(String),
    Degenerate(String),
    Validation,
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match err {
            Error::DegenerateCondition { .. } => CliError::Degenerate(err.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Compute(args) => cmd_compute(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Validate(args) => cmd_validate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Degenerate(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Validation) => ExitCode::from(4),
    }
}

fn run_seed(base: u64, run: u64) -> u64 {
    base.wrapping_add(run.wrapping_mul(RUN_SEED_STRIDE))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let params = args.network.to_params()?;
    std::fs::create_dir_all(&args.out).map_err(Error::Io)?;
    for run in 0..args.runs {
        let config = SimConfig::new(
            args.fullness,
            args.rounds,
            run_seed(args.seed, run),
            params.blocks_per_round_target,
        )?;
        let trace = generate_trace(&config);
        let (extension, write): (_, fn(&ChainTrace, &mut BufWriter<File>) -> _) =
            match args.format {
                FormatArg::Csv => ("csv", |t, w| t.write_csv(w)),
                FormatArg::Json => ("json", |t, w| t.write_json(w)),
            };
        let path = args.out.join(format!("trace_{run:02}.{extension}"));
        let mut writer = BufWriter::new(File::create(&path).map_err(Error::Io)?);
        write(&trace, &mut writer)?;
        writer.flush().map_err(Error::Io)?;
        let mean = trace.counts().iter().sum::<u64>() as f64 / trace.len() as f64;
        println!(
            "run {run}: {} rounds, mean tipset size {mean:.3} -> {}",
            trace.len(),
            path.display()
        );
    }
    Ok(())
}

fn load_trace(path: &Path) -> Result<ChainTrace, CliError> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => TraceFormat::Json,
        _ => TraceFormat::Csv,
    };
    let file = File::open(path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    Ok(parse_trace(file, format)?)
}

fn compute_reports(
    trace: &ChainTrace,
    views: &[View],
    settlements: &[u64],
    params: NetworkParams,
    trunc: TruncationConfig,
) -> Result<Vec<ReportEntry>, CliError> {
    let actor_calc = views
        .contains(&View::Actor)
        .then(|| ActorCalculator::new(params, trunc));
    let mut entries = Vec::new();
    for &settlement in settlements {
        if settlement == 0 {
            return Err(CliError::Input("settlement must be >= 1".into()));
        }
        for &view in views {
            let report = match view {
                View::Node => node::node_report(trace, settlement, &params, &trunc)?,
                View::Actor => actor_calc
                    .as_ref()
                    .expect("calculator constructed for actor view")
                    .report(trace, settlement)?,
            };
            entries.extend(report.entries);
        }
    }
    entries.sort_by_key(|e| (e.current_round, e.current_round - e.target_round, e.view));
    Ok(entries)
}

fn write_report_csv(entries: &[ReportEntry], mut w: impl Write) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Input(format!("write failed: {e}"));
    writeln!(w, "round,settlement,view,error_probability,good_advantage").map_err(io)?;
    for e in entries {
        writeln!(
            w,
            "{},{},{},{:.16e},{}",
            e.current_round,
            e.current_round - e.target_round,
            e.view,
            e.error_probability,
            e.good_advantage
        )
        .map_err(io)?;
    }
    Ok(())
}

fn cmd_compute(args: &ComputeArgs) -> Result<(), CliError> {
    let trace = load_trace(&args.trace)?;
    let params = args.network.to_params()?;
    let trunc = args.trunc.to_config()?;
    let entries = compute_reports(&trace, &args.view.views(), &args.settlement, params, trunc)?;
    match &args.out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| CliError::Input(format!("cannot create {}: {e}", path.display())))?;
            let mut writer = BufWriter::new(file);
            write_report_csv(&entries, &mut writer)?;
            writer
                .flush()
                .map_err(|e| CliError::Input(format!("write failed: {e}")))?;
        }
        None => write_report_csv(&entries, std::io::stdout().lock())?,
    }
    Ok(())
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let params = args.network.to_params()?;
    let trunc = args.trunc.to_config()?;
    let views = args.view.views();
    std::fs::create_dir_all(&args.out).map_err(Error::Io)?;

    let long_path = args.out.join("sweep_long.csv");
    let mut long = BufWriter::new(File::create(&long_path).map_err(Error::Io)?);
    let io = |e: std::io::Error| CliError::Input(format!("write failed: {e}"));
    writeln!(
        long,
        "fullness,run,round,settlement,view,error_probability,good_advantage"
    )
    .map_err(io)?;

    // (fullness, settlement, view) -> pooled error probabilities.
    let mut pooled: Vec<((String, u64, View), Vec<f64>)> = Vec::new();
    for (alpha_idx, &fullness) in args.fullness.iter().enumerate() {
        for run in 0..args.runs {
            let seed = run_seed(args.seed, (alpha_idx as u64) * args.runs + run);
            let config =
                SimConfig::new(fullness, args.rounds, seed, params.blocks_per_round_target)?;
            let trace = generate_trace(&config);
            let entries =
                compute_reports(&trace, &views, &args.settlement, params, trunc)?;
            for e in &entries {
                writeln!(
                    long,
                    "{fullness},{run},{},{},{},{:.16e},{}",
                    e.current_round,
                    e.current_round - e.target_round,
                    e.view,
                    e.error_probability,
                    e.good_advantage
                )
                .map_err(io)?;
                let key = (
                    format!("{fullness}"),
                    (e.current_round - e.target_round) as u64,
                    e.view,
                );
                match pooled.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, values)) => values.push(e.error_probability),
                    None => pooled.push((key, vec![e.error_probability])),
                }
            }
        }
    }
    long.flush().map_err(io)?;

    let summary_path = args.out.join("sweep_summary.csv");
    let mut summary = BufWriter::new(File::create(&summary_path).map_err(Error::Io)?);
    writeln!(summary, "fullness,settlement,view,median_error_probability").map_err(io)?;
    for ((fullness, settlement, view), values) in &pooled {
        let m = median(values.clone()).expect("non-empty pooled bucket");
        writeln!(summary, "{fullness},{settlement},{view},{m:.16e}").map_err(io)?;
    }
    summary.flush().map_err(io)?;
    println!(
        "wrote {} and {}",
        long_path.display(),
        summary_path.display()
    );
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let params = args.network.to_params()?;
    let trunc = args.trunc.to_config()?;
    let outcome = checks::run_all(&checks::Config {
        params,
        trunc,
        trials: args.trials,
        seed: args.seed,
        inject_fault: args.inject_fault,
    });
    if outcome {
        println!("validation: PASS");
        Ok(())
    } else {
        println!("validation: FAIL");
        Err(CliError::Validation)
    }
}

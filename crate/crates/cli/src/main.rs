//! `ccc`: batch driver for the correlation-coefficient engines.
//!
//! Five subcommands cover the working loop. `gen` writes a synthetic
//! packed dataset, `permute` relabels one under a seeded shuffle, `run`
//! executes a 2-way or 3-way pass (optionally writing per-rank record
//! files and a manifest), `estimate` evaluates the rank-time model and
//! reports achieved rates, and `verify` sweeps all engines over a grid
//! and demands bit-for-bit agreement.
//!
//! `run` also reads `--config FILE`: `key = value` lines named after the
//! long flags, `#` comments allowed. Explicit flags win over file values.
//!
//! Exit codes: 0 success, 1 invalid arguments or configuration, 2
//! verification mismatch, 3 I/O failure.

use clap::{Args, Parser, Subcommand};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use ccc_core::{
    checksum_hex, execute_gen, execute_permute, execute_run, execute_verify, rate_report,
    CccParams, DataSpec, EngineChoice, Error, ErrorKind, ExecMode, GenConfig, GridShape,
    NumWay, PerfModelParams, PermuteConfig, Precision, Result, RunConfig, RunSettings,
    SyntheticKind, VerifyConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "ccc",
    version,
    about = "Batch driver for 2-way and 3-way custom correlation coefficients \
             over packed allele data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic packed dataset to a directory.
    Gen(GenArgs),
    /// Shuffle a dataset's vectors under a seeded permutation.
    Permute(PermuteArgs),
    /// Execute a metrics run; optionally write per-rank records + manifest.
    Run(RunArgs),
    /// Evaluate the rank-time model and report comparison rates.
    Estimate(EstimateArgs),
    /// Run every engine over a grid and demand bit-for-bit agreement.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Vectors to generate.
    #[arg(long)]
    n_v: u64,
    /// Elements per vector.
    #[arg(long)]
    n_f: u64,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include missing values.
    #[arg(long)]
    sparse: bool,
    /// `random` values, or `verifiable` planted patterns with closed-form
    /// tallies.
    #[arg(long, default_value_t = SyntheticKind::Random)]
    synthetic: SyntheticKind,
    /// Directory receiving dataset.bin.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct PermuteArgs {
    /// Packed dataset file to shuffle.
    #[arg(long)]
    input: PathBuf,
    /// Permutation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving permuted.bin and permutation.bin.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Metric arity: 2 (pairs) or 3 (triples). [default: 2]
    #[arg(long)]
    num_way: Option<u8>,
    /// Key = value file supplying any of the long flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Packed dataset file to run over.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generate data in memory instead of reading --input.
    #[arg(long, value_name = "KIND")]
    synthetic: Option<SyntheticKind>,
    /// Synthetic data: vector count.
    #[arg(long)]
    n_v: Option<u64>,
    /// Synthetic data: elements per vector.
    #[arg(long)]
    n_f: Option<u64>,
    /// Synthetic data: generator seed. [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Synthetic data: include missing values.
    #[arg(long)]
    sparse: bool,
    /// Field (plane-word) rank-axis size. [default: 1]
    #[arg(long)]
    n_pf: Option<usize>,
    /// Vector-tile rank-axis size. [default: 1]
    #[arg(long)]
    n_pv: Option<usize>,
    /// Worker replicas per tile pairing. [default: 1]
    #[arg(long)]
    n_pr: Option<usize>,
    /// Pair-plan phase count (2-way only). [default: 1]
    #[arg(long)]
    n_phases: Option<usize>,
    /// Run only this phase of the pair plan.
    #[arg(long)]
    phase: Option<usize>,
    /// Triple-plan stage count (3-way only). [default: 1]
    #[arg(long)]
    n_st: Option<usize>,
    /// Run only this stage of the triple plan.
    #[arg(long)]
    stage: Option<usize>,
    /// Frequency-damping weight in [0, 1.5]. [default: 2/3]
    #[arg(long)]
    gamma: Option<f64>,
    /// Keep a record only when its largest cell exceeds this; `inf` keeps
    /// none. [default: 0]
    #[arg(long)]
    threshold: Option<f64>,
    /// Stored value width: `single` or `double`. [default: double]
    #[arg(long)]
    precision: Option<Precision>,
    /// Engine: `auto`, `reference`, `kernel`, or `multi-rank`.
    #[arg(long)]
    engine: Option<EngineChoice>,
    /// Directory receiving rank-*.rec files and manifest.json.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Re-run through the reference engine and require bit-for-bit
    /// agreement (full runs only).
    #[arg(long)]
    verify: bool,
    /// Print the bare run checksum as the final line.
    #[arg(long)]
    checksum: bool,
    /// Schedule simulated ranks one after another instead of on threads.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Metric arity: 2 (pairs) or 3 (triples).
    #[arg(long, default_value_t = 2)]
    num_way: u8,
    /// Checksum accumulation seconds.
    #[arg(long, default_value_t = 0.0)]
    t_c: f64,
    /// Vector-tile transfer seconds.
    #[arg(long, default_value_t = 0.0)]
    t_tv: f64,
    /// Metrics-tile transfer seconds.
    #[arg(long, default_value_t = 0.0)]
    t_tm: f64,
    /// Post-processing seconds per block.
    #[arg(long, default_value_t = 0.0)]
    t_cpu: f64,
    /// Pair block-tally kernel seconds.
    #[arg(long, default_value_t = 0.0)]
    t_g2: f64,
    /// Masked triple block-tally kernel seconds.
    #[arg(long, default_value_t = 0.0)]
    t_g3: f64,
    /// Blocks per worker.
    #[arg(long, default_value_t = 0.0)]
    load: f64,
    /// Vector-tile size (3-way).
    #[arg(long, default_value_t = 0.0)]
    n_vp: f64,
    /// Stage count (3-way).
    #[arg(long, default_value_t = 1.0)]
    n_st: f64,
    /// Measured wall seconds; with --comparisons, reports achieved rates.
    #[arg(long)]
    elapsed: Option<f64>,
    /// Comparison count accompanying --elapsed.
    #[arg(long)]
    comparisons: Option<u64>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Metric arity: 2 (pairs) or 3 (triples).
    #[arg(long, default_value_t = 2)]
    num_way: u8,
    /// Packed dataset file; synthetic data when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Synthetic data: vector count. [default: 12]
    #[arg(long)]
    n_v: Option<u64>,
    /// Synthetic data: elements per vector. [default: 130]
    #[arg(long)]
    n_f: Option<u64>,
    /// Synthetic data: generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Synthetic data: include missing values.
    #[arg(long)]
    sparse: bool,
    /// Field rank-axis size of the checked grid.
    #[arg(long, default_value_t = 1)]
    n_pf: usize,
    /// Vector-tile rank-axis size of the checked grid.
    #[arg(long, default_value_t = 2)]
    n_pv: usize,
    /// Worker replicas of the checked grid.
    #[arg(long, default_value_t = 2)]
    n_pr: usize,
    /// Pair-plan phase count of the checked grid.
    #[arg(long, default_value_t = 1)]
    n_phases: usize,
    /// Triple-plan stage count of the checked grid.
    #[arg(long, default_value_t = 1)]
    n_st: usize,
    /// Schedule simulated ranks sequentially.
    #[arg(long)]
    sequential: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_for(err.kind()))
        }
    }
}

fn exit_for(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Validation => 1,
        ErrorKind::VerifyMismatch => 2,
        ErrorKind::Io => 3,
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen(args) => cmd_gen(args),
        Command::Permute(args) => cmd_permute(args),
        Command::Run(args) => cmd_run(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Verify(args) => cmd_verify(args),
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let summary = execute_gen(&GenConfig {
        kind: args.synthetic,
        n_v: args.n_v,
        n_f: args.n_f,
        seed: args.seed,
        sparse: args.sparse,
        out_dir: args.out_dir,
    })?;
    println!("{summary}");
    Ok(())
}

fn cmd_permute(args: PermuteArgs) -> Result<()> {
    let summary = execute_permute(&PermuteConfig {
        input: args.input,
        seed: args.seed,
        out_dir: args.out_dir,
    })?;
    println!("{summary}");
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let (config, print_checksum) = build_run_config(args)?;
    let summary = execute_run(&config)?;
    println!("{summary}");
    if print_checksum {
        println!("{}", checksum_hex(summary.checksum));
    }
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let num_way = parse_num_way(args.num_way)?;
    let wants_rate = args.elapsed.is_some() || args.comparisons.is_some();
    if wants_rate {
        let (Some(elapsed), Some(comparisons)) = (args.elapsed, args.comparisons) else {
            return Err(invalid("estimate", "--elapsed and --comparisons go together"));
        };
        let rate = rate_report(elapsed, comparisons)?;
        println!("{rate}");
    }
    let params = PerfModelParams {
        t_c: args.t_c,
        t_tv: args.t_tv,
        t_tm: args.t_tm,
        t_cpu: args.t_cpu,
        t_g2: args.t_g2,
        t_g3: args.t_g3,
        load: args.load,
        n_vp: args.n_vp,
        n_st: args.n_st,
    };
    let model_given = [
        args.t_c, args.t_tv, args.t_tm, args.t_cpu, args.t_g2, args.t_g3, args.load,
        args.n_vp,
    ]
    .iter()
    .any(|&v| v != 0.0);
    if model_given || !wants_rate {
        let seconds = ccc_core::estimate_time(&params, num_way)?;
        println!("estimated {}-way rank time: {seconds} s", num_way.as_u8());
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<()> {
    let num_way = parse_num_way(args.num_way)?;
    let data = match args.input {
        Some(path) => {
            if args.n_v.is_some() || args.n_f.is_some() {
                return Err(invalid("input", "a dataset file fixes its own shape"));
            }
            DataSpec::File(path)
        }
        None => DataSpec::Synthetic {
            kind: SyntheticKind::Random,
            n_v: args.n_v.unwrap_or(12),
            n_f: args.n_f.unwrap_or(130),
            seed: args.seed,
            sparse: args.sparse,
        },
    };
    let report = execute_verify(&VerifyConfig {
        num_way,
        data,
        settings: RunSettings::default(),
        grid: GridShape {
            n_pf: args.n_pf,
            n_pv: args.n_pv,
            n_pr: args.n_pr,
            n_phases: args.n_phases,
            n_st: args.n_st,
        },
        mode: exec_mode(args.sequential),
    })?;
    print!("{report}");
    if !report.passed() {
        let detail = report
            .first_failure()
            .map(ToString::to_string)
            .unwrap_or_else(|| "engines disagree".into());
        return Err(Error::VerifyMismatch { detail });
    }
    println!("all runs agree");
    Ok(())
}

fn parse_num_way(value: u8) -> Result<NumWay> {
    match value {
        2 => Ok(NumWay::Two),
        3 => Ok(NumWay::Three),
        other => Err(invalid("num-way", &format!("must be 2 or 3, got {other}"))),
    }
}

fn exec_mode(sequential: bool) -> ExecMode {
    if sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Threads
    }
}

fn invalid(name: &'static str, reason: &str) -> Error {
    Error::InvalidParameter { name, reason: reason.to_string() }
}

/// Folds the optional config file under the explicit flags and resolves
/// defaults. Returns the run configuration and the checksum-print toggle.
fn build_run_config(args: RunArgs) -> Result<(RunConfig, bool)> {
    let file = match &args.config {
        Some(path) => read_config(path)?,
        None => FileValues::default(),
    };

    let num_way = parse_num_way(args.num_way.or(file.num_way).unwrap_or(2))?;
    let input = args.input.or(file.input);
    let synthetic = args.synthetic.or(file.synthetic);
    let n_v = args.n_v.or(file.n_v);
    let n_f = args.n_f.or(file.n_f);
    let sparse = args.sparse || file.sparse.unwrap_or(false);
    let data = match input {
        Some(path) => {
            if synthetic.is_some() || n_v.is_some() || n_f.is_some() || sparse {
                return Err(invalid(
                    "input",
                    "a dataset file fixes its own shape; drop --synthetic, --n-v, --n-f, \
                     and --sparse",
                ));
            }
            DataSpec::File(path)
        }
        None => {
            let (Some(n_v), Some(n_f)) = (n_v, n_f) else {
                return Err(invalid("n-v", "synthetic data needs --n-v and --n-f"));
            };
            DataSpec::Synthetic {
                kind: synthetic.unwrap_or_default(),
                n_v,
                n_f,
                seed: args.seed.or(file.seed).unwrap_or(0),
                sparse,
            }
        }
    };

    let defaults = CccParams::default();
    let settings = RunSettings {
        ccc: CccParams {
            gamma: args.gamma.or(file.gamma).unwrap_or(defaults.gamma),
            precision: args.precision.or(file.precision).unwrap_or(defaults.precision),
        },
        threshold: args.threshold.or(file.threshold).unwrap_or(0.0),
    };

    let config = RunConfig {
        num_way,
        data,
        n_pf: args.n_pf.or(file.n_pf).unwrap_or(1),
        n_pv: args.n_pv.or(file.n_pv).unwrap_or(1),
        n_pr: args.n_pr.or(file.n_pr).unwrap_or(1),
        n_phases: args.n_phases.or(file.n_phases).unwrap_or(1),
        n_st: args.n_st.or(file.n_st).unwrap_or(1),
        phase: args.phase.or(file.phase),
        stage: args.stage.or(file.stage),
        settings,
        engine: args.engine.or(file.engine).unwrap_or_default(),
        mode: exec_mode(args.sequential || file.sequential.unwrap_or(false)),
        verify: args.verify || file.verify.unwrap_or(false),
        out_dir: args.out_dir.or(file.out_dir),
    };
    let print_checksum = args.checksum || file.checksum.unwrap_or(false);
    Ok((config, print_checksum))
}

/// The `run` settings a config file may supply, all optional.
#[derive(Debug, Default)]
struct FileValues {
    num_way: Option<u8>,
    input: Option<PathBuf>,
    synthetic: Option<SyntheticKind>,
    n_v: Option<u64>,
    n_f: Option<u64>,
    seed: Option<u64>,
    sparse: Option<bool>,
    n_pf: Option<usize>,
    n_pv: Option<usize>,
    n_pr: Option<usize>,
    n_phases: Option<usize>,
    n_st: Option<usize>,
    phase: Option<usize>,
    stage: Option<usize>,
    gamma: Option<f64>,
    threshold: Option<f64>,
    precision: Option<Precision>,
    engine: Option<EngineChoice>,
    out_dir: Option<PathBuf>,
    verify: Option<bool>,
    checksum: Option<bool>,
    sequential: Option<bool>,
}

/// Parses a `key = value` config file keyed by the `run` long flag names.
/// `#` starts a comment; blank lines are skipped.
fn read_config(path: &Path) -> Result<FileValues> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let mut v = FileValues::default();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidParameter {
                name: "config",
                reason: format!("line {}: expected key = value, got {raw:?}", index + 1),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "num-way" => v.num_way = Some(parse_value("num-way", value)?),
            "input" => v.input = Some(PathBuf::from(value)),
            "synthetic" => v.synthetic = Some(parse_value("synthetic", value)?),
            "n-v" => v.n_v = Some(parse_value("n-v", value)?),
            "n-f" => v.n_f = Some(parse_value("n-f", value)?),
            "seed" => v.seed = Some(parse_value("seed", value)?),
            "sparse" => v.sparse = Some(parse_value("sparse", value)?),
            "n-pf" => v.n_pf = Some(parse_value("n-pf", value)?),
            "n-pv" => v.n_pv = Some(parse_value("n-pv", value)?),
            "n-pr" => v.n_pr = Some(parse_value("n-pr", value)?),
            "n-phases" => v.n_phases = Some(parse_value("n-phases", value)?),
            "n-st" => v.n_st = Some(parse_value("n-st", value)?),
            "phase" => v.phase = Some(parse_value("phase", value)?),
            "stage" => v.stage = Some(parse_value("stage", value)?),
            "gamma" => v.gamma = Some(parse_value("gamma", value)?),
            "threshold" => v.threshold = Some(parse_value("threshold", value)?),
            "precision" => v.precision = Some(parse_value("precision", value)?),
            "engine" => v.engine = Some(parse_value("engine", value)?),
            "out-dir" => v.out_dir = Some(PathBuf::from(value)),
            "verify" => v.verify = Some(parse_value("verify", value)?),
            "checksum" => v.checksum = Some(parse_value("checksum", value)?),
            "sequential" => v.sequential = Some(parse_value("sequential", value)?),
            other => {
                return Err(Error::InvalidParameter {
                    name: "config",
                    reason: format!("line {}: unknown key {other:?}", index + 1),
                });
            }
        }
    }
    Ok(v)
}

fn parse_value<T>(name: &'static str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::InvalidParameter { name, reason: format!("{value:?}: {e}") })
}

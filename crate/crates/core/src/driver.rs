//! Orchestration for whole runs: resolve a configuration to a dataset and
//! an engine, execute it, verify on request, and write the output files.
//!
//! This is the layer the command-line tool is a thin shell over; everything
//! here is callable from tests and examples without a process boundary.

use crate::datafile::{read_dataset, write_dataset};
use crate::engine::{
    run_kernel2, run_kernel3, run_multi2, run_multi3, run_reference2, run_reference3,
    EngineOutput, ExecMode, ExecOpts, FileSource, MemorySource, RunSettings, TileSource,
};
use crate::error::{Error, Result};
use crate::grid::{make_grid, plan2, plan3};
use crate::harness::{compare_outputs, verify_equivalence, ComparableRecord, GridShape,
    HarnessReport};
use crate::metrics::{allele_frequencies, NumWay};
use crate::output::{
    checksum_hex, write_run, Manifest, ManifestGrid, RecordBytes, MANIFEST_NAME,
};
use crate::packed::PackedVectorSet;
use crate::perfmodel::{rate_report, RateReport};
use crate::synth::{generate_random, generate_verifiable, permute_vectors};
use std::fs;
use std::ops::Range;
use std::path::PathBuf;
use std::time::Instant;

/// Column chunk used when the single-rank kernel engine blocks a run.
const KERNEL_CHUNK: usize = 64;

/// Wall-clock floor so a run too fast to time still yields finite rates.
const MIN_ELAPSED: f64 = 1e-9;

/// Which execution path carries a run.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Default)]
pub enum EngineChoice {
    /// Multi-rank when the grid or a partition option asks for one;
    /// otherwise the single-rank kernel.
    #[default]
    Auto,
    /// Decoded-value enumeration — slow, trusted.
    Reference,
    /// Single-rank packed popcount kernels.
    Kernel,
    /// Block-decomposed simulated ranks.
    MultiRank,
}

impl std::str::FromStr for EngineChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(EngineChoice::Auto),
            "reference" => Ok(EngineChoice::Reference),
            "kernel" => Ok(EngineChoice::Kernel),
            "multi-rank" | "multi" => Ok(EngineChoice::MultiRank),
            other => Err(Error::InvalidParameter {
                name: "engine",
                reason: format!(
                    "must be one of auto, reference, kernel, multi-rank; got '{other}'"
                ),
            }),
        }
    }
}

impl std::fmt::Display for EngineChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EngineChoice::Auto => "auto",
            EngineChoice::Reference => "reference",
            EngineChoice::Kernel => "kernel",
            EngineChoice::MultiRank => "multi-rank",
        })
    }
}

/// Flavor of generated data.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Default)]
pub enum SyntheticKind {
    /// Seeded uniform random values.
    #[default]
    Random,
    /// Planted data whose tallies are known in closed form.
    Verifiable,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SyntheticKind::Random),
            "verifiable" => Ok(SyntheticKind::Verifiable),
            other => Err(Error::InvalidParameter {
                name: "synthetic",
                reason: format!("must be 'random' or 'verifiable', got '{other}'"),
            }),
        }
    }
}

impl std::fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SyntheticKind::Random => "random",
            SyntheticKind::Verifiable => "verifiable",
        })
    }
}

/// Where a run's input vectors come from.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum DataSpec {
    /// A packed dataset file on disk.
    File(PathBuf),
    /// Data generated in memory at run time.
    Synthetic { kind: SyntheticKind, n_v: u64, n_f: u64, seed: u64, sparse: bool },
}

impl DataSpec {
    /// Loads the full dataset into memory.
    pub fn load_set(&self) -> Result<PackedVectorSet> {
        match self {
            DataSpec::File(path) => read_dataset(path),
            DataSpec::Synthetic { kind, n_v, n_f, seed, sparse } => match kind {
                SyntheticKind::Random => Ok(generate_random(*n_v, *n_f, *seed, *sparse)),
                SyntheticKind::Verifiable => {
                    if *sparse {
                        return Err(Error::InvalidParameter {
                            name: "sparse",
                            reason: "verifiable synthetic data is dense by construction"
                                .to_string(),
                        });
                    }
                    Ok(generate_verifiable(*n_v, *n_f, *seed)?.0)
                }
            },
        }
    }

    /// One-line description for summaries.
    pub fn describe(&self) -> String {
        match self {
            DataSpec::File(path) => format!("file {}", path.display()),
            DataSpec::Synthetic { kind, seed, .. } => format!("synthetic {kind} (seed {seed})"),
        }
    }
}

/// Tile source over either backing store, so one engine call site serves
/// file-backed and in-memory runs alike.
pub enum RunSource {
    Memory(MemorySource),
    File(FileSource),
}

impl TileSource for RunSource {
    fn n_v(&self) -> u64 {
        match self {
            RunSource::Memory(s) => s.n_v(),
            RunSource::File(s) => s.n_v(),
        }
    }

    fn n_f(&self) -> u64 {
        match self {
            RunSource::Memory(s) => s.n_f(),
            RunSource::File(s) => s.n_f(),
        }
    }

    fn sparse(&self) -> bool {
        match self {
            RunSource::Memory(s) => s.sparse(),
            RunSource::File(s) => s.sparse(),
        }
    }

    fn load_tile(&self, cols: Range<u64>, words: Range<usize>) -> Result<PackedVectorSet> {
        match self {
            RunSource::Memory(s) => s.load_tile(cols, words),
            RunSource::File(s) => s.load_tile(cols, words),
        }
    }
}

/// Everything a run needs, resolved and validated up front.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub num_way: NumWay,
    pub data: DataSpec,
    pub n_pf: usize,
    pub n_pv: usize,
    pub n_pr: usize,
    /// Pair-plan phase count (2-way).
    pub n_phases: usize,
    /// Triple-plan stage count (3-way).
    pub n_st: usize,
    /// Run only this phase of a 2-way plan.
    pub phase: Option<usize>,
    /// Run only this stage of a 3-way plan.
    pub stage: Option<usize>,
    pub settings: RunSettings,
    pub engine: EngineChoice,
    pub mode: ExecMode,
    /// Re-run the dataset through the reference engine and require
    /// bit-for-bit agreement.
    pub verify: bool,
    /// Where to write record files and the manifest; in-memory only when
    /// absent.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            num_way: NumWay::Two,
            data: DataSpec::Synthetic {
                kind: SyntheticKind::Random,
                n_v: 8,
                n_f: 64,
                seed: 0,
                sparse: false,
            },
            n_pf: 1,
            n_pv: 1,
            n_pr: 1,
            n_phases: 1,
            n_st: 1,
            phase: None,
            stage: None,
            settings: RunSettings::default(),
            engine: EngineChoice::Auto,
            mode: ExecMode::Threads,
            verify: false,
            out_dir: None,
        }
    }
}

impl RunConfig {
    /// True when any option only the multi-rank engine can honor is set.
    fn needs_multi_rank(&self) -> bool {
        self.n_pf * self.n_pv * self.n_pr > 1
            || self.n_phases > 1
            || self.n_st > 1
            || self.phase.is_some()
            || self.stage.is_some()
    }

    /// The engine that will actually run.
    pub fn resolved_engine(&self) -> EngineChoice {
        match self.engine {
            EngineChoice::Auto => {
                if self.needs_multi_rank() {
                    EngineChoice::MultiRank
                } else {
                    EngineChoice::Kernel
                }
            }
            chosen => chosen,
        }
    }

    fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        match self.num_way {
            NumWay::Two => {
                if self.stage.is_some() || self.n_st != 1 {
                    return Err(Error::InvalidParameter {
                        name: "n-st",
                        reason: "stages apply to 3-way runs; 2-way plans use phases"
                            .to_string(),
                    });
                }
            }
            NumWay::Three => {
                if self.phase.is_some() || self.n_phases != 1 {
                    return Err(Error::InvalidParameter {
                        name: "n-phases",
                        reason: "phases apply to 2-way runs; 3-way plans use stages"
                            .to_string(),
                    });
                }
            }
        }
        if self.verify && (self.phase.is_some() || self.stage.is_some()) {
            return Err(Error::InvalidParameter {
                name: "verify",
                reason: "verification compares against a full reference run, so it \
                         cannot apply to a single phase or stage"
                    .to_string(),
            });
        }
        if matches!(self.engine, EngineChoice::Reference | EngineChoice::Kernel)
            && self.needs_multi_rank()
        {
            return Err(Error::InvalidParameter {
                name: "engine",
                reason: format!(
                    "the {} engine is single-rank; rank grids, phases, and stages \
                     need the multi-rank engine",
                    self.engine
                ),
            });
        }
        Ok(())
    }
}

/// The figures a finished run reports.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub num_way: NumWay,
    pub data: String,
    pub n_v: u64,
    pub n_f: u64,
    pub sparse: bool,
    pub engine: EngineChoice,
    pub grid: ManifestGrid,
    pub n_phases: usize,
    pub n_st: usize,
    pub phase: Option<usize>,
    pub stage: Option<usize>,
    pub records: u64,
    pub skipped: u64,
    pub rate: RateReport,
    pub checksum: u128,
    /// Path of the manifest, when an output directory was given.
    pub manifest: Option<PathBuf>,
    /// True when --verify ran and the reference agreed.
    pub verified: bool,
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{}-way run over {} ({} vectors x {} fields{})",
            self.num_way.as_u8(),
            self.data,
            self.n_v,
            self.n_f,
            if self.sparse { ", sparse" } else { "" }
        )?;
        write!(
            f,
            "engine {} on grid ({},{},{})",
            self.engine, self.grid.n_pf, self.grid.n_pv, self.grid.n_pr
        )?;
        if self.n_phases > 1 || self.phase.is_some() {
            match self.phase {
                Some(p) => write!(f, ", phase {p}/{}", self.n_phases)?,
                None => write!(f, ", {} phases", self.n_phases)?,
            }
        }
        if self.n_st > 1 || self.stage.is_some() {
            match self.stage {
                Some(s) => write!(f, ", stage {s}/{}", self.n_st)?,
                None => write!(f, ", {} stages", self.n_st)?,
            }
        }
        writeln!(f)?;
        writeln!(f, "records kept: {} (skipped {})", self.records, self.skipped)?;
        writeln!(f, "{}", self.rate)?;
        write!(f, "checksum: {}", checksum_hex(self.checksum))?;
        if let Some(path) = &self.manifest {
            write!(f, "\nwrote {}", path.display())?;
        }
        if self.verified {
            write!(f, "\nverified: engine output matches the reference")?;
        }
        Ok(())
    }
}

/// Executes a configured run end to end and returns its summary.
pub fn execute_run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let engine = config.resolved_engine();
    let set = config.data.load_set()?;
    let n_v = set.n_v() as u64;
    let n_f = set.n_f();
    let freq = allele_frequencies(&set);
    let source = match &config.data {
        DataSpec::File(path) => RunSource::File(FileSource::open(path)?),
        DataSpec::Synthetic { .. } => RunSource::Memory(MemorySource::new(set.clone())),
    };

    match config.num_way {
        NumWay::Two => {
            let mut n_phases = 1;
            let start = Instant::now();
            let output = match engine {
                EngineChoice::Reference => run_reference2(&set.decode(), &config.settings)?,
                EngineChoice::Kernel => {
                    run_kernel2(&set, &freq, &config.settings, KERNEL_CHUNK)?
                }
                EngineChoice::MultiRank => {
                    let grid = make_grid(n_v, n_f, config.n_pf, config.n_pv, config.n_pr)?;
                    let plan = plan2(&grid, config.n_phases)?;
                    n_phases = plan.n_phases();
                    let opts = ExecOpts { mode: config.mode, phase: config.phase, stage: None };
                    run_multi2(&source, &freq, &grid, &plan, &config.settings, &opts)?
                }
                EngineChoice::Auto => unreachable!("resolved above"),
            };
            let elapsed = start.elapsed().as_secs_f64().max(MIN_ELAPSED);
            let verified = if config.verify {
                check_against_reference(&output, &run_reference2(&set.decode(), &config.settings)?)?
            } else {
                false
            };
            finish_run(config, engine, &set, n_phases, 1, output, elapsed, verified)
        }
        NumWay::Three => {
            let mut n_st = 1;
            let start = Instant::now();
            let output = match engine {
                EngineChoice::Reference => run_reference3(&set.decode(), &config.settings)?,
                EngineChoice::Kernel => run_kernel3(&set, &freq, &config.settings)?,
                EngineChoice::MultiRank => {
                    let grid = make_grid(n_v, n_f, config.n_pf, config.n_pv, config.n_pr)?;
                    let plan = plan3(&grid, config.n_st)?;
                    n_st = plan.n_st();
                    let opts = ExecOpts { mode: config.mode, phase: None, stage: config.stage };
                    run_multi3(&source, &freq, &grid, &plan, &config.settings, &opts)?
                }
                EngineChoice::Auto => unreachable!("resolved above"),
            };
            let elapsed = start.elapsed().as_secs_f64().max(MIN_ELAPSED);
            let verified = if config.verify {
                check_against_reference(&output, &run_reference3(&set.decode(), &config.settings)?)?
            } else {
                false
            };
            finish_run(config, engine, &set, 1, n_st, output, elapsed, verified)
        }
    }
}

fn check_against_reference<R: ComparableRecord>(
    run: &EngineOutput<R>,
    reference: &EngineOutput<R>,
) -> Result<bool> {
    let report = compare_outputs("run", run, "reference", reference);
    if !report.is_match() {
        return Err(Error::VerifyMismatch { detail: report.to_string() });
    }
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn finish_run<R: RecordBytes + ComparableRecord>(
    config: &RunConfig,
    engine: EngineChoice,
    set: &PackedVectorSet,
    n_phases: usize,
    n_st: usize,
    output: EngineOutput<R>,
    elapsed: f64,
    verified: bool,
) -> Result<RunSummary> {
    let rate = rate_report(elapsed, output.comparisons)?;
    let grid = ManifestGrid { n_pf: config.n_pf, n_pv: config.n_pv, n_pr: config.n_pr };
    let manifest_path = match &config.out_dir {
        Some(dir) => {
            let head = Manifest {
                num_way: config.num_way.as_u8(),
                n_v: set.n_v() as u64,
                n_f: set.n_f(),
                sparse: set.is_sparse(),
                gamma: config.settings.ccc.gamma,
                precision: config.settings.ccc.precision.to_string(),
                threshold: config.settings.threshold,
                engine: engine.to_string(),
                grid,
                n_phases,
                phase: config.phase,
                n_st,
                stage: config.stage,
                records: 0,
                skipped: 0,
                comparisons: 0,
                elapsed_seconds: elapsed,
                comparisons_per_second: rate.per_second,
                checksum: checksum_hex(0),
                ranks: Vec::new(),
            };
            write_run(dir, head, &output, config.settings.ccc.precision)?;
            Some(dir.join(MANIFEST_NAME))
        }
        None => None,
    };
    Ok(RunSummary {
        num_way: config.num_way,
        data: config.data.describe(),
        n_v: set.n_v() as u64,
        n_f: set.n_f(),
        sparse: set.is_sparse(),
        engine,
        grid,
        n_phases,
        n_st,
        phase: config.phase,
        stage: config.stage,
        records: output.records_total(),
        skipped: output.skipped,
        rate,
        checksum: output.checksum,
        manifest: manifest_path,
        verified,
    })
}

/// `gen` command: synthesize a dataset and write it as a packed file.
#[derive(Clone, Debug)]
pub struct GenConfig {
    pub kind: SyntheticKind,
    pub n_v: u64,
    pub n_f: u64,
    pub seed: u64,
    pub sparse: bool,
    pub out_dir: PathBuf,
}

/// What `gen` produced.
#[derive(Clone, Debug)]
pub struct GenSummary {
    pub path: PathBuf,
    pub kind: SyntheticKind,
    pub n_v: u64,
    pub n_f: u64,
    pub sparse: bool,
}

impl std::fmt::Display for GenSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "wrote {} dataset ({} vectors x {} fields{}) to {}",
            self.kind,
            self.n_v,
            self.n_f,
            if self.sparse { ", sparse" } else { "" },
            self.path.display()
        )
    }
}

/// File name `gen` writes inside its output directory.
pub const DATASET_NAME: &str = "dataset.bin";

pub fn execute_gen(config: &GenConfig) -> Result<GenSummary> {
    let spec = DataSpec::Synthetic {
        kind: config.kind,
        n_v: config.n_v,
        n_f: config.n_f,
        seed: config.seed,
        sparse: config.sparse,
    };
    let set = spec.load_set()?;
    fs::create_dir_all(&config.out_dir)
        .map_err(|e| Error::Io { path: config.out_dir.clone(), source: e })?;
    let path = config.out_dir.join(DATASET_NAME);
    write_dataset(&set, &path)?;
    Ok(GenSummary {
        path,
        kind: config.kind,
        n_v: set.n_v() as u64,
        n_f: set.n_f(),
        sparse: set.is_sparse(),
    })
}

/// `permute` command: shuffle a dataset's vectors with a seeded map.
#[derive(Clone, Debug)]
pub struct PermuteConfig {
    pub input: PathBuf,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// What `permute` produced.
#[derive(Clone, Debug)]
pub struct PermuteSummary {
    pub data_path: PathBuf,
    pub map_path: PathBuf,
    pub n_v: u64,
}

impl std::fmt::Display for PermuteSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "permuted {} vectors into {} (map in {})",
            self.n_v,
            self.data_path.display(),
            self.map_path.display()
        )
    }
}

/// File names `permute` writes inside its output directory.
pub const PERMUTED_NAME: &str = "permuted.bin";
pub const PERMUTATION_NAME: &str = "permutation.bin";

pub fn execute_permute(config: &PermuteConfig) -> Result<PermuteSummary> {
    let set = read_dataset(&config.input)?;
    let (shuffled, perm) = permute_vectors(&set, config.seed)?;
    fs::create_dir_all(&config.out_dir)
        .map_err(|e| Error::Io { path: config.out_dir.clone(), source: e })?;
    let data_path = config.out_dir.join(PERMUTED_NAME);
    write_dataset(&shuffled, &data_path)?;
    let map_path = config.out_dir.join(PERMUTATION_NAME);
    fs::write(&map_path, perm.to_bytes())
        .map_err(|e| Error::Io { path: map_path.clone(), source: e })?;
    Ok(PermuteSummary { data_path, map_path, n_v: set.n_v() as u64 })
}

/// `verify` command: sweep the dataset through every engine on the
/// configured grid and demand identical results.
#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub num_way: NumWay,
    pub data: DataSpec,
    pub settings: RunSettings,
    pub grid: GridShape,
    pub mode: ExecMode,
}

pub fn execute_verify(config: &VerifyConfig) -> Result<HarnessReport> {
    let set = config.data.load_set()?;
    verify_equivalence(&set, config.num_way, &config.settings, &[config.grid], config.mode)
}

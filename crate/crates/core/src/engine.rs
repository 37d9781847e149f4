//! Execution engines: the naive reference enumerator, the blocked
//! single-process kernel engine, and the multi-rank engine that runs a
//! block plan over simulated ranks.
//!
//! All three produce the same stream shape — canonical records plus an
//! order-independent checksum and bookkeeping counters — and all three
//! must produce bit-identical values for the same dataset and settings:
//! tallies are integers, reductions are integer sums, and the float
//! evaluation happens once per finished record from identical inputs.
//!
//! The multi-rank engine mirrors a cluster layout in-process. Each rank
//! owns one vector tile restricted to its field rank's plane words and
//! reads only that slice from the source. A run has two parts per rank:
//! part one loads the resident tile and pushes it to every worker whose
//! plan needs it; part two receives partner tiles, computes the worker's
//! blocks, reduces partial tallies down the field axis, and emits finished
//! records at the field root. Both sides of every exchange derive the
//! need list from the same plan, so no negotiation happens at runtime.
//! Ranks can execute as threads or sequentially (parts ordered so queued
//! messages are always available before they are awaited); the output is
//! identical either way.

use crate::channel::{build_mesh, Msg, RankComm};
use crate::checksum::{combine, ChecksumState};
use crate::datafile::{read_header, read_tile, DatasetHeader};
use crate::error::{Error, Result};
use crate::grid::{BlockPlan2, BlockPlan3, RankGrid};
use crate::element::SiteValue;
use crate::metrics::{
    allele_frequencies, ccc2, ccc3, reconstruct3, x_construct, CccParams, FrequencyTable,
    Record2, Record3, VectorCounts,
};
use crate::oracle::{oracle_counts, oracle_tally2, oracle_tally3};
use crate::packed::{words_for, PackedVectorSet};
use crate::tally::{
    block_tally2, block_tally2_upper, block_tally3_step, MetricsBlock, TallyTable2, TallyTable3,
};
use std::ops::Range;
use std::path::{Path, PathBuf};

/// Where ranks get their column tiles. Implementations must hand out
/// identical bits for identical ranges regardless of access order.
pub trait TileSource: Sync {
    fn n_v(&self) -> u64;
    fn n_f(&self) -> u64;
    fn sparse(&self) -> bool;
    /// Loads vectors `cols` restricted to plane words `words`.
    fn load_tile(&self, cols: Range<u64>, words: Range<usize>) -> Result<PackedVectorSet>;
}

/// A dataset held in memory; tiles are copied out of it.
pub struct MemorySource {
    set: PackedVectorSet,
}

impl MemorySource {
    pub fn new(set: PackedVectorSet) -> Self {
        MemorySource { set }
    }

    pub fn set(&self) -> &PackedVectorSet {
        &self.set
    }
}

impl TileSource for MemorySource {
    fn n_v(&self) -> u64 {
        self.set.n_v() as u64
    }

    fn n_f(&self) -> u64 {
        self.set.n_f()
    }

    fn sparse(&self) -> bool {
        self.set.is_sparse()
    }

    fn load_tile(&self, cols: Range<u64>, words: Range<usize>) -> Result<PackedVectorSet> {
        self.set.extract_tile(cols, words)
    }
}

/// A dataset file read with ranged tile reads; each load opens the file
/// independently, the way separate processes would.
pub struct FileSource {
    path: PathBuf,
    header: DatasetHeader,
}

impl FileSource {
    pub fn open(path: &Path) -> Result<Self> {
        let header = read_header(path)?;
        Ok(FileSource { path: path.to_path_buf(), header })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl TileSource for FileSource {
    fn n_v(&self) -> u64 {
        self.header.n_v
    }

    fn n_f(&self) -> u64 {
        self.header.n_f
    }

    fn sparse(&self) -> bool {
        self.header.sparse
    }

    fn load_tile(&self, cols: Range<u64>, words: Range<usize>) -> Result<PackedVectorSet> {
        read_tile(&self.path, cols, words)
    }
}

/// Global per-vector integer counts from any source, read in column
/// chunks. All engines must work from these same integers so their float
/// frequencies agree bit for bit.
pub fn source_frequencies<S: TileSource + ?Sized>(source: &S) -> Result<FrequencyTable> {
    const CHUNK: u64 = 256;
    let n_v = source.n_v();
    let words = 0..words_for(source.n_f());
    let mut counts = Vec::with_capacity(n_v as usize);
    let mut lo = 0;
    while lo < n_v {
        let hi = (lo + CHUNK).min(n_v);
        let tile = source.load_tile(lo..hi, words.clone())?;
        let part = allele_frequencies(&tile);
        for i in 0..tile.n_v() {
            counts.push(part.counts(i as u64));
        }
        lo = hi;
    }
    Ok(FrequencyTable::from_counts(counts))
}

/// Knobs shared by every engine: the coefficient parameters and the
/// output threshold. A record is written only when its largest
/// coefficient cell exceeds the threshold; thresholded-out and
/// undefined-coefficient records still reach the checksum.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub ccc: CccParams,
    pub threshold: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings { ccc: CccParams::default(), threshold: 0.0 }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return Err(Error::InvalidParameter {
                name: "threshold",
                reason: format!("must be a nonnegative number, got {}", self.threshold),
            });
        }
        if !self.ccc.gamma.is_finite() || self.ccc.gamma < 0.0 {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be a finite nonnegative number, got {}", self.ccc.gamma),
            });
        }
        Ok(())
    }
}

/// How the multi-rank engine schedules its rank bodies.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Default)]
pub enum ExecMode {
    /// One thread per rank, exchanging messages concurrently.
    #[default]
    Threads,
    /// Ranks run one after another on the calling thread: every load part
    /// first, then compute parts ordered so reduction senders run before
    /// their field root. Queued channels make this a drop-in degenerate
    /// schedule for debugging.
    Sequential,
}

/// Execution selectors for the multi-rank engine.
#[derive(Copy, Clone, Debug, Default)]
pub struct ExecOpts {
    pub mode: ExecMode,
    /// Restrict a pair run to one phase of its plan.
    pub phase: Option<usize>,
    /// Restrict a triple run to one stage of its plan.
    pub stage: Option<usize>,
}

/// Everything one rank produced. Ranks that only reduce (field coordinate
/// above zero) leave the record list empty but still report kernel calls.
#[derive(Clone, Debug)]
pub struct RankOutput<R> {
    pub rank: usize,
    pub records: Vec<R>,
    pub checksum: ChecksumState,
    pub comparisons: u64,
    pub skipped: u64,
    /// Block-tally kernel invocations: one per pair block, three per
    /// conditioning step of a triple job (one per class).
    pub kernel_steps: u64,
}

/// A finished run: per-rank outputs in rank order plus run totals. The
/// checksum is the modular sum of the rank contributions.
#[derive(Clone, Debug)]
pub struct EngineOutput<R> {
    pub ranks: Vec<RankOutput<R>>,
    pub checksum: u128,
    pub comparisons: u64,
    pub skipped: u64,
    pub kernel_steps: u64,
}

/// Canonical index tuple of a record, for ordering and comparison.
/// Pairs pad the unused slot with zero.
pub trait IndexKey {
    fn index_key(&self) -> [u64; 3];
}

impl IndexKey for Record2 {
    fn index_key(&self) -> [u64; 3] {
        [self.i, self.j, 0]
    }
}

impl IndexKey for Record3 {
    fn index_key(&self) -> [u64; 3] {
        [self.i, self.j, self.k]
    }
}

impl<R> EngineOutput<R> {
    pub fn records_total(&self) -> u64 {
        self.ranks.iter().map(|r| r.records.len() as u64).sum()
    }
}

impl<R: Clone + IndexKey> EngineOutput<R> {
    /// All records across ranks, sorted by canonical indices.
    pub fn sorted_records(&self) -> Vec<R> {
        let mut all: Vec<R> =
            self.ranks.iter().flat_map(|r| r.records.iter().cloned()).collect();
        all.sort_by_key(|r| r.index_key());
        all
    }
}

fn assemble<R>(ranks: Vec<RankOutput<R>>) -> EngineOutput<R> {
    let checksum = combine(ranks.iter().map(|r| r.checksum.value()));
    let comparisons = ranks.iter().map(|r| r.comparisons).sum();
    let skipped = ranks.iter().map(|r| r.skipped).sum();
    let kernel_steps = ranks.iter().map(|r| r.kernel_steps).sum();
    EngineOutput { ranks, checksum, comparisons, skipped, kernel_steps }
}

/// Shared record emission: canonicalization, checksumming, comparison
/// accounting, coefficient evaluation, and thresholding — one code path
/// so every engine agrees on what a finished record is.
struct Emitter<'a, R> {
    freq: &'a FrequencyTable,
    settings: &'a RunSettings,
    n_f: u64,
    records: Vec<R>,
    checksum: ChecksumState,
    comparisons: u64,
    skipped: u64,
}

impl<'a, R> Emitter<'a, R> {
    fn new(freq: &'a FrequencyTable, settings: &'a RunSettings, n_f: u64) -> Self {
        Emitter {
            freq,
            settings,
            n_f,
            records: Vec::new(),
            checksum: ChecksumState::new(),
            comparisons: 0,
            skipped: 0,
        }
    }

    fn into_rank_output(self, rank: usize, kernel_steps: u64) -> RankOutput<R> {
        RankOutput {
            rank,
            records: self.records,
            checksum: self.checksum,
            comparisons: self.comparisons,
            skipped: self.skipped,
            kernel_steps,
        }
    }

    /// Threshold rule shared by pairs and triples: keep only records whose
    /// best cell clears the bar. An undefined coefficient (sparse pair
    /// with no shared valid positions) is skipped, not an error — the
    /// tally was still computed and checksummed.
    fn keep(&mut self, values: Result<impl AsRef<[f64]>>) -> Result<Option<Vec<f64>>> {
        self.comparisons += self.n_f;
        match values {
            Ok(v) => {
                let best = v.as_ref().iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if best > self.settings.threshold {
                    Ok(Some(v.as_ref().to_vec()))
                } else {
                    self.skipped += 1;
                    Ok(None)
                }
            }
            Err(Error::ZeroValidOverlap) => {
                self.skipped += 1;
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}

impl Emitter<'_, Record2> {
    /// Finishes one pair: indices in either order, tally oriented to the
    /// raw order (transposed here if needed).
    fn emit2(&mut self, i_raw: u64, j_raw: u64, tally: TallyTable2) -> Result<()> {
        debug_assert_ne!(i_raw, j_raw);
        let (i, j, t) =
            if i_raw < j_raw { (i_raw, j_raw, tally) } else { (j_raw, i_raw, tally.transposed()) };
        self.checksum.add_pair(i, j, &t);
        let values = ccc2(&t, self.freq.counts(i), self.freq.counts(j), &self.settings.ccc);
        if let Some(v) = self.keep(values)? {
            let values: [f64; 4] = v.try_into().expect("pair coefficients have four cells");
            self.records.push(Record2 { i, j, tally: t, values });
        }
        Ok(())
    }
}

impl Emitter<'_, Record3> {
    /// Finishes one triple; indices must already be canonical.
    fn emit3(&mut self, i: u64, j: u64, k: u64, tally: TallyTable3) -> Result<()> {
        debug_assert!(i < j && j < k);
        self.checksum.add_triple(i, j, k, &tally);
        let values = ccc3(
            &tally,
            self.freq.counts(i),
            self.freq.counts(j),
            self.freq.counts(k),
            &self.settings.ccc,
        );
        if let Some(v) = self.keep(values)? {
            let values: [f64; 8] = v.try_into().expect("triple coefficients have eight cells");
            self.records.push(Record3 { i, j, k, tally, values });
        }
        Ok(())
    }
}

/// Pair run by literal enumeration over decoded values. Independent of
/// the packed representation and the popcount kernels; the trusted
/// baseline the other engines are checked against.
pub fn run_reference2(
    rows: &[Vec<SiteValue>],
    settings: &RunSettings,
) -> Result<EngineOutput<Record2>> {
    settings.validate()?;
    let n_f = rows.first().map_or(0, |r| r.len() as u64);
    let freq = reference_frequencies(rows);
    let mut em = Emitter::new(&freq, settings, n_f);
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            let (t, _) = oracle_tally2(&rows[i], &rows[j]);
            em.emit2(i as u64, j as u64, t)?;
        }
    }
    Ok(assemble(vec![em.into_rank_output(0, 0)]))
}

/// Triple run by literal enumeration over decoded values.
pub fn run_reference3(
    rows: &[Vec<SiteValue>],
    settings: &RunSettings,
) -> Result<EngineOutput<Record3>> {
    settings.validate()?;
    let n_f = rows.first().map_or(0, |r| r.len() as u64);
    let freq = reference_frequencies(rows);
    let mut em = Emitter::new(&freq, settings, n_f);
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            for k in (j + 1)..rows.len() {
                let (t, _) = oracle_tally3(&rows[i], &rows[j], &rows[k]);
                em.emit3(i as u64, j as u64, k as u64, t)?;
            }
        }
    }
    Ok(assemble(vec![em.into_rank_output(0, 0)]))
}

/// Per-vector counts by per-element enumeration — same integers as the
/// popcount path, reached without touching packed planes.
fn reference_frequencies(rows: &[Vec<SiteValue>]) -> FrequencyTable {
    let counts = rows
        .iter()
        .map(|row| {
            let (ones, valid) = oracle_counts(row);
            VectorCounts { ones, valid }
        })
        .collect();
    FrequencyTable::from_counts(counts)
}

/// Single-process pair engine: one pass over column-chunk pairs with the
/// GEMM-shaped block tally.
pub fn run_kernel2(
    set: &PackedVectorSet,
    freq: &FrequencyTable,
    settings: &RunSettings,
    chunk: usize,
) -> Result<EngineOutput<Record2>> {
    settings.validate()?;
    check_freq(freq, set.n_v())?;
    let chunk = chunk.max(1) as u64;
    let n_v = set.n_v() as u64;
    let mut em = Emitter::new(freq, settings, set.n_f());
    let mut kernel_steps = 0u64;
    let mut ca = 0u64;
    while ca < n_v {
        let a_hi = (ca + chunk).min(n_v);
        let tile_a = set.extract_columns(ca..a_hi)?;
        let diag = block_tally2_upper(&tile_a, ca)?;
        kernel_steps += 1;
        for r in 0..diag.n_rows {
            for c in (r + 1)..diag.n_cols {
                em.emit2(ca + r as u64, ca + c as u64, *diag.at(r, c))?;
            }
        }
        let mut cb = a_hi;
        while cb < n_v {
            let b_hi = (cb + chunk).min(n_v);
            let tile_b = set.extract_columns(cb..b_hi)?;
            let block = block_tally2(&tile_a, ca, &tile_b, cb)?;
            kernel_steps += 1;
            for r in 0..block.n_rows {
                for c in 0..block.n_cols {
                    em.emit2(ca + r as u64, cb + c as u64, *block.at(r, c))?;
                }
            }
            cb = b_hi;
        }
        ca = a_hi;
    }
    Ok(assemble(vec![em.into_rank_output(0, kernel_steps)]))
}

/// Single-process triple engine: for each conditioning vector `j`, three
/// class-masked block tallies pair every `i < j` against every `k > j`,
/// and the reconstruction turns the three 2x2 tables into the 2x2x2 one.
pub fn run_kernel3(
    set: &PackedVectorSet,
    freq: &FrequencyTable,
    settings: &RunSettings,
) -> Result<EngineOutput<Record3>> {
    settings.validate()?;
    check_freq(freq, set.n_v())?;
    let n_v = set.n_v() as u64;
    let mut em = Emitter::new(freq, settings, set.n_f());
    let mut kernel_steps = 0u64;
    for j in 0..n_v {
        if j == 0 || j + 1 == n_v {
            continue;
        }
        let left = set.extract_columns(0..j)?;
        let right = set.extract_columns(j + 1..n_v)?;
        let vj = set.column(j as usize);
        let b1 = block_tally3_step(&x_construct(vj, &left, 1)?, 0, &right, j + 1)?;
        let b2 = block_tally3_step(&x_construct(vj, &left, 2)?, 0, &right, j + 1)?;
        let b3 = block_tally3_step(&x_construct(vj, &left, 3)?, 0, &right, j + 1)?;
        kernel_steps += 3;
        for r in 0..b1.n_rows {
            for c in 0..b1.n_cols {
                let t = reconstruct3(b1.at(r, c), b2.at(r, c), b3.at(r, c));
                em.emit3(r as u64, j, j + 1 + c as u64, t)?;
            }
        }
    }
    Ok(assemble(vec![em.into_rank_output(0, kernel_steps)]))
}

fn check_freq(freq: &FrequencyTable, n_v: usize) -> Result<()> {
    if freq.len() != n_v {
        return Err(Error::InvalidParameter {
            name: "frequencies",
            reason: format!("{} vectors of counts for {} vectors of data", freq.len(), n_v),
        });
    }
    Ok(())
}

fn check_source<S: TileSource + ?Sized>(
    source: &S,
    grid: &RankGrid,
    freq: &FrequencyTable,
) -> Result<()> {
    if grid.n_v() != source.n_v() || grid.n_f() != source.n_f() {
        return Err(Error::InvalidGrid {
            reason: format!(
                "grid built for n_v={}, n_f={} but the source holds n_v={}, n_f={}",
                grid.n_v(),
                grid.n_f(),
                source.n_v(),
                source.n_f()
            ),
        });
    }
    check_freq(freq, source.n_v() as usize)
}

/// Multi-rank pair run over a block plan.
pub fn run_multi2<S: TileSource>(
    source: &S,
    freq: &FrequencyTable,
    grid: &RankGrid,
    plan: &BlockPlan2,
    settings: &RunSettings,
    opts: &ExecOpts,
) -> Result<EngineOutput<Record2>> {
    settings.validate()?;
    check_source(source, grid, freq)?;
    if let Some(p) = opts.phase {
        if p >= plan.n_phases() {
            return Err(Error::InvalidParameter {
                name: "phase",
                reason: format!("phase {p} of {} phases", plan.n_phases()),
            });
        }
    }
    let body = Body2 { source, freq, grid, plan, settings, phase: opts.phase };
    run_ranks(grid, opts.mode, &body)
}

/// Multi-rank triple run over a slab plan.
pub fn run_multi3<S: TileSource>(
    source: &S,
    freq: &FrequencyTable,
    grid: &RankGrid,
    plan: &BlockPlan3,
    settings: &RunSettings,
    opts: &ExecOpts,
) -> Result<EngineOutput<Record3>> {
    settings.validate()?;
    check_source(source, grid, freq)?;
    if let Some(s) = opts.stage {
        if s >= plan.n_st() {
            return Err(Error::InvalidParameter {
                name: "stage",
                reason: format!("stage {s} of {} stages", plan.n_st()),
            });
        }
    }
    let body = Body3 { source, freq, grid, plan, settings, stage: opts.stage };
    run_ranks(grid, opts.mode, &body)
}

/// One engine's per-rank behavior, split at the point where every send
/// of part one must have happened before any receive of part two.
trait RankBody: Sync {
    type Record: Send;

    /// Loads the resident tile and pushes it to every plan-derived needer.
    fn part1(&self, rank: usize, comm: &RankComm) -> Result<PackedVectorSet>;

    /// Receives partner tiles, computes blocks, reduces along the field
    /// axis, and emits records at the field root.
    fn part2(
        &self,
        rank: usize,
        comm: &RankComm,
        resident: PackedVectorSet,
    ) -> Result<RankOutput<Self::Record>>;
}

/// Runs every rank body to completion under the chosen schedule.
fn run_ranks<B: RankBody>(
    grid: &RankGrid,
    mode: ExecMode,
    body: &B,
) -> Result<EngineOutput<B::Record>> {
    let comms = build_mesh(grid.n_ranks());
    match mode {
        ExecMode::Threads => {
            let results: Vec<Result<RankOutput<B::Record>>> = std::thread::scope(|scope| {
                let handles: Vec<_> = comms
                    .into_iter()
                    .enumerate()
                    .map(|(rank, comm)| {
                        scope.spawn(move || {
                            let resident = body.part1(rank, &comm)?;
                            body.part2(rank, &comm, resident)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|panic| std::panic::resume_unwind(panic)))
                    .collect()
            });
            let mut outputs = Vec::with_capacity(results.len());
            let mut first_err: Option<(usize, Error)> = None;
            for (rank, res) in results.into_iter().enumerate() {
                match res {
                    Ok(out) => outputs.push(out),
                    Err(e) => {
                        // A rank that died for its own reasons beats the
                        // hangup errors it caused in its peers.
                        let cascade = matches!(e, Error::ChannelFailure { .. });
                        let replace = match &first_err {
                            None => true,
                            Some((_, prev)) => {
                                matches!(prev, Error::ChannelFailure { .. }) && !cascade
                            }
                        };
                        if replace {
                            first_err = Some((rank, e));
                        }
                    }
                }
            }
            if let Some((rank, source)) = first_err {
                return Err(Error::Rank { rank, source: Box::new(source) });
            }
            Ok(assemble(outputs))
        }
        ExecMode::Sequential => {
            let n_ranks = grid.n_ranks();
            let mut residents: Vec<Option<PackedVectorSet>> = Vec::with_capacity(n_ranks);
            for (rank, comm) in comms.iter().enumerate() {
                let tile = body
                    .part1(rank, comm)
                    .map_err(|e| Error::Rank { rank, source: Box::new(e) })?;
                residents.push(Some(tile));
            }
            // Field roots run last so their reduction inputs are already
            // queued; within a field coordinate, rank order is id order.
            let mut order: Vec<usize> = (0..n_ranks).collect();
            order.sort_by_key(|&rank| {
                let (r_f, r_v, r_r) = grid.coords(rank);
                (usize::MAX - r_f, r_r, r_v)
            });
            let mut outputs: Vec<Option<RankOutput<B::Record>>> =
                (0..n_ranks).map(|_| None).collect();
            for rank in order {
                let resident = residents[rank].take().expect("each rank runs once");
                let out = body
                    .part2(rank, &comms[rank], resident)
                    .map_err(|e| Error::Rank { rank, source: Box::new(e) })?;
                outputs[rank] = Some(out);
            }
            Ok(assemble(outputs.into_iter().map(|o| o.expect("all ranks ran")).collect()))
        }
    }
}

/// Shared part-one logic: load the resident slice, send it to `needers`.
fn load_and_send<S: TileSource>(
    source: &S,
    grid: &RankGrid,
    comm: &RankComm,
    rank: usize,
    needers: &[usize],
) -> Result<PackedVectorSet> {
    let (r_f, r_v, _) = grid.coords(rank);
    let cols = grid.col_tile(r_v);
    let tile = source.load_tile(cols.clone(), grid.word_tile(r_f))?;
    for &dst in needers {
        comm.send(dst, Msg::Tile { start: cols.start, tile: tile.clone() })?;
    }
    Ok(tile)
}

/// Receives the tiles named by `needed` (tile index order) from the
/// same-replica, same-field peers that own them.
fn fetch_tiles(
    grid: &RankGrid,
    comm: &RankComm,
    r_f: usize,
    r_r: usize,
    needed: &[usize],
) -> Result<Vec<Option<(u64, PackedVectorSet)>>> {
    let mut fetched: Vec<Option<(u64, PackedVectorSet)>> = vec![None; grid.n_pv()];
    for &t in needed {
        let (start, tile) = comm.expect_tile(grid.rank_id(r_f, t, r_r))?;
        debug_assert_eq!(start, grid.col_tile(t).start);
        fetched[t] = Some((start, tile));
    }
    Ok(fetched)
}

struct Body2<'a, S> {
    source: &'a S,
    freq: &'a FrequencyTable,
    grid: &'a RankGrid,
    plan: &'a BlockPlan2,
    settings: &'a RunSettings,
    phase: Option<usize>,
}

impl<S: TileSource> RankBody for Body2<'_, S> {
    type Record = Record2;

    fn part1(&self, rank: usize, comm: &RankComm) -> Result<PackedVectorSet> {
        let (r_f, r_v, r_r) = self.grid.coords(rank);
        let needers: Vec<usize> = (0..self.grid.n_pv())
            .filter(|&x| x != r_v && self.plan.tiles_needed(x, r_r, self.phase).contains(&r_v))
            .map(|x| self.grid.rank_id(r_f, x, r_r))
            .collect();
        load_and_send(self.source, self.grid, comm, rank, &needers)
    }

    fn part2(
        &self,
        rank: usize,
        comm: &RankComm,
        resident: PackedVectorSet,
    ) -> Result<RankOutput<Record2>> {
        let (r_f, r_v, r_r) = self.grid.coords(rank);
        let my_start = self.grid.col_tile(r_v).start;
        let needed = self.plan.tiles_needed(r_v, r_r, self.phase);
        let fetched = fetch_tiles(self.grid, comm, r_f, r_r, &needed)?;

        let mut blocks: Vec<(bool, MetricsBlock<TallyTable2>)> = Vec::new();
        let mut kernel_steps = 0u64;
        for job in self.plan.worker_jobs(r_v, r_r, self.phase) {
            let block = if job.delta == 0 {
                block_tally2_upper(&resident, my_start)?
            } else {
                let (b_start, b_tile) =
                    fetched[job.w].as_ref().expect("plan fetched every partner tile");
                block_tally2(&resident, my_start, b_tile, *b_start)?
            };
            kernel_steps += 1;
            blocks.push((job.delta == 0, block));
        }

        if r_f > 0 {
            let flat: Vec<TallyTable2> =
                blocks.iter().flat_map(|(_, b)| b.cells().iter().copied()).collect();
            comm.send(self.grid.rank_id(0, r_v, r_r), Msg::Tables2 { r_f, tables: flat })?;
            return Ok(reducer_output(rank, kernel_steps));
        }
        reduce_into(comm, self.grid, r_v, r_r, &mut blocks, |b| &mut b.1, |msg| match msg {
            Msg::Tables2 { tables, .. } => Some(tables),
            _ => None,
        })?;

        let mut em = Emitter::new(self.freq, self.settings, self.grid.n_f());
        for (diagonal, block) in &blocks {
            for r in 0..block.n_rows {
                let cols = if *diagonal { (r + 1)..block.n_cols } else { 0..block.n_cols };
                for c in cols {
                    em.emit2(
                        block.row_start + r as u64,
                        block.col_start + c as u64,
                        *block.at(r, c),
                    )?;
                }
            }
        }
        Ok(em.into_rank_output(rank, kernel_steps))
    }
}

/// Receives one flattened table list per higher field rank and folds it
/// into this root's blocks, in ascending field order.
fn reduce_into<T, B>(
    comm: &RankComm,
    grid: &RankGrid,
    r_v: usize,
    r_r: usize,
    blocks: &mut [B],
    as_block: impl Fn(&mut B) -> &mut MetricsBlock<T>,
    extract: impl Fn(Msg) -> Option<Vec<T>>,
) -> Result<()>
where
    T: Copy + Default,
    MetricsBlock<T>: AddCells<T>,
{
    for rf in 1..grid.n_pf() {
        let src = grid.rank_id(rf, r_v, r_r);
        let msg = comm.recv(src)?;
        let tables = extract(msg).ok_or_else(|| Error::ChannelFailure {
            rank: comm.rank(),
            detail: format!("rank {src} sent the wrong table kind"),
        })?;
        let want: usize = blocks.iter_mut().map(|b| as_block(b).cells().len()).sum();
        if tables.len() != want {
            return Err(Error::ChannelFailure {
                rank: comm.rank(),
                detail: format!(
                    "rank {src} reduced {} tables where {want} were expected",
                    tables.len()
                ),
            });
        }
        let mut off = 0;
        for b in blocks.iter_mut() {
            let block = as_block(b);
            let n = block.cells().len();
            block.add_cells(&tables[off..off + n]);
            off += n;
        }
    }
    Ok(())
}

/// The output of a rank whose only emission is its reduction message.
fn reducer_output<R>(rank: usize, kernel_steps: u64) -> RankOutput<R> {
    RankOutput {
        rank,
        records: Vec::new(),
        checksum: ChecksumState::new(),
        comparisons: 0,
        skipped: 0,
        kernel_steps,
    }
}

/// Cell-wise accumulation used by the field-axis reduction.
trait AddCells<T> {
    fn add_cells(&mut self, cells: &[T]);
}

impl AddCells<TallyTable2> for MetricsBlock<TallyTable2> {
    fn add_cells(&mut self, cells: &[TallyTable2]) {
        self.add_assign(cells);
    }
}

impl AddCells<TallyTable3> for MetricsBlock<TallyTable3> {
    fn add_cells(&mut self, cells: &[TallyTable3]) {
        self.add_assign(cells);
    }
}

struct Body3<'a, S> {
    source: &'a S,
    freq: &'a FrequencyTable,
    grid: &'a RankGrid,
    plan: &'a BlockPlan3,
    settings: &'a RunSettings,
    stage: Option<usize>,
}

impl<S: TileSource> RankBody for Body3<'_, S> {
    type Record = Record3;

    fn part1(&self, rank: usize, comm: &RankComm) -> Result<PackedVectorSet> {
        let (r_f, r_v, r_r) = self.grid.coords(rank);
        let needers: Vec<usize> = (0..self.grid.n_pv())
            .filter(|&x| x != r_v && self.plan.tiles_needed(x, r_r).contains(&r_v))
            .map(|x| self.grid.rank_id(r_f, x, r_r))
            .collect();
        load_and_send(self.source, self.grid, comm, rank, &needers)
    }

    fn part2(
        &self,
        rank: usize,
        comm: &RankComm,
        resident: PackedVectorSet,
    ) -> Result<RankOutput<Record3>> {
        let (r_f, r_v, r_r) = self.grid.coords(rank);
        let js = self.grid.col_tile(r_v);
        let needed = self.plan.tiles_needed(r_v, r_r);
        let fetched = fetch_tiles(self.grid, comm, r_f, r_r, &needed)?;
        let tile_of = |t: usize| -> (u64, &PackedVectorSet) {
            if t == r_v {
                (js.start, &resident)
            } else {
                let (start, tile) = fetched[t].as_ref().expect("plan fetched every outer tile");
                (*start, tile)
            }
        };

        // One reconstructed block per kept conditioning step, flattened
        // row-major; every field rank derives the identical shape list.
        let mut steps: Vec<(u64, MetricsBlock<TallyTable3>)> = Vec::new();
        let mut kernel_steps = 0u64;
        for job in self.plan.worker_jobs(r_v, r_r) {
            let (u_start, u_tile) = tile_of(job.u);
            let (x_start, x_tile) = tile_of(job.x);
            for jc in 0..resident.n_v() {
                if let Some(s) = self.stage {
                    if self.plan.stage_of(jc) != s {
                        continue;
                    }
                }
                let vj = resident.column(jc);
                let b1 = block_tally3_step(&x_construct(vj, u_tile, 1)?, u_start, x_tile, x_start)?;
                let b2 = block_tally3_step(&x_construct(vj, u_tile, 2)?, u_start, x_tile, x_start)?;
                let b3 = block_tally3_step(&x_construct(vj, u_tile, 3)?, u_start, x_tile, x_start)?;
                kernel_steps += 3;
                let mut block =
                    MetricsBlock::zeroed(u_start, x_start, b1.n_rows, b1.n_cols);
                for r in 0..b1.n_rows {
                    for c in 0..b1.n_cols {
                        *block.at_mut(r, c) = reconstruct3(b1.at(r, c), b2.at(r, c), b3.at(r, c));
                    }
                }
                steps.push((js.start + jc as u64, block));
            }
        }

        if r_f > 0 {
            let flat: Vec<TallyTable3> =
                steps.iter().flat_map(|(_, b)| b.cells().iter().copied()).collect();
            comm.send(self.grid.rank_id(0, r_v, r_r), Msg::Tables3 { r_f, tables: flat })?;
            return Ok(reducer_output(rank, kernel_steps));
        }
        reduce_into(comm, self.grid, r_v, r_r, &mut steps, |s| &mut s.1, |msg| match msg {
            Msg::Tables3 { tables, .. } => Some(tables),
            _ => None,
        })?;

        let mut em = Emitter::new(self.freq, self.settings, self.grid.n_f());
        for (j, block) in &steps {
            for r in 0..block.n_rows {
                let i = block.row_start + r as u64;
                if i >= *j {
                    break;
                }
                for c in 0..block.n_cols {
                    let k = block.col_start + c as u64;
                    if k > *j {
                        em.emit3(i, *j, k, *block.at(r, c))?;
                    }
                }
            }
        }
        Ok(em.into_rank_output(rank, kernel_steps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, plan2, plan3};
    use crate::metrics::{unique_counts, NumWay};
    use crate::synth::{generate_random, generate_verifiable};

    fn settings() -> RunSettings {
        RunSettings::default()
    }

    fn records_equal2(a: &EngineOutput<Record2>, b: &EngineOutput<Record2>) {
        assert_eq!(a.checksum, b.checksum, "checksums differ");
        let (ra, rb) = (a.sorted_records(), b.sorted_records());
        assert_eq!(ra.len(), rb.len());
        for (x, y) in ra.iter().zip(&rb) {
            assert_eq!((x.i, x.j), (y.i, y.j));
            assert_eq!(x.tally, y.tally, "tally differs at ({}, {})", x.i, x.j);
            assert_eq!(x.values, y.values, "values differ at ({}, {})", x.i, x.j);
        }
    }

    fn records_equal3(a: &EngineOutput<Record3>, b: &EngineOutput<Record3>) {
        assert_eq!(a.checksum, b.checksum, "checksums differ");
        let (ra, rb) = (a.sorted_records(), b.sorted_records());
        assert_eq!(ra.len(), rb.len());
        for (x, y) in ra.iter().zip(&rb) {
            assert_eq!((x.i, x.j, x.k), (y.i, y.j, y.k));
            assert_eq!(x.tally, y.tally, "tally differs at ({}, {}, {})", x.i, x.j, x.k);
            assert_eq!(x.values, y.values, "values differ at ({}, {}, {})", x.i, x.j, x.k);
        }
    }

    fn multi2(
        set: &PackedVectorSet,
        shape: (usize, usize, usize),
        n_phases: usize,
        opts: ExecOpts,
    ) -> EngineOutput<Record2> {
        let source = MemorySource::new(set.clone());
        let freq = allele_frequencies(set);
        let grid =
            make_grid(set.n_v() as u64, set.n_f(), shape.0, shape.1, shape.2).unwrap();
        let plan = plan2(&grid, n_phases).unwrap();
        run_multi2(&source, &freq, &grid, &plan, &settings(), &opts).unwrap()
    }

    fn multi3(
        set: &PackedVectorSet,
        shape: (usize, usize, usize),
        n_st: usize,
        opts: ExecOpts,
    ) -> EngineOutput<Record3> {
        let source = MemorySource::new(set.clone());
        let freq = allele_frequencies(set);
        let grid =
            make_grid(set.n_v() as u64, set.n_f(), shape.0, shape.1, shape.2).unwrap();
        let plan = plan3(&grid, n_st).unwrap();
        run_multi3(&source, &freq, &grid, &plan, &settings(), &opts).unwrap()
    }

    #[test]
    fn three_engines_agree_on_pairs() {
        for sparse in [false, true] {
            let set = generate_random(10, 130, 41, sparse);
            let freq = allele_frequencies(&set);
            let reference = run_reference2(&set.decode(), &settings()).unwrap();
            let kernel = run_kernel2(&set, &freq, &settings(), 4).unwrap();
            let multi = multi2(&set, (2, 3, 1), 1, ExecOpts::default());
            records_equal2(&reference, &kernel);
            records_equal2(&reference, &multi);
            assert_eq!(reference.records_total(), 45);
        }
    }

    #[test]
    fn three_engines_agree_on_triples() {
        for sparse in [false, true] {
            let set = generate_random(8, 70, 42, sparse);
            let freq = allele_frequencies(&set);
            let reference = run_reference3(&set.decode(), &settings()).unwrap();
            let kernel = run_kernel3(&set, &freq, &settings()).unwrap();
            let multi = multi3(&set, (2, 3, 1), 1, ExecOpts::default());
            records_equal3(&reference, &kernel);
            records_equal3(&reference, &multi);
            assert_eq!(reference.records_total(), 56);
        }
    }

    #[test]
    fn sequential_schedule_matches_threads() {
        let set = generate_random(11, 65, 7, false);
        let threads = multi2(&set, (2, 4, 2), 2, ExecOpts::default());
        let sequential = multi2(
            &set,
            (2, 4, 2),
            2,
            ExecOpts { mode: ExecMode::Sequential, ..ExecOpts::default() },
        );
        records_equal2(&threads, &sequential);

        let threes = multi3(&set, (2, 3, 2), 2, ExecOpts::default());
        let sequential3 = multi3(
            &set,
            (2, 3, 2),
            2,
            ExecOpts { mode: ExecMode::Sequential, ..ExecOpts::default() },
        );
        records_equal3(&threes, &sequential3);
    }

    #[test]
    fn phases_partition_the_pair_run() {
        let set = generate_random(12, 100, 3, false);
        let full = multi2(&set, (1, 3, 1), 3, ExecOpts::default());
        let mut seen = Vec::new();
        let mut checksums = Vec::new();
        for phase in 0..3 {
            let part = multi2(
                &set,
                (1, 3, 1),
                3,
                ExecOpts { phase: Some(phase), ..ExecOpts::default() },
            );
            checksums.push(part.checksum);
            seen.extend(part.sorted_records());
        }
        seen.sort_by_key(|r| r.index_key());
        let full_records = full.sorted_records();
        assert_eq!(seen.len(), full_records.len());
        for (a, b) in seen.iter().zip(&full_records) {
            assert_eq!((a.i, a.j, a.tally, a.values), (b.i, b.j, b.tally, b.values));
        }
        assert_eq!(combine(checksums), full.checksum);
    }

    #[test]
    fn stages_partition_the_triple_run() {
        let set = generate_random(9, 64, 5, false);
        let full = multi3(&set, (1, 3, 1), 3, ExecOpts::default());
        let mut seen = Vec::new();
        let mut checksums = Vec::new();
        for stage in 0..3 {
            let part = multi3(
                &set,
                (1, 3, 1),
                3,
                ExecOpts { stage: Some(stage), ..ExecOpts::default() },
            );
            checksums.push(part.checksum);
            seen.extend(part.sorted_records());
        }
        seen.sort_by_key(|r| r.index_key());
        let full_records = full.sorted_records();
        assert_eq!(seen.len(), full_records.len());
        for (a, b) in seen.iter().zip(&full_records) {
            assert_eq!((a.i, a.j, a.k), (b.i, b.j, b.k));
            assert_eq!(a.tally, b.tally);
        }
        assert_eq!(combine(checksums), full.checksum);
    }

    #[test]
    fn comparison_counter_audits_against_unique_counts() {
        let set = generate_random(9, 127, 11, false);
        let freq = allele_frequencies(&set);
        let pairs = run_kernel2(&set, &freq, &settings(), 3).unwrap();
        assert_eq!(pairs.comparisons, unique_counts(9, NumWay::Two).tables * 127);
        let triples = run_kernel3(&set, &freq, &settings()).unwrap();
        assert_eq!(triples.comparisons, unique_counts(9, NumWay::Three).tables * 127);
    }

    #[test]
    fn triple_steps_take_three_kernel_calls_each() {
        let set = generate_random(9, 64, 13, false);
        let freq = allele_frequencies(&set);
        let kernel = run_kernel3(&set, &freq, &settings()).unwrap();
        // Conditioning vectors with work on both sides: all but the ends.
        assert_eq!(kernel.kernel_steps, 3 * (9 - 2));

        // Multi-rank: every processed (job, conditioning vector) step
        // costs exactly three masked tallies.
        let multi = multi3(&set, (1, 3, 1), 1, ExecOpts::default());
        let grid = make_grid(9, 64, 1, 3, 1).unwrap();
        let plan = plan3(&grid, 1).unwrap();
        let expected: u64 = plan
            .all_jobs()
            .map(|(r_v, _, _)| {
                let tile = grid.col_tile(r_v);
                tile.end - tile.start
            })
            .sum();
        assert_eq!(multi.kernel_steps, 3 * expected);
    }

    #[test]
    fn infinite_threshold_keeps_nothing_but_checksums_everything() {
        let set = generate_random(8, 64, 17, false);
        let freq = allele_frequencies(&set);
        let open = run_kernel2(&set, &freq, &settings(), 8).unwrap();
        let closed = run_kernel2(
            &set,
            &freq,
            &RunSettings { threshold: f64::INFINITY, ..RunSettings::default() },
            8,
        )
        .unwrap();
        assert_eq!(closed.records_total(), 0);
        assert_eq!(closed.skipped, unique_counts(8, NumWay::Two).tables);
        assert_eq!(closed.checksum, open.checksum);
    }

    #[test]
    fn threshold_is_monotone() {
        let set = generate_random(10, 80, 23, false);
        let freq = allele_frequencies(&set);
        let loose = run_kernel2(
            &set,
            &freq,
            &RunSettings { threshold: 0.05, ..RunSettings::default() },
            8,
        )
        .unwrap();
        let tight = run_kernel2(
            &set,
            &freq,
            &RunSettings { threshold: 0.2, ..RunSettings::default() },
            8,
        )
        .unwrap();
        assert!(tight.records_total() <= loose.records_total());
        let loose_keys: std::collections::HashSet<_> =
            loose.sorted_records().iter().map(|r| (r.i, r.j)).collect();
        for r in tight.sorted_records() {
            assert!(loose_keys.contains(&(r.i, r.j)));
        }
    }

    #[test]
    fn planted_patterns_survive_the_full_stack() {
        // A verifiable set plants identical columns, so every pair (and
        // triple) must reproduce one closed-form tally.
        let (set, pattern) = generate_verifiable(6, 96, 29).unwrap();
        let freq = allele_frequencies(&set);
        let out = run_kernel2(&set, &freq, &settings(), 4).unwrap();
        let records = out.sorted_records();
        assert_eq!(records.len(), 15);
        for r in &records {
            assert_eq!(r.tally, pattern.expected_tally2(), "pair ({}, {})", r.i, r.j);
        }

        let out3 = run_kernel3(&set, &freq, &settings()).unwrap();
        let records3 = out3.sorted_records();
        assert_eq!(records3.len(), 20);
        for r in &records3 {
            assert_eq!(r.tally, pattern.expected_tally3(), "triple ({}, {}, {})", r.i, r.j, r.k);
        }
    }

    #[test]
    fn file_source_matches_memory_source() {
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("set.ccc");
        let set = generate_random(10, 130, 31, true);
        crate::datafile::write_dataset(&set, &path).unwrap();
        let file = FileSource::open(&path).unwrap();
        let memory = MemorySource::new(set.clone());
        let freq_f = source_frequencies(&file).unwrap();
        let freq_m = source_frequencies(&memory).unwrap();
        assert_eq!(freq_f, freq_m);

        let grid = make_grid(10, 130, 2, 3, 1).unwrap();
        let plan = plan2(&grid, 1).unwrap();
        let from_file =
            run_multi2(&file, &freq_f, &grid, &plan, &settings(), &ExecOpts::default()).unwrap();
        let from_memory =
            run_multi2(&memory, &freq_m, &grid, &plan, &settings(), &ExecOpts::default())
                .unwrap();
        records_equal2(&from_file, &from_memory);
    }

    #[test]
    fn grid_source_disagreement_is_rejected() {
        let set = generate_random(8, 64, 1, false);
        let source = MemorySource::new(set.clone());
        let freq = allele_frequencies(&set);
        let grid = make_grid(9, 64, 1, 1, 1).unwrap();
        let plan = plan2(&grid, 1).unwrap();
        assert!(matches!(
            run_multi2(&source, &freq, &grid, &plan, &settings(), &ExecOpts::default()),
            Err(Error::InvalidGrid { .. })
        ));
    }

    #[test]
    fn selector_out_of_range_is_rejected() {
        let set = generate_random(8, 64, 1, false);
        let source = MemorySource::new(set.clone());
        let freq = allele_frequencies(&set);
        let grid = make_grid(8, 64, 1, 2, 1).unwrap();
        let plan = plan2(&grid, 2).unwrap();
        let opts = ExecOpts { phase: Some(2), ..ExecOpts::default() };
        assert!(matches!(
            run_multi2(&source, &freq, &grid, &plan, &settings(), &opts),
            Err(Error::InvalidParameter { name: "phase", .. })
        ));
    }

    #[test]
    fn single_precision_is_consistent_across_engines() {
        use crate::metrics::Precision;
        let set = generate_random(7, 90, 37, false);
        let freq = allele_frequencies(&set);
        let single = RunSettings {
            ccc: CccParams { precision: Precision::Single, ..CccParams::default() },
            threshold: 0.0,
        };
        let reference = run_reference2(&set.decode(), &single).unwrap();
        let kernel = run_kernel2(&set, &freq, &single, 2).unwrap();
        records_equal2(&reference, &kernel);
        // Widened singles are exactly representable as doubles.
        for r in kernel.sorted_records() {
            for v in r.values {
                assert_eq!(v, v as f32 as f64);
            }
        }
    }
}

//! Bit-packed 2-way and 3-way custom correlation coefficients (CCC) over
//! large sets of allele vectors.
//!
//! Each vector element is one of three canonical 2-bit allele values (an
//! optional fourth pattern marks missing data). Elements are packed across
//! two bit planes, 64 per machine word, so a tally of two vectors — the
//! 4-cell table counting how often each value of one co-occurs with each
//! value of the other — reduces to a handful of `popcount` instructions
//! per word pair. The coefficient itself is a damped normalization of that
//! table, and the 3-way variant extends it to 8 cells over vector triples.
//!
//! # Layers
//!
//! * [`element`] and [`packed`] define the 2-bit values and the split-plane
//!   packed layout, with encode/decode round trips.
//! * [`tally`] holds the popcount kernels: single-word tallies and
//!   GEMM-shaped block products over column tiles.
//! * [`metrics`] turns integer tallies into coefficients ([`ccc2`],
//!   [`ccc3`]), including the masked construction that reduces a 3-way run
//!   to three 2-way block products ([`x_construct`], [`reconstruct3`]).
//! * [`grid`] and [`channel`] decompose the all-pairs (all-triples) work
//!   onto a grid of simulated ranks — block-circulant pair plans, slab
//!   triple plans — and give the ranks message channels.
//! * [`engine`] executes runs: a decoded-value reference, a single-rank
//!   packed kernel, and a multi-rank engine that must all agree bit for
//!   bit; [`checksum`] and [`harness`] enforce exactly that.
//! * [`synth`], [`datafile`], and [`output`] cover data in and results
//!   out: seeded generators, the packed dataset file, per-rank record
//!   files with a JSON manifest.
//! * [`driver`] and [`perfmodel`] are the batch entry points: whole-run
//!   orchestration, throughput reports, and the analytic time estimator.
//!
//! The crate-level re-exports below are the stable surface; the `ccc`
//! command-line tool and the runnable examples are thin layers over them.
//!
//! # Example
//!
//! ```
//! use ccc_core::{allele_frequencies, generate_random, run_kernel2, RunSettings};
//!
//! let set = generate_random(6, 100, 42, false);
//! let freq = allele_frequencies(&set);
//! let out = run_kernel2(&set, &freq, &RunSettings::default(), 32).unwrap();
//! assert_eq!(out.records_total(), 15); // all pairs of 6 vectors
//! ```

pub mod channel;
pub mod checksum;
pub mod datafile;
pub mod driver;
pub mod element;
pub mod engine;
pub mod error;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod output;
pub mod packed;
pub mod perfmodel;
pub mod synth;
pub mod tally;

pub use channel::{build_mesh, Msg, RankComm};
pub use checksum::{combine, ChecksumState};
pub use datafile::{
    read_columns, read_dataset, read_header, read_tile, write_dataset, DatasetHeader,
};
pub use driver::{
    execute_gen, execute_permute, execute_run, execute_verify, DataSpec, EngineChoice,
    GenConfig, GenSummary, PermuteConfig, PermuteSummary, RunConfig, RunSummary, SyntheticKind,
    VerifyConfig, DATASET_NAME, PERMUTATION_NAME, PERMUTED_NAME,
};
pub use element::{Element2, SiteValue, CANONICAL_VALUES, NULL_PATTERN};
pub use engine::{
    run_kernel2, run_kernel3, run_multi2, run_multi3, run_reference2, run_reference3,
    source_frequencies, EngineOutput, ExecMode, ExecOpts, FileSource, MemorySource, RankOutput,
    RunSettings, TileSource,
};
pub use error::{Error, ErrorKind, Result};
pub use grid::{
    make_grid, plan2, plan2_cover, plan3, plan3_cover, BlockJob2, BlockJob3, BlockPlan2,
    BlockPlan3, RankGrid,
};
pub use harness::{
    compare_outputs, run_equivalence, verify_equivalence, EquivalenceReport, GridShape,
    HarnessReport,
};
pub use metrics::{
    allele_frequencies, ccc2, ccc3, class_value, reconstruct3, unique_counts, x_construct,
    CccParams, FrequencyTable, NumWay, Precision, Record2, Record3, UniqueCounts,
    VectorCounts, DEFAULT_GAMMA,
};
pub use oracle::{oracle_counts, oracle_tally2, oracle_tally3};
pub use output::{
    checksum_hex, manifest_checksum_consistent, parse_checksum_hex, read_all_records2,
    read_all_records3, read_manifest, write_run, Manifest, ManifestGrid, ManifestRank,
    StoredRecord2, StoredRecord3, MANIFEST_NAME,
};
pub use packed::{ColumnView, MaskedColumnView, MaskedTile, PackedVectorSet};
pub use perfmodel::{estimate_time, rate_report, PerfModelParams, RateReport};
pub use synth::{
    generate_random, generate_verifiable, permute_vectors, Permutation, PlantedPattern,
};
pub use tally::{
    block_tally2, block_tally2_upper, block_tally3_step, pair_tally, pair_tally_packed,
    sparse_pair_tally, word_tally, MetricsBlock, PackedAccumulator, TallyTable2, TallyTable3,
};

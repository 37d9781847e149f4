//! Cross-engine equivalence checking.
//!
//! Engines here are supposed to be bit-for-bit interchangeable: same
//! records, same integer tallies, same coefficient bits, same checksum,
//! under every decomposition. This module turns that promise into a
//! checkable report — it runs the reference enumerator, the kernel
//! engine, and any number of multi-rank grids over one dataset, and
//! compares the full record streams, localizing the first differing
//! record when something disagrees.

use crate::engine::{
    run_kernel2, run_kernel3, run_multi2, run_multi3, run_reference2, run_reference3,
    EngineOutput, ExecMode, ExecOpts, IndexKey, MemorySource, RunSettings,
};
use crate::error::{Error, Result};
use crate::grid::{make_grid, plan2, plan3};
use crate::metrics::{allele_frequencies, NumWay, Record2, Record3};
use crate::packed::PackedVectorSet;
use std::fmt;

/// Where and how two record streams first disagreed.
#[derive(Clone, Debug)]
pub struct Mismatch {
    /// Canonical indices of the offending record (pairs pad with zero).
    pub indices: [u64; 3],
    /// What differed there, in words.
    pub detail: String,
}

/// The outcome of comparing two runs record by record.
#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    pub left_label: String,
    pub right_label: String,
    pub checksum_left: u128,
    pub checksum_right: u128,
    pub records_left: u64,
    pub records_right: u64,
    /// First differing record in canonical order, if any.
    pub first_mismatch: Option<Mismatch>,
    /// Index tuples of differing records, capped at [`MISMATCH_CAP`].
    pub mismatched_keys: Vec<[u64; 3]>,
    /// Total differing records (not capped).
    pub total_mismatches: u64,
}

/// How many mismatching index tuples a report retains.
pub const MISMATCH_CAP: usize = 64;

impl EquivalenceReport {
    pub fn is_match(&self) -> bool {
        self.first_mismatch.is_none() && self.checksum_left == self.checksum_right
    }
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_match() {
            return write!(
                f,
                "{} vs {}: ok ({} records, checksum {:032x})",
                self.left_label, self.right_label, self.records_left, self.checksum_left
            );
        }
        write!(f, "{} vs {}: MISMATCH", self.left_label, self.right_label)?;
        if let Some(m) = &self.first_mismatch {
            write!(f, " first at {:?}: {}", m.indices, m.detail)?;
            write!(f, " ({} records differ)", self.total_mismatches)?;
        }
        if self.checksum_left != self.checksum_right {
            write!(
                f,
                " checksums {:032x} vs {:032x}",
                self.checksum_left, self.checksum_right
            )?;
        }
        Ok(())
    }
}

/// A record as the comparator sees it: indices, integer tally cells, and
/// coefficient cells.
pub trait ComparableRecord: IndexKey + Clone {
    fn tally_cells(&self) -> Vec<u64>;
    fn value_cells(&self) -> &[f64];
}

impl ComparableRecord for Record2 {
    fn tally_cells(&self) -> Vec<u64> {
        self.tally.as_words().to_vec()
    }

    fn value_cells(&self) -> &[f64] {
        &self.values
    }
}

impl ComparableRecord for Record3 {
    fn tally_cells(&self) -> Vec<u64> {
        self.tally.as_words().to_vec()
    }

    fn value_cells(&self) -> &[f64] {
        &self.values
    }
}

/// Compares two runs record by record. Tallies must be equal as integers
/// and values equal as bits — the engines share one float evaluation path,
/// so even rounding is expected to agree exactly.
pub fn compare_outputs<R: ComparableRecord>(
    left_label: &str,
    left: &EngineOutput<R>,
    right_label: &str,
    right: &EngineOutput<R>,
) -> EquivalenceReport {
    let lrecs = left.sorted_records();
    let rrecs = right.sorted_records();
    let mut first_mismatch = None;
    let mut mismatched_keys = Vec::new();
    let mut total_mismatches = 0u64;
    let mut note = |key: [u64; 3], detail: String, first: &mut Option<Mismatch>| {
        if first.is_none() {
            *first = Some(Mismatch { indices: key, detail });
        }
        if mismatched_keys.len() < MISMATCH_CAP {
            mismatched_keys.push(key);
        }
        total_mismatches += 1;
    };

    let (mut li, mut ri) = (0usize, 0usize);
    while li < lrecs.len() || ri < rrecs.len() {
        let lk = lrecs.get(li).map(|r| r.index_key());
        let rk = rrecs.get(ri).map(|r| r.index_key());
        match (lk, rk) {
            (Some(lk), Some(rk)) if lk == rk => {
                let (l, r) = (&lrecs[li], &rrecs[ri]);
                if let Some(detail) = record_diff(l, r) {
                    note(lk, detail, &mut first_mismatch);
                }
                li += 1;
                ri += 1;
            }
            (Some(lk), Some(rk)) if lk < rk => {
                note(lk, format!("record only in {left_label}"), &mut first_mismatch);
                li += 1;
            }
            (Some(_), Some(rk)) => {
                note(rk, format!("record only in {right_label}"), &mut first_mismatch);
                ri += 1;
            }
            (Some(lk), None) => {
                note(lk, format!("record only in {left_label}"), &mut first_mismatch);
                li += 1;
            }
            (None, Some(rk)) => {
                note(rk, format!("record only in {right_label}"), &mut first_mismatch);
                ri += 1;
            }
            (None, None) => unreachable!("loop ends when both sides are exhausted"),
        }
    }

    EquivalenceReport {
        left_label: left_label.to_string(),
        right_label: right_label.to_string(),
        checksum_left: left.checksum,
        checksum_right: right.checksum,
        records_left: lrecs.len() as u64,
        records_right: rrecs.len() as u64,
        first_mismatch,
        mismatched_keys,
        total_mismatches,
    }
}

fn record_diff<R: ComparableRecord>(l: &R, r: &R) -> Option<String> {
    let (lt, rt) = (l.tally_cells(), r.tally_cells());
    for (cell, (a, b)) in lt.iter().zip(&rt).enumerate() {
        if a != b {
            return Some(format!("tally cell {cell}: {a} vs {b}"));
        }
    }
    for (cell, (a, b)) in l.value_cells().iter().zip(r.value_cells()).enumerate() {
        if a.to_bits() != b.to_bits() {
            return Some(format!("value cell {cell}: {a:e} vs {b:e}"));
        }
    }
    None
}

/// One grid to exercise in an equivalence sweep.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct GridShape {
    pub n_pf: usize,
    pub n_pv: usize,
    pub n_pr: usize,
    /// Pair-plan phases (2-way runs).
    pub n_phases: usize,
    /// Triple-plan stages (3-way runs).
    pub n_st: usize,
}

impl GridShape {
    pub fn trivial() -> Self {
        GridShape { n_pf: 1, n_pv: 1, n_pr: 1, n_phases: 1, n_st: 1 }
    }

    pub fn label(&self) -> String {
        format!(
            "ranks({},{},{})x{}p{}s",
            self.n_pf, self.n_pv, self.n_pr, self.n_phases, self.n_st
        )
    }
}

/// One engine run inside a harness sweep.
#[derive(Clone, Debug)]
pub struct HarnessEntry {
    pub label: String,
    pub checksum: u128,
    pub records: u64,
}

/// The outcome of an equivalence sweep: every run's checksum, plus a
/// comparison of each non-reference run against the reference.
#[derive(Clone, Debug)]
pub struct HarnessReport {
    pub entries: Vec<HarnessEntry>,
    pub comparisons: Vec<EquivalenceReport>,
}

impl HarnessReport {
    pub fn passed(&self) -> bool {
        self.comparisons.iter().all(EquivalenceReport::is_match)
    }

    /// The first failing comparison, for error reporting.
    pub fn first_failure(&self) -> Option<&EquivalenceReport> {
        self.comparisons.iter().find(|c| !c.is_match())
    }
}

impl fmt::Display for HarnessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "run {}: {} records, checksum {:032x}", e.label, e.records, e.checksum)?;
        }
        for c in &self.comparisons {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Runs reference, kernel, and one multi-rank engine per grid over the
/// same in-memory dataset, and compares everything against the reference.
pub fn run_equivalence(
    set: &PackedVectorSet,
    num_way: NumWay,
    settings: &RunSettings,
    grids: &[GridShape],
    mode: ExecMode,
) -> Result<HarnessReport> {
    let freq = allele_frequencies(set);
    let source = MemorySource::new(set.clone());
    let rows = set.decode();
    let opts = ExecOpts { mode, ..ExecOpts::default() };
    let mut entries = Vec::new();
    let mut comparisons = Vec::new();
    match num_way {
        NumWay::Two => {
            let reference = run_reference2(&rows, settings)?;
            push_entry(&mut entries, "reference", &reference);
            let kernel = run_kernel2(set, &freq, settings, 32)?;
            push_entry(&mut entries, "kernel", &kernel);
            comparisons.push(compare_outputs("reference", &reference, "kernel", &kernel));
            for shape in grids {
                let grid = make_grid(
                    set.n_v() as u64,
                    set.n_f(),
                    shape.n_pf,
                    shape.n_pv,
                    shape.n_pr,
                )?;
                let plan = plan2(&grid, shape.n_phases)?;
                let multi = run_multi2(&source, &freq, &grid, &plan, settings, &opts)?;
                let label = shape.label();
                push_entry(&mut entries, &label, &multi);
                comparisons.push(compare_outputs("reference", &reference, &label, &multi));
            }
        }
        NumWay::Three => {
            let reference = run_reference3(&rows, settings)?;
            push_entry(&mut entries, "reference", &reference);
            let kernel = run_kernel3(set, &freq, settings)?;
            push_entry(&mut entries, "kernel", &kernel);
            comparisons.push(compare_outputs("reference", &reference, "kernel", &kernel));
            for shape in grids {
                let grid = make_grid(
                    set.n_v() as u64,
                    set.n_f(),
                    shape.n_pf,
                    shape.n_pv,
                    shape.n_pr,
                )?;
                let plan = plan3(&grid, shape.n_st)?;
                let multi = run_multi3(&source, &freq, &grid, &plan, settings, &opts)?;
                let label = shape.label();
                push_entry(&mut entries, &label, &multi);
                comparisons.push(compare_outputs("reference", &reference, &label, &multi));
            }
        }
    }
    Ok(HarnessReport { entries, comparisons })
}

fn push_entry<R>(entries: &mut Vec<HarnessEntry>, label: &str, out: &EngineOutput<R>) {
    entries.push(HarnessEntry {
        label: label.to_string(),
        checksum: out.checksum,
        records: out.records_total(),
    });
}

/// Convenience wrapper: runs the sweep and turns the first failure into a
/// verification error.
pub fn verify_equivalence(
    set: &PackedVectorSet,
    num_way: NumWay,
    settings: &RunSettings,
    grids: &[GridShape],
    mode: ExecMode,
) -> Result<HarnessReport> {
    let report = run_equivalence(set, num_way, settings, grids, mode)?;
    if let Some(failure) = report.first_failure() {
        return Err(Error::VerifyMismatch { detail: failure.to_string() });
    }
    Ok(report)
}

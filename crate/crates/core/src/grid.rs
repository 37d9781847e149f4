//! Rank grids and block plans: how the pair/triple index space is cut
//! into tiles and spread over a three-axis grid of workers.
//!
//! A grid has `n_pf` field parts, `n_pv` vector parts, and `n_pr`
//! replication workers per vector part. Vector tiles are ceiling splits of
//! `0..n_v` (short or empty tails allowed); field ownership is word
//! aligned — each field rank owns a contiguous range of 64-bit plane
//! words — so every tile is self-contained for the popcount kernels and a
//! rank can read its slice of a dataset file directly.
//!
//! Pair blocks are assigned circulant fashion: vector rank `r_v` computes
//! the blocks pairing its tile with tiles at cyclic offsets `0..=max`,
//! where `max` is half the part count; for even `n_pv` the antipodal
//! offset would otherwise appear twice, so only the lower-index half of
//! the ranks computes it. Each rank's offsets are dealt round-robin over
//! its `n_pr` workers, and each worker's blocks round-robin over phases.
//!
//! Triple jobs go to the *middle* tile's rank: the tile triple
//! `u <= w <= x` is the job `(u, x)` on vector rank `w`, again dealt
//! round-robin over the replication workers. Within a job, work is
//! stepped per conditioning vector, and a stage selector picks every
//! `n_st`-th step.

use crate::error::{Error, Result};
use crate::packed::words_for;
use std::ops::Range;

/// A fixed three-axis decomposition of a dataset's index space.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RankGrid {
    n_v: u64,
    n_f: u64,
    n_pf: usize,
    n_pv: usize,
    n_pr: usize,
    n_words: usize,
    /// Model tile sizes: ceiling quotients used by planning and the
    /// performance model.
    n_vp: u64,
    n_fp: u64,
}

/// Builds a grid, validating that every axis can be populated: at most one
/// vector part per vector and one field part per plane word.
pub fn make_grid(n_v: u64, n_f: u64, n_pf: usize, n_pv: usize, n_pr: usize) -> Result<RankGrid> {
    if n_v == 0 || n_f == 0 {
        return Err(Error::InvalidGrid {
            reason: format!("dataset must be nonempty, got n_v={n_v}, n_f={n_f}"),
        });
    }
    if n_pf == 0 || n_pv == 0 || n_pr == 0 {
        return Err(Error::InvalidGrid {
            reason: format!("all axes must be at least 1, got ({n_pf},{n_pv},{n_pr})"),
        });
    }
    if n_pv as u64 > n_v {
        return Err(Error::InvalidGrid {
            reason: format!("{n_pv} vector parts over {n_v} vectors"),
        });
    }
    let n_words = words_for(n_f);
    if n_pf > n_words {
        return Err(Error::InvalidGrid {
            reason: format!(
                "{n_pf} field parts over {n_words} plane words ({n_f} fields); field \
                 ownership is word-aligned"
            ),
        });
    }
    Ok(RankGrid {
        n_v,
        n_f,
        n_pf,
        n_pv,
        n_pr,
        n_words,
        n_vp: n_v.div_ceil(n_pv as u64),
        n_fp: n_f.div_ceil(n_pf as u64),
    })
}

impl RankGrid {
    pub fn n_v(&self) -> u64 {
        self.n_v
    }

    pub fn n_f(&self) -> u64 {
        self.n_f
    }

    pub fn n_pf(&self) -> usize {
        self.n_pf
    }

    pub fn n_pv(&self) -> usize {
        self.n_pv
    }

    pub fn n_pr(&self) -> usize {
        self.n_pr
    }

    /// Model vector-tile size `ceil(n_v / n_pv)`.
    pub fn n_vp(&self) -> u64 {
        self.n_vp
    }

    /// Model field-tile size `ceil(n_f / n_pf)`.
    pub fn n_fp(&self) -> u64 {
        self.n_fp
    }

    pub fn n_ranks(&self) -> usize {
        self.n_pf * self.n_pv * self.n_pr
    }

    /// Dense rank id of coordinates `(r_f, r_v, r_r)`.
    pub fn rank_id(&self, r_f: usize, r_v: usize, r_r: usize) -> usize {
        debug_assert!(r_f < self.n_pf && r_v < self.n_pv && r_r < self.n_pr);
        (r_r * self.n_pv + r_v) * self.n_pf + r_f
    }

    /// Coordinates `(r_f, r_v, r_r)` of a dense rank id.
    pub fn coords(&self, rank: usize) -> (usize, usize, usize) {
        let r_f = rank % self.n_pf;
        let rest = rank / self.n_pf;
        (r_f, rest % self.n_pv, rest / self.n_pv)
    }

    /// Global vector range of tile `t`: a ceiling split, so trailing tiles
    /// may be short or empty.
    pub fn col_tile(&self, t: usize) -> Range<u64> {
        let lo = (t as u64 * self.n_vp).min(self.n_v);
        let hi = ((t as u64 + 1) * self.n_vp).min(self.n_v);
        lo..hi
    }

    /// Plane-word range owned by field rank `r_f`: a balanced split of the
    /// word count (leading ranks take the remainder), never empty.
    pub fn word_tile(&self, r_f: usize) -> Range<usize> {
        let base = self.n_words / self.n_pf;
        let extra = self.n_words % self.n_pf;
        let lo = r_f * base + r_f.min(extra);
        let hi = lo + base + usize::from(r_f < extra);
        lo..hi
    }
}

/// One pair block on a worker: the resident tile against the tile at
/// cyclic offset `delta`, scheduled into `phase`.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct BlockJob2 {
    /// Cyclic tile offset; 0 is the resident tile against itself.
    pub delta: usize,
    /// The partner tile index `(r_v + delta) % n_pv`.
    pub w: usize,
    /// Phase this block is scheduled into.
    pub phase: usize,
}

/// The full pair-block schedule for a grid.
#[derive(Clone, Debug)]
pub struct BlockPlan2 {
    n_pr: usize,
    n_phases: usize,
    /// Indexed by `r_v * n_pr + r_r`.
    jobs: Vec<Vec<BlockJob2>>,
    load: usize,
}

/// Builds the circulant pair-block schedule.
///
/// Every unordered tile pair lands on exactly one worker: offsets run to
/// `ceil((n_pv - 1) / 2)`, and for even `n_pv` the antipodal offset
/// `n_pv / 2` is computed only by ranks below `n_pv / 2`.
pub fn plan2(grid: &RankGrid, n_phases: usize) -> Result<BlockPlan2> {
    if n_phases == 0 {
        return Err(Error::InvalidParameter {
            name: "n-phases",
            reason: "must be at least 1".to_string(),
        });
    }
    let n_pv = grid.n_pv;
    let n_pr = grid.n_pr;
    let mut jobs = vec![Vec::new(); n_pv * n_pr];
    for r_v in 0..n_pv {
        let max_delta = if n_pv % 2 == 1 {
            (n_pv - 1) / 2
        } else if r_v < n_pv / 2 {
            n_pv / 2
        } else {
            n_pv / 2 - 1
        };
        for (idx, delta) in (0..=max_delta).enumerate() {
            let r_r = idx % n_pr;
            let worker = &mut jobs[r_v * n_pr + r_r];
            let phase = worker.len() % n_phases;
            worker.push(BlockJob2 { delta, w: (r_v + delta) % n_pv, phase });
        }
    }
    let load = jobs.iter().map(Vec::len).max().unwrap_or(0);
    Ok(BlockPlan2 { n_pr, n_phases, jobs, load })
}

impl BlockPlan2 {
    pub fn n_phases(&self) -> usize {
        self.n_phases
    }

    /// Maximum blocks on any worker — the per-worker load the performance
    /// model calls the block count.
    pub fn load(&self) -> usize {
        self.load
    }

    /// Jobs of worker `(r_v, r_r)`, restricted to one phase if given.
    pub fn worker_jobs(
        &self,
        r_v: usize,
        r_r: usize,
        phase: Option<usize>,
    ) -> impl Iterator<Item = &BlockJob2> {
        self.jobs[r_v * self.n_pr + r_r]
            .iter()
            .filter(move |job| phase.is_none_or(|p| job.phase == p))
    }

    /// Partner tiles worker `(r_v, r_r)` must fetch (its own excluded), in
    /// job order. Both sides of an exchange derive the same list.
    pub fn tiles_needed(&self, r_v: usize, r_r: usize, phase: Option<usize>) -> Vec<usize> {
        let mut tiles = Vec::new();
        for job in self.worker_jobs(r_v, r_r, phase) {
            if job.w != r_v && !tiles.contains(&job.w) {
                tiles.push(job.w);
            }
        }
        tiles
    }

    /// Every job in the plan as `(r_v, r_r, job)`.
    pub fn all_jobs(&self) -> impl Iterator<Item = (usize, usize, BlockJob2)> + '_ {
        self.jobs.iter().enumerate().flat_map(move |(w, list)| {
            let r_v = w / self.n_pr;
            let r_r = w % self.n_pr;
            list.iter().map(move |&job| (r_v, r_r, job))
        })
    }

    pub fn total_blocks(&self) -> usize {
        self.jobs.iter().map(Vec::len).sum()
    }
}

/// One triple job on a worker: conditioning on the resident (middle) tile,
/// pairing outer tile `u` with outer tile `x`.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct BlockJob3 {
    pub u: usize,
    pub x: usize,
}

/// The full triple-job schedule for a grid.
#[derive(Clone, Debug)]
pub struct BlockPlan3 {
    n_pr: usize,
    n_st: usize,
    jobs: Vec<Vec<BlockJob3>>,
    load: usize,
}

/// Builds the middle-tile triple schedule: rank `r_v` owns every job
/// `(u, x)` with `u <= r_v <= x`, dealt round-robin over its workers.
pub fn plan3(grid: &RankGrid, n_st: usize) -> Result<BlockPlan3> {
    if n_st == 0 {
        return Err(Error::InvalidParameter {
            name: "n-st",
            reason: "must be at least 1".to_string(),
        });
    }
    if n_st as u64 > grid.n_vp {
        return Err(Error::TooManyStages { n_st, max: grid.n_vp as usize });
    }
    let n_pv = grid.n_pv;
    let n_pr = grid.n_pr;
    let mut jobs = vec![Vec::new(); n_pv * n_pr];
    for r_v in 0..n_pv {
        let mut idx = 0usize;
        for u in 0..=r_v {
            for x in r_v..n_pv {
                let r_r = idx % n_pr;
                jobs[r_v * n_pr + r_r].push(BlockJob3 { u, x });
                idx += 1;
            }
        }
    }
    let load = jobs.iter().map(Vec::len).max().unwrap_or(0);
    Ok(BlockPlan3 { n_pr, n_st, jobs, load })
}

impl BlockPlan3 {
    pub fn n_st(&self) -> usize {
        self.n_st
    }

    pub fn load(&self) -> usize {
        self.load
    }

    /// Stage of the `j_idx`-th conditioning step of any job.
    pub fn stage_of(&self, j_idx: usize) -> usize {
        j_idx % self.n_st
    }

    pub fn worker_jobs(&self, r_v: usize, r_r: usize) -> &[BlockJob3] {
        &self.jobs[r_v * self.n_pr + r_r]
    }

    /// Outer tiles worker `(r_v, r_r)` must fetch, in job order.
    pub fn tiles_needed(&self, r_v: usize, r_r: usize) -> Vec<usize> {
        let mut tiles = Vec::new();
        for job in self.worker_jobs(r_v, r_r) {
            for t in [job.u, job.x] {
                if t != r_v && !tiles.contains(&t) {
                    tiles.push(t);
                }
            }
        }
        tiles
    }

    pub fn all_jobs(&self) -> impl Iterator<Item = (usize, usize, BlockJob3)> + '_ {
        self.jobs.iter().enumerate().flat_map(move |(w, list)| {
            let r_v = w / self.n_pr;
            let r_r = w % self.n_pr;
            list.iter().map(move |&job| (r_v, r_r, job))
        })
    }

    pub fn total_jobs(&self) -> usize {
        self.jobs.iter().map(Vec::len).sum()
    }
}

/// Expands a pair plan to the global index pairs it covers, canonicalized
/// to `i < j`. Cover checks compare this against all of `0..n_v choose 2`.
pub fn plan2_cover(grid: &RankGrid, plan: &BlockPlan2) -> Vec<(u64, u64)> {
    let mut pairs = Vec::new();
    for (r_v, _, job) in plan.all_jobs() {
        let rows = grid.col_tile(r_v);
        let cols = grid.col_tile(job.w);
        if job.delta == 0 {
            for i in rows.clone() {
                for j in (i + 1)..rows.end {
                    pairs.push((i, j));
                }
            }
        } else {
            for i in rows.clone() {
                for j in cols.clone() {
                    pairs.push((i.min(j), i.max(j)));
                }
            }
        }
    }
    pairs
}

/// Expands a triple plan to the global index triples it covers,
/// emitted only where `i < j < k` — the same rule the engine applies.
pub fn plan3_cover(grid: &RankGrid, plan: &BlockPlan3) -> Vec<(u64, u64, u64)> {
    let mut triples = Vec::new();
    for (r_v, _, job) in plan.all_jobs() {
        let us = grid.col_tile(job.u);
        let js = grid.col_tile(r_v);
        let xs = grid.col_tile(job.x);
        for j in js {
            for i in us.clone() {
                for k in xs.clone() {
                    if i < j && j < k {
                        triples.push((i, j, k));
                    }
                }
            }
        }
    }
    triples
}

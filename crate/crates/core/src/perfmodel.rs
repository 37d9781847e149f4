//! Per-rank runtime estimation and throughput reporting.
//!
//! The estimator evaluates a component-sum model of one rank's work. The
//! component times are measured (or hypothesized) inputs — checksum time
//! `t_c`, vector-tile transfer `t_tv`, metrics-tile transfer `t_tm`, CPU
//! postprocessing `t_cpu`, and the block-tally kernel times `t_g2`/`t_g3`
//! — and `load` is the worker's block count from its plan. Pair runs pay
//! the kernel once per block; triple runs pay, per job, three masked
//! kernel passes over the job's share of conditioning steps (a sixth of
//! the tile per the unique-triple fraction, split across `n_st` stages)
//! plus that job's transfers and postprocessing.

use crate::error::{Error, Result};
use crate::metrics::NumWay;

/// Measured or assumed per-step component times plus plan-shape inputs.
#[derive(Copy, Clone, PartialEq, Debug)]
pub struct PerfModelParams {
    /// Checksum accumulation time per run.
    pub t_c: f64,
    /// One vector-tile transfer.
    pub t_tv: f64,
    /// One metrics-tile transfer.
    pub t_tm: f64,
    /// CPU-side postprocessing per block.
    pub t_cpu: f64,
    /// One pair block-tally kernel invocation.
    pub t_g2: f64,
    /// One masked triple block-tally kernel invocation.
    pub t_g3: f64,
    /// Blocks (jobs) per worker.
    pub load: f64,
    /// Vector-tile size `ceil(n_v / n_pv)`.
    pub n_vp: f64,
    /// Triple-run stage count.
    pub n_st: f64,
}

impl Default for PerfModelParams {
    fn default() -> Self {
        PerfModelParams {
            t_c: 0.0,
            t_tv: 0.0,
            t_tm: 0.0,
            t_cpu: 0.0,
            t_g2: 0.0,
            t_g3: 0.0,
            load: 0.0,
            n_vp: 0.0,
            n_st: 1.0,
        }
    }
}

impl PerfModelParams {
    fn validate(&self, num_way: NumWay) -> Result<()> {
        let named = [
            ("t-c", self.t_c),
            ("t-tv", self.t_tv),
            ("t-tm", self.t_tm),
            ("t-cpu", self.t_cpu),
            ("t-g2", self.t_g2),
            ("t-g3", self.t_g3),
            ("load", self.load),
            ("n-vp", self.n_vp),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter {
                    name: "estimator",
                    reason: format!("{name} must be a finite nonnegative number, got {v}"),
                });
            }
        }
        if num_way == NumWay::Three && !(self.n_st.is_finite() && self.n_st > 0.0) {
            return Err(Error::InvalidParameter {
                name: "n-st",
                reason: format!("must be a positive number, got {}", self.n_st),
            });
        }
        Ok(())
    }
}

/// Literal evaluation of the per-rank time model.
///
/// Pairs:   `t = t_c + t_tv + load * t_g2 + t_tm + t_cpu`
/// Triples: `t = t_c + t_tv + load * (3 * ((n_vp / 6) / n_st) * t_g3
///                                     + t_tv + t_tm + t_cpu)`
pub fn estimate_time(params: &PerfModelParams, num_way: NumWay) -> Result<f64> {
    params.validate(num_way)?;
    Ok(match num_way {
        NumWay::Two => {
            params.t_c + params.t_tv + params.load * params.t_g2 + params.t_tm + params.t_cpu
        }
        NumWay::Three => {
            let steps = 3.0 * ((params.n_vp / 6.0) / params.n_st);
            params.t_c
                + params.t_tv
                + params.load * (steps * params.t_g3 + params.t_tv + params.t_tm + params.t_cpu)
        }
    })
}

/// Throughput figures for a finished run.
#[derive(Copy, Clone, PartialEq, Debug)]
pub struct RateReport {
    pub comparisons: u64,
    pub elapsed_seconds: f64,
    /// Comparisons per second.
    pub per_second: f64,
    /// Seconds per comparison — the reciprocal view.
    pub per_comparison: f64,
}

/// Rates from an elapsed wall time and the engine's comparison counter
/// (one comparison = one element pair/triple producing its tally cells).
pub fn rate_report(elapsed_seconds: f64, comparisons: u64) -> Result<RateReport> {
    if !(elapsed_seconds.is_finite() && elapsed_seconds > 0.0) {
        return Err(Error::InvalidParameter {
            name: "elapsed",
            reason: format!("must be a positive number of seconds, got {elapsed_seconds}"),
        });
    }
    let per_second = comparisons as f64 / elapsed_seconds;
    let per_comparison = elapsed_seconds / comparisons.max(1) as f64;
    Ok(RateReport { comparisons, elapsed_seconds, per_second, per_comparison })
}

impl std::fmt::Display for RateReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} comparisons in {:.6} s: {:.4e}/s ({:.4e} s each)",
            self.comparisons, self.elapsed_seconds, self.per_second, self.per_comparison
        )
    }
}

//! The analytic time model and throughput reporting.
//!
//! At scale, a run's wall time decomposes into measurable pieces: the
//! coefficient math, vector and matrix transfers, and the block products,
//! with the product term scaled by the schedule's load (pair runs) or by
//! the per-stage step count (triple runs). Given measured per-step times
//! the model evaluates literally; afterwards, a rate report turns elapsed
//! time and the engine's comparison counter into throughput figures.
//!
//! Run with: `cargo run --example performance_model`

use ccc_core::{
    allele_frequencies, estimate_time, generate_random, rate_report, run_kernel2, NumWay,
    PerfModelParams, RunSettings,
};
use std::time::Instant;

fn main() {
    // Pair model: t = t_C + t_TV + load*t_G2 + t_TM + t_CPU.
    let pair = PerfModelParams {
        t_c: 1.0,
        t_tv: 2.0,
        t_g2: 3.0,
        t_tm: 4.0,
        t_cpu: 5.0,
        load: 25.0,
        ..PerfModelParams::default()
    };
    let t = estimate_time(&pair, NumWay::Two).unwrap();
    println!("pair model: 1 + 2 + 25*3 + 4 + 5 = {t} s");
    assert_eq!(t, 87.0);

    // Triple model: the block-product term runs three masked products for
    // each of the (n_vp / 6) / n_st steps of a stage, inside the load.
    let triple = PerfModelParams {
        t_g3: 1.0,
        load: 6.0,
        n_vp: 12.0,
        n_st: 2.0,
        ..PerfModelParams::default()
    };
    let t = estimate_time(&triple, NumWay::Three).unwrap();
    println!("triple model: 6 * (3 * ((12/6)/2) * 1) = {t} s");
    assert_eq!(t, 18.0);

    // Rate reporting from a real (if tiny) run. The engine counts one
    // comparison per element pair examined — tables times positions.
    let set = generate_random(64, 4000, 3, false);
    let freq = allele_frequencies(&set);
    let start = Instant::now();
    let out = run_kernel2(&set, &freq, &RunSettings::default(), 16).unwrap();
    let elapsed = start.elapsed().as_secs_f64().max(1e-9);
    let rate = rate_report(elapsed, out.comparisons).unwrap();
    println!("\nmeasured: {rate}");
    assert_eq!(out.comparisons, (64 * 63 / 2) * 4000);

    // The two figures are mutual reciprocals by construction.
    let product = rate.per_second * rate.per_comparison;
    println!("per_second x per_comparison = {product:.6}");
}

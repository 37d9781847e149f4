//! The multi-rank engine: one dataset, many decompositions, one answer.
//!
//! Ranks form a grid over three axes — field slices, vector tiles, and
//! replicas within a tile. Pair runs schedule tile-offset blocks in a
//! circulant pattern; triple runs give each rank a slab of conditioning
//! columns. Whatever the grid, phase split, or thread interleaving, the
//! result checksum must come out identical, and identical to the
//! single-rank kernel. This example runs one dataset every which way.
//!
//! Run with: `cargo run --example distributed_run`

use ccc_core::{
    allele_frequencies, checksum_hex, combine, generate_random, make_grid, plan2, plan3,
    run_kernel2, run_kernel3, run_multi2, run_multi3, ExecMode, ExecOpts, MemorySource,
    RunSettings,
};

fn main() {
    let set = generate_random(18, 300, 11, false);
    let freq = allele_frequencies(&set);
    let settings = RunSettings::default();
    let source = MemorySource::new(set.clone());

    // The single-rank kernel sets the expected answer.
    let kernel = run_kernel2(&set, &freq, &settings, 5).unwrap();
    println!(
        "kernel: {} pair records, checksum {}",
        kernel.records_total(),
        checksum_hex(kernel.checksum)
    );

    println!("\npair runs across rank grids (n_pf, n_pv, n_pr):");
    for (n_pf, n_pv, n_pr) in [(1, 1, 1), (2, 3, 1), (1, 4, 2), (3, 6, 2), (2, 5, 3)] {
        let grid = make_grid(18, 300, n_pf, n_pv, n_pr).unwrap();
        let plan = plan2(&grid, 1).unwrap();
        let opts = ExecOpts { mode: ExecMode::Threads, ..ExecOpts::default() };
        let out = run_multi2(&source, &freq, &grid, &plan, &settings, &opts).unwrap();
        println!(
            "  ({n_pf}, {n_pv}, {n_pr}) = {:2} ranks -> checksum {}",
            grid.n_ranks(),
            checksum_hex(out.checksum)
        );
        assert_eq!(out.checksum, kernel.checksum);
    }

    // A phase split runs the same plan in disjoint slices whose checksums
    // add (mod 2^128) back to the whole.
    let grid = make_grid(18, 300, 1, 4, 1).unwrap();
    let plan = plan2(&grid, 3).unwrap();
    let mut parts = Vec::new();
    for phase in 0..plan.n_phases() {
        let opts = ExecOpts {
            mode: ExecMode::Threads,
            phase: Some(phase),
            ..ExecOpts::default()
        };
        let out = run_multi2(&source, &freq, &grid, &plan, &settings, &opts).unwrap();
        println!("phase {phase}: {} records", out.records_total());
        parts.push(out.checksum);
    }
    assert_eq!(combine(parts), kernel.checksum);
    println!("three phase checksums sum back to the full-run checksum");

    // Triples decompose the same way, staged over each rank's slab.
    let kernel3 = run_kernel3(&set, &freq, &settings).unwrap();
    println!(
        "\nkernel: {} triple records, checksum {}",
        kernel3.records_total(),
        checksum_hex(kernel3.checksum)
    );
    for (n_pv, n_st) in [(1, 1), (3, 1), (3, 2), (4, 3)] {
        let grid = make_grid(18, 300, 1, n_pv, 1).unwrap();
        let plan = plan3(&grid, n_st).unwrap();
        let opts = ExecOpts { mode: ExecMode::Threads, ..ExecOpts::default() };
        let out = run_multi3(&source, &freq, &grid, &plan, &settings, &opts).unwrap();
        assert_eq!(out.checksum, kernel3.checksum);
        println!("  n_pv = {n_pv}, {n_st} stage(s) -> same checksum");
    }

    // Sequential execution — every rank body run on one thread in a fixed
    // order — is the degenerate mode used for debugging; same answer.
    let grid = make_grid(18, 300, 2, 3, 1).unwrap();
    let plan = plan2(&grid, 1).unwrap();
    let opts = ExecOpts { mode: ExecMode::Sequential, ..ExecOpts::default() };
    let out = run_multi2(&source, &freq, &grid, &plan, &settings, &opts).unwrap();
    assert_eq!(out.checksum, kernel.checksum);
    println!("\nsequential mode reproduces the threaded checksum");
}

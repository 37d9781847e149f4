//! From integer tallies to correlation coefficients.
//!
//! Computes the four-cell coefficient table for every pair of a small
//! random dataset and shows how the damping factor reshapes it: each cell
//! is the tally fraction scaled by (1 - gamma*f) for the allele frequency
//! f on each side, so common alleles are pushed down and rare ones kept.
//!
//! Run with: `cargo run --example pair_metrics`

use ccc_core::{
    allele_frequencies, ccc2, generate_random, oracle_tally2, CccParams, DEFAULT_GAMMA,
};

fn main() {
    let set = generate_random(4, 200, 7, false);
    let rows = set.decode();
    let freq = allele_frequencies(&set);

    println!("allele frequencies (f = share of 1-components per vector):");
    for i in 0..set.n_v() as u64 {
        let c = freq.counts(i);
        println!(
            "  vector {i}: {} ones / {} components, f(1) = {:.3}",
            c.ones,
            2 * c.valid,
            freq.frequency(i, 1).unwrap()
        );
    }

    let params = CccParams::default();
    println!("\npairwise coefficients (gamma = {DEFAULT_GAMMA:.4}):");
    println!("{:>7} {:>9} {:>9} {:>9} {:>9}", "pair", "c(0,0)", "c(0,1)", "c(1,0)", "c(1,1)");
    for i in 0..set.n_v() {
        for j in (i + 1)..set.n_v() {
            let (t, _) = oracle_tally2(&rows[i], &rows[j]);
            let v =
                ccc2(&t, freq.counts(i as u64), freq.counts(j as u64), &params).unwrap();
            println!(
                "({i}, {j}) {:9.5} {:9.5} {:9.5} {:9.5}",
                v[0], v[1], v[2], v[3]
            );
        }
    }

    // With gamma = 0 the damping disappears and each cell is the plain
    // tally fraction, so the four cells of any pair sum to one.
    let plain = CccParams { gamma: 0.0, ..CccParams::default() };
    let (t, _) = oracle_tally2(&rows[0], &rows[1]);
    let v = ccc2(&t, freq.counts(0), freq.counts(1), &plain).unwrap();
    let sum: f64 = v.iter().sum();
    println!("\nwith gamma = 0, pair (0, 1) cells sum to {sum:.12} (tally fractions)");

    // The damped table transposes with its pair: metric (j, i) at (b, a)
    // equals metric (i, j) at (a, b), bit for bit.
    let vt = ccc2(&t.transposed(), freq.counts(1), freq.counts(0), &params).unwrap();
    let v01 = ccc2(&t, freq.counts(0), freq.counts(1), &params).unwrap();
    assert_eq!(v01[1].to_bits(), vt[2].to_bits());
    println!("transposing the pair transposes the table exactly");
}

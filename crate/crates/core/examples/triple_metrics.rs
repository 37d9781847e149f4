//! Three-way tables from three two-way products.
//!
//! The 2x2x2 tally of a vector triple is never computed directly by the
//! fast path. The middle vector conditions the work instead: each of its
//! three element classes masks a copy of the left tile, an ordinary 2x2
//! block product runs between that masked tile and the right tile, and a
//! linear recombination of the three class tables restores all eight
//! cells. This example walks the triple (0, 1, 2) through that
//! construction and checks it against direct enumeration.
//!
//! Run with: `cargo run --example triple_metrics`

use ccc_core::{
    allele_frequencies, block_tally3_step, ccc3, generate_random, oracle_tally3, reconstruct3,
    x_construct, CccParams,
};

fn main() {
    let set = generate_random(3, 150, 99, false);
    let rows = set.decode();
    let (i, j, k) = (0u64, 1u64, 2u64);

    // Tiles flanking the conditioning vector j.
    let left = set.extract_columns(0..j).unwrap();
    let right = set.extract_columns(j + 1..set.n_v() as u64).unwrap();
    let vj = set.column(j as usize);

    // One masked block product per element class of vector j. Class 1 is
    // the all-zero element, class 2 the mixed one, class 3 the all-one.
    let b1 = block_tally3_step(&x_construct(vj, &left, 1).unwrap(), 0, &right, j + 1).unwrap();
    let b2 = block_tally3_step(&x_construct(vj, &left, 2).unwrap(), 0, &right, j + 1).unwrap();
    let b3 = block_tally3_step(&x_construct(vj, &left, 3).unwrap(), 0, &right, j + 1).unwrap();
    println!("three masked block products ran, one per element class of vector {j}");
    for (name, b) in [("class 1", &b1), ("class 2", &b2), ("class 3", &b3)] {
        let t = b.at(0, 0);
        println!(
            "  {name}: (i,k) table [{} {} / {} {}], {} positions of vector {j}",
            t.get(0, 0),
            t.get(0, 1),
            t.get(1, 0),
            t.get(1, 1),
            t.sum() / 4
        );
    }

    // At a class-xi position the middle vector's own components are fixed
    // (two zeros, one of each, two ones), so the three class tables
    // recombine linearly into the eight-cell triple table.
    let t3 = reconstruct3(b1.at(0, 0), b2.at(0, 0), b3.at(0, 0));
    let (expect, _) = oracle_tally3(&rows[i as usize], &rows[j as usize], &rows[k as usize]);
    assert_eq!(t3, expect, "reconstruction must equal literal enumeration");

    println!("\neight-cell table, identical by reconstruction and enumeration:");
    for a in 0..2u8 {
        for b in 0..2u8 {
            for c in 0..2u8 {
                println!("  t[{a}][{b}][{c}] = {:4}", t3.get(a, b, c));
            }
        }
    }
    assert_eq!(t3.sum(), 8 * set.n_f());
    println!("table total {} = 8 x {} elements", t3.sum(), set.n_f());

    // Marginalizing out the middle vector recovers the plain (i, k) tally
    // doubled — each (i, k) component pairing is counted once per middle
    // component.
    let pair_ik = {
        let (t, _) = ccc_core::oracle_tally2(&rows[i as usize], &rows[k as usize]);
        t
    };
    for a in 0..2u8 {
        for c in 0..2u8 {
            assert_eq!(t3.get(a, 0, c) + t3.get(a, 1, c), 2 * pair_ik.get(a, c));
        }
    }
    println!("summing over the middle allele gives 2x the direct (i, k) tally");

    // Coefficients over the eight cells.
    let freq = allele_frequencies(&set);
    let v = ccc3(&t3, freq.counts(i), freq.counts(j), freq.counts(k), &CccParams::default())
        .unwrap();
    println!("\ncoefficients:");
    for a in 0..2usize {
        for b in 0..2usize {
            for c in 0..2usize {
                println!("  ccc[{a}][{b}][{c}] = {:.6}", v[(a << 2) | (b << 1) | c]);
            }
        }
    }
}
